use osgood_lab::drift::DriftSpec;
use osgood_lab::grid::{GridSpec, Spectral};
use osgood_lab::noise::{NoiseModel, NoisePath, SpectralMeasure};
use osgood_lab::quadrature::integrate;
use osgood_lab::solver::{evolve, InitialData, SolverConfig};
use osgood_lab::uniqueness::*;
use osgood_lab::Error;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

#[test]
fn parameter_chain() {
    let p = UniquenessParams::defaults(0.5, 1.0).unwrap();
    assert!((p.nu - 1.2).abs() < 1e-12 && (p.nu1 - 1.8).abs() < 1e-12 && (p.nu2 - 1.9).abs() < 1e-12);
    assert!(UniquenessParams::new(0.5, 1.4, 1.9, 1.0, 1.0).is_err());
    assert!(UniquenessParams::new(0.5, 0.5, 0.7, 1.0, 1.0).is_err());
    assert!(UniquenessParams::new(0.5, 0.5, 2.0, 1.0, 1.0).is_err());
    assert!(UniquenessParams::new(0.5, 0.5, 1.2, 0.0, 1.0).is_err());
    assert!(UniquenessParams::new(0.0, 0.5, 1.2, 1.0, 1.0).is_err());
}

#[test]
fn weighted_norm_values() {
    let g = GridSpec::new(1, 256, 8.0).unwrap();
    let p = UniquenessParams::defaults(0.5, 1.0).unwrap().with_k(2.0).unwrap();
    let one = vec![1.0; 256];
    let zero = vec![0.0; 256];
    assert_eq!(weighted_norm(&g, &one, &one, &p).unwrap(), 0.0);
    // independent quadrature of exp(-2(K+x²)^{ν₂/2}) over the box
    let f = |x: f64| (-2.0 * (p.k + x * x).powf(0.5 * p.nu2)).exp();
    let quad: f64 = (0..16).map(|i| integrate(&f, -8.0 + i as f64, -7.0 + i as f64, 1e-14).unwrap().value).sum();
    let n = weighted_norm(&g, &one, &zero, &p).unwrap();
    assert!((n - quad.sqrt()).abs() < 1e-12);
    assert!((n - 0.166073457824324).abs() < 1e-12);
    let two = vec![2.0; 256];
    assert!((weighted_norm(&g, &two, &zero, &p).unwrap() - 2.0 * n).abs() < 1e-15);
    assert!(weighted_norm(&g, &one[..10], &zero, &p).is_err());
}

proptest! {
    #[test]
    fn weighted_norm_triangle(a in prop::collection::vec(-5.0f64..5.0, 64), b in prop::collection::vec(-5.0f64..5.0, 64), c in prop::collection::vec(-5.0f64..5.0, 64), s in -3.0f64..3.0) {
        let g = GridSpec::new(1, 64, 4.0).unwrap();
        let p = UniquenessParams::defaults(0.5, 1.0).unwrap();
        let ab = weighted_norm(&g, &a, &b, &p).unwrap();
        let bc = weighted_norm(&g, &b, &c, &p).unwrap();
        let ac = weighted_norm(&g, &a, &c, &p).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        let sa: Vec<f64> = a.iter().map(|x| s * x).collect();
        let sb: Vec<f64> = b.iter().map(|x| s * x).collect();
        prop_assert!((weighted_norm(&g, &sa, &sb, &p).unwrap() - s.abs() * ab).abs() <= 1e-12 * (1.0 + ab));
        prop_assert_eq!(weighted_norm(&g, &a, &a, &p).unwrap(), 0.0);
    }
}

#[test]
fn k_ladder() {
    let g = GridSpec::new(1, 256, 8.0).unwrap();
    let p = UniquenessParams::new(0.5, 0.5, 1.2, 1.0, 1.0).unwrap();
    let sel = select_k(&p, 1.0, 10.0, &g).unwrap();
    assert_eq!(sel.k, 8192.0);
    for i in 0..g.len() {
        assert!(k_bracket(&p, 10.0, 1, sel.k, g.radius(i)) <= 0.0);
    }
    if sel.exponent > 0 {
        let below = sel.k / 2.0;
        assert!((0..g.len()).any(|i| k_bracket(&p, 10.0, 1, below, g.radius(i)) > 0.0));
    }
    let mut last = 0.0;
    for c in [0.0, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0] {
        let k = select_k(&p, 1.0, c, &g).unwrap().k;
        assert!(k >= last);
        last = k;
    }
    // short horizon and no Lipschitz constant
    let short = UniquenessParams::new(0.5, 0.5, 1.2, 1.0, 1e-6).unwrap();
    let k0 = select_k(&short, 0.0, 0.0, &g).unwrap().k;
    assert!(1.44 * k0.powf(0.2) <= 0.5 * k0.powf(0.6) + 1e-9 && k0 <= 64.0);
    assert!(matches!(select_k(&p, 1.0, 1e40, &g), Err(Error::NoAdmissibleK { .. })));
    assert!(select_k(&p, f64::NAN, 1.0, &g).is_err());
}

#[test]
fn lip_checks() {
    let r: Vec<f64> = (1..=12).map(|k| 10f64.powi(k)).collect();
    assert!(lip_growth_check(&DriftSpec::iterated_log(2).unwrap(), 0.5, &r).pass);
    let lin = lip_growth_check(&DriftSpec::linear(2.0).unwrap(), 0.5, &r);
    assert!(lin.pass && lin.rows.last().unwrap().1 < 0.1 * lin.rows[0].1);
    assert!(!lip_growth_check(&DriftSpec::power(1.0).unwrap(), 0.5, &r).pass);
}

#[test]
fn test_function_laplacian() {
    let g = GridSpec::new(2, 64, 8.0).unwrap();
    let phi = TestFunction::new(vec![0.5, -1.0], 3.0, &g).unwrap();
    let h = 1e-4;
    for x in [[0.5, -1.0], [1.7, 0.2], [-1.5, -2.0]] {
        let mut fd = 0.0;
        for a in 0..2 {
            let mut p = x;
            let mut m = x;
            p[a] += h;
            m[a] -= h;
            fd += (phi.value(&p) - 2.0 * phi.value(&x) + phi.value(&m)) / (h * h);
        }
        assert!((fd - phi.laplacian(&x)).abs() < 1e-5, "{x:?}");
    }
    assert_eq!(phi.value(&[5.0, 5.0]), 0.0);
    assert!(TestFunction::new(vec![6.0, 0.0], 3.0, &g).is_err());

    // analytic Laplacian against the spectral one on a fine 1-d grid
    let g1 = GridSpec::new(1, 1024, 8.0).unwrap();
    let phi = TestFunction::new(vec![0.0], 2.0, &g1).unwrap();
    let sp = Spectral::new(g1);
    let mut m = sp.forward(&phi.sample(&g1));
    sp.multiply(&mut m, |x2| -x2);
    let spec = sp.inverse_real(&m).0;
    let err = spec.iter().zip(phi.sample_laplacian(&g1)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn weak_residual_exact_for_heat_flow() {
    let g = GridSpec::new(1, 128, 4.0 * PI).unwrap();
    let phi = TestFunction::new(vec![1.0], 3.0, &g).unwrap();
    let cfg = SolverConfig::new(g, 0.05, 1.0, DriftSpec::linear(0.0).unwrap(), InitialData::Cosine { k: 1.0, amplitude: 1.0 }).with_probe(phi.sample(&g));
    let tr = evolve(&cfg, None, None).unwrap();
    for t in [0.25, 0.5, 1.0] {
        let w = weak_residual(&tr, 0, t).unwrap();
        assert!(w.residual.abs() <= 1e-10 * w.scale, "{w:?}");
    }
    assert!(weak_residual(&tr, 1, 1.0).is_err());
    assert!(weak_residual(&tr, 0, 0.123).is_err());
}

#[test]
fn weak_residual_first_order_with_drift() {
    let g = GridSpec::new(1, 128, 8.0).unwrap();
    let phi = TestFunction::new(vec![0.5], 2.0, &g).unwrap();
    let res: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let cfg = SolverConfig::new(g, dt, 1.0, DriftSpec::iterated_log(2).unwrap(), InitialData::Rho0 { scale: 1.0 }).with_probe(phi.sample(&g));
            weak_residual(&evolve(&cfg, None, None).unwrap(), 0, 1.0).unwrap().residual.abs()
        })
        .collect();
    for w in res.windows(2) {
        assert!((w[1] / w[0] - 0.5).abs() <= 0.15, "{res:?}");
    }
}

#[test]
fn weak_residual_with_noise() {
    let g = GridSpec::new(1, 128, 8.0).unwrap();
    let phi = TestFunction::new(vec![0.5], 2.0, &g).unwrap();
    let model = Arc::new(NoiseModel::new(g, SpectralMeasure::White, 1.0).unwrap());
    let dt = 0.01;
    let tol = 4.0 * noise_residual_std(&model, &phi.sample(&g), dt, 100).unwrap();
    for seed in 0..5 {
        let path = NoisePath::generate(model.clone(), seed, 0, dt, 100).unwrap();
        let cfg = SolverConfig::new(g, dt, 1.0, DriftSpec::linear(0.0).unwrap(), InitialData::Zero).with_probe(phi.sample(&g));
        let w = weak_residual(&evolve(&cfg, Some(&path), None).unwrap(), 0, 1.0).unwrap();
        assert!(w.residual.abs() <= tol, "seed {seed}: {} > {tol}", w.residual);
        assert!(w.pairing.noise != 0.0);
    }
}

#[test]
fn decay_table() {
    let g = GridSpec::new(1, 128, 8.0).unwrap();
    let model = Arc::new(NoiseModel::new(g, SpectralMeasure::White, 1.0).unwrap());
    let path = NoisePath::generate(model, 3, 0, 0.01 / 8.0, 800).unwrap();
    let cfg = SolverConfig::new(g, 0.01, 1.0, DriftSpec::iterated_log(2).unwrap(), InitialData::Rho0 { scale: 1.0 });
    let p = UniquenessParams::defaults(0.5, 1.0).unwrap();
    let same = evolve(&cfg, Some(&path), None).unwrap();
    assert_eq!(weighted_diff_norm(&same, &same, &p, 0.5).unwrap(), 0.0);
    let rows = uniqueness_experiment(&cfg, Some(&path), 100.0, 3, &p).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows[..3].iter().all(|r| r.norm <= 1e-10));
    let ends: Vec<f64> = rows.iter().filter(|r| r.t == 1.0).skip(1).map(|r| r.norm).collect();
    for w in ends.windows(2) {
        assert!((w[1] / w[0] - 0.5).abs() <= 0.15, "{ends:?}");
    }
    let other = GridSpec::new(1, 64, 8.0).unwrap();
    let tr2 = evolve(&SolverConfig::new(other, 0.01, 1.0, DriftSpec::ulog(), InitialData::Zero), None, None).unwrap();
    assert!(weighted_diff_norm(&same, &tr2, &p, 0.5).is_err());
}
