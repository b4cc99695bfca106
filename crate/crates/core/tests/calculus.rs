use osgood_lab::alpha::{geometric_grid, AlphaScaledDrift, ConvexitySplit};
use osgood_lab::drift::DriftSpec;
use osgood_lab::family::theta;
use osgood_lab::ode::flow_ode_oracle;
use osgood_lab::quadrature::integrate;
use osgood_lab::tower::{rel_agreement, Tower};
use osgood_lab::transform::{OsgoodTransform, TransformConfig};
use proptest::prelude::*;
use std::sync::Arc;

fn table(spec: &DriftSpec) -> OsgoodTransform {
    OsgoodTransform::build(spec, TransformConfig::with_u_cap(1e12)).unwrap()
}

#[test]
fn flow_against_closed_form_and_ode() {
    for n in [2u32, 3] {
        let spec = DriftSpec::iterated_log(n).unwrap();
        let tf = table(&spec);
        let mut worst: f64 = 0.0;
        for i in 0..=8 {
            let t = 0.25 * i as f64;
            for x in [0.0, 0.3, 1.0, 5.0, 12.5, 50.0] {
                let a = tf.flow(t, x).unwrap().value;
                let b = theta(n, t, &Tower::real(x));
                let c = flow_ode_oracle(&spec, t, x).unwrap().value;
                worst = worst.max(rel_agreement(&a, &b)).max(rel_agreement(&a, &c));
            }
        }
        assert!(worst <= 1e-6, "n={n}: {worst:e}");
    }
}

/// `∫_0^x dy / h_α(y)` in the variable `v = ln y`, with the head `y0^α/(α h(0))`.
fn h_alpha_quadrature(ad: &AlphaScaledDrift, x: f64) -> f64 {
    let y0 = 1e-14 * x;
    let head = y0.powf(ad.alpha()) / (ad.alpha() * ad.spec().h(0.0));
    let g = |v: f64| {
        let y = v.exp();
        y / ad.h_alpha(y).unwrap()
    };
    let (a, b) = (y0.ln(), x.ln());
    let panels = 64;
    head + (0..panels)
        .map(|i| {
            let lo = a + (b - a) * i as f64 / panels as f64;
            let hi = a + (b - a) * (i + 1) as f64 / panels as f64;
            integrate(&g, lo, hi, 1e-15).unwrap().value
        })
        .sum::<f64>()
}

#[test]
fn h_alpha_identity() {
    for spec in [DriftSpec::iterated_log(2).unwrap(), DriftSpec::iterated_log(3).unwrap(), DriftSpec::ulog(), DriftSpec::linear(1.0).unwrap()] {
        let tf = Arc::new(table(&spec));
        for alpha in [1.2, 1.5, 2.0] {
            let ad = AlphaScaledDrift::new(alpha, tf.clone()).unwrap();
            for x in geometric_grid(1e-3, 1e4, 29) {
                let q = h_alpha_quadrature(&ad, x);
                let h = ad.big_h_alpha(&Tower::real(x)).unwrap();
                assert!((h - q).abs() <= 1e-8 * q, "{} alpha={alpha} x={x}: {h} vs {q}", spec.name());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_round_trip(x in 0.0f64..1e6) {
        let tf = table(&DriftSpec::iterated_log(2).unwrap());
        let y = tf.eval(x).unwrap();
        let back = tf.invert(y).unwrap().to_f64();
        prop_assert!((back - x).abs() <= 1e-8 * (1.0 + x));
    }

    #[test]
    fn flow_semigroup(x in 0.0f64..100.0, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let tf = table(&DriftSpec::iterated_log(3).unwrap());
        let once = tf.flow(s + t, x).unwrap().value;
        let mid = tf.flow(s, x).unwrap().value;
        let twice = tf.flow_tower(t, &mid).unwrap().value;
        prop_assert!(rel_agreement(&once, &twice) <= 1e-8);
    }

    #[test]
    fn convexity_split_nonnegative(lr in -12.0f64..12.0, lq in -12.0f64..12.0, alpha in 1.05f64..3.0) {
        for spec in [DriftSpec::iterated_log(2).unwrap(), DriftSpec::ulog()] {
            let split = ConvexitySplit::new(&spec, alpha).unwrap();
            let r = split.residual(lr.exp(), lq.exp()).unwrap();
            prop_assert!(r.normalized >= -1e-12);
        }
    }
}
