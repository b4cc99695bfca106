//! Static weight `ρ₀(x) = sqrt(ln(e + |x|²))` and the dynamic weight
//! `ρ(t, x) = E[H_α⁻¹(H_α(ρ₀(x + B_t)) + t)]`.

use crate::alpha::{ln_h_alpha, AlphaScaledDrift};
use crate::error::{Error, Result};
use crate::quadrature::normal_rule;
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticWeight {
    pub d: usize,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

impl StaticWeight {
    pub fn new(d: usize) -> Self {
        StaticWeight { d }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        radial_rho0(norm2(x).sqrt())
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r2 = norm2(x);
        let g = (E + r2).ln();
        x.iter().map(|xi| 0.5 / g.sqrt() * 2.0 * xi / (E + r2)).collect()
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        radial_laplacian(norm2(x).sqrt(), self.d)
    }

    /// `sup_x |Δρ₀(x)|` by a radial scan with local refinement.
    pub fn sup_abs_laplacian(&self) -> f64 {
        let f = |r: f64| radial_laplacian(r, self.d).abs();
        let mut best = (0.0, f(0.0));
        let mut r = 1e-4;
        while r < 1e6 {
            let v = f(r);
            if v > best.1 {
                best = (r, v);
            }
            r *= 1.01;
        }
        // golden-section polish around the scan maximum
        let (mut a, mut b) = (best.0 / 1.02, best.0 * 1.02 + 1e-4);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best.1.max(f(0.5 * (a + b)))
    }
}

pub fn radial_rho0(r: f64) -> f64 {
    (E + r * r).ln().sqrt()
}

/// `Δρ₀` at radius `r` in dimension `d`.
pub fn radial_laplacian(r: f64, d: usize) -> f64 {
    let r2 = r * r;
    let s = E + r2;
    let g = s.ln();
    let lap_g = 2.0 * d as f64 / s - 4.0 * r2 / (s * s);
    let grad_g2 = 4.0 * r2 / (s * s);
    0.5 * lap_g / g.sqrt() - 0.25 * grad_g2 / g.powf(1.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    GaussHermite { nodes: usize },
    MonteCarlo { paths: usize, seed: u64 },
}

impl Estimator {
    pub fn default_for(d: usize) -> Self {
        match d {
            1 => Estimator::GaussHermite { nodes: 64 },
            2 => Estimator::GaussHermite { nodes: 32 },
            _ => Estimator::MonteCarlo { paths: 100_000, seed: 0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

const MC_BATCH: usize = 1024;

#[derive(Debug, Clone)]
pub struct DynamicWeight {
    drift: AlphaScaledDrift,
    d: usize,
    horizon: f64,
    estimator: Estimator,
    /// Largest accepted relative standard error for Monte Carlo.
    pub max_rel_std_err: f64,
    rule: (Vec<f64>, Vec<f64>),
}

impl DynamicWeight {
    pub fn new(drift: AlphaScaledDrift, d: usize, horizon: f64, estimator: Estimator) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidParameter("weight horizon must be positive".into()));
        }
        let rule = match estimator {
            Estimator::GaussHermite { nodes } => {
                if nodes == 0 || d > 2 {
                    return Err(Error::InvalidParameter("tensor Gauss-Hermite needs nodes >= 1 and d <= 2".into()));
                }
                normal_rule(nodes)
            }
            Estimator::MonteCarlo { paths, .. } => {
                if paths < 2 {
                    return Err(Error::InvalidParameter("Monte Carlo needs at least 2 paths".into()));
                }
                (vec![], vec![])
            }
        };
        Ok(DynamicWeight { drift, d, horizon, estimator, max_rel_std_err: 0.05, rule })
    }

    pub fn with_estimator(&self, estimator: Estimator) -> Result<Self> {
        DynamicWeight::new(self.drift.clone(), self.d, self.horizon, estimator)
    }

    pub fn alpha(&self) -> f64 {
        self.drift.alpha()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn alpha_drift(&self) -> &AlphaScaledDrift {
        &self.drift
    }

    pub fn rho0(&self, x: &[f64]) -> f64 {
        StaticWeight::new(self.d).value(x)
    }

    /// `Φ(t, r) = H_α⁻¹(H_α(r) + t)` as an f64.
    pub fn phi(&self, t: f64, r: f64) -> Result<f64> {
        let v = self.drift.flow(t, r)?;
        if v.is_finite_f64() {
            Ok(v.to_f64())
        } else {
            Err(Error::Overflow(format!("weight flow at (t, r) = ({t}, {r}) is {v}")))
        }
    }

    pub fn h_alpha(&self, r: f64) -> f64 {
        ln_h_alpha(self.drift.spec(), self.drift.alpha(), r).exp()
    }

    fn check_args(&self, t: f64, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::GridMismatch(format!("point of dimension {} for weight in d = {}", x.len(), self.d)));
        }
        if !(t >= 0.0) || t > self.horizon * (1.0 + 1e-12) + 1e-9 {
            return Err(Error::Domain(format!("weight time {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    /// Expectation of `g(B_t)` where `B_t ~ N(0, t I)`, as estimated by the
    /// configured estimator. `stream` selects the Monte Carlo sub-stream.
    fn expect<G>(&self, t: f64, g: G, stream: u64) -> Result<Estimate>
    where
        G: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let st = t.sqrt();
        match self.estimator {
            Estimator::GaussHermite { .. } => {
                let (z, w) = &self.rule;
                let mut acc = 0.0;
                match self.d {
                    1 => {
                        for (zi, wi) in z.iter().zip(w) {
                            acc += wi * g(&[st * zi])?;
                        }
                    }
                    _ => {
                        for (zi, wi) in z.iter().zip(w) {
                            for (zj, wj) in z.iter().zip(w) {
                                acc += wi * wj * g(&[st * zi, st * zj])?;
                            }
                        }
                    }
                }
                Ok(Estimate { value: acc, std_err: 0.0 })
            }
            Estimator::MonteCarlo { paths, seed } => {
                let pairs = paths.div_ceil(2);
                let batches = pairs.div_ceil(MC_BATCH);
                let sums: Vec<Result<(f64, f64, usize)>> = (0..batches)
                    .into_par_iter()
                    .map(|b| {
                        let mut rng = rng::stream(seed, &[rng::tag::WEIGHT_MC, stream, b as u64]);
                        let count = MC_BATCH.min(pairs - b * MC_BATCH);
                        let (mut s, mut s2) = (0.0, 0.0);
                        let mut p = vec![0.0; self.d];
                        let mut m = vec![0.0; self.d];
                        for _ in 0..count {
                            for k in 0..self.d {
                                let n: f64 = StandardNormal.sample(&mut rng);
                                p[k] = st * n;
                                m[k] = -st * n;
                            }
                            let v = 0.5 * (g(&p)? + g(&m)?);
                            s += v;
                            s2 += v * v;
                        }
                        Ok((s, s2, count))
                    })
                    .collect();
                let (mut s, mut s2, mut n) = (0.0, 0.0, 0usize);
                for r in sums {
                    let (a, b, c) = r?;
                    s += a;
                    s2 += b;
                    n += c;
                }
                let nf = n as f64;
                let mean = s / nf;
                let var = ((s2 / nf - mean * mean).max(0.0)) * nf / (nf - 1.0).max(1.0);
                Ok(Estimate { value: mean, std_err: (var / nf).sqrt() })
            }
        }
    }

    fn rho_stream(&self, t: f64, x: &[f64], stream: u64) -> Result<Estimate> {
        self.check_args(t, x)?;
        if t == 0.0 {
            return Ok(Estimate { value: self.rho0(x), std_err: 0.0 });
        }
        let sw = StaticWeight::new(self.d);
        let est = self.expect(
            t,
            |b| {
                let y: Vec<f64> = x.iter().zip(b).map(|(a, b)| a + b).collect();
                self.phi(t, sw.value(&y))
            },
            stream,
        )?;
        if est.std_err > self.max_rel_std_err * est.value.abs() {
            return Err(Error::EstimatorVariance { std_err: est.std_err, tolerance: self.max_rel_std_err * est.value.abs() });
        }
        Ok(est)
    }

    pub fn rho(&self, t: f64, x: &[f64]) -> Result<Estimate> {
        self.rho_stream(t, x, 0)
    }

    /// `E[h_α(Φ)] - h_α(ρ)`, nonnegative by Jensen for convex `h_α`.
    pub fn jensen_gap(&self, t: f64, x: &[f64]) -> Result<f64> {
        let rho = self.rho(t, x)?.value;
        let sw = StaticWeight::new(self.d);
        let e = self.expect(
            t,
            |b| {
                let y: Vec<f64> = x.iter().zip(b).map(|(a, b)| a + b).collect();
                Ok(self.h_alpha(self.phi(t, sw.value(&y))?))
            },
            0,
        )?;
        Ok(e.value - self.h_alpha(rho))
    }

    /// Weight at radius `r` along the first axis.
    pub fn rho_radial(&self, t: f64, r: f64) -> Result<f64> {
        let mut x = vec![0.0; self.d];
        x[0] = r;
        Ok(self.rho(t, &x)?.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub ht: f64,
    pub hx: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps { ht: 1e-3, hx: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionCheck {
    pub t: f64,
    pub x: Vec<f64>,
    pub rho: f64,
    pub drho_dt: f64,
    pub lap_rho: f64,
    pub h_alpha: f64,
    pub residual: f64,
    pub budget: f64,
    pub trunc_t: f64,
    pub trunc_x: f64,
    pub estimator_err: f64,
    pub status: CheckStatus,
}

struct Derivs {
    rho: f64,
    dt: f64,
    lap: f64,
    trunc_t: f64,
    trunc_x: f64,
}

fn fd_derivs<F: Fn(f64, &[f64]) -> Result<f64>>(rho: &F, t: f64, x: &[f64], steps: FdSteps) -> Result<Derivs> {
    let r0 = rho(t, x)?;
    let dt_at = |h: f64| -> Result<f64> {
        if t >= 2.0 * h {
            Ok((rho(t + h, x)? - rho(t - h, x)?) / (2.0 * h))
        } else {
            // second-order one-sided stencil near t = 0
            Ok((-3.0 * r0 + 4.0 * rho(t + h, x)? - rho(t + 2.0 * h, x)?) / (2.0 * h))
        }
    };
    let lap_at = |h: f64| -> Result<f64> {
        let mut acc = 0.0;
        for k in 0..x.len() {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[k] += h;
            m[k] -= h;
            acc += (rho(t, &p)? - 2.0 * r0 + rho(t, &m)?) / (h * h);
        }
        Ok(acc)
    };
    let (d1, d2) = (dt_at(steps.ht)?, dt_at(0.5 * steps.ht)?);
    let (l1, l2) = (lap_at(steps.hx)?, lap_at(0.5 * steps.hx)?);
    Ok(Derivs {
        rho: r0,
        dt: (4.0 * d2 - d1) / 3.0,
        lap: (4.0 * l2 - l1) / 3.0,
        trunc_t: (d2 - d1).abs() / 3.0,
        trunc_x: (l2 - l1).abs() / 3.0,
    })
}

/// `∂ρ/∂t - ½Δρ - h_α(ρ)` with a combined error budget.
pub fn supersolution_residual(w: &DynamicWeight, t: f64, x: &[f64], steps: FdSteps) -> Result<SupersolutionCheck> {
    if !(t >= 0.0) || t + 2.0 * steps.ht > w.horizon() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("stencil around t = {t} leaves [0, {}]", w.horizon())));
    }
    let residual_of = |d: &Derivs| d.dt - 0.5 * d.lap - w.h_alpha(d.rho);
    let (main, est_err) = match w.estimator() {
        Estimator::GaussHermite { nodes } => {
            let f = |s: f64, p: &[f64]| Ok(w.rho(s, p)?.value);
            let main = fd_derivs(&f, t, x, steps)?;
            let low = w.with_estimator(Estimator::GaussHermite { nodes: (3 * nodes / 4).max(1) })?;
            let g = |s: f64, p: &[f64]| Ok(low.rho(s, p)?.value);
            let alt = fd_derivs(&g, t, x, steps)?;
            let e = (residual_of(&main) - residual_of(&alt)).abs();
            (main, e)
        }
        Estimator::MonteCarlo { .. } => {
            // common random numbers inside each sub-stream, spread across streams
            let reps = 8usize;
            let mut all = Vec::with_capacity(reps);
            for s in 0..reps as u64 {
                let f = |tt: f64, p: &[f64]| Ok(w.rho_stream(tt, p, s + 1)?.value);
                all.push(fd_derivs(&f, t, x, steps)?);
            }
            let n = reps as f64;
            let res: Vec<f64> = all.iter().map(&residual_of).collect();
            let mean = res.iter().sum::<f64>() / n;
            let var = res.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
            let avg = |g: fn(&Derivs) -> f64| all.iter().map(g).sum::<f64>() / n;
            let d = Derivs {
                rho: avg(|d| d.rho),
                dt: avg(|d| d.dt),
                lap: avg(|d| d.lap),
                trunc_t: avg(|d| d.trunc_t),
                trunc_x: avg(|d| d.trunc_x),
            };
            (d, 3.0 * (var / n).sqrt())
        }
    };
    let h_a = w.h_alpha(main.rho);
    let residual = main.dt - 0.5 * main.lap - h_a;
    let budget = main.trunc_t + 0.5 * main.trunc_x + est_err;
    let noise_dominated = est_err > main.trunc_t + 0.5 * main.trunc_x && est_err > 1e-2 * main.dt.abs();
    let status = if noise_dominated {
        CheckStatus::Inconclusive
    } else if residual >= -budget {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(SupersolutionCheck {
        t,
        x: x.to_vec(),
        rho: main.rho,
        drho_dt: main.dt,
        lap_rho: main.lap,
        h_alpha: h_a,
        residual,
        budget,
        trunc_t: main.trunc_t,
        trunc_x: main.trunc_x,
        estimator_err: est_err,
        status,
    })
}

/// `ρ(t, x)/ρ₀(x)` along the first axis.
pub fn dominance_ratio(w: &DynamicWeight, t: f64, radii: &[f64]) -> Result<Vec<f64>> {
    radii
        .iter()
        .map(|&r| Ok(w.rho_radial(t, r)? / radial_rho0(r)))
        .collect()
}

/// Grid samples of `ρ` at a set of times, computed once per distinct radius.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// `rho[k][j]` at `times[k]`, `points[j]`.
    pub rho: Vec<Vec<f64>>,
}

impl WeightField {
    pub fn tabulate(w: &DynamicWeight, times: &[f64], points: &[Vec<f64>]) -> Result<Self> {
        let radii: Vec<f64> = points.iter().map(|p| norm2(p).sqrt()).collect();
        let mut uniq: Vec<u64> = radii.iter().map(|r| r.to_bits()).collect();
        uniq.sort_unstable();
        uniq.dedup();
        let mut rho = Vec::with_capacity(times.len());
        for &t in times {
            let vals: Vec<Result<f64>> = uniq.par_iter().map(|b| w.rho_radial(t, f64::from_bits(*b))).collect();
            let mut map = HashMap::with_capacity(uniq.len());
            for (b, v) in uniq.iter().zip(vals) {
                map.insert(*b, v?);
            }
            rho.push(radii.iter().map(|r| map[&r.to_bits()]).collect());
        }
        Ok(WeightField { times: times.to_vec(), points: points.to_vec(), rho })
    }

    /// Index of the stored time equal to `t` (within 1e-9).
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }
}

/// Max of `ρ(t, x) e^{-|x| - t}` over the sample grid.
pub fn envelope_constant(w: &DynamicWeight, times: &[f64], radii: &[f64]) -> Result<f64> {
    let mut c: f64 = 0.0;
    for &t in times {
        for &r in radii {
            c = c.max(w.rho_radial(t, r)? * (-(r + t)).exp());
        }
    }
    Ok(c)
}

/// Time-indexed samples of a field on a point set with a boundary mask.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub boundary: Vec<bool>,
    pub values: Vec<Vec<f64>>,
}

impl SampledField {
    /// Samples of `f(t, x)` on a line grid; the two end points are boundary.
    pub fn on_line<F: Fn(f64, f64) -> f64>(times: &[f64], xs: &[f64], f: F) -> Self {
        let n = xs.len();
        SampledField {
            times: times.to_vec(),
            points: xs.iter().map(|x| vec![*x]).collect(),
            boundary: (0..n).map(|i| i == 0 || i + 1 == n).collect(),
            values: times.iter().map(|&t| xs.iter().map(|&x| f(t, x)).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupDerivCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub argmax: Vec<f64>,
    pub status: CheckStatus,
}

/// Backward difference of `sup_x v` at time index `k` against the backward
/// time difference at the maximizer.
pub fn sup_left_derivative_check(field: &SampledField, k: usize, tol: f64) -> Result<SupDerivCheck> {
    if k == 0 || k >= field.times.len() {
        return Err(Error::InvalidParameter(format!("time index {k} needs left history")));
    }
    let argmax = |vals: &[f64]| {
        vals.iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |a, (i, v)| if *v > a.1 { (i, *v) } else { a })
    };
    let (j, sup_now) = argmax(&field.values[k]);
    let (_, sup_prev) = argmax(&field.values[k - 1]);
    let dt = field.times[k] - field.times[k - 1];
    let lhs = (sup_now - sup_prev) / dt;
    let rhs = (field.values[k][j] - field.values[k - 1][j]) / dt;
    let status = if field.boundary[j] || sup_now <= 0.0 {
        CheckStatus::Inconclusive
    } else if lhs <= rhs + tol {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(SupDerivCheck { lhs, rhs, argmax: field.points[j].clone(), status })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho0_values() {
        let w = StaticWeight::new(1);
        assert_eq!(w.value(&[0.0]), 1.0);
        let r = (E * E - E).sqrt();
        assert!((w.value(&[r]) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn laplacian_matches_finite_difference() {
        for d in [1usize, 2] {
            let w = StaticWeight::new(d);
            for r in [0.0, 0.7, 3.0] {
                let mut x = vec![0.0; d];
                x[0] = r;
                let h = 1e-4;
                let mut fd = 0.0;
                for k in 0..d {
                    let mut p = x.clone();
                    let mut m = x.clone();
                    p[k] += h;
                    m[k] -= h;
                    fd += (w.value(&p) - 2.0 * w.value(&x) + w.value(&m)) / (h * h);
                }
                assert!((fd - w.laplacian(&x)).abs() < 1e-6, "d={d} r={r}");
            }
        }
        assert!((StaticWeight::new(1).laplacian(&[0.0]) - 1.0 / E).abs() < 1e-15);
    }

    #[test]
    fn sup_laplacian_is_at_origin() {
        let s = StaticWeight::new(1).sup_abs_laplacian();
        assert!((s - 1.0 / E).abs() < 1e-12);
    }

    #[test]
    fn sup_derivative_fixed_maximizer() {
        let xs: Vec<f64> = (0..201).map(|i| -5.0 + 0.05 * i as f64).collect();
        let f = SampledField::on_line(&[0.999, 1.0], &xs, |t, x| (-x * x).exp() * (1.0 + t));
        let c = sup_left_derivative_check(&f, 1, 1e-6).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-9 && (c.rhs - 1.0).abs() < 1e-9);
        assert_eq!(c.status, CheckStatus::Pass);
    }
}
