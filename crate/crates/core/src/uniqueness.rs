//! Weighted differences, the `K` bracket, the weak-form residual and the
//! Lipschitz growth check used for uniqueness.

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::noise::{NoiseModel, NoisePath};
use crate::solver::{evolve, Pairing, SolutionTrace, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipTrend {
    pub epsilon: f64,
    /// `(R, L(R)/(ln R)^{1+ε})`
    pub rows: Vec<(f64, f64)>,
    pub pass: bool,
}

/// Ratios `L(R)/(ln R)^{1+ε}`; passes when they are nonincreasing over the
/// last decade of `r_grid` and end below the first ratio.
pub fn lip_growth_check(spec: &DriftSpec, epsilon: f64, r_grid: &[f64]) -> LipTrend {
    let rows: Vec<(f64, f64)> = r_grid
        .iter()
        .filter(|r| **r > 1.0)
        .map(|&r| (r, spec.lipschitz(r) / r.ln().powf(1.0 + epsilon)))
        .collect();
    let pass = match (rows.first(), rows.last()) {
        (Some(first), Some(last)) => {
            let start = last.0 / 10.0;
            let tail: Vec<&(f64, f64)> = rows.iter().filter(|r| r.0 >= start).collect();
            let decreasing = tail.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
            decreasing && (last.1 < first.1 || last.1 == 0.0) && last.1.is_finite()
        }
        _ => false,
    };
    LipTrend { epsilon, rows, pass }
}

/// `ν < ν₁ = ν(1+ε) < ν₂ < 2` with weight `exp(-(K+|x|²)^{ν₂/2})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessParams {
    pub epsilon: f64,
    pub nu: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub k: f64,
    pub horizon: f64,
}

impl UniquenessParams {
    pub fn new(epsilon: f64, nu: f64, nu2: f64, k: f64, horizon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        let nu1 = nu * (1.0 + epsilon);
        if !(nu > 0.0 && nu1 < nu2 && nu2 < 2.0) {
            return Err(Error::InvalidParameter(format!("need 0 < nu < nu1 < nu2 < 2, got nu = {nu}, nu1 = {nu1}, nu2 = {nu2}")));
        }
        if !(k > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("need K > 0 and T > 0, got K = {k}, T = {horizon}")));
        }
        Ok(UniquenessParams { epsilon, nu, nu1, nu2, k, horizon })
    }

    /// `ν = 0.9·2/(1+ε)`, `ν₂` the midpoint of `(ν₁, 2)`, `K = 1`.
    pub fn defaults(epsilon: f64, horizon: f64) -> Result<Self> {
        let nu = 0.9 * 2.0 / (1.0 + epsilon);
        let nu2 = 0.5 * (nu * (1.0 + epsilon) + 2.0);
        Self::new(epsilon, nu, nu2, 1.0, horizon)
    }

    pub fn with_k(self, k: f64) -> Result<Self> {
        Self::new(self.epsilon, self.nu, self.nu2, k, self.horizon)
    }

    pub fn weight(&self, r2: f64) -> f64 {
        (-(self.k + r2).powf(0.5 * self.nu2)).exp()
    }
}

/// Grid `L²` norm of `(a - b)·exp(-(K+|x|²)^{ν₂/2})`.
pub fn weighted_norm(grid: &GridSpec, a: &[f64], b: &[f64], p: &UniquenessParams) -> Result<f64> {
    if a.len() != grid.len() || b.len() != grid.len() {
        return Err(Error::GridMismatch(format!("fields of length {} and {} on grid of {}", a.len(), b.len(), grid.len())));
    }
    let s: f64 = (0..grid.len())
        .map(|i| {
            let r = grid.radius(i);
            let q = (a[i] - b[i]) * p.weight(r * r);
            q * q
        })
        .sum();
    Ok((grid.cell() * s).sqrt())
}

/// Weighted distance between two traces at a common stored time.
pub fn weighted_diff_norm(u1: &SolutionTrace, u2: &SolutionTrace, p: &UniquenessParams, t: f64) -> Result<f64> {
    if u1.grid != u2.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", u1.grid, u2.grid)));
    }
    let (Some(i), Some(j)) = (u1.snapshot_index(t), u2.snapshot_index(t)) else {
        return Err(Error::GridMismatch(format!("time {t} is not stored in both traces")));
    };
    weighted_norm(&u1.grid, &u1.u[i], &u2.u[j], p)
}

/// `C(1+|x|^{ν₁}) + ν₂²(1+T+T²/2)(K+|x|²)^{ν₂-1} + Tν(ν+d-2)(K+|x|²)^{ν₂/2-1} - ½(K+|x|²)^{ν₂/2}`
pub fn k_bracket(p: &UniquenessParams, c: f64, d: usize, k: f64, r: f64) -> f64 {
    let (t, s) = (p.horizon, k + r * r);
    c * (1.0 + r.powf(p.nu1)) + p.nu2 * p.nu2 * (1.0 + t + 0.5 * t * t) * s.powf(p.nu2 - 1.0)
        + t * p.nu * (p.nu + d as f64 - 2.0) * s.powf(0.5 * p.nu2 - 1.0)
        - 0.5 * s.powf(0.5 * p.nu2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: f64,
    pub exponent: u32,
    /// largest bracket value over the grid at `k`
    pub max_bracket: f64,
    pub m_realized: f64,
    pub c_lip: f64,
}

/// Smallest `K = 2^j`, `j = 0..=64`, with the bracket `<= 0` at every grid radius.
/// `c_lip` plays the role of the constant `C`.
pub fn select_k(p: &UniquenessParams, m_realized: f64, c_lip: f64, grid: &GridSpec) -> Result<KSelection> {
    if !m_realized.is_finite() || !c_lip.is_finite() || c_lip < 0.0 {
        return Err(Error::InvalidParameter(format!("need finite M and C >= 0, got M = {m_realized}, C = {c_lip}")));
    }
    let mut radii: Vec<f64> = (0..grid.len()).map(|i| grid.radius(i)).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let mut worst = (0.0, f64::NEG_INFINITY);
    for j in 0..=64u32 {
        let k = 2f64.powi(j as i32);
        worst = radii.iter().map(|&r| (r, k_bracket(p, c_lip, grid.d, k, r))).fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        if worst.1 <= 0.0 {
            return Ok(KSelection { k, exponent: j, max_bracket: worst.1, m_realized, c_lip });
        }
    }
    Err(Error::NoAdmissibleK { worst_x: worst.0 })
}

/// `φ(x) = (1 - |x-c|²/r²)^6` on the ball, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, radius: f64, grid: &GridSpec) -> Result<Self> {
        if center.len() != grid.d || !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("bad test function: center {center:?}, radius {radius}")));
        }
        if !grid.inside(&center, radius) {
            return Err(Error::Domain(format!("support of radius {radius} at {center:?} reaches the box boundary")));
        }
        Ok(TestFunction { center, radius })
    }

    fn s(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (self.radius * self.radius)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let s = self.s(x);
        if s >= 1.0 { 0.0 } else { (1.0 - s).powi(6) }
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let s = self.s(x);
        if s >= 1.0 {
            return 0.0;
        }
        let d = self.center.len() as f64;
        12.0 / (self.radius * self.radius) * (1.0 - s).powi(4) * (10.0 * s - d * (1.0 - s))
    }

    pub fn sample(&self, grid: &GridSpec) -> Vec<f64> {
        (0..grid.len()).map(|i| self.value(&grid.point(i))).collect()
    }

    pub fn sample_laplacian(&self, grid: &GridSpec) -> Vec<f64> {
        (0..grid.len()).map(|i| self.laplacian(&grid.point(i))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    pub t: f64,
    pub residual: f64,
    /// largest magnitude among the terms of the identity
    pub scale: f64,
    pub pairing: Pairing,
}

/// `⟨u(t),φ⟩ - ⟨u(0),φ⟩ - ∫⟨u,½Δφ⟩ - ∫⟨f(u),φ⟩ - ∫∫φσdW` for probe `probe`
/// of the trace (as registered in the solver configuration).
pub fn weak_residual(trace: &SolutionTrace, probe: usize, t: f64) -> Result<WeakResidual> {
    let j = trace.snapshot_index(t).ok_or_else(|| Error::GridMismatch(format!("time {t} is not stored")))?;
    let (Some(p0), Some(p)) = (trace.pairings.first().and_then(|v| v.get(probe)), trace.pairings[j].get(probe)) else {
        return Err(Error::InvalidParameter(format!("trace has no probe {probe}")));
    };
    let residual = p.u_phi - p0.u_phi - p.heat - p.drift - p.noise;
    let scale = [p.u_phi, p0.u_phi, p.heat, p.drift, p.noise].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(WeakResidual { t, residual, scale, pairing: *p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    pub level_pair: String,
    pub norm: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub nu: f64,
    pub nu1: f64,
    pub nu2: f64,
}

/// Weighted distances at `T/4, T/2, T` between the levels `N` and `2N`, and
/// between successive halvings of `dt` at level `N`. All runs share `noise`.
pub fn uniqueness_experiment(
    cfg: &SolverConfig,
    noise: Option<&NoisePath>,
    level: f64,
    refinements: usize,
    p: &UniquenessParams,
) -> Result<Vec<DecayRow>> {
    use rayon::prelude::*;
    let t_end = cfg.horizon;
    let times = [0.25 * t_end, 0.5 * t_end, t_end];
    let row = |t: f64, pair: String, norm: f64| DecayRow { t, level_pair: pair, norm, k: p.k, nu: p.nu, nu1: p.nu1, nu2: p.nu2 };
    let mut jobs: Vec<SolverConfig> = vec![cfg.clone().with_cutoff(level), cfg.clone().with_cutoff(2.0 * level)];
    for r in 1..=refinements {
        jobs.push(cfg.clone().with_cutoff(level).with_dt(cfg.dt / 2f64.powi(r as i32)));
    }
    let traces: Vec<SolutionTrace> = jobs.par_iter().map(|c| evolve(c, noise, None)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for &t in &times {
        out.push(row(t, format!("N={level}|N={}", 2.0 * level), weighted_diff_norm(&traces[0], &traces[1], p, t)?));
    }
    let mut prev = &traces[0];
    for (r, tr) in traces[2..].iter().enumerate() {
        let pair = format!("dt={}|dt={}", prev.dt, tr.dt);
        for &t in &times {
            out.push(row(t, pair.clone(), weighted_diff_norm(prev, tr, p, t)?));
        }
        prev = &traces[2 + r];
    }
    Ok(out)
}

/// Standard deviation of the noise part of the weak residual after `steps`
/// steps of length `dt`: each step contributes `⟨∫(S(Δt-s) - I) σ dW, φ⟩`.
pub fn noise_residual_std(model: &NoiseModel, probe: &[f64], dt: f64, steps: usize) -> Result<f64> {
    if probe.len() != model.grid.len() {
        return Err(Error::GridMismatch(format!("probe of length {} on grid of {}", probe.len(), model.grid.len())));
    }
    let ph = model.spectral().forward(probe);
    let cell = model.grid.cell();
    let per_step: f64 = ph
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let (q, l) = (model.q[k], model.lambda[k]);
            // q ∫_0^Δt (e^{-λs} - 1)² ds
            let v = if l == 0.0 {
                0.0
            } else {
                q * (-(-2.0 * l * dt).exp_m1() / (2.0 * l) + 2.0 * (-l * dt).exp_m1() / l + dt)
            };
            c.norm_sqr() * v.max(0.0)
        })
        .sum();
    Ok(cell * (steps as f64 * per_step).sqrt())
}
