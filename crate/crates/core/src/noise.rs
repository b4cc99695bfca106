//! Spatially homogeneous Gaussian noise, white in time, on a periodic grid,
//! and the stochastic convolution `Z(t) = ∫_0^t S(t-s) σ dW(s)` evolved
//! exactly per Fourier mode.
//!
//! Discrete convention: the covariance is `Λ(x) = ∫ μ(ξ) e^{iξx} dξ/(2π)^d`.
//! On the grid the unitary modes of the noise increment over `Δt` have
//! variance `q_k Δt` with `q_k = σ² μ(ξ_k) / dx^d`; white noise (`μ ≡ 1`)
//! gives independent cell increments of variance `Δt/dx^d`.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Spectral};
use crate::quadrature::integrate;
use crate::rng;
use crate::weight::radial_rho0;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpectralMeasure {
    White,
    /// `μ(ξ) = |ξ|^{β-d}`, `0 < β < d`.
    Riesz { beta: f64 },
    /// `μ(ξ) = exp(-a|ξ|)`.
    ExpDecay { a: f64 },
}

impl SpectralMeasure {
    pub fn validate(&self, d: usize) -> Result<()> {
        match *self {
            SpectralMeasure::Riesz { beta } if !(beta > 0.0 && beta < d as f64) => {
                Err(Error::InvalidParameter(format!("riesz exponent must lie in (0, {d}), got {beta}")))
            }
            SpectralMeasure::ExpDecay { a } if !(a > 0.0) => {
                Err(Error::InvalidParameter(format!("exp-decay rate must be positive, got {a}")))
            }
            _ => Ok(()),
        }
    }

    /// `μ` at `|ξ| = r`. The Riesz density is infinite at the origin.
    pub fn density(&self, r: f64, d: usize) -> f64 {
        match *self {
            SpectralMeasure::White => 1.0,
            SpectralMeasure::Riesz { beta } => r.powf(beta - d as f64),
            SpectralMeasure::ExpDecay { a } => (-a * r).exp(),
        }
    }

    /// Power-law exponent of `μ` at infinity; `None` for faster than polynomial decay.
    pub fn tail_power(&self, d: usize) -> Option<f64> {
        match *self {
            SpectralMeasure::White => Some(0.0),
            SpectralMeasure::Riesz { beta } => Some(beta - d as f64),
            SpectralMeasure::ExpDecay { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Dalang {
    Finite { value: f64 },
    Divergent { tail_exponent: f64 },
}

impl Dalang {
    pub fn is_finite(&self) -> bool {
        matches!(self, Dalang::Finite { .. })
    }
}

/// `∫ μ(dξ) / (1 + |ξ|^{2(1-η)})` over `ℝ^d`.
pub fn dalang_integral(mu: &SpectralMeasure, eta: f64, d: usize) -> Result<Dalang> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("Dalang exponent must lie in (0, 1), got {eta}")));
    }
    if d != 1 && d != 2 {
        return Err(Error::InvalidParameter(format!("dimension must be 1 or 2, got {d}")));
    }
    mu.validate(d)?;
    let s = 2.0 * (1.0 - eta);
    let surface = if d == 1 { 2.0 } else { 2.0 * PI };
    // radial integrand exponent at infinity
    let p = mu.tail_power(d).map(|a| a + d as f64 - 1.0 - s);
    if let Some(p) = p {
        if p >= -1.0 {
            return Ok(Dalang::Divergent { tail_exponent: p });
        }
    }
    let f = |r: f64| mu.density(r, d) * r.powi(d as i32 - 1) / (1.0 + r.powf(s));
    // r = e^v on [r0, r1]
    let (r0, r1) = (1e-8f64, 1e6f64);
    let g = |v: f64| {
        let r = v.exp();
        f(r) * r
    };
    let mut total = 0.0;
    let (a, b) = (r0.ln(), r1.ln());
    let panels = 64;
    for i in 0..panels {
        let lo = a + (b - a) * i as f64 / panels as f64;
        let hi = a + (b - a) * (i + 1) as f64 / panels as f64;
        total += integrate(&g, lo, hi, 1e-12)?.value;
    }
    // near the origin μ r^{d-1} ~ r^{κ-1}, κ = β for Riesz and d otherwise
    let kappa = match *mu {
        SpectralMeasure::Riesz { beta } => beta,
        _ => d as f64,
    };
    total += f(r0) * r0 / kappa;
    if let Some(p) = p {
        // integrand ~ C r^p beyond r1
        let c = f(r1) / r1.powf(p);
        total += -c * r1.powf(p + 1.0) / (p + 1.0);
    }
    Ok(Dalang::Finite { value: surface * total / (2.0 * PI).powi(d as i32) })
}

/// Noise law on a grid: spectral measure, amplitude and per-mode rates.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub grid: GridSpec,
    pub measure: SpectralMeasure,
    pub sigma: f64,
    /// `q_k = σ² μ(ξ_k) / dx^d`
    pub q: Vec<f64>,
    /// `λ_k = |ξ_k|²/2`
    pub lambda: Vec<f64>,
    spectral: Spectral,
}

impl NoiseModel {
    /// Validates the strong Dalang condition for some `η` in `(0, 1)`.
    pub fn new(grid: GridSpec, measure: SpectralMeasure, sigma: f64) -> Result<Self> {
        measure.validate(grid.d)?;
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        let admissible = (1..20).map(|k| k as f64 * 0.05).any(|eta| {
            dalang_integral(&measure, eta, grid.d).map(|r| r.is_finite()).unwrap_or(false)
        });
        if !admissible {
            return Err(Error::Domain(format!("{measure:?} in d = {} violates the strong Dalang condition", grid.d)));
        }
        let cell = grid.cell();
        let mut q = Vec::with_capacity(grid.len());
        let mut lambda = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let x2 = grid.xi2(i);
            let m = if x2 == 0.0 && matches!(measure, SpectralMeasure::Riesz { .. }) {
                // the Riesz density has no finite value at ξ = 0; the mode is dropped
                0.0
            } else {
                measure.density(x2.sqrt(), grid.d)
            };
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::Domain(format!("spectral density {m} at grid frequency |ξ|² = {x2}")));
            }
            q.push(sigma * sigma * m / cell);
            lambda.push(0.5 * x2);
        }
        Ok(NoiseModel { grid, measure, sigma, q, lambda, spectral: Spectral::new(grid) })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Variance added to mode `k` by an exact step of length `dt`.
    pub fn step_variance(&self, k: usize, dt: f64) -> f64 {
        let (q, l) = (self.q[k], self.lambda[k]);
        if l == 0.0 {
            q * dt
        } else {
            q * (-(-2.0 * l * dt).exp_m1()) / (2.0 * l)
        }
    }

    /// Exact variance of `Ẑ_k` at the end of a partition of step lengths.
    pub fn mode_variance(&self, k: usize, steps: &[f64]) -> f64 {
        let mut v = 0.0;
        for &dt in steps {
            v = (-2.0 * self.lambda[k] * dt).exp() * v + self.step_variance(k, dt);
        }
        v
    }

    /// Stationary variance `q_k/(2λ_k)`; infinite for the zero mode.
    pub fn stationary_variance(&self, k: usize) -> f64 {
        if self.lambda[k] == 0.0 {
            if self.q[k] == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            self.q[k] / (2.0 * self.lambda[k])
        }
    }

    /// `Cov(Z(t, x), Z(t, x + lag·dx e_1))` from the exact mode variances.
    pub fn analytic_covariance(&self, t: f64, lag: usize) -> f64 {
        let g = &self.grid;
        let n = g.len() as f64;
        (0..g.len())
            .map(|k| {
                let v = self.mode_variance(k, &[t]);
                let a = g.axes(k);
                v * (g.wavenumber(a[0]) * lag as f64 * g.spacing()).cos()
            })
            .sum::<f64>()
            / n
    }
}

/// One exact step: mode increments of `Ẑ` and of the noise `Ŵ`.
fn sample_step(model: &NoiseModel, dt: f64, seed: u64, path: u64, step: u64, z: &mut [Complex64]) -> Vec<Complex64> {
    let n = model.grid.len();
    let mut rng = rng::stream(seed, &[rng::tag::NOISE, path, step]);
    let mut e1: Vec<Complex64> = (0..n).map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0)).collect();
    let mut e2: Vec<Complex64> = (0..n).map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0)).collect();
    let sp = model.spectral();
    sp.forward_complex(&mut e1);
    sp.forward_complex(&mut e2);
    let mut eta = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let (q, l) = (model.q[k], model.lambda[k]);
        if q == 0.0 {
            z[k] *= (-l * dt).exp();
            continue;
        }
        let v = model.step_variance(k, dt);
        let cov = if l == 0.0 { q * dt } else { q * (-(-l * dt).exp_m1()) / l };
        let a = v.sqrt();
        let b = cov / a;
        let c = (q * dt - b * b).max(0.0).sqrt();
        z[k] = z[k] * (-l * dt).exp() + e1[k] * a;
        eta[k] = e1[k] * b + e2[k] * c;
    }
    eta
}

/// Stochastic convolution state on one path.
#[derive(Debug, Clone)]
pub struct StochConvState {
    pub model: Arc<NoiseModel>,
    pub modes: Vec<Complex64>,
    pub t: f64,
    pub seed: u64,
    pub path: u64,
    pub step: u64,
}

pub fn init_noise(model: Arc<NoiseModel>, seed: u64, path: u64) -> StochConvState {
    let n = model.grid.len();
    StochConvState { model, modes: vec![Complex64::new(0.0, 0.0); n], t: 0.0, seed, path, step: 0 }
}

impl StochConvState {
    /// Advance in place; returns the noise increment modes of the step.
    pub fn advance(&mut self, dt: f64) -> Result<Vec<Complex64>> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!("noise step must be positive, got {dt}")));
        }
        let eta = sample_step(&self.model, dt, self.seed, self.path, self.step, &mut self.modes);
        self.t += dt;
        self.step += 1;
        Ok(eta)
    }

    /// Real field `Z(t, ·)` and the imaginary residue of the inverse transform.
    pub fn field(&self) -> (Vec<f64>, f64) {
        self.model.spectral().inverse_real(&self.modes)
    }
}

pub fn stoch_conv_step(mut state: StochConvState, dt: f64) -> Result<StochConvState> {
    state.advance(dt)?;
    Ok(state)
}

/// Trajectory of `Ẑ` and noise increments `η` on a uniform step.
#[derive(Debug, Clone)]
pub struct NoisePath {
    pub model: Arc<NoiseModel>,
    pub dt: f64,
    pub seed: u64,
    pub path: u64,
    /// `z[k]` at `t = k·dt`, `k = 0..=steps`.
    pub z: Vec<Vec<Complex64>>,
    /// `eta[k]` over `(k·dt, (k+1)·dt]`.
    pub eta: Vec<Vec<Complex64>>,
}

impl NoisePath {
    pub fn generate(model: Arc<NoiseModel>, seed: u64, path: u64, dt: f64, steps: usize) -> Result<Self> {
        let mut st = init_noise(model.clone(), seed, path);
        let mut z = Vec::with_capacity(steps + 1);
        let mut eta = Vec::with_capacity(steps);
        z.push(st.modes.clone());
        for _ in 0..steps {
            eta.push(st.advance(dt)?);
            z.push(st.modes.clone());
        }
        Ok(NoisePath { model, dt, seed, path, z, eta })
    }

    pub fn steps(&self) -> usize {
        self.eta.len()
    }

    /// Same path on the step `factor·dt`.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::InvalidParameter(format!("cannot coarsen {} steps by {factor}", self.steps())));
        }
        let z = self.z.iter().step_by(factor).cloned().collect();
        let eta = self
            .eta
            .chunks(factor)
            .map(|c| {
                let mut acc = c[0].clone();
                for e in &c[1..] {
                    for (a, b) in acc.iter_mut().zip(e) {
                        *a += b;
                    }
                }
                acc
            })
            .collect();
        Ok(NoisePath { model: self.model.clone(), dt: self.dt * factor as f64, seed: self.seed, path: self.path, z, eta })
    }

    /// Z at step `k` as a real field.
    pub fn field(&self, k: usize) -> Vec<f64> {
        self.model.spectral().inverse_real(&self.z[k]).0
    }

    /// Trailing portion of the path up to time `t` (inclusive of step count floor).
    pub fn truncated(&self, steps: usize) -> NoisePath {
        NoisePath {
            model: self.model.clone(),
            dt: self.dt,
            seed: self.seed,
            path: self.path,
            z: self.z[..=steps].to_vec(),
            eta: self.eta[..steps].to_vec(),
        }
    }
}

/// `sup_{t <= T, x} |Z(t, x)| / ρ₀(x)` over the stored steps.
pub fn growth_stat(path: &NoisePath, horizon: f64) -> f64 {
    let g = path.model.grid;
    let rho: Vec<f64> = (0..g.len()).map(|i| radial_rho0(g.radius(i))).collect();
    let last = ((horizon / path.dt + 1e-9).floor() as usize).min(path.steps());
    (0..=last)
        .map(|k| path.field(k).iter().zip(&rho).fold(0.0f64, |a, (z, r)| a.max(z.abs() / r)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub lag: usize,
    pub empirical: f64,
    pub analytic: f64,
    pub std_err: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub samples: usize,
    pub rows: Vec<CovarianceRow>,
    pub chi2: f64,
    /// 1% critical value for 4 degrees of freedom.
    pub critical: f64,
    pub pass: bool,
}

/// Empirical spatial covariance at lags {0, 1, 2, 4} along the first axis,
/// averaged over positions, against the exact mode sum.
pub fn validate_covariance(model: &NoiseModel, t: f64, fields: &[Vec<f64>]) -> Result<CovarianceReport> {
    if fields.len() < 1000 {
        return Err(Error::InsufficientSamples { needed: 1000, got: fields.len() });
    }
    let g = model.grid;
    let n = g.n;
    let m = fields.len() as f64;
    let mut rows = Vec::new();
    let mut chi2 = 0.0;
    for lag in [0usize, 1, 2, 4] {
        let per_path: Vec<f64> = fields
            .iter()
            .map(|f| {
                let mut s = 0.0;
                for i in 0..g.len() {
                    let a = g.axes(i);
                    let j = if g.d == 1 { (a[0] + lag) % n } else { ((a[0] + lag) % n) * n + a[1] };
                    s += f[i] * f[j];
                }
                s / g.len() as f64
            })
            .collect();
        let mean = per_path.iter().sum::<f64>() / m;
        let var = per_path.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        let se = (var / m).sqrt();
        let analytic = model.analytic_covariance(t, lag);
        let z = if se > 0.0 { (mean - analytic) / se } else if (mean - analytic).abs() == 0.0 { 0.0 } else { f64::INFINITY };
        chi2 += z * z;
        rows.push(CovarianceRow { lag, empirical: mean, analytic, std_err: se, z });
    }
    let critical = 13.2767;
    Ok(CovarianceReport { samples: fields.len(), rows, chi2, critical, pass: chi2 <= critical })
}
