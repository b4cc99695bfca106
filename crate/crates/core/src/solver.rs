//! Cutoff mild equation on the periodic grid: exponential Euler in the
//! variable `v = u - z`, `z = S(t)u₀ + Z`, a Picard cross-check, the weighted
//! monitor with the explicit bound `K(M,T)`, and cutoff stabilization.

use crate::alpha::AlphaScaledDrift;
use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Spectral};
use crate::noise::NoisePath;
use crate::tower::Tower;
use crate::weight::{radial_rho0, StaticWeight, WeightField};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::E;

pub const BLOWUP_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    Zero,
    Constant { value: f64 },
    /// `amplitude · cos(k x₁)`
    Cosine { k: f64, amplitude: f64 },
    /// `amplitude · sin(x₁)`
    Sine { amplitude: f64 },
    /// `scale · ρ₀(x)`
    Rho0 { scale: f64 },
    Field { values: Vec<f64> },
}

impl InitialData {
    pub fn sample(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        let pts = 0..grid.len();
        let out: Vec<f64> = match self {
            InitialData::Zero => vec![0.0; grid.len()],
            InitialData::Constant { value } => vec![*value; grid.len()],
            InitialData::Cosine { k, amplitude } => pts.map(|i| amplitude * (k * grid.point(i)[0]).cos()).collect(),
            InitialData::Sine { amplitude } => pts.map(|i| amplitude * grid.point(i)[0].sin()).collect(),
            InitialData::Rho0 { scale } => pts.map(|i| scale * radial_rho0(grid.radius(i))).collect(),
            InitialData::Field { values } => {
                if values.len() != grid.len() {
                    return Err(Error::GridMismatch(format!("initial field of length {} on grid of {}", values.len(), grid.len())));
                }
                values.clone()
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("initial data is not finite".into()));
        }
        Ok(out)
    }

    /// `sup_x |u₀(x)| / ρ₀(x)` over the grid.
    pub fn audit(&self, grid: &GridSpec) -> Result<f64> {
        let u = self.sample(grid)?;
        Ok(u.iter().enumerate().fold(0.0, |a, (i, v)| a.max(v.abs() / radial_rho0(grid.radius(i)))))
    }
}

pub fn cutoff(field: &[f64], level: f64) -> Result<Vec<f64>> {
    check_level(level)?;
    Ok(field.iter().map(|v| v.clamp(-level, level)).collect())
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("cutoff level must be positive, got {level}")))
    }
}

/// `f_N(u) = f(clamp(u, -N, N))`; no truncation when `level` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffDrift {
    pub spec: DriftSpec,
    pub level: Option<f64>,
}

impl CutoffDrift {
    pub fn new(spec: DriftSpec, level: Option<f64>) -> Result<Self> {
        if let Some(n) = level {
            check_level(n)?;
        }
        Ok(CutoffDrift { spec, level })
    }

    pub fn f(&self, u: f64) -> f64 {
        match self.level {
            Some(n) => self.spec.f(u.clamp(-n, n)),
            None => self.spec.f(u),
        }
    }

    /// Global Lipschitz constant `L(N)`; infinite without a cutoff.
    pub fn lipschitz(&self) -> f64 {
        self.level.map_or(f64::INFINITY, |n| self.spec.lipschitz(n))
    }

    pub fn clamp(&self, z: f64) -> f64 {
        match self.level {
            Some(n) => z.clamp(-n, n),
            None => z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    ExpEuler,
    Picard { tol: f64, max_sweeps: usize },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub cutoff: Option<f64>,
    pub drift: DriftSpec,
    pub initial: InitialData,
    pub blowup_threshold: f64,
    /// Reference rate of the growth limiter: a step is split so that
    /// `h · max|f_N(u)|/(1+|u|) <= limiter · dt`. Off when `None`.
    pub limiter: Option<f64>,
    /// Test functions sampled on the grid; weak-form pairings are accumulated for each.
    pub probes: Vec<Vec<f64>>,
}

impl SolverConfig {
    pub fn new(grid: GridSpec, dt: f64, horizon: f64, drift: DriftSpec, initial: InitialData) -> Self {
        SolverConfig {
            grid,
            dt,
            horizon,
            scheme: Scheme::ExpEuler,
            cutoff: None,
            drift,
            initial,
            blowup_threshold: BLOWUP_THRESHOLD,
            limiter: None,
            probes: Vec::new(),
        }
    }

    pub fn with_cutoff(mut self, level: f64) -> Self {
        self.cutoff = Some(level);
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_limiter(mut self, rate: f64) -> Self {
        self.limiter = Some(rate);
        self
    }

    pub fn with_probe(mut self, probe: Vec<f64>) -> Self {
        self.probes.push(probe);
        self
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("need dt > 0 and T > 0, got dt = {}, T = {}", self.dt, self.horizon)));
        }
        let n = (self.horizon / self.dt).round();
        if n < 1.0 || (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::InvalidParameter(format!("T = {} is not a multiple of dt = {}", self.horizon, self.dt)));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        if let Some(n) = self.cutoff {
            check_level(n)?;
        }
        if let Scheme::Picard { tol, .. } = self.scheme {
            if !(tol > 0.0) {
                return Err(Error::InvalidParameter(format!("picard tolerance must be positive, got {tol}")));
            }
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::InvalidParameter("blow-up threshold must be positive".into()));
        }
        if let Some(r) = self.limiter {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(format!("limiter rate must be positive, got {r}")));
            }
        }
        if let Some(p) = self.probes.iter().find(|p| p.len() != self.grid.len()) {
            return Err(Error::GridMismatch(format!("probe of length {} on grid of {}", p.len(), self.grid.len())));
        }
        Ok(())
    }

    /// Step indices at which full fields are stored: every `max(1, steps/64)`
    /// steps, the last step, and `T/4`, `T/2` when they fall on the step grid.
    pub fn snapshot_steps(&self) -> Result<Vec<usize>> {
        let n = self.steps()?;
        let every = (n / 64).max(1);
        let mut s: Vec<usize> = (0..=n).step_by(every).collect();
        s.push(n);
        if n % 4 == 0 {
            s.extend([n / 4, n / 2]);
        }
        s.sort_unstable();
        s.dedup();
        Ok(s)
    }

    pub fn snapshot_times(&self) -> Result<Vec<f64>> {
        Ok(self.snapshot_steps()?.into_iter().map(|k| k as f64 * self.dt).collect())
    }
}

/// Cumulative weak-form pairings with one test function `φ` up to a stored time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    /// `⟨u(t), φ⟩`
    pub u_phi: f64,
    /// `∫⟨u, ½Δφ⟩`, exact for the heat flow within each step
    pub heat: f64,
    /// `∫⟨f_N(u), φ⟩`
    pub drift: f64,
    /// `∫∫ φ σ dW` from the increments that drove the path
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub t: f64,
    pub sup_u: f64,
    pub sup_u_over_rho0: f64,
    /// `sup_x |u_N|/ρ` using the latest tabulated weight time `<= t`
    pub sup_u_over_rho: Option<f64>,
    /// `sup_x q_N`, `q_N = (v_N + Mρ₀)/ρ`
    pub sup_q: Option<f64>,
    pub argmax: usize,
    pub flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUpEvent {
    pub t: f64,
    pub step: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SolutionTrace {
    pub grid: GridSpec,
    pub dt: f64,
    pub cutoff: Option<f64>,
    pub snap_times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub rows: Vec<MonitorRow>,
    pub blowup: Option<BlowUpEvent>,
    /// `sup_{t<=T, x} |z|/ρ₀` of the untruncated `z = S(t)u₀ + Z`
    pub m_realized: f64,
    pub sup_abs_z: f64,
    /// `pairings[snapshot][probe]`
    pub pairings: Vec<Vec<Pairing>>,
}

impl SolutionTrace {
    pub fn snapshot_index(&self, t: f64) -> Option<usize> {
        self.snap_times.iter().position(|s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    pub fn sup_abs_u(&self) -> f64 {
        self.rows.iter().fold(0.0, |a, r| a.max(r.sup_u))
    }

    pub fn final_u(&self) -> &[f64] {
        self.u.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Noise path resampled to the solver step, checked against the grid.
fn align_noise<'a>(cfg: &SolverConfig, noise: Option<&'a NoisePath>, steps: usize) -> Result<Option<std::borrow::Cow<'a, NoisePath>>> {
    let Some(p) = noise else { return Ok(None) };
    if p.model.grid != cfg.grid {
        return Err(Error::GridMismatch(format!("noise grid {:?} vs solver grid {:?}", p.model.grid, cfg.grid)));
    }
    let ratio = cfg.dt / p.dt;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
        return Err(Error::GridMismatch(format!("solver dt {} is not a multiple of noise dt {}", cfg.dt, p.dt)));
    }
    let path = if m == 1.0 { std::borrow::Cow::Borrowed(p) } else { std::borrow::Cow::Owned(p.coarsen(m as usize)?) };
    if path.steps() < steps {
        return Err(Error::GridMismatch(format!("noise path has {} steps, solver needs {steps}", path.steps())));
    }
    Ok(Some(path))
}

/// `z(t_k) = S(t_k)u₀ + Z(t_k)` for `k = 0..=steps`.
fn free_fields(cfg: &SolverConfig, sp: &Spectral, noise: Option<&NoisePath>, steps: usize) -> Result<Vec<Vec<f64>>> {
    let u0 = cfg.initial.sample(&cfg.grid)?;
    let u0_hat = sp.forward(&u0);
    let lam: Vec<f64> = (0..cfg.grid.len()).map(|i| 0.5 * cfg.grid.xi2(i)).collect();
    Ok((0..=steps)
        .map(|k| {
            let t = k as f64 * cfg.dt;
            let mut m: Vec<Complex64> = u0_hat.iter().zip(&lam).map(|(a, l)| a * (-l * t).exp()).collect();
            if let Some(p) = noise {
                for (a, b) in m.iter_mut().zip(&p.z[k]) {
                    *a += b;
                }
            }
            if k == 0 {
                // exact initial datum, free of transform round-off
                return u0.clone();
            }
            sp.inverse_real(&m).0
        })
        .collect())
}

struct WeightLookup<'a> {
    field: &'a WeightField,
    /// weight time index per solver step
    index: Vec<usize>,
}

fn weight_lookup<'a>(cfg: &SolverConfig, wf: Option<&'a WeightField>, steps: usize) -> Result<Option<WeightLookup<'a>>> {
    let Some(field) = wf else { return Ok(None) };
    if field.points.len() != cfg.grid.len() || field.rho.iter().any(|r| r.len() != cfg.grid.len()) {
        return Err(Error::GridMismatch("weight field does not cover the solver grid".into()));
    }
    let mut index = Vec::with_capacity(steps + 1);
    let mut cur: Option<usize> = None;
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        if let Some(j) = field.time_index(t) {
            cur = Some(j);
        }
        match cur {
            Some(j) => index.push(j),
            None => return Err(Error::GridMismatch(format!("weight field has no time <= {t}"))),
        }
    }
    Ok(Some(WeightLookup { field, index }))
}

struct Monitor<'a> {
    rho0: Vec<f64>,
    m: f64,
    weight: Option<WeightLookup<'a>>,
    threshold: f64,
}

impl Monitor<'_> {
    fn row(&self, k: usize, t: f64, u: &[f64], v: &[f64]) -> MonitorRow {
        let mut sup_u = 0.0f64;
        let mut sup_u0 = 0.0f64;
        let mut argmax = 0;
        let mut finite = true;
        for (i, x) in u.iter().enumerate() {
            if !x.is_finite() {
                finite = false;
            }
            if x.abs() > sup_u {
                sup_u = x.abs();
                argmax = i;
            }
            sup_u0 = sup_u0.max(x.abs() / self.rho0[i]);
        }
        let (mut sr, mut sq) = (None, None);
        if let Some(w) = &self.weight {
            let rho = &w.field.rho[w.index[k]];
            let mut a = 0.0f64;
            let mut b = f64::NEG_INFINITY;
            for i in 0..u.len() {
                a = a.max(u[i].abs() / rho[i]);
                b = b.max((v[i] + self.m * self.rho0[i]) / rho[i]);
            }
            sr = Some(a);
            sq = Some(b);
        }
        let flag = !finite || sup_u > self.threshold;
        MonitorRow { t, sup_u: if finite { sup_u } else { f64::INFINITY }, sup_u_over_rho0: sup_u0, sup_u_over_rho: sr, sup_q: sq, argmax, flag }
    }
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Exponential Euler for the cutoff system,
/// `v_{k+1} = S(Δt)(v_k + Δt f_N(v_k + z_N(t_k)))`, `u_N = v_N + z_N`.
pub fn evolve(cfg: &SolverConfig, noise: Option<&NoisePath>, weight: Option<&WeightField>) -> Result<SolutionTrace> {
    cfg.validate()?;
    let steps = cfg.steps()?;
    let g = cfg.grid;
    let sp = Spectral::new(g);
    let noise = align_noise(cfg, noise, steps)?;
    let noise = noise.as_deref();
    let zs = free_fields(cfg, &sp, noise, steps)?;
    let rho0: Vec<f64> = (0..g.len()).map(|i| radial_rho0(g.radius(i))).collect();
    let m_realized = zs.iter().flat_map(|z| z.iter().zip(&rho0).map(|(a, r)| a.abs() / r)).fold(0.0, f64::max);
    let sup_abs_z = zs.iter().map(|z| sup_norm(z)).fold(0.0, f64::max);
    let monitor = Monitor { rho0, m: m_realized, weight: weight_lookup(cfg, weight, steps)?, threshold: cfg.blowup_threshold };
    let drift = CutoffDrift::new(cfg.drift.clone(), cfg.cutoff)?;
    let lam: Vec<f64> = (0..g.len()).map(|i| 0.5 * g.xi2(i)).collect();
    let probes: Vec<Vec<Complex64>> = cfg.probes.iter().map(|p| sp.forward(p)).collect();
    let cell = g.cell();
    let snaps = cfg.snapshot_steps()?;

    let mut tr = SolutionTrace {
        grid: g,
        dt: cfg.dt,
        cutoff: cfg.cutoff,
        snap_times: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
        z: Vec::new(),
        rows: Vec::with_capacity(steps + 1),
        blowup: None,
        m_realized,
        sup_abs_z,
        pairings: Vec::new(),
    };
    let mut acc = vec![Pairing::default(); probes.len()];
    let mut v_hat = vec![Complex64::new(0.0, 0.0); g.len()];
    let mut v = vec![0.0; g.len()];
    let mut next_snap = 0;
    for k in 0..=steps {
        let t0 = k as f64 * cfg.dt;
        let zc: Vec<f64> = zs[k].iter().map(|z| drift.clamp(*z)).collect();
        let mut u: Vec<f64> = v.iter().zip(&zc).map(|(a, b)| a + b).collect();
        let row = monitor.row(k, t0, &u, &v);
        tr.rows.push(row);
        if row.flag {
            tr.blowup = Some(BlowUpEvent { t: t0, step: k, value: row.sup_u });
            break;
        }
        if next_snap < snaps.len() && snaps[next_snap] == k {
            for (a, p) in acc.iter_mut().zip(&cfg.probes) {
                a.u_phi = cell * u.iter().zip(p).map(|(x, y)| x * y).sum::<f64>();
            }
            tr.snap_times.push(t0);
            tr.u.push(u.clone());
            tr.v.push(v.clone());
            tr.z.push(zc.clone());
            tr.pairings.push(acc.clone());
            next_snap += 1;
        }
        if k == steps {
            break;
        }
        let mut remaining = cfg.dt;
        let mut t = t0;
        while remaining > 0.0 {
            let f: Vec<f64> = u.iter().map(|x| drift.f(*x)).collect();
            let mut h = remaining;
            if let Some(rate) = cfg.limiter {
                let ell = u.iter().zip(&f).fold(0.0f64, |a, (x, y)| a.max(y.abs() / (1.0 + x.abs())));
                if ell > 0.0 {
                    h = h.min(rate * cfg.dt / ell);
                }
                if remaining - h < 1e-12 * cfg.dt {
                    h = remaining;
                }
            }
            let f_hat = sp.forward(&f);
            if !probes.is_empty() {
                let u_hat = sp.forward(&u);
                for ((a, ph), p) in acc.iter_mut().zip(&probes).zip(&cfg.probes) {
                    a.heat += cell
                        * u_hat.iter().zip(ph).zip(&lam).map(|((x, y), l)| (x.conj() * y).re * (-l * h).exp_m1()).sum::<f64>();
                    a.drift += h * cell * f.iter().zip(p).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            for ((vh, fh), l) in v_hat.iter_mut().zip(&f_hat).zip(&lam) {
                *vh = (*vh + fh * h) * (-l * h).exp();
            }
            v = sp.inverse_real(&v_hat).0;
            remaining -= h;
            t += h;
            if remaining > 0.0 {
                u = v.iter().zip(&zc).map(|(a, b)| a + b).collect();
                let s = sup_norm(&u);
                if !s.is_finite() || s > cfg.blowup_threshold || u.iter().any(|x| !x.is_finite()) {
                    let row = monitor.row(k, t, &u, &v);
                    tr.rows.push(row);
                    tr.blowup = Some(BlowUpEvent { t, step: k, value: row.sup_u });
                    break;
                }
            }
        }
        if tr.blowup.is_some() {
            break;
        }
        if let Some(p) = noise {
            for (a, ph) in acc.iter_mut().zip(&probes) {
                a.noise += sp.inner(ph, &p.eta[k]);
            }
        }
    }
    Ok(tr)
}

fn bare_trace(cfg: &SolverConfig, zs: &[Vec<f64>], rho0: &[f64]) -> SolutionTrace {
    let m_realized = zs.iter().flat_map(|z| z.iter().zip(rho0).map(|(a, r)| a.abs() / r)).fold(0.0, f64::max);
    SolutionTrace {
        grid: cfg.grid,
        dt: cfg.dt,
        cutoff: cfg.cutoff,
        snap_times: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
        z: Vec::new(),
        rows: Vec::new(),
        blowup: None,
        m_realized,
        sup_abs_z: zs.iter().map(|z| sup_norm(z)).fold(0.0, f64::max),
        pairings: Vec::new(),
    }
}

/// Fixed-point iteration of `v = ∫ S(t-s) f_N(v + z_N) ds` with trapezoidal
/// time quadrature, on windows of length `T_c` with `L(N)·T_c <= ½`.
pub fn picard_solve(cfg: &SolverConfig, noise: Option<&NoisePath>) -> Result<SolutionTrace> {
    cfg.validate()?;
    let (tol, max_sweeps) = match cfg.scheme {
        Scheme::Picard { tol, max_sweeps } => (tol, max_sweeps),
        Scheme::ExpEuler => (1e-12, 200),
    };
    let level = cfg.cutoff.ok_or_else(|| Error::InvalidParameter("Picard iteration needs a cutoff level".into()))?;
    let drift = CutoffDrift::new(cfg.drift.clone(), Some(level))?;
    let lip = drift.lipschitz();
    let steps = cfg.steps()?;
    let window = if lip == 0.0 { steps } else { ((0.5 / (lip * cfg.dt)).floor() as usize).min(steps) };
    if window == 0 {
        return Err(Error::Contraction { ratio: lip * cfg.dt, t0: 0.0 });
    }
    let g = cfg.grid;
    let sp = Spectral::new(g);
    let noise = align_noise(cfg, noise, steps)?;
    let zs = free_fields(cfg, &sp, noise.as_deref(), steps)?;
    let zc: Vec<Vec<f64>> = zs.iter().map(|z| z.iter().map(|x| drift.clamp(*x)).collect()).collect();
    let lam: Vec<f64> = (0..g.len()).map(|i| 0.5 * g.xi2(i)).collect();
    let decay: Vec<f64> = lam.iter().map(|l| (-l * cfg.dt).exp()).collect();
    let half = 0.5 * cfg.dt;

    let mut v = vec![vec![0.0; g.len()]; steps + 1];
    let mut a = 0;
    while a < steps {
        let b = (a + window).min(steps);
        for j in a + 1..=b {
            v[j] = v[a].clone();
        }
        let va_hat = sp.forward(&v[a]);
        let mut prev: Option<f64> = None;
        let mut converged = false;
        for _ in 0..max_sweeps {
            let f_hat: Vec<Vec<Complex64>> = (a..=b)
                .map(|j| sp.forward(&v[j].iter().zip(&zc[j]).map(|(x, y)| drift.f(x + y)).collect::<Vec<_>>()))
                .collect();
            let mut vh = va_hat.clone();
            let mut upd = 0.0f64;
            let mut scale = sup_norm(&v[a]);
            for j in a..b {
                let (fj, fk) = (&f_hat[j - a], &f_hat[j + 1 - a]);
                for i in 0..vh.len() {
                    vh[i] = (vh[i] + fj[i] * half) * decay[i] + fk[i] * half;
                }
                let nv = sp.inverse_real(&vh).0;
                upd = upd.max(nv.iter().zip(&v[j + 1]).fold(0.0, |m, (x, y)| m.max((x - y).abs())));
                scale = scale.max(sup_norm(&nv));
                v[j + 1] = nv;
            }
            if upd <= tol * (1.0 + scale) {
                converged = true;
                break;
            }
            if let Some(p) = prev {
                if p > 1e-12 * (1.0 + scale) && upd > 0.5 * p {
                    return Err(Error::Contraction { ratio: upd / p, t0: a as f64 * cfg.dt });
                }
            }
            prev = Some(upd);
        }
        if !converged {
            return Err(Error::Contraction { ratio: f64::NAN, t0: a as f64 * cfg.dt });
        }
        a = b;
    }

    let rho0: Vec<f64> = (0..g.len()).map(|i| radial_rho0(g.radius(i))).collect();
    let mut tr = bare_trace(cfg, &zs, &rho0);
    let monitor = Monitor { rho0, m: tr.m_realized, weight: None, threshold: cfg.blowup_threshold };
    let snaps = cfg.snapshot_steps()?;
    for k in 0..=steps {
        let u: Vec<f64> = v[k].iter().zip(&zc[k]).map(|(x, y)| x + y).collect();
        tr.rows.push(monitor.row(k, k as f64 * cfg.dt, &u, &v[k]));
        if snaps.contains(&k) {
            tr.snap_times.push(k as f64 * cfg.dt);
            tr.u.push(u);
            tr.v.push(v[k].clone());
            tr.z.push(zc[k].clone());
        }
    }
    Ok(tr)
}

/// `K(M,T) = max{2M, H_β⁻¹(H_β(2M) + (CM+1)T)}`, `β = α/(α-1)`.
pub fn k_bound(drift: &AlphaScaledDrift, m: f64, c: f64, horizon: f64) -> Result<Tower> {
    let conj = drift.conjugate();
    let two_m = Tower::real(2.0 * m);
    let y = conj.big_h_alpha(&two_m)? + (c * m + 1.0) * horizon;
    let k = conj.big_h_alpha_inv(y)?;
    Ok(if k.total_cmp(&two_m).is_lt() { two_m } else { k })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMonitor {
    pub m: f64,
    pub c: f64,
    pub k: Tower,
    pub horizon: f64,
    /// `sup_{t,x} |u_N|/ρ`
    pub sup_ratio: f64,
    pub worst_t: f64,
    pub sup_q: f64,
    pub bound_pass: bool,
}

/// Checks `sup_x |u_N(t,x)|/ρ(t,x) <= K(M,T)` at every monitored step.
pub fn monitor_weighted(trace: &SolutionTrace, drift: &AlphaScaledDrift) -> Result<WeightedMonitor> {
    let mut sup_ratio = 0.0f64;
    let mut sup_q = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    for r in &trace.rows {
        let (Some(a), Some(q)) = (r.sup_u_over_rho, r.sup_q) else {
            return Err(Error::GridMismatch(format!("no weight coverage at t = {}", r.t)));
        };
        if a > sup_ratio || !a.is_finite() {
            sup_ratio = a;
            worst_t = r.t;
        }
        sup_q = sup_q.max(q);
    }
    let horizon = trace.rows.last().map_or(0.0, |r| r.t);
    let c = StaticWeight::new(trace.grid.d).sup_abs_laplacian();
    let k = k_bound(drift, trace.m_realized, c, horizon)?;
    let bound_pass = trace.blowup.is_none() && sup_ratio.is_finite() && !k.total_cmp(&Tower::real(sup_ratio)).is_lt();
    Ok(WeightedMonitor { m: trace.m_realized, c, k, horizon, sup_ratio, worst_t, sup_q, bound_pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JensenCheck {
    pub t: f64,
    pub c: f64,
    /// `sup_x U₀(t,x) / (C·sqrt(ln(e + |x|² + d·t)))`
    pub worst_ratio: f64,
    pub pass: bool,
    #[serde(skip)]
    pub field: Vec<f64>,
}

pub fn initial_convolve_and_check(u0: &InitialData, grid: &GridSpec, t: f64) -> Result<JensenCheck> {
    let sp = Spectral::new(*grid);
    let c = u0.audit(grid)?;
    let field = crate::grid::apply_heat_semigroup(&sp, &u0.sample(grid)?, t)?;
    let d = grid.d as f64;
    let mut worst = 0.0f64;
    let mut pass = true;
    for (i, v) in field.iter().enumerate() {
        let r = grid.radius(i);
        let bound = c * (E + r * r + d * t).ln().sqrt();
        let tol = 1e-9 * (1.0 + c) + 1e-12;
        if *v > bound + tol {
            pass = false;
        }
        if bound > 0.0 {
            worst = worst.max(v / bound);
        }
    }
    Ok(JensenCheck { t, c, worst_ratio: worst, pass, field })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationRow {
    pub level: f64,
    pub next: f64,
    /// `sup |v_N - v_{N'}|` over the central half-box and stored times
    pub d: f64,
    pub sup_u: f64,
}

pub fn stabilization_check(cfg: &SolverConfig, noise: Option<&NoisePath>, levels: &[f64]) -> Result<Vec<StabilizationRow>> {
    use rayon::prelude::*;
    let traces: Vec<SolutionTrace> = levels
        .par_iter()
        .map(|&n| evolve(&cfg.clone().with_cutoff(n), noise, None))
        .collect::<Result<_>>()?;
    let g = cfg.grid;
    let central: Vec<usize> = (0..g.len()).filter(|&i| g.point(i).iter().all(|x| x.abs() <= 0.5 * g.half_len)).collect();
    Ok(traces
        .windows(2)
        .zip(levels.windows(2))
        .map(|(tr, lv)| {
            let d = tr[0]
                .v
                .iter()
                .zip(&tr[1].v)
                .map(|(a, b)| central.iter().fold(0.0f64, |m, &i| m.max((a[i] - b[i]).abs())))
                .fold(0.0, f64::max);
            StabilizationRow { level: lv[0], next: lv[1], d, sup_u: tr[0].sup_abs_u() }
        })
        .collect())
}
