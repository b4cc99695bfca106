//! Sampled certification of the drift assumptions, and the growth
//! restriction counterexample.

use crate::alpha::{convexity_witness, geometric_grid, ln_h_alpha};
use crate::drift::{DriftKind, DriftSpec};
use crate::error::Result;
use crate::family;
use crate::rng;
use crate::tower::{iter_exp, Tower};
use crate::transform::{OsgoodTransform, TransformConfig};
use crate::uniqueness::{lip_growth_check, LipTrend};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditConfig {
    pub x_max: f64,
    /// Transform cap in `u = ln(1 + x/c)` for flow and tail checks.
    pub u_cap: f64,
    pub grid_points: usize,
    pub epsilon: f64,
    /// Horizon `T`; the growth fit uses `t ∈ {T, 2T}`.
    pub horizon: f64,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { x_max: 1e8, u_cap: 1e12, grid_points: 400, epsilon: 0.5, horizon: 1.0, seed: 0 }
    }
}

/// One report line. Failures always carry a witness abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub check: String,
    pub pass: bool,
    pub witness: Option<f64>,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuFit {
    pub t: f64,
    /// Fitted exponent; `None` if the flow does not exist on the fit grid.
    pub nu: Option<f64>,
    /// `ln C_t` with `ϑ(t, x) <= C_t exp(exp(x^ν))` on the grid.
    pub ln_c: Option<Tower>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub drift: String,
    pub alpha: f64,
    pub entries: Vec<AuditEntry>,
    pub nu_fit: Vec<NuFit>,
    pub lip_trend: LipTrend,
    /// Best `c` with `h(y) >= c y ln y` for `y >= e` on the grid.
    pub fitted_c: f64,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, check: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.check == check)
    }

    /// `ν` at the largest fitted time.
    pub fn nu_at_2t(&self) -> Option<f64> {
        self.nu_fit.last().and_then(|f| f.nu)
    }
}

fn entry(check: &str, pass: bool, witness: Option<f64>, value: f64, detail: String) -> AuditEntry {
    AuditEntry { check: check.into(), pass, witness, value, detail }
}

/// `min(1.2, 0.9 * 2/ν)`.
pub fn default_alpha(nu_2t: f64) -> f64 {
    if nu_2t <= 0.0 {
        1.2
    } else {
        1.2f64.min(0.9 * 2.0 / nu_2t)
    }
}

fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Flow value used by the growth fit: closed form for the iterated-log
/// family, tabulated transform otherwise.
fn flow_for_fit(spec: &DriftSpec, tr: Option<&OsgoodTransform>, t: f64, x: f64) -> Option<Tower> {
    if let (DriftKind::IteratedLog { n }, 0.0) = (&spec.kind, spec.log_adjust) {
        return Some(family::theta(*n, t, &Tower::real(x)));
    }
    tr.and_then(|tr| tr.flow(t, x).ok()).map(|f| f.value)
}

pub fn assumption_audit(spec: &DriftSpec, alpha: f64, cfg: &AuditConfig) -> AuditReport {
    let mut entries = Vec::new();
    let npts = cfg.grid_points.max(16);
    let mut xs = vec![0.0];
    xs.extend(geometric_grid(1e-6, cfg.x_max, npts));
    let ln_h: Vec<f64> = xs.iter().map(|x| spec.ln_h(*x)).collect();

    // positivity and monotonicity
    let bad = xs.iter().zip(&ln_h).find(|(_, l)| !(l.is_finite() || **l == f64::INFINITY));
    entries.push(match bad {
        Some((x, l)) => entry("positivity", false, Some(*x), *l, "h not strictly positive".into()),
        None => entry("positivity", true, None, ln_h[0].exp(), "h(0) > 0 and h > 0 on grid".into()),
    });
    let mono = (1..xs.len()).find(|&i| ln_h[i] < ln_h[i - 1] - 1e-12 * (1.0 + ln_h[i - 1].abs()));
    entries.push(match mono {
        Some(i) => entry("monotone", false, Some(xs[i]), ln_h[i] - ln_h[i - 1], "ln h decreases".into()),
        None => entry("monotone", true, None, 0.0, "h nondecreasing on grid".into()),
    });
    entries.push(match convexity_witness(&xs, &ln_h, 1e-9) {
        Some((x, v)) => entry("convexity", false, Some(x), v, "slope drop beyond tolerance".into()),
        None => entry("convexity", true, None, 0.0, "second differences >= -tol".into()),
    });

    // domination |f(u)| <= h(|u|)
    let mut worst = (None, f64::NEG_INFINITY);
    for &x in &xs {
        for u in [x, -x] {
            let lf = spec.f(u).abs().ln();
            let gap = lf - spec.ln_h(x);
            if gap > worst.1 {
                worst = (Some(u), gap);
            }
        }
    }
    let dom_ok = worst.1 <= 1e-12;
    entries.push(entry(
        "domination",
        dom_ok,
        if dom_ok { None } else { worst.0 },
        worst.1,
        "max of ln|f(u)| - ln h(|u|)".into(),
    ));

    // local Lipschitz on random and adjacent pairs
    let mut rng = rng::stream(cfg.seed, &[rng::tag::AUDIT]);
    let mut lip_fail: Option<(f64, f64)> = None;
    let mut lip_worst: f64 = 0.0;
    for r in [1.0, 10.0, 100.0, 1e3, 1e4, 1e6] {
        let l = spec.lipschitz(r);
        for k in 0..4000 {
            let u1 = rng.random_range(-r..=r);
            let u2 = if k % 2 == 0 { rng.random_range(-r..=r) } else { (u1 + r * 1e-6).min(r) };
            if u1 == u2 {
                continue;
            }
            let (f1, f2) = (spec.f(u1), spec.f(u2));
            let ratio = (f1 - f2).abs() / (l * (u1 - u2).abs() + 8.0 * f64::EPSILON * (f1.abs() + f2.abs()));
            lip_worst = lip_worst.max(ratio);
            if ratio > 1.0 + 1e-9 && lip_fail.is_none() {
                lip_fail = Some((r, ratio));
            }
        }
    }
    entries.push(match lip_fail {
        Some((r, v)) => entry("local_lipschitz", false, Some(r), v, "difference quotient exceeds L(R)".into()),
        None => entry("local_lipschitz", true, None, lip_worst, "max quotient / L(R)".into()),
    });

    // polynomial growth by log-log slope on the tail
    let tail: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= 10.0).collect();
    let lx: Vec<f64> = tail.iter().map(|&i| xs[i].ln()).collect();
    let ly: Vec<f64> = tail.iter().map(|&i| ln_h[i]).collect();
    let slope = regression_slope(&lx, &ly);
    let ln_cpoly = xs
        .iter()
        .zip(&ln_h)
        .map(|(x, l)| l - (x.powf(spec.poly_p)).ln_1p())
        .fold(f64::NEG_INFINITY, f64::max);
    let poly_ok = slope <= spec.poly_p + 1e-9;
    entries.push(entry(
        "polynomial_growth",
        poly_ok,
        if poly_ok { None } else { Some(cfg.x_max) },
        slope,
        format!("log-log slope vs p = {}; ln C = {ln_cpoly:.6}", spec.poly_p),
    ));

    // Osgood divergence with tail extrapolation
    let tr = OsgoodTransform::build(spec, TransformConfig { x_max: cfg.x_max, u_cap: Some(cfg.u_cap), tol: 1e-10 });
    match &tr {
        Ok(t) => {
            let ue = t.u_end();
            let du = 1e-3 * ue;
            let q = 1.0 + (spec.ln_rate(ue) - spec.ln_rate(ue - 2.0 * du)) / (2.0 * du);
            let h_xmax = t.eval(cfg.x_max).unwrap_or(f64::NAN);
            if q <= 1.0 + 1e-3 {
                entries.push(entry(
                    "osgood",
                    true,
                    None,
                    t.h_end(),
                    format!("H at cap = {:.6}, tail exponent {q:.6} <= 1: divergent", t.h_end()),
                ));
            } else {
                let h_inf = t.h_end() + t.density(ue) / (q - 1.0);
                entries.push(entry(
                    "osgood",
                    false,
                    Some(cfg.x_max),
                    h_xmax,
                    format!("H(x_max) = {h_xmax:.6} with tail exponent {q:.4}; extrapolated H(inf) = {h_inf:.6}"),
                ));
            }
        }
        Err(e) => entries.push(entry("osgood", false, Some(cfg.x_max), f64::NAN, format!("transform failed: {e}"))),
    }

    // growth restriction: fit ν_t from ln ln ϑ(t, x)
    let fit_x = geometric_grid(10.0, cfg.x_max, 64);
    let mut nu_fit = Vec::new();
    for t in [cfg.horizon, 2.0 * cfg.horizon] {
        let mut pts = Vec::new();
        let mut missing = None;
        for &x in &fit_x {
            match flow_for_fit(spec, tr.as_ref().ok(), t, x) {
                Some(v) if v.to_f64() > std::f64::consts::E => {
                    pts.push((x, v));
                }
                Some(_) => {}
                None => {
                    missing = Some(x);
                    break;
                }
            }
        }
        if let Some(x) = missing {
            nu_fit.push(NuFit { t, nu: None, ln_c: None });
            entries.push(entry(
                "growth_restriction",
                false,
                Some(x),
                f64::INFINITY,
                format!("flow at t = {t} does not exist from x = {x}"),
            ));
            continue;
        }
        let lnx: Vec<f64> = pts.iter().map(|(x, _)| x.ln()).collect();
        let lll: Vec<f64> = pts.iter().map(|(_, v)| v.iter_ln(2).to_f64().ln()).collect();
        let nu = regression_slope(&lnx, &lll).max(0.0);
        let nu_eff = nu.max(1e-6);
        let ln_c = pts
            .iter()
            .map(|(x, v)| {
                let lv = v.ln();
                let e = x.powf(nu_eff).exp();
                if lv.depth == 0 {
                    Tower::real(lv.top - e)
                } else {
                    lv.sub(&Tower::real(e))
                }
            })
            .fold(Tower::real(f64::NEG_INFINITY), |a, b| if b.total_cmp(&a).is_gt() { b } else { a });
        nu_fit.push(NuFit { t, nu: Some(nu), ln_c: Some(ln_c) });
        let ok = nu < 2.0 && !ln_c.top.is_nan() && ln_c.top.is_finite();
        entries.push(entry(
            "growth_restriction",
            ok,
            if ok { None } else { Some(cfg.x_max) },
            nu,
            format!("t = {t}: nu_t = {nu:.6}, ln C_t = {ln_c}"),
        ));
    }
    let nu_2t = nu_fit.last().and_then(|f| f.nu);
    let alpha_ok = alpha > 1.0 && nu_2t.is_some_and(|nu| alpha * nu < 2.0);
    entries.push(entry(
        "alpha_admissible",
        alpha_ok,
        if alpha_ok { None } else { Some(2.0 * cfg.horizon) },
        alpha * nu_2t.unwrap_or(f64::INFINITY),
        format!("alpha = {alpha} against 2 / nu at t = 2T"),
    ));

    // h_α convex on x >= 1 and bounded below
    let x_hi = cfg.x_max.powf(1.0 / alpha.max(1.0 + 1e-9)).min(1e6).max(2.0);
    let ax = geometric_grid(1.0, x_hi, npts);
    let aln: Vec<f64> = ax.iter().map(|x| ln_h_alpha(spec, alpha, *x)).collect();
    entries.push(match convexity_witness(&ax, &aln, 1e-9) {
        Some((x, v)) => entry("h_alpha_convexity", false, Some(x), v, "h_alpha slope drop on x >= 1".into()),
        None => entry("h_alpha_convexity", true, None, 0.0, "h_alpha convex on sampled x >= 1".into()),
    });
    let lx0 = geometric_grid(1e-12, x_hi, npts);
    let (wx, wl) = lx0
        .iter()
        .map(|x| (*x, ln_h_alpha(spec, alpha, *x)))
        .fold((f64::NAN, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let lb_ok = wl.exp() > 0.0 && wl.is_finite();
    entries.push(entry(
        "h_alpha_lower_bound",
        lb_ok,
        if lb_ok { None } else { Some(wx) },
        wl.exp(),
        format!("inf h_alpha on grid attained near x = {wx:e}"),
    ));

    // Lipschitz growth against (ln R)^{1+ε}
    let rgrid = geometric_grid(10.0, 1e8, 29);
    let lip_trend = lip_growth_check(spec, cfg.epsilon, &rgrid);
    entries.push(entry(
        "lip_over_log",
        lip_trend.pass,
        if lip_trend.pass { None } else { rgrid.last().copied() },
        lip_trend.rows.last().map(|r| r.1).unwrap_or(f64::NAN),
        format!("L(R)/(ln R)^(1+{}) over the last decade", cfg.epsilon),
    ));

    // fitted c in h(y) >= c y ln y
    let fitted_c = xs
        .iter()
        .zip(&ln_h)
        .filter(|(x, _)| **x >= std::f64::consts::E)
        .map(|(x, l)| (l - x.ln() - x.ln().ln()).exp())
        .fold(f64::INFINITY, f64::min);
    entries.push(entry(
        "log_lower_bound",
        fitted_c > 0.0,
        if fitted_c > 0.0 { None } else { Some(cfg.x_max) },
        fitted_c,
        "largest c with h(y) >= c y ln y on the grid".into(),
    ));

    AuditReport { drift: spec.name(), alpha, entries, nu_fit, lip_trend, fitted_c }
}

/// Concave piecewise-linear `H` through `(x_k, k)` with
/// `x_1 = 1`, `x_{k+1} = exp(exp(exp(x_k)))`, held in tower arithmetic.
#[derive(Debug, Clone)]
pub struct CounterexampleH {
    pub nodes: Vec<Tower>,
}

/// Deepest node index the probe builds.
pub const PROBE_DEPTH_CAP: usize = 8;

impl CounterexampleH {
    pub fn new(count: usize) -> Self {
        let mut nodes = vec![Tower::real(1.0)];
        while nodes.len() < count {
            let last = *nodes.last().unwrap();
            nodes.push(last.iter_exp(3));
        }
        CounterexampleH { nodes }
    }

    /// `H` at node `k` (1-based) is `k`; linear in between.
    pub fn eval(&self, x: &Tower) -> f64 {
        let k = self.nodes.iter().rposition(|n| n.total_cmp(x).is_le()).unwrap_or(0);
        if k + 1 >= self.nodes.len() {
            return self.nodes.len() as f64;
        }
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        if x.total_cmp(&a).is_le() {
            return (k + 1) as f64 - a.sub(x).div(&b.sub(&a)).to_f64();
        }
        (k + 1) as f64 + x.sub(&a).div(&b.sub(&a)).to_f64()
    }

    pub fn inv(&self, y: f64) -> Tower {
        let k = ((y.floor() as usize).max(1) - 1).min(self.nodes.len() - 2);
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        let w = y - (k + 1) as f64;
        if w <= 0.0 {
            return a;
        }
        a.add(&b.sub(&a).mul(&Tower::real(w)))
    }

    /// Slopes `1/(x_{k+1} - x_k)` are nonincreasing.
    pub fn is_concave(&self) -> bool {
        let gaps: Vec<Tower> = self.nodes.windows(2).map(|w| w[1].sub(&w[0])).collect();
        gaps.windows(2).all(|g| g[0].total_cmp(&g[1]).is_le())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleProbe {
    pub n: usize,
    pub x_n: Tower,
    /// `H⁻¹(H(x_n) + 1)`.
    pub next: Tower,
    /// `ln ln( H⁻¹(H(x_n)+1) / exp(exp(x_n^ν)) )`.
    pub ratio_loglog: Tower,
    pub capped: bool,
}

pub fn counterexample_probe(n: usize, nu: f64) -> Result<CounterexampleProbe> {
    if n == 0 {
        return Err(crate::error::Error::InvalidParameter("probe index starts at 1".into()));
    }
    let capped = n > PROBE_DEPTH_CAP;
    let n = n.min(PROBE_DEPTH_CAP);
    let h = CounterexampleH::new(n + 1);
    let x_n = h.nodes[n - 1];
    let next = h.inv(h.eval(&x_n) + 1.0);
    // ln(next) - exp(x_n^ν), then ln
    let ln_next = next.ln();
    let inner = x_n.powf(nu).exp();
    let ratio_loglog = ln_next.sub(&inner).ln();
    Ok(CounterexampleProbe { n, x_n, next, ratio_loglog, capped })
}

/// `E_3(1)`, the second probe node.
pub fn second_probe_node() -> Tower {
    iter_exp(3, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_first_nodes() {
        let p = counterexample_probe(1, 1.9).unwrap();
        assert_eq!(p.x_n.to_f64(), 1.0);
        assert!((p.next.to_f64() / 3.814_279_104_760_214e6 - 1.0).abs() < 1e-12);
        let expected = (std::f64::consts::E.exp() - std::f64::consts::E).ln();
        assert!((p.ratio_loglog.to_f64() - expected).abs() < 1e-12);
        let p2 = counterexample_probe(2, 1.9).unwrap();
        assert!(p2.ratio_loglog > p.ratio_loglog);
        assert!(counterexample_probe(20, 1.9).unwrap().capped);
    }

    #[test]
    fn probe_h_is_concave_with_node_values() {
        let h = CounterexampleH::new(4);
        assert!(h.is_concave());
        for (k, x) in h.nodes.iter().enumerate() {
            assert!((h.eval(x) - (k + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn default_alpha_margin() {
        assert_eq!(default_alpha(0.01), 1.2);
        assert!((default_alpha(1.8) - 1.0).abs() < 1e-12);
    }
}
