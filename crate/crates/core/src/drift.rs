//! Drift pairs `(f, h)` with `|f(u)| <= h(|u|)`.
//!
//! Every `h` here has the form `h(x) = (x + c) * r(ln(x + c))` for a shift
//! `c > 0`. The transform and the flow work in the coordinate
//! `u = ln(1 + x/c)`, which keeps full precision near zero even when `c` is
//! astronomically large.

use crate::error::{Error, Result};
use crate::tower::iter_exp;
use serde::{Deserialize, Serialize};
use std::f64::consts::E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDrift {
    /// Abscissae for `h`, ascending and starting at 0.
    pub hx: Vec<f64>,
    pub hv: Vec<f64>,
    /// Abscissae for `f`, ascending.
    pub fx: Vec<f64>,
    pub fv: Vec<f64>,
}

impl TableDrift {
    pub fn new(hx: Vec<f64>, hv: Vec<f64>, fx: Vec<f64>, fv: Vec<f64>) -> Result<Self> {
        if hx.len() < 2 || hx.len() != hv.len() || fx.len() < 2 || fx.len() != fv.len() {
            return Err(Error::InvalidParameter("drift table needs matching columns of length >= 2".into()));
        }
        if hx[0] != 0.0 {
            return Err(Error::InvalidParameter("h table must start at x = 0".into()));
        }
        if !hx.windows(2).all(|w| w[0] < w[1]) || !fx.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("table abscissae must be strictly increasing".into()));
        }
        if hv.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("h table values must be positive".into()));
        }
        Ok(TableDrift { hx, hv, fx, fv })
    }

    fn h(&self, x: f64) -> f64 {
        interp(&self.hx, &self.hv, x, true)
    }

    fn f(&self, u: f64) -> f64 {
        interp(&self.fx, &self.fv, u, false)
    }

    /// Largest segment slope of the piecewise-linear `f` over `[-r, r]`.
    fn lipschitz(&self, r: f64) -> f64 {
        let mut l: f64 = 0.0;
        for i in 0..self.fx.len() - 1 {
            let (a, b) = (self.fx[i], self.fx[i + 1]);
            if b >= -r && a <= r {
                l = l.max(((self.fv[i + 1] - self.fv[i]) / (b - a)).abs());
            }
        }
        l
    }
}

/// Piecewise-linear interpolation; beyond the last node either extend the last
/// slope (`extend`) or hold the end value.
fn interp(xs: &[f64], ys: &[f64], x: f64, extend: bool) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        if extend {
            let s = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
            return ys[n - 1] + s * (x - xs[n - 1]);
        }
        return ys[n - 1];
    }
    let i = xs.partition_point(|v| *v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DriftKind {
    /// `h_n(x) = s * L_1(s) * ... * L_{n-1}(s)` with `s = x + E_n(1)`, `f = odd extension`.
    IteratedLog { n: u32 },
    /// `f(u) = λu`, `h(x) = |λ|x + 1`.
    LinearTest { lambda: f64 },
    /// `f(u) = h(|u|) = (1 + |u|)^{1+δ}`.
    PowerTest { delta: f64 },
    /// `f(u) = u ln(e + |u|)`, `h(x) = (x + e) ln(x + e)`.
    ULog,
    Table(TableDrift),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Coefficient `a` of the added term `a * x * ln(e + x)` in `h`.
    pub log_adjust: f64,
    /// Exponent `p` of the polynomial growth bound `h(x) <= C(1 + x^p)`.
    pub poly_p: f64,
    ln_c: f64,
}

/// Which component of the drift to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    F,
    H,
    L,
}

/// Result of a drift evaluation. When `saturated`, `value` is `f64::MAX`
/// (with sign) and `ln_value` carries the magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftValue {
    pub value: f64,
    pub ln_value: f64,
    pub saturated: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl DriftSpec {
    pub fn new(kind: DriftKind) -> Result<Self> {
        let (ln_c, p) = match &kind {
            DriftKind::IteratedLog { n } => {
                if *n == 0 || *n > 4 {
                    return Err(Error::InvalidParameter(format!(
                        "iterated-log drift needs 1 <= n <= 4, got {n}; larger n only via the closed-form family"
                    )));
                }
                let lnc = iter_exp(*n - 1, 1.0).to_f64();
                (lnc, if *n == 1 { 1.0 } else { 2.0 })
            }
            DriftKind::LinearTest { lambda } => {
                if !lambda.is_finite() {
                    return Err(Error::InvalidParameter("lambda must be finite".into()));
                }
                (0.0, 1.0)
            }
            DriftKind::PowerTest { delta } => {
                if !(*delta >= 0.0) || !delta.is_finite() {
                    return Err(Error::InvalidParameter("power delta must be >= 0".into()));
                }
                (0.0, 1.0 + delta)
            }
            DriftKind::ULog => (1.0, 2.0),
            DriftKind::Table(_) => (0.0, 2.0),
        };
        Ok(DriftSpec { kind, log_adjust: 0.0, poly_p: p, ln_c })
    }

    pub fn iterated_log(n: u32) -> Result<Self> {
        Self::new(DriftKind::IteratedLog { n })
    }

    pub fn linear(lambda: f64) -> Result<Self> {
        Self::new(DriftKind::LinearTest { lambda })
    }

    pub fn power(delta: f64) -> Result<Self> {
        Self::new(DriftKind::PowerTest { delta })
    }

    pub fn ulog() -> Self {
        Self::new(DriftKind::ULog).expect("ulog drift")
    }

    /// Drift by family name and parameter list, as used in experiment configs.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let p0 = |d: f64| params.first().copied().unwrap_or(d);
        match name {
            "ilog" | "iterated-log" => {
                let n = p0(2.0);
                if n.fract() != 0.0 || n < 1.0 {
                    return Err(Error::InvalidParameter(format!("iterated-log order must be a positive integer, got {n}")));
                }
                Self::iterated_log(n as u32)
            }
            "linear" | "linear-test" => Self::linear(p0(1.0)),
            "power" | "power-test" => Self::power(p0(1.0)),
            "ulog" => Ok(Self::ulog()),
            "zero" => Self::linear(0.0),
            _ => Err(Error::InvalidParameter(format!("unknown drift family '{name}'"))),
        }
    }

    /// Add `a * x * ln(e + x)` to `h`; `f` is unchanged.
    pub fn with_log_adjust(mut self, a: f64) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter("log adjustment must be >= 0".into()));
        }
        self.log_adjust = a;
        if a > 0.0 {
            self.poly_p = self.poly_p.max(2.0);
        }
        Ok(self)
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DriftKind::IteratedLog { n } => format!("ilog(n={n})"),
            DriftKind::LinearTest { lambda } => format!("linear(lambda={lambda})"),
            DriftKind::PowerTest { delta } => format!("power(delta={delta})"),
            DriftKind::ULog => "ulog".into(),
            DriftKind::Table(_) => "table".into(),
        }
    }

    /// `ln c` for the shift `c` of the transform coordinate.
    pub fn ln_shift(&self) -> f64 {
        self.ln_c
    }

    /// Is `f` identically zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DriftKind::LinearTest { lambda } if lambda == 0.0)
    }

    pub fn f(&self, u: f64) -> f64 {
        match &self.kind {
            DriftKind::IteratedLog { n } => {
                let s_ln = self.ln_c + (u.abs() * (-self.ln_c).exp()).ln_1p();
                let mut prod = 1.0;
                let mut lk = s_ln;
                for _ in 1..*n {
                    prod *= lk;
                    lk = lk.ln();
                }
                u * prod
            }
            DriftKind::LinearTest { lambda } => lambda * u,
            DriftKind::PowerTest { delta } => (1.0 + u.abs()).powf(1.0 + delta),
            DriftKind::ULog => u * (E + u.abs()).ln(),
            DriftKind::Table(t) => t.f(u),
        }
    }

    fn ln_h_base(&self, x: f64) -> f64 {
        match &self.kind {
            DriftKind::IteratedLog { n } => {
                let s_ln = self.ln_c + (x * (-self.ln_c).exp()).ln_1p();
                let mut acc = s_ln;
                let mut lk = s_ln;
                for _ in 1..*n {
                    acc += lk.ln();
                    lk = lk.ln();
                }
                acc
            }
            DriftKind::LinearTest { lambda } => (lambda.abs() * x).ln_1p(),
            DriftKind::PowerTest { delta } => (1.0 + delta) * x.ln_1p(),
            DriftKind::ULog => (x + E).ln() + (x + E).ln().ln(),
            DriftKind::Table(t) => t.h(x).ln(),
        }
    }

    /// `ln h(x)` for `x >= 0`, finite even when `h(x)` is not representable.
    pub fn ln_h(&self, x: f64) -> f64 {
        let b = self.ln_h_base(x);
        if self.log_adjust > 0.0 && x > 0.0 {
            log_sum_exp(b, self.log_adjust.ln() + x.ln() + (E + x).ln().ln())
        } else {
            b
        }
    }

    /// `h(x)`, `+inf` when beyond f64.
    pub fn h(&self, x: f64) -> f64 {
        self.ln_h(x).exp()
    }

    /// Local Lipschitz constant of `f` on `[-r, r]`.
    pub fn lipschitz(&self, r: f64) -> f64 {
        match &self.kind {
            DriftKind::IteratedLog { n } => {
                let s_ln = self.ln_c + (r * (-self.ln_c).exp()).ln_1p();
                let mut prod = *n as f64;
                let mut lk = s_ln;
                for _ in 1..*n {
                    prod *= lk;
                    lk = lk.ln();
                }
                prod
            }
            DriftKind::LinearTest { lambda } => lambda.abs(),
            DriftKind::PowerTest { delta } => (1.0 + delta) * (1.0 + r).powf(*delta),
            DriftKind::ULog => (E + r).ln() + r / (E + r),
            DriftKind::Table(t) => t.lipschitz(r),
        }
    }

    /// `ln( h(x) / (x + c) )` expressed through `u = ln(1 + x/c)`.
    pub fn ln_rate(&self, u: f64) -> f64 {
        let y = self.ln_c + u;
        let base = match &self.kind {
            DriftKind::IteratedLog { n } => {
                let mut acc = 0.0;
                let mut lk = y;
                for _ in 1..*n {
                    acc += lk.ln();
                    lk = lk.ln();
                }
                acc
            }
            DriftKind::LinearTest { lambda } => {
                let l = lambda.abs();
                (l + (1.0 - l) * (-y).exp()).ln()
            }
            DriftKind::PowerTest { delta } => delta * y,
            DriftKind::ULog => y.ln(),
            DriftKind::Table(t) => t.h(u.exp_m1()).ln() - u,
        };
        if self.log_adjust > 0.0 && u > 0.0 {
            // a * (x / (x + c)) * ln(e + x), with ln(e + x) = y + ln1p((e - c) e^{-y})
            let frac = -(-u).exp_m1();
            let c = self.ln_c.exp();
            let lnex = if c.is_finite() { y + ((E - c) * (-y).exp()).ln_1p() } else { y };
            log_sum_exp(base, self.log_adjust.ln() + frac.ln() + lnex.ln())
        } else {
            base
        }
    }

    /// `x` for transform coordinate `u`; `+inf` when not representable.
    pub fn x_of_u(&self, u: f64) -> f64 {
        self.ln_c.exp() * u.exp_m1()
    }

    /// `u = ln(1 + x/c)`.
    pub fn u_of_x(&self, x: f64) -> f64 {
        (x * (-self.ln_c).exp()).ln_1p()
    }
}

/// Evaluate `f`, `h` or `L` at `x`.
pub fn eval_drift(spec: &DriftSpec, which: Which, x: f64) -> Result<DriftValue> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("drift argument must be finite, got {x}")));
    }
    if which != Which::F && x < 0.0 {
        return Err(Error::Domain(format!("h and L need x >= 0, got {x}")));
    }
    let pack = |v: f64, lnv: f64| {
        if v.is_finite() {
            DriftValue { value: v, ln_value: lnv, saturated: false }
        } else {
            DriftValue { value: f64::MAX.copysign(v), ln_value: lnv, saturated: true }
        }
    };
    Ok(match which {
        Which::F => {
            let v = spec.f(x);
            pack(v, v.abs().ln())
        }
        Which::H => {
            let l = spec.ln_h(x);
            pack(l.exp(), l)
        }
        Which::L => {
            let v = spec.lipschitz(x);
            pack(v, v.ln())
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ilog2_at_zero() {
        let s = DriftSpec::iterated_log(2).unwrap();
        let v = eval_drift(&s, Which::H, 0.0).unwrap();
        assert!((v.value - (E + 1.0).exp()).abs() < 1e-12 * v.value);
        assert!((s.f(0.0)).abs() == 0.0);
        assert!(s.f(3.0).abs() <= s.h(3.0));
    }

    #[test]
    fn linear_h() {
        let s = DriftSpec::linear(1.0).unwrap();
        assert!((s.h(4.0) - 5.0).abs() < 1e-12);
        assert_eq!(s.f(-2.0), -2.0);
    }

    #[test]
    fn rate_matches_h() {
        let specs = [
            DriftSpec::iterated_log(2).unwrap(),
            DriftSpec::iterated_log(3).unwrap(),
            DriftSpec::linear(0.5).unwrap(),
            DriftSpec::power(1.0).unwrap(),
            DriftSpec::ulog(),
            DriftSpec::linear(1.0).unwrap().with_log_adjust(0.3).unwrap(),
            DriftSpec::iterated_log(2).unwrap().with_log_adjust(1.0).unwrap(),
        ];
        for s in &specs {
            for x in [0.0, 0.5, 3.0, 100.0, 1e6] {
                let u = s.u_of_x(x);
                let lhs = s.ln_rate(u) + (x + s.ln_shift().exp()).ln();
                assert!((lhs - s.ln_h(x)).abs() < 1e-11 * (1.0 + lhs.abs()), "{} at {x}", s.name());
            }
        }
    }

    #[test]
    fn ilog4_stays_in_log_domain() {
        let s = DriftSpec::iterated_log(4).unwrap();
        let v = eval_drift(&s, Which::H, 1.0).unwrap();
        assert!(v.saturated);
        assert!(v.ln_value > 3.8e6);
        assert!(DriftSpec::iterated_log(5).is_err());
    }

    #[test]
    fn negative_argument_for_h_is_domain_error() {
        let s = DriftSpec::ulog();
        assert!(matches!(eval_drift(&s, Which::H, -1.0), Err(Error::Domain(_))));
        assert!(eval_drift(&s, Which::F, -1.0).is_ok());
    }

    #[test]
    fn table_drift_interpolates() {
        let t = TableDrift::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 4.0], vec![-2.0, 0.0, 2.0], vec![-4.0, 0.0, 4.0]).unwrap();
        let s = DriftSpec::new(DriftKind::Table(t)).unwrap();
        assert!((s.h(1.5) - 3.0).abs() < 1e-12);
        assert!((s.h(3.0) - 6.0).abs() < 1e-12);
        assert_eq!(s.lipschitz(1.0), 2.0);
        assert_eq!(s.f(5.0), 4.0);
    }
}
