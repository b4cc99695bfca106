//! The α-scaled drift `h_α(x) = h(x^α) / x^{α-1}` and the convexity split
//! `h(ρq) <= q h_α(ρ) + ρ h_β(q)`, `β = α/(α-1)`.

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::tower::Tower;
use crate::transform::OsgoodTransform;
use std::sync::Arc;

/// Smallest argument used for `h_α`; below it the value at the cap is returned.
pub const X_FLOOR: f64 = 1e-12;

/// `ln h` at a magnitude given as a tower.
pub fn ln_h_tower(spec: &DriftSpec, x: &Tower) -> f64 {
    if x.depth == 0 {
        return spec.ln_h(x.top);
    }
    let lnc = spec.ln_shift();
    let lx = x.ln_f64();
    let d = lx - lnc;
    let u = if d > 0.0 { d + (-d).exp().ln_1p() } else { d.exp().ln_1p() };
    spec.ln_rate(u) + lnc + u
}

/// `ln h_α(x)`.
pub fn ln_h_alpha(spec: &DriftSpec, alpha: f64, x: f64) -> f64 {
    let x = x.max(X_FLOOR);
    ln_h_tower(spec, &Tower::real(x).powf(alpha)) - (alpha - 1.0) * x.ln()
}

#[derive(Debug, Clone)]
pub struct AlphaScaledDrift {
    alpha: f64,
    transform: Arc<OsgoodTransform>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    HAlpha,
    BigHAlpha,
    BigHAlphaInv,
}

impl AlphaScaledDrift {
    pub fn new(alpha: f64, transform: Arc<OsgoodTransform>) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must exceed 1, got {alpha}")));
        }
        Ok(AlphaScaledDrift { alpha, transform })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn transform(&self) -> &OsgoodTransform {
        &self.transform
    }

    pub fn spec(&self) -> &DriftSpec {
        self.transform.spec()
    }

    /// Same parent, exponent `α/(α-1)`.
    pub fn conjugate(&self) -> AlphaScaledDrift {
        AlphaScaledDrift { alpha: self.alpha / (self.alpha - 1.0), transform: self.transform.clone() }
    }

    pub fn h_alpha(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("h_alpha needs x >= 0, got {x}")));
        }
        Ok(ln_h_alpha(self.spec(), self.alpha, x).exp())
    }

    /// `H_α(x) = H(x^α)/α`.
    pub fn big_h_alpha(&self, x: &Tower) -> Result<f64> {
        if x.depth == 0 && !(x.top >= 0.0) {
            return Err(Error::Domain(format!("H_alpha needs x >= 0, got {}", x.top)));
        }
        Ok(self.transform.eval_tower(&x.powf(self.alpha))? / self.alpha)
    }

    /// `H_α⁻¹(y) = H⁻¹(α y)^{1/α}`.
    pub fn big_h_alpha_inv(&self, y: f64) -> Result<Tower> {
        Ok(self.transform.invert(self.alpha * y)?.powf(1.0 / self.alpha))
    }

    /// `H_α⁻¹(H_α(r) + t)`.
    pub fn flow(&self, t: f64, r: f64) -> Result<Tower> {
        if t == 0.0 {
            return Ok(Tower::real(r));
        }
        let f = self.transform.flow_tower(self.alpha * t, &Tower::real(r).powf(self.alpha))?;
        Ok(f.value.powf(1.0 / self.alpha))
    }

    pub fn eval(&self, mode: AlphaMode, x: f64) -> Result<f64> {
        match mode {
            AlphaMode::HAlpha => self.h_alpha(x),
            AlphaMode::BigHAlpha => self.big_h_alpha(&Tower::real(x)),
            AlphaMode::BigHAlphaInv => {
                let v = self.big_h_alpha_inv(x)?;
                if v.is_finite_f64() {
                    Ok(v.to_f64())
                } else {
                    Err(Error::Overflow(format!("H_alpha^-1({x}) = {v}")))
                }
            }
        }
    }
}

/// Sampled convexity of a function given by `ln` values on ascending `xs`.
/// Returns the first violating abscissa and the normalized slope drop.
pub fn convexity_witness(xs: &[f64], ln_vals: &[f64], rel_tol: f64) -> Option<(f64, f64)> {
    let m = ln_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = ln_vals.iter().map(|l| (l - m).exp()).collect();
    let s: Vec<f64> = (0..xs.len() - 1).map(|i| (v[i + 1] - v[i]) / (xs[i + 1] - xs[i])).collect();
    for i in 1..s.len() {
        let drop = s[i] - s[i - 1];
        // rounding of the sampled values, including the exp of ln values
        let dx = (xs[i + 1] - xs[i]).min(xs[i] - xs[i - 1]);
        let lmag = 1.0 + ln_vals[i].abs().max(m.abs());
        let floor = 8.0 * f64::EPSILON * lmag * (v[i + 1] + v[i] + v[i - 1]) / dx;
        if drop < -rel_tol * (s[i].abs() + s[i - 1].abs()) - floor {
            return Some((xs[i], drop / (s[i].abs() + s[i - 1].abs()).max(f64::MIN_POSITIVE)));
        }
    }
    None
}

/// Geometric grid on `[lo, hi]` with `n` points.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Residual of the convexity split, normalized by the largest term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitResidual {
    /// `residual / scale`.
    pub normalized: f64,
    /// `ln scale`.
    pub ln_scale: f64,
}

impl SplitResidual {
    /// Residual in absolute units; infinite scale gives `±inf` or 0.
    pub fn residual(&self) -> f64 {
        self.normalized * self.ln_scale.exp()
    }
}

/// Checker for `q h_α(ρ) + ρ h_β(q) - h(ρq) >= 0` after certifying convexity of `h`.
#[derive(Debug, Clone)]
pub struct ConvexitySplit {
    spec: DriftSpec,
    alpha: f64,
    beta: f64,
}

impl ConvexitySplit {
    pub fn new(spec: &DriftSpec, alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must exceed 1, got {alpha}")));
        }
        let mut xs = vec![0.0];
        xs.extend(geometric_grid(1e-6, 1e8, 600));
        let ln: Vec<f64> = xs.iter().map(|x| spec.ln_h(*x)).collect();
        if let Some((x, value)) = convexity_witness(&xs, &ln, 1e-9) {
            return Err(Error::NonConvex { x, value });
        }
        Ok(ConvexitySplit { spec: spec.clone(), alpha, beta: alpha / (alpha - 1.0) })
    }

    pub fn residual(&self, rho: f64, q: f64) -> Result<SplitResidual> {
        if !(rho > 0.0) || !(q > 0.0) {
            return Err(Error::Domain(format!("split needs rho, q > 0, got ({rho}, {q})")));
        }
        let la = q.ln() + ln_h_alpha(&self.spec, self.alpha, rho);
        let lb = rho.ln() + ln_h_alpha(&self.spec, self.beta, q);
        let lc = self.spec.ln_h(rho * q);
        let m = la.max(lb).max(lc);
        let normalized = (la - m).exp() + (lb - m).exp() - (lc - m).exp();
        Ok(SplitResidual { normalized, ln_scale: m })
    }
}

/// `q h_α(ρ) + ρ h_{α/(α-1)}(q) - h(ρq)`.
pub fn convexity_split_check(spec: &DriftSpec, alpha: f64, rho: f64, q: f64) -> Result<SplitResidual> {
    ConvexitySplit::new(spec, alpha)?.residual(rho, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{DriftKind, TableDrift};
    use crate::transform::TransformConfig;

    fn square_drift() -> DriftSpec {
        // h(x) = x^2 sampled finely enough that interpolation is exact at test points
        let hx: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.05).collect();
        let hv: Vec<f64> = hx.iter().map(|x| (x * x).max(1e-300)).collect();
        let t = TableDrift::new(hx, hv, vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
        DriftSpec::new(DriftKind::Table(t)).unwrap()
    }

    #[test]
    fn split_reduces_to_am_gm() {
        let r = ConvexitySplit::new(&square_drift(), 2.0).unwrap().residual(2.0, 2.0).unwrap();
        assert!((r.residual() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn split_at_one_is_h_of_one() {
        let s = DriftSpec::iterated_log(2).unwrap();
        let r = convexity_split_check(&s, 1.5, 1.0, 1.0).unwrap();
        assert!((r.residual() - s.h(1.0)).abs() < 1e-9 * s.h(1.0));
    }

    #[test]
    fn h_alpha_power_algebra() {
        let s = square_drift();
        assert!((ln_h_alpha(&s, 2.0, 3.0).exp() - 27.0).abs() < 1e-9);
    }

    #[test]
    fn linear_big_h_alpha() {
        let t = Arc::new(OsgoodTransform::build(&DriftSpec::linear(1.0).unwrap(), TransformConfig::default()).unwrap());
        let a = AlphaScaledDrift::new(2.0, t).unwrap();
        let v = a.eval(AlphaMode::BigHAlpha, 1.0).unwrap();
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn h_alpha_round_trip() {
        let t = Arc::new(OsgoodTransform::build(&DriftSpec::iterated_log(2).unwrap(), TransformConfig::default()).unwrap());
        let a = AlphaScaledDrift::new(1.5, t).unwrap();
        let y = a.eval(AlphaMode::BigHAlpha, 5.0).unwrap();
        assert!((a.eval(AlphaMode::BigHAlphaInv, y).unwrap() - 5.0).abs() < 1e-8);
        assert!(a.h_alpha(0.0).unwrap() > 0.0);
    }

    #[test]
    fn non_convex_is_rejected() {
        let t = TableDrift::new(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 4.0], vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let s = DriftSpec::new(DriftKind::Table(t)).unwrap();
        assert!(matches!(ConvexitySplit::new(&s, 2.0), Err(Error::NonConvex { .. })));
    }
}
