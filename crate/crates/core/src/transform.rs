//! Tabulated `H(x) = ∫_0^x dy / h(y)` with a certified inverse and the flow
//! `ϑ(t, x) = H⁻¹(H(x) + t)`.
//!
//! The table lives in `u = ln(1 + x/c)`, where `dH/du = exp(-ln_rate(u))`.
//! Panels are uniform in `u` near the origin and grow geometrically, so a
//! cap of `u` far beyond f64 range in `x` is cheap.

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::tower::Tower;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    /// Domain cap in `x`.
    pub x_max: f64,
    /// Optional cap in `u = ln(1 + x/c)`; the table covers `max` of both.
    pub u_cap: Option<f64>,
    /// Absolute quadrature tolerance per panel.
    pub tol: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig { x_max: 1e8, u_cap: None, tol: 1e-10 }
    }
}

impl TransformConfig {
    pub fn with_u_cap(u_cap: f64) -> Self {
        TransformConfig { u_cap: Some(u_cap), ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct OsgoodTransform {
    spec: DriftSpec,
    cfg: TransformConfig,
    nodes: Vec<f64>,
    values: Vec<f64>,
    panel_err: Vec<f64>,
}

/// Flow value with its transform coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowValue {
    pub value: Tower,
    pub u: f64,
    /// The value is not representable as an f64.
    pub saturated: bool,
}

const H0: f64 = 1.0 / 16.0;

impl OsgoodTransform {
    pub fn build(spec: &DriftSpec, cfg: TransformConfig) -> Result<Self> {
        if !(cfg.tol > 0.0) || !(cfg.x_max > 0.0) {
            return Err(Error::InvalidParameter("transform needs tol > 0 and x_max > 0".into()));
        }
        let mut u_end = spec.u_of_x(cfg.x_max);
        if let Some(c) = cfg.u_cap {
            u_end = u_end.max(c);
        }
        if !(u_end > 0.0) || !u_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "transform range is empty for {} (shift e^{}); set a log cap",
                spec.name(),
                spec.ln_shift()
            )));
        }
        let mut nodes = vec![0.0];
        let mut b = 0.0f64;
        while b < u_end {
            let step = H0 * (b / 16.0).max(1.0);
            b = (b + step).min(u_end);
            if u_end - b < 1e-3 * step {
                b = u_end;
            }
            nodes.push(b);
        }
        let g = |u: f64| (-spec.ln_rate(u)).exp();
        let mut values = Vec::with_capacity(nodes.len());
        let mut panel_err = Vec::with_capacity(nodes.len() - 1);
        values.push(0.0);
        let mut acc = 0.0;
        for w in nodes.windows(2) {
            let r = integrate(&g, w[0], w[1], cfg.tol)?;
            acc += r.value;
            values.push(acc);
            panel_err.push(r.err);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature { a: 0.0, b: u_end, err: f64::INFINITY });
        }
        Ok(OsgoodTransform { spec: spec.clone(), cfg, nodes, values, panel_err })
    }

    pub fn spec(&self) -> &DriftSpec {
        &self.spec
    }

    pub fn config(&self) -> &TransformConfig {
        &self.cfg
    }

    pub fn nodes_u(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_panel_error(&self) -> f64 {
        self.panel_err.iter().cloned().fold(0.0, f64::max)
    }

    pub fn u_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn h_end(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `dH/du`.
    pub fn density(&self, u: f64) -> f64 {
        (-self.spec.ln_rate(u)).exp()
    }

    /// `H` at transform coordinate `u`.
    pub fn h_of_u(&self, u: f64) -> Result<f64> {
        let end = self.u_end();
        if !(u >= 0.0) || u > end {
            return Err(Error::OutOfRange { value: u, lo: 0.0, hi: end });
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        let i = (self.nodes.partition_point(|v| *v <= u) - 1).min(self.nodes.len() - 2);
        let g = |s: f64| self.density(s);
        let r = integrate(&g, self.nodes[i], u, self.cfg.tol)?;
        Ok(self.values[i] + r.value)
    }

    /// `H(x)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("H needs x >= 0, got {x}")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        self.h_of_u(self.spec.u_of_x(x)).map_err(|e| self.x_range(e))
    }

    /// `H(x)` for a magnitude given as a tower.
    pub fn eval_tower(&self, x: &Tower) -> Result<f64> {
        self.h_of_u(self.u_of_tower(x)).map_err(|e| self.x_range(e))
    }

    fn x_range(&self, e: Error) -> Error {
        match e {
            Error::OutOfRange { value, .. } => Error::OutOfRange {
                value: self.x_of_u(value).to_f64(),
                lo: 0.0,
                hi: self.x_of_u(self.u_end()).to_f64(),
            },
            other => other,
        }
    }

    /// `u` for `x` given as a tower.
    pub fn u_of_tower(&self, x: &Tower) -> f64 {
        if x.depth == 0 {
            return self.spec.u_of_x(x.top);
        }
        let lx = x.ln_f64();
        let d = lx - self.spec.ln_shift();
        if d > 0.0 {
            d + (-d).exp().ln_1p()
        } else {
            d.exp().ln_1p()
        }
    }

    /// `x = c (e^u - 1)` as a tower.
    pub fn x_of_u(&self, u: f64) -> Tower {
        let lnc = self.spec.ln_shift();
        let em = u.exp_m1();
        let direct = lnc.exp() * em;
        if direct.is_finite() {
            return Tower::real(direct);
        }
        let ln_em = if u > 30.0 { u + (-(-u).exp()).ln_1p() } else { em.ln() };
        Tower::from_ln(lnc + ln_em)
    }

    /// Transform coordinate `u` with `H(u) = target`.
    pub fn inv_u(&self, target: f64) -> Result<f64> {
        let hi = self.h_end();
        if !(target >= 0.0) || target > hi {
            return Err(Error::OutOfRange { value: target, lo: 0.0, hi });
        }
        if target == 0.0 {
            return Ok(0.0);
        }
        let i = (self.values.partition_point(|v| *v <= target).max(1) - 1).min(self.nodes.len() - 2);
        let (mut a, mut b) = (self.nodes[i], self.nodes[i + 1]);
        let base = self.values[i];
        let g = |s: f64| self.density(s);
        let a0 = a;
        let part = |u: f64| -> Result<f64> { Ok(base + integrate(&g, a0, u, self.cfg.tol)?.value) };
        // bracketed bisection to 1e-3
        while b - a > 1e-3 * a.max(1e-3) {
            let m = 0.5 * (a + b);
            if part(m)? < target {
                a = m;
            } else {
                b = m;
            }
        }
        // Newton polish, derivative known exactly
        let mut u = 0.5 * (a + b);
        for _ in 0..30 {
            let r = part(u)? - target;
            let mut next = u - r / self.density(u);
            if !(next > a && next < b) {
                if r > 0.0 {
                    b = u;
                } else {
                    a = u;
                }
                next = 0.5 * (a + b);
            } else if r > 0.0 {
                b = u;
            } else {
                a = u;
            }
            let du = (next - u).abs();
            u = next;
            if du <= 4.0 * f64::EPSILON * u.abs() || b - a <= 4.0 * f64::EPSILON * u.abs() {
                break;
            }
        }
        Ok(u)
    }

    /// `H⁻¹(y)`.
    pub fn invert(&self, y: f64) -> Result<Tower> {
        Ok(self.x_of_u(self.inv_u(y)?))
    }

    /// `ϑ(t, x) = H⁻¹(H(x) + t)`.
    pub fn flow(&self, t: f64, x: f64) -> Result<FlowValue> {
        self.flow_tower(t, &Tower::real(x))
    }

    pub fn flow_tower(&self, t: f64, x: &Tower) -> Result<FlowValue> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("flow time must be >= 0, got {t}")));
        }
        if x.depth == 0 && !(x.top >= 0.0) {
            return Err(Error::Domain(format!("flow start must be >= 0, got {}", x.top)));
        }
        let u0 = self.u_of_tower(x);
        if t == 0.0 {
            return Ok(FlowValue { value: *x, u: u0, saturated: !x.is_finite_f64() });
        }
        let h0 = self.h_of_u(u0).map_err(|e| self.x_range(e))?;
        let u = self.inv_u(h0 + t)?;
        let value = self.x_of_u(u);
        Ok(FlowValue { value, u, saturated: !value.is_finite_f64() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family;
    use std::f64::consts::E;

    #[test]
    fn linear_transform_is_log() {
        let t = OsgoodTransform::build(&DriftSpec::linear(1.0).unwrap(), TransformConfig::default()).unwrap();
        assert!((t.eval(E - 1.0).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(t.eval(0.0).unwrap(), 0.0);
        assert!((t.invert(1.0).unwrap().to_f64() - (E - 1.0)).abs() < 1e-12);
        let f = t.flow(1.0, 0.0).unwrap();
        assert!((f.value.to_f64() - (E - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn ilog2_closed_form() {
        let t = OsgoodTransform::build(&DriftSpec::iterated_log(2).unwrap(), TransformConfig::default()).unwrap();
        for x in [0.0, 1.0, 37.0, 1e5] {
            let exact = family::big_h(2, &Tower::real(x));
            assert!((t.eval(x).unwrap() - exact).abs() < 1e-12, "x={x}");
        }
        let f = t.flow(1.0, 0.0).unwrap();
        let exact = (E * E).exp() - E.exp();
        assert!((f.value.to_f64() - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn ilog3_small_x_relative() {
        let t = OsgoodTransform::build(&DriftSpec::iterated_log(3).unwrap(), TransformConfig::default()).unwrap();
        let exact = family::big_h(3, &Tower::real(10.0));
        assert!((t.eval(10.0).unwrap() / exact - 1.0).abs() < 1e-8);
    }

    #[test]
    fn out_of_range_carries_bounds() {
        let t = OsgoodTransform::build(&DriftSpec::power(1.0).unwrap(), TransformConfig::default()).unwrap();
        assert!(t.h_end() < 1.0);
        match t.invert(1.5) {
            Err(Error::OutOfRange { hi, .. }) => assert!(hi < 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_cap_reaches_beyond_f64() {
        let cfg = TransformConfig::with_u_cap(1e9);
        let t = OsgoodTransform::build(&DriftSpec::iterated_log(3).unwrap(), cfg).unwrap();
        let f = t.flow(2.0, 1.0).unwrap();
        assert!(f.saturated);
        let exact = family::theta(3, 2.0, &Tower::real(1.0));
        assert!(crate::tower::rel_agreement(&f.value, &exact) < 1e-9);
    }
}
