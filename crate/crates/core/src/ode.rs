//! Adaptive Dormand–Prince oracle for `ϑ' = h(ϑ)`.
//!
//! Integrated in `u = ln(1 + ϑ/c)`, where the equation reads
//! `u' = exp(ln_rate(u))`. This keeps double-exponential growth inside f64.

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::tower::Tower;

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-12, atol: 1e-20, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OdeResult {
    pub value: Tower,
    pub u: f64,
    pub steps: usize,
}

/// Integrate `ϑ' = h(ϑ)`, `ϑ(0) = x`, up to time `t`.
pub fn flow_ode_oracle(spec: &DriftSpec, t: f64, x: f64) -> Result<OdeResult> {
    flow_ode_with(spec, t, x, OdeOptions::default())
}

pub fn flow_ode_with(spec: &DriftSpec, t: f64, x: f64, opt: OdeOptions) -> Result<OdeResult> {
    if !(t >= 0.0) || !(x >= 0.0) || !x.is_finite() || !t.is_finite() {
        return Err(Error::Domain(format!("oracle needs finite t >= 0 and x >= 0, got ({t}, {x})")));
    }
    if t == 0.0 {
        return Ok(OdeResult { value: Tower::real(x), u: spec.u_of_x(x), steps: 0 });
    }
    let rate = |u: f64| spec.ln_rate(u).exp();
    let mut u = spec.u_of_x(x);
    let mut s = 0.0;
    let mut h = (1e-3 * t).min(1e-2 / rate(u).max(1e-300));
    let mut k = [0.0f64; 7];
    k[0] = rate(u);
    let mut steps = 0;
    while s < t {
        if steps >= opt.max_steps {
            return Err(Error::BlowUp { reached: s, step: h });
        }
        if s + h > t {
            h = t - s;
        }
        for i in 1..7 {
            let mut acc = u;
            for j in 0..i {
                acc += h * A[i][j] * k[j];
            }
            k[i] = rate(acc);
        }
        let mut u5 = u;
        let mut err = 0.0;
        for i in 0..7 {
            u5 += h * B5[i] * k[i];
            err += h * (B5[i] - B4[i]) * k[i];
        }
        if !u5.is_finite() || k.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            if h < 1e-14 * s.max(1.0) {
                return Err(Error::BlowUp { reached: s, step: h });
            }
            k[0] = rate(u);
            continue;
        }
        let sc = opt.atol + opt.rtol * u.abs().max(u5.abs());
        let ratio = err.abs() / sc;
        if ratio <= 1.0 {
            s += h;
            u = u5;
            k[0] = k[6];
            steps += 1;
        }
        let fac = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if s < t && h < 1e-14 * s.max(1.0) {
            return Err(Error::BlowUp { reached: s, step: h });
        }
    }
    let lnc = spec.ln_shift();
    let direct = lnc.exp() * u.exp_m1();
    let value = if direct.is_finite() {
        Tower::real(direct)
    } else {
        Tower::from_ln(lnc + u + (-(-u).exp()).ln_1p())
    };
    Ok(OdeResult { value, u, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn linear_flow() {
        let r = flow_ode_oracle(&DriftSpec::linear(1.0).unwrap(), 1.0, 0.0).unwrap();
        assert!((r.value.to_f64() - (E - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn zero_time() {
        let r = flow_ode_oracle(&DriftSpec::iterated_log(2).unwrap(), 0.0, 7.0).unwrap();
        assert_eq!(r.value.to_f64(), 7.0);
    }

    #[test]
    fn power_blow_up() {
        let s = DriftSpec::power(1.0).unwrap();
        let r = flow_ode_oracle(&s, 0.5, 0.0).unwrap();
        assert!((r.value.to_f64() - 1.0).abs() < 1e-9);
        match flow_ode_oracle(&s, 1.2, 0.0) {
            Err(Error::BlowUp { reached, .. }) => assert!((reached - 1.0).abs() < 1e-6, "{reached}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ilog2_oracle() {
        let r = flow_ode_oracle(&DriftSpec::iterated_log(2).unwrap(), 1.0, 0.0).unwrap();
        let exact = (E * E).exp() - E.exp();
        assert!((r.value.to_f64() / exact - 1.0).abs() < 1e-9);
    }
}
