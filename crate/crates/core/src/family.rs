//! Closed forms for the iterated-logarithm family.
//!
//! With `s = x + E_n(1)`:
//! `h_n(x) = s L_1(s) ... L_{n-1}(s)`, `H_n(x) = L_n(s) - 1`,
//! `θ_n(t, x) = E_n(L_n(s) + t) - E_n(1)`.
//!
//! `H_n` is computed through the chain `δ_1 = ln(1 + x/E_n(1))`,
//! `δ_k = ln(1 + δ_{k-1}/E_{n-k+1}(1))`, `H_n = δ_n`, and inverted the same
//! way, so small arguments keep full relative precision for any `n`.

use crate::error::{Error, Result};
use crate::tower::{iter_exp, Tower};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyMode {
    /// `h_n(x)`
    SmallH,
    /// `H_n(x)`
    BigH,
    /// `H_n^{-1}(x)`
    BigHInv,
    /// `θ_n(t, x)`
    Theta,
    /// `L_n(x)`
    L,
    /// `E_n(x)`
    E,
}

fn ln1p_tower(x: &Tower) -> Tower {
    if x.depth == 0 {
        Tower::real(x.top.ln_1p())
    } else {
        x.ln()
    }
}

fn expm1_tower(x: &Tower) -> Tower {
    if x.depth == 0 && x.top < 700.0 {
        Tower::real(x.top.exp_m1())
    } else {
        x.exp()
    }
}

/// `H_n(x)` as an f64; exact zero at `x = 0`.
pub fn big_h(n: u32, x: &Tower) -> f64 {
    let mut d = *x;
    for k in 0..n {
        // divide by E_{n-k}(1)
        let e = iter_exp(n - k, 1.0);
        d = ln1p_tower(&d.div(&e));
    }
    d.to_f64()
}

/// `H_n^{-1}(y)` for `y >= 0`.
pub fn big_h_inv(n: u32, y: f64) -> Tower {
    let mut d = Tower::real(y);
    for k in (0..n).rev() {
        let e = iter_exp(n - k, 1.0);
        d = e.mul(&expm1_tower(&d));
    }
    d
}

/// `ln h_n(x) = Σ_{k=1}^{n} L_k(s)` as a tower.
pub fn ln_small_h(n: u32, x: &Tower) -> Tower {
    let s = x.add(&iter_exp(n, 1.0));
    let mut acc = Tower::real(0.0);
    let mut lk = s;
    for _ in 0..n {
        lk = lk.ln();
        acc = acc.add(&lk);
    }
    acc
}

/// `θ_n(t, x) = H_n^{-1}(H_n(x) + t)`; identity at `t = 0`.
pub fn theta(n: u32, t: f64, x: &Tower) -> Tower {
    if t == 0.0 {
        return *x;
    }
    big_h_inv(n, big_h(n, x) + t)
}

/// Evaluate the family in log-domain-capable arithmetic.
pub fn iterated_family(n: u32, mode: FamilyMode, t: f64, x: f64) -> Result<Tower> {
    if n == 0 {
        return Err(Error::InvalidParameter("family order n must be >= 1".into()));
    }
    if !x.is_finite() || !t.is_finite() {
        return Err(Error::Domain("family arguments must be finite".into()));
    }
    let needs_nonneg = !matches!(mode, FamilyMode::E);
    if needs_nonneg && x < 0.0 {
        return Err(Error::Domain(format!("family argument must be >= 0, got {x}")));
    }
    if mode == FamilyMode::Theta && t < 0.0 {
        return Err(Error::Domain("flow time must be >= 0".into()));
    }
    let xt = Tower::real(x);
    Ok(match mode {
        FamilyMode::SmallH => ln_small_h(n, &xt).exp(),
        FamilyMode::BigH => Tower::real(if x == 0.0 { 0.0 } else { big_h(n, &xt) }),
        FamilyMode::BigHInv => big_h_inv(n, x),
        FamilyMode::Theta => theta(n, t, &xt),
        FamilyMode::L => {
            if x <= 0.0 {
                return Err(Error::Domain("L_n needs x > 0".into()));
            }
            xt.iter_ln(n)
        }
        FamilyMode::E => xt.iter_exp(n),
    })
}

/// Direct f64 evaluation; fails with an overflow error pointing to the
/// log-domain mode when the result is beyond f64.
pub fn iterated_family_f64(n: u32, mode: FamilyMode, t: f64, x: f64) -> Result<f64> {
    let v = iterated_family(n, mode, t, x)?;
    if v.is_finite_f64() {
        Ok(v.to_f64())
    } else {
        Err(Error::Overflow(format!("{mode:?} for n = {n} at (t, x) = ({t}, {x}) is {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn h2_at_zero() {
        assert_eq!(iterated_family_f64(2, FamilyMode::BigH, 0.0, 0.0).unwrap(), 0.0);
        let h = iterated_family_f64(2, FamilyMode::SmallH, 0.0, 0.0).unwrap();
        assert!((h - (E + 1.0).exp()).abs() < 1e-12 * h);
    }

    #[test]
    fn theta2_closed_form() {
        let v = iterated_family_f64(2, FamilyMode::Theta, 1.0, 0.0).unwrap();
        let exact = (E * E).exp() - E.exp();
        assert!((v - exact).abs() < 1e-12 * exact);
        assert!((v - 1603.0).abs() < 1.0);
    }

    #[test]
    fn theta_identity_at_zero_time() {
        assert_eq!(iterated_family_f64(3, FamilyMode::Theta, 0.0, 12.5).unwrap(), 12.5);
    }

    #[test]
    fn h_matches_naive_formula() {
        for x in [0.5f64, 10.0, 1e4] {
            let s = x + E.exp();
            let naive = s.ln().ln() - 1.0;
            let v = iterated_family_f64(2, FamilyMode::BigH, 0.0, x).unwrap();
            assert!((v - naive).abs() < 1e-13 * (1.0 + naive), "x={x}");
        }
    }

    #[test]
    fn h_inv_of_two() {
        let v = iterated_family(2, FamilyMode::BigHInv, 0.0, 2.0).unwrap();
        let exact = E.powi(3).exp() - E.exp();
        assert!((v.to_f64() - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn direct_overflow_is_reported() {
        let r = iterated_family_f64(3, FamilyMode::Theta, 2.0, 1.0);
        assert!(matches!(r, Err(Error::Overflow(_))));
        assert!(iterated_family(6, FamilyMode::Theta, 1.0, 1.0).is_ok());
    }

    #[test]
    fn round_trip_small_arguments_n3() {
        for x in [1e-6, 1.0, 50.0] {
            let h = big_h(3, &Tower::real(x));
            assert!(h > 0.0);
            let back = big_h_inv(3, h).to_f64();
            assert!((back - x).abs() < 1e-12 * x, "x={x} back={back}");
        }
    }
}
