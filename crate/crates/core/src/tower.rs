//! Magnitudes written as iterated exponentials.
//!
//! A [`Tower`] with `depth = k` and `top = a` stands for `exp(exp(...exp(a)))`
//! with `k` exponentials. Depth zero is an ordinary real. Values are kept
//! normalized: whenever the next exponential fits in an `f64`, it is applied.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Largest argument whose exponential is a finite `f64`.
pub const LN_MAX: f64 = 709.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub depth: u32,
    pub top: f64,
}

impl Tower {
    pub fn real(x: f64) -> Self {
        Tower { depth: 0, top: x }
    }

    /// `E_depth(top)`, normalized.
    pub fn new(depth: u32, top: f64) -> Self {
        let mut t = Tower { depth, top };
        t.normalize();
        t
    }

    /// The number whose logarithm is `l`.
    pub fn from_ln(l: f64) -> Self {
        Tower::new(1, l)
    }

    fn normalize(&mut self) {
        while self.depth > 0 && self.top <= LN_MAX {
            self.top = self.top.exp();
            self.depth -= 1;
        }
    }

    pub fn is_finite_f64(&self) -> bool {
        self.depth == 0 && self.top.is_finite()
    }

    /// f64 value, `+inf` when not representable.
    pub fn to_f64(&self) -> f64 {
        if self.depth == 0 {
            self.top
        } else {
            f64::INFINITY
        }
    }

    /// Natural logarithm. Requires a positive value.
    pub fn ln(&self) -> Tower {
        if self.depth == 0 {
            Tower::real(self.top.ln())
        } else {
            Tower { depth: self.depth - 1, top: self.top }
        }
    }

    pub fn exp(&self) -> Tower {
        if self.depth == 0 && self.top <= LN_MAX {
            Tower::real(self.top.exp())
        } else {
            Tower::new(self.depth + 1, self.top)
        }
    }

    /// `ln` as an f64, `+inf` if the logarithm itself overflows.
    pub fn ln_f64(&self) -> f64 {
        self.ln().to_f64()
    }

    /// Apply `ln` `k` times.
    pub fn iter_ln(&self, k: u32) -> Tower {
        let mut t = *self;
        for _ in 0..k {
            t = t.ln();
        }
        t
    }

    pub fn iter_exp(&self, k: u32) -> Tower {
        let mut t = *self;
        for _ in 0..k {
            t = t.exp();
        }
        t
    }

    /// `self + b` for nonnegative operands.
    pub fn add(&self, b: &Tower) -> Tower {
        let (hi, lo) = if self.total_cmp(b) == Ordering::Less { (b, self) } else { (self, b) };
        if hi.depth == 0 {
            return Tower::real(hi.top + lo.top);
        }
        // ln(hi + lo) = ln hi + ln1p(lo/hi)
        let lh = hi.ln();
        let ll = lo.ln();
        if lh.depth == 0 && ll.depth == 0 {
            let d = ll.top - lh.top;
            Tower::from_ln(lh.top + d.exp().ln_1p())
        } else {
            *hi
        }
    }

    /// `self - b` for `self >= b >= 0`. Returns zero when the operands coincide.
    pub fn sub(&self, b: &Tower) -> Tower {
        if self.depth == 0 {
            return Tower::real(self.top - b.to_f64());
        }
        if b.depth == 0 && b.top <= 0.0 {
            // self is beyond f64 range, a nonpositive real is negligible
            return *self;
        }
        let la = self.ln();
        let lb = b.ln();
        if la.depth == 0 && lb.depth == 0 {
            let d = lb.top - la.top;
            if d >= 0.0 {
                return Tower::real(0.0);
            }
            Tower::from_ln(la.top + (-d.exp_m1()).ln())
        } else if la.total_cmp(&lb) == Ordering::Greater {
            // the subtrahend is negligible on the scale of self
            *self
        } else {
            Tower::real(0.0)
        }
    }

    /// Product of nonnegative magnitudes.
    pub fn mul(&self, b: &Tower) -> Tower {
        if self.depth == 0 && b.depth == 0 {
            let v = self.top * b.top;
            if v.is_finite() {
                return Tower::real(v);
            }
        }
        if self.to_f64() == 0.0 || b.to_f64() == 0.0 {
            return Tower::real(0.0);
        }
        self.ln().add(&b.ln()).exp()
    }

    /// Quotient of positive magnitudes; underflows to zero.
    pub fn div(&self, b: &Tower) -> Tower {
        if self.depth == 0 && b.depth == 0 {
            return Tower::real(self.top / b.top);
        }
        let (la, lb) = (self.ln(), b.ln());
        if la.depth == 0 && lb.depth == 0 {
            return Tower::from_ln(la.top - lb.top);
        }
        if lb.total_cmp(&la).is_gt() {
            Tower::real(0.0)
        } else {
            la.sub(&lb).exp()
        }
    }

    /// `self^p` for a positive value and real `p > 0`.
    pub fn powf(&self, p: f64) -> Tower {
        if self.depth == 0 {
            let v = self.top.powf(p);
            if v.is_finite() {
                return Tower::real(v);
            }
            return Tower::from_ln(p * self.top.ln());
        }
        // ln(x^p) = p ln x
        let l = self.ln();
        if l.depth == 0 {
            return Tower::from_ln(p * l.top);
        }
        // ln ln(x^p) = ln p + ln ln x
        let ll = l.ln();
        if ll.depth == 0 {
            Tower::new(2, ll.top + p.ln())
        } else {
            *self
        }
    }

    /// Total order on normalized nonnegative towers (and reals at depth zero).
    pub fn total_cmp(&self, b: &Tower) -> Ordering {
        match self.depth.cmp(&b.depth) {
            Ordering::Equal => self.top.total_cmp(&b.top),
            o => o,
        }
    }
}

impl PartialOrd for Tower {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.top.is_nan() || other.top.is_nan() {
            None
        } else {
            Some(self.total_cmp(other))
        }
    }
}

impl std::fmt::Display for Tower {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.depth == 0 {
            write!(f, "{:e}", self.top)
        } else {
            write!(f, "E{}({})", self.depth, self.top)
        }
    }
}

/// `E_n(x)`: `n`-fold exponential of `x`.
pub fn iter_exp(n: u32, x: f64) -> Tower {
    Tower::real(x).iter_exp(n)
}

/// `L_n(x)`: `n`-fold logarithm of `x`.
pub fn iter_ln(n: u32, x: &Tower) -> Tower {
    x.iter_ln(n)
}

/// Relative agreement of two magnitudes: plain relative error when both are
/// ordinary reals, otherwise relative error of the logarithms.
pub fn rel_agreement(a: &Tower, b: &Tower) -> f64 {
    let big = 1e300;
    if a.depth == 0 && b.depth == 0 && a.top.abs() < big && b.top.abs() < big {
        return (a.top - b.top).abs() / (1.0 + a.top.abs().max(b.top.abs()));
    }
    let (la, lb) = (a.ln(), b.ln());
    if la.depth == 0 && lb.depth == 0 {
        (la.top - lb.top).abs() / (1.0 + la.top.abs().max(lb.top.abs()))
    } else {
        rel_agreement(&la, &lb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_small_towers() {
        let t = Tower::new(2, 1.0);
        assert_eq!(t.depth, 0);
        assert!((t.top - std::f64::consts::E.exp()).abs() < 1e-12);
    }

    #[test]
    fn e3_of_one() {
        let t = iter_exp(3, 1.0);
        assert_eq!(t.depth, 0);
        assert!((t.top / 3814279.104760214 - 1.0).abs() < 1e-12);
        let t4 = iter_exp(4, 1.0);
        assert_eq!(t4.depth, 1);
        assert!((t4.top - 3814279.104760214).abs() < 1e-6);
    }

    #[test]
    fn ln_exp_inverse() {
        let t = Tower::new(3, 5.0);
        assert_eq!(t.ln().exp(), t);
        assert_eq!(t.iter_ln(3).to_f64(), 5.0);
    }

    #[test]
    fn sub_cancels_small_part() {
        let a = Tower::from_ln(1000.0);
        let b = Tower::from_ln(999.0);
        let d = a.sub(&b);
        let expect = 1000.0 + (1.0 - (-1.0f64).exp()).ln();
        assert!((d.ln_f64() - expect).abs() < 1e-12);
        assert_eq!(a.sub(&a).to_f64(), 0.0);
    }

    #[test]
    fn ordering_across_depths() {
        assert!(Tower::new(1, 800.0) > Tower::real(1e300));
        assert!(Tower::new(2, 800.0) > Tower::new(1, 1e300));
        assert!(Tower::real(2.0) < Tower::real(3.0));
    }

    #[test]
    fn powf_in_log_domain() {
        let x = Tower::from_ln(1e4);
        assert!((x.powf(0.5).ln_f64() - 5e3).abs() < 1e-9);
        assert!((Tower::real(3.0).powf(2.0).to_f64() - 9.0).abs() < 1e-12);
    }
}
