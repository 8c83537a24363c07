//! Reference evaluation of the link-reliability, timeout and bandwidth formulas in
//! double-double arithmetic (about 106 bits of significand). The evaluation order is
//! independent of the library's and every rounding step is tracked, so agreement to 1e-9
//! relative means the library is exact up to its own f64 rounding.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Sub};

/// An unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        // One Newton step from the f64 root doubles the precision.
        let q = Dd::new(self.hi.sqrt());
        q + (self - q * q) / (q * Dd::new(2.0))
    }

    pub fn min(self, other: Dd) -> Dd {
        if self.partial_cmp(&other) == Some(Ordering::Greater) {
            other
        } else {
            self
        }
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            o => o,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + Dd { hi: -o.hi, lo: -o.lo }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        let (q, e) = quick_two_sum(q1, q2);
        Dd { hi: q, lo: e } + Dd::new(q3)
    }
}

/// `alpha * n_t + (1 - alpha) * n_prev`, written as `n_prev + alpha * (n_t - n_prev)`.
pub fn reliability(n_t: f64, n_prev: f64, alpha: f64) -> f64 {
    let (n, p, a) = (Dd::new(n_t), Dd::new(n_prev), Dd::new(alpha));
    (p + a * (n - p)).to_f64()
}

pub fn rto(rtt_mean: f64, rtt_var: f64, k: f64) -> f64 {
    (Dd::new(rtt_mean) + Dd::new(k) * Dd::new(rtt_var)).to_f64()
}

/// TCP-friendly rate with `p > 0`; `p = 0` has no finite value and is handled by the
/// caller.
pub fn bandwidth(packet_size: f64, rtt_mean: f64, rtt_var: f64, k: f64, p: f64, raw: f64) -> f64 {
    let p_dd = Dd::new(p);
    let rto = Dd::new(rtt_mean) + Dd::new(k) * Dd::new(rtt_var);
    let x = Dd::new(rtt_mean) * (p_dd * Dd::new(2.0) / Dd::new(3.0)).sqrt();
    let root = (p_dd * Dd::new(3.0) / Dd::new(8.0)).sqrt() * Dd::new(3.0);
    let y = rto * root.min(Dd::ONE) * p_dd * (Dd::ONE + Dd::new(32.0) * p_dd * p_dd);
    (Dd::new(packet_size) / (x + y)).min(Dd::new(raw)).to_f64()
}
