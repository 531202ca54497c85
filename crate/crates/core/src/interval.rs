//! Closed real intervals with outward rounding.
//!
//! Every arithmetic result is widened by one ulp in each direction, which is
//! enough to contain the exact result of a correctly rounded operation.

use serde::Serialize;
use std::ops::{Add, Mul, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn zero() -> Self {
        Self::point(0.0)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Natural logarithm; requires a positive lower end.
    pub fn ln(&self) -> Interval {
        debug_assert!(self.lo > 0.0);
        Interval::new(
            self.lo.ln().next_down().next_down(),
            self.hi.ln().next_up().next_up(),
        )
    }

    pub fn exp(&self) -> Interval {
        Interval::new(
            self.lo.exp().next_down().next_down().max(0.0),
            self.hi.exp().next_up().next_up(),
        )
    }

    pub fn scale(&self, c: f64) -> Interval {
        *self * Interval::point(c)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::new((self.lo + o.lo).next_down(), (self.hi + o.hi).next_up())
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::new((self.lo - o.hi).next_down(), (self.hi - o.lo).next_up())
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo.next_down(), hi.next_up())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_arithmetic_encloses_exact_value() {
        let third = Interval::point(1.0) * Interval::point(1.0 / 3.0);
        assert!(third.contains(1.0 / 3.0));
        let s = Interval::point(0.1) + Interval::point(0.2);
        assert!(s.contains(0.1 + 0.2) && s.lo <= 0.3);
    }

    proptest! {
        #[test]
        fn products_contain_sampled_products(a in -10.0f64..10.0, b in 0.0f64..5.0,
                                             c in -10.0f64..10.0, d in 0.0f64..5.0,
                                             s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let x = Interval::new(a, a + b);
            let y = Interval::new(c, c + d);
            let p = a + s * b;
            let q = c + t * d;
            prop_assert!((x * y).contains(p * q));
            prop_assert!((x + y).contains(p + q));
            prop_assert!((x - y).contains(p - q));
        }
    }
}
