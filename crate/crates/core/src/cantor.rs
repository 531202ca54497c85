//! Certified leaf measures of the Cantor sets of admissible itineraries.
//!
//! With running budget `S` (the sum of the symbols read so far) the next
//! symbol `j` must satisfy `j <= S`, and the relative measure of the
//! surviving set obeys
//!
//! ```text
//! rho(S) = sum_{j <= S} w_j rho(S + j).
//! ```
//!
//! The upper bound iterates this recursion from `rho = 1`. The lower bound
//! iterates it from `L(S) = prod_{k >= 0} (1 - a^{S+k})`, which is a
//! sub-solution because the budget grows by at least one per step.

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::model::{apply_inverse_branch, ModelSpec, Point};
use crate::symbolic::Word;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureInterval {
    pub lower: f64,
    pub upper: f64,
    /// Truncation level that certified the bounds.
    pub depth: usize,
}

impl MeasureInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Running prefix sum capping the next admissible symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BudgetState {
    pub budget: u64,
}

impl BudgetState {
    pub fn new(budget: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Argument("budget must be at least 1".into()));
        }
        Ok(BudgetState { budget })
    }

    /// Budget after reading symbol `j`, if `j` is admissible.
    pub fn step(self, j: u64) -> Option<BudgetState> {
        (j >= 1 && j <= self.budget).then(|| BudgetState {
            budget: self.budget + j,
        })
    }
}

fn width_enclosure(spec: &ModelSpec, j: u64) -> Interval {
    let w = spec.width(j as u32);
    Interval::new(w.next_down().max(0.0), w.next_up())
}

/// Certified lower bound for `prod_{k >= 0} (1 - a^{S+k})`.
pub fn survival_product_lower(spec: &ModelSpec, s: u64) -> f64 {
    let a = spec.width_base;
    let mut p = Interval::point(1.0);
    let mut k = 0u64;
    loop {
        let t = a.powi((s + k).min(i32::MAX as u64) as i32);
        if t < 1e-18 {
            // prod_{j >= k} (1 - a^{s+j}) >= 1 - a^{s+k} / (1 - a)
            let tail = (t / (1.0 - a)).next_up() * (1.0 + 1e-12);
            p = p * Interval::point((1.0 - tail).next_down());
            return p.lo.max(0.0);
        }
        p = p * Interval::new((1.0 - t.next_up()).next_down(), 1.0);
        k += 1;
    }
}

/// Budget ceiling above which `rho` is replaced by its bounds `[L(S), 1]`.
fn ceiling(budget: u64) -> u64 {
    (budget + 96).max(256)
}

/// Certified bounds on `rho(budget)` after `depth` steps of the recursion.
pub fn relative_measure(budget: u64, depth: usize, spec: &ModelSpec) -> Result<MeasureInterval> {
    spec.validate()?;
    if budget == 0 {
        return Err(Error::Argument("budget must be at least 1".into()));
    }
    if depth == 0 {
        return Err(Error::Argument("depth must be at least 1".into()));
    }
    let smax = ceiling(budget);
    let n = smax as usize;
    let lfloor: Vec<f64> = (0..=2 * smax).map(|s| if s == 0 { 0.0 } else { survival_product_lower(spec, s) }).collect();
    let widths: Vec<Interval> = (0..=smax).map(|j| if j == 0 { Interval::zero() } else { width_enclosure(spec, j) }).collect();
    let mut upper = vec![1.0f64; n + 1];
    let mut lower: Vec<f64> = (0..=n).map(|s| lfloor[s]).collect();
    for _ in 0..depth {
        let mut nu = upper.clone();
        let mut nl = lower.clone();
        for s in 1..=n {
            let mut su = Interval::zero();
            let mut sl = Interval::zero();
            for j in 1..=s {
                let t = s + j;
                let (u, l) = if t <= n {
                    (upper[t], lower[t])
                } else {
                    (1.0, lfloor[t])
                };
                su = su + widths[j] * Interval::point(u);
                sl = sl + widths[j] * Interval::point(l);
            }
            nu[s] = su.hi.min(upper[s]);
            nl[s] = sl.lo.max(lower[s]);
        }
        upper = nu;
        lower = nl;
    }
    let b = budget as usize;
    Ok(MeasureInterval {
        lower: lower[b],
        upper: upper[b],
        depth,
    })
}

/// Relative measure of `C_n` inside `E_n` on an unstable leaf.
pub fn cantor_measure(n: u32, depth: usize, spec: &ModelSpec) -> Result<MeasureInterval> {
    if n == 0 {
        return Err(Error::Argument("symbols start at 1".into()));
    }
    relative_measure(n as u64, depth, spec)
}

/// The uniform lower bound `c_0`, realised as the budget-one lower bound.
pub fn c0_bound(spec: &ModelSpec, depth: usize) -> Result<f64> {
    Ok(relative_measure(1, depth, spec)?.lower)
}

/// Exact upper bound after `depth` steps from budget `budget`: the total
/// relative width of admissible continuations of that length.
pub fn relative_measure_upper_exact(budget: u64, depth: usize, spec: &ModelSpec) -> BigRational {
    let widths: Vec<BigRational> = (0..=budget.saturating_mul(1 << depth.min(40)).min(4096))
        .map(|j| if j == 0 { BigRational::zero() } else { spec.width_exact(j as u32) })
        .collect();
    let mut memo: HashMap<(u64, usize), BigRational> = HashMap::new();
    fn go(s: u64, k: usize, widths: &[BigRational], spec: &ModelSpec, memo: &mut HashMap<(u64, usize), BigRational>) -> BigRational {
        if k == 0 {
            return BigRational::one();
        }
        if let Some(v) = memo.get(&(s, k)) {
            return v.clone();
        }
        let mut acc = BigRational::zero();
        for j in 1..=s {
            let w = widths
                .get(j as usize)
                .cloned()
                .unwrap_or_else(|| spec.width_exact(j as u32));
            acc += w * go(s + j, k - 1, widths, spec, memo);
        }
        memo.insert((s, k), acc.clone());
        acc
    }
    go(budget, depth, &widths, spec, &mut memo)
}

/// Largest over smallest cross-section length of the cylinder `E_w` across
/// `samples` horizontal leaves.
pub fn leaf_ratio_bound(w: &Word, spec: &ModelSpec, samples: usize) -> Result<f64> {
    if !w.is_admissible() || w.is_empty() {
        return Err(Error::Argument(format!("{w} is not an admissible nonempty word")));
    }
    let samples = samples.max(2);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for k in 0..samples {
        let y = k as f64 / (samples - 1) as f64;
        let mut left = Point::new(0.0, y);
        let mut right = Point::new(1.0f64.next_down(), y);
        for &s in w.0.iter().rev() {
            left = Point::new(apply_inverse_branch(spec, left, s)?.point.x, y);
            right = Point::new(apply_inverse_branch(spec, right, s)?.point.x, y);
        }
        let len = right.x - left.x;
        lo = lo.min(len);
        hi = hi.max(len);
    }
    Ok(hi / lo)
}

/// Analytic cap `exp(B_0)` on the leaf ratio.
pub fn leaf_ratio_cap(spec: &ModelSpec) -> f64 {
    let e = spec.perturbation;
    (2.0 * ((1.0 + e) / (1.0 - e)).ln()).exp()
}
