//! The map family on the unit square and its standing conditions.
//!
//! Rectangle `E_i` is the vertical strip `[x_{i-1}, x_i) x [0, 1]` with
//! `x_i = 1 - a^i`, so its width is `w_i = (1 - a) a^{i-1}`. Branch `i`
//! stretches `E_i` horizontally onto `[0, 1)`, optionally post-composed with
//! `g(t) = t + (eps / 2 pi) sin(2 pi t)`, and squeezes it vertically into the
//! strip `S_i = [c_i, c_i + h_i]` with `h_i = a_1^i`, stacked from `y = 0`.

use crate::error::{Error, Result};
use crate::symbolic::Word;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Geometric ratio `a` of the rectangle widths.
    pub width_base: f64,
    /// Ratio `a_1` of the strip heights.
    pub height_base: f64,
    /// Cone slope `alpha`.
    pub cone_slope: f64,
    /// Amplitude `eps` of the horizontal perturbation.
    pub perturbation: f64,
    /// Alphabet truncation used by enumeration and operator code.
    pub symbol_cap: u32,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            width_base: 0.5,
            height_base: 1.0 / 3.0,
            cone_slope: 0.5,
            perturbation: 0.0,
            symbol_cap: 64,
        }
    }
}

impl ModelSpec {
    /// Checks parameter ranges needed for the map to be well defined.
    ///
    /// The ordering `a_1 < a` is deliberately not enforced here: it is one of
    /// the conditions reported by [`verify_conditions`].
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v.is_finite() && v > 0.0 && v < 1.0;
        if !open_unit(self.width_base) {
            return Err(Error::Model(format!(
                "width_base must lie in (0,1), got {}",
                self.width_base
            )));
        }
        if !open_unit(self.height_base) {
            return Err(Error::Model(format!(
                "height_base must lie in (0,1), got {}",
                self.height_base
            )));
        }
        if !open_unit(self.cone_slope) {
            return Err(Error::Model(format!(
                "cone_slope must lie in (0,1), got {}",
                self.cone_slope
            )));
        }
        if !(self.perturbation.is_finite() && (0.0..1.0).contains(&self.perturbation)) {
            return Err(Error::Model(format!(
                "perturbation must lie in [0,1), got {}",
                self.perturbation
            )));
        }
        if self.symbol_cap < 1 {
            return Err(Error::Model("symbol_cap must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_affine(&self) -> bool {
        self.perturbation == 0.0
    }

    /// The same geometry with the perturbation removed.
    pub fn affine_part(&self) -> ModelSpec {
        ModelSpec {
            perturbation: 0.0,
            ..self.clone()
        }
    }

    /// Width `w_i` of `E_i`.
    pub fn width(&self, i: u32) -> f64 {
        (1.0 - self.width_base) * self.width_base.powi(i as i32 - 1)
    }

    /// Left edge `x_{i-1}` of `E_i`.
    pub fn left_edge(&self, i: u32) -> f64 {
        1.0 - self.width_base.powi(i as i32 - 1)
    }

    /// Right edge `x_i` of `E_i` (excluded from `E_i`).
    pub fn right_edge(&self, i: u32) -> f64 {
        1.0 - self.width_base.powi(i as i32)
    }

    /// Height `h_i` of the image strip `S_i`.
    pub fn height(&self, i: u32) -> f64 {
        self.height_base.powi(i as i32)
    }

    /// Bottom `c_i` of the image strip `S_i`.
    pub fn strip_offset(&self, i: u32) -> f64 {
        let q = self.height_base;
        q * (1.0 - q.powi(i as i32 - 1)) / (1.0 - q)
    }

    /// `a` as an exact rational (every finite double is a dyadic rational).
    pub fn width_base_exact(&self) -> BigRational {
        BigRational::from_float(self.width_base).expect("finite width_base")
    }

    /// Exact width `(1 - a) a^{i-1}` of `E_i`.
    pub fn width_exact(&self, i: u32) -> BigRational {
        let a = self.width_base_exact();
        let one = BigRational::one();
        (&one - &a) * Pow::pow(&a, (i - 1) as u32)
    }

    pub fn g(&self, t: f64) -> f64 {
        let e = self.perturbation;
        if e == 0.0 {
            t
        } else {
            t + e / (2.0 * PI) * (2.0 * PI * t).sin()
        }
    }

    pub fn g_prime(&self, t: f64) -> f64 {
        1.0 + self.perturbation * (2.0 * PI * t).cos()
    }

    pub fn g_second(&self, t: f64) -> f64 {
        -2.0 * PI * self.perturbation * (2.0 * PI * t).sin()
    }

    /// Inverse of `g` on `[0, 1]`, by safeguarded Newton iteration.
    pub fn g_inverse(&self, u: f64) -> f64 {
        if self.perturbation == 0.0 {
            return u;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut t = u.clamp(0.0, 1.0);
        for _ in 0..100 {
            let r = self.g(t) - u;
            if r == 0.0 {
                return t;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let mut next = t - r / self.g_prime(t);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= f64::EPSILON * 0.5 {
                return next;
            }
            t = next;
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Symbol `i` of the rectangle `E_i` containing `p`.
pub fn locate(spec: &ModelSpec, p: Point) -> Result<u32> {
    if !(p.x >= 0.0 && p.x < 1.0) {
        return Err(Error::Domain(format!("x = {} outside [0,1)", p.x)));
    }
    let guess = ((1.0 - p.x).ln() / spec.width_base.ln()).floor();
    let mut i = if guess.is_finite() && guess >= 0.0 {
        (guess as u32).saturating_add(1).min(1 << 20)
    } else {
        1
    };
    while i > 1 && p.x < spec.left_edge(i) {
        i -= 1;
    }
    while p.x >= spec.right_edge(i) {
        i += 1;
    }
    Ok(i)
}

/// Image of `p` under the branch of the rectangle containing it.
pub fn apply(spec: &ModelSpec, p: Point) -> Result<Point> {
    let i = locate(spec, p)?;
    let t = (p.x - spec.left_edge(i)) / spec.width(i);
    let x = spec.g(t);
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Numeric {
            step: 0,
            msg: format!("image x = {x} left [0,1) on branch {i}"),
        });
    }
    Ok(Point::new(x, spec.strip_offset(i) + spec.height(i) * p.y))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InverseImage {
    pub point: Point,
    /// False when `p.y` lies outside the strip `S_i`; the returned `y` is then
    /// clamped and only `x` is meaningful.
    pub on_strip: bool,
}

/// Preimage of `p` under branch `i`.
pub fn apply_inverse_branch(spec: &ModelSpec, p: Point, i: u32) -> Result<InverseImage> {
    if i == 0 {
        return Err(Error::Argument("symbols start at 1".into()));
    }
    let w = spec.width(i);
    if w == 0.0 || !w.is_normal() {
        return Err(Error::Overflow(format!(
            "width of rectangle {i} is not representable"
        )));
    }
    let x = spec.left_edge(i) + w * spec.g_inverse(p.x);
    let c = spec.strip_offset(i);
    let h = spec.height(i);
    let on_strip = p.y >= c && p.y <= c + h;
    let y = ((p.y - c) / h).clamp(0.0, 1.0);
    Ok(InverseImage {
        point: Point::new(x, y),
        on_strip,
    })
}

/// Expansion factor `D^u F(p)` along the horizontal unstable direction.
pub fn unstable_derivative(spec: &ModelSpec, p: Point) -> Result<f64> {
    let i = locate(spec, p)?;
    let t = (p.x - spec.left_edge(i)) / spec.width(i);
    Ok(spec.g_prime(t) / spec.width(i))
}

/// Symbols of the first `n` rectangles visited by the forward orbit of `p`.
pub fn itinerary(spec: &ModelSpec, p: Point, n: usize) -> Result<Word> {
    if n == 0 {
        return Err(Error::Argument("itinerary length must be positive".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut q = p;
    for step in 0..n {
        let i = locate(spec, q).map_err(|e| Error::Numeric {
            step,
            msg: e.to_string(),
        })?;
        out.push(i);
        if step + 1 < n {
            q = apply(spec, q).map_err(|e| match e {
                Error::Numeric { msg, .. } => Error::Numeric { step, msg },
                other => other,
            })?;
        }
    }
    Ok(Word(out))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub symbol: Option<u32>,
    pub point: Option<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
    pub witness: Witness,
    /// Constant extracted from this condition, if any.
    pub constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub conditions: Vec<ConditionEntry>,
    /// Largest `K_0` compatible with H2 and H4.
    pub k0: f64,
    /// Supremum in D1; any larger constant is valid.
    pub c0: f64,
    /// Reported BIV constant `2 log((1 + eps) / (1 - eps))`.
    pub b0: f64,
    /// Measured variation of `log f_{i1x}` over a rectangle.
    pub biv_variation: f64,
    /// Whether the per-symbol check extends to all symbols by monotonicity.
    pub tail_certified: bool,
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<&ConditionEntry> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }
}

/// Certified infimum over branch `i` of `D^u F = g'(t) / w_i`, with the
/// parameter `t` where the sampled minimum occurs.
fn expansion_inf(spec: &ModelSpec, i: u32, samples: usize) -> (f64, f64) {
    let w = spec.width(i);
    if spec.is_affine() {
        return (1.0 / w, 0.0);
    }
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=samples {
        let t = k as f64 / samples as f64;
        let d = spec.g_prime(t) / w;
        if d < best.0 {
            best = (d, t);
        }
    }
    // |d/dt (g'/w)| <= 2 pi eps / w, and every t is within 1/(2 samples) of
    // a grid point.
    let slack = 2.0 * PI * spec.perturbation / w / (2.0 * samples as f64);
    let analytic = (1.0 - spec.perturbation) / w;
    ((best.0 - slack).max(analytic), best.1)
}

fn entry(name: &str, margin: f64, symbol: Option<u32>, point: Option<Point>, constant: Option<f64>) -> ConditionEntry {
    ConditionEntry {
        name: name.to_string(),
        pass: margin > 0.0,
        margin,
        witness: Witness { symbol, point },
        constant,
    }
}

/// Evaluates G1-G3, H1-H5, D1 and BIV on symbols `1..=symbol_cap`.
pub fn verify_conditions(spec: &ModelSpec, samples: usize) -> Result<ConditionReport> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::Argument("samples must be at least 1".into()));
    }
    if spec.symbol_cap < 2 {
        return Err(Error::Argument("symbol_cap must be at least 2".into()));
    }
    let a = spec.width_base;
    let a1 = spec.height_base;
    let alpha = spec.cone_slope;
    let eps = spec.perturbation;
    let cap = spec.symbol_cap;

    let mut h13 = (f64::INFINITY, 1u32, 0.0);
    let mut h2 = (f64::INFINITY, 1u32, 0.0);
    let mut h4 = (f64::INFINITY, 1u32);
    for i in 1..=cap {
        let (dmin, t) = expansion_inf(spec, i, samples);
        let h = spec.height(i);
        // H1 and H3 reduce to alpha * h_i <= alpha * D because the
        // derivative is diagonal.
        let m = alpha * (dmin - h);
        if m < h13.0 {
            h13 = (m, i, t);
        }
        if dmin < h2.0 {
            h2 = (dmin, i, t);
        }
        // H4: D >= J_F K_0 = D h_i K_0, i.e. K_0 <= 1 / h_i.
        if 1.0 / h < h4.0 {
            h4 = (1.0 / h, i);
        }
    }
    let k0 = h2.0.min(h4.0);
    let at = |i: u32, t: f64| Point::new(spec.left_edge(i) + spec.width(i) * t, 0.0);
    if !k0.is_finite() || h13.0.is_nan() {
        return Err(Error::Numeric {
            step: 0,
            msg: "condition evaluation produced a non-finite value".into(),
        });
    }

    let total_height = a1 / (1.0 - a1);
    let c_tilde = ((1.0 - a) / a).max(a / (1.0 - a));
    // sup |g''| / g' = 2 pi eps sup |sin s| / (1 + eps cos s) = 2 pi eps / sqrt(1 - eps^2).
    let c0 = 2.0 * PI * eps / (1.0 - eps * eps).sqrt();
    let biv_variation = ((1.0 + eps) / (1.0 - eps)).ln();
    let b0 = 2.0 * biv_variation;

    let conditions = vec![
        entry("G1", 1.0 - total_height, None, None, Some(total_height)),
        entry("G2", 1.0 - a, Some(cap), None, Some(a.powi(cap as i32))),
        entry("G3", 1.0 - a, Some(1), None, Some(c_tilde)),
        entry("H1", h13.0, Some(h13.1), Some(at(h13.1, h13.2)), None),
        entry("H2", h2.0 - 1.0, Some(h2.1), Some(at(h2.1, h2.2)), Some(k0)),
        entry("H3", h13.0, Some(h13.1), Some(at(h13.1, h13.2)), None),
        entry("H4", h4.0 - 1.0, Some(h4.1), None, Some(k0)),
        entry("H5", a - a1, Some(1), None, Some(a1)),
        entry("D1", 1.0 - eps, Some(1), Some(at(1, 0.5)), Some(c0)),
        entry("BIV", 1.0 - eps, Some(1), Some(at(1, 0.5)), Some(b0)),
    ];
    Ok(ConditionReport {
        conditions,
        k0,
        c0,
        b0,
        biv_variation,
        tail_certified: true,
    })
}

/// Smallest perturbation at which H2 fails, by bisection on the certified
/// infimum of the expansion.
pub fn h2_failure_threshold(spec: &ModelSpec, samples: usize, tol: f64) -> Result<f64> {
    let fails = |eps: f64| -> Result<bool> {
        let s = ModelSpec {
            perturbation: eps,
            ..*spec
        };
        Ok(!verify_conditions(&s, samples)?.get("H2").unwrap().pass)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-9);
    if fails(lo)? {
        return Ok(0.0);
    }
    if !fails(hi)? {
        return Err(Error::Convergence("H2 holds for every admissible eps".into()));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if fails(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Exact integer power helper used by tests and the exact paths.
pub fn pow2_rational(k: u32) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(2u8).pow(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d() -> ModelSpec {
        ModelSpec::default()
    }

    #[test]
    fn locate_examples() {
        assert_eq!(locate(&d(), Point::new(0.0, 0.3)).unwrap(), 1);
        assert_eq!(locate(&d(), Point::new(0.6, 0.0)).unwrap(), 2);
        assert_eq!(locate(&d(), Point::new(0.75, 0.5)).unwrap(), 3);
        assert!(locate(&d(), Point::new(1.0, 0.5)).is_err());
        assert!(locate(&d(), Point::new(-0.1, 0.5)).is_err());
    }

    #[test]
    fn locate_near_one() {
        let x = 1.0f64.next_down();
        let i = locate(&d(), Point::new(x, 0.0)).unwrap();
        assert!(d().left_edge(i) <= x && x < d().right_edge(i));
    }

    #[test]
    fn apply_examples() {
        let s = d();
        assert_eq!(apply(&s, Point::new(0.0, 0.0)).unwrap(), Point::new(0.0, 0.0));
        let q = apply(&s, Point::new(0.5, 1.0)).unwrap();
        assert_eq!(q.x, 0.0);
        assert!((q.y - 4.0 / 9.0).abs() < 1e-15);
        let q = apply(&s, Point::new(0.25, 0.5)).unwrap();
        assert_eq!(q.x, 0.5);
        assert!((q.y - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_branch_examples() {
        let s = d();
        let r = apply_inverse_branch(&s, Point::new(0.0, 0.0), 1).unwrap();
        assert_eq!(r.point, Point::new(0.0, 0.0));
        assert!(r.on_strip);
        let r = apply_inverse_branch(&s, Point::new(0.0, 4.0 / 9.0), 2).unwrap();
        assert!((r.point.x - 0.5).abs() < 1e-15 && (r.point.y - 1.0).abs() < 1e-12);
        let r = apply_inverse_branch(&s, Point::new(0.5, 0.9), 1).unwrap();
        assert_eq!(r.point.x, 0.25);
        assert!(!r.on_strip);
        assert!(matches!(
            apply_inverse_branch(&s, Point::new(0.5, 0.5), 5000),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn unstable_derivative_examples() {
        let s = d();
        assert_eq!(unstable_derivative(&s, Point::new(0.25, 0.5)).unwrap(), 2.0);
        assert_eq!(unstable_derivative(&s, Point::new(0.6, 0.0)).unwrap(), 4.0);
        for k in 0..50 {
            let x = 0.5 + 0.25 * k as f64 / 50.0;
            assert_eq!(unstable_derivative(&s, Point::new(x, 0.3)).unwrap(), 4.0);
        }
    }

    #[test]
    fn itinerary_examples() {
        let s = d();
        assert_eq!(itinerary(&s, Point::new(0.0, 0.0), 5).unwrap().0, vec![1; 5]);
        assert_eq!(itinerary(&s, Point::new(0.6, 0.0), 2).unwrap().0, vec![2, 1]);
        assert_eq!(itinerary(&s, Point::new(0.75, 0.0), 1).unwrap().0, vec![3]);
    }

    #[test]
    fn widths_sum_to_one_with_geometric_tail() {
        let s = d();
        let m = 40;
        let total: f64 = (1..=m).map(|i| s.width(i)).sum();
        assert!((1.0 - total - s.width_base.powi(m as i32)).abs() < 1e-15);
        let exact: BigRational = (1..=10).map(|i| s.width_exact(i)).sum();
        assert_eq!(exact, BigRational::one() - pow2_rational(10));
    }

    #[test]
    fn vertical_contraction_is_height_power() {
        let s = d();
        for i in 1..8u32 {
            let x = s.left_edge(i) + 0.3 * s.width(i);
            let p = apply(&s, Point::new(x, 0.0)).unwrap();
            let q = apply(&s, Point::new(x, 1.0)).unwrap();
            assert!(((q.y - p.y) - (1.0f64 / 3.0).powi(i as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn default_model_passes_with_k0_two() {
        let r = verify_conditions(&d(), 16).unwrap();
        assert!(r.all_pass(), "{:?}", r.failed());
        assert_eq!(r.k0, 2.0);
        assert!((r.get("H1").unwrap().margin - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.biv_variation, 0.0);
        assert_eq!(r.c0, 0.0);
    }

    #[test]
    fn rigged_models_fail_intended_conditions() {
        let s = ModelSpec {
            width_base: 0.4,
            height_base: 0.45,
            ..d()
        };
        assert_eq!(verify_conditions(&s, 16).unwrap().failed(), vec!["H5"]);
        let s = ModelSpec {
            height_base: 0.6,
            ..d()
        };
        assert_eq!(verify_conditions(&s, 16).unwrap().failed(), vec!["G1", "H5"]);
        let s = ModelSpec {
            perturbation: 0.6,
            ..d()
        };
        assert_eq!(verify_conditions(&s, 64).unwrap().failed(), vec!["H2"]);
    }

    #[test]
    fn h2_threshold_matches_analytic_bound() {
        // inf g'/w_1 = (1 - eps) / (1 - a) crosses 1 at eps = a.
        let t = h2_failure_threshold(&d(), 256, 1e-6).unwrap();
        assert!((t - 0.5).abs() < 1e-5, "{t}");
    }

    #[test]
    fn g_inverse_roundtrip() {
        let s = ModelSpec {
            perturbation: 0.3,
            ..d()
        };
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert!((s.g_inverse(s.g(t)) - t).abs() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn exactly_one_rectangle_contains_x(x in 0.0f64..1.0) {
            let s = d();
            let i = locate(&s, Point::new(x, 0.0)).unwrap();
            prop_assert!(s.left_edge(i) <= x && x < s.right_edge(i));
        }

        #[test]
        fn inverse_branch_undoes_apply(x in 0.0f64..1.0, y in 0.0f64..=1.0, eps in 0.0f64..0.5) {
            let s = ModelSpec { perturbation: eps, ..d() };
            let p = Point::new(x, y);
            let i = locate(&s, p).unwrap();
            prop_assume!(i < 30);
            let q = apply(&s, p).unwrap();
            let r = apply_inverse_branch(&s, q, i).unwrap();
            prop_assert!(r.on_strip);
            prop_assert!((r.point.x - x).abs() < 1e-12);
            prop_assert!((r.point.y - y).abs() < 1e-15 / s.height(i));
        }

        #[test]
        fn itinerary_concatenates(x in 0.0f64..1.0, n in 1usize..8, m in 1usize..8) {
            let s = d();
            let p = Point::new(x, 0.5);
            let mut q = p;
            for _ in 0..n { q = apply(&s, q).unwrap(); }
            let whole = itinerary(&s, p, n + m).unwrap();
            let mut joined = itinerary(&s, p, n).unwrap().0;
            joined.extend(itinerary(&s, q, m).unwrap().0);
            prop_assert_eq!(whole.0, joined);
        }
    }
}
