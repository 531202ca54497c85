//! Finite words, the admissibility rule and cylinder geometry.
//!
//! A word `[i_1, ..., i_k]` is admissible when every symbol after the first
//! is at most the sum of the symbols before it. Words of length zero or one
//! are admissible.

use crate::cantor::MeasureInterval;
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::interval::Interval;
use crate::model::{apply_inverse_branch, unstable_derivative, verify_conditions, ModelSpec, Point};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(pub Vec<u32>);

impl Word {
    pub fn new(symbols: &[u32]) -> Self {
        Word(symbols.to_vec())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u32] {
        &self.0
    }

    pub fn first(&self) -> Option<u32> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<u32> {
        self.0.last().copied()
    }

    pub fn sum(&self) -> u64 {
        self.0.iter().map(|&s| s as u64).sum()
    }

    pub fn is_admissible(&self) -> bool {
        is_admissible(&self.0)
    }

    /// `self` followed by `other` without its first symbol.
    pub fn overlap_concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(other.0.get(1..).unwrap_or(&[]));
        Word(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

impl From<Vec<u32>> for Word {
    fn from(v: Vec<u32>) -> Self {
        Word(v)
    }
}

/// Admissibility of a raw symbol slice.
pub fn is_admissible(w: &[u32]) -> bool {
    let mut sum = 0u64;
    for (k, &s) in w.iter().enumerate() {
        if k > 0 && s as u64 > sum {
            return false;
        }
        sum += s as u64;
    }
    true
}

/// All admissible words of `length` extending `prefix`, symbols at most
/// `cap` (`None` means unbounded), in lexicographic order.
pub fn enumerate_admissible(prefix: &Word, length: usize, cap: Option<u32>) -> Result<Vec<Word>> {
    if !prefix.is_admissible() || prefix.0.contains(&0) {
        return Err(Error::Argument(format!("prefix {prefix} is not admissible")));
    }
    if length < prefix.len() {
        return Err(Error::Argument(format!(
            "length {length} is shorter than the prefix {prefix}"
        )));
    }
    if prefix.is_empty() && cap.is_none() && length > 0 {
        return Err(Error::Argument(
            "an empty prefix needs a finite symbol cap".into(),
        ));
    }
    if let Some(c) = cap {
        if c == 0 {
            return Err(Error::Argument("cap must be at least 1".into()));
        }
    }
    let mut out = Vec::new();
    let mut cur = prefix.0.clone();
    extend(&mut cur, prefix.sum(), length, cap, &mut out);
    Ok(out)
}

fn extend(cur: &mut Vec<u32>, sum: u64, length: usize, cap: Option<u32>, out: &mut Vec<Word>) {
    if cur.len() == length {
        out.push(Word(cur.clone()));
        return;
    }
    let budget = if cur.is_empty() { u64::MAX } else { sum };
    let top = match cap {
        Some(c) => budget.min(c as u64),
        None => budget,
    };
    for s in 1..=top {
        cur.push(s as u32);
        extend(cur, sum + s, length, cap, out);
        cur.pop();
    }
}

/// Gap family of an admissible stem: every extension by a symbol strictly
/// greater than `threshold` is inadmissible.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Gap {
    pub stem: Word,
    pub threshold: u64,
}

/// Gap families of order `order` inside `E_n`: one per admissible stem of
/// length `order` starting with `n`.
pub fn enumerate_gaps(n: u32, order: usize) -> Result<Vec<Gap>> {
    if order == 0 || n == 0 {
        return Err(Error::Argument("order and symbol must be positive".into()));
    }
    Ok(enumerate_admissible(&Word(vec![n]), order, None)?
        .into_iter()
        .map(|stem| {
            let threshold = stem.sum();
            Gap { stem, threshold }
        })
        .collect())
}

/// Exact width of the full-height cylinder `E_w` in the affine model.
pub fn cylinder_width_exact(w: &Word, spec: &ModelSpec) -> BigRational {
    w.0.iter()
        .fold(BigRational::one(), |acc, &s| acc * spec.width_exact(s))
}

/// Width of the full-height cylinder `E_w`.
///
/// Exact in the affine model. With a perturbation, each inverse branch
/// contracts lengths by a factor between `w_i / (1 + eps)` and
/// `w_i / (1 - eps)`, except the innermost one which is exact.
pub fn cylinder_width(w: &Word, spec: &ModelSpec) -> Result<MeasureInterval> {
    if w.is_empty() {
        return Err(Error::Argument("cylinder of the empty word".into()));
    }
    if spec.is_affine() {
        let v = cylinder_width_exact(w, spec).to_f64().unwrap_or(0.0);
        return Ok(MeasureInterval {
            lower: v,
            upper: v,
            depth: w.len(),
        });
    }
    let eps = spec.perturbation;
    let mut lo = Interval::point(1.0);
    let mut hi = Interval::point(1.0);
    for (k, &s) in w.0.iter().enumerate() {
        let ws = Interval::point(spec.width(s));
        if k + 1 == w.len() {
            lo = lo * ws;
            hi = hi * ws;
        } else {
            lo = lo * ws * Interval::point((1.0 / (1.0 + eps)).next_down());
            hi = hi * ws * Interval::point((1.0 / (1.0 - eps)).next_up());
        }
    }
    Ok(MeasureInterval {
        lower: lo.lo.max(0.0),
        upper: hi.hi.min(1.0),
        depth: w.len(),
    })
}

/// `R_{past, future} = S_past ∩ E_future`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectangleSpec {
    pub past: Word,
    pub future: Word,
}

impl RectangleSpec {
    pub fn defining_string(&self) -> Word {
        let mut v = self.past.0.clone();
        v.extend_from_slice(&self.future.0);
        Word(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariationRow {
    pub m: usize,
    pub n: usize,
    pub variation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationFit {
    pub rows: Vec<VariationRow>,
    /// Largest measured variation among rectangles with `min(m, n) = k`.
    pub by_min: Vec<(usize, f64)>,
    /// Fitted constant; `None` when every variation vanishes.
    pub c: Option<f64>,
    pub theta0: Option<f64>,
    /// Lower bound `max(1/K_0^2 + alpha^2, a_1/a)` for the contraction rate.
    pub theta1: f64,
    pub residual: f64,
    pub r_squared: f64,
    pub monotone: bool,
}

impl VariationFit {
    pub fn passes(&self) -> bool {
        self.monotone && self.theta0.is_none_or(|t| t > 0.0 && t < 1.0)
    }
}

/// Vertical extent of the strip `S_past` (the whole `[0,1]` for an empty past).
fn strip_extent(spec: &ModelSpec, past: &Word) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0, 1.0);
    for &s in &past.0 {
        lo = spec.strip_offset(s) + spec.height(s) * lo;
        hi = spec.strip_offset(s) + spec.height(s) * hi;
    }
    (lo, hi)
}

/// Max minus min of `log D^u F` over sample points of the rectangle.
///
/// Points are pulled back from a grid on `[0, 1)` through the inverse
/// branches of the future word, so deep cylinders are resolved at full
/// precision.
pub fn rectangle_variation(rect: &RectangleSpec, samples: usize, spec: &ModelSpec) -> Result<f64> {
    if !rect.defining_string().is_admissible() {
        return Err(Error::Argument(format!(
            "rectangle {}|{} is not admissible",
            rect.past, rect.future
        )));
    }
    if rect.future.is_empty() {
        return Err(Error::Argument("rectangle needs a nonempty future".into()));
    }
    let samples = samples.max(2);
    let (ylo, yhi) = strip_extent(spec, &rect.past);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..=samples {
        let u = (k as f64 + 0.5) / (samples + 1) as f64;
        let mut x = u;
        for &s in rect.future.0.iter().rev() {
            x = apply_inverse_branch(spec, Point::new(x, 0.0), s)?.point.x;
        }
        let y = ylo + (yhi - ylo) * (k as f64 / samples as f64);
        let v = unstable_derivative(spec, Point::new(x, y))?.ln();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(hi - lo)
}

fn fit_rows(rows: Vec<VariationRow>, spec: &ModelSpec) -> Result<VariationFit> {
    let report = verify_conditions(spec, 64)?;
    let theta1 = (1.0 / (report.k0 * report.k0) + spec.cone_slope * spec.cone_slope)
        .max(spec.height_base / spec.width_base);
    let kmax = rows.iter().map(|r| r.m.min(r.n)).max().unwrap_or(0);
    let by_min: Vec<(usize, f64)> = (0..=kmax)
        .filter_map(|k| {
            rows.iter()
                .filter(|r| r.m.min(r.n) == k)
                .map(|r| r.variation)
                .reduce(f64::max)
                .map(|v| (k, v))
        })
        .collect();
    let monotone = by_min.windows(2).all(|p| p[1].1 <= p[0].1);
    let pts: Vec<(f64, f64)> = by_min
        .iter()
        .filter(|(k, v)| *k >= 1 && *v > 0.0)
        .map(|&(k, v)| (k as f64, v.ln()))
        .collect();
    let (c, theta0, residual, r_squared) = if pts.is_empty() {
        (None, None, 0.0, 1.0)
    } else {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        match linear_fit(&xs, &ys) {
            Some(f) => (
                Some(f.intercept.exp()),
                Some(f.slope.exp()),
                f.residual,
                f.r_squared,
            ),
            None => (None, None, f64::NAN, f64::NAN),
        }
    };
    Ok(VariationFit {
        rows,
        by_min,
        c,
        theta0,
        theta1,
        residual,
        r_squared,
        monotone,
    })
}

/// Variation over the admissible sub-rectangles of `rect`: every past suffix
/// of length `m' <= m` combined with every future prefix of length
/// `1 <= n' <= n`, then fitted against `min(m', n')`.
pub fn variation_check(rect: &RectangleSpec, samples: usize, spec: &ModelSpec) -> Result<VariationFit> {
    if !rect.defining_string().is_admissible() {
        return Err(Error::Argument(format!(
            "rectangle {}|{} is not admissible",
            rect.past, rect.future
        )));
    }
    let m = rect.past.len();
    let n = rect.future.len();
    let mut rows = Vec::new();
    for mm in 0..=m {
        for nn in 1..=n {
            let sub = RectangleSpec {
                past: Word(rect.past.0[m - mm..].to_vec()),
                future: Word(rect.future.0[..nn].to_vec()),
            };
            if sub.defining_string().is_admissible() {
                rows.push(VariationRow {
                    m: mm,
                    n: nn,
                    variation: rectangle_variation(&sub, samples, spec)?,
                });
            }
        }
    }
    fit_rows(rows, spec)
}

/// Variation over a family of admissible rectangles with `m <= max_m`,
/// `1 <= n <= max_n` and symbols at most `symbol_bound`.
///
/// For `m >= 1` the past is `[b, ..., b]` with `b = symbol_bound`, which makes
/// every future with symbols at most `b` admissible; for `m = 0` the future
/// itself must be admissible. Each row records the largest variation over
/// the futures of that length.
pub fn variation_family(
    spec: &ModelSpec,
    max_m: usize,
    max_n: usize,
    symbol_bound: u32,
    samples: usize,
) -> Result<VariationFit> {
    use rayon::prelude::*;
    if max_n == 0 || symbol_bound == 0 {
        return Err(Error::Argument("need max_n >= 1 and symbol_bound >= 1".into()));
    }
    let mut rows = Vec::new();
    for m in 0..=max_m {
        for n in 1..=max_n {
            let past = Word(vec![symbol_bound; m]);
            let rects: Vec<RectangleSpec> = all_words(n, symbol_bound)
                .into_iter()
                .map(|future| RectangleSpec { past: past.clone(), future })
                .filter(|r| r.defining_string().is_admissible())
                .collect();
            let vals = rects
                .par_iter()
                .map(|r| rectangle_variation(r, samples, spec))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(VariationRow {
                m,
                n,
                variation: vals.into_iter().fold(0.0, f64::max),
            });
        }
    }
    fit_rows(rows, spec)
}

fn all_words(n: usize, bound: u32) -> Vec<Word> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|w: Vec<u32>| {
                (1..=bound).map(move |s| {
                    let mut v = w.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    out.into_iter().map(Word).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(v: &[u32]) -> Word {
        Word::new(v)
    }

    #[test]
    fn admissibility_examples() {
        assert!(w(&[1, 1]).is_admissible());
        assert!(!w(&[1, 2]).is_admissible());
        assert!(w(&[1, 1, 2, 4]).is_admissible());
        assert!(!w(&[1, 1, 2, 5]).is_admissible());
        assert!(w(&[]).is_admissible());
        assert!(w(&[7]).is_admissible());
    }

    #[test]
    fn enumeration_examples() {
        let e = enumerate_admissible(&w(&[1]), 3, None).unwrap();
        assert_eq!(e, vec![w(&[1, 1, 1]), w(&[1, 1, 2])]);
        let e = enumerate_admissible(&w(&[1]), 4, None).unwrap();
        let expect: Vec<Word> = [[1, 1, 1, 1], [1, 1, 1, 2], [1, 1, 1, 3], [1, 1, 2, 1], [1, 1, 2, 2], [1, 1, 2, 3], [1, 1, 2, 4]]
            .iter()
            .map(|v| w(v))
            .collect();
        assert_eq!(e, expect);
        let e = enumerate_admissible(&w(&[]), 2, Some(3)).unwrap();
        let expect: Vec<Word> = [[1, 1], [2, 1], [2, 2], [3, 1], [3, 2], [3, 3]]
            .iter()
            .map(|v| w(v))
            .collect();
        assert_eq!(e, expect);
        assert!(enumerate_admissible(&w(&[1, 2]), 3, None).is_err());
        assert!(enumerate_admissible(&w(&[]), 2, None).is_err());
    }

    #[test]
    fn gaps_of_three() {
        let g = enumerate_gaps(3, 1).unwrap();
        assert_eq!(g, vec![Gap { stem: w(&[3]), threshold: 3 }]);
        let g: Vec<(Vec<u32>, u64)> = enumerate_gaps(3, 2)
            .unwrap()
            .into_iter()
            .map(|g| (g.stem.0, g.threshold))
            .collect();
        assert_eq!(g, vec![(vec![3, 1], 4), (vec![3, 2], 5), (vec![3, 3], 6)]);
        let g = enumerate_gaps(3, 3).unwrap();
        assert_eq!(g[0], Gap { stem: w(&[3, 1, 1]), threshold: 5 });
    }

    #[test]
    fn gap_threshold_exceeds_order() {
        for n in 1..=3 {
            for order in 1..=6 {
                for g in enumerate_gaps(n, order).unwrap() {
                    assert!(g.threshold >= order as u64);
                    let mut v = g.stem.0.clone();
                    v.push(g.threshold as u32 + 1);
                    assert!(!is_admissible(&v));
                    v.pop();
                    v.push(g.threshold as u32);
                    assert!(is_admissible(&v));
                }
            }
        }
    }

    #[test]
    fn cylinder_width_examples() {
        let s = ModelSpec::default();
        let c = cylinder_width(&w(&[1]), &s).unwrap();
        assert_eq!((c.lower, c.upper), (0.5, 0.5));
        let c = cylinder_width(&w(&[1, 1, 2]), &s).unwrap();
        assert_eq!((c.lower, c.upper), (1.0 / 16.0, 1.0 / 16.0));
        assert_eq!(
            cylinder_width_exact(&w(&[1, 1, 2]), &s),
            crate::model::pow2_rational(4)
        );
    }

    #[test]
    fn perturbed_width_brackets_endpoint_computation() {
        let s = ModelSpec {
            perturbation: 0.05,
            ..ModelSpec::default()
        };
        for word in [w(&[1]), w(&[1, 1, 2]), w(&[2, 1, 3, 1])] {
            let mut lo = 0.0;
            let mut hi = 1.0f64.next_down();
            for &sym in word.0.iter().rev() {
                lo = apply_inverse_branch(&s, Point::new(lo, 0.0), sym).unwrap().point.x;
                hi = apply_inverse_branch(&s, Point::new(hi, 0.0), sym).unwrap().point.x;
            }
            let c = cylinder_width(&word, &s).unwrap();
            assert!(c.lower <= hi - lo && hi - lo <= c.upper + 1e-15, "{word}");
        }
    }

    #[test]
    fn width_additivity_exact() {
        let s = ModelSpec::default();
        for stem in enumerate_admissible(&w(&[1]), 4, None).unwrap() {
            let total: BigRational = (1..=stem.sum() as u32)
                .map(|j| {
                    let mut v = stem.0.clone();
                    v.push(j);
                    cylinder_width_exact(&Word(v), &s)
                })
                .sum();
            // one-step extensions cover the stem up to the gap mass a^S
            let a = s.width_base_exact();
            let gap = cylinder_width_exact(&stem, &s) * num_traits::Pow::pow(&a, stem.sum() as u32);
            assert_eq!(total + gap, cylinder_width_exact(&stem, &s));
        }
    }

    #[test]
    fn affine_variation_is_zero() {
        let s = ModelSpec::default();
        let rect = RectangleSpec { past: w(&[2, 1]), future: w(&[3, 1, 2]) };
        assert_eq!(rectangle_variation(&rect, 32, &s).unwrap(), 0.0);
        let f = variation_check(&rect, 32, &s).unwrap();
        assert!(f.rows.iter().all(|r| r.variation == 0.0));
        assert!(f.c.is_none() && f.passes());
    }

    #[test]
    fn full_height_variation_matches_biv() {
        let s = ModelSpec { perturbation: 0.05, ..ModelSpec::default() };
        let rect = RectangleSpec { past: w(&[]), future: w(&[2]) };
        let v = rectangle_variation(&rect, 4096, &s).unwrap();
        let exact = (1.05f64 / 0.95).ln();
        assert!(v <= exact + 1e-12 && v > exact - 1e-5, "{v}");
    }

    #[test]
    fn perturbed_family_decays() {
        let s = ModelSpec { perturbation: 0.05, ..ModelSpec::default() };
        let f = variation_family(&s, 4, 4, 3, 32).unwrap();
        assert!(f.monotone);
        let t = f.theta0.unwrap();
        assert!(t > 0.0 && t < 1.0, "{t}");
        assert!((f.theta1 - 2.0 / 3.0).abs() < 1e-12);
    }

    fn admissible_word() -> impl Strategy<Value = Vec<u32>> {
        (1u32..6, proptest::collection::vec(0.0f64..1.0, 0..12)).prop_map(|(first, fr)| {
            let mut v = vec![first];
            let mut sum = first as u64;
            for f in fr {
                let s = 1 + ((sum as f64) * f).floor() as u64;
                let s = s.min(sum);
                v.push(s as u32);
                sum += s;
            }
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(5000))]
        #[test]
        fn prefixes_of_admissible_words_are_admissible(v in admissible_word()) {
            prop_assert!(is_admissible(&v));
            for k in 0..=v.len() {
                prop_assert!(is_admissible(&v[..k]));
            }
        }

        #[test]
        fn comma_placement_does_not_matter(v in admissible_word(), cut in 0usize..12) {
            let cut = cut.min(v.len().saturating_sub(1));
            let r = RectangleSpec { past: Word(v[..cut].to_vec()), future: Word(v[cut..].to_vec()) };
            prop_assert!(r.defining_string().is_admissible());
        }

        #[test]
        fn overlap_concatenation_preserves_admissibility(u in admissible_word(), v in admissible_word()) {
            let mut v = v;
            v[0] = *u.last().unwrap();
            prop_assume!(is_admissible(&v));
            let joined = Word(u).overlap_concat(&Word(v));
            prop_assert!(joined.is_admissible());
        }
    }
}
