//! First-return words, the induced alphabet at symbol 1 and return-time
//! tails.
//!
//! A return word `[j0, i_1, ..., i_{n-2}, j1]` is admissible and every suffix
//! starting at an interior position `1..=n-2` is inadmissible. Suffixes are
//! tracked through their running sums: a suffix is *alive* while each new
//! symbol is at most its sum so far, and dies for good at the first symbol
//! exceeding it. Earlier suffixes have larger sums, so whenever a suffix is
//! alive every older suffix still alive has a larger sum.

use crate::error::{Error, Result};
use crate::fit::{linear_fit, LineFit};
use crate::model::ModelSpec;
use crate::symbolic::{cylinder_width, is_admissible, Word};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReturnWord {
    pub word: Word,
    pub source: u32,
    pub target: u32,
    pub return_time: usize,
}

impl ReturnWord {
    /// Validates `word` as a first-return word.
    pub fn from_word(word: Word) -> Option<ReturnWord> {
        if !is_return_word(&word.0) {
            return None;
        }
        Some(ReturnWord {
            source: word.0[0],
            target: *word.0.last().unwrap(),
            return_time: word.len() - 1,
            word,
        })
    }
}

/// Largest sum of a suffix starting at a position `>= 1` that is still alive
/// after the whole of `w` (0 when none is).
pub fn largest_alive_sum(w: &[u32]) -> u64 {
    let mut alive: u64 = 0;
    for &s in w.iter().skip(1) {
        let s = s as u64;
        alive = if alive >= s { alive + s } else { s };
    }
    alive
}

/// Admissible, length at least two, and every interior suffix dead.
pub fn is_return_word(w: &[u32]) -> bool {
    if w.len() < 2 || w.contains(&0) || !is_admissible(w) {
        return false;
    }
    let n = w.len();
    largest_alive_sum(&w[..n - 1]) < w[n - 1] as u64
}

/// Which predicate defines first returns to `C_1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mp1Mode {
    /// Compositions of return words through targets other than 1.
    StrictSuffix,
    /// Words `[1, ..., 1]` whose interior symbols all differ from 1.
    NoInteriorOne,
}

/// Every return word from `j0` to `j1`, in lexicographic order.
pub fn first_return_words(j0: u32, j1: u32) -> Result<Vec<ReturnWord>> {
    first_return_words_capped(j0, j1, usize::MAX)
}

/// Return words from `j0` to `j1` of length at most `max_len`.
pub fn first_return_words_capped(j0: u32, j1: u32, max_len: usize) -> Result<Vec<ReturnWord>> {
    if j0 == 0 || j1 == 0 {
        return Err(Error::Argument("symbols start at 1".into()));
    }
    let mut out = Vec::new();
    let mut cur = vec![j0];
    dfs_returns(&mut cur, j0 as u64, 0, j1 as u64, max_len, &mut out);
    out.sort();
    Ok(out)
}

fn dfs_returns(cur: &mut Vec<u32>, sum: u64, alive: u64, j1: u64, max_len: usize, out: &mut Vec<ReturnWord>) {
    if cur.len() + 1 > max_len {
        return;
    }
    if alive < j1 && j1 <= sum {
        let mut w = cur.clone();
        w.push(j1 as u32);
        out.push(ReturnWord::from_word(Word(w)).expect("constructed return word"));
    }
    // Interior symbol y keeps the largest alive sum below j1 only if
    // y <= alive (then it grows to alive + y) or y > alive (then it is y).
    for y in 1..=sum.min(j1 - 1) {
        let next = if alive >= y { alive + y } else { y };
        if next >= j1 {
            continue;
        }
        cur.push(y as u32);
        dfs_returns(cur, sum + y, next, j1, max_len, out);
        cur.pop();
    }
}

/// Brute-force predicate for a first return to `C_1` in the given mode.
pub fn is_mp1_word(w: &[u32], mode: Mp1Mode) -> bool {
    if w.len() < 2 || w[0] != 1 || *w.last().unwrap() != 1 || !is_admissible(w) {
        return false;
    }
    match mode {
        Mp1Mode::NoInteriorOne => w[1..w.len() - 1].iter().all(|&s| s != 1),
        Mp1Mode::StrictSuffix => {
            // Largest alive sum over interior positions carrying symbol 1.
            let mut b: u64 = 0;
            for &s in &w[1..w.len() - 1] {
                let s = s as u64;
                b = if b >= s && b > 0 {
                    b + s
                } else if s == 1 {
                    1
                } else {
                    0
                };
            }
            b == 0
        }
    }
}

/// First-return words to `C_1` of length at most `max_len`.
///
/// In `StrictSuffix` mode they are built by chaining return words through
/// intermediate targets different from 1 and closing with a return word
/// whose target is 1.
pub fn mp1_words(max_len: usize, mode: Mp1Mode) -> Result<Vec<ReturnWord>> {
    if max_len < 2 {
        return Err(Error::Argument("max_len must be at least 2".into()));
    }
    let mut out = Vec::new();
    match mode {
        Mp1Mode::NoInteriorOne => {
            for len in 2..=max_len {
                let mut cur = vec![1u32];
                no_interior_one(&mut cur, 1, len, &mut out);
            }
        }
        Mp1Mode::StrictSuffix => {
            let cur = Word(vec![1]);
            compose(&cur, max_len, &mut out)?;
        }
    }
    out.sort_by(|a, b| a.word.len().cmp(&b.word.len()).then(a.word.cmp(&b.word)));
    Ok(out)
}

fn mp1_return(word: Word) -> ReturnWord {
    ReturnWord {
        source: 1,
        target: 1,
        return_time: word.len() - 1,
        word,
    }
}

fn no_interior_one(cur: &mut Vec<u32>, sum: u64, len: usize, out: &mut Vec<ReturnWord>) {
    if cur.len() + 1 == len {
        cur.push(1);
        if is_mp1_word(cur, Mp1Mode::NoInteriorOne) {
            out.push(mp1_return(Word(cur.clone())));
        }
        cur.pop();
        return;
    }
    for y in 2..=sum {
        cur.push(y as u32);
        no_interior_one(cur, sum + y, len, out);
        cur.pop();
    }
}

fn compose(cur: &Word, max_len: usize, out: &mut Vec<ReturnWord>) -> Result<()> {
    let from = cur.last().unwrap();
    let room = max_len + 1 - cur.len();
    // A return word of length L from `from` can reach targets up to its sum.
    let reach = (from as u64) << room.min(40);
    for target in 1..=reach.min(u32::MAX as u64) as u32 {
        let pieces = first_return_words_capped(from, target, room + 1)?;
        if pieces.is_empty() && target as u64 > (from as u64) << (room.saturating_sub(1)).min(40) {
            break;
        }
        for p in pieces {
            let joined = cur.overlap_concat(&p.word);
            if joined.len() > max_len {
                continue;
            }
            if target == 1 {
                out.push(mp1_return(joined));
            } else if joined.len() < max_len {
                compose(&joined, max_len, out)?;
            }
        }
    }
    Ok(())
}

/// Transition matrix of the induced alphabet: entry `(u, v)` is 1 when the
/// overlap-concatenation `u v` is admissible.
pub fn induced_transition_matrix(states: &[ReturnWord]) -> Vec<Vec<u8>> {
    states
        .iter()
        .map(|u| {
            states
                .iter()
                .map(|v| {
                    (u.target == v.source && u.word.overlap_concat(&v.word).is_admissible()) as u8
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkovCheck {
    pub admissible: bool,
    /// Extensions `v + [j]` that are inadmissible on their own but admissible
    /// after the longer past `u`.
    pub strictness_witnesses: Vec<Word>,
}

/// Symbolic Markov property: the overlap-concatenation of `u` and `v` is
/// admissible.
pub fn markov_check(u: &Word, v: &Word) -> Result<MarkovCheck> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::Argument("words must be nonempty".into()));
    }
    if !u.is_admissible() || !v.is_admissible() {
        return Err(Error::Argument(format!("{u} and {v} must be admissible")));
    }
    if u.last() != v.first() {
        return Err(Error::Argument(format!(
            "{u} must end with the first symbol of {v}"
        )));
    }
    let joined = u.overlap_concat(v);
    let short = v.sum();
    let long = joined.sum();
    let strictness_witnesses = (short + 1..=long.min(short + 3))
        .map(|j| {
            let mut w = v.0.clone();
            w.push(j as u32);
            Word(w)
        })
        .collect();
    Ok(MarkovCheck {
        admissible: joined.is_admissible(),
        strictness_witnesses,
    })
}

/// Outcome of a sweep of [`markov_check`] over many pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkovSweep {
    pub pairs: u64,
    pub failures: u64,
    /// First failing pair, if any.
    pub first_failure: Option<(Word, Word)>,
}

impl MarkovSweep {
    fn record(&mut self, u: &Word, v: &Word) -> Result<()> {
        self.pairs += 1;
        if !markov_check(u, v)?.admissible {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some((u.clone(), v.clone()));
            }
        }
        Ok(())
    }
}

/// Every pair of admissible words of length at most `max_len` with symbols
/// at most `max_symbol` whose ends overlap.
pub fn markov_sweep(max_len: usize, max_symbol: u32) -> Result<MarkovSweep> {
    if max_len == 0 || max_symbol == 0 {
        return Err(Error::Argument("bounds must be positive".into()));
    }
    let mut words = Vec::new();
    for first in 1..=max_symbol {
        for len in 1..=max_len {
            words.extend(crate::symbolic::enumerate_admissible(&Word(vec![first]), len, Some(max_symbol))?);
        }
    }
    let mut by_first: Vec<Vec<&Word>> = vec![Vec::new(); max_symbol as usize + 1];
    for w in &words {
        by_first[w.0[0] as usize].push(w);
    }
    let mut out = MarkovSweep {
        pairs: 0,
        failures: 0,
        first_failure: None,
    };
    for u in &words {
        for v in &by_first[*u.0.last().unwrap() as usize] {
            out.record(u, v)?;
        }
    }
    Ok(out)
}

/// Random admissible word: each next symbol uniform in `1..=min(sum, 2^20)`.
fn random_admissible(rng: &mut impl rand::Rng, first: u32, len: usize) -> Word {
    let mut v = vec![first];
    let mut sum = first as u64;
    while v.len() < len {
        let x = rng.gen_range(1..=sum.min(1 << 20)) as u32;
        v.push(x);
        sum += x as u64;
    }
    Word(v)
}

/// `cases` random pairs of lengths 6 to 20 with first symbols up to 12.
pub fn markov_random(cases: u64, seed: u64) -> Result<MarkovSweep> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = MarkovSweep {
        pairs: 0,
        failures: 0,
        first_failure: None,
    };
    for _ in 0..cases {
        let (lu, lv) = (rng.gen_range(6..=20), rng.gen_range(6..=20));
        let first = rng.gen_range(1..=12);
        let u = random_admissible(&mut rng, first, lu);
        let v = random_admissible(&mut rng, *u.0.last().unwrap(), lv);
        out.record(&u, &v)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingEntry {
    pub from: Word,
    pub to: Word,
    /// Least `N` such that every length in `[N, horizon]` connects the pair.
    pub n: Option<usize>,
}

/// Connection lengths between induced states, counted in iterates of the
/// original map: a path `a = u_0, ..., u_k = b` has length
/// `r(u_0) + ... + r(u_{k-1})`.
pub fn mixing_check(states: &[ReturnWord], horizon: usize) -> Result<Vec<MixingEntry>> {
    if horizon == 0 {
        return Err(Error::Argument("horizon must be positive".into()));
    }
    let m = induced_transition_matrix(states);
    let k = states.len();
    let mut out = Vec::with_capacity(k * k);
    for a in 0..k {
        // reach[t][s]: state s can be entered exactly t iterates after a starts.
        let mut reach = vec![vec![false; k]; horizon + 1];
        let mut frontier: Vec<(usize, usize)> = Vec::new();
        let ra = states[a].return_time;
        for s in 0..k {
            if m[a][s] == 1 && ra <= horizon && !reach[ra][s] {
                reach[ra][s] = true;
                frontier.push((ra, s));
            }
        }
        for t in 1..=horizon {
            for s in 0..k {
                if !reach[t][s] {
                    continue;
                }
                let nt = t + states[s].return_time;
                if nt > horizon {
                    continue;
                }
                for s2 in 0..k {
                    if m[s][s2] == 1 {
                        reach[nt][s2] = true;
                    }
                }
            }
        }
        for b in 0..k {
            let mut n = None;
            for t in (1..=horizon).rev() {
                if reach[t][b] {
                    n = Some(t);
                } else {
                    break;
                }
            }
            out.push(MixingEntry {
                from: states[a].word.clone(),
                to: states[b].word.clone(),
                n,
            });
        }
    }
    Ok(out)
}

/// Induced states with every symbol at most `symbol_bound` and return time
/// at most `max_return`.
pub fn mixing_states(symbol_bound: u32, max_return: usize) -> Result<Vec<ReturnWord>> {
    if symbol_bound == 0 || max_return == 0 {
        return Err(Error::Argument("bounds must be positive".into()));
    }
    let mut out = Vec::new();
    let mut cur = vec![1u32];
    bounded_mp1(&mut cur, 1, 0, symbol_bound as u64, max_return + 1, &mut out);
    out.sort_by(|a, b| a.word.len().cmp(&b.word.len()).then(a.word.cmp(&b.word)));
    Ok(out)
}

fn bounded_mp1(cur: &mut Vec<u32>, sum: u64, b: u64, bound: u64, max_len: usize, out: &mut Vec<ReturnWord>) {
    if cur.len() + 1 > max_len {
        return;
    }
    if b == 0 {
        let mut w = cur.clone();
        w.push(1);
        out.push(mp1_return(Word(w)));
    }
    for y in 1..=sum.min(bound) {
        let nb = if b >= y && b > 0 {
            b + y
        } else if y == 1 {
            1
        } else {
            0
        };
        // An alive 1-suffix can only be killed by a symbol above its sum.
        if nb >= bound {
            continue;
        }
        cur.push(y as u32);
        bounded_mp1(cur, sum + y, nb, bound, max_len, out);
        cur.pop();
    }
}

/// Exact return-time table for first returns to the union of the `C_j`,
/// starting from symbol 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub n: usize,
    /// Total width of return words from 1 with return time `n`.
    pub mass: f64,
    /// `sum_{j >= n} w_j = a^{n-1}`.
    pub bound: f64,
    /// Smallest landing symbol among those words.
    pub min_landing: u64,
    #[serde(skip)]
    pub exact: BigRational,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailFit {
    pub rows: Vec<TailRow>,
    pub c: f64,
    pub beta: f64,
    pub residual: f64,
    pub r_squared: f64,
    /// Stems whose largest alive interior sum is below their length.
    pub lemma_counterexamples: u64,
    /// Number of stems covered by the lemma check.
    pub stems_checked: u64,
    pub fit_window: (usize, usize),
}

/// Counts of stems from `[1]` grouped by (sum `S`, largest alive interior
/// sum `A`), stored by diagonal `d = S - A`.
struct StemCounts {
    /// rows[d][a] = number of stems with S = d + a, A = a.
    rows: Vec<Vec<u64>>,
    smax: usize,
}

impl StemCounts {
    fn initial(smax: usize) -> Self {
        let mut rows: Vec<Vec<u64>> = (0..=smax).map(|d| vec![0; smax + 1 - d]).collect();
        rows[1][0] = 1;
        StemCounts { rows, smax }
    }

    /// Appends one symbol to every stem. Symbol `y <= A` keeps the diagonal
    /// and moves `A` to `A + y`; symbol `A < y <= S` starts a new largest
    /// alive suffix `y` on diagonal `S`.
    fn step(&self) -> StemCounts {
        let smax = self.smax;
        let mut diff: Vec<Vec<u64>> = (0..=smax).map(|d| vec![0; smax + 2 - d]).collect();
        let mut add = |d: usize, lo: usize, hi: usize, c: u64| {
            if d > smax {
                return;
            }
            let top = smax - d;
            if lo > top {
                return;
            }
            let hi = hi.min(top);
            diff[d][lo] = diff[d][lo].wrapping_add(c);
            diff[d][hi + 1] = diff[d][hi + 1].wrapping_sub(c);
        };
        for (d, row) in self.rows.iter().enumerate() {
            for (a, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                if a >= 1 {
                    add(d, a + 1, 2 * a, c);
                }
                let s = d + a;
                add(s, a + 1, s, c);
            }
        }
        let rows = diff
            .into_iter()
            .map(|row| {
                let mut acc = 0u64;
                let mut out: Vec<u64> = row
                    .iter()
                    .map(|&v| {
                        acc = acc.wrapping_add(v);
                        acc
                    })
                    .collect();
                out.pop();
                out
            })
            .collect();
        StemCounts { rows, smax }
    }
}

/// Exact return-time masses `N(n)`, `n = 1..=n_max`, and the lemma check that
/// every stem of `k >= 1` continuation symbols has largest alive interior
/// sum at least `k` (so that any landing symbol ending a return at time `n`
/// is at least `n`).
pub fn return_time_masses(n_max: usize, spec: &ModelSpec) -> Result<(Vec<TailRow>, u64, u64)> {
    spec.validate()?;
    if n_max == 0 || n_max > 16 {
        return Err(Error::Argument("n_max must lie in 1..=16".into()));
    }
    let a = spec.width_base_exact();
    let one_minus_a = BigRational::one() - &a;
    let smax = 1usize << (n_max - 1);
    let mut counts = StemCounts::initial(smax);
    let mut rows = Vec::with_capacity(n_max);
    let mut bad = 0u64;
    let mut checked = 0u64;
    for k in 0..n_max {
        // Stems have k + 1 symbols; their weight is (1-a)^{k+1} a^{S-k-1}.
        // A landing y in (A, S] adds w_y, summing to a^A - a^S.
        let mut coef: Vec<i128> = vec![0; 2 * smax + 2];
        let mut min_landing = u64::MAX;
        for (d, row) in counts.rows.iter().enumerate() {
            for (aa, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let s = d + aa;
                if k >= 1 {
                    checked += c;
                    if aa < k {
                        bad += c;
                    }
                }
                if aa < s {
                    min_landing = min_landing.min(aa as u64 + 1);
                    coef[aa + s - k - 1] += c as i128;
                    coef[2 * s - k - 1] -= c as i128;
                }
            }
        }
        let mut total = BigRational::zero();
        let mut apow = BigRational::one();
        for c in coef.iter() {
            if *c != 0 {
                total += &apow * BigRational::from_integer(BigInt::from(*c));
            }
            apow = &apow * &a;
        }
        let exact = total * Pow::pow(&one_minus_a, (k + 1) as u32);
        rows.push(TailRow {
            n: k + 1,
            mass: exact.to_f64().unwrap_or(f64::NAN),
            bound: spec.width_base.powi(k as i32),
            min_landing,
            exact,
        });
        if k + 1 < n_max {
            counts = counts.step();
        }
    }
    Ok((rows, bad, checked))
}

/// Return-time tail for first returns to the union of the `C_j` from
/// symbol 1, with an exponential fit over `n in [3, n_max]`.
pub fn return_tail(n_max: usize, spec: &ModelSpec) -> Result<TailFit> {
    if n_max < 3 {
        return Err(Error::Argument("n_max must be at least 3".into()));
    }
    if !spec.is_affine() {
        return Err(Error::Argument(
            "return-time masses are computed in the affine model".into(),
        ));
    }
    let (rows, bad, checked) = return_time_masses(n_max, spec)?;
    let fit = fit_tail(&rows, 3, n_max)?;
    Ok(TailFit {
        rows,
        c: fit.intercept.exp(),
        beta: fit.slope.exp(),
        residual: fit.residual,
        r_squared: fit.r_squared,
        lemma_counterexamples: bad,
        stems_checked: checked,
        fit_window: (3, n_max),
    })
}

fn fit_tail(rows: &[TailRow], lo: usize, hi: usize) -> Result<LineFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.n >= lo && r.n <= hi && r.mass > 0.0)
        .map(|r| (r.n as f64, r.mass.ln()))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    linear_fit(&xs, &ys).ok_or_else(|| Error::InsufficientData("tail fit needs two points".into()))
}

/// Sum over return words from 1 with return time at most `n_max` of the leaf
/// measure of their cells, as an interval, together with the interval for
/// `w_1 rho(1)`. Each cell has measure `width(stem) w_y rho(y)`.
pub fn kac_check(n_max: usize, spec: &ModelSpec, depth: usize) -> Result<((f64, f64), (f64, f64), f64)> {
    use crate::cantor::relative_measure;
    let (rows, _, _) = return_time_masses(n_max, spec)?;
    let smax = 1usize << (n_max - 1);
    let rho: Vec<(f64, f64)> = (0..=2 * smax)
        .map(|y| {
            if y == 0 {
                Ok((0.0, 0.0))
            } else if y > 200 {
                Ok((1.0 - spec.width_base.powi(y as i32 - 1) / (1.0 - spec.width_base), 1.0))
            } else {
                relative_measure(y as u64, depth, spec).map(|m| (m.lower, m.upper))
            }
        })
        .collect::<Result<_>>()?;
    // prefix sums of w_y rho(y)
    let mut ql = vec![0.0; 2 * smax + 2];
    let mut qu = vec![0.0; 2 * smax + 2];
    for y in 1..=2 * smax {
        let w = spec.width(y as u32);
        ql[y] = ql[y - 1] + w * rho[y].0;
        qu[y] = qu[y - 1] + w * rho[y].1;
    }
    let mut counts = StemCounts::initial(smax);
    let (mut lo, mut hi) = (0.0, 0.0);
    let a = spec.width_base;
    for k in 0..n_max {
        for (d, row) in counts.rows.iter().enumerate() {
            for (aa, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let s = d + aa;
                let weight = (1.0 - a).powi(k as i32 + 1) * a.powi((s - k - 1) as i32);
                lo += c as f64 * weight * (ql[s] - ql[aa]);
                hi += c as f64 * weight * (qu[s] - qu[aa]);
            }
        }
        if k + 1 < n_max {
            counts = counts.step();
        }
    }
    let tail: f64 = rows.last().map(|r| r.bound * a).unwrap_or(0.0);
    let r1 = relative_measure(1, depth, spec)?;
    let w1 = spec.width(1);
    let slack = 1e-9 * (hi + 1.0);
    Ok(((lo - slack, hi + tail + slack), (w1 * r1.lower, w1 * r1.upper), tail))
}

/// Induced weights `M(r)` = sum of `exp(induced potential)` over first-return
/// words to `C_1` with return time `r`, from a budget-capped dynamic program.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InducedMasses {
    pub by_time: Vec<f64>,
    /// Mass of stems discarded because their budget exceeded the cap.
    pub pruned: f64,
    pub budget_cap: usize,
    /// Geometric ratio fitted to the last half of `by_time`.
    pub beta: f64,
    /// `M(r_max) beta / (1 - beta)`: estimate of the mass beyond `r_max`.
    pub tail_estimate: f64,
}

impl InducedMasses {
    pub fn total(&self) -> f64 {
        self.by_time.iter().sum::<f64>() + self.tail_estimate
    }

    /// Tail sums `sum_{r > n} M(r)` including the geometric estimate.
    pub fn tail_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.by_time.len() + 1];
        let mut acc = self.tail_estimate;
        for r in (0..=self.by_time.len()).rev() {
            out[r] = acc;
            if r > 0 {
                acc += self.by_time[r - 1];
            }
        }
        out
    }
}

/// Dynamic program over (budget `S`, largest alive sum `b` among interior
/// positions carrying symbol 1). A stem closes into a return to `C_1`
/// exactly when `b = 0`.
pub fn induced_return_masses(spec: &ModelSpec, r_max: usize, budget_cap: usize) -> Result<InducedMasses> {
    spec.validate()?;
    if !spec.is_affine() {
        return Err(Error::Argument("induced masses use the affine weights".into()));
    }
    if r_max < 4 || budget_cap < 8 {
        return Err(Error::Argument("need r_max >= 4 and budget_cap >= 8".into()));
    }
    let t = budget_cap;
    let a = spec.width_base;
    let w: Vec<f64> = (0..=t).map(|y| if y == 0 { 0.0 } else { spec.width(y as u32) }).collect();
    // cur[s][b]
    let mut cur = vec![vec![0.0f64; t + 1]; t + 1];
    cur[1][0] = w[1];
    let mut by_time: Vec<f64> = Vec::with_capacity(r_max);
    let mut pruned = 0.0;
    for r in 1..=r_max {
        by_time.push((0..=t).map(|s| cur[s][0]).sum());
        if r == r_max {
            break;
        }
        let mut next = vec![vec![0.0f64; t + 1]; t + 1];
        // y <= b: (s, b) -> (s + y, b + y); along each diagonal d = s - b the
        // targets b' in [b+1, 2b] receive weight (1-a) a^{b'-b-1}.
        for d in 0..t {
            let mut acc = 0.0;
            for bp in 2..=(t - d) {
                // entering source b = bp - 1
                let b_in = bp - 1;
                acc = acc * a + cur[d + b_in][b_in] * w[1];
                // source b leaves once bp > 2b, i.e. b = (bp - 1) / 2 when bp odd
                if bp % 2 == 1 {
                    let b_out = (bp - 1) / 2;
                    if b_out >= 1 {
                        acc -= cur[d + b_out][b_out] * w[1] * a.powi((bp - b_out - 1) as i32);
                    }
                }
                let s2 = d + bp;
                if s2 <= t && acc != 0.0 {
                    next[s2][bp] += acc.max(0.0);
                }
            }
        }
        // y = 1 with b = 0: (s, 0) -> (s + 1, 1)
        for s in 1..t {
            next[s + 1][1] += cur[s][0] * w[1];
        }
        // 2 <= y, b < y <= s: (s, b) -> (s + y, 0)
        for s in 1..=t {
            let mut prefix = vec![0.0; s + 2];
            for b in 0..=s {
                prefix[b + 1] = prefix[b] + cur[s][b];
            }
            for y in 2..=s {
                let mass = prefix[y] * w[y];
                if s + y <= t {
                    next[s + y][0] += mass;
                } else {
                    pruned += mass;
                }
            }
            // symbols y <= b leaving the table: y in (t - s, b], total a^{t-s} - a^b
            let lo = t - s;
            for b in (lo + 1)..=s {
                pruned += cur[s][b] * (a.powi(lo as i32) - a.powi(b as i32));
            }
            if s + 1 > t {
                pruned += cur[s][0] * w[1];
            }
        }
        cur = next;
    }
    let n = by_time.len();
    let lo = n / 2;
    let xs: Vec<f64> = (lo..n).filter(|&r| by_time[r] > 0.0).map(|r| r as f64).collect();
    let ys: Vec<f64> = (lo..n).filter(|&r| by_time[r] > 0.0).map(|r| by_time[r].ln()).collect();
    let beta = linear_fit(&xs, &ys)
        .map(|f| f.slope.exp())
        .ok_or_else(|| Error::InsufficientData("induced masses vanish".into()))?;
    let tail_estimate = if beta < 1.0 {
        by_time[n - 1] * beta / (1.0 - beta)
    } else {
        f64::INFINITY
    };
    Ok(InducedMasses {
        by_time,
        pruned,
        budget_cap,
        beta,
        tail_estimate,
    })
}

/// Width in the affine model of the cell of a return word (for reports).
pub fn return_word_width(rw: &ReturnWord, spec: &ModelSpec) -> Result<f64> {
    Ok(cylinder_width(&rw.word, spec)?.upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_sweeps_find_no_failures() {
        let small = markov_sweep(3, 3).unwrap();
        assert_eq!(small.failures, 0);
        assert!(small.pairs > 0 && small.first_failure.is_none());
        let r = markov_random(500, 7).unwrap();
        assert_eq!((r.pairs, r.failures), (500, 0));
        assert_eq!(markov_random(50, 7).unwrap(), markov_random(50, 7).unwrap());
    }
    use crate::symbolic::enumerate_admissible;

    fn w(v: &[u32]) -> Word {
        Word::new(v)
    }

    /// Oracle: suffix admissibility checked literally.
    fn naive_return(v: &[u32]) -> bool {
        v.len() >= 2 && is_admissible(v) && (1..v.len() - 1).all(|k| !is_admissible(&v[k..]))
    }

    #[test]
    fn return_predicate_matches_literal_suffix_check() {
        for len in 2..=7 {
            for first in 1..=3 {
                for word in enumerate_admissible(&w(&[first]), len, Some(12)).unwrap() {
                    assert_eq!(is_return_word(&word.0), naive_return(&word.0), "{word}");
                }
            }
        }
    }

    #[test]
    fn worked_examples() {
        let r13 = first_return_words(1, 3).unwrap();
        let words: Vec<Word> = r13.iter().map(|r| r.word.clone()).collect();
        assert!(words.contains(&w(&[1, 1, 1, 3])));
        assert!(words.contains(&w(&[1, 1, 2, 3])));
        for r in &r13 {
            if r.word == w(&[1, 1, 1, 3]) || r.word == w(&[1, 1, 2, 3]) {
                assert_eq!(r.return_time, 3);
            }
        }
        let r11 = first_return_words(1, 1).unwrap();
        assert_eq!(r11[0].word, w(&[1, 1]));
        assert_eq!(r11[0].return_time, 1);
    }

    #[test]
    fn enumeration_is_complete_against_brute_force() {
        for j0 in 1..=4u32 {
            for j1 in 1..=6u32 {
                let got: Vec<Word> = first_return_words(j0, j1).unwrap().into_iter().map(|r| r.word).collect();
                let mut expect = Vec::new();
                for len in 2..=(j1 as usize + 2) {
                    for word in enumerate_admissible(&w(&[j0]), len, Some(j1)).unwrap() {
                        if word.last() == Some(j1) && naive_return(&word.0) {
                            expect.push(word);
                        }
                    }
                }
                expect.sort();
                assert_eq!(got, expect, "{j0} -> {j1}");
            }
        }
    }

    #[test]
    fn length_bounded_by_target_plus_one() {
        for j0 in 1..=8 {
            for j1 in 1..=8 {
                for r in first_return_words(j0, j1).unwrap() {
                    assert!(r.word.len() <= j1 as usize + 1, "{}", r.word);
                }
            }
        }
    }

    #[test]
    fn prefix_related_return_words_have_disjoint_cells() {
        for j0 in 1..=4 {
            let all: Vec<ReturnWord> = (1..=8).flat_map(|j1| first_return_words(j0, j1).unwrap()).collect();
            for u in &all {
                for v in &all {
                    if v.word.len() > u.word.len() && v.word.0.starts_with(&u.word.0) {
                        // the landing of u is not a return point inside v
                        assert!(!is_admissible(&v.word.0[u.word.len() - 1..]), "{} {}", u.word, v.word);
                    }
                }
            }
        }
    }

    #[test]
    fn mp1_composition_matches_brute_force() {
        let words = mp1_words(8, Mp1Mode::StrictSuffix).unwrap();
        assert_eq!(words[0].word, w(&[1, 1]));
        for len in 2..=8 {
            let got: Vec<Word> = words.iter().filter(|r| r.word.len() == len).map(|r| r.word.clone()).collect();
            let mut expect: Vec<Word> = enumerate_admissible(&w(&[1]), len, None)
                .unwrap()
                .into_iter()
                .filter(|x| is_mp1_word(&x.0, Mp1Mode::StrictSuffix))
                .collect();
            expect.sort();
            assert_eq!(got, expect, "length {len}");
        }
        let m = induced_transition_matrix(&words);
        assert!(m.iter().all(|row| row.iter().all(|&e| e == 1)));
    }

    #[test]
    fn no_interior_one_mode_is_degenerate() {
        let words = mp1_words(8, Mp1Mode::NoInteriorOne).unwrap();
        assert_eq!(words.len(), 1);
        assert_eq!(words[0].word, w(&[1, 1]));
    }

    #[test]
    fn markov_examples() {
        let u = w(&[1, 1, 2]);
        for k in 1..=2 {
            let r = markov_check(&u, &w(&[2, k])).unwrap();
            assert!(r.admissible);
        }
        let r = markov_check(&u, &w(&[2])).unwrap();
        assert!(r.strictness_witnesses.contains(&w(&[2, 3])));
        assert!(w(&[1, 1, 2, 3]).is_admissible() && !w(&[2, 3]).is_admissible());
        assert!(markov_check(&u, &w(&[3])).is_err());
    }

    #[test]
    fn mixing_small() {
        let states = mixing_states(4, 6).unwrap();
        assert!(states.len() > 3);
        assert_eq!(states[0].word, w(&[1, 1]));
        let table = mixing_check(&states, 20).unwrap();
        let first = table.iter().find(|e| e.from == w(&[1, 1]) && e.to == w(&[1, 1])).unwrap();
        assert_eq!(first.n, Some(1));
        assert!(table.iter().all(|e| e.n.is_some()));
        for s in &states {
            assert!(is_mp1_word(&s.word.0, Mp1Mode::StrictSuffix));
            assert!(s.word.0.iter().all(|&x| x <= 4));
        }
    }

    #[test]
    fn exact_masses_match_enumeration() {
        let s = ModelSpec::default();
        let (rows, bad, _) = return_time_masses(7, &s).unwrap();
        assert_eq!(bad, 0);
        for row in &rows {
            let n = row.n;
            let mut total = BigRational::zero();
            let mut min_landing = u64::MAX;
            for word in enumerate_admissible(&w(&[1]), n + 1, None).unwrap() {
                if naive_return(&word.0) {
                    total += crate::symbolic::cylinder_width_exact(&word, &s);
                    min_landing = min_landing.min(word.last().unwrap() as u64);
                }
            }
            assert_eq!(row.exact, total, "n = {n}");
            assert_eq!(row.min_landing, min_landing);
            assert!(min_landing >= n as u64);
        }
        assert_eq!(rows[0].exact, crate::model::pow2_rational(2));
    }

    #[test]
    fn tail_fit_default() {
        let t = return_tail(12, &ModelSpec::default()).unwrap();
        assert_eq!(t.lemma_counterexamples, 0);
        for r in &t.rows {
            assert!(r.mass <= r.bound * 2.0 - 1e-300 || r.n == 1);
            assert!(r.mass <= 2.0f64.powi(1 - r.n as i32));
        }
        assert!(t.beta < 1.0 && t.r_squared >= 0.98, "{} {}", t.beta, t.r_squared);
    }

    #[test]
    fn kac_identity_brackets() {
        let s = ModelSpec::default();
        let (lhs, rhs, _) = kac_check(10, &s, 60).unwrap();
        assert!(lhs.0 <= rhs.1 && rhs.0 <= lhs.1, "{lhs:?} {rhs:?}");
    }

    #[test]
    fn induced_masses_sum_to_one() {
        let m = induced_return_masses(&ModelSpec::default(), 100, 420).unwrap();
        assert_eq!(m.by_time[0], 0.5);
        assert_eq!(m.by_time[1], 0.0);
        assert_eq!(m.by_time[2], 0.0625);
        assert!((m.by_time[3] - 0.04296875).abs() < 1e-15);
        assert!((m.total() - 1.0).abs() < 1e-9, "{}", m.total());
        assert!((m.beta - 0.89834218).abs() < 1e-6, "{}", m.beta);
    }

    #[test]
    fn induced_masses_match_mp1_enumeration() {
        let s = ModelSpec::default();
        let m = induced_return_masses(&s, 8, 200).unwrap();
        let words = mp1_words(8, Mp1Mode::StrictSuffix).unwrap();
        for r in 1..=7usize {
            let direct: f64 = words
                .iter()
                .filter(|x| x.return_time == r)
                .map(|x| {
                    let stem = Word(x.word.0[..r].to_vec());
                    cylinder_width(&stem, &s).unwrap().upper
                })
                .sum();
            assert!((direct - m.by_time[r - 1]).abs() < 1e-15, "r = {r}");
        }
    }
}
