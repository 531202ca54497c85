//! Monte Carlo sampling of the invariant measure and the statistics built on
//! it: Lyapunov exponent, entropy, correlations and block-sum normality.
//!
//! Trajectory `k` of a run draws from a ChaCha8 stream selected by `k`, so a
//! run is reproducible from its seed regardless of thread count.
//!
//! The horizontal branch is an expanding affine (or near-affine) map, and in
//! floating point each step discards the lowest bits of `x`. Left alone, an
//! orbit collapses onto a dyadic rational after about 53 steps. After every
//! step the sampler refills those bits with uniform noise of size
//! `D^uF(x) * 2^-53`, the resolution lost in that step.

use crate::error::{Error, Result};
use crate::fit::{ks_distance, linear_fit, LineFit};
use crate::model::{locate, ModelSpec, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub burn_in: usize,
    /// Steps per trajectory, burn-in included.
    pub steps: usize,
    /// Independent trajectories.
    pub samples: usize,
    pub observables: Vec<Observable>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            burn_in: 100,
            steps: 125_100,
            samples: 8,
            observables: vec![Observable::CenteredX],
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps <= self.burn_in {
            return Err(Error::Argument(format!(
                "steps ({}) must exceed burn_in ({})",
                self.steps, self.burn_in
            )));
        }
        if self.samples == 0 {
            return Err(Error::Argument("samples must be positive".into()));
        }
        Ok(())
    }

    /// Recorded steps across all trajectories.
    pub fn recorded(&self) -> usize {
        (self.steps - self.burn_in) * self.samples
    }
}

/// Observables with their Hölder exponent `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    X,
    CenteredX,
    Y,
    Constant(f64),
    /// Indicator of `E_i` convolved with a uniform kernel of width `2^-k`.
    SmoothIndicator { i: u32, k: u32 },
    /// Indicator of `E_i` (counts visits; not Hölder).
    SymbolCount { i: u32 },
}

impl Observable {
    pub fn gamma(&self) -> f64 {
        match self {
            Observable::SymbolCount { .. } => 0.0,
            _ => 1.0,
        }
    }

    pub fn eval(&self, spec: &ModelSpec, p: Point, symbol: u32) -> f64 {
        match *self {
            Observable::X => p.x,
            Observable::CenteredX => p.x - 0.5,
            Observable::Y => p.y,
            Observable::Constant(c) => c,
            Observable::SmoothIndicator { i, k } => {
                let delta = 0.5f64.powi(k as i32);
                let l = spec.left_edge(i) - delta / 2.0;
                let r = spec.right_edge(i) + delta / 2.0;
                ((p.x - l).min(r - p.x) / delta).clamp(0.0, 1.0)
            }
            Observable::SymbolCount { i } => (symbol == i) as u8 as f64,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::X => write!(f, "x"),
            Observable::CenteredX => write!(f, "cx"),
            Observable::Y => write!(f, "y"),
            Observable::Constant(c) => write!(f, "const:{c}"),
            Observable::SmoothIndicator { i, k } => write!(f, "smooth:{i}:{k}"),
            Observable::SymbolCount { i } => write!(f, "count:{i}"),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |k: usize| -> Result<u32> {
            parts
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Argument(format!("bad observable {s}")))
        };
        match parts[0] {
            "x" => Ok(Observable::X),
            "cx" => Ok(Observable::CenteredX),
            "y" => Ok(Observable::Y),
            "one" => Ok(Observable::Constant(1.0)),
            "zero" => Ok(Observable::Constant(0.0)),
            "const" => parts
                .get(1)
                .and_then(|v| v.parse().ok())
                .map(Observable::Constant)
                .ok_or_else(|| Error::Argument(format!("bad observable {s}"))),
            "smooth" => Ok(Observable::SmoothIndicator { i: num(1)?, k: num(2)? }),
            "count" => Ok(Observable::SymbolCount { i: num(1)? }),
            _ => Err(Error::Argument(format!("unknown observable {s}"))),
        }
    }
}

/// Longest run of consecutive lags whose values exceed three standard
/// errors and share one sign, as `(first lag, length)`; earliest on ties.
pub fn signal_run(values: &[f64], stderr: &[f64]) -> (usize, usize) {
    let mut best = (0, 0);
    let mut cur = (0, 0);
    for (n, (v, s)) in values.iter().zip(stderr).enumerate() {
        let significant = v.abs() > 3.0 * s;
        let continues = cur.1 > 0 && values[n - 1].signum() == v.signum();
        cur = match (significant, continues) {
            (false, _) => (n + 1, 0),
            (true, true) => (cur.0, cur.1 + 1),
            (true, false) => (n, 1),
        };
        if cur.1 > best.1 {
            best = cur;
        }
    }
    best
}

/// One visited point with its symbol and expansion factor.
#[derive(Clone, Copy, Debug)]
pub struct Visit {
    pub point: Point,
    pub symbol: u32,
    pub du: f64,
}

fn rng_for(seed: u64, trajectory: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory);
    rng
}

/// Runs trajectory `index`, calling `visit` on each recorded point (the
/// point before the step, with its symbol and `D^uF`).
pub fn run_trajectory(
    spec: &ModelSpec,
    seed: u64,
    index: u64,
    burn_in: usize,
    steps: usize,
    mut visit: impl FnMut(&Visit),
) -> Result<()> {
    let mut rng = rng_for(seed, index);
    let mut p = Point::new(rng.gen::<f64>(), rng.gen::<f64>());
    let refill = f64::EPSILON / 2.0;
    for step in 0..steps {
        let i = locate(spec, p).map_err(|e| Error::Numeric {
            step,
            msg: e.to_string(),
        })?;
        let w = spec.width(i);
        let t = (p.x - spec.left_edge(i)) / w;
        let du = spec.g_prime(t) / w;
        if step >= burn_in {
            visit(&Visit { point: p, symbol: i, du });
        }
        let mut x = spec.g(t) + rng.gen::<f64>() * du * refill;
        if x >= 1.0 {
            x = 1.0f64.next_down();
        }
        let mut y = spec.strip_offset(i) + spec.height(i) * p.y;
        if y < 1e-300 {
            y = 0.0;
        }
        if !(0.0..1.0).contains(&x) || !y.is_finite() {
            return Err(Error::Numeric {
                step,
                msg: format!("orbit left the square at ({x}, {y})"),
            });
        }
        p = Point::new(x, y);
    }
    Ok(())
}

/// Runs all trajectories in parallel and returns their results in
/// trajectory order.
fn per_trajectory<T: Send>(
    cfg: &RunConfig,
    spec: &ModelSpec,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    cfg.validate()?;
    spec.validate()?;
    (0..cfg.samples as u64).into_par_iter().map(f).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram2d {
    pub nx: usize,
    pub ny: usize,
    /// Row-major over `(x_bin, y_bin)`.
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram2d {
    pub fn x_marginal(&self) -> Vec<u64> {
        (0..self.nx)
            .map(|i| self.counts[i * self.ny..(i + 1) * self.ny].iter().sum())
            .collect()
    }

    pub fn y_marginal(&self) -> Vec<u64> {
        (0..self.ny)
            .map(|j| (0..self.nx).map(|i| self.counts[i * self.ny + j]).sum())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Simulation {
    pub seed: u64,
    pub version: String,
    pub histogram: Histogram2d,
    /// `symbol_counts[i - 1]` for `i <= 64`; the last slot collects larger symbols.
    pub symbol_counts: Vec<u64>,
}

pub fn simulate(cfg: &RunConfig, spec: &ModelSpec, nx: usize, ny: usize) -> Result<Simulation> {
    if nx == 0 || ny == 0 {
        return Err(Error::Argument("histogram needs at least one bin per axis".into()));
    }
    let parts = per_trajectory(cfg, spec, |k| {
        let mut counts = vec![0u64; nx * ny];
        let mut symbols = vec![0u64; 65];
        run_trajectory(spec, cfg.seed, k, cfg.burn_in, cfg.steps, |v| {
            let bx = ((v.point.x * nx as f64) as usize).min(nx - 1);
            let by = ((v.point.y * ny as f64) as usize).min(ny - 1);
            counts[bx * ny + by] += 1;
            symbols[(v.symbol as usize).min(65) - 1] += 1;
        })?;
        Ok((counts, symbols))
    })?;
    let mut counts = vec![0u64; nx * ny];
    let mut symbol_counts = vec![0u64; 65];
    for (c, s) in parts {
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        symbol_counts.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    let total = counts.iter().sum();
    Ok(Simulation {
        seed: cfg.seed,
        version: crate::VERSION.to_string(),
        histogram: Histogram2d { nx, ny, counts, total },
        symbol_counts,
    })
}

/// Pearson chi-square statistic of symbol counts `1..=m` (plus the pooled
/// remainder) against frequencies `w_i`.
pub fn symbol_chi_square(sim: &Simulation, spec: &ModelSpec, m: usize) -> f64 {
    let n: u64 = sim.symbol_counts.iter().sum();
    let nf = n as f64;
    let mut chi = 0.0;
    let mut rest_obs = n;
    let mut rest_p = 1.0;
    for i in 1..=m {
        let o = sim.symbol_counts[i - 1];
        let p = spec.width(i as u32);
        let e = nf * p;
        chi += (o as f64 - e).powi(2) / e;
        rest_obs -= o;
        rest_p -= p;
    }
    let e = nf * rest_p;
    if e > 0.0 {
        chi += (rest_obs as f64 - e).powi(2) / e;
    }
    chi
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Batch means over equal-length batches of each trajectory.
fn batch_means(batches: &[f64]) -> Estimate {
    let n = batches.len() as f64;
    let mean = batches.iter().sum::<f64>() / n;
    let var = if batches.len() > 1 {
        batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate {
        value: mean,
        stderr: (var / n).sqrt(),
    }
}

const BATCHES_PER_TRAJECTORY: usize = 25;

fn batch_len(cfg: &RunConfig) -> usize {
    ((cfg.steps - cfg.burn_in) / BATCHES_PER_TRAJECTORY).max(1)
}

/// Birkhoff average of `log D^uF`.
pub fn lyapunov(cfg: &RunConfig, spec: &ModelSpec) -> Result<Estimate> {
    let bl = batch_len(cfg);
    let batches = per_trajectory(cfg, spec, |k| {
        let mut out = Vec::new();
        let (mut acc, mut cnt) = (0.0, 0usize);
        run_trajectory(spec, cfg.seed, k, cfg.burn_in, cfg.steps, |v| {
            acc += v.du.ln();
            cnt += 1;
            if cnt == bl {
                out.push(acc / bl as f64);
                acc = 0.0;
                cnt = 0;
            }
        })?;
        Ok(out)
    })?;
    Ok(batch_means(&batches.concat()))
}

/// Closed-form entropy `-sum w_i log w_i` over `i <= m` and the bound on the
/// omitted terms.
pub fn entropy_series(spec: &ModelSpec, m: u32) -> (f64, f64) {
    let a = spec.width_base;
    let head: f64 = (1..=m).map(|i| -spec.width(i) * spec.width(i).ln()).sum();
    // -w_i log w_i = (1-a) a^{i-1} (i log(1/a) - ... ) <= (1-a) a^{i-1} (i+c) log-terms
    let l1 = -(1.0 - a).ln();
    let la = -a.ln();
    let mf = m as f64;
    // sum_{i>m} (1-a) a^{i-1} (l1 + (i-1) la)
    let tail = a.powf(mf) * (l1 + la * (mf + a / (1.0 - a)));
    (head, tail)
}

/// `int log D^uF dmu` in closed form: the entropy series plus
/// `int_0^1 log(1 + eps cos 2 pi t) dt = log((1 + sqrt(1 - eps^2)) / 2)`.
pub fn lyapunov_closed_form(spec: &ModelSpec, m: u32) -> (f64, f64) {
    let (h, tail) = entropy_series(spec, m);
    let e = spec.perturbation;
    (h + ((1.0 + (1.0 - e * e).sqrt()) / 2.0).ln(), tail)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    pub seed: u64,
    pub version: String,
    /// Plug-in entropy of the empirical symbol distribution.
    pub plugin: Estimate,
    /// Plug-in entropy with the Miller-Madow correction.
    pub miller_madow: f64,
    /// Birkhoff average of `log D^uF`.
    pub integral: Estimate,
    pub closed_form_entropy: f64,
    pub closed_form_integral: f64,
    pub series_tail: f64,
}

impl EntropyReport {
    /// Number of combined standard errors separating the two estimates.
    pub fn separation_sigmas(&self) -> f64 {
        let se = (self.plugin.stderr.powi(2) + self.integral.stderr.powi(2)).sqrt();
        (self.plugin.value - self.integral.value).abs() / se
    }
}

pub fn entropy_check(cfg: &RunConfig, spec: &ModelSpec) -> Result<EntropyReport> {
    let sim = simulate(cfg, spec, 1, 1)?;
    let integral = lyapunov(cfg, spec)?;
    let n: u64 = sim.symbol_counts.iter().sum();
    let nf = n as f64;
    let ps: Vec<f64> = sim.symbol_counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / nf).collect();
    let h: f64 = -ps.iter().map(|p| p * p.ln()).sum::<f64>();
    let second: f64 = ps.iter().map(|p| p * p.ln() * p.ln()).sum();
    // symbols of distinct steps are independent under the invariant measure
    let stderr = ((second - h * h).max(0.0) / nf).sqrt();
    let (closed_form_entropy, series_tail) = entropy_series(spec, 200);
    let (closed_form_integral, _) = lyapunov_closed_form(spec, 200);
    Ok(EntropyReport {
        seed: cfg.seed,
        version: crate::VERSION.to_string(),
        plugin: Estimate { value: h, stderr },
        miller_madow: h + (ps.len() as f64 - 1.0) / (2.0 * nf),
        integral,
        closed_form_entropy,
        closed_form_integral,
        series_tail,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationCurve {
    pub seed: u64,
    pub version: String,
    pub f: String,
    pub g: String,
    pub gamma_f: f64,
    pub gamma_g: f64,
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// First and last lag of the fitted run (see [`signal_run`]).
    pub window: Option<(usize, usize)>,
    pub fit: Option<LineFit>,
    pub eta: Option<f64>,
    pub c: Option<f64>,
}

/// Autocovariances `C_n(f, g)` for `n = 0..=n_max` with batch-means errors
/// and a log-linear fit of `log |C_n|` on the longest same-sign run of lags
/// whose values exceed 3 SE.
pub fn correlation(f: &Observable, g: &Observable, cfg: &RunConfig, spec: &ModelSpec, n_max: usize) -> Result<CorrelationCurve> {
    let bl = batch_len(cfg);
    if bl <= n_max {
        return Err(Error::Argument("batches must be longer than the largest lag".into()));
    }
    let per = per_trajectory(cfg, spec, |k| {
        let mut fs = Vec::with_capacity(cfg.steps - cfg.burn_in);
        let mut gs = Vec::with_capacity(cfg.steps - cfg.burn_in);
        run_trajectory(spec, cfg.seed, k, cfg.burn_in, cfg.steps, |v| {
            fs.push(f.eval(spec, v.point, v.symbol));
            gs.push(g.eval(spec, v.point, v.symbol));
        })?;
        Ok((fs, gs))
    })?;
    let total: f64 = per.iter().map(|(fs, _)| fs.len() as f64).sum();
    let mf = per.iter().map(|(fs, _)| fs.iter().sum::<f64>()).sum::<f64>() / total;
    let mg = per.iter().map(|(_, gs)| gs.iter().sum::<f64>()).sum::<f64>() / total;
    // per batch and lag: mean of (f_t - mf)(g_{t+n} - mg) over t in the batch
    let batch_values: Vec<Vec<f64>> = per
        .par_iter()
        .flat_map_iter(|(fs, gs)| {
            let nb = fs.len() / bl;
            (0..nb).map(move |b| {
                let start = b * bl;
                let end = (start + bl).min(fs.len() - n_max);
                (0..=n_max)
                    .map(|n| {
                        let mut acc = 0.0;
                        for t in start..end {
                            acc += (fs[t] - mf) * (gs[t + n] - mg);
                        }
                        acc / (end - start).max(1) as f64
                    })
                    .collect::<Vec<f64>>()
            })
        })
        .collect();
    let mut values = Vec::with_capacity(n_max + 1);
    let mut stderr = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let col: Vec<f64> = batch_values.iter().map(|b| b[n]).collect();
        let e = batch_means(&col);
        values.push(e.value);
        stderr.push(e.stderr);
    }
    let (start, len) = signal_run(&values, &stderr);
    let (window, fit) = if len >= 3 {
        let xs: Vec<f64> = (start..start + len).map(|n| n as f64).collect();
        let ys: Vec<f64> = values[start..start + len].iter().map(|v| v.abs().ln()).collect();
        (Some((start, start + len - 1)), linear_fit(&xs, &ys))
    } else {
        (None, None)
    };
    Ok(CorrelationCurve {
        seed: cfg.seed,
        version: crate::VERSION.to_string(),
        f: f.to_string(),
        g: g.to_string(),
        gamma_f: f.gamma(),
        gamma_g: g.gamma(),
        lags: (0..=n_max).collect(),
        eta: fit.map(|l| l.slope.exp()),
        c: fit.map(|l| l.intercept.exp()),
        values,
        stderr,
        window,
        fit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CltReport {
    pub seed: u64,
    pub version: String,
    pub block_len: usize,
    pub blocks: usize,
    pub mean: f64,
    pub sigma2: f64,
    pub sigma2_stderr: f64,
    pub ks: f64,
    pub threshold: f64,
    /// Dvoretzky-Kiefer-Wolfowitz radius at 99% for this many blocks.
    pub dkw99: f64,
    pub degenerate: bool,
    /// Sorted normalized block sums at 99 quantile levels.
    pub quantiles: Vec<(f64, f64)>,
}

impl CltReport {
    pub fn passes(&self) -> bool {
        !self.degenerate && self.ks < self.threshold
    }
}

/// Normalized block sums `(1/sqrt(n)) sum (f - mean)` over `blocks`
/// independent trajectories of `block_len` recorded steps each.
pub fn clt_test(f: &Observable, cfg: &RunConfig, spec: &ModelSpec, block_len: usize, blocks: usize, threshold: f64) -> Result<CltReport> {
    if block_len < 2 || blocks < 10 {
        return Err(Error::Argument("need block_len >= 2 and at least 10 blocks".into()));
    }
    let run = RunConfig {
        steps: cfg.burn_in + block_len,
        samples: blocks,
        ..cfg.clone()
    };
    let sums = per_trajectory(&run, spec, |k| {
        let mut s = 0.0;
        run_trajectory(spec, run.seed, k, run.burn_in, run.steps, |v| {
            s += f.eval(spec, v.point, v.symbol);
        })?;
        Ok(s)
    })?;
    let nf = block_len as f64;
    let mean = sums.iter().sum::<f64>() / (nf * blocks as f64);
    let z: Vec<f64> = sums.iter().map(|s| (s - nf * mean) / nf.sqrt()).collect();
    let bf = blocks as f64;
    let sigma2 = z.iter().map(|v| v * v).sum::<f64>() / (bf - 1.0);
    let fourth = z.iter().map(|v| v.powi(4)).sum::<f64>() / bf;
    let sigma2_stderr = ((fourth - sigma2 * sigma2).max(0.0) / bf).sqrt();
    let degenerate = sigma2 < 1e-12;
    let ks = if degenerate {
        1.0
    } else {
        let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::Numeric {
            step: 0,
            msg: e.to_string(),
        })?;
        ks_distance(&z, |x| normal.cdf(x))
    };
    let mut sorted = z.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = (1..100)
        .map(|q| {
            let level = q as f64 / 100.0;
            let idx = ((level * bf) as usize).min(blocks - 1);
            (level, sorted[idx])
        })
        .collect();
    Ok(CltReport {
        seed: cfg.seed,
        version: crate::VERSION.to_string(),
        block_len,
        blocks,
        mean,
        sigma2,
        sigma2_stderr,
        ks,
        threshold,
        dkw99: ((2.0f64 / 0.01).ln() / (2.0 * bf)).sqrt(),
        degenerate,
        quantiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d() -> ModelSpec {
        ModelSpec::default()
    }

    fn cfg(seed: u64, steps: usize, samples: usize) -> RunConfig {
        RunConfig {
            seed,
            burn_in: 50,
            steps: steps + 50,
            samples,
            observables: vec![],
        }
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig { steps: 10, burn_in: 10, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { samples: 0, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn simulation_is_deterministic() {
        let c = cfg(7, 20_000, 4);
        let a = simulate(&c, &d(), 16, 16).unwrap();
        let b = simulate(&c, &d(), 16, 16).unwrap();
        assert_eq!(a, b);
        let other = simulate(&cfg(8, 20_000, 4), &d(), 16, 16).unwrap();
        assert_ne!(a.histogram.counts, other.histogram.counts);
    }

    #[test]
    fn marginals() {
        let c = cfg(3, 100_000, 4);
        let s = simulate(&c, &d(), 10, 81).unwrap();
        let n = s.histogram.total as f64;
        for count in s.histogram.x_marginal() {
            let p = 0.1;
            let se = (n * p * (1.0 - p)).sqrt();
            assert!((count as f64 - n * p).abs() < 4.0 * se, "{count}");
        }
        // y lies in the union of the strips, whose total height is 1/2
        let chi = symbol_chi_square(&s, &d(), 10);
        assert!(chi < 23.21, "{chi}");
    }

    #[test]
    fn y_concentrates_on_strips() {
        let spec = d();
        let mut outside = 0u64;
        let mut seen = 0u64;
        run_trajectory(&spec, 11, 0, 20, 20_020, |v| {
            seen += 1;
            let mut inside = false;
            for i in 1..=40 {
                let c = spec.strip_offset(i);
                if v.point.y >= c && v.point.y <= c + spec.height(i) {
                    inside = true;
                    break;
                }
            }
            if !inside && v.point.y < spec.strip_offset(40) {
                outside += 1;
            }
        })
        .unwrap();
        assert_eq!(seen, 20_000);
        assert_eq!(outside, 0);
        let total: f64 = (1..=60).map(|i| spec.height(i)).sum();
        assert!((total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn entropy_closed_forms() {
        let (h, tail) = entropy_series(&d(), 200);
        assert!((h - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!(tail < 1e-50);
        let (_, tail20) = entropy_series(&d(), 20);
        let direct: f64 = (21..400).map(|i| i as f64 * 0.5f64.powi(i) * 2f64.ln()).sum();
        assert!(tail20 >= direct - 1e-18 && tail20 < 1e-4);
        let (l, _) = lyapunov_closed_form(&d(), 200);
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_short_run() {
        let e = lyapunov(&cfg(5, 50_000, 4), &d()).unwrap();
        assert!((e.value - 2.0 * 2f64.ln()).abs() < 5.0 * e.stderr + 1e-3, "{e:?}");
        let p = ModelSpec { perturbation: 0.05, ..d() };
        let e = lyapunov(&cfg(5, 50_000, 4), &p).unwrap();
        let band = (1.05f64 / 0.95).ln();
        assert!((e.value - 2.0 * 2f64.ln()).abs() < band);
    }

    #[test]
    fn constant_observable_decorrelates() {
        let c = correlation(&Observable::Constant(1.0), &Observable::Constant(1.0), &cfg(2, 20_000, 2), &d(), 5).unwrap();
        assert!(c.values.iter().all(|v| v.abs() < 1e-12));
        assert!(c.fit.is_none());
    }

    #[test]
    fn centered_x_variance() {
        let c = correlation(&Observable::CenteredX, &Observable::CenteredX, &cfg(9, 200_000, 4), &d(), 8).unwrap();
        assert!((c.values[0] - 1.0 / 12.0).abs() < 3.0 * c.stderr[0] + 1e-4);
        assert!(c.eta.unwrap() < 1.0);
    }

    #[test]
    fn degenerate_clt() {
        let r = clt_test(&Observable::Constant(0.0), &cfg(1, 100, 1), &d(), 100, 50, 0.02).unwrap();
        assert!(r.degenerate && !r.passes());
    }

    #[test]
    fn observable_parsing_round_trips() {
        for s in ["x", "cx", "y", "smooth:1:2", "count:3", "const:2.5"] {
            let o: Observable = s.parse().unwrap();
            assert_eq!(o.to_string(), s);
        }
        assert!("smooth:1".parse::<Observable>().is_err());
        assert_eq!(signal_run(&[1.0, 0.5, -0.4, -0.2, -0.1, 0.0], &[0.01; 6]), (2, 3));
        assert_eq!(signal_run(&[0.0, 0.0], &[0.01; 2]), (0, 0));
        let o = Observable::SmoothIndicator { i: 1, k: 2 };
        assert_eq!(o.eval(&d(), Point::new(0.25, 0.0), 1), 1.0);
        assert_eq!(o.eval(&d(), Point::new(0.5, 0.0), 2), 0.5);
        assert_eq!(o.eval(&d(), Point::new(0.7, 0.0), 2), 0.0);
    }
}
