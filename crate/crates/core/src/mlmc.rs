//! Multilevel Monte Carlo: coupled level sampling, diagnostics, allocation and sweeps.

use std::ops::Range;

use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::parallel::{map_range, ExecPolicy};
use crate::rng::sample_rng;

/// Lower bound on samples per level after allocation.
pub const MIN_SAMPLES: u64 = 32;
/// Samples drawn on each freshly added level.
pub const SCREENING_SAMPLES: u64 = 1000;
const MAX_ATTEMPTS: u32 = 8;

/// Streaming central moments up to order four, mergeable in any fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let d = o.mean - self.mean;
        let d2 = d * d;
        let m2 = self.m2 + o.m2 + d2 * na * nb / n;
        let m3 = self.m3 + o.m3 + d2 * d * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * o.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + o.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * o.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * o.m3 - nb * self.m3) / n;
        self.mean += d * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.n += o.n;
    }

    /// Unbiased sample variance (0 below two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n as f64 - 1.0)).max(0.0)
        }
    }

    pub fn central_moment4(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m4 / self.n as f64
        }
    }

    /// `m4 / m2^2`; `None` with fewer than four samples or zero spread.
    pub fn kurtosis(&self) -> Option<f64> {
        (self.n >= 4 && self.m2 > 0.0).then(|| self.n as f64 * self.m4 / (self.m2 * self.m2))
    }
}

/// Sample kurtosis of a slice.
pub fn kurtosis(samples: &[f64]) -> Option<f64> {
    let mut m = Moments::default();
    samples.iter().for_each(|&x| m.push(x));
    m.kurtosis()
}

/// One coupled draw: the level correction and the fine-level value behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSample {
    pub y: f64,
    pub fine: f64,
}

/// A hierarchy of discretizations that can be sampled with coupling.
pub trait LevelSampler: Sync {
    /// `coupled == false` means the level is the coarsest and `y == fine`.
    fn sample(&self, level: u32, coupled: bool, rng: &mut ChaCha8Rng) -> Result<LevelSample>;
    /// Modelled work per sample.
    fn cost(&self, level: u32, coupled: bool) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcConfig {
    pub l0: u32,
    pub tol: f64,
    pub alpha_guess: f64,
    pub max_level: u32,
    pub seed: u64,
    pub screening_samples: u64,
    pub min_samples: u64,
    /// Abort when failures exceed this fraction of accepted samples.
    pub max_failure_fraction: f64,
    pub exec: ExecPolicy,
    pub chunk: u64,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        Self {
            l0: 1,
            tol: 1e-2,
            alpha_guess: 1.0,
            max_level: 10,
            seed: 42,
            screening_samples: SCREENING_SAMPLES,
            min_samples: MIN_SAMPLES,
            max_failure_fraction: 1e-4,
            exec: ExecPolicy::default(),
            chunk: 256,
        }
    }
}

impl MlmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("MLMC tolerance must be positive"));
        }
        if self.max_level < self.l0 + 2 {
            return Err(invalid("max level must allow at least three levels"));
        }
        if self.screening_samples < 4 || self.chunk == 0 {
            return Err(invalid("need at least four screening samples and a positive chunk"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub level: u32,
    pub samples: u64,
    pub mean: f64,
    pub var: f64,
    pub central_moment4: f64,
    pub kurtosis: Option<f64>,
    pub cost_per_sample: f64,
    /// Telescoping mismatch in units of three joint standard errors (`<= 1` is consistent).
    pub consistency_check: Option<f64>,
    pub fine_mean: f64,
    pub fine_var: f64,
    pub failures: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedRates {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcResult {
    pub estimate: f64,
    pub per_level: Vec<LevelStats>,
    pub fitted: Option<FittedRates>,
    pub total_work: f64,
    pub stat_error: f64,
    pub bias_estimate: f64,
    pub converged: bool,
}

impl MlmcResult {
    pub fn finest(&self) -> &LevelStats {
        self.per_level.last().expect("at least one level")
    }

    pub fn max_consistency(&self) -> f64 {
        self.per_level
            .iter()
            .filter_map(|s| s.consistency_check)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct LevelAcc {
    y: Moments,
    fine: Moments,
    failures: u64,
}

impl LevelAcc {
    fn merge(&mut self, o: &LevelAcc) {
        self.y.merge(&o.y);
        self.fine.merge(&o.fine);
        self.failures += o.failures;
    }
}

fn draw<S: LevelSampler + ?Sized>(
    sampler: &S,
    level: u32,
    coupled: bool,
    seed: u64,
    range: Range<u64>,
    exec: ExecPolicy,
    chunk: u64,
) -> Result<LevelAcc> {
    let start = range.start;
    let total = range.end.saturating_sub(start);
    let chunks = total.div_ceil(chunk) as usize;
    let parts = map_range(exec, chunks, |c| -> Result<LevelAcc> {
        let lo = start + c as u64 * chunk;
        let hi = (lo + chunk).min(range.end);
        let mut acc = LevelAcc::default();
        for i in lo..hi {
            let mut attempt = 0;
            loop {
                let mut rng = sample_rng(seed, level, i, attempt);
                match sampler.sample(level, coupled, &mut rng) {
                    Ok(s) => {
                        acc.y.push(s.y);
                        acc.fine.push(s.fine);
                        break;
                    }
                    Err(Error::InvalidArgument(m)) => return Err(Error::InvalidArgument(m)),
                    Err(_) => {
                        acc.failures += 1;
                        attempt += 1;
                        if attempt >= MAX_ATTEMPTS {
                            return Err(Error::TooManyFailures { failures: acc.failures, samples: acc.y.n });
                        }
                    }
                }
            }
        }
        Ok(acc)
    });
    let mut out = LevelAcc::default();
    for p in parts {
        out.merge(&p?);
    }
    Ok(out)
}

fn check_failures(acc: &LevelAcc, cfg: &MlmcConfig) -> Result<()> {
    if acc.failures as f64 > cfg.max_failure_fraction * acc.y.n as f64 {
        return Err(Error::TooManyFailures { failures: acc.failures, samples: acc.y.n });
    }
    Ok(())
}

/// Optimal real-valued allocation rounded up, with the default floor.
pub fn allocate(v: &[f64], c: &[f64], tol: f64) -> Vec<u64> {
    allocate_with_floor(v, c, tol, MIN_SAMPLES)
}

/// `M_l = ceil((2/tol^2) sqrt(V_l/C_l) sum_j sqrt(V_j C_j))`, at least `floor`.
pub fn allocate_with_floor(v: &[f64], c: &[f64], tol: f64, floor: u64) -> Vec<u64> {
    let total: f64 = v.iter().zip(c).map(|(v, c)| (v.max(0.0) * c).sqrt()).sum();
    v.iter()
        .zip(c)
        .map(|(v, c)| {
            let m = (2.0 / (tol * tol)) * (v.max(0.0) / c).sqrt() * total;
            (m.ceil() as u64).max(floor)
        })
        .collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Decay of level means and variances and growth of cost over levels above `l0`.
pub fn fit_rates(per_level: &[LevelStats], l0: u32) -> Option<FittedRates> {
    let above: Vec<&LevelStats> = per_level.iter().filter(|s| s.level > l0).collect();
    if above.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = above.iter().map(|s| s.level as f64).collect();
    let lg = |v: f64| v.abs().max(f64::MIN_POSITIVE).log2();
    let alpha = -fit_slope(&xs, &above.iter().map(|s| lg(s.mean)).collect::<Vec<_>>());
    let beta = -fit_slope(&xs, &above.iter().map(|s| lg(s.var)).collect::<Vec<_>>());
    let gamma = fit_slope(&xs, &above.iter().map(|s| lg(s.cost_per_sample)).collect::<Vec<_>>());
    Some(FittedRates { alpha, beta, gamma })
}

fn stats_for(accs: &[LevelAcc], costs: &[f64], l0: u32) -> Vec<LevelStats> {
    let mut out = Vec::with_capacity(accs.len());
    let mut cum_mean = 0.0;
    let mut cum_var = 0.0;
    for (i, a) in accs.iter().enumerate() {
        let n = a.y.n.max(1) as f64;
        cum_mean += a.y.mean;
        cum_var += a.y.variance() / n;
        let consistency_check = (i > 0).then(|| {
            let se = (cum_var + a.fine.variance() / n).sqrt();
            let gap = (cum_mean - a.fine.mean).abs();
            if se > 0.0 {
                gap / (3.0 * se)
            } else if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        });
        out.push(LevelStats {
            level: l0 + i as u32,
            samples: a.y.n,
            mean: a.y.mean,
            var: a.y.variance(),
            central_moment4: a.y.central_moment4(),
            kurtosis: a.y.kurtosis(),
            cost_per_sample: costs[i],
            consistency_check,
            fine_mean: a.fine.mean,
            fine_var: a.fine.variance(),
            failures: a.failures,
        });
    }
    out
}

/// Adaptive MLMC run targeting a root-mean-square error of `cfg.tol`.
pub fn run<S: LevelSampler + ?Sized>(cfg: &MlmcConfig, sampler: &S) -> Result<MlmcResult> {
    cfg.validate()?;
    let l0 = cfg.l0;
    let cost = |i: usize| sampler.cost(l0 + i as u32, i > 0);
    let fresh = |i: usize, range: Range<u64>| draw(sampler, l0 + i as u32, i > 0, cfg.seed, range, cfg.exec, cfg.chunk);

    let mut accs: Vec<LevelAcc> = Vec::new();
    for i in 0..3 {
        let acc = fresh(i, 0..cfg.screening_samples)?;
        check_failures(&acc, cfg)?;
        accs.push(acc);
    }
    let half_tol = cfg.tol / std::f64::consts::SQRT_2;
    let (converged, bias_estimate) = loop {
        let costs: Vec<f64> = (0..accs.len()).map(cost).collect();
        let vars: Vec<f64> = accs.iter().map(|a| a.y.variance()).collect();
        let target = allocate_with_floor(&vars, &costs, cfg.tol, cfg.min_samples);
        let mut added = false;
        for (i, acc) in accs.iter_mut().enumerate() {
            if target[i] > acc.y.n {
                let extra = fresh(i, acc.y.n..target[i])?;
                acc.merge(&extra);
                check_failures(acc, cfg)?;
                added = true;
            }
        }
        if added {
            continue;
        }
        let stats = stats_for(&accs, &costs, l0);
        let alpha = fit_rates(&stats, l0)
            .map(|r| r.alpha)
            .filter(|a| a.is_finite())
            .unwrap_or(cfg.alpha_guess)
            .max(0.5);
        let r = 2f64.powf(alpha);
        let n = accs.len();
        let bias = accs[n - 1].y.mean.abs().max(accs[n - 2].y.mean.abs() / r) / (r - 1.0);
        if bias <= half_tol {
            break (true, bias);
        }
        let next = l0 + n as u32;
        if next > cfg.max_level {
            break (false, bias);
        }
        let acc = fresh(n, 0..cfg.screening_samples)?;
        check_failures(&acc, cfg)?;
        accs.push(acc);
    };

    let costs: Vec<f64> = (0..accs.len()).map(cost).collect();
    let per_level = stats_for(&accs, &costs, l0);
    let estimate = per_level.iter().map(|s| s.mean).sum();
    let stat_error = per_level
        .iter()
        .map(|s| s.var / s.samples as f64)
        .sum::<f64>()
        .sqrt();
    let total_work = per_level.iter().map(|s| s.samples as f64 * s.cost_per_sample).sum();
    Ok(MlmcResult {
        estimate,
        fitted: fit_rates(&per_level, l0),
        per_level,
        total_work,
        stat_error,
        bias_estimate,
        converged,
    })
}

/// Fixed-sample statistics on levels `l0..=max_level` (convergence test).
pub fn level_diagnostics<S: LevelSampler + ?Sized>(
    sampler: &S,
    l0: u32,
    max_level: u32,
    samples: u64,
    seed: u64,
    exec: ExecPolicy,
) -> Result<Vec<LevelStats>> {
    if max_level < l0 {
        return Err(invalid("max level below coarsest level"));
    }
    let mut accs = Vec::new();
    let mut costs = Vec::new();
    for level in l0..=max_level {
        let coupled = level > l0;
        accs.push(draw(sampler, level, coupled, seed, 0..samples, exec, 256)?);
        costs.push(sampler.cost(level, coupled));
    }
    Ok(stats_for(&accs, &costs, l0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tol: f64,
    pub work: f64,
    pub estimate: f64,
    pub stat_error: f64,
    pub levels: usize,
    pub converged: bool,
}

/// One run per tolerance, all with the configured seed.
pub fn complexity_sweep<S: LevelSampler + ?Sized>(tols: &[f64], cfg: &MlmcConfig, sampler: &S) -> Result<Vec<SweepRow>> {
    if tols.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("sweep tolerances must be strictly decreasing"));
    }
    tols.iter()
        .map(|&tol| {
            let r = run(&MlmcConfig { tol, ..cfg.clone() }, sampler)?;
            Ok(SweepRow {
                tol,
                work: r.total_work,
                estimate: r.estimate,
                stat_error: r.stat_error,
                levels: r.per_level.len(),
                converged: r.converged,
            })
        })
        .collect()
}
