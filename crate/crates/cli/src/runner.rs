//! Experiment dispatch: ASGQ, MLMC, plain MC and the Heston scheme comparison.

use std::time::Instant;

use numsmooth::asgq::{adapt, AsgqConfig, AsgqResult, MultiIndex, TensorQuadrature};
use numsmooth::density::{DensitySampler, DensityTarget};
use numsmooth::mlmc::{complexity_sweep, fit_slope, run, LevelSampler, MlmcConfig, MlmcResult, Moments};
use numsmooth::models::{GbmParams, HestonModel, HestonParams, Model, SchemeKind};
use numsmooth::parallel::{map_range, ExecPolicy};
use numsmooth::paths::{CorrelationStructure, TimeGrid};
use numsmooth::payoffs::Payoff;
use numsmooth::rng::sample_rng;
use numsmooth::samplers::{draw_inputs, Estimator, LevelSchedule, OptionSampler};
use numsmooth::smoothing::{smoothed_integrand, SmoothingPlan};

use crate::config::{ExperimentConfig, Method, ModelKind, PayoffChoice};
use crate::report::ResultRow;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    pub converged: bool,
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<Model, CliError> {
    Ok(match cfg.model {
        ModelKind::Gbm => {
            let d = cfg.assets;
            let corr = if d == 1 {
                CorrelationStructure::identity(1)
            } else {
                CorrelationStructure::uniform(d, cfg.correlation)?
            };
            Model::Gbm(GbmParams::new(vec![cfg.s0; d], vec![cfg.sigma; d], vec![cfg.mu; d], corr)?)
        }
        ModelKind::Heston => {
            let scheme = SchemeKind::parse(&cfg.scheme)
                .ok_or_else(|| CliError::Usage(format!("unknown scheme '{}'", cfg.scheme)))?;
            Model::Heston(HestonModel::new(heston_params(cfg), scheme)?)
        }
    })
}

pub fn heston_params(cfg: &ExperimentConfig) -> HestonParams {
    HestonParams {
        s0: cfg.s0,
        v0: cfg.v0,
        mu: cfg.mu,
        kappa: cfg.kappa,
        theta: cfg.theta,
        xi: cfg.xi,
        rho: cfg.rho,
    }
}

pub fn build_payoff(cfg: &ExperimentConfig) -> Payoff {
    match cfg.payoff {
        PayoffChoice::Call => Payoff::call(cfg.strike),
        PayoffChoice::Digital => Payoff::digital(cfg.strike),
        PayoffChoice::BasketCall => {
            let w = if cfg.weights.is_empty() {
                vec![1.0 / cfg.assets as f64; cfg.assets]
            } else {
                cfg.weights.clone()
            };
            Payoff::basket_call(cfg.strike, w)
        }
        PayoffChoice::Density => Payoff::density_point(cfg.strike),
    }
}

pub fn build_plan(cfg: &ExperimentConfig) -> Result<SmoothingPlan, CliError> {
    Ok(SmoothingPlan::new(cfg.assets, cfg.tol_newton, cfg.nq)?)
}

pub fn schedule(cfg: &ExperimentConfig) -> LevelSchedule {
    LevelSchedule {
        l0: cfg.l0,
        nq0: cfg.nq,
        nq_rate: cfg.nq_rate,
        tol0: cfg.tol_newton,
        tol_rate: cfg.tol_newton_rate,
    }
}

/// Level-1 Richardson extrapolation for a first-order bias.
pub fn richardson_level1(q_coarse: f64, q_fine: f64) -> f64 {
    2.0 * q_fine - q_coarse
}

fn level_of(steps: usize) -> u32 {
    steps.trailing_zeros()
}

/// Runs one configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig, exec: ExecPolicy) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    match cfg.method {
        Method::Asgq => run_asgq(cfg, exec),
        Method::Mlmc => run_mlmc(cfg, exec),
        Method::Mc => mc_baseline(cfg, exec),
        Method::Schemes => {
            let reports = scheme_comparison(cfg, &SCHEME_SET, exec)?;
            Ok(RunOutcome { rows: scheme_rows(cfg, &reports), converged: true })
        }
    }
}

// ---------------------------------------------------------------- ASGQ

/// ASGQ over the conditioned coordinates at `steps` time steps.
pub fn asgq_at(cfg: &ExperimentConfig, steps: usize, exec: ExecPolicy) -> Result<AsgqResult, CliError> {
    let model = build_model(cfg)?;
    let payoff = build_payoff(cfg);
    let plan = build_plan(cfg)?;
    let grid = TimeGrid::new(cfg.horizon, steps)?;
    let mut conf = AsgqConfig::new(0, cfg.absolute_tol(), cfg.max_evals);
    conf.exec = exec;
    let result = if cfg.smoothing {
        conf.dim = model.conditioned_dim(steps);
        let f = |c: &[f64]| -> numsmooth::Result<f64> {
            let paths = model.conditioned_paths(c, &grid, &plan.rotation)?;
            smoothed_integrand(&plan, &paths, &payoff)
        };
        adapt(&conf, &f)?
    } else {
        // The smoothing coordinate becomes one more quadrature axis.
        conf.dim = model.gaussian_dim(steps);
        let f = |c: &[f64]| -> numsmooth::Result<f64> {
            let paths = model.conditioned_paths(&c[1..], &grid, &plan.rotation)?;
            payoff.evaluate(&paths.terminal(c[0]).xt)
        };
        adapt(&conf, &f)?
    };
    Ok(result)
}

fn run_asgq(cfg: &ExperimentConfig, exec: ExecPolicy) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let fine = asgq_at(cfg, cfg.steps, exec)?;
    let (estimate, evals, converged, label) = if cfg.richardson {
        let coarse = asgq_at(cfg, cfg.steps / 2, exec)?;
        (
            richardson_level1(coarse.estimate, fine.estimate),
            fine.evals + coarse.evals,
            fine.converged && coarse.converged,
            "asgq+richardson",
        )
    } else {
        (fine.estimate, fine.evals, fine.converged, "asgq")
    };
    let mut row = ResultRow::new(&cfg.name, label, format!("N={};tol={}", cfg.steps, cfg.tol), estimate, cfg.reference);
    row.evals = evals as f64;
    row.wall_s = start.elapsed().as_secs_f64();
    row.stat_err = Some(fine.error_indicator);
    Ok(RunOutcome { rows: vec![row], converged })
}

// ---------------------------------------------------------------- MLMC

/// Level sampler for the configured functional.
pub fn level_sampler(cfg: &ExperimentConfig) -> Result<Box<dyn LevelSampler>, CliError> {
    let model = build_model(cfg)?;
    let plan = build_plan(cfg)?;
    if cfg.payoff == PayoffChoice::Density {
        let target = DensityTarget::new(cfg.strike)?;
        return Ok(Box::new(DensitySampler::new(model, target, plan, cfg.horizon, schedule(cfg))?));
    }
    let estimator = if cfg.smoothing { Estimator::Smoothed } else { Estimator::Raw };
    Ok(Box::new(OptionSampler::new(model, build_payoff(cfg), plan, cfg.horizon, schedule(cfg), estimator)?))
}

pub fn mlmc_config(cfg: &ExperimentConfig, exec: ExecPolicy) -> MlmcConfig {
    MlmcConfig {
        l0: cfg.l0,
        tol: cfg.absolute_tol(),
        alpha_guess: cfg.alpha_guess,
        max_level: cfg.max_level,
        seed: cfg.seed,
        exec,
        ..MlmcConfig::default()
    }
}

pub fn mlmc_result(cfg: &ExperimentConfig, exec: ExecPolicy) -> Result<MlmcResult, CliError> {
    let sampler = level_sampler(cfg)?;
    Ok(run(&mlmc_config(cfg, exec), sampler.as_ref())?)
}

fn method_label(cfg: &ExperimentConfig) -> String {
    let base = cfg.method.name();
    if cfg.smoothing {
        format!("{base}+smoothing")
    } else {
        base.to_string()
    }
}

fn mlmc_row(cfg: &ExperimentConfig, r: &MlmcResult, wall: f64) -> ResultRow {
    let mut row = ResultRow::new(&cfg.name, &method_label(cfg), format!("tol={}", cfg.tol), r.estimate, cfg.reference);
    row.evals = r.total_work;
    row.wall_s = wall;
    row.stat_err = Some(r.stat_error);
    if let Some(f) = r.fitted {
        row.alpha = Some(f.alpha);
        row.beta = Some(f.beta);
        row.gamma = Some(f.gamma);
    }
    row.kurtosis_l = r.finest().kurtosis;
    row
}

fn run_mlmc(cfg: &ExperimentConfig, exec: ExecPolicy) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let r = mlmc_result(cfg, exec)?;
    Ok(RunOutcome {
        rows: vec![mlmc_row(cfg, &r, start.elapsed().as_secs_f64())],
        converged: r.converged,
    })
}

/// Work-versus-tolerance sweep; the last row carries the fitted log-log slope.
pub fn sweep(cfg: &ExperimentConfig, tols: &[f64], exec: ExecPolicy) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    if cfg.method != Method::Mlmc {
        return Err(CliError::Usage("sweep applies to mlmc presets".into()));
    }
    let sampler = level_sampler(cfg)?;
    let scale = cfg.absolute_tol() / cfg.tol;
    let abs: Vec<f64> = tols.iter().map(|t| t * scale).collect();
    let start = Instant::now();
    let table = complexity_sweep(&abs, &mlmc_config(cfg, exec), sampler.as_ref())?;
    let wall = start.elapsed().as_secs_f64();
    let mut rows: Vec<ResultRow> = table
        .iter()
        .zip(tols)
        .map(|(t, tol)| {
            let mut row = ResultRow::new(&cfg.name, &method_label(cfg), format!("tol={tol}"), t.estimate, cfg.reference);
            row.evals = t.work;
            row.stat_err = Some(t.stat_error);
            row
        })
        .collect();
    let slope = fit_slope(
        &tols.iter().map(|t| t.ln()).collect::<Vec<_>>(),
        &table.iter().map(|t| t.work.ln()).collect::<Vec<_>>(),
    );
    let mut fit = ResultRow::new(&cfg.name, "sweep-fit", "work-vs-tol-slope".into(), slope, None);
    fit.wall_s = wall;
    rows.push(fit);
    Ok(RunOutcome { rows, converged: table.iter().all(|t| t.converged) })
}

// ---------------------------------------------------------------- plain MC

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stat_err: f64,
    pub variance: f64,
    pub samples: u64,
}

/// Single-level Monte Carlo at `level`; with `richardson` each sample is `2 fine - coarse`
/// on shared randomness.
pub fn mc_estimate(
    sampler: &dyn LevelSampler,
    level: u32,
    richardson: bool,
    samples: u64,
    seed: u64,
    exec: ExecPolicy,
) -> Result<McEstimate, CliError> {
    const CHUNK: u64 = 1024;
    let chunks = samples.div_ceil(CHUNK) as usize;
    let parts = map_range(exec, chunks, |c| -> numsmooth::Result<Moments> {
        let mut m = Moments::default();
        let lo = c as u64 * CHUNK;
        for i in lo..(lo + CHUNK).min(samples) {
            let mut rng = sample_rng(seed, level, i, 0);
            let s = sampler.sample(level, richardson, &mut rng)?;
            m.push(if richardson { s.fine + s.y } else { s.fine });
        }
        Ok(m)
    });
    let mut total = Moments::default();
    for p in parts {
        total.merge(&p?);
    }
    let variance = total.variance();
    Ok(McEstimate {
        mean: total.mean,
        stat_err: (variance / total.n.max(1) as f64).sqrt(),
        variance,
        samples: total.n,
    })
}

const PILOT_SAMPLES: u64 = 2000;
const MAX_MC_SAMPLES: u64 = 20_000_000;

/// Plain MC with `dt` fixed by `steps` and the sample count from a pilot run
/// (statistical budget `tol / sqrt(2)`), unless `samples` is set.
pub fn mc_baseline(cfg: &ExperimentConfig, exec: ExecPolicy) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let sampler = level_sampler(cfg)?;
    let level = level_of(cfg.steps);
    let samples = if cfg.samples > 0 {
        cfg.samples
    } else {
        let pilot = mc_estimate(sampler.as_ref(), level, cfg.richardson, PILOT_SAMPLES, cfg.seed ^ 0x5eed, exec)?;
        let budget = cfg.absolute_tol() / std::f64::consts::SQRT_2;
        ((pilot.variance / (budget * budget)).ceil() as u64).clamp(PILOT_SAMPLES, MAX_MC_SAMPLES)
    };
    let est = mc_estimate(sampler.as_ref(), level, cfg.richardson, samples, cfg.seed, exec)?;
    let label = if cfg.richardson { format!("{}+richardson", method_label(cfg)) } else { method_label(cfg) };
    let mut row = ResultRow::new(&cfg.name, &label, format!("N={};M={}", cfg.steps, samples), est.mean, cfg.reference);
    row.evals = samples as f64 * sampler.cost(level, cfg.richardson);
    row.wall_s = start.elapsed().as_secs_f64();
    row.stat_err = Some(est.stat_err);
    Ok(RunOutcome { rows: vec![row], converged: true })
}

// ---------------------------------------------------------------- scheme comparison

/// Schemes compared by default.
pub const SCHEME_SET: [SchemeKind; 3] = [SchemeKind::EulerFullTruncation, SchemeKind::Abr, SchemeKind::HestonOu];

/// Step counts of the weak-error study.
pub const WEAK_STEPS: [usize; 4] = [2, 4, 8, 16];

/// Largest `k` in the first-difference study (`beta = 1 + k e_i`).
pub const FIRST_DIFF_DEPTH: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeReport {
    pub scheme: SchemeKind,
    /// `(coordinate, k, |Delta E|)`.
    pub first_differences: Vec<(usize, u32, f64)>,
    /// Mean over volatility coordinates of the fitted log2-decay per unit `k`.
    pub decay_rate: f64,
    /// `(N, E[g_N], standard error)`.
    pub weak: Vec<(usize, f64, f64)>,
    /// Fitted order of `|E[g_N] - reference|` in `dt`.
    pub weak_rate: f64,
}

pub fn scheme_comparison(cfg: &ExperimentConfig, schemes: &[SchemeKind], exec: ExecPolicy) -> Result<Vec<SchemeReport>, CliError> {
    let reference = cfg
        .reference
        .ok_or_else(|| CliError::Usage("scheme comparison needs a reference value".into()))?;
    let samples = if cfg.samples > 0 { cfg.samples } else { 2_000_000 };
    schemes
        .iter()
        .map(|&scheme| {
            let model = Model::Heston(HestonModel::new(heston_params(cfg), scheme)?);
            let payoff = build_payoff(cfg);
            let first_differences = first_differences(cfg, &model, &payoff, exec)?;
            let vol = model.volatility_coordinates(cfg.steps);
            let ks: Vec<f64> = (1..=FIRST_DIFF_DEPTH).map(f64::from).collect();
            let decay_rate = vol
                .clone()
                .map(|i| {
                    let ys: Vec<f64> = first_differences
                        .iter()
                        .filter(|(c, _, _)| *c == i)
                        .map(|(_, _, v)| v.max(1e-300).log2())
                        .collect();
                    -fit_slope(&ks, &ys)
                })
                .sum::<f64>()
                / vol.len() as f64;
            let weak = weak_errors(cfg, &model, &payoff, samples, exec)?;
            let xs: Vec<f64> = weak.iter().map(|(n, _, _)| (*n as f64).log2()).collect();
            let ys: Vec<f64> = weak.iter().map(|(_, e, _)| (e - reference).abs().log2()).collect();
            Ok(SchemeReport { scheme, first_differences, decay_rate, weak, weak_rate: -fit_slope(&xs, &ys) })
        })
        .collect()
}

fn first_differences(cfg: &ExperimentConfig, model: &Model, payoff: &Payoff, exec: ExecPolicy) -> Result<Vec<(usize, u32, f64)>, CliError> {
    let plan = build_plan(cfg)?;
    let grid = TimeGrid::new(cfg.horizon, cfg.steps)?;
    let dim = model.conditioned_dim(cfg.steps);
    let f = |c: &[f64]| -> numsmooth::Result<f64> {
        smoothed_integrand(&plan, &model.conditioned_paths(c, &grid, &plan.rotation)?, payoff)
    };
    let mut tq = TensorQuadrature::new(&f, dim, numsmooth::asgq::growth, exec);
    let mut out = Vec::new();
    for i in model.volatility_coordinates(cfg.steps) {
        for k in 1..=FIRST_DIFF_DEPTH {
            let beta = MultiIndex::ones(dim);
            let mut b = beta.0;
            b[i] += k;
            out.push((i, k, tq.delta(&MultiIndex(b))?.abs()));
        }
    }
    Ok(out)
}

/// Raw-payoff means at every step count from one set of finest-grid draws.
fn weak_errors(cfg: &ExperimentConfig, model: &Model, payoff: &Payoff, samples: u64, exec: ExecPolicy) -> Result<Vec<(usize, f64, f64)>, CliError> {
    const CHUNK: u64 = 4096;
    let finest = *WEAK_STEPS.last().expect("non-empty");
    let grid = TimeGrid::new(cfg.horizon, finest)?;
    let plan = build_plan(cfg)?;
    let levels = WEAK_STEPS.len();
    let chunks = samples.div_ceil(CHUNK) as usize;
    // Per chunk: moments of g_finest and of g_N - g_finest for every N.
    let parts = map_range(exec, chunks, |c| -> numsmooth::Result<Vec<Moments>> {
        let mut acc = vec![Moments::default(); levels];
        let lo = c as u64 * CHUNK;
        let mut vals = vec![0.0; levels];
        for i in lo..(lo + CHUNK).min(samples) {
            let mut rng = sample_rng(cfg.seed, level_of(finest), i, 0);
            let (y1, z) = draw_inputs(model, finest, &mut rng);
            let mut d = model.drivers(&z, &grid, &plan.rotation)?;
            for j in (0..levels).rev() {
                vals[j] = payoff.evaluate(&model.condition(&d)?.terminal(y1).xt)?;
                if j > 0 {
                    d = d.coarsen().expect("coarser grid");
                }
            }
            acc[levels - 1].push(vals[levels - 1]);
            for j in 0..levels - 1 {
                acc[j].push(vals[j] - vals[levels - 1]);
            }
        }
        Ok(acc)
    });
    let mut total = vec![Moments::default(); levels];
    for p in parts {
        for (t, m) in total.iter_mut().zip(p?) {
            t.merge(&m);
        }
    }
    let n = samples as f64;
    let base = total[levels - 1];
    let base_se2 = base.variance() / n;
    Ok(WEAK_STEPS
        .iter()
        .enumerate()
        .map(|(j, &steps)| {
            if j == levels - 1 {
                (steps, base.mean, base_se2.sqrt())
            } else {
                (steps, base.mean + total[j].mean, (base_se2 + total[j].variance() / n).sqrt())
            }
        })
        .collect())
}

fn scheme_rows(cfg: &ExperimentConfig, reports: &[SchemeReport]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for r in reports {
        let name = r.scheme.name();
        for &(i, k, v) in &r.first_differences {
            rows.push(ResultRow::new(&cfg.name, "schemes", format!("{name};first-diff;coord={i};k={k}"), v, None));
        }
        rows.push(ResultRow::new(&cfg.name, "schemes", format!("{name};first-diff-decay"), r.decay_rate, None));
        for &(n, e, se) in &r.weak {
            let mut row = ResultRow::new(&cfg.name, "schemes", format!("{name};weak;N={n}"), e, cfg.reference);
            row.stat_err = Some(se);
            rows.push(row);
        }
        rows.push(ResultRow::new(&cfg.name, "schemes", format!("{name};weak-rate"), r.weak_rate, None));
    }
    rows
}

/// Density functional at one level for plain-MC cross-checks.
pub fn density_mc(cfg: &ExperimentConfig, level: u32, samples: u64, exec: ExecPolicy) -> Result<McEstimate, CliError> {
    if cfg.payoff != PayoffChoice::Density {
        return Err(CliError::Usage("density_mc needs a density config".into()));
    }
    let sampler = level_sampler(cfg)?;
    mc_estimate(sampler.as_ref(), level, false, samples, cfg.seed ^ 0xdead_beef, exec)
}
