//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Criteria are measured and reported, not asserted; the process only fails when a
//! run errors out. Set `ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit.

use std::time::Instant;

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use numsmooth::advisor::{advise_asgq, RegularityProfile};
use numsmooth::asgq::{growth, MultiIndex, TensorQuadrature};
use numsmooth::mlmc::{allocate, fit_rates, level_diagnostics, LevelStats, Moments};
use numsmooth::models::{GbmParams, Model};
use numsmooth::parallel::{with_threads, ExecPolicy};
use numsmooth::paths::{bridge_increments, TimeGrid};
use numsmooth::payoffs::Payoff;
use numsmooth::quadrules::{gauss_hermite, gauss_laguerre};
use numsmooth::rng::sample_rng;
use numsmooth::samplers::draw_inputs;
use numsmooth::smoothing::{smoothed_integrand, Rotation, SmoothingPlan};
use numsmooth_cli::config::ExperimentConfig;
use numsmooth_cli::runner::{density_mc, level_sampler, mlmc_result, run_experiment, scheme_comparison, sweep, SCHEME_SET};
use rand::{Rng, SeedableRng};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

const EXEC: ExecPolicy = ExecPolicy::Parallel;

fn preset(name: &str) -> ExperimentConfig {
    ExperimentConfig::preset(name).unwrap_or_else(|| panic!("missing preset {name}"))
}

fn pct(x: f64) -> String {
    format!("{:.3}%", 100.0 * x)
}

/// Runs an ASGQ preset and checks its relative error.
fn asgq_check(name: &str, bar: f64) -> Result<(bool, String), Box<dyn std::error::Error>> {
    let cfg = preset(name);
    let out = run_experiment(&cfg, EXEC)?;
    let row = &out.rows[0];
    let rel = row.rel_error.unwrap_or(f64::INFINITY);
    Ok((
        out.converged && rel <= bar,
        format!("{name}: {:.6} rel_err {} (bar {}) evals {}", row.estimate, pct(rel), pct(bar), row.evals),
    ))
}

/// Rates fitted on the four finest levels (the asymptotic regime).
fn tail_beta(stats: &[LevelStats]) -> f64 {
    let tail = &stats[stats.len() - 4..];
    fit_rates(tail, tail[0].level - 1).expect("four levels").beta
}

fn finest_kurtosis(stats: &[LevelStats]) -> f64 {
    stats.last().and_then(|s| s.kurtosis).unwrap_or(f64::NAN)
}

fn diagnostics(name: &str, max_level: u32, samples: u64) -> Result<Vec<LevelStats>, Box<dyn std::error::Error>> {
    let cfg = preset(name);
    let sampler = level_sampler(&cfg)?;
    Ok(level_diagnostics(sampler.as_ref(), cfg.l0, max_level, samples, cfg.seed, EXEC)?)
}

fn in_band(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn c1() -> Outcome {
    asgq_check("gbm-digital-asgq", 0.01)
}

fn c2() -> Outcome {
    asgq_check("gbm-call-asgq", 0.01)
}

fn c3() -> Outcome {
    asgq_check("basket4-asgq", 0.02)
}

fn c4() -> Outcome {
    let (a, da) = asgq_check("heston-call-asgq", 0.015)?;
    let (b, db) = asgq_check("heston-digital-asgq", 0.015)?;
    Ok((a && b, format!("{da}; {db}")))
}

fn c5() -> Outcome {
    let smooth = diagnostics("gbm-digital-mlmc", 8, 40_000)?;
    let raw = diagnostics("gbm-digital-mlmc-raw", 8, 200_000)?;
    let (bs, br) = (tail_beta(&smooth), tail_beta(&raw));
    let (ks, kr) = (finest_kurtosis(&smooth), finest_kurtosis(&raw));
    Ok((
        in_band(bs, 0.8, 1.2) && in_band(br, 0.35, 0.65) && ks <= kr / 10.0,
        format!("beta smoothed {bs:.3} in [0.8,1.2], raw {br:.3} in [0.35,0.65]; kurtosis {ks:.2} vs raw {kr:.1} (ratio {:.0}x)", kr / ks),
    ))
}

fn c6() -> Outcome {
    let tols = [4e-2, 2e-2, 1e-2, 5e-3];
    let slope = |name: &str| -> Result<f64, Box<dyn std::error::Error>> {
        let out = sweep(&preset(name), &tols, EXEC)?;
        Ok(out.rows.last().expect("fit row").estimate)
    };
    let s = slope("gbm-digital-mlmc")?;
    let r = slope("gbm-digital-mlmc-raw")?;
    Ok((
        in_band(s, -2.4, -1.9) && in_band(r, -2.8, -2.2),
        format!("work-vs-tol slope smoothed {s:.3} in [-2.4,-1.9], raw {r:.3} in [-2.8,-2.2]"),
    ))
}

fn c7() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, label) in [("heston-digital-mlmc-ou", "OU"), ("heston-digital-mlmc-ft", "FT")] {
        let stats = diagnostics(name, 8, 40_000)?;
        let (b, k) = (tail_beta(&stats), finest_kurtosis(&stats));
        let run = mlmc_result(&preset(name), EXEC)?;
        let rel = (run.estimate - 0.5145).abs() / 0.5145;
        pass &= in_band(b, 0.8, 1.2) && k <= 12.0;
        parts.push(format!("{label}: beta {b:.3}, kurtosis {k:.2}, MLMC estimate {:.4} ({})", run.estimate, pct(rel)));
    }
    Ok((pass, parts.join("; ")))
}

fn c8() -> Outcome {
    let cfg = preset("gbm-density-mlmc");
    let run = mlmc_result(&cfg, EXEC)?;
    let reference = cfg.reference.expect("reference");
    let rel = (run.estimate - reference).abs() / reference;
    let b = tail_beta(&diagnostics("gbm-density-mlmc", 8, 40_000)?);
    Ok((
        rel <= 0.01 && in_band(b, 0.8, 1.2),
        format!("density {:.5} vs {reference:.5} ({}), beta {b:.3}", run.estimate, pct(rel)),
    ))
}

fn c9() -> Outcome {
    let cfg = preset("heston-density-mlmc");
    let stats = diagnostics("heston-density-mlmc", 8, 40_000)?;
    let (b, k) = (tail_beta(&stats), finest_kurtosis(&stats));
    let run = mlmc_result(&cfg, EXEC)?;
    let finest = run.finest().level;
    let mc = density_mc(&cfg, finest, 400_000, EXEC)?;
    let se = (run.stat_error.powi(2) + mc.stat_err.powi(2)).sqrt();
    let gap = (run.estimate - mc.mean).abs();
    Ok((
        in_band(b, 0.8, 1.2) && k <= 12.0 && gap <= 3.0 * se,
        format!(
            "beta {b:.3}, kurtosis {k:.2}; MLMC {:.4} vs plain MC at level {finest} {:.4} (gap {:.2} sigma)",
            run.estimate,
            mc.mean,
            gap / se
        ),
    ))
}

fn c10() -> Outcome {
    let reports = scheme_comparison(&preset("heston-schemes"), &SCHEME_SET, EXEC)?;
    let get = |name: &str| reports.iter().find(|r| r.scheme.name() == name).expect("scheme present");
    let (ft, abr, ou) = (get("euler-full-truncation"), get("abr"), get("heston-ou"));
    let ft_worst = ft.decay_rate < abr.decay_rate && ft.decay_rate < ou.decay_rate;
    Ok((
        in_band(ou.weak_rate, 0.8, 1.2) && in_band(abr.weak_rate, 0.5, 0.9) && ft_worst,
        format!(
            "weak rate OU {:.3} in [0.8,1.2], ABR {:.3} in [0.5,0.9] (FT {:.3}); first-difference decay FT {:.2} < ABR {:.2}, OU {:.2}: {}",
            ou.weak_rate, abr.weak_rate, ft.weak_rate, ft.decay_rate, abr.decay_rate, ou.decay_rate, ft_worst
        ),
    ))
}

// ---------------------------------------------------------------- criterion 11

fn quadrature_exact() -> bool {
    (1..=20usize).all(|n| {
        let h = gauss_hermite(n).unwrap();
        let l = gauss_laguerre(n).unwrap();
        (0..2 * n as i32).all(|k| {
            let hm: f64 = if k % 2 == 1 { 0.0 } else { (1..k).step_by(2).map(f64::from).product() };
            let lm: f64 = (1..=k).map(f64::from).product();
            let scale = if k % 2 == 1 { (1..=k).step_by(2).map(f64::from).product::<f64>() } else { hm };
            (h.integrate(|x| x.powi(k)) - hm).abs() <= 1e-12 * scale.max(1.0)
                && (l.integrate(|x| x.powi(k)) - lm).abs() <= 1e-12 * lm
        })
    })
}

fn bridge_orthogonal() -> bool {
    [1usize, 2, 4, 8, 16, 32].iter().all(|&n| {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                bridge_increments(&e, &grid).unwrap()
            })
            .collect();
        (0..n).all(|r| {
            (0..n).all(|c| {
                let v: f64 = cols.iter().map(|col| col[r] * col[c]).sum();
                (v - if r == c { grid.dt() } else { 0.0 }).abs() < 1e-12
            })
        })
    })
}

fn rotation_orthogonal() -> bool {
    (1..=12usize).all(|d| {
        let a = Rotation::new(d);
        (0..d).all(|i| {
            (0..d).all(|j| {
                let v: f64 = (0..d).map(|k| a.get(i, k) * a.get(j, k)).sum();
                (v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12
            })
        })
    })
}

fn telescoping() -> bool {
    let f = |x: &[f64]| Ok((0.3 * x[0] - 0.2 * x[1] + 0.1 * x[2]).exp() * (x[0] * x[2]).cos());
    let mut tq = TensorQuadrature::new(&f, 3, growth, ExecPolicy::Sequential);
    let full = tq.tensor(&[3, 3, 3]).unwrap();
    let mut sum = 0.0;
    for a in 1..=3 {
        for b in 1..=3 {
            for c in 1..=3 {
                sum += tq.delta(&MultiIndex(vec![a, b, c])).unwrap();
            }
        }
    }
    (sum - full).abs() <= 1e-10 * full.abs()
}

fn sensitivity() -> bool {
    let model = Model::Gbm(GbmParams::single(100.0, 0.4, 0.0).unwrap());
    let grid = TimeGrid::new(1.0, 8).unwrap();
    (0..100u64).all(|i| {
        let mut rng = sample_rng(3, 3, i, 0);
        let (y1, c) = draw_inputs(&model, 8, &mut rng);
        let p = model.conditioned_paths(&c, &grid, &Rotation::new(1)).unwrap();
        let h = 1e-6;
        let fd = (p.terminal(y1 + h).xt[0] - p.terminal(y1 - h).xt[0]) / (2.0 * h);
        let d = p.terminal(y1).dxt_dy1[0];
        (fd - d).abs() <= 1e-5 * d.abs()
    })
}

struct Allocation {
    v: Vec<f64>,
    c: Vec<f64>,
    budget: f64,
}

impl CostFunction for Allocation {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        let m: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let s = self.v.iter().zip(&m).map(|(v, m)| v / m).sum::<f64>() / self.budget;
        Ok(m.iter().zip(&self.c).map(|(m, c)| m * s * c).sum())
    }
}

fn nelder_mead<P>(problem: P, start: Vec<f64>, restarts: usize) -> (Vec<f64>, f64)
where
    P: CostFunction<Param = Vec<f64>, Output = f64> + Clone,
{
    let mut x = start;
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let simplex: Vec<Vec<f64>> = std::iter::once(x.clone())
            .chain((0..x.len()).map(|i| {
                let mut p = x.clone();
                p[i] += 0.5;
                p
            }))
            .collect();
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-15).unwrap();
        let res = Executor::new(problem.clone(), solver).configure(|s| s.max_iters(5000)).run().unwrap();
        x = res.state.best_param.unwrap();
        best = res.state.best_cost;
    }
    (x, best)
}

impl Clone for Allocation {
    fn clone(&self) -> Self {
        Self { v: self.v.clone(), c: self.c.clone(), budget: self.budget }
    }
}

fn allocation_optimal() -> bool {
    let mut rng = rand::rngs::StdRng::seed_from_u64(17);
    (0..10).all(|_| {
        let v: Vec<f64> = (0..4).map(|_| 10f64.powf(rng.gen_range(-4.0..0.0))).collect();
        let c: Vec<f64> = (0..4).map(|l| 2f64.powi(l) * rng.gen_range(1.0..3.0)).collect();
        let tol = rng.gen_range(1e-3..5e-3);
        let budget = tol * tol / 2.0;
        let work: f64 = allocate(&v, &c, tol).iter().zip(&c).map(|(m, c)| *m as f64 * c).sum();
        let (_, best) = nelder_mead(Allocation { v, c, budget }, vec![0.0; 4], 4);
        work <= best * 1.001
    })
}

fn conditional_consistency() -> bool {
    let model = Model::Gbm(GbmParams::single(100.0, 0.4, 0.0).unwrap());
    let payoff = Payoff::digital(100.0);
    let plan = SmoothingPlan::new(1, 1e-8, 16).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let (mut s, mut r) = (Moments::default(), Moments::default());
    for i in 0..200_000u64 {
        let (y1, c) = draw_inputs(&model, 4, &mut sample_rng(8, 2, i, 0));
        let p = model.conditioned_paths(&c, &grid, &plan.rotation).unwrap();
        r.push(payoff.evaluate(&p.terminal(y1).xt).unwrap());
        if i < 20_000 {
            s.push(smoothed_integrand(&plan, &p, &payoff).unwrap());
        }
    }
    let se = (s.variance() / s.n as f64 + r.variance() / r.n as f64).sqrt();
    (s.mean - r.mean).abs() <= 3.0 * se
}

fn thread_determinism() -> bool {
    let cfg = preset("gbm-digital-mlmc");
    let runs: Vec<String> = [1usize, 2, 4]
        .iter()
        .map(|&t| with_threads(t, || format!("{:?}", mlmc_result(&cfg, ExecPolicy::Parallel).unwrap())))
        .chain(std::iter::once(format!("{:?}", mlmc_result(&cfg, ExecPolicy::Sequential).unwrap())))
        .collect();
    runs.windows(2).all(|w| w[0] == w[1])
}

fn c11() -> Outcome {
    let checks: [(&str, fn() -> bool); 8] = [
        ("quadrature", quadrature_exact),
        ("bridge", bridge_orthogonal),
        ("rotation", rotation_orthogonal),
        ("telescoping", telescoping),
        ("sensitivity", sensitivity),
        ("allocation", allocation_optimal),
        ("conditional-expectation", conditional_consistency),
        ("thread-determinism", thread_determinism),
    ];
    let results: Vec<(&str, bool)> = checks.iter().map(|(n, f)| (*n, f())).collect();
    Ok((
        results.iter().all(|r| r.1),
        results.iter().map(|(n, ok)| format!("{n}:{}", if *ok { "ok" } else { "FAIL" })).collect::<Vec<_>>().join(" "),
    ))
}

// ---------------------------------------------------------------- criterion 12

/// `log(Work) = log N + log N_q - log dt` with `dt = TOL - N^-p - N_q^-s`, over
/// `x = (log N, log N_q)`.
#[derive(Clone)]
struct AsgqWork {
    p: f64,
    s: f64,
    tol: f64,
}

impl AsgqWork {
    fn dt(&self, x: &[f64]) -> f64 {
        self.tol - (-self.p * x[0]).exp() - (-self.s * x[1]).exp()
    }
}

impl CostFunction for AsgqWork {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        let dt = self.dt(x);
        Ok(if dt > 0.0 { x[0] + x[1] - dt.ln() } else { f64::MAX })
    }
}

/// Exponents `(dt ~ TOL^a, N ~ dt^b, N_q ~ dt^c, Work ~ TOL^w)` from optima at two tolerances.
fn numerical_exponents(p: f64, s: f64) -> [f64; 4] {
    let solve = |tol: f64| {
        let start = vec![(3.0 / tol).ln() / p, (3.0 / tol).ln() / s];
        let prob = AsgqWork { p, s, tol };
        let (x, cost) = nelder_mead(prob.clone(), start, 6);
        (prob.dt(&x).ln(), x[0], x[1], cost)
    };
    let (t1, t2) = (1e-4f64, 1e-8f64);
    let a = solve(t1);
    let b = solve(t2);
    let dl = t2.ln() - t1.ln();
    let ddt = b.0 - a.0;
    [ddt / dl, (b.1 - a.1) / ddt, (b.2 - a.2) / ddt, (b.3 - a.3) / dl]
}

fn c12() -> Outcome {
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut example = String::new();
    for i in 0..20 {
        let (p, s) = loop {
            let p: f64 = rng.gen_range(2.2..40.0);
            let s: f64 = rng.gen_range(2.2..40.0);
            if p * s > p + s {
                break (p, s);
            }
        };
        let adv = advise_asgq(&RegularityProfile::new(p, s, 1)?, 1e-2)?;
        let num = numerical_exponents(p, s);
        let closed = [adv.dt_exponent, adv.n_asgq_exponent, adv.nq_exponent, adv.work_exponent];
        let dev = closed.iter().zip(&num).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if i == 0 {
            example = format!(
                "p={p:.2} s={s:.2}: closed form (dt {:.4}, N {:.4}, Nq {:.4}, work {:.4}) vs minimiser ({:.4}, {:.4}, {:.4}, {:.4})",
                closed[0], closed[1], closed[2], closed[3], num[0], num[1], num[2], num[3]
            );
        }
        worst = worst.max(dev);
    }
    let limit = advise_asgq(&RegularityProfile::new(1e9, 1e9, 1)?, 1e-2)?.work_exponent;
    let match_ok = worst <= 1e-6;
    let limit_ok = (limit + 1.0).abs() <= 1e-6;
    Ok((
        match_ok && limit_ok,
        format!(
            "exponent match: {} (max deviation {worst:.3e} over 20 pairs; {example}); p,s->inf work exponent {limit:.9}: {}",
            if match_ok { "PASS" } else { "FAIL" },
            if limit_ok { "PASS" } else { "FAIL" }
        ),
    ))
}

fn main() {
    let criteria: [(u32, &str, f64, fn() -> Outcome); 12] = [
        (1, "GBM digital ASGQ", 120.0, c1),
        (2, "GBM call ASGQ", 120.0, c2),
        (3, "4d basket ASGQ", 600.0, c3),
        (4, "Heston ASGQ call + digital", 1200.0, c4),
        (5, "MLMC rate contrast, GBM digital", 300.0, c5),
        (6, "MLMC complexity slopes", 600.0, c6),
        (7, "Heston digital MLMC, OU and FT", 600.0, c7),
        (8, "GBM density MLMC", 300.0, c8),
        (9, "Heston density MLMC", 600.0, c9),
        (10, "Heston scheme comparison", 300.0, c10),
        (11, "Property suites", 180.0, c11),
        (12, "Advisor exponents", 600.0, c12),
    ];
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failures = 0;
    let mut errors = 0;
    for (id, title, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let wall = start.elapsed().as_secs_f64();
        match outcome {
            Ok((ok, detail)) => {
                let ok = ok && wall <= budget;
                failures += usize::from(!ok);
                println!(
                    "criterion {id:>2} {} | {title} | {detail} | {wall:.1}s (budget {budget:.0}s)",
                    if ok { "PASS" } else { "FAIL" }
                );
            }
            Err(e) => {
                errors += 1;
                println!("criterion {id:>2} FAIL | {title} | error: {e} | {wall:.1}s");
            }
        }
    }
    println!("acceptance: {} of 12 criteria pass", 12 - failures - errors);
    if errors > 0 || (strict && failures > 0) {
        std::process::exit(1);
    }
}
