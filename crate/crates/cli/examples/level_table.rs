//! Prints per-level MLMC statistics for a preset.
//!
//! Usage: `level_table <preset> [max_level] [samples]`

use numsmooth::mlmc::{fit_rates, level_diagnostics};
use numsmooth::parallel::ExecPolicy;
use numsmooth_cli::config::ExperimentConfig;
use numsmooth_cli::runner::level_sampler;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let cfg = ExperimentConfig::load(args.get(1).map(String::as_str).unwrap_or("gbm-digital-mlmc"))?;
    let max_level: u32 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(8);
    let samples: u64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(20_000);
    let sampler = level_sampler(&cfg)?;
    let t = std::time::Instant::now();
    let stats = level_diagnostics(sampler.as_ref(), cfg.l0, max_level, samples, cfg.seed, ExecPolicy::Parallel)?;
    println!("level  mean          var           kurtosis   cost");
    for s in &stats {
        println!(
            "{:>5}  {:>12.4e}  {:>12.4e}  {:>9.2}  {:.1}",
            s.level,
            s.mean,
            s.var,
            s.kurtosis.unwrap_or(f64::NAN),
            s.cost_per_sample
        );
    }
    if let Some(r) = fit_rates(&stats, cfg.l0) {
        println!("alpha={:.3} beta={:.3} gamma={:.3}", r.alpha, r.beta, r.gamma);
    }
    eprintln!("{:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
