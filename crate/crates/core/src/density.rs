//! Point densities of the terminal value through the root of `X_T(y) = u`.

use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::mlmc::{run, LevelSample, LevelSampler, MlmcConfig, MlmcResult};
use crate::models::{ConditionedPaths, Drivers, Model};
use crate::paths::TimeGrid;
use crate::payoffs::Payoff;
use crate::samplers::{draw_inputs, LevelSchedule};
use crate::smoothing::{find_root, normal_pdf, RootStatus, SmoothingPlan};

/// Smallest admissible `dX_T/dy` at the root.
pub const DERIVATIVE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityTarget {
    pub u: f64,
}

impl DensityTarget {
    pub fn new(u: f64) -> Result<Self> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(invalid(format!("density point must be positive, got {u}")));
        }
        Ok(Self { u })
    }
}

/// `phi(y*) / X_T'(y*)`, or 0 when the terminal value never reaches `u`.
pub fn density_value(plan: &SmoothingPlan, paths: &ConditionedPaths, target: &DensityTarget) -> Result<f64> {
    if paths.dim() != 1 {
        return Err(invalid("density evaluation needs a single asset"));
    }
    let root = find_root(plan, paths, &Payoff::density_point(target.u))?;
    match root.status {
        RootStatus::Found => {
            if !(root.slope > DERIVATIVE_FLOOR) {
                return Err(Error::NumericalDomain(format!(
                    "terminal value derivative {} at the root is below the floor",
                    root.slope
                )));
            }
            Ok(normal_pdf(root.y1star) / root.slope)
        }
        RootStatus::NoRoot { .. } => Ok(0.0),
        RootStatus::Failed(why) => Err(Error::NumericalDomain(format!("root finding failed: {why}"))),
    }
}

/// One uncoupled density sample at `level`.
pub fn density_sample(
    target: &DensityTarget,
    model: &Model,
    plan: &SmoothingPlan,
    horizon: f64,
    level: u32,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let grid = TimeGrid::for_level(horizon, level)?;
    let (_, c) = draw_inputs(model, grid.steps(), rng);
    let paths = model.conditioned_paths(&c, &grid, &plan.rotation)?;
    density_value(plan, &paths, target)
}

#[derive(Debug, Clone)]
pub struct DensitySampler {
    pub model: Model,
    pub target: DensityTarget,
    pub plan: SmoothingPlan,
    pub horizon: f64,
    pub schedule: LevelSchedule,
}

impl DensitySampler {
    pub fn new(model: Model, target: DensityTarget, plan: SmoothingPlan, horizon: f64, schedule: LevelSchedule) -> Result<Self> {
        if model.assets() != 1 {
            return Err(invalid("density estimation supports a single asset"));
        }
        plan.validate()?;
        TimeGrid::new(horizon, 1)?;
        Ok(Self { model, target, plan, horizon, schedule })
    }

    fn value(&self, d: &Drivers, level: u32) -> Result<f64> {
        let plan = self.schedule.plan(&self.plan, level);
        density_value(&plan, &self.model.condition(d)?, &self.target)
    }
}

impl LevelSampler for DensitySampler {
    fn sample(&self, level: u32, coupled: bool, rng: &mut ChaCha8Rng) -> Result<LevelSample> {
        if coupled && level == 0 {
            return Err(invalid("level 0 has no coarser partner"));
        }
        let grid = TimeGrid::for_level(self.horizon, level)?;
        let (_, c) = draw_inputs(&self.model, grid.steps(), rng);
        let fine_d = self.model.drivers(&c, &grid, &self.plan.rotation)?;
        let fine = self.value(&fine_d, level)?;
        let y = if coupled {
            fine - self.value(&fine_d.coarsen().expect("coarser grid exists"), level - 1)?
        } else {
            fine
        };
        Ok(LevelSample { y, fine })
    }

    fn cost(&self, level: u32, coupled: bool) -> f64 {
        let one = |l: u32| 2f64.powi(l as i32) * (1.0 / self.schedule.tol(l)).ln().max(1.0);
        one(level) + if coupled && level > 0 { one(level - 1) } else { 0.0 }
    }
}

/// MLMC estimate of the density at `target`.
pub fn density_mlmc(sampler: &DensitySampler, config: &MlmcConfig) -> Result<MlmcResult> {
    run(config, sampler)
}
