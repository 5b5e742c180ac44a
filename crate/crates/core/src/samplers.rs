//! Coupled level samplers for option payoffs, smoothed or raw.

use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::mlmc::{LevelSample, LevelSampler};
use crate::models::{Drivers, Model};
use crate::paths::TimeGrid;
use crate::payoffs::Payoff;
use crate::quadrules::MAX_NODES;
use crate::rng::{fill_normals, normal};
use crate::smoothing::{smoothed_integrand, SmoothingPlan};

/// Per-level smoothing parameters: `nq0 * 2^(nq_rate (l - l0))` nodes and
/// `tol0 * 2^(-tol_rate (l - l0))` Newton tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSchedule {
    pub l0: u32,
    pub nq0: usize,
    pub nq_rate: f64,
    pub tol0: f64,
    pub tol_rate: f64,
}

impl LevelSchedule {
    pub fn constant(l0: u32, nq: usize, tol: f64) -> Self {
        Self { l0, nq0: nq, nq_rate: 0.0, tol0: tol, tol_rate: 0.0 }
    }

    fn offset(&self, level: u32) -> f64 {
        level.saturating_sub(self.l0) as f64
    }

    pub fn nq(&self, level: u32) -> usize {
        let raw = (self.nq0 as f64 * 2f64.powf(self.nq_rate * self.offset(level))).ceil() as usize;
        // The no-root fallback uses 2 nq + 1 Hermite nodes.
        raw.clamp(1, (MAX_NODES - 1) / 2)
    }

    pub fn tol(&self, level: u32) -> f64 {
        self.tol0 * 2f64.powf(-self.tol_rate * self.offset(level))
    }

    pub fn plan(&self, base: &SmoothingPlan, level: u32) -> SmoothingPlan {
        SmoothingPlan { nq: self.nq(level), tol_newton: self.tol(level), ..base.clone() }
    }

    /// Modelled cost of one smoothed evaluation at `level`.
    pub fn smoothed_cost(&self, level: u32) -> f64 {
        self.nq(level) as f64 * 2f64.powi(level as i32) * (1.0 / self.tol(level)).ln().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Pre-integrated along the smoothing coordinate.
    Smoothed,
    /// Payoff applied directly to Euler terminal values.
    Raw,
}

/// Draws one full Gaussian input: the smoothing coordinate first, then the rest.
pub fn draw_inputs(model: &Model, steps: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<f64>) {
    let y1 = normal(rng);
    let mut c = vec![0.0; model.conditioned_dim(steps)];
    fill_normals(rng, &mut c);
    (y1, c)
}

#[derive(Debug, Clone)]
pub struct OptionSampler {
    pub model: Model,
    pub payoff: Payoff,
    pub horizon: f64,
    pub schedule: LevelSchedule,
    pub estimator: Estimator,
    plans: Vec<SmoothingPlan>,
}

const MAX_LEVEL: u32 = 24;

impl OptionSampler {
    pub fn new(
        model: Model,
        payoff: Payoff,
        base_plan: SmoothingPlan,
        horizon: f64,
        schedule: LevelSchedule,
        estimator: Estimator,
    ) -> Result<Self> {
        base_plan.validate()?;
        if base_plan.rotation.dim() != model.assets() {
            return Err(invalid("rotation dimension differs from asset count"));
        }
        if payoff.dim() != model.assets() {
            return Err(invalid("payoff dimension differs from asset count"));
        }
        TimeGrid::new(horizon, 1)?;
        let plans = (0..=MAX_LEVEL).map(|l| schedule.plan(&base_plan, l)).collect();
        Ok(Self { model, payoff, horizon, schedule, estimator, plans })
    }

    fn plan(&self, level: u32) -> &SmoothingPlan {
        &self.plans[level.min(MAX_LEVEL) as usize]
    }

    fn value(&self, drivers: &Drivers, level: u32, y1: f64) -> Result<f64> {
        let paths = self.model.condition(drivers)?;
        match self.estimator {
            Estimator::Smoothed => smoothed_integrand(self.plan(level), &paths, &self.payoff),
            Estimator::Raw => self.payoff.evaluate(&paths.terminal(y1).xt),
        }
    }

    /// Uncoupled value at one level from a full Gaussian input.
    pub fn evaluate(&self, level: u32, y1: f64, conditioned: &[f64]) -> Result<f64> {
        let grid = TimeGrid::for_level(self.horizon, level)?;
        let d = self.model.drivers(conditioned, &grid, &self.plan(level).rotation)?;
        self.value(&d, level, y1)
    }
}

impl LevelSampler for OptionSampler {
    fn sample(&self, level: u32, coupled: bool, rng: &mut ChaCha8Rng) -> Result<LevelSample> {
        if level > MAX_LEVEL || (coupled && level == 0) {
            return Err(invalid(format!("level {level} out of range")));
        }
        let grid = TimeGrid::for_level(self.horizon, level)?;
        let (y1, c) = draw_inputs(&self.model, grid.steps(), rng);
        let fine_d = self.model.drivers(&c, &grid, &self.plan(level).rotation)?;
        let fine = self.value(&fine_d, level, y1)?;
        let y = if coupled {
            let coarse_d = fine_d.coarsen().expect("level above zero has a coarser grid");
            fine - self.value(&coarse_d, level - 1, y1)?
        } else {
            fine
        };
        Ok(LevelSample { y, fine })
    }

    fn cost(&self, level: u32, coupled: bool) -> f64 {
        let one = |l: u32| match self.estimator {
            Estimator::Smoothed => self.schedule.smoothed_cost(l),
            Estimator::Raw => 2f64.powi(l as i32),
        };
        one(level) + if coupled && level > 0 { one(level - 1) } else { 0.0 }
    }
}
