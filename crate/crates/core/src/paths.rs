//! Levy Brownian-bridge construction and asset correlation.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{invalid, Error, Result};

/// Uniform dyadic time grid on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 || !steps.is_power_of_two() {
            return Err(invalid(format!(
                "step count must be a power of two, got {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with `2^level` steps.
    pub fn for_level(horizon: f64, level: u32) -> Result<Self> {
        let steps = 1usize
            .checked_shl(level)
            .ok_or_else(|| invalid(format!("level {level} too deep")))?;
        Self::new(horizon, steps)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Grid with half as many steps, if any remain.
    pub fn coarsen(&self) -> Option<Self> {
        (self.steps > 1).then(|| Self {
            horizon: self.horizon,
            steps: self.steps / 2,
        })
    }
}

/// Maps `z` (breadth-first bridge ordering, `z[0]` the terminal factor) to increments.
pub fn bridge_increments(z: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    let n = grid.steps();
    if z.len() != n {
        return Err(invalid(format!(
            "bridge needs {n} factors, got {}",
            z.len()
        )));
    }
    let dt = grid.dt();
    let mut w = vec![0.0; n + 1];
    w[n] = grid.horizon().sqrt() * z[0];
    let mut next = 1;
    let mut span = n;
    while span > 1 {
        let half = span / 2;
        let sd = (half as f64 * dt * 0.5).sqrt();
        for left in (0..n).step_by(span) {
            let right = left + span;
            w[left + half] = 0.5 * (w[left] + w[right]) + sd * z[next];
            next += 1;
        }
        span = half;
    }
    Ok(w.windows(2).map(|p| p[1] - p[0]).collect())
}

/// Increments plus their derivative with respect to `z[0]`, which is `dt/sqrt(T)` everywhere.
pub fn bridge_increments_and_sensitivity(
    z: &[f64],
    grid: &TimeGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let inc = bridge_increments(z, grid)?;
    let load = terminal_loading(grid);
    Ok((inc, vec![load; grid.steps()]))
}

/// Loading of the terminal factor on each increment.
pub fn terminal_loading(grid: &TimeGrid) -> f64 {
    grid.dt() / grid.horizon().sqrt()
}

/// Pairwise sums: the coarse-grid increments driven by the same randomness.
pub fn coarsen_increments(fine: &[f64]) -> Vec<f64> {
    fine.chunks_exact(2).map(|p| p[0] + p[1]).collect()
}

/// Correlation matrix with its lower Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStructure {
    rho: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl CorrelationStructure {
    pub fn new(rho: DMatrix<f64>) -> Result<Self> {
        let d = rho.nrows();
        if d == 0 || rho.ncols() != d {
            return Err(invalid("correlation matrix must be square and non-empty"));
        }
        for i in 0..d {
            if (rho[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(invalid("correlation matrix needs a unit diagonal"));
            }
            for j in 0..i {
                if (rho[(i, j)] - rho[(j, i)]).abs() > 1e-12 {
                    return Err(invalid("correlation matrix must be symmetric"));
                }
            }
        }
        let chol = Cholesky::new(rho.clone())
            .ok_or_else(|| Error::Decomposition("correlation matrix is not positive definite".into()))?
            .l();
        Ok(Self { rho, chol })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            rho: DMatrix::identity(d, d),
            chol: DMatrix::identity(d, d),
        }
    }

    /// Equicorrelated structure.
    pub fn uniform(d: usize, r: f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { r }))
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Applies the factor to one vector of per-asset values.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..=i).map(|j| self.chol[(i, j)] * v[j]).sum())
            .collect()
    }
}

/// Per-time-step application of the Cholesky factor to `d` rows of increments.
pub fn correlate(uncorrelated: &[Vec<f64>], corr: &CorrelationStructure) -> Result<Vec<Vec<f64>>> {
    let d = corr.dim();
    if uncorrelated.len() != d {
        return Err(invalid(format!(
            "expected {d} increment rows, got {}",
            uncorrelated.len()
        )));
    }
    let n = uncorrelated[0].len();
    if uncorrelated.iter().any(|r| r.len() != n) {
        return Err(invalid("increment rows differ in length"));
    }
    let mut out = vec![vec![0.0; n]; d];
    let mut col = vec![0.0; d];
    for t in 0..n {
        for (c, row) in col.iter_mut().zip(uncorrelated) {
            *c = row[t];
        }
        for (i, v) in corr.apply(&col).into_iter().enumerate() {
            out[i][t] = v;
        }
    }
    Ok(out)
}
