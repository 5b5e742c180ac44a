//! Root-finding plus pre-integration along the smoothing coordinate.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::models::ConditionedPaths;
use crate::payoffs::{Payoff, PayoffKind};
use crate::quadrules::{gauss_hermite, gauss_laguerre};

/// Orthogonal map whose first row is `(1/sqrt(d)) * ones`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    d: usize,
    a: Vec<f64>,
}

impl Rotation {
    /// First row fixed to the normalised ones vector; the rest is Gram-Schmidt of
    /// the canonical basis vectors `e_1, e_2, ...`, skipping dependent ones.
    pub fn new(d: usize) -> Self {
        assert!(d >= 1, "rotation dimension must be positive");
        let mut rows: Vec<Vec<f64>> = vec![vec![1.0 / (d as f64).sqrt(); d]];
        let mut k = 0;
        while rows.len() < d && k < d {
            let mut v = vec![0.0; d];
            v[k] = 1.0;
            for r in &rows {
                let dot: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                rows.push(v);
            }
            k += 1;
        }
        Self { d, a: rows.concat() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.d + j]
    }

    pub fn first_row(&self) -> Vec<f64> {
        self.a[..self.d].to_vec()
    }

    /// `Y = A Z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|i| (0..self.d).map(|j| self.get(i, j) * z[j]).sum())
            .collect()
    }

    /// `Z = A^T Y`.
    pub fn inverse_apply(&self, y: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|j| (0..self.d).map(|i| self.get(i, j) * y[i]).sum())
            .collect()
    }
}

/// Alias matching the operation name used in docs.
pub fn build_rotation(d: usize) -> Rotation {
    Rotation::new(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingPlan {
    pub rotation: Rotation,
    pub tol_newton: f64,
    pub max_newton_iters: usize,
    /// Laguerre nodes per half-line.
    pub nq: usize,
    pub bracket_expansion: f64,
}

/// Bracket search starts here and stops here.
pub const BRACKET_START: f64 = 6.0;
pub const BRACKET_MAX: f64 = 12.0;

impl SmoothingPlan {
    pub fn new(d: usize, tol_newton: f64, nq: usize) -> Result<Self> {
        let plan = Self {
            rotation: Rotation::new(d),
            tol_newton,
            max_newton_iters: 50,
            nq,
            bracket_expansion: 2.0,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_newton > 0.0) || self.nq == 0 || self.max_newton_iters == 0 {
            return Err(invalid("smoothing plan needs tol > 0, nq >= 1, iterations >= 1"));
        }
        if !(self.bracket_expansion > 1.0) {
            return Err(invalid("bracket expansion must exceed 1"));
        }
        Ok(())
    }

    pub fn with_nq(&self, nq: usize) -> Self {
        Self { nq, ..self.clone() }
    }

    pub fn with_tol(&self, tol_newton: f64) -> Self {
        Self { tol_newton, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootStatus {
    Found,
    /// No sign change on `[-12, 12]`; `positive` is the residual sign there.
    NoRoot { positive: bool },
    Failed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootResult {
    pub status: RootStatus,
    /// NaN unless found.
    pub y1star: f64,
    pub iterations: usize,
    /// Residual derivative at the root.
    pub slope: f64,
}

struct Residual<'a> {
    paths: &'a ConditionedPaths,
    payoff: &'a Payoff,
    xt: Vec<f64>,
    dxt: Vec<f64>,
    evals: usize,
}

impl<'a> Residual<'a> {
    fn new(paths: &'a ConditionedPaths, payoff: &'a Payoff) -> Self {
        let d = paths.dim();
        Self { paths, payoff, xt: vec![0.0; d], dxt: vec![0.0; d], evals: 0 }
    }

    #[inline]
    fn eval(&mut self, y: f64) -> (f64, f64) {
        self.evals += 1;
        self.paths.terminal_into(y, &mut self.xt, &mut self.dxt);
        self.payoff.residual_unchecked(&self.xt, &self.dxt)
    }
}

fn scale(payoff: &Payoff) -> f64 {
    match payoff.kind {
        PayoffKind::Constant => 1.0,
        _ => 1.0 + payoff.level.abs(),
    }
}

/// Locates the sign change of `phi(X_T(y1))` for the frozen conditioned paths.
pub fn find_root(plan: &SmoothingPlan, paths: &ConditionedPaths, payoff: &Payoff) -> Result<RootResult> {
    if payoff.kind != PayoffKind::Constant && payoff.dim() != paths.dim() {
        return Err(invalid("payoff and model dimensions differ"));
    }
    let mut res = Residual::new(paths, payoff);
    Ok(locate(plan, &mut res))
}

fn locate(plan: &SmoothingPlan, res: &mut Residual) -> RootResult {
    let tol = plan.tol_newton;
    let rtol = tol * scale(res.payoff);
    let mut y = 0.0;
    for it in 1..=plan.max_newton_iters {
        let (r, dr) = res.eval(y);
        if !r.is_finite() || !dr.is_finite() {
            break;
        }
        if dr == 0.0 {
            break;
        }
        let step = r / dr;
        let next = y - step;
        if r.abs() <= rtol && step.abs() <= tol {
            let slope = res.eval(next).1;
            return RootResult { status: RootStatus::Found, y1star: next, iterations: it, slope };
        }
        if !next.is_finite() || next.abs() > 2.0 * BRACKET_MAX {
            break;
        }
        y = next;
    }
    bracket(plan, res)
}

fn sign_of(r: f64) -> Option<bool> {
    if r.is_nan() {
        None
    } else {
        Some(r >= 0.0)
    }
}

fn bracket(plan: &SmoothingPlan, res: &mut Residual) -> RootResult {
    let fail = |why| RootResult { status: RootStatus::Failed(why), y1star: f64::NAN, iterations: 0, slope: f64::NAN };
    // Sample points ordered left to right, growing outwards.
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut b = BRACKET_START;
    loop {
        for y in [-b, b] {
            let r = res.eval(y).0;
            if r.is_nan() {
                return fail("non-finite residual while bracketing");
            }
            pts.push((y, r));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let changes: Vec<usize> = (1..pts.len())
            .filter(|&i| sign_of(pts[i - 1].1) != sign_of(pts[i].1))
            .collect();
        match changes.len() {
            0 => {}
            1 => {
                let i = changes[0];
                return refine(plan, res, pts[i - 1].0, pts[i].0);
            }
            _ => return fail("several sign changes; more than one root"),
        }
        if b >= BRACKET_MAX {
            let positive = pts[0].1 >= 0.0;
            return RootResult { status: RootStatus::NoRoot { positive }, y1star: f64::NAN, iterations: 0, slope: f64::NAN };
        }
        b = (b * plan.bracket_expansion).min(BRACKET_MAX);
    }
}

// Safeguarded Newton inside a sign-change bracket.
fn refine(plan: &SmoothingPlan, res: &mut Residual, mut lo: f64, mut hi: f64) -> RootResult {
    let tol = plan.tol_newton;
    let rtol = tol * scale(res.payoff);
    let lo_positive = res.eval(lo).0 >= 0.0;
    let mut y = 0.5 * (lo + hi);
    for it in 1..=400 {
        let (r, dr) = res.eval(y);
        if r.is_nan() {
            break;
        }
        if (r >= 0.0) == lo_positive {
            lo = y;
        } else {
            hi = y;
        }
        let newton = if dr != 0.0 && dr.is_finite() { y - r / dr } else { f64::NAN };
        let inside = newton.is_finite() && newton > lo.min(hi) && newton < lo.max(hi);
        let next = if inside { newton } else { 0.5 * (lo + hi) };
        if r.abs() <= rtol && ((next - y).abs() <= tol || (hi - lo).abs() <= tol) {
            let y_star = if inside { next } else { y };
            let slope = res.eval(y_star).1;
            return RootResult { status: RootStatus::Found, y1star: y_star, iterations: it, slope };
        }
        if (hi - lo).abs() < 1e-15 {
            break;
        }
        y = next;
    }
    RootResult { status: RootStatus::Failed("bracket refinement did not converge"), y1star: f64::NAN, iterations: 0, slope: f64::NAN }
}

const LOG_INV_SQRT_2PI: f64 = -0.918_938_533_204_672_8;

/// Standard normal density.
pub fn normal_pdf(y: f64) -> f64 {
    (-0.5 * y * y).exp() / (2.0 * PI).sqrt()
}

/// Smoothed integrand: the expectation of `g` over the smoothing coordinate given
/// the conditioned coordinates, by Gauss-Laguerre on each side of the root.
pub fn smoothed_integrand(plan: &SmoothingPlan, paths: &ConditionedPaths, payoff: &Payoff) -> Result<f64> {
    smoothed_integrand_with_root(plan, paths, payoff).map(|(v, _)| v)
}

/// As [`smoothed_integrand`], also returning the root diagnostics.
pub fn smoothed_integrand_with_root(plan: &SmoothingPlan, paths: &ConditionedPaths, payoff: &Payoff) -> Result<(f64, RootResult)> {
    if payoff.kind == PayoffKind::DensityPoint {
        return Err(Error::Unsupported("density points are handled by the density module".into()));
    }
    let root = find_root(plan, paths, payoff)?;
    let mut res = Residual::new(paths, payoff);
    let value = match root.status {
        RootStatus::Failed(why) => return Err(Error::NumericalDomain(format!("root finding failed: {why}"))),
        RootStatus::NoRoot { positive } => {
            if !positive && payoff.vanishes_below() {
                0.0
            } else {
                let rule = gauss_hermite(2 * plan.nq + 1)?;
                rule.integrate(|y| payoff.outer(res.eval(y).0))
            }
        }
        RootStatus::Found => {
            let ys = root.y1star;
            let rule = gauss_laguerre(plan.nq)?;
            let increasing = root.slope >= 0.0;
            let mut total = 0.0;
            for dir in [1.0f64, -1.0] {
                let positive_side = (dir > 0.0) == increasing;
                if !positive_side && payoff.vanishes_below() {
                    continue;
                }
                let mut half = 0.0;
                for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let y = ys + dir * t;
                    let log_env = -0.5 * y * y + t + LOG_INV_SQRT_2PI;
                    if log_env < -745.0 {
                        continue;
                    }
                    let g = if payoff.kind == PayoffKind::Digital {
                        if positive_side { 1.0 } else { 0.0 }
                    } else {
                        payoff.outer(res.eval(y).0)
                    };
                    half += w * g * log_env.exp();
                }
                total += half;
            }
            total
        }
    };
    if !value.is_finite() {
        return Err(Error::NumericalDomain(format!("smoothed integrand not finite ({value})")));
    }
    Ok((value, root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GbmParams, Model};
    use crate::paths::TimeGrid;
    use approx::assert_relative_eq;

    fn one_step() -> (ConditionedPaths, SmoothingPlan) {
        let m = Model::Gbm(GbmParams::single(100.0, 0.4, 0.0).unwrap());
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let plan = SmoothingPlan::new(1, 1e-10, 32).unwrap();
        (m.conditioned_paths(&[], &grid, &plan.rotation).unwrap(), plan)
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(Rotation::new(1).first_row(), vec![1.0]);
        let r = Rotation::new(2);
        let s = 0.5f64.sqrt();
        assert_relative_eq!(r.get(1, 0), s, epsilon = 1e-15);
        assert_relative_eq!(r.get(1, 1), -s, epsilon = 1e-15);
        let r4 = Rotation::new(4);
        assert!(r4.first_row().iter().all(|v| (v - 0.5).abs() < 1e-15));
        for d in 1..=8 {
            let r = Rotation::new(d);
            for i in 0..d {
                for j in 0..d {
                    let dot: f64 = (0..d).map(|k| r.get(i, k) * r.get(j, k)).sum();
                    assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn one_step_roots() {
        let (paths, plan) = one_step();
        let r = find_root(&plan, &paths, &Payoff::call(100.0)).unwrap();
        assert_eq!(r.status, RootStatus::Found);
        assert!(r.y1star.abs() < 1e-12);
        let r = find_root(&plan, &paths, &Payoff::call(120.0)).unwrap();
        assert_relative_eq!(r.y1star, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn no_root_when_path_stays_above() {
        let m = Model::Gbm(GbmParams::single(100.0, 0.4, 0.0).unwrap());
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let plan = SmoothingPlan::new(1, 1e-8, 16).unwrap();
        // Strongly positive fine factors keep the path far above a tiny strike.
        let paths = m.conditioned_paths(&[0.0, 0.0, 0.0], &grid, &plan.rotation).unwrap();
        let r = find_root(&plan, &paths, &Payoff::call(-1000.0)).unwrap();
        assert_eq!(r.status, RootStatus::NoRoot { positive: true });
        let c = find_root(&plan, &paths, &Payoff::constant(1.0)).unwrap();
        assert_eq!(c.status, RootStatus::NoRoot { positive: true });
        let v = smoothed_integrand(&plan, &paths, &Payoff::constant(1.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_step_smoothed_values() {
        let (paths, plan) = one_step();
        let d = smoothed_integrand(&plan, &paths, &Payoff::digital(100.0)).unwrap();
        assert!((d - 0.5).abs() < 5e-3);
        // E[max(100(1+0.4Z)-100,0)] = 40 * phi(0)
        let c = smoothed_integrand(&plan, &paths, &Payoff::call(100.0)).unwrap();
        assert_relative_eq!(c, 40.0 * normal_pdf(0.0), max_relative = 1e-3);
    }
}
