//! Closed-form scalings of step size, sparse-grid size and quadrature nodes for the
//! smoothed sparse-grid estimator under the error model `dt + N_asgq^-p + N_q^-s`
//! at work `N_asgq * N_q / dt`.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityProfile {
    /// Mixed-regularity exponent of the sparse-grid error.
    pub p: f64,
    /// Regularity exponent of the pre-integration error.
    pub s: f64,
    pub kappa: u32,
}

impl RegularityProfile {
    pub fn new(p: f64, s: f64, kappa: u32) -> Result<Self> {
        let r = Self { p, s, kappa };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.s > 0.0) {
            return Err(invalid("regularity exponents must be positive"));
        }
        if !(self.p * self.s > self.p + self.s) {
            return Err(invalid(format!(
                "degenerate regime: p*s = {} must exceed p+s = {}",
                self.p * self.s,
                self.p + self.s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsgqAdvice {
    /// `dt ~ TOL^dt_exponent`.
    pub dt_exponent: f64,
    /// `N_asgq ~ dt^n_asgq_exponent`.
    pub n_asgq_exponent: f64,
    /// `N_q ~ dt^nq_exponent`.
    pub nq_exponent: f64,
    /// `Work ~ TOL^work_exponent`.
    pub work_exponent: f64,
    pub dt: f64,
    pub n_asgq_scale: f64,
    pub nq_scale: f64,
    pub predicted_work: f64,
}

/// Closed-form exponents, evaluated at `tol` (all constants set to one).
pub fn advise_asgq(profile: &RegularityProfile, tol: f64) -> Result<AsgqAdvice> {
    profile.validate()?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid("tolerance must lie in (0, 1)"));
    }
    let (p, s) = (profile.p, profile.s);
    let ps = p * s;
    let dt_exponent = (ps + p + s) / (ps - p - s);
    let n_asgq_exponent = (p + s - ps) / (p * (ps + p + s));
    let nq_exponent = (p + s - ps) / (s * (ps + p + s));
    let work_exponent = -1.0 - 2.0 * (p + s) / (ps - p - s) - 1.0 / p - 1.0 / s;
    let dt = tol.powf(dt_exponent);
    Ok(AsgqAdvice {
        dt_exponent,
        n_asgq_exponent,
        nq_exponent,
        work_exponent,
        dt,
        n_asgq_scale: dt.powf(n_asgq_exponent),
        nq_scale: dt.powf(nq_exponent),
        predicted_work: tol.powf(work_exponent),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_examples() {
        let a = advise_asgq(&RegularityProfile::new(10.0, 10.0, 1).unwrap(), 1e-2).unwrap();
        assert!((a.work_exponent + 1.7).abs() < 1e-12);
        let b = advise_asgq(&RegularityProfile::new(3.0, 3.0, 0).unwrap(), 1e-2).unwrap();
        assert!((b.work_exponent + (1.0 + 4.0 + 2.0 / 3.0)).abs() < 1e-12);
        let big = advise_asgq(&RegularityProfile::new(1e9, 1e9, 1).unwrap(), 1e-2).unwrap();
        assert!((big.work_exponent + 1.0).abs() < 1e-6);
        assert!(RegularityProfile::new(2.0, 2.0, 0).is_err());
    }

    #[test]
    fn work_exponent_rises_with_regularity() {
        let mut prev = f64::NEG_INFINITY;
        for k in 3..40 {
            let v = k as f64;
            let w = advise_asgq(&RegularityProfile::new(v, v + 1.0, 1).unwrap(), 0.1).unwrap().work_exponent;
            assert!(w > prev && w < -1.0);
            prev = w;
        }
    }
}
