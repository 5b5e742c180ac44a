//! Payoffs `g(x) = G(phi(x))` with a scalar inner function `phi` whose sign change
//! locates the kink or jump.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffKind {
    Call,
    Digital,
    BasketCall,
    /// Point density evaluation; has no pathwise payoff.
    DensityPoint,
    /// `g == level`; handy for degenerate checks.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Payoff {
    pub kind: PayoffKind,
    /// Strike, evaluation point, or constant value.
    pub level: f64,
    /// Basket weights (a single unit weight otherwise).
    pub weights: Vec<f64>,
}

impl Payoff {
    pub fn call(strike: f64) -> Self {
        Self { kind: PayoffKind::Call, level: strike, weights: vec![1.0] }
    }

    pub fn digital(strike: f64) -> Self {
        Self { kind: PayoffKind::Digital, level: strike, weights: vec![1.0] }
    }

    pub fn basket_call(strike: f64, weights: Vec<f64>) -> Self {
        Self { kind: PayoffKind::BasketCall, level: strike, weights }
    }

    pub fn density_point(u: f64) -> Self {
        Self { kind: PayoffKind::DensityPoint, level: u, weights: vec![1.0] }
    }

    pub fn constant(c: f64) -> Self {
        Self { kind: PayoffKind::Constant, level: c, weights: vec![1.0] }
    }

    /// Regularity index: 0 for jumps, 1 for kinks.
    pub fn regularity(&self) -> Option<u32> {
        match self.kind {
            PayoffKind::Digital | PayoffKind::DensityPoint => Some(0),
            PayoffKind::Call | PayoffKind::BasketCall => Some(1),
            PayoffKind::Constant => None,
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Asset count the payoff expects.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if self.kind != PayoffKind::Constant && d != self.dim() {
            return Err(invalid(format!(
                "payoff expects {} assets, got {d}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// `G` applied to a residual value.
    #[inline]
    pub fn outer(&self, residual: f64) -> f64 {
        match self.kind {
            PayoffKind::Call | PayoffKind::BasketCall => residual.max(0.0),
            PayoffKind::Digital => {
                if residual >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            PayoffKind::Constant => self.level,
            PayoffKind::DensityPoint => f64::NAN,
        }
    }

    /// True when `G` vanishes wherever the residual is negative.
    pub fn vanishes_below(&self) -> bool {
        matches!(self.kind, PayoffKind::Call | PayoffKind::BasketCall | PayoffKind::Digital)
    }

    /// Residual and its derivative without dimension checks or allocation.
    #[inline]
    pub fn residual_unchecked(&self, xt: &[f64], dxt: &[f64]) -> (f64, f64) {
        match self.kind {
            PayoffKind::Constant => (1.0, 0.0),
            _ => {
                let mut r = -self.level;
                let mut dr = 0.0;
                for ((c, x), d) in self.weights.iter().zip(xt).zip(dxt) {
                    r += c * x;
                    dr += c * d;
                }
                (r, dr)
            }
        }
    }

    /// `phi(x_T)` and its derivative along the smoothing coordinate.
    pub fn phi_and_root_residual(&self, xt: &[f64], dxt_dy1: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(xt.len())?;
        if dxt_dy1.len() != xt.len() {
            return Err(invalid("sensitivity length differs from value length"));
        }
        Ok(self.residual_unchecked(xt, dxt_dy1))
    }

    /// Pathwise payoff.
    pub fn evaluate(&self, xt: &[f64]) -> Result<f64> {
        if self.kind == PayoffKind::DensityPoint {
            return Err(Error::Unsupported(
                "density points have no pathwise payoff".into(),
            ));
        }
        self.check_dim(xt.len())?;
        let zeros = vec![0.0; xt.len()];
        Ok(self.outer(self.residual_unchecked(xt, &zeros).0))
    }
}
