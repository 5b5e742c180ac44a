//! Euler terminal values for correlated GBM and Heston, in a form that exposes the
//! dependence on the smoothing coordinate `y1`.
//!
//! Once the conditioned coordinates are fixed, every asset's terminal value is
//! `S0 * prod_n (p_n + q_n * y1)`, so the value and its `y1`-derivative cost O(N).

use crate::error::{invalid, Error, Result};
use crate::paths::{bridge_increments, coarsen_increments, terminal_loading, CorrelationStructure, TimeGrid};
use crate::smoothing::Rotation;

#[derive(Debug, Clone, PartialEq)]
pub struct GbmParams {
    pub s0: Vec<f64>,
    pub sigma: Vec<f64>,
    pub mu: Vec<f64>,
    pub corr: CorrelationStructure,
}

impl GbmParams {
    pub fn new(s0: Vec<f64>, sigma: Vec<f64>, mu: Vec<f64>, corr: CorrelationStructure) -> Result<Self> {
        let d = s0.len();
        if d == 0 || sigma.len() != d || mu.len() != d || corr.dim() != d {
            return Err(invalid("GBM parameter dimensions disagree"));
        }
        if s0.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("GBM initial prices must be positive"));
        }
        if sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(invalid("GBM volatilities must be non-negative"));
        }
        Ok(Self { s0, sigma, mu, corr })
    }

    pub fn single(s0: f64, sigma: f64, mu: f64) -> Result<Self> {
        Self::new(vec![s0], vec![sigma], vec![mu], CorrelationStructure::identity(1))
    }

    pub fn dim(&self) -> usize {
        self.s0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    pub s0: f64,
    pub v0: f64,
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
}

impl HestonParams {
    /// The "Set 1" constellation: S0=100, v0=0.04, rho=-0.9, kappa=1, xi=0.1, theta=xi^2/(4 kappa).
    pub fn set1() -> Self {
        Self {
            s0: 100.0,
            v0: 0.04,
            mu: 0.0,
            kappa: 1.0,
            theta: 0.0025,
            xi: 0.1,
            rho: -0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0) {
            return Err(invalid("Heston S0 must be positive"));
        }
        if !(self.v0 >= 0.0) || !(self.kappa > 0.0) || !(self.theta >= 0.0) {
            return Err(invalid("Heston needs v0 >= 0, kappa > 0, theta >= 0"));
        }
        if !(self.xi >= 0.0) {
            return Err(invalid("Heston vol-of-vol must be non-negative"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(invalid("Heston correlation must lie in (-1, 1)"));
        }
        Ok(())
    }

    /// Dimension `4 theta kappa / xi^2` of the squared-OU representation.
    pub fn ou_dimension(&self) -> f64 {
        4.0 * self.theta * self.kappa / (self.xi * self.xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    EulerFullTruncation,
    EulerPartialTruncation,
    EulerReflection,
    Abr,
    HestonOu,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::EulerFullTruncation,
        SchemeKind::EulerPartialTruncation,
        SchemeKind::EulerReflection,
        SchemeKind::Abr,
        SchemeKind::HestonOu,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::EulerFullTruncation => "euler-full-truncation",
            SchemeKind::EulerPartialTruncation => "euler-partial-truncation",
            SchemeKind::EulerReflection => "euler-reflection",
            SchemeKind::Abr => "abr",
            SchemeKind::HestonOu => "heston-ou",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase();
        let alias = match s.as_str() {
            "ft" | "full-truncation" => "euler-full-truncation",
            "pt" | "partial-truncation" => "euler-partial-truncation",
            "reflection" => "euler-reflection",
            "ou" => "heston-ou",
            other => other,
        };
        Self::ALL.into_iter().find(|k| k.name() == alias)
    }
}

/// Heston parameters bound to a variance scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct HestonModel {
    params: HestonParams,
    scheme: SchemeKind,
    vol_factors: usize,
}

impl HestonModel {
    pub fn new(params: HestonParams, scheme: SchemeKind) -> Result<Self> {
        params.validate()?;
        let vol_factors = match scheme {
            SchemeKind::HestonOu => {
                if !(params.xi > 0.0) {
                    return Err(invalid("the OU scheme needs xi > 0"));
                }
                let n = params.ou_dimension();
                let r = n.round();
                if r < 1.0 || (n - r).abs() > 1e-9 {
                    return Err(invalid(format!(
                        "OU scheme needs 4*theta*kappa/xi^2 to be a positive integer, got {n}; use heston_ou_blend"
                    )));
                }
                r as usize
            }
            _ => 1,
        };
        Ok(Self {
            params,
            scheme,
            vol_factors,
        })
    }

    pub fn params(&self) -> &HestonParams {
        &self.params
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    /// Independent Brownian drivers of the variance path.
    pub fn vol_factors(&self) -> usize {
        self.vol_factors
    }

    fn asset_path(&self, vol: &[Vec<f64>], orth: &[f64], loading: f64, dt: f64) -> Result<AffineProduct> {
        let p = &self.params;
        let n = orth.len();
        let rho_c = (1.0 - p.rho * p.rho).sqrt();
        let mut offset = Vec::with_capacity(n);
        let mut slope = Vec::with_capacity(n);
        let mut push = |sq: f64, vol_noise: f64, k: usize| {
            offset.push(1.0 + p.mu * dt + vol_noise + sq * rho_c * orth[k]);
            slope.push(sq * rho_c * loading);
        };
        match self.scheme {
            SchemeKind::HestonOu => {
                let mut x = vec![(p.v0 / self.vol_factors as f64).sqrt(); self.vol_factors];
                let decay = 1.0 - 0.5 * p.kappa * dt;
                let beta = 0.5 * p.xi;
                for k in 0..n {
                    let v: f64 = x.iter().map(|xi| xi * xi).sum();
                    let noise: f64 = x.iter().zip(vol).map(|(xi, w)| xi * w[k]).sum();
                    push(v.sqrt(), p.rho * noise, k);
                    for (xi, w) in x.iter_mut().zip(vol) {
                        *xi = *xi * decay + beta * w[k];
                    }
                }
            }
            SchemeKind::Abr => {
                let e1 = (-p.kappa * dt).exp();
                let e2 = (-2.0 * p.kappa * dt).exp();
                let mut v = p.v0;
                for k in 0..n {
                    let sq = v.sqrt();
                    push(sq, p.rho * sq * vol[0][k], k);
                    let m = e1 * v + (1.0 - e1) * p.theta;
                    if m <= 0.0 {
                        v = 0.0;
                        continue;
                    }
                    let ratio = 0.5 * p.xi * p.xi / p.kappa * v * (1.0 - e2) / (m * m);
                    if !(1.0 + ratio > 0.0) {
                        return Err(Error::NumericalDomain(format!(
                            "ABR log argument {} not positive",
                            1.0 + ratio
                        )));
                    }
                    let gamma2 = (1.0 + ratio).ln() / dt;
                    v = m * (-0.5 * gamma2 * dt + gamma2.sqrt() * vol[0][k]).exp();
                }
            }
            scheme => {
                let (f1, f2, f3): (fn(f64) -> f64, fn(f64) -> f64, fn(f64) -> f64) = match scheme {
                    SchemeKind::EulerFullTruncation => (|v| v, |v| v.max(0.0), |v| v.max(0.0)),
                    SchemeKind::EulerPartialTruncation => (|v| v, |v| v, |v| v.max(0.0)),
                    _ => (f64::abs, f64::abs, f64::abs),
                };
                let mut v = p.v0;
                for k in 0..n {
                    let sq = f3(v).sqrt();
                    push(sq, p.rho * sq * vol[0][k], k);
                    v = f1(v) + p.kappa * (p.theta - f2(v)) * dt + p.xi * sq * vol[0][k];
                }
            }
        }
        Ok(AffineProduct {
            s0: p.s0,
            offset,
            slope,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gbm(GbmParams),
    Heston(HestonModel),
}

/// Increments of every driving Brownian motion with the smoothing coordinate set to zero,
/// plus the per-step loading of that coordinate on each asset.
#[derive(Debug, Clone, PartialEq)]
pub struct Drivers {
    pub grid: TimeGrid,
    pub asset: Vec<Vec<f64>>,
    pub loading: Vec<f64>,
    pub vol: Vec<Vec<f64>>,
}

impl Drivers {
    /// Same randomness on the grid with half the steps.
    pub fn coarsen(&self) -> Option<Drivers> {
        let grid = self.grid.coarsen()?;
        Some(Drivers {
            grid,
            asset: self.asset.iter().map(|r| coarsen_increments(r)).collect(),
            loading: self.loading.iter().map(|l| 2.0 * l).collect(),
            vol: self.vol.iter().map(|r| coarsen_increments(r)).collect(),
        })
    }
}

/// `S0 * prod_n (offset_n + slope_n * y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineProduct {
    pub s0: f64,
    pub offset: Vec<f64>,
    pub slope: Vec<f64>,
}

impl AffineProduct {
    /// Value and derivative at `y`.
    #[inline]
    pub fn eval(&self, y: f64) -> (f64, f64) {
        let mut x = self.s0;
        let mut dx = 0.0;
        for (&p, &q) in self.offset.iter().zip(&self.slope) {
            let f = p + q * y;
            dx = dx * f + x * q;
            x *= f;
        }
        (x, dx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalResult {
    pub xt: Vec<f64>,
    pub dxt_dy1: Vec<f64>,
}

/// All assets with every coordinate but `y1` frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedPaths {
    pub assets: Vec<AffineProduct>,
}

impl ConditionedPaths {
    pub fn dim(&self) -> usize {
        self.assets.len()
    }

    pub fn terminal_into(&self, y1: f64, xt: &mut [f64], dxt: &mut [f64]) {
        for ((a, x), d) in self.assets.iter().zip(xt.iter_mut()).zip(dxt.iter_mut()) {
            (*x, *d) = a.eval(y1);
        }
    }

    pub fn terminal(&self, y1: f64) -> TerminalResult {
        let d = self.dim();
        let mut r = TerminalResult {
            xt: vec![0.0; d],
            dxt_dy1: vec![0.0; d],
        };
        self.terminal_into(y1, &mut r.xt, &mut r.dxt_dy1);
        r
    }
}

impl Model {
    /// Number of priced assets.
    pub fn assets(&self) -> usize {
        match self {
            Model::Gbm(p) => p.dim(),
            Model::Heston(_) => 1,
        }
    }

    /// Total standard-normal inputs for `steps` time steps (smoothing coordinate included).
    pub fn gaussian_dim(&self, steps: usize) -> usize {
        match self {
            Model::Gbm(p) => p.dim() * steps,
            Model::Heston(h) => (h.vol_factors + 1) * steps,
        }
    }

    /// Dimension of the conditioned coordinates.
    pub fn conditioned_dim(&self, steps: usize) -> usize {
        self.gaussian_dim(steps) - 1
    }

    /// Indices of the conditioned coordinates that drive the variance (empty for GBM).
    pub fn volatility_coordinates(&self, steps: usize) -> std::ops::Range<usize> {
        match self {
            Model::Gbm(_) => 0..0,
            Model::Heston(h) => 0..h.vol_factors * steps,
        }
    }

    /// Builds the driving increments from conditioned coordinates.
    ///
    /// GBM layout: the `d-1` rotated coarse coordinates, then the finer bridge factors
    /// level by level, interleaved across assets. Heston layout: every variance
    /// factor (component-major, bridge order), then the asset's finer factors.
    pub fn drivers(&self, conditioned: &[f64], grid: &TimeGrid, rotation: &Rotation) -> Result<Drivers> {
        let n = grid.steps();
        if conditioned.len() != self.conditioned_dim(n) {
            return Err(invalid(format!(
                "expected {} conditioned coordinates, got {}",
                self.conditioned_dim(n),
                conditioned.len()
            )));
        }
        let load = terminal_loading(grid);
        match self {
            Model::Gbm(p) => {
                let d = p.dim();
                if rotation.dim() != d {
                    return Err(invalid("rotation dimension differs from asset count"));
                }
                let mut y = vec![0.0; d];
                y[1..].copy_from_slice(&conditioned[..d - 1]);
                let z1 = rotation.inverse_apply(&y);
                let mut raw = Vec::with_capacity(d);
                let mut z = vec![0.0; n];
                for (j, &coarse) in z1.iter().enumerate() {
                    z[0] = coarse;
                    for k in 1..n {
                        z[k] = conditioned[d - 1 + (k - 1) * d + j];
                    }
                    raw.push(bridge_increments(&z, grid)?);
                }
                let asset = crate::paths::correlate(&raw, &p.corr)?;
                let dir = p.corr.apply(&rotation.first_row());
                Ok(Drivers {
                    grid: *grid,
                    asset,
                    loading: dir.into_iter().map(|c| c * load).collect(),
                    vol: Vec::new(),
                })
            }
            Model::Heston(h) => {
                let nv = h.vol_factors;
                let vol = (0..nv)
                    .map(|c| bridge_increments(&conditioned[c * n..(c + 1) * n], grid))
                    .collect::<Result<Vec<_>>>()?;
                let mut z = vec![0.0; n];
                z[1..].copy_from_slice(&conditioned[nv * n..]);
                Ok(Drivers {
                    grid: *grid,
                    asset: vec![bridge_increments(&z, grid)?],
                    loading: vec![load],
                    vol,
                })
            }
        }
    }

    /// Freezes everything but `y1`.
    pub fn condition(&self, drivers: &Drivers) -> Result<ConditionedPaths> {
        let dt = drivers.grid.dt();
        match self {
            Model::Gbm(p) => Ok(ConditionedPaths {
                assets: (0..p.dim())
                    .map(|i| AffineProduct {
                        s0: p.s0[i],
                        offset: drivers.asset[i]
                            .iter()
                            .map(|w| 1.0 + p.mu[i] * dt + p.sigma[i] * w)
                            .collect(),
                        slope: vec![p.sigma[i] * drivers.loading[i]; drivers.grid.steps()],
                    })
                    .collect(),
            }),
            Model::Heston(h) => Ok(ConditionedPaths {
                assets: vec![h.asset_path(&drivers.vol, &drivers.asset[0], drivers.loading[0], dt)?],
            }),
        }
    }

    pub fn conditioned_paths(&self, conditioned: &[f64], grid: &TimeGrid, rotation: &Rotation) -> Result<ConditionedPaths> {
        self.condition(&self.drivers(conditioned, grid, rotation)?)
    }
}

/// GBM terminal values for a given smoothing coordinate and conditioned coordinates.
pub fn gbm_terminal(params: &GbmParams, y1: f64, conditioned: &[f64], grid: &TimeGrid, rotation: &Rotation) -> Result<TerminalResult> {
    let model = Model::Gbm(params.clone());
    Ok(model.conditioned_paths(conditioned, grid, rotation)?.terminal(y1))
}

/// Heston terminal value; `vol_factors` holds every variance factor, `asset_orth` the
/// asset's finer bridge factors (its coarsest factor is `y1`).
pub fn heston_terminal(
    params: &HestonParams,
    scheme: SchemeKind,
    y1: f64,
    vol_factors: &[f64],
    asset_orth: &[f64],
    grid: &TimeGrid,
) -> Result<TerminalResult> {
    let model = Model::Heston(HestonModel::new(*params, scheme)?);
    let mut c = vol_factors.to_vec();
    c.extend_from_slice(asset_orth);
    Ok(model
        .conditioned_paths(&c, grid, &Rotation::new(1))?
        .terminal(y1))
}

/// Blends integer-dimension OU estimates for a non-integer `4 theta kappa / xi^2 = n + p`:
/// `(1-p) E_n + p E_{n+1}`, each with theta rescaled to match its dimension.
pub fn heston_ou_blend(params: &HestonParams, mut estimator: impl FnMut(&HestonModel) -> Result<f64>) -> Result<f64> {
    params.validate()?;
    if !(params.xi > 0.0) {
        return Err(invalid("blend needs xi > 0"));
    }
    let nstar = params.ou_dimension();
    if !(nstar > 0.0) {
        return Err(invalid(format!("OU dimension must be positive, got {nstar}")));
    }
    let base = nstar.floor();
    let p = nstar - base;
    let with_dim = |n: f64| -> Result<HestonModel> {
        let mut q = *params;
        q.theta = n * q.xi * q.xi / (4.0 * q.kappa);
        HestonModel::new(q, SchemeKind::HestonOu)
    };
    if (nstar - nstar.round()).abs() <= 1e-9 {
        return estimator(&with_dim(nstar.round())?);
    }
    if base < 1.0 {
        return Err(invalid(format!(
            "blend needs 4*theta*kappa/xi^2 >= 1, got {nstar}"
        )));
    }
    let lo = estimator(&with_dim(base)?)?;
    let hi = estimator(&with_dim(base + 1.0)?)?;
    Ok(blend(lo, hi, p))
}

/// Convex combination `(1-p) lo + p hi`.
pub fn blend(lo: f64, hi: f64, p: f64) -> f64 {
    if p == 0.0 {
        lo
    } else {
        (1.0 - p) * lo + p * hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_step_gbm_example() {
        let p = GbmParams::single(100.0, 0.4, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let r = gbm_terminal(&p, 1.0, &[], &grid, &Rotation::new(1)).unwrap();
        assert_relative_eq!(r.xt[0], 140.0, epsilon = 1e-12);
        assert_relative_eq!(r.dxt_dy1[0], 40.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_vol_gbm_is_flat() {
        let p = GbmParams::single(100.0, 0.0, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let r = gbm_terminal(&p, 0.7, &[0.3, -1.0, 2.0], &grid, &Rotation::new(1)).unwrap();
        assert_eq!(r.xt[0], 100.0);
        assert_eq!(r.dxt_dy1[0], 0.0);
    }

    #[test]
    fn set1_admits_single_ou_factor() {
        let m = HestonModel::new(HestonParams::set1(), SchemeKind::HestonOu).unwrap();
        assert_eq!(m.vol_factors(), 1);
        let mut bad = HestonParams::set1();
        bad.theta = 0.004;
        assert!(HestonModel::new(bad, SchemeKind::HestonOu).is_err());
    }

    #[test]
    fn degenerate_heston_matches_gbm() {
        let mut hp = HestonParams::set1();
        hp.xi = 0.0;
        hp.rho = 0.0;
        hp.v0 = 0.04;
        hp.theta = 0.04;
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let vol: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let orth: Vec<f64> = (0..7).map(|i| (i as f64 * 1.3).cos()).collect();
        let g = GbmParams::single(100.0, 0.2, 0.0).unwrap();
        for scheme in [SchemeKind::EulerFullTruncation, SchemeKind::EulerPartialTruncation, SchemeKind::EulerReflection, SchemeKind::Abr] {
            let h = heston_terminal(&hp, scheme, 0.4, &vol, &orth, &grid).unwrap();
            let b = gbm_terminal(&g, 0.4, &orth, &grid, &Rotation::new(1)).unwrap();
            assert_relative_eq!(h.xt[0], b.xt[0], max_relative = 1e-12);
            assert_relative_eq!(h.dxt_dy1[0], b.dxt_dy1[0], max_relative = 1e-12);
        }
    }

    #[test]
    fn full_truncation_switches_off_diffusion() {
        let mut hp = HestonParams::set1();
        hp.xi = 2.0;
        let grid = TimeGrid::new(1.0, 2).unwrap();
        // The terminal factor drives both variance increments strongly negative.
        let m = Model::Heston(HestonModel::new(hp, SchemeKind::EulerFullTruncation).unwrap());
        let paths = m.conditioned_paths(&[-4.0, 0.0, 0.5], &grid, &Rotation::new(1)).unwrap();
        // v after one step = 0.04 + (0.0025-0.04)*0.5 + 2*0.2*(-2*sqrt(.5)*... ) < 0
        assert_eq!(paths.assets[0].slope[1], 0.0);
        assert!(paths.assets[0].slope[0] > 0.0);
    }

    #[test]
    fn blend_examples() {
        let p = HestonParams::set1();
        let v = heston_ou_blend(&p, |m| Ok(m.vol_factors() as f64)).unwrap();
        assert_eq!(v, 1.0);
        let mut q = p;
        q.theta = 1.5 * q.xi * q.xi / (4.0 * q.kappa);
        let v = heston_ou_blend(&q, |m| Ok(m.vol_factors() as f64)).unwrap();
        assert_relative_eq!(v, 1.5, epsilon = 1e-12);
        let v = heston_ou_blend(&q, |_| Ok(0.25)).unwrap();
        assert_relative_eq!(v, 0.25, epsilon = 1e-15);
        q.theta = 0.0;
        assert!(heston_ou_blend(&q, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn coarsened_drivers_match_pairwise_sums() {
        let g = GbmParams::new(vec![100.0; 2], vec![0.2, 0.3], vec![0.0; 2], CorrelationStructure::uniform(2, 0.5).unwrap()).unwrap();
        let m = Model::Gbm(g);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let c: Vec<f64> = (0..7).map(|i| 0.1 * i as f64 - 0.3).collect();
        let rot = Rotation::new(2);
        let fine = m.drivers(&c, &grid, &rot).unwrap();
        let coarse = fine.coarsen().unwrap();
        assert_eq!(coarse.grid.steps(), 2);
        assert_relative_eq!(coarse.asset[1][0], fine.asset[1][0] + fine.asset[1][1]);
        // Total increment including y1 equals the terminal Brownian value.
        let tf: f64 = fine.asset[0].iter().sum::<f64>() + 4.0 * fine.loading[0];
        let tc: f64 = coarse.asset[0].iter().sum::<f64>() + 2.0 * coarse.loading[0];
        assert_relative_eq!(tf, tc, epsilon = 1e-14);
    }
}
