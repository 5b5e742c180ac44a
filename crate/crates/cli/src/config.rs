//! Flat experiment configuration and the named presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Asgq,
    Mlmc,
    Mc,
    Schemes,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Asgq => "asgq",
            Method::Mlmc => "mlmc",
            Method::Mc => "mc",
            Method::Schemes => "schemes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gbm,
    Heston,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffChoice {
    Call,
    Digital,
    BasketCall,
    Density,
}

/// One experiment. Every key is optional in a config file; missing keys take the
/// values of `preset` (when given) or of [`ExperimentConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Base preset for file configs.
    pub preset: Option<String>,
    pub method: Method,
    pub model: ModelKind,
    pub scheme: String,
    pub payoff: PayoffChoice,
    /// Strike, or the evaluation point for densities.
    pub strike: f64,
    pub s0: f64,
    pub sigma: f64,
    pub mu: f64,
    pub assets: usize,
    /// Pairwise asset correlation (GBM baskets).
    pub correlation: f64,
    /// Basket weights; equal weights when empty.
    pub weights: Vec<f64>,
    pub v0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
    pub horizon: f64,
    pub smoothing: bool,
    pub richardson: bool,
    /// Target accuracy; relative to `reference` when `relative_tol` is set.
    pub tol: f64,
    pub relative_tol: bool,
    /// Time steps for ASGQ and plain MC (the fine grid under Richardson).
    pub steps: usize,
    pub l0: u32,
    pub max_level: u32,
    pub alpha_guess: f64,
    pub nq: usize,
    pub nq_rate: f64,
    pub tol_newton: f64,
    pub tol_newton_rate: f64,
    pub max_evals: usize,
    /// Fixed plain-MC sample count (0 derives it from `tol`).
    pub samples: u64,
    pub seed: u64,
    pub reference: Option<f64>,
    pub output: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            preset: None,
            method: Method::Mlmc,
            model: ModelKind::Gbm,
            scheme: "heston-ou".into(),
            payoff: PayoffChoice::Digital,
            strike: 100.0,
            s0: 100.0,
            sigma: 0.4,
            mu: 0.0,
            assets: 1,
            correlation: 0.0,
            weights: Vec::new(),
            v0: 0.04,
            kappa: 1.0,
            theta: 0.0025,
            xi: 0.1,
            rho: -0.9,
            horizon: 1.0,
            smoothing: true,
            richardson: false,
            tol: 1e-2,
            relative_tol: true,
            steps: 8,
            l0: 0,
            max_level: 10,
            alpha_guess: 1.0,
            nq: 16,
            nq_rate: 0.0,
            tol_newton: 1e-3,
            tol_newton_rate: 0.0,
            max_evals: 200_000,
            samples: 0,
            seed: 2024,
            reference: None,
            output: None,
        }
    }
}

pub const HESTON_CALL_REF: f64 = 6.332542;
pub const HESTON_DIGITAL_REF: f64 = 0.5145;
pub const GBM_DIGITAL_REF: f64 = 0.42074;
pub const GBM_CALL_REF: f64 = 15.8519;
pub const BASKET_REF: f64 = 11.04;

/// Black-Scholes digital, S0=K=100, sigma=0.2, T=1, r=0: Phi(-0.1).
pub const GBM_DIGITAL_LOWVOL_REF: f64 = 0.460_172_162_722_971;
/// Lognormal density at 1 for S0=1, sigma=0.2, T=1, r=0.
pub const GBM_DENSITY_REF: f64 = 1.984_762_737_385_1;
/// Set-1 Heston density at 1 with S0=1, by Fourier inversion of the characteristic function.
pub const HESTON_DENSITY_REF: f64 = 2.447_456_2;

fn gbm(name: &str, method: Method, payoff: PayoffChoice) -> ExperimentConfig {
    ExperimentConfig { name: name.into(), method, payoff, ..Default::default() }
}

fn heston(name: &str, method: Method, payoff: PayoffChoice) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        method,
        payoff,
        model: ModelKind::Heston,
        nq: 32,
        ..Default::default()
    }
}

/// Every named preset.
pub fn presets() -> Vec<ExperimentConfig> {
    use Method::*;
    use PayoffChoice::*;
    let mut v = Vec::new();

    v.push(ExperimentConfig {
        steps: 8,
        richardson: true,
        tol: 1e-4,
        relative_tol: false,
        nq: 32,
        tol_newton: 1e-10,
        reference: Some(GBM_DIGITAL_REF),
        ..gbm("gbm-digital-asgq", Asgq, Digital)
    });
    v.push(ExperimentConfig {
        steps: 8,
        richardson: true,
        tol: 1e-3,
        relative_tol: false,
        nq: 32,
        tol_newton: 1e-10,
        reference: Some(GBM_CALL_REF),
        ..gbm("gbm-call-asgq", Asgq, Call)
    });
    v.push(ExperimentConfig {
        steps: 2,
        assets: 4,
        correlation: 0.3,
        tol: 1e-3,
        relative_tol: false,
        nq: 32,
        tol_newton: 1e-10,
        reference: Some(BASKET_REF),
        ..gbm("basket4-asgq", Asgq, BasketCall)
    });
    v.push(ExperimentConfig {
        steps: 8,
        richardson: true,
        tol: 1e-4,
        relative_tol: false,
        tol_newton: 1e-10,
        reference: Some(HESTON_DIGITAL_REF),
        ..heston("heston-digital-asgq", Asgq, Digital)
    });
    v.push(ExperimentConfig {
        steps: 8,
        richardson: true,
        tol: 1e-3,
        relative_tol: false,
        tol_newton: 1e-10,
        reference: Some(HESTON_CALL_REF),
        ..heston("heston-call-asgq", Asgq, Call)
    });

    v.push(ExperimentConfig {
        sigma: 0.2,
        nq: 8,
        tol: 1e-2,
        max_level: 9,
        reference: Some(GBM_DIGITAL_LOWVOL_REF),
        ..gbm("gbm-digital-mlmc", Mlmc, Digital)
    });
    v.push(ExperimentConfig {
        smoothing: false,
        ..v.last().cloned().expect("previous preset").renamed("gbm-digital-mlmc-raw")
    });
    v.push(ExperimentConfig {
        tol: 1e-2,
        l0: 1,
        max_level: 9,
        reference: Some(HESTON_DIGITAL_REF),
        ..heston("heston-digital-mlmc-ou", Mlmc, Digital)
    });
    v.push(ExperimentConfig {
        scheme: "euler-full-truncation".into(),
        ..v.last().cloned().expect("previous preset").renamed("heston-digital-mlmc-ft")
    });
    v.push(ExperimentConfig {
        smoothing: false,
        ..v[v.len() - 2].clone().renamed("heston-digital-mlmc-raw")
    });
    v.push(ExperimentConfig {
        tol: 1e-2,
        l0: 1,
        max_level: 9,
        reference: Some(HESTON_CALL_REF),
        ..heston("heston-call-mlmc", Mlmc, Call)
    });
    v.push(ExperimentConfig {
        s0: 1.0,
        strike: 1.0,
        sigma: 0.2,
        tol: 5e-3,
        tol_newton: 1e-8,
        max_level: 9,
        reference: Some(GBM_DENSITY_REF),
        ..gbm("gbm-density-mlmc", Mlmc, Density)
    });
    v.push(ExperimentConfig {
        s0: 1.0,
        strike: 1.0,
        tol: 1e-2,
        tol_newton: 1e-8,
        l0: 1,
        max_level: 9,
        reference: Some(HESTON_DENSITY_REF),
        ..heston("heston-density-mlmc", Mlmc, Density)
    });

    v.push(ExperimentConfig {
        steps: 16,
        tol: 1e-2,
        smoothing: false,
        reference: Some(GBM_CALL_REF),
        ..gbm("gbm-call-mc", Mc, Call)
    });
    v.push(ExperimentConfig {
        steps: 16,
        tol: 1e-2,
        smoothing: true,
        nq: 16,
        sigma: 0.4,
        reference: Some(GBM_DIGITAL_REF),
        ..gbm("gbm-digital-mc", Mc, Digital)
    });
    v.push(ExperimentConfig {
        steps: 4,
        nq: 32,
        tol_newton: 1e-10,
        reference: Some(HESTON_CALL_REF),
        seed: 7,
        ..heston("heston-schemes", Schemes, Call)
    });
    v
}

impl ExperimentConfig {
    fn renamed(self, name: &str) -> Self {
        Self { name: name.into(), ..self }
    }

    pub fn preset(name: &str) -> Option<Self> {
        presets().into_iter().find(|p| p.name == name)
    }

    /// A preset name, or a path to a TOML file.
    pub fn load(target: &str) -> Result<Self, CliError> {
        if let Some(p) = Self::preset(target) {
            return Ok(p);
        }
        let path = Path::new(target);
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "'{target}' is neither a preset nor a readable config file (see list-presets)"
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {target}: {e}")))?;
        Self::from_toml(&text)
    }

    /// Parses a flat TOML document; a `preset` key supplies the defaults.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Usage(format!("bad config: {e}")))?;
        let mut base = match table.get("preset") {
            Some(toml::Value::String(p)) => {
                let mut b = Self::preset(p).ok_or_else(|| CliError::Usage(format!("unknown preset '{p}'")))?;
                b.preset = Some(p.clone());
                toml::Table::try_from(b).map_err(|e| CliError::Usage(e.to_string()))?
            }
            Some(_) => return Err(CliError::Usage("preset must be a string".into())),
            None => toml::Table::try_from(Self::default()).map_err(|e| CliError::Usage(e.to_string()))?,
        };
        for (k, v) in table {
            base.insert(k, v);
        }
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Usage(m.to_string()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.relative_tol && self.reference.is_none() && self.method != Method::Schemes {
            return bad("relative_tol needs a reference value");
        }
        if self.model == ModelKind::Heston && numsmooth::models::SchemeKind::parse(&self.scheme).is_none() {
            return bad("unknown Heston scheme");
        }
        if self.method == Method::Schemes && self.model != ModelKind::Heston {
            return bad("scheme comparison needs the Heston model");
        }
        if self.richardson && !matches!(self.method, Method::Asgq | Method::Mc) {
            return bad("richardson extrapolation applies to asgq and mc runs");
        }
        if self.richardson && self.steps < 2 {
            return bad("richardson needs at least two fine steps");
        }
        if self.payoff == PayoffChoice::Density && self.method != Method::Mlmc && self.method != Method::Mc {
            return bad("densities are estimated with mlmc or mc");
        }
        if self.payoff == PayoffChoice::Density && !self.smoothing {
            return bad("density estimation requires smoothing");
        }
        if (self.payoff == PayoffChoice::BasketCall) != (self.assets > 1) {
            return bad("basket-call goes with assets > 1 and vice versa");
        }
        if self.model == ModelKind::Heston && self.assets != 1 {
            return bad("the Heston model is single-asset");
        }
        if !self.weights.is_empty() && self.weights.len() != self.assets {
            return bad("weights length must equal the asset count");
        }
        if !self.steps.is_power_of_two() {
            return bad("steps must be a power of two");
        }
        if self.method == Method::Mlmc && self.max_level < self.l0 + 2 {
            return bad("max_level must be at least l0 + 2");
        }
        Ok(())
    }

    /// Absolute target accuracy.
    pub fn absolute_tol(&self) -> f64 {
        match (self.relative_tol, self.reference) {
            (true, Some(r)) => self.tol * r.abs(),
            _ => self.tol,
        }
    }
}
