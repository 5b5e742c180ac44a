//! Dimension-adaptive sparse-grid quadrature over standard-normal coordinates.

use std::collections::{BTreeMap, HashMap};

use crate::error::{invalid, Error, Result};
use crate::parallel::{map_range, ExecPolicy};
use crate::quadrules::{gauss_hermite, QuadRule1D, MAX_NODES};

/// Hermite points at level `k` (base 1): 1, 3, 5, 9, 17, ...
pub fn growth(k: u32) -> usize {
    if k <= 1 {
        1
    } else {
        (1usize << (k - 1)) + 1
    }
}

/// Multi-index in base-1 convention (every entry at least 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn ones(dim: usize) -> Self {
        Self(vec![1; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `sum_i (beta_i - 1)`.
    pub fn excess(&self) -> u32 {
        self.0.iter().map(|b| b - 1).sum()
    }

    pub fn forward(&self, i: usize) -> Self {
        let mut b = self.0.clone();
        b[i] += 1;
        Self(b)
    }

    pub fn backward(&self, i: usize) -> Option<Self> {
        (self.0[i] > 1).then(|| {
            let mut b = self.0.clone();
            b[i] -= 1;
            Self(b)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    /// The mixed difference `Delta Q_beta`.
    pub delta: f64,
    /// Error contribution `|Delta Q_beta|`.
    pub error: f64,
    /// Tensor size `prod_i m(beta_i)`.
    pub work: f64,
}

impl Contribution {
    pub fn profit(&self) -> f64 {
        self.error / self.work
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexSet {
    pub accepted: BTreeMap<MultiIndex, Contribution>,
    pub active: BTreeMap<MultiIndex, Contribution>,
}

impl IndexSet {
    /// Every backward neighbour of an accepted index is accepted.
    pub fn is_downward_closed(&self) -> bool {
        self.accepted.keys().all(|b| {
            (0..b.dim()).all(|i| b.backward(i).map_or(true, |n| self.accepted.contains_key(&n)))
        })
    }

    fn admissible(&self, beta: &MultiIndex) -> bool {
        (0..beta.dim()).all(|i| beta.backward(i).map_or(true, |n| self.accepted.contains_key(&n)))
    }
}

#[derive(Debug, Clone)]
pub struct AsgqConfig {
    pub dim: usize,
    pub tol: f64,
    pub max_evals: usize,
    pub exec: ExecPolicy,
    pub growth: fn(u32) -> usize,
}

impl AsgqConfig {
    pub fn new(dim: usize, tol: f64, max_evals: usize) -> Self {
        Self { dim, tol, max_evals, exec: ExecPolicy::default(), growth }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsgqResult {
    pub estimate: f64,
    pub index_set: IndexSet,
    pub error_indicator: f64,
    pub evals: usize,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
}

/// Tensor Gauss-Hermite rules sharing a node-value cache.
pub struct TensorQuadrature<'f, F> {
    f: &'f F,
    dim: usize,
    growth: fn(u32) -> usize,
    exec: ExecPolicy,
    cache: HashMap<Vec<u64>, f64>,
    tensors: HashMap<Vec<u32>, f64>,
}

impl<'f, F> TensorQuadrature<'f, F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    pub fn new(f: &'f F, dim: usize, growth: fn(u32) -> usize, exec: ExecPolicy) -> Self {
        Self { f, dim, growth, exec, cache: HashMap::new(), tensors: HashMap::new() }
    }

    /// Distinct integrand evaluations so far.
    pub fn evals(&self) -> usize {
        self.cache.len()
    }

    fn rules(&self, levels: &[u32]) -> Result<Vec<std::sync::Arc<QuadRule1D>>> {
        levels
            .iter()
            .map(|&k| {
                let m = (self.growth)(k);
                if m > MAX_NODES {
                    return Err(invalid(format!("level {k} needs {m} nodes, above the cap")));
                }
                gauss_hermite(m)
            })
            .collect()
    }

    /// Full tensor rule with `m(levels_i)` points per axis.
    pub fn tensor(&mut self, levels: &[u32]) -> Result<f64> {
        if levels.len() != self.dim {
            return Err(invalid("multi-index dimension mismatch"));
        }
        if let Some(v) = self.tensors.get(levels) {
            return Ok(*v);
        }
        let rules = self.rules(levels)?;
        let sizes: Vec<usize> = rules.iter().map(|r| r.len()).collect();
        let total: usize = sizes.iter().product();
        let point = |mut idx: usize| -> Vec<usize> {
            let mut digits = vec![0; sizes.len()];
            for (d, &s) in digits.iter_mut().zip(&sizes).rev() {
                *d = idx % s;
                idx /= s;
            }
            digits
        };
        let coords = |digits: &[usize]| -> Vec<f64> {
            digits.iter().zip(&rules).map(|(&i, r)| r.nodes[i]).collect()
        };
        let key = |x: &[f64]| -> Vec<u64> { x.iter().map(|v| v.to_bits()).collect() };

        let missing: Vec<Vec<f64>> = (0..total)
            .map(|i| coords(&point(i)))
            .filter(|x| !self.cache.contains_key(&key(x)))
            .collect();
        let f = self.f;
        let values = map_range(self.exec, missing.len(), |i| f(&missing[i]));
        for (x, v) in missing.iter().zip(values) {
            let v = v?;
            if !v.is_finite() {
                return Err(Error::NonFinite { node: x.clone(), value: v });
            }
            self.cache.insert(key(x), v);
        }

        let mut sum = 0.0;
        for i in 0..total {
            let digits = point(i);
            let w: f64 = digits.iter().zip(&rules).map(|(&j, r)| r.weights[j]).product();
            sum += w * self.cache[&key(&coords(&digits))];
        }
        self.tensors.insert(levels.to_vec(), sum);
        Ok(sum)
    }

    /// Mixed difference by inclusion-exclusion over the backward corners.
    pub fn delta(&mut self, beta: &MultiIndex) -> Result<f64> {
        let movable: Vec<usize> = (0..beta.dim()).filter(|&i| beta.0[i] > 1).collect();
        let mut total = 0.0;
        for mask in 0u64..(1u64 << movable.len()) {
            let mut levels = beta.0.clone();
            for (bit, &i) in movable.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    levels[i] -= 1;
                }
            }
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * self.tensor(&levels)?;
        }
        Ok(total)
    }
}

/// Stand-alone mixed difference with a fresh cache.
pub fn delta_quadrature<F>(beta: &MultiIndex, f: &F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    TensorQuadrature::new(f, beta.dim(), growth, ExecPolicy::Sequential).delta(beta)
}

/// Greedy profit-driven adaptation from the all-ones index.
pub fn adapt<F>(config: &AsgqConfig, f: &F) -> Result<AsgqResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if config.dim == 0 {
        return Err(invalid("ASGQ needs at least one dimension"));
    }
    if !(config.tol >= 0.0) {
        return Err(invalid("ASGQ tolerance must be non-negative"));
    }
    let mut tq = TensorQuadrature::new(f, config.dim, config.growth, config.exec);
    let mut set = IndexSet::default();
    let contribution = |tq: &mut TensorQuadrature<F>, beta: &MultiIndex| -> Result<Contribution> {
        let delta = tq.delta(beta)?;
        let work = beta.0.iter().map(|&k| (config.growth)(k) as f64).product();
        Ok(Contribution { delta, error: delta.abs(), work })
    };

    let mut next = MultiIndex::ones(config.dim);
    let mut c = contribution(&mut tq, &next)?;
    let converged = loop {
        set.accepted.insert(next.clone(), c);
        for i in 0..config.dim {
            let n = next.forward(i);
            if (config.growth)(n.0[i]) > MAX_NODES || set.active.contains_key(&n) || !set.admissible(&n) {
                continue;
            }
            let cn = contribution(&mut tq, &n)?;
            set.active.insert(n, cn);
        }
        let err: f64 = set.active.values().map(|c| c.error).sum();
        if err <= config.tol {
            break true;
        }
        if tq.evals() >= config.max_evals {
            break false;
        }
        let mut best: Option<(&MultiIndex, f64)> = None;
        for (b, c) in &set.active {
            if best.map_or(true, |(_, p)| c.profit() > p) {
                best = Some((b, c.profit()));
            }
        }
        let Some((b, _)) = best else { break true };
        next = b.clone();
        c = set.active.remove(&next).expect("chosen index is active");
    };

    Ok(AsgqResult {
        estimate: set.accepted.values().map(|c| c.delta).sum(),
        error_indicator: set.active.values().map(|c| c.error).sum(),
        evals: tq.evals(),
        index_set: set,
        converged,
    })
}
