//! Gauss-Hermite (probabilists') and Gauss-Laguerre rules via Golub-Welsch.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Largest supported node count.
pub const MAX_NODES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    /// Weight is the standard normal density.
    HermiteProbabilists,
    /// Weight is `exp(-x)` on the positive half-line.
    Laguerre,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule1D {
    pub kind: RuleKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted sum of `f` over the nodes.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

// Orthonormal three-term recurrence: x p_k = b_{k+1} p_{k+1} + a_k p_k + b_k p_{k-1}.
fn diag(kind: RuleKind, k: usize) -> f64 {
    match kind {
        RuleKind::HermiteProbabilists => 0.0,
        RuleKind::Laguerre => (2 * k + 1) as f64,
    }
}

fn offdiag(kind: RuleKind, k: usize) -> f64 {
    match kind {
        RuleKind::HermiteProbabilists => (k as f64).sqrt(),
        RuleKind::Laguerre => k as f64,
    }
}

/// Returns (p_n(x), p_n'(x), sum_{k<n} p_k(x)^2).
fn recurrence(kind: RuleKind, n: usize, x: f64) -> (f64, f64, f64) {
    let (mut p_prev, mut p) = (0.0, 1.0);
    let (mut d_prev, mut d) = (0.0, 0.0);
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += p * p;
        let a = diag(kind, k);
        let b = offdiag(kind, k);
        let b_next = offdiag(kind, k + 1);
        let p_next = ((x - a) * p - b * p_prev) / b_next;
        let d_next = (p + (x - a) * d - b * d_prev) / b_next;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d, sumsq)
}

fn golub_welsch(kind: RuleKind, n: usize) -> QuadRule1D {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jac[(k, k)] = diag(kind, k);
        if k + 1 < n {
            let b = offdiag(kind, k + 1);
            jac[(k, k + 1)] = b;
            jac[(k + 1, k)] = b;
        }
    }
    let eig = jac.symmetric_eigen();
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    // Newton polish on p_n; the eigen solve is already close so a couple of steps suffice.
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, d, _) = recurrence(kind, n, *x);
            if d == 0.0 || !d.is_finite() {
                break;
            }
            let step = p / d;
            if !step.is_finite() || step.abs() > 1e-6 * (1.0 + x.abs()) {
                break;
            }
            *x -= step;
        }
    }

    if kind == RuleKind::HermiteProbabilists {
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let r = 0.5 * (nodes[j] - nodes[i]);
            nodes[i] = -r;
            nodes[j] = r;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
    }

    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| 1.0 / recurrence(kind, n, x).2)
        .collect();
    if kind == RuleKind::HermiteProbabilists {
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let w = 0.5 * (weights[i] + weights[j]);
            weights[i] = w;
            weights[j] = w;
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    QuadRule1D {
        kind,
        nodes,
        weights,
    }
}

type Cache = RwLock<HashMap<(RuleKind, usize), Arc<QuadRule1D>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Cached rule lookup. Concurrent first requests may both compute, but only one value is kept.
pub fn rule(kind: RuleKind, n: usize) -> Result<Arc<QuadRule1D>> {
    if n == 0 || n > MAX_NODES {
        return Err(invalid(format!(
            "quadrature node count {n} outside 1..={MAX_NODES}"
        )));
    }
    if let Some(r) = cache().read().expect("rule cache poisoned").get(&(kind, n)) {
        return Ok(Arc::clone(r));
    }
    let built = Arc::new(golub_welsch(kind, n));
    let mut map = cache().write().expect("rule cache poisoned");
    Ok(Arc::clone(map.entry((kind, n)).or_insert(built)))
}

pub fn gauss_hermite(n: usize) -> Result<Arc<QuadRule1D>> {
    rule(RuleKind::HermiteProbabilists, n)
}

pub fn gauss_laguerre(n: usize) -> Result<Arc<QuadRule1D>> {
    rule(RuleKind::Laguerre, n)
}
