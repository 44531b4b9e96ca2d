//! One-dimensional quadrature rules on `[-1, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

/// Nodes and weights of a rule on the reference interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The rule mapped affinely onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> Rule1d {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule1d {
            nodes: self.nodes.iter().map(|t| mid + half * t).collect(),
            weights: self.weights.iter().map(|w| half * w).collect(),
        }
    }
}

/// Legendre polynomial `P_m(t)` and its derivative.
fn legendre(m: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

/// `m`-point Gauss-Legendre rule, nodes ascending.
pub fn gauss_legendre(m: usize) -> Rule1d {
    assert!(m >= 1, "a rule needs at least one node");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for k in 0..m.div_ceil(2) {
        // Chebyshev-like initial guess for the k-th largest root
        let mut t = libm::cos(PI * (k as f64 + 0.75) / (m as f64 + 0.5));
        for _ in 0..100 {
            let (p, dp) = legendre(m, t);
            let dt = p / dp;
            t -= dt;
            if libm::fabs(dt) < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(m, t);
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes[m - 1 - k] = t;
        nodes[k] = -t;
        weights[m - 1 - k] = w;
        weights[k] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    Rule1d { nodes, weights }
}

/// `m`-cell composite midpoint rule.
pub fn midpoint(m: usize) -> Rule1d {
    assert!(m >= 1, "a rule needs at least one node");
    let h = 2.0 / m as f64;
    Rule1d {
        nodes: (0..m).map(|k| -1.0 + (k as f64 + 0.5) * h).collect(),
        weights: vec![h; m],
    }
}

/// Tensor product of per-axis rules: `(point, weight)` pairs, last axis
/// fastest.
pub fn tensor_product(rules: &[Rule1d]) -> Vec<(Vec<f64>, f64)> {
    let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for rule in rules {
        let mut next = Vec::with_capacity(out.len() * rule.len());
        for (p, w) in &out {
            for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
                let mut q = p.clone();
                q.push(*t);
                next.push((q, w * wt));
            }
        }
        out = next;
    }
    out
}
