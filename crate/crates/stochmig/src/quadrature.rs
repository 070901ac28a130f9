//! Gauss-Hermite rules for expectations under N(0,1).
//!
//! Nodes come from the Golub-Welsch eigenproblem on the probabilists'
//! Jacobi matrix, polished by Newton steps on the orthonormal recurrence.
//! Weights are Christoffel numbers, rescaled so they sum to one.

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Orthonormal probabilists' Hermite values psi_0..psi_{n} at x and the
/// derivative of psi_n.
fn orthonormal(n: usize, x: f64) -> (Vec<f64>, f64) {
    let mut psi = Vec::with_capacity(n + 1);
    psi.push(1.0);
    if n >= 1 {
        psi.push(x);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = (x * psi[k] - kf.sqrt() * psi[k - 1]) / (kf + 1.0).sqrt();
        psi.push(next);
    }
    let dn = if n == 0 { 0.0 } else { (n as f64).sqrt() * psi[n - 1] };
    (psi, dn)
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            jac[(k, k - 1)] = b;
            jac[(k - 1, k)] = b;
        }
        let mut nodes: Vec<f64> = jac.symmetric_eigen().eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.total_cmp(b));

        let mut weights = Vec::with_capacity(n);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (psi, dn) = orthonormal(n, *x);
                if dn != 0.0 {
                    *x -= psi[n] / dn;
                }
            }
            let (psi, _) = orthonormal(n, *x);
            let s: f64 = psi[..n].iter().map(|p| p * p).sum();
            weights.push(1.0 / s);
        }
        // symmetrize so odd moments vanish exactly
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        GaussHermite { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}
