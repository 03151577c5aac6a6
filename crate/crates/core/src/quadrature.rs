//! Gauss-Hermite quadrature nodes and weights via the Golub-Welsch
//! algorithm: integrates `exp(-x^2) f(x)` over the real line.

use nalgebra::DMatrix;

/// Nodes and weights for an n-point Gauss-Hermite rule.
///
/// The Hermite three-term recurrence yields a symmetric tridiagonal
/// companion matrix with zeros on the diagonal and `sqrt(k/2)` off it;
/// nodes are its eigenvalues and weights come from the first eigenvector
/// components scaled by `sqrt(pi)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be positive");
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for k in 0..n.saturating_sub(1) {
            let off = ((k as f64 + 1.0) * 0.5).sqrt();
            companion[(k, k + 1)] = off;
            companion[(k + 1, k)] = off;
        }
        let eigen = companion.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eigen
            .eigenvalues
            .iter()
            .copied()
            .zip(
                eigen
                    .eigenvectors
                    .row(0)
                    .iter()
                    .map(|v| v * v * std::f64::consts::PI.sqrt()),
            )
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate `exp(-x^2) f(x)` over the real line.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn integrates_constant_to_sqrt_pi() {
        let q = GaussHermite::new(5);
        assert!((q.integrate(|_| 1.0) - PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn integrates_x2_to_half_sqrt_pi() {
        let q = GaussHermite::new(10);
        assert!((q.integrate(|x| x * x) - PI.sqrt() / 2.0).abs() < 1e-13);
    }

    #[test]
    fn three_point_rule_matches_known_nodes() {
        let q = GaussHermite::new(3);
        let expected = 1.224_744_871_391_589;
        assert!((q.nodes()[0] + expected).abs() < 1e-12);
        assert!(q.nodes()[1].abs() < 1e-12);
        assert!((q.nodes()[2] - expected).abs() < 1e-12);
        assert!((q.weights()[1] - 1.181_635_900_603_677_4).abs() < 1e-12);
    }

    #[test]
    fn normal_expectation_of_square_is_variance() {
        // E[X^2] for X ~ N(0, s^2) via the sqrt(2)s substitution.
        let q = GaussHermite::new(24);
        let s = 0.37;
        let ex2 = q.integrate(|u| {
            let x = std::f64::consts::SQRT_2 * s * u;
            x * x
        }) / PI.sqrt();
        assert!((ex2 - s * s).abs() < 1e-14);
    }
}
