//! Gauss rules used for exact moments of polynomial factors under continuous
//! per-coordinate laws. Weights are normalized to probability measures.

use std::f64::consts::PI;

/// Number of nodes per coordinate.
pub const NODES: usize = 64;

#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre rule on [-1, 1] with weights summing to 2.
pub fn gauss_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and P_{n-1}
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// Uniform(low, high) probability rule.
pub fn uniform(low: f64, high: f64, n: usize) -> Rule {
    let base = gauss_legendre(n);
    let mid = 0.5 * (low + high);
    let half = 0.5 * (high - low);
    Rule {
        nodes: base.nodes.iter().map(|t| mid + half * t).collect(),
        weights: base.weights.iter().map(|w| 0.5 * w).collect(),
    }
}

/// Gauss-Chebyshev rule of the second kind for the semicircle law with
/// radius 1, density (2/pi) sqrt(1 - x^2).
pub fn semicircle(n: usize) -> Rule {
    let h = PI / (n as f64 + 1.0);
    let nodes = (1..=n).map(|j| (j as f64 * h).cos()).collect();
    let weights = (1..=n)
        .map(|j| 2.0 / (n as f64 + 1.0) * (j as f64 * h).sin().powi(2))
        .collect();
    Rule { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_high_degree_polynomials() {
        let r = gauss_legendre(NODES);
        let total: f64 = r.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
        // integral of x^100 over [-1, 1] = 2/101
        let m: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(100)).sum();
        assert!((m - 2.0 / 101.0).abs() < 1e-13);
    }

    #[test]
    fn semicircle_moments_are_catalan() {
        let r = semicircle(NODES);
        // E[X^{2k}] = Catalan(k) / 4^k for the radius-1 semicircle
        let catalan = [1.0, 1.0, 2.0, 5.0, 14.0, 42.0];
        for (k, c) in catalan.iter().enumerate() {
            let m: f64 = r
                .nodes
                .iter()
                .zip(&r.weights)
                .map(|(x, w)| w * x.powi(2 * k as i32))
                .sum();
            assert!((m - c / 4f64.powi(k as i32)).abs() < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn uniform_mean_and_variance() {
        let r = uniform(2.0, 5.0, NODES);
        let mean: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x).sum();
        let var: f64 = r
            .nodes
            .iter()
            .zip(&r.weights)
            .map(|(x, w)| w * (x - 3.5).powi(2))
            .sum();
        assert!((mean - 3.5).abs() < 1e-13);
        assert!((var - 9.0 / 12.0).abs() < 1e-13);
    }
}
