//! Gauss–Legendre nodes and weights.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[lo, hi]`.
    pub fn scaled(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        (
            self.nodes.iter().map(|t| mid + half * t).collect(),
            self.weights.iter().map(|w| half * w).collect(),
        )
    }
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for order in [2, 3, 7, 16, 32, 64] {
            let rule = GaussLegendre::new(order);
            let s: f64 = rule.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "order {order}: {s}");
            assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        let rule = GaussLegendre::new(5);
        let (x, w) = rule.scaled(0.0, 2.0);
        for k in 0..10 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = 2f64.powi(k + 1) / (k + 1) as f64;
            assert!((q - exact).abs() < 1e-12 * exact, "degree {k}");
        }
    }

    #[test]
    fn three_point_rule() {
        let rule = GaussLegendre::new(3);
        let r = (0.6f64).sqrt();
        assert!((rule.nodes()[0] + r).abs() < 1e-15);
        assert_eq!(rule.nodes()[1], 0.0);
        assert!((rule.weights()[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((rule.weights()[0] - 5.0 / 9.0).abs() < 1e-15);
    }
}
