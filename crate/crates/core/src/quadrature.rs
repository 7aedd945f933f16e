//! Gaussian quadrature rules.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Legendre rule on `[-1, 1]`, nodes ascending.
///
/// Newton iteration on `P_n` from the Chebyshev-like initial guesses; converges
/// in a handful of steps for every `n` used here.
pub fn gauss_legendre(n: usize) -> Result<Rule> {
    if n == 0 {
        return Err(Error::InvalidArgument("gauss_legendre needs n >= 1".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok(Rule { nodes, weights })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let (pn, pn1) = if n == 1 { (x, 1.0) } else { (p1, p0) };
    (pn, nf * (x * pn - pn1) / (x * x - 1.0))
}

/// Gauss–Laguerre rule for `∫₀^∞ e^{-t} f(t) dt` (Golub–Welsch).
pub fn gauss_laguerre(n: usize) -> Result<Rule> {
    if n == 0 {
        return Err(Error::InvalidArgument("gauss_laguerre needs n >= 1".into()));
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = 2.0 * i as f64 + 1.0;
        if i + 1 < n {
            jac[(i, i + 1)] = (i + 1) as f64;
            jac[(i + 1, i)] = (i + 1) as f64;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| (eig.eigenvalues[j], eig.eigenvectors[(0, j)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Apply a `[-1, 1]` rule to `[a, b]`, calling `visit(x, w)` for each mapped node.
pub fn map_rule(rule: &Rule, a: f64, b: f64, mut visit: impl FnMut(f64, f64)) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        visit(mid + half * x, half * w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 32, 64] {
            let r = gauss_legendre(n).unwrap();
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            let got: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((got - exact).abs() < 1e-12, "n={n}");
            let even = 2 * (n - 1);
            let exact = 2.0 / (even as f64 + 1.0);
            let got: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(even as i32)).sum();
            assert!((got - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn legendre_maps_to_interval() {
        let r = gauss_legendre(20).unwrap();
        let mut s = 0.0;
        map_rule(&r, 0.0, std::f64::consts::PI, |x, w| s += w * x.sin());
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn laguerre_moments() {
        // ∫ e^{-t} t^k dt = k!
        for n in [4usize, 16, 32] {
            let r = gauss_laguerre(n).unwrap();
            let mut fact = 1.0;
            for k in 0..(2 * n).min(20) {
                if k > 0 {
                    fact *= k as f64;
                }
                let got: f64 = r.nodes.iter().zip(&r.weights).map(|(t, w)| w * t.powi(k as i32)).sum();
                assert!((got - fact).abs() <= 1e-10 * fact, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn zero_points_rejected() {
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_laguerre(0).is_err());
    }
}
