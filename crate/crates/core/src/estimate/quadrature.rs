//! Gauss–Hermite and trapezoid rules.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum QuadratureRule {
    /// `∫ f(x)·φ(x) dx` against the standard normal density.
    GaussHermite { nodes: usize },
    /// Plain `∫_lo^hi f(x) dx` on `points` equally spaced abscissae.
    Trapezoid { lo: f64, hi: f64, points: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum QuadratureError {
    #[error("quadrature rule needs at least {0} nodes")]
    TooFewNodes(usize),
    #[error("integration bounds must be finite with lo < hi")]
    InvalidInterval,
    #[error("integrand is not finite at x = {0}")]
    NonFinite(f64),
}

/// Nodes and weights for `∫ f(x)·φ(x) dx ≈ Σ w_k f(x_k)`.
///
/// Golub–Welsch for the starting nodes (eigenvalues of the Jacobi matrix of
/// the probabilists' Hermite recurrence, off-diagonal `√k`), then Newton on
/// the orthonormal polynomial and Christoffel weights `1/Σ_k p_k(x)²`, which
/// keep full relative accuracy in the tails where eigenvector components do
/// not.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    if n == 0 {
        return Err(QuadratureError::TooFewNodes(1));
    }
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = math::sqrt(k as f64);
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let mut nodes: Vec<f64> = jacobi.symmetric_eigen().eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let mut pairs: Vec<(f64, f64)> = nodes
        .into_iter()
        .map(|x0| {
            let mut x = x0;
            for _ in 0..3 {
                let (pn, pn1, _) = orthonormal_hermite(n, x);
                let step = pn / (math::sqrt(n as f64) * pn1);
                if !step.is_finite() {
                    break;
                }
                x -= step;
            }
            let (_, _, christoffel) = orthonormal_hermite(n, x);
            (x, 1.0 / christoffel)
        })
        .collect();
    // Symmetrize: the exact rule is symmetric about zero.
    for k in 0..n / 2 {
        let (lo, hi) = (pairs[k], pairs[n - 1 - k]);
        let x = 0.5 * (hi.0 - lo.0);
        let w = 0.5 * (hi.1 + lo.1);
        pairs[k] = (-x, w);
        pairs[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total = math::compensated_sum(pairs.iter().map(|p| p.1));
    Ok(pairs.into_iter().map(|(x, w)| (x, w / total)).unzip())
}

/// `(p_n(x), p_{n−1}(x), Σ_{k<n} p_k(x)²)` for the orthonormal probabilists'
/// Hermite polynomials `p_k = He_k/√(k!)`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut sum = 0.0;
    for k in 0..n {
        sum += cur * cur;
        let next = (x * cur - math::sqrt(k as f64) * prev) / math::sqrt((k + 1) as f64);
        prev = cur;
        cur = next;
    }
    (cur, prev, sum)
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, rule: QuadratureRule) -> Result<f64, QuadratureError> {
    match rule {
        QuadratureRule::GaussHermite { nodes } => {
            let (x, w) = gauss_hermite(nodes)?;
            let mut terms = Vec::with_capacity(nodes);
            for (xk, wk) in x.iter().zip(&w) {
                let v = f(*xk);
                if !v.is_finite() {
                    return Err(QuadratureError::NonFinite(*xk));
                }
                terms.push(wk * v);
            }
            Ok(math::compensated_sum(terms))
        }
        QuadratureRule::Trapezoid { lo, hi, points } => {
            if points < 2 {
                return Err(QuadratureError::TooFewNodes(2));
            }
            if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                return Err(QuadratureError::InvalidInterval);
            }
            let h = (hi - lo) / (points - 1) as f64;
            let mut terms = Vec::with_capacity(points);
            for k in 0..points {
                let xk = if k == points - 1 { hi } else { lo + k as f64 * h };
                let v = f(xk);
                if !v.is_finite() {
                    return Err(QuadratureError::NonFinite(xk));
                }
                let edge = k == 0 || k == points - 1;
                terms.push(if edge { 0.5 * v } else { v });
            }
            Ok(h * math::compensated_sum(terms))
        }
    }
}
