//! Scalar densities, differential entropy and Fisher information.
//!
//! Both density kinds are finite Gaussian mixtures underneath: a
//! quadrature-backed density is a prior discretized on nodes `x_k` with
//! masses `ω_k`, smoothed by `N(0, t)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::system::PriorKind;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum ScalarDensity {
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    /// `f(y) = Σ_k ω_k·φ_t(y − x_k)`.
    QuadratureBacked { nodes: Vec<f64>, weights: Vec<f64>, t: f64 },
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DensityError {
    #[error("invalid density: {0}")]
    Invalid(String),
    #[error("density integrates to {0} on its grid, expected 1 within 1e-6")]
    Normalization(f64),
    #[error("adaptive trapezoid did not converge")]
    NotConverged,
}

/// Tolerance between successive trapezoid refinements.
const REFINE_TOL: f64 = 1e-8;
const INITIAL_INTERVALS: usize = 256;
const MAX_INTERVALS: usize = 1 << 22;

impl ScalarDensity {
    pub fn gaussian(mean: f64, variance: f64) -> Self {
        ScalarDensity::GaussianMixture {
            weights: alloc::vec![1.0],
            means: alloc::vec![mean],
            variances: alloc::vec![variance],
        }
    }

    fn components(&self) -> (&[f64], &[f64], ComponentVar<'_>) {
        match self {
            ScalarDensity::GaussianMixture { weights, means, variances } => {
                (weights, means, ComponentVar::PerComponent(variances))
            }
            ScalarDensity::QuadratureBacked { nodes, weights, t } => (weights, nodes, ComponentVar::Shared(*t)),
        }
    }

    pub fn validate(&self) -> Result<(), DensityError> {
        let (w, m, v) = self.components();
        if w.is_empty() || w.len() != m.len() {
            return Err(DensityError::Invalid("weights and locations must match and be nonempty".into()));
        }
        if let ComponentVar::PerComponent(v) = v {
            if v.len() != w.len() {
                return Err(DensityError::Invalid("one variance per component required".into()));
            }
        }
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || m.iter().any(|x| !x.is_finite()) {
            return Err(DensityError::Invalid("weights must be nonnegative and locations finite".into()));
        }
        if (0..w.len()).any(|j| !(v.at(j) > 0.0) || !v.at(j).is_finite()) {
            return Err(DensityError::Invalid("component variances must be positive".into()));
        }
        let total = math::compensated_sum(w.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(DensityError::Invalid(format!("weights sum to {total}")));
        }
        Ok(())
    }

    /// Log-density and score `f′/f` at `y`, via stable responsibilities.
    pub fn log_pdf_and_score(&self, y: f64) -> (f64, f64) {
        let (w, m, v) = self.components();
        let mut max = f64::NEG_INFINITY;
        for j in 0..w.len() {
            if w[j] > 0.0 {
                max = max.max(math::ln(w[j]) + math::normal_log_pdf(y, m[j], v.at(j)));
            }
        }
        let (mut sum, mut score) = (0.0, 0.0);
        for j in 0..w.len() {
            if w[j] > 0.0 {
                let r = math::exp(math::ln(w[j]) + math::normal_log_pdf(y, m[j], v.at(j)) - max);
                sum += r;
                score -= r * (y - m[j]) / v.at(j);
            }
        }
        (max + math::ln(sum), score / sum)
    }

    pub fn pdf(&self, y: f64) -> f64 {
        math::exp(self.log_pdf_and_score(y).0)
    }

    /// `f′(y)`.
    pub fn derivative(&self, y: f64) -> f64 {
        let (lp, s) = self.log_pdf_and_score(y);
        math::exp(lp) * s
    }

    /// `[μ_min − 10σ_max, μ_max + 10σ_max]`.
    pub fn support(&self) -> (f64, f64) {
        let (w, m, v) = self.components();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sd = 0.0f64;
        for j in 0..w.len() {
            lo = lo.min(m[j]);
            hi = hi.max(m[j]);
            sd = sd.max(math::sqrt(v.at(j)));
        }
        (lo - 10.0 * sd, hi + 10.0 * sd)
    }

    fn checked_integral<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64, DensityError> {
        self.validate()?;
        let (lo, hi) = self.support();
        let mass = adaptive_trapezoid(|y| self.pdf(y), lo, hi)?;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(DensityError::Normalization(mass));
        }
        adaptive_trapezoid(f, lo, hi)
    }
}

enum ComponentVar<'a> {
    PerComponent(&'a [f64]),
    Shared(f64),
}

impl ComponentVar<'_> {
    #[inline]
    fn at(&self, j: usize) -> f64 {
        match self {
            ComponentVar::PerComponent(v) => v[j],
            ComponentVar::Shared(t) => *t,
        }
    }
}

/// Trapezoid on `[lo, hi]`, doubling the interval count until successive
/// values differ by less than `1e-8`; one further doubling is returned.
pub fn adaptive_trapezoid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Result<f64, DensityError> {
    let mut n = INITIAL_INTERVALS;
    let mut h = (hi - lo) / n as f64;
    let mut inner = math::compensated_sum((1..n).map(|k| f(lo + k as f64 * h)));
    let ends = 0.5 * (f(lo) + f(hi));
    let mut prev = h * (ends + inner);
    let mut converged = false;
    while n < MAX_INTERVALS {
        let mids = math::compensated_sum((0..n).map(|k| f(lo + (k as f64 + 0.5) * h)));
        inner += mids;
        n *= 2;
        h = (hi - lo) / n as f64;
        let next = h * (ends + inner);
        if !next.is_finite() {
            return Err(DensityError::NotConverged);
        }
        let done = converged;
        converged = (next - prev).abs() < REFINE_TOL;
        prev = next;
        if done {
            return Ok(next);
        }
    }
    Err(DensityError::NotConverged)
}

/// `−∫ f log f`.
pub fn scalar_entropy(d: &ScalarDensity) -> Result<f64, DensityError> {
    d.checked_integral(|y| {
        let lp = d.log_pdf_and_score(y).0;
        -math::exp(lp) * lp
    })
}

/// `∫ (f′)²/f`.
pub fn scalar_fisher(d: &ScalarDensity) -> Result<f64, DensityError> {
    d.checked_integral(|y| {
        let (lp, s) = d.log_pdf_and_score(y);
        math::exp(lp) * s * s
    })
}

/// Law of the unsmoothed input `X`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum SmoothingPrior {
    Mixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    /// Point masses, e.g. a density discretized on quadrature nodes.
    Atoms { points: Vec<f64>, weights: Vec<f64> },
}

impl SmoothingPrior {
    pub fn from_prior_kind(kind: &PriorKind) -> Option<Self> {
        Some(match kind {
            PriorKind::GaussianScalar { mean, variance } => SmoothingPrior::Mixture {
                weights: alloc::vec![1.0],
                means: alloc::vec![*mean],
                variances: alloc::vec![*variance],
            },
            PriorKind::BpskScalar => SmoothingPrior::Atoms {
                points: alloc::vec![-1.0, 1.0],
                weights: alloc::vec![0.5, 0.5],
            },
            PriorKind::GaussianMixtureScalar { weights, means, variances } => SmoothingPrior::Mixture {
                weights: weights.clone(),
                means: means.clone(),
                variances: variances.clone(),
            },
            PriorKind::IidPerStep { .. } => return None,
        })
    }

    /// `E[X²]`.
    pub fn second_moment(&self) -> f64 {
        match self {
            SmoothingPrior::Mixture { weights, means, variances } => math::compensated_sum(
                weights
                    .iter()
                    .zip(means.iter().zip(variances))
                    .map(|(w, (m, v))| w * (v + m * m)),
            ),
            SmoothingPrior::Atoms { points, weights } => {
                math::compensated_sum(weights.iter().zip(points).map(|(w, x)| w * x * x))
            }
        }
    }
}

/// `Y = X + √t·Z` with `Z ~ N(0, 1)` independent of `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeBruijnModel {
    pub prior: SmoothingPrior,
    pub t: f64,
}

impl DeBruijnModel {
    pub fn new(prior: SmoothingPrior, t: f64) -> Result<Self, DensityError> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(DensityError::Invalid(format!("smoothing variance must be positive (got {t})")));
        }
        let model = Self { prior, t };
        model.output_density().validate()?;
        Ok(model)
    }

    pub fn at(&self, t: f64) -> Result<Self, DensityError> {
        Self::new(self.prior.clone(), t)
    }

    pub fn output_density(&self) -> ScalarDensity {
        match &self.prior {
            SmoothingPrior::Mixture { weights, means, variances } => ScalarDensity::GaussianMixture {
                weights: weights.clone(),
                means: means.clone(),
                variances: variances.iter().map(|v| v + self.t).collect(),
            },
            SmoothingPrior::Atoms { points, weights } => ScalarDensity::QuadratureBacked {
                nodes: points.clone(),
                weights: weights.clone(),
                t: self.t,
            },
        }
    }

    pub fn entropy(&self) -> Result<f64, DensityError> {
        scalar_entropy(&self.output_density())
    }

    pub fn fisher(&self) -> Result<f64, DensityError> {
        scalar_fisher(&self.output_density())
    }

    /// `E[X | Y = y]`.
    pub fn posterior_mean(&self, y: f64) -> f64 {
        let t = self.t;
        let (weights, means, vars): (&[f64], &[f64], Option<&[f64]>) = match &self.prior {
            SmoothingPrior::Mixture { weights, means, variances } => (weights, means, Some(variances)),
            SmoothingPrior::Atoms { points, weights } => (weights, points, None),
        };
        let s = |j: usize| vars.map_or(0.0, |v| v[j]);
        let mut max = f64::NEG_INFINITY;
        for j in 0..weights.len() {
            max = max.max(math::ln(weights[j]) + math::normal_log_pdf(y, means[j], s(j) + t));
        }
        let (mut den, mut num) = (0.0, 0.0);
        for j in 0..weights.len() {
            let r = math::exp(math::ln(weights[j]) + math::normal_log_pdf(y, means[j], s(j) + t) - max);
            let gain = s(j) / (s(j) + t);
            den += r;
            num += r * (means[j] + gain * (y - means[j]));
        }
        num / den
    }

    /// `J(Y) = (E[Y²] + E[E[X|Y]²] − 2E[XY]) / t²`, using `E[Y²] = E[X²] + t`
    /// and `E[XY] = E[X²]`.
    pub fn fisher_alternate(&self) -> Result<f64, DensityError> {
        let d = self.output_density();
        let e_hat_sq = d.checked_integral(|y| {
            let m = self.posterior_mean(y);
            d.pdf(y) * m * m
        })?;
        let ex2 = self.prior.second_moment();
        let t = self.t;
        Ok(((ex2 + t) + e_hat_sq - 2.0 * ex2) / (t * t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{E, PI};

    fn mixture() -> SmoothingPrior {
        SmoothingPrior::Mixture {
            weights: alloc::vec![0.5, 0.5],
            means: alloc::vec![-1.5, 1.5],
            variances: alloc::vec![0.25, 0.25],
        }
    }

    #[test]
    fn gaussian_entropy() {
        let h1 = scalar_entropy(&ScalarDensity::gaussian(0.0, 1.0)).unwrap();
        assert!((h1 - 0.5 * math::ln(2.0 * PI * E)).abs() < 1e-12);
        let h2 = scalar_entropy(&ScalarDensity::gaussian(0.0, 2.0)).unwrap();
        assert!((h2 - 0.5 * math::ln(4.0 * PI * E)).abs() < 1e-12);
        let h9 = scalar_entropy(&ScalarDensity::gaussian(3.0, 9.0)).unwrap();
        assert!((h9 - h1 - math::ln(3.0)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_fisher() {
        assert!((scalar_fisher(&ScalarDensity::gaussian(0.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((scalar_fisher(&ScalarDensity::gaussian(0.0, 2.0)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let d = DeBruijnModel::new(mixture(), 0.7).unwrap().output_density();
        for &y in &[-3.0, -0.4, 0.0, 1.1, 2.5] {
            let h = 1e-5;
            let fd = (d.pdf(y + h) - d.pdf(y - h)) / (2.0 * h);
            assert!((fd - d.derivative(y)).abs() < 1e-9);
        }
    }

    #[test]
    fn mixture_fisher_forms_agree() {
        for t in [0.25, 1.0, 4.0] {
            let m = DeBruijnModel::new(mixture(), t).unwrap();
            let a = m.fisher().unwrap();
            let b = m.fisher_alternate().unwrap();
            assert!((a - b).abs() < 1e-9, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn atoms_fisher_forms_agree() {
        let prior = SmoothingPrior::Atoms {
            points: alloc::vec![-1.0, 1.0],
            weights: alloc::vec![0.5, 0.5],
        };
        let m = DeBruijnModel::new(prior, 1.0).unwrap();
        let a = m.fisher().unwrap();
        let b = m.fisher_alternate().unwrap();
        assert!((a - b).abs() < 1e-9);
        // J = (t − mmse)/t² with the BPSK mmse at snr = 1.
        assert!((a - (1.0 - 0.449_599_5)).abs() < 1e-6, "{a}");
    }

    #[test]
    fn bad_densities_are_rejected() {
        let bad = ScalarDensity::GaussianMixture {
            weights: alloc::vec![0.7],
            means: alloc::vec![0.0],
            variances: alloc::vec![1.0],
        };
        assert!(scalar_entropy(&bad).is_err());
        assert!(DeBruijnModel::new(mixture(), 0.0).is_err());
    }
}
