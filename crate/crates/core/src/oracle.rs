//! Exact moments for the linear-Gaussian subfamily
//! `g_i = a_i·M + Σ_{j<i} B_ij·Y_j` with `M ~ N(0, σ²)`.
//!
//! Everything is a linear image of the basis `(M, Z_1..Z_n)`:
//!
//! ```text
//! Y = L(ρ a M + Z),   L = (I − ρB)⁻¹
//! g = a M + B Y
//! S = L g             (from S = g + ρ B S)
//! D = B S
//! ```

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::system::{LinearCoefficients, PriorKind, ValidatedSystem};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianModel {
    pub coefficients: LinearCoefficients,
    pub message_variance: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("message variance must be positive")]
    NonPositiveVariance,
    #[error("covariance block {0} is not positive definite")]
    NotPositiveDefinite(&'static str),
}

/// Joint law of the stacked vector `(M, Y_1..Y_n, g_1..g_n, S_1..S_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointGaussian {
    pub n: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Exact right-hand-side ingredients.
#[derive(Clone, Debug, PartialEq)]
pub struct RhsExact {
    /// `E[(g_i − E[g_i|Y])²]`.
    pub mmse: Vec<f64>,
    /// `E[(g_i − E[g_i|Y])·D_i]`.
    pub correction: Vec<f64>,
    pub mmse_sum: f64,
    pub correction_sum: f64,
}

impl LinearGaussianModel {
    pub fn new(coefficients: LinearCoefficients, message_variance: f64, rho: f64) -> Result<Self, OracleError> {
        if !(message_variance > 0.0) || !message_variance.is_finite() {
            return Err(OracleError::NonPositiveVariance);
        }
        Ok(Self {
            coefficients,
            message_variance,
            rho,
        })
    }

    /// The oracle view of a validated system: requires a shared Gaussian
    /// message and linear channel functions. A nonzero prior mean shifts
    /// every variable deterministically and changes none of the computed
    /// quantities, so it is dropped.
    pub fn from_system(system: &ValidatedSystem, rho: f64) -> Option<Self> {
        if !system.prior().shared {
            return None;
        }
        let PriorKind::GaussianScalar { variance, .. } = system.prior().kind else {
            return None;
        };
        let coefficients = system.linear_coefficients()?;
        Self::new(coefficients, variance, rho).ok()
    }

    pub fn n(&self) -> usize {
        self.coefficients.n()
    }

    pub fn at_rho(&self, rho: f64) -> Self {
        Self { rho, ..self.clone() }
    }

    /// Rows map the basis `(M, Z)` to `(M, Y, g, S)`.
    fn loading(&self) -> DMatrix<f64> {
        let n = self.n();
        let rho = self.rho;
        let b = &self.coefficients.b;
        let a = DVector::from_column_slice(&self.coefficients.a);
        let lower = DMatrix::identity(n, n) - b * rho;
        let l = lower
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("unit lower triangular");

        let mut y = DMatrix::zeros(n, n + 1);
        y.column_mut(0).copy_from(&(&l * &a * rho));
        y.view_mut((0, 1), (n, n)).copy_from(&l);

        let mut g = b * &y;
        let mut col0 = g.column(0).clone_owned();
        col0 += &a;
        g.column_mut(0).copy_from(&col0);

        let s = &l * &g;

        let mut out = DMatrix::zeros(3 * n + 1, n + 1);
        out[(0, 0)] = 1.0;
        out.view_mut((1, 0), (n, n + 1)).copy_from(&y);
        out.view_mut((1 + n, 0), (n, n + 1)).copy_from(&g);
        out.view_mut((1 + 2 * n, 0), (n, n + 1)).copy_from(&s);
        out
    }
}

/// Joint covariance of `(M, Y, g, S)`; zero mean.
pub fn lg_propagate(model: &LinearGaussianModel) -> JointGaussian {
    let n = model.n();
    let a = model.loading();
    let mut basis = DVector::from_element(n + 1, 1.0);
    basis[0] = model.message_variance;
    let scaled = &a * DMatrix::from_diagonal(&basis);
    let mut cov = scaled * a.transpose();
    cov = (&cov + cov.transpose()) * 0.5;
    JointGaussian {
        n,
        mean: DVector::zeros(3 * n + 1),
        cov,
    }
}

impl JointGaussian {
    pub fn dimension(&self) -> usize {
        3 * self.n + 1
    }

    fn block(&self, r: usize, c: usize) -> DMatrix<f64> {
        let n = self.n;
        self.cov.view((r, c), (n, n)).clone_owned()
    }

    pub fn yy(&self) -> DMatrix<f64> {
        self.block(1, 1)
    }

    pub fn gy(&self) -> DMatrix<f64> {
        self.block(1 + self.n, 1)
    }

    pub fn gg(&self) -> DMatrix<f64> {
        self.block(1 + self.n, 1 + self.n)
    }

    pub fn gs(&self) -> DMatrix<f64> {
        self.block(1 + self.n, 1 + 2 * self.n)
    }

    pub fn ys(&self) -> DMatrix<f64> {
        self.block(1, 1 + 2 * self.n)
    }

    pub fn my(&self) -> DVector<f64> {
        self.cov.view((1, 0), (self.n, 1)).column(0).clone_owned()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (&self.cov - self.cov.transpose()).amax() <= tol
    }

    /// Smallest eigenvalue at least `−1e−10·trace`.
    pub fn is_psd(&self) -> bool {
        let eig = self.cov.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        min >= -1e-10 * self.cov.trace()
    }
}

fn log_det_pd(m: DMatrix<f64>, what: &'static str) -> Result<f64, OracleError> {
    let chol = m.cholesky().ok_or(OracleError::NotPositiveDefinite(what))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| crate::math::ln(*d)).sum::<f64>())
}

/// `I(M; Y) = ½ ln(det Σ_YY / det Σ_YY|M)`.
pub fn lg_mutual_information(model: &LinearGaussianModel) -> Result<f64, OracleError> {
    let j = lg_propagate(model);
    let yy = j.yy();
    let my = j.my();
    let conditional = &yy - &my * my.transpose() / model.message_variance;
    Ok(0.5 * (log_det_pd(yy, "Y")? - log_det_pd(conditional, "Y|M")?))
}

/// Gaussian conditioning: `E[g|Y] = K Y` with `K = Σ_gY Σ_YY⁻¹`.
fn gain(j: &JointGaussian) -> Result<DMatrix<f64>, OracleError> {
    let chol = j.yy().cholesky().ok_or(OracleError::NotPositiveDefinite("Y"))?;
    // K = Σ_gY Σ_YY⁻¹  ⇔  Σ_YY Kᵀ = Σ_Yg
    Ok(chol.solve(&j.gy().transpose()).transpose())
}

pub fn lg_rhs_terms(model: &LinearGaussianModel) -> Result<RhsExact, OracleError> {
    let j = lg_propagate(model);
    let k = gain(&j)?;
    let b_t = model.coefficients.b.transpose();
    let resid_cov = j.gg() - &k * j.gy().transpose();
    // Cov(g − KY, D) with D = B S.
    let resid_d = (j.gs() - &k * j.ys()) * &b_t;
    let mmse: Vec<f64> = resid_cov.diagonal().iter().copied().collect();
    let correction: Vec<f64> = resid_d.diagonal().iter().copied().collect();
    Ok(RhsExact {
        mmse_sum: crate::math::compensated_sum(mmse.iter().copied()),
        correction_sum: crate::math::compensated_sum(correction.iter().copied()),
        mmse,
        correction,
    })
}

/// `E[g_i·E[g_i|Y]] − E[E[g_i|Y]²]` per index; zero by projection.
pub fn lg_tower_residual(model: &LinearGaussianModel) -> Result<Vec<f64>, OracleError> {
    let j = lg_propagate(model);
    let k = gain(&j)?;
    let cross = j.gy() * k.transpose();
    let proj = &k * j.yy() * k.transpose();
    Ok((0..j.n).map(|i| cross[(i, i)] - proj[(i, i)]).collect())
}
