//! Discrete and continuous-time system specifications.
//!
//! A discrete system is `Y_i = ρ·g_i(W_i, Y_1..Y_{i-1}) + Z_i` for
//! `i = 1..n` with i.i.d. standard normal `Z_i` independent of the `W_i`.
//! With a shared prior every `W_i` is the same message `M` (feedback
//! reading); otherwise each step draws its own `W_i` (output-memory reading).
//!
//! A continuous system `dY = ρ·g(t, W, Y(t−)) dt + dB` is reduced to a
//! discrete one by Euler–Maruyama on scaled increments, see
//! [`ContinuousSystemSpec::discretize`].

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::expr::{ChannelExpr, Var};
use crate::math;

/// Distribution of a single scalar draw, or the per-step wrapper.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum PriorKind {
    GaussianScalar { mean: f64, variance: f64 },
    /// ±1 with equal probability.
    BpskScalar,
    GaussianMixtureScalar {
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    /// `n` independent copies of `component`, one per step.
    IidPerStep { component: Box<PriorKind>, n: usize },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MessagePrior {
    pub kind: PriorKind,
    /// One draw shared by every step (`W_i = M`) when true.
    pub shared: bool,
}

impl MessagePrior {
    pub fn shared(kind: PriorKind) -> Self {
        Self { kind, shared: true }
    }

    pub fn per_step(kind: PriorKind) -> Self {
        Self { kind, shared: false }
    }

    pub fn gaussian(mean: f64, variance: f64) -> Self {
        Self::shared(PriorKind::GaussianScalar { mean, variance })
    }

    pub fn bpsk() -> Self {
        Self::shared(PriorKind::BpskScalar)
    }

    /// The scalar law of each individual draw.
    pub fn component(&self) -> &PriorKind {
        match &self.kind {
            PriorKind::IidPerStep { component, .. } => component,
            other => other,
        }
    }

    /// Number of scalar draws making up one `W` realization for horizon `n`.
    pub fn dimension(&self, n: usize) -> usize {
        if self.shared {
            1
        } else {
            n
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if let PriorKind::IidPerStep { component, .. } = &self.kind {
            if self.shared {
                return Err(SpecError::InvalidPrior("IidPerStep prior cannot be shared".into()));
            }
            if matches!(**component, PriorKind::IidPerStep { .. }) {
                return Err(SpecError::InvalidPrior("nested IidPerStep prior".into()));
            }
        }
        self.component().validate_scalar()
    }
}

impl PriorKind {
    fn validate_scalar(&self) -> Result<(), SpecError> {
        match self {
            PriorKind::GaussianScalar { mean, variance } => {
                if !mean.is_finite() || !(*variance > 0.0) || !variance.is_finite() {
                    return Err(SpecError::InvalidPrior(format!(
                        "gaussian prior needs finite mean and variance > 0 (got {mean}, {variance})"
                    )));
                }
            }
            PriorKind::BpskScalar => {}
            PriorKind::GaussianMixtureScalar { weights, means, variances } => {
                if weights.is_empty()
                    || weights.len() != means.len()
                    || weights.len() != variances.len()
                {
                    return Err(SpecError::InvalidPrior(
                        "mixture weights, means and variances must have equal nonzero length".into(),
                    ));
                }
                if weights.iter().any(|w| !(*w > 0.0)) {
                    return Err(SpecError::InvalidPrior("mixture weights must be positive".into()));
                }
                if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(SpecError::InvalidPrior("mixture variances must be > 0".into()));
                }
                let total = math::compensated_sum(weights.iter().copied());
                if (total - 1.0).abs() > 1e-12 {
                    return Err(SpecError::InvalidPrior(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
            }
            PriorKind::IidPerStep { component, .. } => component.validate_scalar()?,
        }
        Ok(())
    }

    /// Draws one scalar from the component law.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PriorKind::GaussianScalar { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + math::sqrt(*variance) * z
            }
            PriorKind::BpskScalar => {
                if rng.next_u32() & 1 == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            PriorKind::GaussianMixtureScalar { weights, means, variances } => {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                let mut acc = 0.0;
                let mut idx = weights.len() - 1;
                for (j, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        idx = j;
                        break;
                    }
                }
                let z: f64 = StandardNormal.sample(rng);
                means[idx] + math::sqrt(variances[idx]) * z
            }
            PriorKind::IidPerStep { component, .. } => component.sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            PriorKind::GaussianScalar { mean, .. } => *mean,
            PriorKind::BpskScalar => 0.0,
            PriorKind::GaussianMixtureScalar { weights, means, .. } => {
                math::compensated_sum(weights.iter().zip(means).map(|(w, m)| w * m))
            }
            PriorKind::IidPerStep { component, .. } => component.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            PriorKind::GaussianScalar { variance, .. } => *variance,
            PriorKind::BpskScalar => 1.0,
            PriorKind::GaussianMixtureScalar { weights, means, variances } => {
                let m = self.mean();
                math::compensated_sum(
                    weights
                        .iter()
                        .zip(means.iter().zip(variances))
                        .map(|(w, (mu, v))| w * (v + (mu - m) * (mu - m))),
                )
            }
            PriorKind::IidPerStep { component, .. } => component.variance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("horizon n must be at least 1")]
    EmptyHorizon,
    #[error("expected {expected} channel expressions, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("causality violation: g_{step} references y[{index}] but only y[1..{step}) exist")]
    Causality { step: usize, index: usize },
    #[error("g_{step} references t, which is only available in continuous-time systems")]
    TimeInDiscrete { step: usize },
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("continuous-time systems need a shared scalar message prior")]
    ContinuousPrior,
    #[error("continuous-time channel may only reference y[1] (the current output), found y[{0}]")]
    ContinuousIndex(usize),
    #[error("continuous-time horizon must be positive and finite (got {0})")]
    NonPositiveHorizon(f64),
    #[error("discretization needs at least one step")]
    ZeroSteps,
    #[error("feedback matrix must be strictly lower triangular ({0})")]
    NotStrictlyLower(String),
}

/// Euler–Maruyama grid attached to a discretized continuous system.
///
/// Step `i` stores the scaled increment `y_i = (Y(t_i) − Y(t_{i−1}))/√Δ`, so
/// the output path is `Y(t_k) = √Δ·Σ_{j≤k} y_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn path_from_increments(&self, increments: &[f64]) -> Vec<f64> {
        let scale = math::sqrt(self.dt);
        let mut acc = 0.0;
        increments
            .iter()
            .map(|y| {
                acc += y;
                scale * acc
            })
            .collect()
    }

    pub fn increments_from_path(&self, path: &[f64]) -> Vec<f64> {
        let scale = math::sqrt(self.dt);
        let mut prev = 0.0;
        path.iter()
            .map(|y| {
                let inc = (y - prev) / scale;
                prev = *y;
                inc
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSystemSpec {
    pub n: usize,
    pub prior: MessagePrior,
    pub g: Vec<ChannelExpr>,
    pub label: String,
    /// Present when the system came from [`ContinuousSystemSpec::discretize`].
    pub grid: Option<TimeGrid>,
}

impl DiscreteSystemSpec {
    pub fn new(label: impl Into<String>, prior: MessagePrior, g: Vec<ChannelExpr>) -> Self {
        Self {
            n: g.len(),
            prior,
            g,
            label: label.into(),
            grid: None,
        }
    }

    /// Parses each expression; the horizon is the number of expressions.
    pub fn parse(
        label: impl Into<String>,
        prior: MessagePrior,
        exprs: &[&str],
    ) -> Result<Self, crate::expr::ParseError> {
        let g = exprs
            .iter()
            .map(|s| ChannelExpr::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(label, prior, g))
    }

    /// The linear subfamily `g_i = a_i·w + Σ_j B_ij·y[j]`.
    pub fn from_linear(
        label: impl Into<String>,
        prior: MessagePrior,
        coefficients: &LinearCoefficients,
    ) -> Self {
        let n = coefficients.a.len();
        let g = (0..n)
            .map(|i| {
                let mut e = ChannelExpr::Mul(
                    Box::new(ChannelExpr::Const(coefficients.a[i])),
                    Box::new(ChannelExpr::Var(Var::W)),
                );
                for j in 0..i {
                    let b = coefficients.b[(i, j)];
                    if b != 0.0 {
                        let term = ChannelExpr::Mul(
                            Box::new(ChannelExpr::Const(b)),
                            Box::new(ChannelExpr::Var(Var::Y(j + 1))),
                        );
                        e = ChannelExpr::Add(Box::new(e), Box::new(term));
                    }
                }
                e
            })
            .collect();
        Self::new(label, prior, g)
    }

    /// Checks every invariant and precomputes the symbolic partials
    /// `∂g_i/∂y_j`. All violations are reported, not just the first.
    pub fn validate(self) -> Result<ValidatedSystem, Vec<SpecError>> {
        let mut errors = Vec::new();
        if self.n == 0 {
            errors.push(SpecError::EmptyHorizon);
        }
        if self.g.len() != self.n {
            errors.push(SpecError::ArityMismatch {
                expected: self.n,
                found: self.g.len(),
            });
        }
        if let Err(e) = self.prior.validate() {
            errors.push(e);
        }
        if let PriorKind::IidPerStep { n, .. } = &self.prior.kind {
            if *n != self.n {
                errors.push(SpecError::ArityMismatch {
                    expected: self.n,
                    found: *n,
                });
            }
        }
        let mut steps = Vec::with_capacity(self.g.len());
        for (idx, expr) in self.g.iter().enumerate() {
            let step = idx + 1;
            let refs: Vec<usize> = expr.y_indices().into_iter().collect();
            for &j in &refs {
                if j >= step {
                    errors.push(SpecError::Causality { step, index: j });
                }
            }
            if expr.references(Var::T) {
                errors.push(SpecError::TimeInDiscrete { step });
            }
            let partials = refs
                .iter()
                .filter(|&&j| j < step)
                .map(|&j| (j, expr.derivative(Var::Y(j))))
                .filter(|(_, d)| !d.is_zero())
                .collect();
            steps.push(StepInfo {
                y_refs: refs,
                partials,
            });
        }
        if errors.is_empty() {
            Ok(ValidatedSystem { spec: self, steps })
        } else {
            Err(errors)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub y_refs: Vec<usize>,
    /// Nonzero symbolic partials `(j, ∂g_i/∂y_j)`.
    pub partials: Vec<(usize, ChannelExpr)>,
}

/// A spec whose invariants hold, annotated with per-step partials.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedSystem {
    spec: DiscreteSystemSpec,
    steps: Vec<StepInfo>,
}

impl ValidatedSystem {
    pub fn spec(&self) -> &DiscreteSystemSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn prior(&self) -> &MessagePrior {
        &self.spec.prior
    }

    pub fn label(&self) -> &str {
        &self.spec.label
    }

    pub fn expr(&self, i: usize) -> &ChannelExpr {
        &self.spec.g[i]
    }

    pub fn step(&self, i: usize) -> &StepInfo {
        &self.steps[i]
    }

    pub fn steps(&self) -> &[StepInfo] {
        &self.steps
    }

    /// Dimension of one `W` realization.
    pub fn w_dimension(&self) -> usize {
        self.spec.prior.dimension(self.spec.n)
    }

    /// Whether any `g_i` depends on past outputs.
    pub fn has_feedback(&self) -> bool {
        self.steps.iter().any(|s| !s.y_refs.is_empty())
    }

    /// Extracts `(a, B)` when every `g_i` is exactly linear in `(w, y)` with
    /// zero intercept. Detection is symbolic: all first partials must fold
    /// to constants.
    pub fn linear_coefficients(&self) -> Option<LinearCoefficients> {
        let n = self.n();
        let mut a = Vec::with_capacity(n);
        let mut b = DMatrix::zeros(n, n);
        let zeros = alloc::vec![0.0; n];
        for i in 0..n {
            let e = self.expr(i);
            if e.value_at(0.0, &zeros[..i], 0.0) != 0.0 {
                return None;
            }
            a.push(e.derivative(Var::W).as_const()?);
            for &j in &self.steps[i].y_refs {
                b[(i, j - 1)] = e.derivative(Var::Y(j)).as_const()?;
            }
        }
        Some(LinearCoefficients { a, b })
    }
}

/// Coefficients of the linear subfamily: `a` weights the shared message and
/// the strictly lower-triangular `b` weights past outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCoefficients {
    pub a: Vec<f64>,
    pub b: DMatrix<f64>,
}

impl LinearCoefficients {
    pub fn new(a: Vec<f64>, b: DMatrix<f64>) -> Result<Self, SpecError> {
        let n = a.len();
        if n == 0 {
            return Err(SpecError::EmptyHorizon);
        }
        if b.nrows() != n || b.ncols() != n {
            return Err(SpecError::NotStrictlyLower(format!(
                "expected {n}x{n}, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        for i in 0..n {
            for j in i..n {
                if b[(i, j)] != 0.0 {
                    return Err(SpecError::NotStrictlyLower(format!("entry ({i},{j}) is nonzero")));
                }
            }
        }
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSystemSpec {
    pub horizon: f64,
    pub prior: MessagePrior,
    /// `g(t, w, y[1])` where `y[1]` is the current output `Y(t−)`.
    pub g_ct: ChannelExpr,
    pub label: String,
}

impl ContinuousSystemSpec {
    pub fn new(label: impl Into<String>, horizon: f64, prior: MessagePrior, g_ct: ChannelExpr) -> Self {
        Self {
            horizon,
            prior,
            g_ct,
            label: label.into(),
        }
    }

    pub fn validate(&self) -> Result<(), Vec<SpecError>> {
        let mut errors = Vec::new();
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            errors.push(SpecError::NonPositiveHorizon(self.horizon));
        }
        if !self.prior.shared || matches!(self.prior.kind, PriorKind::IidPerStep { .. }) {
            errors.push(SpecError::ContinuousPrior);
        }
        if let Err(e) = self.prior.validate() {
            errors.push(e);
        }
        for j in self.g_ct.y_indices() {
            if j != 1 {
                errors.push(SpecError::ContinuousIndex(j));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Euler–Maruyama reduction on `m` steps of size `Δ = T/m`.
    ///
    /// Step `i` becomes `y_i = ρ·√Δ·g(t_{i−1}, w, Y(t_{i−1})) + Z_i` where the
    /// drift is evaluated at the left endpoint and
    /// `Y(t_{i−1}) = √Δ·Σ_{j<i} y_j`.
    pub fn discretize(&self, m: usize) -> Result<DiscreteSystemSpec, SpecError> {
        if m == 0 {
            return Err(SpecError::ZeroSteps);
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(SpecError::NonPositiveHorizon(self.horizon));
        }
        let dt = self.horizon / m as f64;
        let scale = math::sqrt(dt);
        let g = (1..=m)
            .map(|i| {
                let t_left = (i - 1) as f64 * dt;
                let path_value = if i == 1 {
                    ChannelExpr::Const(0.0)
                } else {
                    let mut sum = ChannelExpr::Var(Var::Y(1));
                    for j in 2..i {
                        sum = ChannelExpr::Add(Box::new(sum), Box::new(ChannelExpr::Var(Var::Y(j))));
                    }
                    ChannelExpr::Mul(Box::new(ChannelExpr::Const(scale)), Box::new(sum))
                };
                let drift = self.g_ct.substitute(&|v| match v {
                    Var::T => Some(ChannelExpr::Const(t_left)),
                    Var::Y(_) => Some(path_value.clone()),
                    Var::W => None,
                });
                ChannelExpr::Mul(Box::new(ChannelExpr::Const(scale)), Box::new(drift))
            })
            .collect();
        let mut spec = DiscreteSystemSpec::new(self.label.clone(), self.prior.clone(), g);
        spec.grid = Some(TimeGrid {
            horizon: self.horizon,
            steps: m,
            dt,
        });
        Ok(spec)
    }
}
