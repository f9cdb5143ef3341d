//! Finite-difference derivatives and the identity verifiers.
//!
//! Each verifier estimates a left-hand side (the derivative of an
//! information functional) and a right-hand side (estimation-error terms)
//! and compares them. Monte Carlo sides share one seed by default, so the
//! per-path gap has a smaller standard error than either side alone.
//!
//! Numbers are computed in the `ρ`-form `dI/dρ = ρ·Σ mmse_i + ρ²·Σ corr_i`
//! and converted to the `snr`-form by `d/d snr = (1/(2ρ))·d/dρ`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::estimate::density::{DeBruijnModel, DensityError, SmoothingPrior};
use crate::estimate::{self, Estimate, EstimateError, InnerDraws, MmseForm};
use crate::math;
use crate::oracle::{self, LinearGaussianModel, OracleError};
use crate::simulate::{self, NoiseDraw};
use crate::system::{ContinuousSystemSpec, DiscreteSystemSpec, SpecError, ValidatedSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum IdentityKind {
    ImmseMemoryless,
    FeedbackExt,
    MemoryExt,
    DeBruijn,
    CtFeedback,
    CtMemory,
}

impl IdentityKind {
    pub const ALL: [IdentityKind; 6] = [
        IdentityKind::ImmseMemoryless,
        IdentityKind::FeedbackExt,
        IdentityKind::MemoryExt,
        IdentityKind::DeBruijn,
        IdentityKind::CtFeedback,
        IdentityKind::CtMemory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentityKind::ImmseMemoryless => "immse-memoryless",
            IdentityKind::FeedbackExt => "feedback-ext",
            IdentityKind::MemoryExt => "memory-ext",
            IdentityKind::DeBruijn => "debruijn",
            IdentityKind::CtFeedback => "ct-feedback",
            IdentityKind::CtMemory => "ct-memory",
        }
    }

    /// Name of the estimated quantity in the right-hand-side terms.
    pub fn term_symbol(self) -> &'static str {
        match self {
            IdentityKind::ImmseMemoryless => "X",
            IdentityKind::FeedbackExt => "X_i",
            IdentityKind::MemoryExt | IdentityKind::CtMemory => "g_i",
            IdentityKind::DeBruijn => "J(Y)",
            IdentityKind::CtFeedback => "X_t",
        }
    }

    pub fn is_continuous(self) -> bool {
        matches!(self, IdentityKind::CtFeedback | IdentityKind::CtMemory)
    }
}

impl core::fmt::Display for IdentityKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for IdentityKind {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        IdentityKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| IdentityError::UnknownKind(s.to_string()))
    }
}

/// The differentiation variable and its value.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Parameter {
    Rho(f64),
    Snr(f64),
    /// Smoothing variance for de Bruijn scenarios.
    T(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemRef {
    Discrete(DiscreteSystemSpec),
    Continuous(ContinuousSystemSpec),
    Smoothing(SmoothingPrior),
}

impl SystemRef {
    fn name(&self) -> &'static str {
        match self {
            SystemRef::Discrete(_) => "discrete",
            SystemRef::Continuous(_) => "continuous",
            SystemRef::Smoothing(_) => "smoothing",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum FdOrder {
    Second,
    Fourth,
}

impl FdOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            FdOrder::Second => 2,
            FdOrder::Fourth => 4,
        }
    }

    /// `(offset in units of h, weight)`; the derivative is `Σ w·f(x + o·h)/h`.
    pub fn stencil(self) -> &'static [(f64, f64)] {
        match self {
            FdOrder::Second => &[(-1.0, -0.5), (1.0, 0.5)],
            FdOrder::Fourth => &[
                (-2.0, 1.0 / 12.0),
                (-1.0, -8.0 / 12.0),
                (1.0, 8.0 / 12.0),
                (2.0, -1.0 / 12.0),
            ],
        }
    }

    fn reach(self) -> f64 {
        match self {
            FdOrder::Second => 1.0,
            FdOrder::Fourth => 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DerivativeEstimate {
    pub value: f64,
    pub h: f64,
    pub order: u8,
    pub richardson: Option<f64>,
    pub std_error: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum FdError {
    #[error("finite-difference step must be positive and finite (got {0})")]
    BadStep(f64),
    #[error("stencil reaches {0} < 0 on a nonnegative domain")]
    NegativeStencil(f64),
    #[error("stencil points returned different sample counts")]
    RaggedSamples,
}

/// Combines per-sample values at the stencil points. With more than one
/// sample per point the derivative is formed per sample first, so common
/// random numbers cancel before the standard error is taken.
pub fn fd_combine(values: &[Vec<f64>], h: f64, order: FdOrder) -> Result<DerivativeEstimate, FdError> {
    let stencil = order.stencil();
    let len = values[0].len();
    if values.len() != stencil.len() || values.iter().any(|v| v.len() != len) || len == 0 {
        return Err(FdError::RaggedSamples);
    }
    let per_sample: Vec<f64> = (0..len)
        .map(|k| stencil.iter().zip(values).map(|((_, w), v)| w * v[k]).sum::<f64>() / h)
        .collect();
    let est = Estimate::from_samples(&per_sample);
    Ok(DerivativeEstimate {
        value: est.value,
        h,
        order: order.as_u8(),
        richardson: None,
        std_error: (len > 1).then_some(est.std_error),
    })
}

fn check_stencil(x: f64, h: f64, order: FdOrder, nonnegative: bool) -> Result<(), FdError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(FdError::BadStep(h));
    }
    let low = x - order.reach() * h;
    if nonnegative && low < 0.0 {
        return Err(FdError::NegativeStencil(low));
    }
    Ok(())
}

/// Derivative of `f` at `x`; `f` returns per-sample values (one value for
/// deterministic functions). `nonnegative` rejects stencils leaving `[0, ∞)`.
pub fn fd_derivative<F>(mut f: F, x: f64, h: f64, order: FdOrder, nonnegative: bool) -> Result<DerivativeEstimate, FdError>
where
    F: FnMut(f64) -> Vec<f64>,
{
    check_stencil(x, h, order, nonnegative)?;
    let values: Vec<Vec<f64>> = order.stencil().iter().map(|(o, _)| f(x + o * h)).collect();
    fd_combine(&values, h, order)
}

/// As [`fd_derivative`], adding the Richardson extrapolation from steps
/// `h` and `h/2`.
pub fn fd_derivative_richardson<F>(
    mut f: F,
    x: f64,
    h: f64,
    order: FdOrder,
    nonnegative: bool,
) -> Result<DerivativeEstimate, FdError>
where
    F: FnMut(f64) -> Vec<f64>,
{
    let coarse = fd_derivative(&mut f, x, h, order, nonnegative)?;
    let fine = fd_derivative(&mut f, x, 0.5 * h, order, nonnegative)?;
    let p = libm::pow(2.0, order.as_u8() as f64);
    Ok(DerivativeEstimate {
        richardson: Some((p * fine.value - coarse.value) / (p - 1.0)),
        ..coarse
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Backend {
    /// Oracle when the system is linear-Gaussian, Monte Carlo otherwise.
    #[default]
    Auto,
    MonteCarlo,
    Oracle,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SeedPolicy {
    /// Both sides on the same paths; SE from per-path gaps.
    #[default]
    Shared,
    /// Right-hand side on an independent ensemble; SEs add in quadrature.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Budgets {
    pub n_outer: usize,
    pub k_inner: usize,
    /// Euler steps for continuous-time kinds.
    pub m_steps: usize,
    /// FD step in `ρ`; relative to `t` for de Bruijn. Default depends on the
    /// backend.
    pub h: Option<f64>,
    pub fd_order: Option<FdOrder>,
    /// Run nested MI at K, 2K, 4K and report whether it shrinks.
    pub k_doubling: bool,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            n_outer: 20_000,
            k_inner: 1_000,
            m_steps: 64,
            h: None,
            fd_order: None,
            k_doubling: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Tolerance {
    /// Default 1e-6 for deterministic backends, 0 for Monte Carlo.
    pub abs_tol: Option<f64>,
    pub z: f64,
    /// Largest acceptable combined standard error (primary form).
    pub max_se: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: None,
            z: 4.0,
            max_se: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub label: String,
    pub system: SystemRef,
    pub parameter: Parameter,
    pub budgets: Budgets,
    pub tolerance: Tolerance,
    pub seed: u64,
    pub backend: Backend,
    pub seed_policy: SeedPolicy,
    pub mmse_form: MmseForm,
}

impl ScenarioConfig {
    pub fn new(label: impl Into<String>, system: SystemRef, parameter: Parameter) -> Self {
        Self {
            label: label.into(),
            system,
            parameter,
            budgets: Budgets::default(),
            tolerance: Tolerance::default(),
            seed: 0,
            backend: Backend::Auto,
            seed_policy: SeedPolicy::Shared,
            mmse_form: MmseForm::default(),
        }
    }

    pub fn validate(&self) -> Result<(), IdentityError> {
        let b = &self.budgets;
        if b.n_outer == 0 || b.k_inner == 0 || b.m_steps == 0 {
            return Err(IdentityError::InvalidScenario("budgets N, K, m must be positive".into()));
        }
        if let Some(h) = b.h {
            if !(h > 0.0) || !h.is_finite() {
                return Err(IdentityError::InvalidScenario(format!("h must be positive (got {h})")));
            }
        }
        if !(self.tolerance.z > 0.0) || !(self.tolerance.max_se > 0.0) {
            return Err(IdentityError::InvalidScenario("tolerance z and max_se must be positive".into()));
        }
        match self.parameter {
            Parameter::Rho(r) if !(r >= 0.0) || !r.is_finite() => {
                Err(IdentityError::InvalidScenario(format!("rho must be finite and >= 0 (got {r})")))
            }
            Parameter::Snr(s) if !(s > 0.0) || !s.is_finite() => {
                Err(IdentityError::InvalidScenario(format!("snr must be finite and > 0 (got {s})")))
            }
            Parameter::T(t) if !(t > 0.0) || !t.is_finite() => {
                Err(IdentityError::InvalidScenario(format!("t must be finite and > 0 (got {t})")))
            }
            Parameter::Rho(r) => match b.h {
                Some(h) if r > 0.0 && h >= r => Err(IdentityError::InvalidScenario(format!(
                    "h must lie in (0, rho) (h = {h}, rho = {r})"
                ))),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum IdentityError {
    #[error("unknown identity kind '{0}'")]
    UnknownKind(String),
    #[error("identity {kind} cannot run on a {system} system: {detail}")]
    KindMismatch {
        kind: IdentityKind,
        system: &'static str,
        detail: String,
    },
    #[error("invalid system: {}", join_spec_errors(.0))]
    Spec(Vec<SpecError>),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Fd(#[from] FdError),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("sweep grid must be strictly {0}")]
    GridOrder(&'static str),
    #[error("axis {axis} does not apply to {kind}")]
    AxisMismatch { axis: &'static str, kind: IdentityKind },
}

fn join_spec_errors(errors: &[SpecError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

impl From<Vec<SpecError>> for IdentityError {
    fn from(e: Vec<SpecError>) -> Self {
        IdentityError::Spec(e)
    }
}

impl From<SpecError> for IdentityError {
    fn from(e: SpecError) -> Self {
        IdentityError::Spec(vec![e])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Parameterization {
    RhoForm,
    SnrForm,
    TForm,
}

/// One parameterization of a report's numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FormValues {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs_mmse: f64,
    pub rhs_mmse_se: f64,
    pub rhs_correction: f64,
    pub rhs_correction_se: f64,
    pub rhs_total: f64,
    pub gap: f64,
    pub gap_se: f64,
}

impl FormValues {
    fn scaled(&self, c: f64) -> Self {
        let a = c.abs();
        Self {
            lhs: c * self.lhs,
            lhs_se: a * self.lhs_se,
            rhs_mmse: c * self.rhs_mmse,
            rhs_mmse_se: a * self.rhs_mmse_se,
            rhs_correction: c * self.rhs_correction,
            rhs_correction_se: a * self.rhs_correction_se,
            rhs_total: c * self.rhs_total,
            gap: c * self.gap,
            gap_se: a * self.gap_se,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ResolvedBudgets {
    pub n_outer: Option<usize>,
    pub k_inner: Option<usize>,
    pub m_steps: Option<usize>,
    pub h: f64,
    pub fd_order: u8,
}

/// Gap at `m` and `2m` Euler steps.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DiscretizationCheck {
    pub m: usize,
    pub gap_m: f64,
    pub gap_2m: f64,
    pub se_2m: f64,
    pub rhs_m: f64,
    pub rhs_2m: f64,
    pub shrinks: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IdentityReport {
    pub kind: IdentityKind,
    pub label: String,
    pub backend: &'static str,
    pub parameterization: Parameterization,
    pub rho: Option<f64>,
    pub snr: Option<f64>,
    pub t: Option<f64>,
    pub term_symbol: &'static str,
    pub lhs: DerivativeEstimate,
    pub rhs_mmse: Estimate,
    pub rhs_correction: Estimate,
    pub rhs_total: f64,
    pub gap: f64,
    pub combined_se: f64,
    pub z: f64,
    pub abs_tol: f64,
    pub max_se: Option<f64>,
    pub threshold: f64,
    pub verdict: Verdict,
    pub diagnosis: Option<String>,
    pub rho_form: Option<FormValues>,
    pub snr_form: Option<FormValues>,
    pub budgets: ResolvedBudgets,
    pub seed: u64,
    pub seed_policy: SeedPolicy,
    pub mmse_form: MmseForm,
    pub discretization: Option<DiscretizationCheck>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Both sides in the form of the differentiation variable (`ρ` or `t`).
struct Sides {
    values: FormValues,
    /// `lhs − ρ·mmse` with its SE: the gap if the correction were dropped.
    no_correction_gap: (f64, f64),
    monte_carlo: bool,
    backend: &'static str,
    budgets: ResolvedBudgets,
    diagnostics: BTreeMap<String, f64>,
}

fn rho_of(parameter: Parameter) -> f64 {
    match parameter {
        Parameter::Rho(r) => r,
        Parameter::Snr(s) => math::sqrt(s),
        Parameter::T(t) => t,
    }
}

fn kind_mismatch(kind: IdentityKind, system: &SystemRef, detail: &str) -> IdentityError {
    IdentityError::KindMismatch {
        kind,
        system: system.name(),
        detail: detail.into(),
    }
}

/// Verifies `kind` on `scenario`. A failing comparison is a `Fail` verdict,
/// not an error; errors are reserved for scenarios that cannot be run.
pub fn verify_identity(kind: IdentityKind, scenario: &ScenarioConfig) -> Result<IdentityReport, IdentityError> {
    scenario.validate()?;
    match (&scenario.system, kind) {
        (SystemRef::Smoothing(prior), IdentityKind::DeBruijn) => {
            let Parameter::T(t) = scenario.parameter else {
                return Err(kind_mismatch(kind, &scenario.system, "de Bruijn scenarios are parameterized by t"));
            };
            let sides = debruijn_sides(prior, t, &scenario.budgets)?;
            Ok(assemble(kind, scenario, sides, None))
        }
        (SystemRef::Discrete(spec), IdentityKind::ImmseMemoryless | IdentityKind::FeedbackExt | IdentityKind::MemoryExt) => {
            if matches!(scenario.parameter, Parameter::T(_)) {
                return Err(kind_mismatch(kind, &scenario.system, "channel scenarios take rho or snr"));
            }
            let system = spec.clone().validate()?;
            if kind == IdentityKind::ImmseMemoryless && system.has_feedback() {
                return Err(kind_mismatch(kind, &scenario.system, "g references past outputs"));
            }
            let sides = discrete_sides(&system, scenario)?;
            Ok(assemble(kind, scenario, sides, None))
        }
        (SystemRef::Continuous(cts), IdentityKind::CtFeedback | IdentityKind::CtMemory) => {
            if matches!(scenario.parameter, Parameter::T(_)) {
                return Err(kind_mismatch(kind, &scenario.system, "channel scenarios take rho or snr"));
            }
            cts.validate()?;
            let m = scenario.budgets.m_steps;
            let coarse = discrete_sides(&cts.discretize(m)?.validate()?, scenario)?;
            let fine = discrete_sides(&cts.discretize(2 * m)?.validate()?, scenario)?;
            let slack = if fine.monte_carlo {
                scenario.tolerance.z * fine.values.gap_se
            } else {
                default_abs_tol(scenario, false)
            };
            let check = DiscretizationCheck {
                m,
                gap_m: coarse.values.gap,
                gap_2m: fine.values.gap,
                se_2m: fine.values.gap_se,
                rhs_m: coarse.values.rhs_total,
                rhs_2m: fine.values.rhs_total,
                shrinks: fine.values.gap.abs() <= coarse.values.gap.abs() + slack,
            };
            let fine_report = assemble(kind, scenario, fine, None);
            let mut report = assemble(kind, scenario, coarse, Some(check));
            if report.passed() && !fine_report.passed() {
                report.verdict = Verdict::Fail;
                report.diagnosis = Some(format!(
                    "gate fails at 2m = {}: {}",
                    2 * m,
                    fine_report.diagnosis.unwrap_or_default()
                ));
            }
            if report.passed() && !check.shrinks {
                report.verdict = Verdict::Fail;
                report.diagnosis = Some(format!(
                    "gap did not shrink from m = {m} ({:.3e}) to 2m ({:.3e})",
                    check.gap_m, check.gap_2m
                ));
            }
            Ok(report)
        }
        (system, _) => Err(kind_mismatch(kind, system, "system kind does not match identity kind")),
    }
}

/// A continuous-time kind verified on a single discretization with `m`
/// Euler steps (no `2m` consistency requirement).
pub fn verify_at_steps(kind: IdentityKind, scenario: &ScenarioConfig, m: usize) -> Result<IdentityReport, IdentityError> {
    scenario.validate()?;
    let SystemRef::Continuous(cts) = &scenario.system else {
        return Err(kind_mismatch(kind, &scenario.system, "fixed-step verification needs a continuous system"));
    };
    if !kind.is_continuous() {
        return Err(kind_mismatch(kind, &scenario.system, "fixed-step verification is for continuous kinds"));
    }
    cts.validate()?;
    let mut s = scenario.clone();
    s.budgets.m_steps = m;
    let sides = discrete_sides(&cts.discretize(m)?.validate()?, &s)?;
    Ok(assemble(kind, &s, sides, None))
}

fn default_abs_tol(scenario: &ScenarioConfig, monte_carlo: bool) -> f64 {
    scenario
        .tolerance
        .abs_tol
        .unwrap_or(if monte_carlo { 0.0 } else { 1e-6 })
}

fn assemble(
    kind: IdentityKind,
    scenario: &ScenarioConfig,
    sides: Sides,
    discretization: Option<DiscretizationCheck>,
) -> IdentityReport {
    let base = sides.values;
    let (parameterization, rho, snr, t, primary, rho_form, snr_form, nc_scale) = match scenario.parameter {
        Parameter::T(t) => (Parameterization::TForm, None, None, Some(t), base, None, None, 1.0),
        Parameter::Rho(r) => {
            let snr_form = (r > 0.0).then(|| base.scaled(1.0 / (2.0 * r)));
            (Parameterization::RhoForm, Some(r), Some(r * r), None, base, Some(base), snr_form, 1.0)
        }
        Parameter::Snr(s) => {
            let r = math::sqrt(s);
            let c = 1.0 / (2.0 * r);
            let snr_form = base.scaled(c);
            (Parameterization::SnrForm, Some(r), Some(s), None, snr_form, Some(base), Some(snr_form), c)
        }
    };
    let abs_tol = default_abs_tol(scenario, sides.monte_carlo);
    let z = scenario.tolerance.z;
    let se = primary.gap_se;
    let threshold = abs_tol.max(z * se);
    let mut diagnosis = None;
    let finite = primary.gap.is_finite() && se.is_finite();
    let mut pass = finite && primary.gap.abs() <= threshold;
    if !finite {
        diagnosis = Some("non-finite estimate".to_string());
    } else if sides.monte_carlo && se > scenario.tolerance.max_se {
        pass = false;
        diagnosis = Some(format!(
            "SE above tolerance: combined SE {se:.3e} exceeds max_se {:.3e}; increase N or K",
            scenario.tolerance.max_se
        ));
    } else if !pass {
        diagnosis = Some(format!("|gap| = {:.3e} exceeds threshold {threshold:.3e}", primary.gap.abs()));
    }
    let mut diagnostics = sides.diagnostics;
    diagnostics.insert("gap_without_correction".into(), nc_scale * sides.no_correction_gap.0);
    if sides.monte_carlo {
        diagnostics.insert("gap_without_correction_se".into(), nc_scale.abs() * sides.no_correction_gap.1);
    }
    let lhs = DerivativeEstimate {
        value: primary.lhs,
        h: sides.budgets.h,
        order: sides.budgets.fd_order,
        richardson: None,
        std_error: sides.monte_carlo.then_some(primary.lhs_se),
    };
    IdentityReport {
        kind,
        label: scenario.label.clone(),
        backend: sides.backend,
        parameterization,
        rho,
        snr,
        t,
        term_symbol: kind.term_symbol(),
        lhs,
        rhs_mmse: Estimate {
            value: primary.rhs_mmse,
            std_error: primary.rhs_mmse_se,
            samples: sides.budgets.n_outer.unwrap_or(0),
        },
        rhs_correction: Estimate {
            value: primary.rhs_correction,
            std_error: primary.rhs_correction_se,
            samples: sides.budgets.n_outer.unwrap_or(0),
        },
        rhs_total: primary.rhs_total,
        gap: primary.gap,
        combined_se: se,
        z,
        abs_tol,
        max_se: sides.monte_carlo.then_some(scenario.tolerance.max_se),
        threshold,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        diagnosis,
        rho_form,
        snr_form,
        budgets: sides.budgets,
        seed: scenario.seed,
        seed_policy: scenario.seed_policy,
        mmse_form: scenario.mmse_form,
        discretization,
        diagnostics,
    }
}

fn discrete_sides(system: &ValidatedSystem, scenario: &ScenarioConfig) -> Result<Sides, IdentityError> {
    let rho = rho_of(scenario.parameter);
    let oracle_model = LinearGaussianModel::from_system(system, rho);
    match (scenario.backend, oracle_model) {
        (Backend::Oracle, None) => Err(IdentityError::BackendUnavailable(
            "oracle needs a shared Gaussian message and linear channel functions".into(),
        )),
        (Backend::Oracle | Backend::Auto, Some(model)) => oracle_sides(system, &model, scenario),
        _ => monte_carlo_sides(system, scenario),
    }
}

fn oracle_sides(system: &ValidatedSystem, model: &LinearGaussianModel, scenario: &ScenarioConfig) -> Result<Sides, IdentityError> {
    let rho = model.rho;
    let h = scenario.budgets.h.unwrap_or(1e-4);
    let order = scenario.budgets.fd_order.unwrap_or(FdOrder::Fourth);
    check_stencil(rho, h, order, matches!(scenario.parameter, Parameter::Snr(_)))?;
    let values = order
        .stencil()
        .iter()
        .map(|(o, _)| oracle::lg_mutual_information(&model.at_rho(rho + o * h)).map(|v| vec![v]))
        .collect::<Result<Vec<_>, _>>()?;
    let lhs = fd_combine(&values, h, order)?.value;
    let rhs = oracle::lg_rhs_terms(model)?;
    let mmse = rho * rhs.mmse_sum;
    let corr = if system.has_feedback() { rho * rho * rhs.correction_sum } else { 0.0 };
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("mutual_information".into(), oracle::lg_mutual_information(model)?);
    diagnostics.insert("mmse_sum".into(), rhs.mmse_sum);
    diagnostics.insert("correction_sum".into(), rhs.correction_sum);
    Ok(Sides {
        values: FormValues {
            lhs,
            lhs_se: 0.0,
            rhs_mmse: mmse,
            rhs_mmse_se: 0.0,
            rhs_correction: corr,
            rhs_correction_se: 0.0,
            rhs_total: mmse + corr,
            gap: lhs - (mmse + corr),
            gap_se: 0.0,
        },
        no_correction_gap: (lhs - mmse, 0.0),
        monte_carlo: false,
        backend: "oracle",
        budgets: ResolvedBudgets {
            n_outer: None,
            k_inner: None,
            m_steps: system.spec().grid.map(|g| g.steps),
            h,
            fd_order: order.as_u8(),
        },
        diagnostics,
    })
}

/// Seed offset for the right-hand side under [`SeedPolicy::Independent`].
const INDEPENDENT_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

struct PathRecord {
    lhs: f64,
    mmse: f64,
    corr: f64,
    ess: f64,
}

fn monte_carlo_sides(system: &ValidatedSystem, scenario: &ScenarioConfig) -> Result<Sides, IdentityError> {
    let rho = rho_of(scenario.parameter);
    let b = &scenario.budgets;
    let (n, k) = (b.n_outer, b.k_inner);
    let h = b.h.unwrap_or(1e-3);
    let order = b.fd_order.unwrap_or(FdOrder::Second);
    check_stencil(rho, h, order, matches!(scenario.parameter, Parameter::Snr(_)))?;
    if n.checked_mul(k).is_none() {
        return Err(EstimateError::BudgetOverflow { n, k }.into());
    }
    let seed = scenario.seed;
    let rhs_seed = match scenario.seed_policy {
        SeedPolicy::Shared => seed,
        SeedPolicy::Independent => seed.wrapping_add(INDEPENDENT_SEED_OFFSET),
    };
    let stencil = order.stencil();
    let form = scenario.mmse_form;
    let records = estimate::map_indices(n, |idx, scratch| -> Result<PathRecord, EstimateError> {
        let noise = NoiseDraw::generate(system, seed, idx as u64);
        let draws = InnerDraws::generate(system, k, seed, idx as u64);
        let mut lhs = 0.0;
        for (o, w) in stencil {
            lhs += w * estimate::path_mi(system, rho + o * h, &noise, &draws, scratch);
        }
        lhs /= h;
        let terms = if rhs_seed == seed {
            let path = simulate::sample_path(system, rho, &noise).expect("generated noise");
            estimate::path_terms(system, &path, &draws, form, scratch)?
        } else {
            let noise = NoiseDraw::generate(system, rhs_seed, idx as u64);
            let draws = InnerDraws::generate(system, k, rhs_seed, idx as u64);
            let path = simulate::sample_path(system, rho, &noise).expect("generated noise");
            estimate::path_terms(system, &path, &draws, form, scratch)?
        };
        Ok(PathRecord {
            lhs,
            mmse: terms.mmse.iter().sum(),
            corr: terms.correction,
            ess: terms.ess,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let col = |f: &dyn Fn(&PathRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    let rho2 = rho * rho;
    let lhs = Estimate::from_samples(&col(&|r| r.lhs));
    let mmse = Estimate::from_samples(&col(&|r| rho * r.mmse));
    let corr_unscaled = Estimate::from_samples(&col(&|r| r.corr));
    let corr = corr_unscaled.scaled(rho2);
    let rhs = Estimate::from_samples(&col(&|r| rho * r.mmse + rho2 * r.corr));
    let (gap, no_corr) = match scenario.seed_policy {
        SeedPolicy::Shared => (
            Estimate::from_samples(&col(&|r| r.lhs - (rho * r.mmse + rho2 * r.corr))),
            Estimate::from_samples(&col(&|r| r.lhs - rho * r.mmse)),
        ),
        SeedPolicy::Independent => {
            let quad = |a: f64, b: f64| math::sqrt(a * a + b * b);
            (
                Estimate {
                    value: lhs.value - rhs.value,
                    std_error: quad(lhs.std_error, rhs.std_error),
                    samples: n,
                },
                Estimate {
                    value: lhs.value - mmse.value,
                    std_error: quad(lhs.std_error, mmse.std_error),
                    samples: n,
                },
            )
        }
    };

    let mut diagnostics = BTreeMap::new();
    let ess = col(&|r| r.ess);
    diagnostics.insert("mean_ess".into(), math::compensated_sum(ess.iter().copied()) / n as f64);
    diagnostics.insert("min_ess".into(), ess.iter().copied().fold(f64::INFINITY, f64::min));
    diagnostics.insert("correction_unscaled".into(), corr_unscaled.value);
    if corr_unscaled.std_error > 0.0 {
        diagnostics.insert("correction_z".into(), corr_unscaled.value / corr_unscaled.std_error);
    }
    if b.k_doubling {
        let kd = estimate::mi_k_doubling(system, rho, n, k, seed)?;
        for (tag, e) in ["mi_k", "mi_2k", "mi_4k"].iter().zip(kd.estimates.iter()) {
            diagnostics.insert((*tag).into(), e.value);
        }
        diagnostics.insert("k_doubling_monotone".into(), if kd.monotone { 1.0 } else { 0.0 });
    }
    let inner = InnerDraws::generate(system, k, seed, 0);
    Ok(Sides {
        values: FormValues {
            lhs: lhs.value,
            lhs_se: lhs.std_error,
            rhs_mmse: mmse.value,
            rhs_mmse_se: mmse.std_error,
            rhs_correction: corr.value,
            rhs_correction_se: corr.std_error,
            rhs_total: mmse.value + corr.value,
            gap: gap.value,
            gap_se: gap.std_error,
        },
        no_correction_gap: (no_corr.value, no_corr.std_error),
        monte_carlo: true,
        backend: "monte-carlo",
        budgets: ResolvedBudgets {
            n_outer: Some(n),
            k_inner: Some(inner.len()),
            m_steps: system.spec().grid.map(|g| g.steps),
            h,
            fd_order: order.as_u8(),
        },
        diagnostics,
    })
}

fn debruijn_sides(prior: &SmoothingPrior, t: f64, budgets: &Budgets) -> Result<Sides, IdentityError> {
    let model = DeBruijnModel::new(prior.clone(), t)?;
    let h = budgets.h.unwrap_or(1e-4) * t;
    let order = budgets.fd_order.unwrap_or(FdOrder::Second);
    check_stencil(t, h, order, true)?;
    let values = order
        .stencil()
        .iter()
        .map(|(o, _)| model.at(t + o * h).and_then(|m| m.entropy()).map(|v| vec![v]))
        .collect::<Result<Vec<_>, _>>()?;
    let lhs = fd_combine(&values, h, order)?.value;
    let fisher = model.fisher()?;
    let fisher_alt = model.fisher_alternate()?;
    let rhs = 0.5 * fisher;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("entropy".into(), model.entropy()?);
    diagnostics.insert("fisher".into(), fisher);
    diagnostics.insert("fisher_alt".into(), fisher_alt);
    diagnostics.insert("fisher_alt_gap".into(), fisher - fisher_alt);
    Ok(Sides {
        values: FormValues {
            lhs,
            lhs_se: 0.0,
            rhs_mmse: rhs,
            rhs_mmse_se: 0.0,
            rhs_correction: 0.0,
            rhs_correction_se: 0.0,
            rhs_total: rhs,
            gap: lhs - rhs,
            gap_se: 0.0,
        },
        no_correction_gap: (lhs - rhs, 0.0),
        monte_carlo: false,
        backend: "quadrature",
        budgets: ResolvedBudgets {
            n_outer: None,
            k_inner: None,
            m_steps: None,
            h,
            fd_order: order.as_u8(),
        },
        diagnostics,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SweepAxis {
    N,
    K,
    M,
    H,
    Rho,
    Snr,
    T,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "N",
            SweepAxis::K => "K",
            SweepAxis::M => "m",
            SweepAxis::H => "h",
            SweepAxis::Rho => "rho",
            SweepAxis::Snr => "snr",
            SweepAxis::T => "t",
        }
    }
}

impl core::str::FromStr for SweepAxis {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "N" | "n" => SweepAxis::N,
            "K" | "k" => SweepAxis::K,
            "m" | "M" => SweepAxis::M,
            "h" | "H" => SweepAxis::H,
            "rho" => SweepAxis::Rho,
            "snr" => SweepAxis::Snr,
            "t" | "T" => SweepAxis::T,
            other => return Err(IdentityError::InvalidScenario(format!("unknown sweep axis '{other}'"))),
        })
    }
}

fn as_count(v: f64, axis: SweepAxis) -> Result<usize, IdentityError> {
    if v >= 1.0 && libm::trunc(v) == v && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(IdentityError::InvalidScenario(format!(
            "axis {} needs positive integers (got {v})",
            axis.name()
        )))
    }
}

/// One report per grid point, everything else held fixed (including the
/// seed). On the `m` axis continuous kinds are verified at each `m` alone.
pub fn convergence_sweep(
    kind: IdentityKind,
    scenario: &ScenarioConfig,
    axis: SweepAxis,
    grid: &[f64],
) -> Result<Vec<IdentityReport>, IdentityError> {
    if grid.is_empty() {
        return Err(IdentityError::EmptyGrid);
    }
    let decreasing = axis == SweepAxis::H;
    let ordered = grid.windows(2).all(|p| if decreasing { p[0] > p[1] } else { p[0] < p[1] });
    if !ordered {
        return Err(IdentityError::GridOrder(if decreasing { "decreasing" } else { "increasing" }));
    }
    let mismatch = match axis {
        SweepAxis::M => !kind.is_continuous(),
        SweepAxis::T => kind != IdentityKind::DeBruijn,
        SweepAxis::Rho | SweepAxis::Snr | SweepAxis::N | SweepAxis::K => kind == IdentityKind::DeBruijn,
        SweepAxis::H => false,
    };
    if mismatch {
        return Err(IdentityError::AxisMismatch { axis: axis.name(), kind });
    }
    grid.iter()
        .map(|&v| {
            let mut s = scenario.clone();
            match axis {
                SweepAxis::N => s.budgets.n_outer = as_count(v, axis)?,
                SweepAxis::K => s.budgets.k_inner = as_count(v, axis)?,
                SweepAxis::M => return verify_at_steps(kind, &s, as_count(v, axis)?),
                SweepAxis::H => s.budgets.h = Some(v),
                SweepAxis::Rho => s.parameter = Parameter::Rho(v),
                SweepAxis::Snr => s.parameter = Parameter::Snr(v),
                SweepAxis::T => s.parameter = Parameter::T(v),
            }
            verify_identity(kind, &s)
        })
        .collect()
}
