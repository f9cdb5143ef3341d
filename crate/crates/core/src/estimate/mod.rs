//! Posterior expectations, mutual information and the right-hand-side terms.
//!
//! Everything conditional on an output path goes through self-normalized
//! importance sampling with prior proposals: for each outer path a block of
//! inner prior draws is weighted by the channel likelihood of the observed
//! outputs. BPSK priors are enumerated exactly instead (two atoms for a
//! shared message, `2^n` for per-step symbols up to `n = 16`).
//!
//! Two shortcuts keep the inner loop cheap without changing any result
//! beyond rounding:
//!
//! - when every `g_i` is affine in a shared scalar `w` given the observed
//!   outputs, the log-likelihood is a quadratic in `w` and the posterior
//!   moments of `g_i` follow from those of `w`;
//! - the inner draws for a path depend only on `(seed, path index)`, so the
//!   same block is reused at every `ρ` of a finite-difference stencil.

pub mod density;
pub mod quadrature;

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::{self, Domain};
use crate::simulate::{self, Ensemble, NoiseDraw, PathSample};
use crate::system::{PriorKind, ValidatedSystem};

/// Largest per-step BPSK horizon that is enumerated exactly.
pub const MAX_ENUMERATED_DIMENSION: usize = 16;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("{0} must be at least 1")]
    ZeroBudget(&'static str),
    #[error("outer × inner budget overflows ({n} × {k})")]
    BudgetOverflow { n: usize, k: usize },
    #[error("output path has length {found}, system horizon is {expected}")]
    PathLength { expected: usize, found: usize },
    #[error("message draw has length {found}, prior dimension is {expected}")]
    MessageLength { expected: usize, found: usize },
    #[error("all importance weights vanished")]
    DegenerateWeights,
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    /// Mean and `sd/√n` of `xs`. A single sample has infinite standard error.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                value: f64::NAN,
                std_error: f64::INFINITY,
                samples: 0,
            };
        }
        let mean = math::compensated_sum(xs.iter().copied()) / n as f64;
        let std_error = if n < 2 {
            f64::INFINITY
        } else {
            let ss = math::compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
            math::sqrt(ss / (n - 1) as f64 / n as f64)
        };
        Self {
            value: mean,
            std_error,
            samples: n,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            samples: 0,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self {
            value: c * self.value,
            std_error: c.abs() * self.std_error,
            samples: self.samples,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SnisEstimate {
    pub value: f64,
    pub ess: f64,
    pub k: usize,
}

/// Mutual information `I(W; Y)` in nats.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MiEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_outer: usize,
    /// Inner draws per path (atom count when enumerated).
    pub k_inner: usize,
    pub exact_inner: bool,
}

/// How the per-path MMSE contribution is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum MmseForm {
    /// `Var(g_i | Y)` under the inner posterior. Same expectation as the
    /// residual form, far smaller variance.
    #[default]
    PosteriorVariance,
    /// `(g_i − E[g_i | Y])²` at the generating draw.
    Residual,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TermEstimate {
    pub per_index: Vec<Estimate>,
    pub total: Estimate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CorrectionEstimate {
    /// `Σ_i E[(g_i − E[g_i|Y])·D_i]`.
    pub unscaled: Estimate,
    /// `ρ²` times the unscaled value.
    pub rho_scaled: Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhsTerms {
    pub mmse: TermEstimate,
    pub correction: CorrectionEstimate,
    pub mean_ess: f64,
    pub min_ess: f64,
}

/// Nested MI at `K`, `2K`, `4K` on the same outer paths.
#[derive(Clone, Debug, PartialEq)]
pub struct KDoubling {
    pub estimates: [MiEstimate; 3],
    /// Estimates are non-increasing in `K` (the inner bias is positive).
    pub monotone: bool,
}

/// Inner prior draws for one outer path.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerDraws {
    dim: usize,
    values: Vec<f64>,
    /// Prior masses of enumerated atoms; `None` for equally weighted samples.
    mass: Option<Vec<f64>>,
}

impl InnerDraws {
    /// `k` prior draws from stream `(seed, Inner, index)`, or the exact
    /// atoms of a BPSK prior (then `k` is ignored).
    pub fn generate(system: &ValidatedSystem, k: usize, seed: u64, index: u64) -> Self {
        let dim = system.w_dimension();
        let component = system.prior().component();
        if matches!(component, PriorKind::BpskScalar) && dim <= MAX_ENUMERATED_DIMENSION {
            let count = 1usize << dim;
            let mut values = Vec::with_capacity(count * dim);
            for c in 0..count {
                for b in 0..dim {
                    values.push(if (c >> b) & 1 == 1 { 1.0 } else { -1.0 });
                }
            }
            let p = 1.0 / count as f64;
            return Self {
                dim,
                values,
                mass: Some(vec![p; count]),
            };
        }
        let mut rng = rng::stream(seed, Domain::Inner, index);
        let values = (0..k * dim).map(|_| component.sample(&mut rng)).collect();
        Self { dim, values, mass: None }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.mass.is_some()
    }

    pub fn draw(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }
}

#[inline]
fn w_at(w: &[f64], i: usize) -> f64 {
    if w.len() == 1 {
        w[0]
    } else {
        w[i]
    }
}

/// Likelihood of one observed output path, as a function of the message.
enum Kernel {
    /// `log f(y|w) = c0 + w·(c1 + c2·w)` and `g_i = slope_i·w + intercept_i`.
    Affine {
        c0: f64,
        c1: f64,
        c2: f64,
        slope: Vec<f64>,
        intercept: Vec<f64>,
    },
    Generic,
}

pub(crate) struct PathContext<'a> {
    system: &'a ValidatedSystem,
    rho: f64,
    y: &'a [f64],
    kernel: Kernel,
}

/// Posterior summary for one output path.
pub(crate) struct Posterior {
    pub ess: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl<'a> PathContext<'a> {
    pub(crate) fn new(system: &'a ValidatedSystem, rho: f64, y: &'a [f64]) -> Self {
        let kernel = if system.w_dimension() == 1 {
            Self::affine_kernel(system, rho, y).unwrap_or(Kernel::Generic)
        } else {
            Kernel::Generic
        };
        Self { system, rho, y, kernel }
    }

    fn affine_kernel(system: &ValidatedSystem, rho: f64, y: &[f64]) -> Option<Kernel> {
        let n = system.n();
        let mut slope = Vec::with_capacity(n);
        let mut intercept = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = system.expr(i).affine_in_w(&y[..i], 0.0)?;
            slope.push(a);
            intercept.push(b);
        }
        let (mut rr, mut ar, mut aa) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let r = y[i] - rho * intercept[i];
            rr += r * r;
            ar += slope[i] * r;
            aa += slope[i] * slope[i];
        }
        Some(Kernel::Affine {
            c0: -0.5 * n as f64 * math::LN_2PI - 0.5 * rr,
            c1: rho * ar,
            c2: -0.5 * rho * rho * aa,
            slope,
            intercept,
        })
    }

    /// `log f(y | w)`; fills `g` with `g_i(w_i, y_<i)` when given.
    pub(crate) fn log_likelihood(&self, w: &[f64], g: Option<&mut [f64]>) -> f64 {
        match &self.kernel {
            Kernel::Affine {
                c0,
                c1,
                c2,
                slope,
                intercept,
            } => {
                let w0 = w[0];
                if let Some(g) = g {
                    for i in 0..g.len() {
                        g[i] = slope[i] * w0 + intercept[i];
                    }
                }
                c0 + w0 * (c1 + c2 * w0)
            }
            Kernel::Generic => {
                let n = self.system.n();
                let mut ss = 0.0;
                let mut out = g;
                for i in 0..n {
                    let gi = self.system.expr(i).value_at(w_at(w, i), &self.y[..i], 0.0);
                    if let Some(buf) = out.as_deref_mut() {
                        buf[i] = gi;
                    }
                    let r = self.y[i] - self.rho * gi;
                    ss += r * r;
                }
                -0.5 * n as f64 * math::LN_2PI - 0.5 * ss
            }
        }
    }

    /// Importance weights `e_j = mass_j·exp(ℓ_j − max)` (unnormalized)
    /// together with `max` and `Σ e_j`.
    fn weights(&self, draws: &InnerDraws, g_buf: Option<&mut Vec<f64>>, e: &mut Vec<f64>) -> (f64, f64) {
        let k = draws.len();
        let n = self.system.n();
        e.clear();
        match g_buf {
            Some(buf) => {
                buf.clear();
                buf.resize(k * n, 0.0);
                for j in 0..k {
                    e.push(self.log_likelihood(draws.draw(j), Some(&mut buf[j * n..(j + 1) * n])));
                }
            }
            None => {
                for j in 0..k {
                    e.push(self.log_likelihood(draws.draw(j), None));
                }
            }
        }
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..k {
            let mut v = math::exp(e[j] - max);
            if let Some(mass) = &draws.mass {
                v *= mass[j];
            }
            e[j] = v;
            sum += v;
        }
        (max, sum)
    }

    fn log_marginal_from(draws: &InnerDraws, max: f64, sum: f64) -> f64 {
        if draws.is_exact() {
            max + math::ln(sum)
        } else {
            max + math::ln(sum / draws.len() as f64)
        }
    }

    fn ess(draws: &InnerDraws, e: &[f64], sum: f64) -> f64 {
        if draws.is_exact() {
            return draws.len() as f64;
        }
        let sq: f64 = e.iter().map(|v| (v / sum) * (v / sum)).sum();
        1.0 / sq
    }

    /// `log f̂(y)` only.
    pub(crate) fn log_marginal(&self, draws: &InnerDraws, scratch: &mut Scratch) -> f64 {
        let (max, sum) = self.weights(draws, None, &mut scratch.e);
        Self::log_marginal_from(draws, max, sum)
    }

    /// Posterior means and variances of every `g_i`.
    pub(crate) fn posterior(&self, draws: &InnerDraws, scratch: &mut Scratch) -> Result<Posterior, EstimateError> {
        let n = self.system.n();
        let k = draws.len();
        let affine = matches!(self.kernel, Kernel::Affine { .. });
        let g_buf = if affine { None } else { Some(&mut scratch.g) };
        let (_, sum) = self.weights(draws, g_buf, &mut scratch.e);
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(EstimateError::DegenerateWeights);
        }
        let e = &scratch.e;
        let mut mean = vec![0.0; n];
        let mut var = vec![0.0; n];
        match &self.kernel {
            Kernel::Affine { slope, intercept, .. } => {
                let mut mw = 0.0;
                for j in 0..k {
                    mw += e[j] * draws.draw(j)[0];
                }
                mw /= sum;
                let mut vw = 0.0;
                for j in 0..k {
                    let d = draws.draw(j)[0] - mw;
                    vw += e[j] * d * d;
                }
                vw /= sum;
                for i in 0..n {
                    mean[i] = slope[i] * mw + intercept[i];
                    var[i] = slope[i] * slope[i] * vw;
                }
            }
            Kernel::Generic => {
                let g = &scratch.g;
                for j in 0..k {
                    let row = &g[j * n..(j + 1) * n];
                    for i in 0..n {
                        mean[i] += e[j] * row[i];
                    }
                }
                for m in mean.iter_mut() {
                    *m /= sum;
                }
                for j in 0..k {
                    let row = &g[j * n..(j + 1) * n];
                    for i in 0..n {
                        let d = row[i] - mean[i];
                        var[i] += e[j] * d * d;
                    }
                }
                for v in var.iter_mut() {
                    *v /= sum;
                }
            }
        }
        Ok(Posterior {
            ess: Self::ess(draws, e, sum),
            mean,
            var,
        })
    }
}

/// Reusable per-worker buffers.
#[derive(Default)]
pub(crate) struct Scratch {
    e: Vec<f64>,
    g: Vec<f64>,
    pub(crate) y: Vec<f64>,
}

/// Runs `f` over `0..n`, in parallel when the feature is on. Results keep
/// index order, so reductions are identical either way.
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut Scratch) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map_init(Scratch::default, |s, k| f(k, s))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut scratch = Scratch::default();
        (0..n).map(|k| f(k, &mut scratch)).collect()
    }
}

fn check_budget(n: usize, k: usize) -> Result<(), EstimateError> {
    if n == 0 {
        return Err(EstimateError::ZeroBudget("outer sample count N"));
    }
    if k == 0 {
        return Err(EstimateError::ZeroBudget("inner sample count K"));
    }
    n.checked_mul(k).ok_or(EstimateError::BudgetOverflow { n, k })?;
    Ok(())
}

/// `Σ_i [−½ln(2π) − ½(y_i − ρ·g_i(w_i, y_<i))²]` with `g` evaluated on the
/// observed history.
pub fn log_likelihood(system: &ValidatedSystem, rho: f64, w: &[f64], y: &[f64]) -> Result<f64, EstimateError> {
    if y.len() != system.n() {
        return Err(EstimateError::PathLength {
            expected: system.n(),
            found: y.len(),
        });
    }
    if w.len() != system.w_dimension() {
        return Err(EstimateError::MessageLength {
            expected: system.w_dimension(),
            found: w.len(),
        });
    }
    let ctx = PathContext {
        system,
        rho,
        y,
        kernel: Kernel::Generic,
    };
    Ok(ctx.log_likelihood(w, None))
}

/// `E[ψ(W, g(W, y)) | Y = y]` by self-normalized importance sampling.
/// `psi` receives the message draw and the channel values on the observed
/// history.
pub fn snis_conditional<F>(
    system: &ValidatedSystem,
    rho: f64,
    y: &[f64],
    psi: F,
    k: usize,
    seed: u64,
) -> Result<SnisEstimate, EstimateError>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if k == 0 {
        return Err(EstimateError::ZeroBudget("inner sample count K"));
    }
    if y.len() != system.n() {
        return Err(EstimateError::PathLength {
            expected: system.n(),
            found: y.len(),
        });
    }
    let draws = InnerDraws::generate(system, k, seed, 0);
    let ctx = PathContext {
        system,
        rho,
        y,
        kernel: Kernel::Generic,
    };
    let mut scratch = Scratch::default();
    let (_, sum) = ctx.weights(&draws, Some(&mut scratch.g), &mut scratch.e);
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(EstimateError::DegenerateWeights);
    }
    let n = system.n();
    let mut acc = 0.0;
    for j in 0..draws.len() {
        acc += scratch.e[j] * psi(draws.draw(j), &scratch.g[j * n..(j + 1) * n]);
    }
    Ok(SnisEstimate {
        value: acc / sum,
        ess: PathContext::ess(&draws, &scratch.e, sum),
        k: draws.len(),
    })
}

/// Per-path `log f(Y|W) − log f̂(Y)` at one `ρ`.
pub(crate) fn path_mi(
    system: &ValidatedSystem,
    rho: f64,
    noise: &NoiseDraw,
    draws: &InnerDraws,
    scratch: &mut Scratch,
) -> f64 {
    let mut y = core::mem::take(&mut scratch.y);
    simulate::outputs_into(system, rho, noise, &mut y);
    let ctx = PathContext::new(system, rho, &y);
    let outer = ctx.log_likelihood(&noise.w, None);
    let value = outer - ctx.log_marginal(draws, scratch);
    scratch.y = y;
    value
}

/// Per-path right-hand-side ingredients at the path's own `ρ`.
pub(crate) struct PathTerms {
    pub mmse: Vec<f64>,
    pub correction: f64,
    /// `E[g_i|Y] − g_i`, for the tower check.
    pub tower: Vec<f64>,
    pub ess: f64,
}

pub(crate) fn path_terms(
    system: &ValidatedSystem,
    path: &PathSample,
    draws: &InnerDraws,
    form: MmseForm,
    scratch: &mut Scratch,
) -> Result<PathTerms, EstimateError> {
    let ctx = PathContext::new(system, path.rho, &path.y);
    let post = ctx.posterior(draws, scratch)?;
    let n = system.n();
    let mut mmse = Vec::with_capacity(n);
    let mut tower = Vec::with_capacity(n);
    let mut correction = 0.0;
    for i in 0..n {
        let resid = path.g[i] - post.mean[i];
        mmse.push(match form {
            MmseForm::PosteriorVariance => post.var[i],
            MmseForm::Residual => resid * resid,
        });
        tower.push(-resid);
        correction += resid * path.d[i];
    }
    Ok(PathTerms {
        mmse,
        correction,
        tower,
        ess: post.ess,
    })
}

fn mi_from_paths(values: &[f64], k_inner: usize, exact_inner: bool) -> MiEstimate {
    let est = Estimate::from_samples(values);
    MiEstimate {
        value: est.value,
        std_error: est.std_error,
        n_outer: values.len(),
        k_inner,
        exact_inner,
    }
}

fn inner_count(system: &ValidatedSystem, k: usize) -> (usize, bool) {
    let probe = InnerDraws::generate(system, 0, 0, 0);
    if probe.is_exact() {
        (probe.len(), true)
    } else {
        (k, false)
    }
}

/// Nested Monte Carlo `I(W; Y)`: per outer path, the likelihood at the
/// generating message minus the log-mean-exp over `K` fresh prior draws.
pub fn estimate_mi_nested(
    system: &ValidatedSystem,
    rho: f64,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<MiEstimate, EstimateError> {
    check_budget(n, k)?;
    let values = map_indices(n, |idx, scratch| {
        let noise = NoiseDraw::generate(system, seed, idx as u64);
        let draws = InnerDraws::generate(system, k, seed, idx as u64);
        path_mi(system, rho, &noise, &draws, scratch)
    });
    let (k_inner, exact) = inner_count(system, k);
    Ok(mi_from_paths(&values, k_inner, exact))
}

/// `I(W; Y) = E[½ρ²Σg_i²] − E[log E_W̃ exp(Σ ρg̃_i y_i − ½ρ²g̃_i²)]`, the
/// likelihood-ratio decomposition against the `ρ = 0` output law. Same
/// expectation as [`estimate_mi_nested`], different per-path variance.
pub fn estimate_mi_decomposition(
    system: &ValidatedSystem,
    rho: f64,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<MiEstimate, EstimateError> {
    check_budget(n, k)?;
    let len = system.n() as f64;
    let values = map_indices(n, |idx, scratch| {
        let noise = NoiseDraw::generate(system, seed, idx as u64);
        let path = simulate::sample_path(system, rho, &noise).expect("generated noise");
        let draws = InnerDraws::generate(system, k, seed, idx as u64);
        let ctx = PathContext::new(system, rho, &path.y);
        let reference = -0.5 * len * math::LN_2PI - 0.5 * path.y.iter().map(|v| v * v).sum::<f64>();
        let energy = 0.5 * rho * rho * path.g.iter().map(|v| v * v).sum::<f64>();
        energy - (ctx.log_marginal(&draws, scratch) - reference)
    });
    let (k_inner, exact) = inner_count(system, k);
    Ok(mi_from_paths(&values, k_inner, exact))
}

/// [`estimate_mi_nested`] at `K`, `2K` and `4K`.
pub fn mi_k_doubling(
    system: &ValidatedSystem,
    rho: f64,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<KDoubling, EstimateError> {
    let a = estimate_mi_nested(system, rho, n, k, seed)?;
    let b = estimate_mi_nested(system, rho, n, 2 * k, seed)?;
    let c = estimate_mi_nested(system, rho, n, 4 * k, seed)?;
    Ok(KDoubling {
        monotone: a.value >= b.value && b.value >= c.value,
        estimates: [a, b, c],
    })
}

fn collect_terms(ensemble: &Ensemble<'_>, k: usize, seed: u64, form: MmseForm) -> Result<Vec<PathTerms>, EstimateError> {
    check_budget(ensemble.len, k)?;
    let system = ensemble.system;
    map_indices(ensemble.len, |idx, scratch| {
        let path = ensemble.path(idx);
        let draws = InnerDraws::generate(system, k, seed, idx as u64);
        path_terms(system, &path, &draws, form, scratch)
    })
    .into_iter()
    .collect()
}

fn summarize_terms(terms: &[PathTerms], n: usize, rho: f64) -> RhsTerms {
    let per_index = (0..n)
        .map(|i| {
            let xs: Vec<f64> = terms.iter().map(|t| t.mmse[i]).collect();
            Estimate::from_samples(&xs)
        })
        .collect();
    let totals: Vec<f64> = terms.iter().map(|t| t.mmse.iter().sum()).collect();
    let corr: Vec<f64> = terms.iter().map(|t| t.correction).collect();
    let unscaled = Estimate::from_samples(&corr);
    let ess: Vec<f64> = terms.iter().map(|t| t.ess).collect();
    RhsTerms {
        mmse: TermEstimate {
            per_index,
            total: Estimate::from_samples(&totals),
        },
        correction: CorrectionEstimate {
            unscaled,
            rho_scaled: unscaled.scaled(rho * rho),
        },
        mean_ess: math::compensated_sum(ess.iter().copied()) / ess.len() as f64,
        min_ess: ess.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// `E[(g_i − E[g_i | Y])²]` per index and summed, conditioning on the whole
/// output path.
pub fn mmse_term(ensemble: &Ensemble<'_>, k: usize, seed: u64, form: MmseForm) -> Result<TermEstimate, EstimateError> {
    Ok(rhs_terms(ensemble, k, seed, form)?.mmse)
}

/// `Σ_i E[(g_i − E[g_i | Y])·D_i]` with `D_i` the pathwise derivative of
/// `g_i` in `ρ`. Uses the same inner draws as [`mmse_term`].
pub fn correction_term(ensemble: &Ensemble<'_>, k: usize, seed: u64) -> Result<CorrectionEstimate, EstimateError> {
    Ok(rhs_terms(ensemble, k, seed, MmseForm::default())?.correction)
}

/// Both right-hand-side terms from one pass with shared weights.
pub fn rhs_terms(ensemble: &Ensemble<'_>, k: usize, seed: u64, form: MmseForm) -> Result<RhsTerms, EstimateError> {
    let terms = collect_terms(ensemble, k, seed, form)?;
    Ok(summarize_terms(&terms, ensemble.system.n(), ensemble.rho))
}

/// Per index, the ensemble mean of `E[g_i|Y] − g_i`; zero in expectation.
pub fn tower_residuals(ensemble: &Ensemble<'_>, k: usize, seed: u64) -> Result<Vec<Estimate>, EstimateError> {
    let terms = collect_terms(ensemble, k, seed, MmseForm::default())?;
    Ok((0..ensemble.system.n())
        .map(|i| {
            let xs: Vec<f64> = terms.iter().map(|t| t.tower[i]).collect();
            Estimate::from_samples(&xs)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{DiscreteSystemSpec, MessagePrior};
    use alloc::boxed::Box;

    fn system(prior: MessagePrior, exprs: &[&str]) -> ValidatedSystem {
        DiscreteSystemSpec::parse("t", prior, exprs).unwrap().validate().unwrap()
    }

    fn gauss(exprs: &[&str]) -> ValidatedSystem {
        system(MessagePrior::gaussian(0.0, 1.0), exprs)
    }

    #[test]
    fn log_likelihood_examples() {
        let s = gauss(&["w"]);
        let half_ln_2pi = 0.5 * math::LN_2PI;
        assert!((log_likelihood(&s, 1.0, &[0.0], &[0.0]).unwrap() + half_ln_2pi).abs() < 1e-15);
        assert!((log_likelihood(&s, 1.0, &[1.0], &[1.0]).unwrap() + half_ln_2pi).abs() < 1e-15);
        assert!(log_likelihood(&s, 1.0, &[1.0], &[1.0, 2.0]).is_err());

        let two = gauss(&["w", "tanh(w + y[1])"]);
        let one_a = gauss(&["w"]);
        let y = [0.3, -1.1];
        let w = [0.4];
        let rho = 1.7;
        let g2 = math::tanh(0.4 + 0.3);
        let expected = log_likelihood(&one_a, rho, &w, &y[..1]).unwrap() + math::normal_log_pdf(y[1], rho * g2, 1.0);
        assert!((log_likelihood(&two, rho, &w, &y).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn affine_and_generic_kernels_agree() {
        let s = gauss(&["w", "0.5*w + 0.3*y[1]", "w - tanh(y[2])"]);
        let y = [0.2, -0.7, 1.4];
        let rho = 1.3;
        let fast = PathContext::new(&s, rho, &y);
        assert!(matches!(fast.kernel, Kernel::Affine { .. }));
        for &w in &[-2.0, 0.0, 0.5, 3.0] {
            let mut g1 = [0.0; 3];
            let mut g2 = [0.0; 3];
            let a = fast.log_likelihood(&[w], Some(&mut g1));
            let b = log_likelihood(&s, rho, &[w], &y).unwrap();
            PathContext {
                system: &s,
                rho,
                y: &y,
                kernel: Kernel::Generic,
            }
            .log_likelihood(&[w], Some(&mut g2));
            assert!((a - b).abs() < 1e-12);
            for i in 0..3 {
                assert!((g1[i] - g2[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn snis_normalization_is_exact() {
        let s = gauss(&["w", "tanh(w + y[1])"]);
        for (rho, seed) in [(0.0, 1), (1.0, 2), (5.0, 3)] {
            let est = snis_conditional(&s, rho, &[0.4, -2.0], |_, _| 1.0, 500, seed).unwrap();
            assert_eq!(est.value, 1.0);
            assert!(est.ess > 0.0 && est.ess <= 500.0 + 1e-9);
        }
    }

    #[test]
    fn snis_single_draw_returns_psi() {
        let s = gauss(&["w"]);
        let draws = InnerDraws::generate(&s, 1, 9, 0);
        let w = draws.draw(0)[0];
        let est = snis_conditional(&s, 1.0, &[0.5], |w, _| w[0] * 3.0, 1, 9).unwrap();
        assert_eq!(est.value, 3.0 * w);
        assert_eq!(est.ess, 1.0);
    }

    #[test]
    fn snis_conjugate_gaussian_mean() {
        let s = gauss(&["w"]);
        let (rho, y0) = (1.0, 0.8);
        let target = rho * y0 / (1.0 + rho * rho);
        let est = snis_conditional(&s, rho, &[y0], |w, _| w[0], 100_000, 4).unwrap();
        // Posterior sd is 1/√2; SNIS error scales with sd/√ESS.
        let se = (0.5f64).sqrt() / est.ess.sqrt();
        assert!((est.value - target).abs() < 3.0 * se, "{} vs {target}", est.value);
    }

    #[test]
    fn snis_bpsk_enumerates() {
        let s = system(MessagePrior::bpsk(), &["w"]);
        let (rho, y0) = (1.2, 0.3);
        let est = snis_conditional(&s, rho, &[y0], |w, _| w[0], 7, 0).unwrap();
        assert!((est.value - math::tanh(rho * y0)).abs() < 1e-14);
        assert_eq!(est.ess, 2.0);
        assert_eq!(est.k, 2);
    }

    #[test]
    fn snis_stable_at_high_snr() {
        let s = gauss(&["w"; 8]);
        let y: Vec<f64> = (0..8).map(|i| 50.0 * 0.3 + 0.1 * i as f64).collect();
        let est = snis_conditional(&s, 50.0, &y, |w, _| w[0], 1000, 5).unwrap();
        assert!(est.value.is_finite());
        assert!(est.ess >= 1.0);
    }

    #[test]
    fn mi_zero_at_rho_zero() {
        for s in [gauss(&["w", "w + y[1]"]), system(MessagePrior::bpsk(), &["w"])] {
            let est = estimate_mi_nested(&s, 0.0, 200, 50, 1).unwrap();
            assert_eq!(est.value, 0.0);
            assert_eq!(est.std_error, 0.0);
        }
        let generic = gauss(&["w", "tanh(w*y[1])"]);
        let est = estimate_mi_nested(&generic, 0.0, 100, 20, 3).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn mi_scalar_gaussian() {
        let s = gauss(&["w"]);
        let est = estimate_mi_nested(&s, 1.0, 20_000, 2_000, 11).unwrap();
        let target = 0.5 * math::ln(2.0);
        assert!((est.value - target).abs() < 4.0 * est.std_error + 1e-3, "{est:?}");
        let dec = estimate_mi_decomposition(&s, 1.0, 20_000, 2_000, 11).unwrap();
        assert!((dec.value - target).abs() < 4.0 * dec.std_error + 1e-3, "{dec:?}");
    }

    #[test]
    fn mi_bpsk_is_exact_inner() {
        let s = system(MessagePrior::bpsk(), &["w"]);
        let est = estimate_mi_nested(&s, 1.0, 10, 1000, 2).unwrap();
        assert!(est.exact_inner);
        assert_eq!(est.k_inner, 2);
    }

    #[test]
    fn k_doubling_shrinks_bias() {
        let s = gauss(&["w", "w"]);
        let kd = mi_k_doubling(&s, 2.0, 2000, 4, 5).unwrap();
        assert!(kd.monotone, "{kd:?}");
    }

    #[test]
    fn mmse_gaussian_memoryless() {
        let s = gauss(&["w"]);
        for rho in [0.0, 0.5, 1.0, 2.0] {
            let e = Ensemble::new(&s, rho, 4000, 3).unwrap();
            let target = 1.0 / (1.0 + rho * rho);
            let res = mmse_term(&e, 2000, 3, MmseForm::Residual).unwrap();
            assert!((res.total.value - target).abs() < 4.0 * res.total.std_error + 2e-3, "{rho}: {res:?}");
            let pv = mmse_term(&e, 2000, 3, MmseForm::PosteriorVariance).unwrap();
            assert!((pv.total.value - target).abs() < 4.0 * pv.total.std_error + 2e-3, "{rho}: {pv:?}");
            assert!(pv.total.std_error < res.total.std_error);
        }
    }

    #[test]
    fn correction_zero_without_feedback() {
        let prior = MessagePrior::per_step(PriorKind::IidPerStep {
            component: Box::new(PriorKind::GaussianScalar { mean: 0.0, variance: 1.0 }),
            n: 3,
        });
        let s = system(prior, &["w", "tanh(w)", "w*w"]);
        let e = Ensemble::new(&s, 1.1, 300, 8).unwrap();
        let c = correction_term(&e, 100, 8).unwrap();
        assert_eq!(c.unscaled.value.to_bits(), 0);
        assert_eq!(c.rho_scaled.value.to_bits(), 0);
    }

    #[test]
    fn degenerate_prior_has_zero_terms() {
        let prior = MessagePrior::gaussian(1.0, 1e-300);
        let s = system(prior, &["w", "w + 0.5*y[1]"]);
        let e = Ensemble::new(&s, 1.0, 20, 1).unwrap();
        let terms = rhs_terms(&e, 50, 1, MmseForm::Residual).unwrap();
        assert!(terms.mmse.total.value.abs() < 1e-20);
        assert!(terms.correction.unscaled.value.abs() < 1e-20);
    }

    #[test]
    fn tower_property_and_dominance() {
        let s = gauss(&["w", "w + 0.5*tanh(y[1])", "w + 0.5*tanh(y[2])"]);
        let e = Ensemble::new(&s, 1.0, 3000, 21).unwrap();
        for r in tower_residuals(&e, 500, 21).unwrap() {
            assert!(r.value.abs() <= 4.0 * r.std_error, "{r:?}");
        }
        let m = mmse_term(&e, 500, 21, MmseForm::PosteriorVariance).unwrap();
        assert!(m.per_index[0].value <= 1.0 + 4.0 * m.per_index[0].std_error);
    }

    #[test]
    fn budgets_are_checked() {
        let s = gauss(&["w"]);
        assert!(estimate_mi_nested(&s, 1.0, 0, 10, 0).is_err());
        assert!(estimate_mi_nested(&s, 1.0, 10, 0, 0).is_err());
        assert_eq!(
            check_budget(usize::MAX, 2),
            Err(EstimateError::BudgetOverflow { n: usize::MAX, k: 2 })
        );
    }

    #[test]
    fn estimate_statistics() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.value, 2.5);
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(Estimate::from_samples(&[2.0]).std_error, f64::INFINITY);
    }
}
