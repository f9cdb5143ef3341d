//! JSON scenario files.
//!
//! A file holds either one scenario object or `{"scenarios": [...]}`. The
//! system part of a scenario is flat:
//!
//! ```json
//! {
//!   "label": "tanh-feedback",
//!   "identity": "feedback-ext",
//!   "kind": "discrete",
//!   "n": 4,
//!   "prior": {"type": "gaussian", "mean": 0, "variance": 1},
//!   "g": ["w", "w + 0.5*tanh(y[1])", "w + 0.5*tanh(y[2])", "w + 0.5*tanh(y[3])"],
//!   "rho": 1.0,
//!   "N": 50000, "K": 2000, "seed": 7
//! }
//! ```
//!
//! Continuous scenarios use `"kind": "continuous"` with `"T"`, `"m"` and
//! `"g_ct"`; de Bruijn scenarios use `"kind": "smoothing"` with a prior and
//! `"t"`.

use std::path::Path;

use immse_core::identity::{Backend, FdOrder, Parameter, SeedPolicy, SystemRef};
use immse_core::{
    ChannelExpr, ContinuousSystemSpec, DiscreteSystemSpec, IdentityKind, MessagePrior, MmseForm, PriorKind,
    ScenarioConfig, SmoothingPrior,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("'{0}' is neither a readable file nor a builtin scenario (see `immse list`)")]
    NotFound(String),
    #[error("{context}: {message}")]
    Schema { context: String, message: String },
    #[error("{context}: {source}")]
    Identity {
        context: String,
        source: immse_core::identity::IdentityError,
    },
}

fn schema(context: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        context: context.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        variance: f64,
        #[serde(default)]
        per_step: bool,
    },
    Bpsk {
        #[serde(default)]
        per_step: bool,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
        #[serde(default)]
        per_step: bool,
    },
    /// Point masses; smoothing scenarios only.
    Atoms { points: Vec<f64>, weights: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl PriorSpec {
    fn component(&self) -> Option<(PriorKind, bool)> {
        match self {
            PriorSpec::Gaussian { mean, variance, per_step } => Some((
                PriorKind::GaussianScalar {
                    mean: *mean,
                    variance: *variance,
                },
                *per_step,
            )),
            PriorSpec::Bpsk { per_step } => Some((PriorKind::BpskScalar, *per_step)),
            PriorSpec::Mixture {
                weights,
                means,
                variances,
                per_step,
            } => Some((
                PriorKind::GaussianMixtureScalar {
                    weights: weights.clone(),
                    means: means.clone(),
                    variances: variances.clone(),
                },
                *per_step,
            )),
            PriorSpec::Atoms { .. } => None,
        }
    }

    fn message_prior(&self, context: &str) -> Result<MessagePrior, ConfigError> {
        let (kind, per_step) = self
            .component()
            .ok_or_else(|| schema(context, "atom priors are only allowed for smoothing scenarios"))?;
        Ok(if per_step {
            MessagePrior::per_step(kind)
        } else {
            MessagePrior::shared(kind)
        })
    }

    fn smoothing_prior(&self, context: &str) -> Result<SmoothingPrior, ConfigError> {
        match self {
            PriorSpec::Atoms { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(schema(context, "atoms need equal nonzero numbers of points and weights"));
                }
                Ok(SmoothingPrior::Atoms {
                    points: points.clone(),
                    weights: weights.clone(),
                })
            }
            other => {
                let (kind, _) = other.component().expect("non-atom prior");
                SmoothingPrior::from_prior_kind(&kind)
                    .ok_or_else(|| schema(context, "prior has no density form for smoothing"))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Discrete,
    Continuous,
    Smoothing,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub abs_tol: Option<f64>,
    pub z: Option<f64>,
    pub max_se: Option<f64>,
}

/// One scenario as written in a file.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub label: String,
    pub identity: String,
    pub kind: SystemKind,
    pub prior: PriorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<String>>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_ct: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub n_outer: Option<usize>,
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k_inner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_order: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_doubling: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<ToleranceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mmse_form: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// A validated scenario ready to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub kind: IdentityKind,
    pub config: ScenarioConfig,
}

impl Scenario {
    /// The discrete system paths are drawn from, if any (continuous systems
    /// at their configured `m`).
    pub fn path_system(&self) -> Option<DiscreteSystemSpec> {
        match &self.config.system {
            SystemRef::Discrete(d) => Some(d.clone()),
            SystemRef::Continuous(c) => c.discretize(self.config.budgets.m_steps).ok(),
            SystemRef::Smoothing(_) => None,
        }
    }
}

fn parse_expr(context: &str, field: &str, src: &str) -> Result<ChannelExpr, ConfigError> {
    ChannelExpr::parse(src).map_err(|e| schema(context, format!("{field}: {e} in \"{src}\"")))
}

fn spec_errors(context: &str, errors: Vec<immse_core::system::SpecError>) -> ConfigError {
    ConfigError::Identity {
        context: context.to_string(),
        source: errors.into(),
    }
}

impl ScenarioSpec {
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let ctx = format!("scenario '{}'", self.label);
        let ctx = ctx.as_str();
        let kind: IdentityKind = self.identity.parse().map_err(|source| ConfigError::Identity {
            context: ctx.to_string(),
            source,
        })?;

        let forbid = |present: bool, field: &str| {
            if present {
                Err(schema(ctx, format!("field '{field}' does not apply to {:?} systems", self.kind).to_lowercase()))
            } else {
                Ok(())
            }
        };

        let mut m_steps = None;
        let system = match self.kind {
            SystemKind::Discrete => {
                forbid(self.horizon.is_some(), "T")?;
                forbid(self.m.is_some(), "m")?;
                forbid(self.g_ct.is_some(), "g_ct")?;
                let exprs = self.g.as_ref().ok_or_else(|| schema(ctx, "discrete systems need 'g'"))?;
                let g = exprs
                    .iter()
                    .enumerate()
                    .map(|(i, s)| parse_expr(ctx, &format!("g[{}]", i + 1), s))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut spec = DiscreteSystemSpec::new(self.label.clone(), self.prior.message_prior(ctx)?, g);
                if let Some(n) = self.n {
                    spec.n = n;
                }
                spec.clone().validate().map_err(|e| spec_errors(ctx, e))?;
                SystemRef::Discrete(spec)
            }
            SystemKind::Continuous => {
                forbid(self.g.is_some(), "g")?;
                forbid(self.n.is_some(), "n")?;
                let horizon = self.horizon.ok_or_else(|| schema(ctx, "continuous systems need 'T'"))?;
                let src = self.g_ct.as_deref().ok_or_else(|| schema(ctx, "continuous systems need 'g_ct'"))?;
                let g_ct = parse_expr(ctx, "g_ct", src)?;
                let spec =
                    ContinuousSystemSpec::new(self.label.clone(), horizon, self.prior.message_prior(ctx)?, g_ct);
                spec.validate().map_err(|e| spec_errors(ctx, e))?;
                m_steps = self.m;
                SystemRef::Continuous(spec)
            }
            SystemKind::Smoothing => {
                for (present, field) in [
                    (self.g.is_some(), "g"),
                    (self.n.is_some(), "n"),
                    (self.g_ct.is_some(), "g_ct"),
                    (self.horizon.is_some(), "T"),
                    (self.m.is_some(), "m"),
                ] {
                    forbid(present, field)?;
                }
                SystemRef::Smoothing(self.prior.smoothing_prior(ctx)?)
            }
        };

        let parameter = match (self.rho, self.snr, self.t) {
            (Some(r), None, None) => Parameter::Rho(r),
            (None, Some(s), None) => Parameter::Snr(s),
            (None, None, Some(t)) => Parameter::T(t),
            _ => return Err(schema(ctx, "exactly one of 'rho', 'snr' or 't' is required")),
        };

        let mut config = ScenarioConfig::new(self.label.clone(), system, parameter);
        let b = &mut config.budgets;
        if let Some(n) = self.n_outer {
            b.n_outer = n;
        }
        if let Some(k) = self.k_inner {
            b.k_inner = k;
        }
        if let Some(m) = m_steps {
            b.m_steps = m;
        }
        b.h = self.h;
        b.fd_order = match self.fd_order {
            None => None,
            Some(2) => Some(FdOrder::Second),
            Some(4) => Some(FdOrder::Fourth),
            Some(o) => return Err(schema(ctx, format!("fd_order must be 2 or 4 (got {o})"))),
        };
        if let Some(kd) = self.k_doubling {
            b.k_doubling = kd;
        }
        if let Some(tol) = &self.tolerance {
            config.tolerance.abs_tol = tol.abs_tol;
            if let Some(z) = tol.z {
                config.tolerance.z = z;
            }
            if let Some(s) = tol.max_se {
                config.tolerance.max_se = s;
            }
        }
        config.seed = self.seed.unwrap_or(0);
        config.backend = match self.backend.as_deref() {
            None | Some("auto") => Backend::Auto,
            Some("monte-carlo") => Backend::MonteCarlo,
            Some("oracle") => Backend::Oracle,
            Some(o) => return Err(schema(ctx, format!("unknown backend '{o}' (auto, monte-carlo, oracle)"))),
        };
        config.seed_policy = match self.seed_policy.as_deref() {
            None | Some("shared") => SeedPolicy::Shared,
            Some("independent") => SeedPolicy::Independent,
            Some(o) => return Err(schema(ctx, format!("unknown seed_policy '{o}' (shared, independent)"))),
        };
        config.mmse_form = match self.mmse_form.as_deref() {
            None | Some("posterior-variance") => MmseForm::PosteriorVariance,
            Some("residual") => MmseForm::Residual,
            Some(o) => {
                return Err(schema(ctx, format!("unknown mmse_form '{o}' (posterior-variance, residual)")))
            }
        };
        config.validate().map_err(|source| ConfigError::Identity {
            context: ctx.to_string(),
            source,
        })?;
        Ok(Scenario { kind, config })
    }
}

/// A loaded scenario file (or builtin) with its canonical digest.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub source: String,
    pub specs: Vec<ScenarioSpec>,
    pub config_hash: String,
}

impl LoadedConfig {
    pub fn from_value(source: impl Into<String>, value: Value) -> Result<Self, ConfigError> {
        let source = source.into();
        let config_hash = canonical_hash(&value);
        let specs = match value {
            Value::Object(ref map) if map.contains_key("scenarios") => {
                if map.len() != 1 {
                    return Err(schema(&source, "a scenario list must contain only the 'scenarios' key"));
                }
                let list = map["scenarios"].clone();
                let specs: Vec<ScenarioSpec> =
                    serde_json::from_value(list).map_err(|e| schema(&source, e.to_string()))?;
                if specs.is_empty() {
                    return Err(schema(&source, "'scenarios' is empty"));
                }
                specs
            }
            other => vec![serde_json::from_value(other).map_err(|e| schema(&source, e.to_string()))?],
        };
        Ok(Self {
            source,
            specs,
            config_hash,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let value: Value = serde_json::from_str(&text).map_err(|e| schema(&path.display().to_string(), e.to_string()))?;
        Self::from_value(path.display().to_string(), value)
    }

    /// A file path if one exists, otherwise a builtin name.
    pub fn resolve(source: &str) -> Result<Self, ConfigError> {
        let path = Path::new(source);
        if path.is_file() {
            return Self::from_path(path);
        }
        match crate::catalog::lookup(source) {
            Some(value) => Self::from_value(format!("builtin:{source}"), value),
            None => Err(ConfigError::NotFound(source.to_string())),
        }
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>, ConfigError> {
        self.specs.iter().map(ScenarioSpec::to_scenario).collect()
    }
}

/// SHA-256 of the compact JSON with object keys sorted.
pub fn canonical_hash(value: &Value) -> String {
    // serde_json's default map is ordered, so serialization is canonical.
    let text = serde_json::to_string(value).expect("JSON values always serialize");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
