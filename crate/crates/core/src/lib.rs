//! Numerical verification of information–estimation identities for scalar
//! Gaussian channels, including channels with feedback and output memory.
//!
//! The crate is `no_std` (it needs `alloc`). Modules, bottom-up:
//!
//! - [`expr`]: channel-function expressions with symbolic derivatives.
//! - [`system`]: discrete and continuous-time system specifications.
//! - [`rng`]: counter-keyed random streams (common random numbers).
//! - [`simulate`]: path sampling with pathwise sensitivities.
//! - [`estimate`]: posterior expectations, mutual information, MMSE and
//!   correction terms, quadrature, scalar entropy and Fisher information.
//! - [`oracle`]: exact moments for linear-Gaussian systems.
//! - [`identity`]: finite-difference derivatives and identity verifiers.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod estimate;
pub mod expr;
pub mod identity;
pub(crate) mod math;
pub mod oracle;
pub mod rng;
pub mod simulate;
pub mod system;

pub use estimate::{
    density::{DeBruijnModel, ScalarDensity, SmoothingPrior},
    quadrature::QuadratureRule,
    Estimate, MiEstimate, MmseForm, SnisEstimate,
};
pub use expr::{Binding, ChannelExpr, Var};
pub use identity::{IdentityKind, IdentityReport, ScenarioConfig};
pub use oracle::{JointGaussian, LinearGaussianModel};
pub use simulate::{Ensemble, NoiseDraw, PathSample};
pub use system::{
    ContinuousSystemSpec, DiscreteSystemSpec, LinearCoefficients, MessagePrior, PriorKind,
    ValidatedSystem,
};
