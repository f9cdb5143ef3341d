//! Path sampling with pathwise sensitivities.
//!
//! For a fixed noise realization `(W, Z)` the recursion produces the outputs
//! `Y_i`, the channel values `g_i` and the two pathwise derivatives with
//! respect to `ρ`:
//!
//! - `S_i = dY_i/dρ = g_i + ρ·D_i`
//! - `D_i = dg_i/dρ = Σ_{j<i} ∂g_i/∂y_j · S_j`
//!
//! `D_i` is exactly zero when `g_i` ignores past outputs.

use alloc::vec::Vec;

use crate::rng::{self, Domain};
use crate::system::ValidatedSystem;

/// One realization of the exogenous randomness.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    /// Message draws: one entry for a shared prior, `n` otherwise.
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

impl NoiseDraw {
    /// Deterministic in `(seed, index)`; independent of `ρ`.
    pub fn generate(system: &ValidatedSystem, seed: u64, index: u64) -> Self {
        let mut rng = rng::stream(seed, Domain::Outer, index);
        let component = system.prior().component();
        let w = (0..system.w_dimension()).map(|_| component.sample(&mut rng)).collect();
        let z = (0..system.n()).map(|_| rng::standard_normal(&mut rng)).collect();
        Self { w, z }
    }

    /// Message value seen by step `i` (0-based).
    #[inline]
    pub fn w_at(&self, i: usize) -> f64 {
        if self.w.len() == 1 {
            self.w[0]
        } else {
            self.w[i]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub rho: f64,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Vec<f64>,
    pub s: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimulateError {
    #[error("noise draw has {w} message and {z} noise entries, system needs {need_w} and {need_z}")]
    DimensionMismatch {
        w: usize,
        z: usize,
        need_w: usize,
        need_z: usize,
    },
    #[error("ensemble size must be at least 1")]
    EmptyEnsemble,
}

pub fn sample_path(system: &ValidatedSystem, rho: f64, noise: &NoiseDraw) -> Result<PathSample, SimulateError> {
    let n = system.n();
    if noise.w.len() != system.w_dimension() || noise.z.len() != n {
        return Err(SimulateError::DimensionMismatch {
            w: noise.w.len(),
            z: noise.z.len(),
            need_w: system.w_dimension(),
            need_z: n,
        });
    }
    let mut path = PathSample {
        rho,
        w: noise.w.clone(),
        z: noise.z.clone(),
        y: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
    };
    for i in 0..n {
        let w = noise.w_at(i);
        let history = &path.y[..i];
        let g = system.expr(i).value_at(w, history, 0.0);
        let mut d = 0.0;
        for (j, partial) in &system.step(i).partials {
            d += partial.value_at(w, history, 0.0) * path.s[j - 1];
        }
        path.y.push(rho * g + noise.z[i]);
        path.g.push(g);
        path.d.push(d);
        path.s.push(g + rho * d);
    }
    Ok(path)
}

/// Outputs only, without the sensitivity recursion.
pub(crate) fn outputs_into(system: &ValidatedSystem, rho: f64, noise: &NoiseDraw, y: &mut Vec<f64>) {
    y.clear();
    for i in 0..system.n() {
        let g = system.expr(i).value_at(noise.w_at(i), y, 0.0);
        y.push(rho * g + noise.z[i]);
    }
}

/// `N` paths at a fixed `ρ`, regenerated on demand from `(seed, index)`.
///
/// Nothing is stored per path, so very long horizons stay cheap in memory;
/// [`Ensemble::paths`] materializes everything when that is wanted.
#[derive(Clone, Copy, Debug)]
pub struct Ensemble<'a> {
    pub system: &'a ValidatedSystem,
    pub rho: f64,
    pub len: usize,
    pub seed: u64,
}

impl<'a> Ensemble<'a> {
    pub fn new(system: &'a ValidatedSystem, rho: f64, len: usize, seed: u64) -> Result<Self, SimulateError> {
        if len == 0 {
            return Err(SimulateError::EmptyEnsemble);
        }
        Ok(Self { system, rho, len, seed })
    }

    pub fn noise(&self, index: usize) -> NoiseDraw {
        NoiseDraw::generate(self.system, self.seed, index as u64)
    }

    pub fn path(&self, index: usize) -> PathSample {
        sample_path(self.system, self.rho, &self.noise(index)).expect("noise generated for this system")
    }

    pub fn iter(&self) -> impl Iterator<Item = PathSample> + '_ {
        (0..self.len).map(move |k| self.path(k))
    }

    pub fn paths(&self) -> Vec<PathSample> {
        self.iter().collect()
    }

    /// Same noise, different `ρ`.
    pub fn at_rho(&self, rho: f64) -> Self {
        Self { rho, ..*self }
    }
}
