//! Adjoint parameter gradients against central differences.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{backward, simulate, Scene};
use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::identify::PARAM_NAMES;

/// Relative parameter perturbation of the central differences.
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckEntry {
    pub parameter: String,
    pub value: f64,
    pub adjoint: f64,
    pub finite_difference: f64,
    /// Error of `value · ∂L/∂p`, relative to the largest such sensitivity
    /// among this parameter's two estimates, floored at 1e-6 of the largest
    /// over all parameters.
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub horizon: usize,
    pub loss: f64,
    pub entries: Vec<GradcheckEntry>,
    pub max_relative_error: f64,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Checks `∂L/∂(E, ν, k, γ)` for `L = Σ w_i · x_i` at the final step, with
/// standard normal weights drawn from `seed`.
pub fn gradcheck(scene: &Scene, params: &ConstitutiveParams, horizon: usize, seed: u64) -> Result<GradcheckReport> {
    if horizon == 0 {
        return Err(Error::Domain("gradcheck needs at least one step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<Vector3<f64>> = (0..scene.mesh.num_vertices())
        .map(|_| Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let loss = |p: &ConstitutiveParams| -> Result<(f64, super::Rollout)> {
        let r = simulate(scene, p, horizon, horizon)?;
        let l = r.final_state().positions.iter().zip(&w).map(|(x, w)| x.dot(w)).sum();
        Ok((l, r))
    };
    let (l0, r) = loss(params)?;
    let g = backward(&r.tape, &BTreeMap::from([(horizon, w.clone())]))?;
    let a = params.identifiable();
    let mut fd = [0.0; 4];
    for i in 0..4 {
        let h = FD_STEP * a[i].abs().max(1e-3);
        let shifted = |s: f64| {
            let mut b = a;
            b[i] += s;
            params.with_identifiable(b)
        };
        fd[i] = (loss(&shifted(h))?.0 - loss(&shifted(-h))?.0) / (2.0 * h);
    }
    let scale = (0..4).map(|i| (a[i] * fd[i]).abs()).fold(0.0, f64::max);
    let entries: Vec<GradcheckEntry> = (0..4)
        .map(|i| {
            let (s_ad, s_fd) = (a[i] * g.params[i], a[i] * fd[i]);
            let denom = s_ad.abs().max(s_fd.abs()).max(1e-6 * scale).max(f64::MIN_POSITIVE);
            GradcheckEntry {
                parameter: PARAM_NAMES[i].to_string(),
                value: a[i],
                adjoint: g.params[i],
                finite_difference: fd[i],
                relative_error: (s_ad - s_fd).abs() / denom,
            }
        })
        .collect();
    let max_relative_error = entries.iter().map(|e| e.relative_error).fold(0.0, f64::max);
    if !max_relative_error.is_finite() {
        return Err(Error::NonFiniteGradient("gradcheck produced a non-finite error".into()));
    }
    Ok(GradcheckReport {
        horizon,
        loss: l0,
        entries,
        max_relative_error,
    })
}
