use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::ad::{Tape, Var};
use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

use super::state::ClothState;
use super::{step, Scene};

/// Checkpointed record of a forward run.
#[derive(Clone, Debug)]
pub struct AdjointTape {
    pub scene: Scene,
    pub params: ConstitutiveParams,
    /// States at steps `0, stride, 2·stride, …` below the horizon.
    pub checkpoints: Vec<ClothState>,
    pub checkpoint_stride: usize,
    pub horizon: usize,
}

/// Gradients of a scalar loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// With respect to (E, ν, k, γ).
    pub params: [f64; 4],
    /// With respect to every waypoint of every gripper.
    pub trajectories: Vec<Vec<Vector3<f64>>>,
}

/// Adjoint of the dynamic part of a state.
struct StateAdjoint {
    positions: Vec<Vector3<f64>>,
    velocities: Vec<Vector3<f64>>,
    affine: Vec<Matrix3<f64>>,
    normals: Vec<Vector3<f64>>,
}

impl StateAdjoint {
    fn zeros(nv: usize, nt: usize) -> Self {
        Self {
            positions: vec![Vector3::zeros(); nv],
            velocities: vec![Vector3::zeros(); nv],
            affine: vec![Matrix3::zeros(); nv],
            normals: vec![Vector3::zeros(); nt],
        }
    }
}

impl AdjointTape {
    /// Replays the segment starting at checkpoint `c`, returning the states at
    /// steps `c·stride ..= min((c+1)·stride, horizon)`.
    fn replay(&self, c: usize) -> Result<Vec<ClothState>> {
        let controls = self.scene.controls();
        let start = c * self.checkpoint_stride;
        let end = (start + self.checkpoint_stride).min(self.horizon);
        let mut out = Vec::with_capacity(end - start + 1);
        out.push(self.checkpoints[c].clone());
        for _ in start..end {
            let next = step(&self.scene, out.last().unwrap(), &self.params, &controls)?;
            out.push(next);
        }
        if let Some(cp) = self.checkpoints.get(c + 1) {
            if !same_dynamics(out.last().unwrap(), cp) {
                return Err(Error::TapeMismatch(format!("replay diverged before step {end}")));
            }
        }
        Ok(out)
    }

    /// Checks that every checkpoint is reproduced bit-identically by replay.
    pub fn verify(&self) -> Result<()> {
        for c in 0..self.checkpoints.len() {
            self.replay(c)?;
        }
        Ok(())
    }
}

fn same_dynamics(a: &ClothState, b: &ClothState) -> bool {
    a.step == b.step
        && a.positions == b.positions
        && a.velocities == b.velocities
        && a.affine == b.affine
        && a.normals == b.normals
}

/// Reverse sweep. `seeds` maps a step index to `∂Loss/∂positions` at that step.
pub fn backward(tape: &AdjointTape, seeds: &BTreeMap<usize, Vec<Vector3<f64>>>) -> Result<Gradients> {
    let nv = tape.scene.mesh.num_vertices();
    let nt = tape.scene.mesh.num_triangles();
    let stride = tape.checkpoint_stride;
    let expected = if tape.horizon == 0 { 1 } else { (tape.horizon - 1) / stride + 1 };
    if tape.checkpoints.len() != expected {
        return Err(Error::TapeMismatch(format!(
            "{} checkpoints for horizon {} at stride {stride}",
            tape.checkpoints.len(),
            tape.horizon
        )));
    }
    for (&n, s) in seeds {
        if n > tape.horizon {
            return Err(Error::TapeMismatch(format!(
                "seed at step {n} beyond horizon {}",
                tape.horizon
            )));
        }
        if s.len() != nv {
            return Err(Error::TapeMismatch(format!(
                "seed at step {n} has {} entries for {nv} vertices",
                s.len()
            )));
        }
    }
    let controls = tape.scene.controls();
    let mut grads = Gradients {
        params: [0.0; 4],
        trajectories: controls.iter().map(|t| vec![Vector3::zeros(); t.len()]).collect(),
    };
    let mut adj = StateAdjoint::zeros(nv, nt);
    add_seed(&mut adj, seeds.get(&tape.horizon));
    let all_zero = seeds.values().all(|s| s.iter().all(|v| *v == Vector3::zeros()));
    if tape.horizon == 0 || all_zero {
        return Ok(grads);
    }

    for c in (0..tape.checkpoints.len()).rev() {
        let states = tape.replay(c)?;
        for local in (0..states.len() - 1).rev() {
            let s = &states[local];
            let n = s.step;
            adj = step_adjoint(tape, s, &controls, &adj, &mut grads)?;
            add_seed(&mut adj, seeds.get(&n));
        }
    }
    let finite = grads.params.iter().all(|g| g.is_finite())
        && grads
            .trajectories
            .iter()
            .flatten()
            .all(|v| v.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(Error::NonFiniteGradient("adjoint sweep".into()));
    }
    Ok(grads)
}

fn add_seed(adj: &mut StateAdjoint, seed: Option<&Vec<Vector3<f64>>>) {
    if let Some(s) = seed {
        for (a, g) in adj.positions.iter_mut().zip(s) {
            *a += g;
        }
    }
}

/// Pulls the adjoint of `state_{n+1}` back to `state_n`, accumulating
/// parameter and waypoint gradients.
fn step_adjoint(
    tape: &AdjointTape,
    s: &ClothState,
    controls: &[Trajectory],
    adj: &StateAdjoint,
    grads: &mut Gradients,
) -> Result<StateAdjoint> {
    let t = Tape::start();
    let leaf3 = |v: &Vector3<f64>| v.map(|x| t.var(x));
    let x: ClothState<Var> = ClothState {
        step: s.step,
        positions: s.positions.iter().map(leaf3).collect(),
        velocities: s.velocities.iter().map(leaf3).collect(),
        affine: s.affine.iter().map(|m| m.map(|x| t.var(x))).collect(),
        normals: s.normals.iter().map(leaf3).collect(),
        deformation: Vec::new(),
        masses: s.masses.clone(),
    };
    let a = tape.params.identifiable().map(|v| t.var(v));
    let params = tape.params.lift::<Var>().with_identifiable(a);
    let ctrl: Vec<Trajectory<Var>> = controls
        .iter()
        .map(|c| Trajectory {
            times: c.times.clone(),
            waypoints: c.waypoints.iter().map(leaf3).collect(),
            max_speed: c.max_speed,
        })
        .collect();
    let next = step(&tape.scene, &x, &params, &ctrl)?;

    let mut out_seeds = Vec::new();
    let mut push3 = |v: &Vector3<Var>, g: &Vector3<f64>| {
        for k in 0..3 {
            if g[k] != 0.0 {
                out_seeds.push((v[k], g[k]));
            }
        }
    };
    for i in 0..next.positions.len() {
        push3(&next.positions[i], &adj.positions[i]);
        push3(&next.velocities[i], &adj.velocities[i]);
    }
    for (v, g) in next.normals.iter().zip(&adj.normals) {
        push3(v, g);
    }
    for (m, g) in next.affine.iter().zip(&adj.affine) {
        for k in 0..9 {
            if g[k] != 0.0 {
                out_seeds.push((m[k], g[k]));
            }
        }
    }
    let g = t.gradient(&out_seeds);
    let wrt3 = |v: &Vector3<Var>| v.map(|x| g.wrt(x));
    for (acc, v) in grads.params.iter_mut().zip(a) {
        *acc += g.wrt(v);
    }
    for (acc, c) in grads.trajectories.iter_mut().zip(&ctrl) {
        for (w, v) in acc.iter_mut().zip(&c.waypoints) {
            *w += wrt3(v);
        }
    }
    Ok(StateAdjoint {
        positions: x.positions.iter().map(wrt3).collect(),
        velocities: x.velocities.iter().map(wrt3).collect(),
        affine: x.affine.iter().map(|m| m.map(|v| g.wrt(v))).collect(),
        normals: x.normals.iter().map(wrt3).collect(),
    })
}
