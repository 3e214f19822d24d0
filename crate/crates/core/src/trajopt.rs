//! Gradient descent on gripper waypoints toward a target cloth shape.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::loss::{chamfer_with_gradient, ChamferMode};
use crate::sim::{backward, simulate, Scene};
pub use crate::trajectory::{project_trajectory, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub points: Vec<Vector3<f64>>,
    /// Stop once the final-state distance drops below this (m).
    pub tolerance: f64,
}

impl TargetSpec {
    pub fn new(points: Vec<Vector3<f64>>, tolerance: f64) -> Result<Self> {
        let t = Self { points, tolerance };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptySet);
        }
        if self.points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::Domain("target contains non-finite points".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Domain("target tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrajoptConfig {
    pub episodes: usize,
    /// Gradient step (m² per unit loss).
    pub step_size: f64,
    /// Largest displacement of a single waypoint per episode (m).
    pub max_step: f64,
    pub horizon: usize,
}

impl TrajoptConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            episodes: 50,
            step_size: 1e-2,
            max_step: 0.01,
            horizon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajoptTermination {
    Episodes,
    Tolerance,
    Error(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub loss: f64,
    pub best_loss: f64,
    pub is_best: bool,
    pub gradient_norm: f64,
    pub step_norm: f64,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrajoptResult {
    /// Best trajectory per gripper.
    pub trajectories: Vec<Trajectory>,
    pub trace: Vec<EpisodeRecord>,
    pub termination: TrajoptTermination,
}

/// Final-state bidirectional Chamfer distance of `controls` to the target.
pub fn final_state_loss(
    scene: &Scene,
    params: &ConstitutiveParams,
    controls: &[Trajectory],
    target: &TargetSpec,
    horizon: usize,
) -> Result<f64> {
    let r = simulate(&scene.with_controls(controls), params, horizon, horizon.max(1))?;
    Ok(chamfer_with_gradient(&target.points, &r.final_state().positions, ChamferMode::Bidirectional)?.0)
}

fn loss_and_gradient(
    scene: &Scene,
    params: &ConstitutiveParams,
    controls: &[Trajectory],
    target: &TargetSpec,
    horizon: usize,
) -> Result<(f64, Vec<Vec<Vector3<f64>>>)> {
    let r = simulate(&scene.with_controls(controls), params, horizon, horizon.max(1))?;
    let (loss, seed) = chamfer_with_gradient(&target.points, &r.final_state().positions, ChamferMode::Bidirectional)?;
    let g = backward(&r.tape, &BTreeMap::from([(horizon, seed)]))?;
    if g.trajectories.iter().flatten().any(|v| !v.iter().all(|x| x.is_finite())) {
        return Err(Error::NonFiniteGradient("trajectory gradient".into()));
    }
    Ok((loss, g.trajectories))
}

/// Projected gradient descent on every waypoint of every gripper, with the
/// step halved whenever a candidate fails to simulate or does not improve.
pub fn optimize_trajectory(
    scene: &Scene,
    params: &ConstitutiveParams,
    initial: &[Trajectory],
    target: &TargetSpec,
    cfg: &TrajoptConfig,
) -> Result<TrajoptResult> {
    target.validate()?;
    if initial.len() != scene.grippers.len() {
        return Err(Error::InfeasibleTrajectory(format!(
            "{} trajectories for {} grippers",
            initial.len(),
            scene.grippers.len()
        )));
    }
    if initial.is_empty() {
        return Err(Error::InfeasibleTrajectory("scene has no grippers".into()));
    }
    for (g, t) in initial.iter().enumerate() {
        let v = t.violations();
        if !v.is_empty() {
            return Err(Error::InfeasibleTrajectory(format!("gripper {g}: {}", v.join("; "))));
        }
    }
    if !(cfg.step_size > 0.0 && cfg.max_step > 0.0) || cfg.episodes == 0 {
        return Err(Error::Domain("episodes, step_size and max_step must be positive".into()));
    }
    scene.with_controls(initial).validate(params, cfg.horizon)?;

    let mut current: Vec<Trajectory> = initial.to_vec();
    let mut best = current.clone();
    let mut trace: Vec<EpisodeRecord> = Vec::new();
    let mut trust = 1.0;
    let mut termination = TrajoptTermination::Episodes;

    for episode in 1..=cfg.episodes {
        let started = Instant::now();
        let (loss, grad) = match loss_and_gradient(scene, params, &current, target, cfg.horizon) {
            Ok(v) => v,
            Err(e) if trace.is_empty() => return Err(e),
            Err(e) => {
                termination = TrajoptTermination::Error(e.to_string());
                break;
            }
        };
        let prev_best = trace.last().map_or(f64::INFINITY, |r| r.best_loss);
        let is_best = loss < prev_best;
        if is_best {
            best = current.clone();
        }
        let gradient_norm = grad.iter().flatten().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        trace.push(EpisodeRecord {
            episode,
            loss,
            best_loss: loss.min(prev_best),
            is_best,
            gradient_norm,
            step_norm: 0.0,
            wall_clock_s: 0.0,
        });
        let last = trace.len() - 1;
        if loss < target.tolerance {
            termination = TrajoptTermination::Tolerance;
            trace[last].wall_clock_s = started.elapsed().as_secs_f64();
            break;
        }
        if episode == cfg.episodes {
            trace[last].wall_clock_s = started.elapsed().as_secs_f64();
            break;
        }

        let mut accepted = None;
        let mut failure = String::new();
        for _ in 0..=crate::identify::MAX_FAILURES {
            let cand: Vec<Trajectory> = current
                .iter()
                .zip(&grad)
                .map(|(t, g)| {
                    let mut t = t.clone();
                    for (w, gw) in t.waypoints.iter_mut().zip(g) {
                        let mut d = -gw * (cfg.step_size * trust);
                        let n = d.norm();
                        if n > cfg.max_step * trust {
                            d *= cfg.max_step * trust / n;
                        }
                        *w += d;
                    }
                    project_trajectory(&t)
                })
                .collect();
            match final_state_loss(scene, params, &cand, target, cfg.horizon) {
                Ok(l) if l <= loss => {
                    accepted = Some(cand);
                    break;
                }
                Ok(_) => failure = "loss increased".into(),
                Err(e) => failure = e.to_string(),
            }
            trust *= 0.5;
        }
        let Some(next) = accepted else {
            trace[last].wall_clock_s = started.elapsed().as_secs_f64();
            termination = TrajoptTermination::Error(format!(
                "no admissible step after {} halvings: {failure}",
                crate::identify::MAX_FAILURES
            ));
            break;
        };
        trace[last].step_norm = next
            .iter()
            .zip(&current)
            .flat_map(|(a, b)| a.waypoints.iter().zip(&b.waypoints).map(|(x, y)| (x - y).norm_squared()))
            .sum::<f64>()
            .sqrt();
        trace[last].wall_clock_s = started.elapsed().as_secs_f64();
        trust = (trust * 1.5).min(1.0);
        current = next;
    }
    Ok(TrajoptResult {
        trajectories: best,
        trace,
        termination,
    })
}
