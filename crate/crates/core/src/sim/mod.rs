//! Lagrangian-mesh MPM simulator and its reverse-mode adjoint.

pub mod adjoint;
pub mod collider;
pub mod gradcheck;
pub mod grid;
pub mod state;
mod step;

use nalgebra::{Isometry3, Vector3};

use crate::constitutive::{ConstitutiveParams, EnergyTerms};
use crate::error::{Error, Result};
use crate::mesh::ClothMesh;
use crate::trajectory::Trajectory;

pub use adjoint::{backward, AdjointTape, Gradients};
pub use collider::{Collider, ColliderShape};
pub use gradcheck::{gradcheck, GradcheckEntry, GradcheckReport};
pub use grid::GridConfig;
pub use state::{init_state, ClothState};
pub use step::{scattered_mass, step};

/// Default spacing between stored checkpoints.
pub const DEFAULT_CHECKPOINT_STRIDE: usize = 10;

/// Vertices held by one gripper and the path they follow.
#[derive(Clone, Debug, PartialEq)]
pub struct GripperConstraint {
    pub vertices: Vec<usize>,
    pub trajectory: Trajectory,
}

/// Everything the stepper needs besides the state and the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub mesh: ClothMesh,
    pub pose: Isometry3<f64>,
    pub grid: GridConfig,
    pub colliders: Vec<Collider>,
    pub grippers: Vec<GripperConstraint>,
    /// Deformed starting positions in world space; the mesh still defines
    /// the rest shape. `None` starts from the posed rest mesh.
    pub initial_positions: Option<Vec<Vector3<f64>>>,
}

impl Scene {
    pub fn new(mesh: ClothMesh, grid: GridConfig) -> Self {
        Self {
            mesh,
            pose: Isometry3::identity(),
            grid,
            colliders: Vec::new(),
            grippers: Vec::new(),
            initial_positions: None,
        }
    }

    /// State at step 0.
    pub fn initial_state(&self, params: &ConstitutiveParams) -> Result<ClothState> {
        let mut s = init_state(&self.mesh, &self.pose, params)?;
        if let Some(p) = &self.initial_positions {
            s.positions = p.clone();
            s.deformation = (0..self.mesh.num_triangles())
                .map(|t| state::deformation_of(&self.mesh, &s.positions, &s.normals[t], t))
                .collect::<Result<_>>()?;
        }
        Ok(s)
    }

    /// Fastest prescribed motion in the scene.
    pub fn kinematic_speed(&self) -> f64 {
        let g = self
            .grippers
            .iter()
            .flat_map(|g| g.trajectory.segment_speeds());
        let c = self
            .colliders
            .iter()
            .filter_map(|c| c.motion.as_ref())
            .flat_map(|m| m.segment_speeds());
        g.chain(c).fold(0.0, f64::max)
    }

    /// Every problem with the scene for the given parameters and horizon.
    pub fn violations(&self, params: &ConstitutiveParams, horizon: usize) -> Vec<String> {
        let mut v = self.grid.violations();
        v.extend(params.violations());
        let n = self.mesh.num_vertices();
        let end = horizon as f64 * self.grid.dt;
        for (gi, g) in self.grippers.iter().enumerate() {
            if g.vertices.is_empty() {
                v.push(format!("gripper {gi} holds no vertices"));
            }
            if let Some(&bad) = g.vertices.iter().find(|&&i| i >= n) {
                v.push(format!("gripper {gi} holds vertex {bad}, but the mesh has {n}"));
            }
            v.extend(g.trajectory.violations().into_iter().map(|s| format!("gripper {gi}: {s}")));
            if g.trajectory.end_time() < end * (1.0 - 1e-9) {
                v.push(format!(
                    "gripper {gi} trajectory ends at {:.6} s before the {end:.6} s horizon",
                    g.trajectory.end_time()
                ));
            }
        }
        if let Some(p) = &self.initial_positions {
            if p.len() != n {
                v.push(format!("{} initial positions for {n} vertices", p.len()));
            } else if let Some(i) = p.iter().position(|x| !self.grid.contains(x)) {
                v.push(format!("initial position of vertex {i} lies outside the domain"));
            }
        }
        for (ci, c) in self.colliders.iter().enumerate() {
            v.extend(c.violations().into_iter().map(|s| format!("collider {ci}: {s}")));
        }
        if v.is_empty() {
            if let Err(e) = self.grid.check_cfl(params, &self.mesh, self.kinematic_speed()) {
                v.push(e.to_string());
            }
        }
        v
    }

    pub fn validate(&self, params: &ConstitutiveParams, horizon: usize) -> Result<()> {
        let v = self.violations(params, horizon);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn controls(&self) -> Vec<Trajectory> {
        self.grippers.iter().map(|g| g.trajectory.clone()).collect()
    }

    /// Copy with the gripper paths replaced.
    pub fn with_controls(&self, controls: &[Trajectory]) -> Self {
        let mut s = self.clone();
        for (g, t) in s.grippers.iter_mut().zip(controls) {
            g.trajectory = t.clone();
        }
        s
    }
}

/// Output of a forward run.
#[derive(Clone, Debug)]
pub struct Rollout {
    /// States at every multiple of the frame stride, plus the last step.
    pub frames: Vec<ClothState>,
    pub tape: AdjointTape,
}

impl Rollout {
    pub fn final_state(&self) -> &ClothState {
        self.frames.last().expect("a rollout always holds the initial frame")
    }

    pub fn frame_at(&self, step: usize) -> Option<&ClothState> {
        self.frames
            .binary_search_by_key(&step, |f| f.step)
            .ok()
            .map(|i| &self.frames[i])
    }
}

/// Runs `horizon` steps from the posed rest state, keeping every
/// `frame_stride`-th state. The tape checkpoints every
/// [`DEFAULT_CHECKPOINT_STRIDE`] steps.
pub fn simulate(scene: &Scene, params: &ConstitutiveParams, horizon: usize, frame_stride: usize) -> Result<Rollout> {
    simulate_with(scene, params, horizon, frame_stride, DEFAULT_CHECKPOINT_STRIDE, |_| {})
}

/// [`simulate`] with an explicit checkpoint stride and a per-step observer.
pub fn simulate_with<F: FnMut(&ClothState)>(
    scene: &Scene,
    params: &ConstitutiveParams,
    horizon: usize,
    frame_stride: usize,
    checkpoint_stride: usize,
    mut observe: F,
) -> Result<Rollout> {
    if frame_stride == 0 || checkpoint_stride == 0 {
        return Err(Error::Domain("strides must be at least 1".into()));
    }
    scene.validate(params, horizon)?;
    let controls = scene.controls();
    let mut state = scene.initial_state(params)?;
    let mut frames = vec![state.clone()];
    let mut checkpoints = vec![state.clone()];
    observe(&state);
    for n in 1..=horizon {
        state = step(scene, &state, params, &controls)?;
        observe(&state);
        if n % frame_stride == 0 || n == horizon {
            frames.push(state.clone());
        }
        if n % checkpoint_stride == 0 && n < horizon {
            checkpoints.push(state.clone());
        }
    }
    Ok(Rollout {
        frames,
        tape: AdjointTape {
            scene: scene.clone(),
            params: params.clone(),
            checkpoints,
            checkpoint_stride,
            horizon,
        },
    })
}

/// Time integral of the volume-weighted elastic energy of every term,
/// `Σ_n W(state_n) dt` over steps `1..=horizon`.
pub fn integrated_energy(
    scene: &Scene,
    params: &ConstitutiveParams,
    horizon: usize,
    material: &crate::constitutive::Material<f64>,
) -> Result<EnergyTerms<f64>> {
    let mut total = EnergyTerms::<f64>::default();
    let dt = scene.grid.dt;
    let mut first = true;
    let mut err = None;
    simulate_with(scene, params, horizon, horizon.max(1), horizon.max(1), |s| {
        if first {
            first = false;
            return;
        }
        if err.is_some() {
            return;
        }
        let e = s.elastic_energy(&scene.mesh, material);
        total.contact += e.contact * dt;
        total.shear += e.shear * dt;
        total.stretch += e.stretch * dt;
        total.area += e.area * dt;
        if !e.total().is_finite() {
            err = Some(Error::Unstable {
                step: s.step,
                reason: "non-finite energy".into(),
            });
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

