//! Gradient-based identification of (E, ν, k, γ) from observed point clouds.
//!
//! Iterations work in scaled coordinates `u = (ln E, f(ν), ln k, ln γ)` with
//! `f` the Poisson rescaling, so a single learning rate per coordinate acts
//! relative to the parameter magnitude and ν can never reach 0.5.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{coefficient_of_variation, mean};
use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::loss::{sequence_loss, sequence_loss_and_seeds, ChamferMode, ObservationSequence};
use crate::sim::{backward, simulate, Scene};

pub const PARAM_NAMES: [&str; 4] = ["E", "nu", "k", "gamma"];

/// `1/(0.5 − x) − 2`, strictly increasing on `x < 0.5` with `f(0) = 0`.
pub fn poisson_rescale(x: f64) -> Result<f64> {
    if !(x < 0.5) {
        return Err(Error::Domain(format!("poisson_rescale needs x < 0.5, got {x}")));
    }
    Ok(1.0 / (0.5 - x) - 2.0)
}

/// Inverse of [`poisson_rescale`], defined for `y > −2`.
pub fn poisson_rescale_inv(y: f64) -> Result<f64> {
    if !(y > -2.0) || !y.is_finite() {
        return Err(Error::Domain(format!("poisson_rescale_inv needs y > -2, got {y}")));
    }
    Ok(0.5 - 1.0 / (y + 2.0))
}

fn to_scaled(a: [f64; 4]) -> Result<[f64; 4]> {
    Ok([a[0].ln(), poisson_rescale(a[1])?, a[2].ln(), a[3].ln()])
}

fn from_scaled(u: [f64; 4]) -> Result<[f64; 4]> {
    Ok([u[0].exp(), poisson_rescale_inv(u[1])?, u[2].exp(), u[3].exp()])
}

/// `∂a/∂u` per coordinate.
fn scaled_jacobian(a: [f64; 4]) -> [f64; 4] {
    let h = 0.5 - a[1];
    [a[0], h * h, a[2], a[3]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

/// Default boxes for (E, ν, k, γ).
pub const DEFAULT_BOUNDS: [Bounds; 4] = [
    Bounds::new(10.0, 1e4),
    Bounds::new(0.01, 0.49),
    Bounds::new(1e2, 2e4),
    Bounds::new(10.0, 5e3),
];

#[derive(Clone, Debug)]
pub struct IdentificationConfig {
    /// Starting parameters; `c_F` and `ρ` stay fixed.
    pub initial: ConstitutiveParams,
    /// Gradient step per scaled coordinate.
    pub learning_rate: [f64; 4],
    /// Largest change of any scaled coordinate in one iteration; longer steps
    /// are shortened without changing direction.
    pub max_step: f64,
    pub max_iterations: usize,
    /// Stopping distance in real-world metres.
    pub cd_threshold: f64,
    /// Simulation length per real-world metre.
    pub world_scale: f64,
    pub bounds: [Bounds; 4],
    /// Coordinates that are never updated, in (E, ν, k, γ) order.
    pub frozen: [bool; 4],
    /// Relative best-loss improvement below which a run has plateaued.
    pub plateau_tol: f64,
    pub plateau_window: usize,
    pub mode: ChamferMode,
    pub final_frame_only: bool,
    pub scene: Scene,
    pub observations: ObservationSequence,
}

impl IdentificationConfig {
    pub fn new(scene: Scene, observations: ObservationSequence, initial: ConstitutiveParams) -> Self {
        Self {
            initial,
            learning_rate: [1.0; 4],
            max_step: 0.5,
            max_iterations: 35,
            cd_threshold: 0.015,
            world_scale: 0.5,
            bounds: DEFAULT_BOUNDS,
            frozen: [false; 4],
            plateau_tol: 1e-4,
            plateau_window: 5,
            mode: ChamferMode::OneWay,
            final_frame_only: false,
            scene,
            observations,
        }
    }

    /// Stopping distance in simulation units.
    pub fn scaled_threshold(&self) -> f64 {
        self.cd_threshold * self.world_scale
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = self.settings_violations();
        if let Err(e) = self.observations.validate() {
            v.push(e.to_string());
        }
        v.extend(self.scene.violations(&self.initial, self.observations.last_step()));
        v
    }

    /// Problems with everything except the scene and the observations.
    pub fn settings_violations(&self) -> Vec<String> {
        let mut v = self.initial.violations();
        for (i, b) in self.bounds.iter().enumerate() {
            let name = PARAM_NAMES[i];
            if !(b.lo < b.hi) {
                v.push(format!("bounds for {name} need lo < hi, got [{}, {}]", b.lo, b.hi));
            }
            if i != 1 && !(b.lo > 0.0) {
                v.push(format!("bounds for {name} must be positive"));
            }
            if !(self.learning_rate[i] > 0.0 && self.learning_rate[i].is_finite()) {
                v.push(format!("learning rate for {name} must be positive"));
            }
        }
        if !(self.bounds[1].lo >= 0.0 && self.bounds[1].hi < 0.5) {
            v.push("bounds for nu must lie in [0, 0.5)".into());
        }
        let a = self.initial.identifiable();
        for i in 0..4 {
            if !(a[i] >= self.bounds[i].lo && a[i] <= self.bounds[i].hi) {
                v.push(format!("initial {} = {} lies outside its bounds", PARAM_NAMES[i], a[i]));
            }
        }
        if !(self.max_step > 0.0) {
            v.push("max_step must be positive".into());
        }
        if self.max_iterations == 0 {
            v.push("max_iterations must be at least 1".into());
        }
        if !(self.cd_threshold >= 0.0) {
            v.push("cd_threshold must be non-negative".into());
        }
        if !(self.world_scale > 0.0) {
            v.push("world_scale must be positive".into());
        }
        if self.plateau_window == 0 {
            v.push("plateau_window must be at least 1".into());
        }
        v
    }

    fn project(&self, a: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| a[i].clamp(self.bounds[i].lo, self.bounds[i].hi))
    }

    fn objective(&self) -> ObservationSequence {
        if self.final_frame_only {
            self.observations.final_only()
        } else {
            self.observations.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIterations,
    CdThreshold,
    Plateau,
    Error(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// (E, ν, k, γ) evaluated at this iteration.
    pub params: [f64; 4],
    pub loss: f64,
    pub gradient: [f64; 4],
    /// Euclidean length of the accepted step in scaled coordinates.
    pub step_norm: f64,
    pub best_loss: f64,
    pub is_best: bool,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentificationRun {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub best_index: usize,
}

impl IdentificationRun {
    pub fn best(&self) -> &IterationRecord {
        &self.records[self.best_index]
    }

    pub fn best_params(&self) -> [f64; 4] {
        self.best().params
    }
}

/// Frame stride that hits every observed step.
pub fn observation_stride(obs: &ObservationSequence) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    obs.steps().into_iter().fold(0, gcd).max(1)
}

struct Evaluation {
    loss: f64,
    gradient: [f64; 4],
}

fn evaluate(cfg: &IdentificationConfig, obs: &ObservationSequence, params: &ConstitutiveParams) -> Result<Evaluation> {
    let horizon = obs.last_step();
    let rollout = simulate(&cfg.scene, params, horizon, observation_stride(obs))?;
    let (loss, seeds) = sequence_loss_and_seeds(&rollout.frames, obs, cfg.mode)?;
    let g = backward(&rollout.tape, &seeds)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteGradient(format!("loss is {loss}")));
    }
    if g.params.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient(format!("{:?}", g.params)));
    }
    Ok(Evaluation { loss, gradient: g.params })
}

fn loss_at(cfg: &IdentificationConfig, obs: &ObservationSequence, params: &ConstitutiveParams) -> Result<f64> {
    let rollout = simulate(&cfg.scene, params, obs.last_step(), observation_stride(obs))?;
    sequence_loss(&rollout.frames, obs, cfg.mode)
}

/// Number of step halvings tolerated before a run is abandoned.
pub const MAX_FAILURES: usize = 5;

/// Runs the identification loop.
///
/// Each iteration evaluates the loss and its gradient, then takes a projected
/// gradient step in scaled coordinates. A candidate that fails to simulate,
/// or whose loss is higher, has its step halved; after [`MAX_FAILURES`]
/// halvings the run ends with an error termination.
pub fn identify(cfg: &IdentificationConfig) -> Result<IdentificationRun> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    let obs = cfg.objective();
    let threshold = cfg.scaled_threshold();
    let mut params = cfg.initial.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best_index = 0;
    let mut trust = 1.0;
    let mut termination = Termination::MaxIterations;
    let mut pending: Option<f64> = None;

    for iteration in 1..=cfg.max_iterations {
        let started = Instant::now();
        let eval = match evaluate(cfg, &obs, &params) {
            Ok(e) => e,
            Err(e) if records.is_empty() => return Err(e),
            Err(e) => {
                termination = Termination::Error(e.to_string());
                break;
            }
        };
        debug_assert!(pending.is_none_or(|l| l == eval.loss));
        let a = params.identifiable();
        let is_best = records.is_empty() || eval.loss < records[best_index].loss;
        if is_best {
            best_index = records.len();
        }
        let best_loss = if is_best { eval.loss } else { records[best_index].loss };
        records.push(IterationRecord {
            iteration,
            params: a,
            loss: eval.loss,
            gradient: eval.gradient,
            step_norm: 0.0,
            best_loss,
            is_best,
            wall_clock_s: 0.0,
        });
        let last = records.len() - 1;

        if eval.loss < threshold {
            termination = Termination::CdThreshold;
            records[last].wall_clock_s = started.elapsed().as_secs_f64();
            break;
        }
        if records.len() > cfg.plateau_window {
            let old = records[records.len() - 1 - cfg.plateau_window].best_loss;
            if (old - best_loss) <= cfg.plateau_tol * old.abs() {
                termination = Termination::Plateau;
                records[last].wall_clock_s = started.elapsed().as_secs_f64();
                break;
            }
        }
        if iteration == cfg.max_iterations {
            records[last].wall_clock_s = started.elapsed().as_secs_f64();
            break;
        }

        // Projected step with halving on failure or increase.
        let u = to_scaled(a)?;
        let jac = scaled_jacobian(a);
        let raw: [f64; 4] = std::array::from_fn(|i| {
            if cfg.frozen[i] {
                0.0
            } else {
                -cfg.learning_rate[i] * eval.gradient[i] * jac[i]
            }
        });
        let largest = raw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let shrink = if largest > cfg.max_step { cfg.max_step / largest } else { 1.0 };
        let mut accepted = None;
        let mut failure = None;
        for _ in 0..=MAX_FAILURES {
            let step: [f64; 4] = std::array::from_fn(|i| raw[i] * trust * shrink);
            // Coordinates that do not move keep their exact value rather than
            // a round trip through the scaled map.
            let cand = from_scaled(std::array::from_fn(|i| u[i] + step[i]))
                .map(|c| cfg.project(std::array::from_fn(|i| if step[i] == 0.0 { a[i] } else { c[i] })));
            let outcome = cand.and_then(|c| {
                let p = params.with_identifiable(c);
                cfg.scene.validate(&p, obs.last_step())?;
                loss_at(cfg, &obs, &p).map(|l| (p, l))
            });
            match outcome {
                Ok((p, l)) if l <= eval.loss => {
                    accepted = Some((p, l));
                    break;
                }
                Ok(_) => failure = Some("loss increased".to_string()),
                Err(e) => failure = Some(e.to_string()),
            }
            trust *= 0.5;
        }
        let Some((p, l)) = accepted else {
            records[last].wall_clock_s = started.elapsed().as_secs_f64();
            termination = Termination::Error(format!(
                "no admissible step after {MAX_FAILURES} halvings: {}",
                failure.unwrap_or_default()
            ));
            break;
        };
        let moved = to_scaled(p.identifiable())?;
        records[last].step_norm = (0..4).map(|i| (moved[i] - u[i]).powi(2)).sum::<f64>().sqrt();
        records[last].wall_clock_s = started.elapsed().as_secs_f64();
        trust = (trust * 1.5).min(1.0);
        params = p;
        pending = Some(l);
    }
    Ok(IdentificationRun {
        records,
        termination,
        best_index,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamStats {
    pub mean: [f64; 4],
    /// Percent; `None` when undefined (fewer than two runs or zero mean).
    pub cov: [Option<f64>; 4],
}

#[derive(Clone, Debug)]
pub struct MultiStart {
    pub initial: Vec<[f64; 4]>,
    pub runs: Vec<Result<IdentificationRun, String>>,
    /// Over the best parameters of the successful runs.
    pub stats: ParamStats,
}

/// Identification from `starts` initial guesses. The first is the configured
/// one; the others are drawn uniformly in scaled coordinates inside the
/// bounds of the non-frozen parameters.
pub fn multi_start_identify(cfg: &IdentificationConfig, starts: usize, seed: u64) -> Result<MultiStart> {
    if starts == 0 {
        return Err(Error::Domain("starts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a0 = cfg.initial.identifiable();
    let mut initial = vec![a0];
    for _ in 1..starts {
        let mut a = a0;
        for i in 0..4 {
            if cfg.frozen[i] {
                continue;
            }
            let b = cfg.bounds[i];
            let lo = to_scaled_one(i, b.lo)?;
            let hi = to_scaled_one(i, b.hi)?;
            a[i] = from_scaled_one(i, rng.random_range(lo..hi))?.clamp(b.lo, b.hi);
        }
        initial.push(a);
    }
    let runs: Vec<_> = initial
        .par_iter()
        .map(|a| {
            let mut c = cfg.clone();
            c.initial = cfg.initial.with_identifiable(*a);
            identify(&c).map_err(|e| e.to_string())
        })
        .collect();
    let best: Vec<[f64; 4]> = runs.iter().filter_map(|r| r.as_ref().ok()).map(|r| r.best_params()).collect();
    let column = |i: usize| best.iter().map(|a| a[i]).collect::<Vec<_>>();
    let stats = ParamStats {
        mean: std::array::from_fn(|i| mean(&column(i)).unwrap_or(f64::NAN)),
        cov: std::array::from_fn(|i| coefficient_of_variation(&column(i)).ok()),
    };
    Ok(MultiStart { initial, runs, stats })
}

fn to_scaled_one(i: usize, x: f64) -> Result<f64> {
    if i == 1 { poisson_rescale(x) } else { Ok(x.ln()) }
}

fn from_scaled_one(i: usize, u: f64) -> Result<f64> {
    if i == 1 { poisson_rescale_inv(u) } else { Ok(u.exp()) }
}
