use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use super::read_text;
use super::tables::read_trajectory_csv;
use crate::analysis::{Action, DEFAULT_LEVELS};
use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::identify::{Bounds, IdentificationConfig};
use crate::loss::{ChamferMode, ObservationFrame, ObservationSequence};
use crate::mesh::ClothMesh;
use crate::sim::{Collider, ColliderShape, GridConfig, GripperConstraint, Scene};
use crate::trajectory::Trajectory;
use crate::trajopt::{TargetSpec, TrajoptConfig};

type V3 = [f64; 3];

pub const MAX_RECTANGLE_VERTICES: usize = 1_000_000;

/// Scene and run settings as written in a TOML file. Lengths are metres,
/// times seconds, stiffnesses pascals and densities kg/m³.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Steps to simulate; derived from `duration` when absent.
    pub horizon: Option<usize>,
    pub duration: Option<f64>,
    #[serde(default = "one")]
    pub frames_stride: usize,
    #[serde(default)]
    pub seed: u64,
    /// Simulation metres per real-world metre.
    #[serde(default = "half")]
    pub world_scale: f64,
    pub mesh: MeshSection,
    #[serde(default)]
    pub pose: PoseSection,
    pub grid: GridSection,
    pub material: ConstitutiveParams,
    #[serde(default)]
    pub colliders: Vec<ColliderSection>,
    #[serde(default)]
    pub grippers: Vec<GripperSection>,
    pub initial: Option<InitialSection>,
    pub observe: Option<ObserveSection>,
    pub identify: Option<IdentifySection>,
    pub trajopt: Option<TrajoptSection>,
    pub ablation: Option<AblationSection>,
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

fn default_thickness() -> f64 {
    1e-3
}

fn default_speed() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSection {
    /// OBJ file, relative to the config file.
    pub path: Option<PathBuf>,
    pub rectangle: Option<RectangleSection>,
    #[serde(default = "default_thickness")]
    pub thickness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangleSection {
    pub origin: V3,
    pub u: V3,
    pub v: V3,
    /// Vertex counts along `u` and `v`.
    pub nu: usize,
    pub nv: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseSection {
    #[serde(default)]
    pub translation: V3,
    /// Axis times angle (rad).
    #[serde(default)]
    pub rotation: V3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub min: V3,
    pub max: V3,
    pub resolution: usize,
    /// Step size; the stable step for `material` when absent.
    pub dt: Option<f64>,
    /// Kinematic speed budgeted when `dt` is derived (m/s).
    #[serde(default = "default_speed")]
    pub extra_speed: f64,
    pub gravity: Option<V3>,
    pub damping: Option<f64>,
    pub cfl_factor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColliderSection {
    /// `ground`, `half_space`, `sphere` or `box`.
    pub kind: String,
    #[serde(default)]
    pub friction: f64,
    pub height: Option<f64>,
    pub point: Option<V3>,
    pub normal: Option<V3>,
    pub center: Option<V3>,
    pub radius: Option<f64>,
    pub min: Option<V3>,
    pub max: Option<V3>,
    /// Scripted translation, evenly timed over the horizon.
    pub motion: Option<Vec<V3>>,
    #[serde(default = "default_speed")]
    pub max_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperSection {
    pub vertices: Option<Vec<usize>>,
    /// `x_min`, `x_max`, `y_min`, `y_max`, `z_min` or `z_max` of the rest mesh.
    pub edge: Option<String>,
    /// One gripper per selected vertex, all sharing the path.
    #[serde(default)]
    pub per_vertex: bool,
    /// Displacements; evenly timed over the horizon unless `times` is given.
    pub waypoints: Option<Vec<V3>>,
    pub times: Option<Vec<f64>>,
    /// Trajectory CSV; rows whose gripper column equals this entry's index.
    pub trajectory: Option<PathBuf>,
    #[serde(default = "default_speed")]
    pub max_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialSection {
    /// Per-axis factors applied about the posed mesh centroid.
    pub stretch: V3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserveSection {
    pub camera: Option<V3>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Steps between observed frames; the horizon alone when absent.
    pub every: Option<usize>,
    /// Observe vertices rather than surface samples.
    #[serde(default)]
    pub vertices: bool,
}

fn default_samples() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifySection {
    /// Manifest file or directory holding `manifest.toml`.
    pub observations: Option<PathBuf>,
    /// Starting (E, ν, k, γ); `initial_scale` times the material otherwise.
    pub initial: Option<[f64; 4]>,
    pub initial_scale: Option<f64>,
    pub learning_rate: Option<[f64; 4]>,
    pub max_step: Option<f64>,
    pub max_iterations: Option<usize>,
    /// Real-world metres.
    pub cd_threshold: Option<f64>,
    pub bounds: Option<[[f64; 2]; 4]>,
    pub frozen: Option<[bool; 4]>,
    pub plateau_tol: Option<f64>,
    pub plateau_window: Option<usize>,
    pub mode: Option<String>,
    #[serde(default)]
    pub final_frame_only: bool,
    #[serde(default = "one")]
    pub starts: usize,
    /// Per-frame cap on observed points.
    pub max_points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajoptSection {
    /// PLY or OBJ point set.
    pub target: Option<PathBuf>,
    #[serde(default)]
    pub tolerance: f64,
    pub episodes: Option<usize>,
    pub step_size: Option<f64>,
    pub max_step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSection {
    pub name: Option<String>,
    pub levels: Option<Vec<f64>>,
    /// Further scene configs swept alongside this one.
    #[serde(default)]
    pub actions: Vec<PathBuf>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

impl SceneConfig {
    /// Parses TOML, rejecting every unknown key at once.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let to_parse = |e: toml::de::Error| {
            let line = e.span().map_or(1, |s| line_of(text, s.start));
            Error::parse(path, line, e.message().to_string())
        };
        let de = toml::Deserializer::parse(text).map_err(to_parse)?;
        let mut unknown = Vec::new();
        let cfg: Self = serde_ignored::deserialize(de, |p| unknown.push(format!("unknown key '{p}'"))).map_err(to_parse)?;
        if !unknown.is_empty() {
            return Err(Error::Config(unknown));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }
}

/// A loaded config with every referenced file read and every object built.
#[derive(Clone, Debug)]
pub struct Setup {
    pub config: SceneConfig,
    pub source: String,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
    pub scene: Scene,
    pub params: ConstitutiveParams,
    pub horizon: usize,
}

fn v3(a: V3) -> Vector3<f64> {
    Vector3::from(a)
}

fn need<T: Copy>(v: &mut Vec<String>, what: &str, x: Option<T>) -> T
where
    T: Default,
{
    x.unwrap_or_else(|| {
        v.push(format!("{what} is required"));
        T::default()
    })
}

fn edge_vertices(mesh: &ClothMesh, edge: &str) -> Option<Vec<usize>> {
    let (axis, max) = match edge {
        "x_min" => (0, false),
        "x_max" => (0, true),
        "y_min" => (1, false),
        "y_max" => (1, true),
        "z_min" => (2, false),
        "z_max" => (2, true),
        _ => return None,
    };
    let xs = mesh.rest_vertices.iter().map(|p| p[axis]);
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let target = if max { hi } else { lo };
    let tol = 1e-9 * (hi - lo).max(1.0);
    Some(
        mesh.rest_vertices
            .iter()
            .enumerate()
            .filter(|(_, p)| (p[axis] - target).abs() <= tol)
            .map(|(i, _)| i)
            .collect(),
    )
}

impl Setup {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, path, &base)
    }

    pub fn from_text(text: &str, path: &Path, base_dir: &Path) -> Result<Self> {
        let config = SceneConfig::parse(text, path)?;
        Self::build(config, text.to_string(), base_dir)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    fn build(config: SceneConfig, source: String, base_dir: &Path) -> Result<Self> {
        let mut v = Vec::new();
        let c = &config;
        let params = c.material;
        v.extend(params.violations().into_iter().map(|s| format!("material: {s}")));
        if !(c.world_scale > 0.0 && c.world_scale.is_finite()) {
            v.push(format!("world_scale must be positive, got {}", c.world_scale));
        }
        if c.frames_stride == 0 {
            v.push("frames_stride must be at least 1".into());
        }
        if c.horizon.is_some() == c.duration.is_some() {
            v.push("exactly one of horizon and duration is required".into());
        }
        check_paths(c, base_dir, &mut v);

        let mesh = match (&c.mesh.path, &c.mesh.rectangle) {
            (Some(p), None) => {
                let p = base_dir.join(p);
                if p.is_file() {
                    Some(super::load_mesh(&p, c.mesh.thickness)?)
                } else {
                    None
                }
            }
            (None, Some(r)) if r.nu.saturating_mul(r.nv) > MAX_RECTANGLE_VERTICES => {
                v.push(format!("mesh.rectangle: {} x {} vertices exceeds {MAX_RECTANGLE_VERTICES}", r.nu, r.nv));
                None
            }
            (None, Some(r)) => {
                match ClothMesh::rectangle(v3(r.origin), v3(r.u), v3(r.v), r.nu, r.nv, c.mesh.thickness) {
                    Ok(m) => Some(m),
                    Err(e) => {
                        v.push(format!("mesh.rectangle: {e}"));
                        None
                    }
                }
            }
            _ => {
                v.push("mesh needs exactly one of path and rectangle".into());
                None
            }
        };

        let g = &c.grid;
        let mut grid = GridConfig::new(v3(g.min), v3(g.max), g.resolution.max(1));
        if g.resolution == 0 {
            v.push("grid.resolution must be at least 1".into());
        }
        if let Some(x) = g.gravity {
            grid.gravity = v3(x);
        }
        if let Some(x) = g.damping {
            grid.damping = x;
        }
        if let Some(x) = g.cfl_factor {
            grid.cfl_factor = x;
        }
        if !(g.extra_speed >= 0.0 && g.extra_speed.is_finite()) {
            v.push(format!("grid.extra_speed must be non-negative, got {}", g.extra_speed));
        }
        // Without a mesh the remaining sections are still checked against a
        // stand-in; a violation has already been recorded.
        let mesh = match mesh {
            Some(m) => m,
            None => ClothMesh::rectangle(v3(g.min), Vector3::x() * 1e-2, Vector3::y() * 1e-2, 2, 2, 1e-3)?,
        };
        grid.dt = match g.dt {
            Some(dt) => dt,
            None if params.violations().is_empty() && grid.violations().len() <= 1 => {
                grid.cfl_limit(&params, &mesh, g.extra_speed.max(0.0))?
            }
            None => 0.0,
        };
        let horizon = match (c.horizon, c.duration) {
            (Some(h), _) => h,
            (None, Some(d)) if grid.dt > 0.0 && d > 0.0 && d.is_finite() => (d / grid.dt).ceil() as usize,
            (None, Some(d)) => {
                v.push(format!("duration must be positive, got {d}"));
                0
            }
            _ => 0,
        };
        if horizon == 0 && c.horizon == Some(0) {
            v.push("horizon must be at least 1".into());
        }
        let duration = horizon as f64 * grid.dt;

        let mut scene = Scene::new(mesh, grid);
        scene.pose = Isometry3::new(v3(c.pose.translation), v3(c.pose.rotation));
        for (i, s) in c.colliders.iter().enumerate() {
            if let Some(col) = build_collider(s, duration, &mut v, i) {
                scene.colliders.push(col);
            }
        }
        let csv = load_csv_trajectories(c, base_dir, &mut v);
        for (i, s) in c.grippers.iter().enumerate() {
            scene.grippers.extend(build_grippers(s, i, &scene.mesh, duration, csv.get(&i), &mut v));
        }
        if let Some(init) = &c.initial {
            if init.stretch.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                v.push("initial.stretch factors must be positive".into());
            } else {
                let posed: Vec<_> = scene
                    .mesh
                    .rest_vertices
                    .iter()
                    .map(|p| scene.pose.transform_point(&(*p).into()).coords)
                    .collect();
                let centroid = posed.iter().sum::<Vector3<f64>>() / posed.len() as f64;
                let s = v3(init.stretch);
                scene.initial_positions = Some(posed.iter().map(|p| centroid + (p - centroid).component_mul(&s)).collect());
            }
        }
        check_sections(c, &mut v);
        if let Some(s) = &c.identify {
            if s.mode.as_ref().is_none_or(|m| m.parse::<ChamferMode>().is_ok()) {
                let probe = ObservationSequence::new(vec![ObservationFrame::new(horizon.max(1), vec![Vector3::zeros()])])?;
                let cfg = identify_config(s, c.world_scale, &scene, &params, probe)?;
                v.extend(cfg.settings_violations().into_iter().map(|m| format!("identify: {m}")));
            }
        }
        if v.is_empty() {
            v.extend(scene.violations(&params, horizon));
        }
        if !v.is_empty() {
            return Err(Error::Config(v));
        }
        Ok(Self {
            config,
            source,
            base_dir: base_dir.to_path_buf(),
            scene,
            params,
            horizon,
        })
    }

    /// Identification settings with the given observations.
    pub fn identification_config(&self, observations: ObservationSequence) -> Result<IdentificationConfig> {
        let s = self
            .config
            .identify
            .as_ref()
            .ok_or_else(|| Error::Config(vec!["[identify] section is required".into()]))?;
        identify_config(s, self.config.world_scale, &self.scene, &self.params, observations)
    }

    pub fn identify_starts(&self) -> usize {
        self.config.identify.as_ref().map_or(1, |s| s.starts)
    }

    pub fn observations_path(&self) -> Option<PathBuf> {
        self.config
            .identify
            .as_ref()
            .and_then(|s| s.observations.as_ref())
            .map(|p| self.resolve(p))
    }

    pub fn trajopt_config(&self) -> TrajoptConfig {
        let mut cfg = TrajoptConfig::new(self.horizon);
        if let Some(s) = &self.config.trajopt {
            if let Some(x) = s.episodes {
                cfg.episodes = x;
            }
            if let Some(x) = s.step_size {
                cfg.step_size = x;
            }
            if let Some(x) = s.max_step {
                cfg.max_step = x;
            }
        }
        cfg
    }

    /// Target points named by `[trajopt] target`.
    pub fn trajopt_target(&self) -> Result<TargetSpec> {
        let s = self.config.trajopt.as_ref().ok_or_else(|| Error::Config(vec!["[trajopt] section is required".into()]))?;
        let p = s.target.as_ref().ok_or_else(|| Error::Config(vec!["trajopt.target is required".into()]))?;
        let p = self.resolve(p);
        let points = load_points(&p)?;
        TargetSpec::new(points, s.tolerance)
    }

    pub fn action(&self) -> Action {
        Action {
            name: self
                .config
                .ablation
                .as_ref()
                .and_then(|a| a.name.clone())
                .unwrap_or_else(|| "action".into()),
            scene: self.scene.clone(),
            horizon: self.horizon,
        }
    }

    /// This scene followed by every extra action config.
    pub fn actions(&self) -> Result<Vec<Action>> {
        let mut out = vec![self.action()];
        if let Some(a) = &self.config.ablation {
            for p in &a.actions {
                out.push(Setup::load(&self.resolve(p))?.action());
            }
        }
        Ok(out)
    }

    pub fn ablation_levels(&self) -> Vec<f64> {
        self.config
            .ablation
            .as_ref()
            .and_then(|a| a.levels.clone())
            .unwrap_or_else(|| DEFAULT_LEVELS.to_vec())
    }

    pub fn observe(&self) -> ObserveSection {
        self.config.observe.clone().unwrap_or(ObserveSection {
            camera: None,
            noise: 0.0,
            dropout: 0.0,
            samples: default_samples(),
            every: None,
            vertices: false,
        })
    }
}

/// Point set from a PLY file, or the vertices of an OBJ file.
pub fn load_points(path: &Path) -> Result<Vec<Vector3<f64>>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => Ok(super::load_mesh(path, default_thickness())?.rest_vertices),
        _ => super::load_ply(path),
    }
}

fn identify_config(
    s: &IdentifySection,
    world_scale: f64,
    scene: &Scene,
    params: &ConstitutiveParams,
    observations: ObservationSequence,
) -> Result<IdentificationConfig> {
    let initial = match (s.initial, s.initial_scale) {
        (Some(a), _) => params.with_identifiable(a),
        (None, Some(k)) => params.with_identifiable(params.identifiable().map(|x| x * k)),
        (None, None) => *params,
    };
    let observations = match s.max_points {
        Some(n) => observations.downsampled(n),
        None => observations,
    };
    let mut cfg = IdentificationConfig::new(scene.clone(), observations, initial);
    cfg.world_scale = world_scale;
    if let Some(x) = s.learning_rate {
        cfg.learning_rate = x;
    }
    if let Some(x) = s.max_step {
        cfg.max_step = x;
    }
    if let Some(x) = s.max_iterations {
        cfg.max_iterations = x;
    }
    if let Some(x) = s.cd_threshold {
        cfg.cd_threshold = x;
    }
    if let Some(b) = s.bounds {
        cfg.bounds = b.map(|[lo, hi]| Bounds::new(lo, hi));
    }
    if let Some(x) = s.frozen {
        cfg.frozen = x;
    }
    if let Some(x) = s.plateau_tol {
        cfg.plateau_tol = x;
    }
    if let Some(x) = s.plateau_window {
        cfg.plateau_window = x;
    }
    if let Some(m) = &s.mode {
        cfg.mode = m.parse()?;
    }
    cfg.final_frame_only = s.final_frame_only;
    Ok(cfg)
}

fn check_paths(c: &SceneConfig, base: &Path, v: &mut Vec<String>) {
    let mut check = |what: &str, p: &Path, dir_ok: bool| {
        let full = base.join(p);
        if !(full.is_file() || dir_ok && full.is_dir()) {
            v.push(format!("{what}: cannot find '{}'", full.display()));
        }
    };
    if let Some(p) = &c.mesh.path {
        check("mesh.path", p, false);
    }
    for (i, g) in c.grippers.iter().enumerate() {
        if let Some(p) = &g.trajectory {
            check(&format!("grippers[{i}].trajectory"), p, false);
        }
    }
    if let Some(p) = c.identify.as_ref().and_then(|s| s.observations.as_ref()) {
        check("identify.observations", p, true);
    }
    if let Some(p) = c.trajopt.as_ref().and_then(|s| s.target.as_ref()) {
        check("trajopt.target", p, false);
    }
    if let Some(a) = &c.ablation {
        for (i, p) in a.actions.iter().enumerate() {
            check(&format!("ablation.actions[{i}]"), p, false);
        }
    }
}

fn check_sections(c: &SceneConfig, v: &mut Vec<String>) {
    if let Some(o) = &c.observe {
        if !(o.noise >= 0.0 && o.noise.is_finite()) {
            v.push(format!("observe.noise must be non-negative, got {}", o.noise));
        }
        if !(0.0..1.0).contains(&o.dropout) {
            v.push(format!("observe.dropout must lie in [0, 1), got {}", o.dropout));
        }
        if o.samples == 0 {
            v.push("observe.samples must be at least 1".into());
        }
        if o.every == Some(0) {
            v.push("observe.every must be at least 1".into());
        }
    }
    if let Some(s) = &c.identify {
        if let Some(m) = &s.mode {
            if m.parse::<ChamferMode>().is_err() {
                v.push(format!("identify.mode must be one_way or bidirectional, got '{m}'"));
            }
        }
        if s.starts == 0 {
            v.push("identify.starts must be at least 1".into());
        }
        if let Some(k) = s.initial_scale {
            if !(k > 0.0 && k.is_finite()) {
                v.push(format!("identify.initial_scale must be positive, got {k}"));
            }
        }
        if s.max_points == Some(0) {
            v.push("identify.max_points must be at least 1".into());
        }
    }
    if let Some(s) = &c.trajopt {
        if !(s.tolerance >= 0.0) {
            v.push(format!("trajopt.tolerance must be non-negative, got {}", s.tolerance));
        }
        if s.episodes == Some(0) {
            v.push("trajopt.episodes must be at least 1".into());
        }
        for (what, x) in [("step_size", s.step_size), ("max_step", s.max_step)] {
            if let Some(x) = x {
                if !(x > 0.0 && x.is_finite()) {
                    v.push(format!("trajopt.{what} must be positive, got {x}"));
                }
            }
        }
    }
    if let Some(a) = &c.ablation {
        if let Some(l) = &a.levels {
            if l.is_empty() || l.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                v.push("ablation.levels must be a non-empty list of positive factors".into());
            }
        }
    }
}

fn build_collider(s: &ColliderSection, duration: f64, v: &mut Vec<String>, i: usize) -> Option<Collider> {
    let before = v.len();
    let mut req = |what: &str, x: Option<V3>| need(v, &format!("colliders[{i}].{what}"), x);
    let shape = match s.kind.as_str() {
        "ground" => ColliderShape::HalfSpace {
            point: Vector3::new(0.0, 0.0, s.height.unwrap_or(0.0)),
            normal: Vector3::z(),
        },
        "half_space" => ColliderShape::HalfSpace {
            point: v3(req("point", s.point)),
            normal: v3(req("normal", s.normal)),
        },
        "sphere" => {
            let center = v3(req("center", s.center));
            ColliderShape::Sphere {
                center,
                radius: need(v, &format!("colliders[{i}].radius"), s.radius),
            }
        }
        "box" => {
            let min = v3(req("min", s.min));
            ColliderShape::Box {
                min,
                max: v3(need(v, &format!("colliders[{i}].max"), s.max)),
            }
        }
        k => {
            v.push(format!("colliders[{i}].kind '{k}' is not one of ground, half_space, sphere, box"));
            return None;
        }
    };
    let motion = match &s.motion {
        Some(w) => match Trajectory::uniform(duration, w.iter().copied().map(v3).collect(), s.max_speed) {
            Ok(t) => Some(t),
            Err(e) => {
                v.push(format!("colliders[{i}].motion: {e}"));
                None
            }
        },
        None => None,
    };
    (v.len() == before).then_some(Collider {
        shape,
        friction: s.friction,
        motion,
    })
}

fn load_csv_trajectories(c: &SceneConfig, base: &Path, v: &mut Vec<String>) -> BTreeMap<usize, Trajectory> {
    let mut out = BTreeMap::new();
    for (i, g) in c.grippers.iter().enumerate() {
        let Some(p) = &g.trajectory else { continue };
        let full = base.join(p);
        if !full.is_file() {
            continue;
        }
        match read_trajectory_csv(&full, g.max_speed) {
            Ok(mut all) => match all.remove(&i) {
                Some(t) => {
                    out.insert(i, t);
                }
                None => v.push(format!("grippers[{i}].trajectory: no rows for gripper {i}")),
            },
            Err(e) => v.push(format!("grippers[{i}].trajectory: {e}")),
        }
    }
    out
}

fn build_grippers(
    s: &GripperSection,
    i: usize,
    mesh: &ClothMesh,
    duration: f64,
    csv: Option<&Trajectory>,
    v: &mut Vec<String>,
) -> Vec<GripperConstraint> {
    let vertices = match (&s.vertices, &s.edge) {
        (Some(vs), None) => vs.clone(),
        (None, Some(e)) => match edge_vertices(mesh, e) {
            Some(vs) => vs,
            None => {
                v.push(format!("grippers[{i}].edge '{e}' is not one of x_min, x_max, y_min, y_max, z_min, z_max"));
                return Vec::new();
            }
        },
        _ => {
            v.push(format!("grippers[{i}] needs exactly one of vertices and edge"));
            return Vec::new();
        }
    };
    let sources = [s.waypoints.is_some(), s.trajectory.is_some()];
    let trajectory = match (&s.waypoints, csv) {
        _ if sources.iter().filter(|x| **x).count() != 1 => {
            v.push(format!("grippers[{i}] needs exactly one of waypoints and trajectory"));
            return Vec::new();
        }
        (Some(w), _) => {
            let w: Vec<_> = w.iter().copied().map(v3).collect();
            let t = match &s.times {
                Some(times) => Trajectory::new(times.clone(), w, s.max_speed),
                None => Trajectory::uniform(duration, w, s.max_speed),
            };
            match t {
                Ok(t) => t,
                Err(e) => {
                    v.push(format!("grippers[{i}]: {e}"));
                    return Vec::new();
                }
            }
        }
        (None, Some(t)) => t.clone(),
        (None, None) => return Vec::new(),
    };
    if s.per_vertex {
        vertices
            .into_iter()
            .map(|x| GripperConstraint {
                vertices: vec![x],
                trajectory: trajectory.clone(),
            })
            .collect()
    } else {
        vec![GripperConstraint { vertices, trajectory }]
    }
}
