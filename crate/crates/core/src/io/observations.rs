use std::path::{Path, PathBuf};

use nalgebra::{Similarity3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{load_ply, read_text, save_ply, write_text};
use crate::error::{Error, Result};
use crate::loss::{ObservationFrame, ObservationSequence};

pub const MANIFEST: &str = "manifest.toml";

/// Raw capture to simulation frame: `x_sim = scale · R · x_raw + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    #[serde(default = "unit")]
    pub scale: f64,
    /// Axis times angle (rad).
    #[serde(default)]
    pub rotation: [f64; 3],
    #[serde(default)]
    pub translation: [f64; 3],
}

fn unit() -> f64 {
    1.0
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            scale: 1.0,
            rotation: [0.0; 3],
            translation: [0.0; 3],
        }
    }
}

impl Calibration {
    pub fn similarity(&self) -> Result<Similarity3<f64>> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Observation(format!("calibration scale must be positive, got {}", self.scale)));
        }
        if !self.rotation.iter().chain(&self.translation).all(|x| x.is_finite()) {
            return Err(Error::Observation("calibration must be finite".into()));
        }
        Ok(Similarity3::from_parts(
            Translation3::from(Vector3::from(self.translation)),
            UnitQuaternion::from_scaled_axis(Vector3::from(self.rotation)),
            self.scale,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFrame {
    /// Simulation step the capture corresponds to.
    pub step: usize,
    pub file: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub calibration: Calibration,
    pub frames: Vec<ManifestFrame>,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text.as_bytes()[..s.start.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1);
            Error::parse(path, line, e.message().to_string())
        })
    }
}

/// Loads the frames listed by a manifest, given either the manifest itself
/// or a directory holding `manifest.toml`, and maps them into the simulation
/// frame.
pub fn load_pointcloud_sequence(path: &Path) -> Result<ObservationSequence> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST) } else { path.to_path_buf() };
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let m = Manifest::parse(&read_text(&manifest_path)?, &manifest_path)?;
    if m.frames.is_empty() {
        return Err(Error::Observation("manifest lists no frames".into()));
    }
    for w in m.frames.windows(2) {
        if w[1].step <= w[0].step {
            return Err(Error::Observation(format!(
                "{}: time indices must increase strictly, found {} after {}",
                manifest_path.display(),
                w[1].step,
                w[0].step
            )));
        }
    }
    let calibration = m.calibration.similarity()?;
    let frames = m
        .frames
        .iter()
        .map(|f| Ok(ObservationFrame::new(f.step, load_ply(&dir.join(&f.file))?)))
        .collect::<Result<Vec<_>>>()?;
    ObservationSequence::calibrated(frames, calibration)
}

/// Writes one PLY per frame plus `manifest.toml` into `dir`. Points are
/// stored in the simulation frame with an identity calibration; masked
/// points are dropped.
pub fn save_pointcloud_sequence(dir: &Path, seq: &ObservationSequence) -> Result<PathBuf> {
    let mut frames = Vec::with_capacity(seq.frames.len());
    for f in &seq.frames {
        let file = PathBuf::from(format!("frame_{:06}.ply", f.step));
        save_ply(&dir.join(&file), &f.active_points())?;
        frames.push(ManifestFrame { step: f.step, file });
    }
    let m = Manifest {
        calibration: Calibration::default(),
        frames,
    };
    let path = dir.join(MANIFEST);
    write_text(&path, &toml::to_string(&m).expect("manifest serializes"))?;
    Ok(path)
}
