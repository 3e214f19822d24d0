use nalgebra::Vector3;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::loss::{ObservationFrame, ObservationSequence};
use crate::mesh::ClothMesh;
use crate::sim::ClothState;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSettings {
    /// Camera position; `None` sees every triangle.
    pub camera: Option<Vector3<f64>>,
    /// Standard deviation of per-coordinate Gaussian noise (m).
    pub noise: f64,
    /// Probability that a sample is discarded.
    pub dropout: f64,
    /// Surface samples per frame before culling and dropout.
    pub samples: usize,
    /// Observe the mesh vertices of visible triangles instead of sampling
    /// the surface, as with tracked markers.
    pub vertices: bool,
    pub seed: u64,
}

/// Point clouds of `frames` as a depth camera might see them: area-weighted
/// surface samples from triangles facing the camera, perturbed and thinned.
pub fn synthesize_observations(
    frames: &[ClothState],
    mesh: &ClothMesh,
    settings: &SynthSettings,
) -> Result<ObservationSequence> {
    let s = settings;
    if !(s.noise >= 0.0 && s.noise.is_finite()) {
        return Err(Error::Domain(format!("noise must be non-negative, got {}", s.noise)));
    }
    if !(0.0..1.0).contains(&s.dropout) {
        return Err(Error::Domain(format!("dropout must lie in [0, 1), got {}", s.dropout)));
    }
    if s.samples == 0 || frames.is_empty() {
        return Err(Error::EmptySet);
    }
    let noise = Normal::new(0.0, s.noise).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        let x = &f.positions;
        if x.len() != mesh.num_vertices() {
            return Err(Error::Domain(format!("frame has {} vertices, mesh has {}", x.len(), mesh.num_vertices())));
        }
        let visible: Vec<(usize, f64)> = mesh
            .triangles
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                let n = (x[t[1]] - x[t[0]]).cross(&(x[t[2]] - x[t[0]]));
                let area = 0.5 * n.norm();
                let c = (x[t[0]] + x[t[1]] + x[t[2]]) / 3.0;
                let facing = s.camera.is_none_or(|cam| n.dot(&(cam - c)) > 0.0);
                (facing && area > 0.0).then_some((i, area))
            })
            .collect();
        let mut points = Vec::with_capacity(s.samples);
        if s.vertices {
            let mut seen = vec![false; x.len()];
            for (i, _) in &visible {
                for &v in &mesh.triangles[*i] {
                    seen[v] = true;
                }
            }
            for (p, _) in x.iter().zip(&seen).filter(|(_, &k)| k) {
                let jitter = Vector3::from_fn(|_, _| noise.sample(&mut rng));
                if rng.random::<f64>() >= s.dropout {
                    points.push(p + jitter);
                }
            }
        } else if !visible.is_empty() {
            let pick = WeightedIndex::new(visible.iter().map(|v| v.1)).map_err(|e| Error::Domain(e.to_string()))?;
            for _ in 0..s.samples {
                let t = mesh.triangles[visible[pick.sample(&mut rng)].0];
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let a = r1.sqrt();
                let p = x[t[0]] * (1.0 - a) + x[t[1]] * (a * (1.0 - r2)) + x[t[2]] * (a * r2);
                let jitter = Vector3::from_fn(|_, _| noise.sample(&mut rng));
                if rng.random::<f64>() >= s.dropout {
                    points.push(p + jitter);
                }
            }
        }
        if points.is_empty() {
            return Err(Error::Observation(format!("every point of frame {} was dropped", f.step)));
        }
        out.push(ObservationFrame::new(f.step, points));
    }
    ObservationSequence::new(out)
}
