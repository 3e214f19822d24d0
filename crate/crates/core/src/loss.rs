//! Chamfer objectives between simulated vertices and observed point clouds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Similarity3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ClothState;

/// Default cap on observed points per frame.
pub const MAX_FRAME_POINTS: usize = 5000;

const LEAF_SIZE: usize = 8;

/// Static 3-d tree for exact nearest-neighbour queries.
///
/// Distances are computed exactly as a brute-force scan would, and ties are
/// resolved towards the lowest point index.
pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    idx: Vec<usize>,
    nodes: Vec<Node>,
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        let mut t = Self {
            points,
            idx: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            t.build(0, points.len());
        }
        t
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let pts = self.points;
        let slice = &self.idx[start..end];
        let axis = (0..3)
            .max_by(|&a, &b| {
                let spread = |ax: usize| {
                    let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        (lo.min(pts[i][ax]), hi.max(pts[i][ax]))
                    });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap_or(0);
        let mid = (end - start) / 2;
        self.idx[start..end].select_nth_unstable_by(mid, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        let value = pts[self.idx[start + mid]][axis];
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes[me] = Node::Split { axis, value, left, right };
        me
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Vector3<f64>, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.idx[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Per-point nearest neighbours of `from` in `to`.
fn correspondences(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Result<Vec<(usize, f64)>> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptySet);
    }
    let tree = KdTree::new(to);
    Ok(from
        .iter()
        .map(|p| {
            let (j, d2) = tree.nearest(p).expect("non-empty tree");
            (j, d2.sqrt())
        })
        .collect())
}

/// Mean distance from each point of `p` to its nearest point of `m`.
pub fn chamfer_one_way(p: &[Vector3<f64>], m: &[Vector3<f64>]) -> Result<f64> {
    let c = correspondences(p, m)?;
    Ok(c.iter().map(|(_, d)| d).sum::<f64>() / p.len() as f64)
}

/// `chamfer_one_way(p, m) + chamfer_one_way(m, p)`.
pub fn chamfer_bidirectional(p: &[Vector3<f64>], m: &[Vector3<f64>]) -> Result<f64> {
    Ok(chamfer_one_way(p, m)? + chamfer_one_way(m, p)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChamferMode {
    /// Observed to simulated only.
    #[default]
    OneWay,
    Bidirectional,
}

impl fmt::Display for ChamferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChamferMode::OneWay => "one_way",
            ChamferMode::Bidirectional => "bidirectional",
        })
    }
}

impl FromStr for ChamferMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_way" => Ok(Self::OneWay),
            "bidirectional" => Ok(Self::Bidirectional),
            other => Err(Error::Domain(format!(
                "unknown Chamfer mode `{other}`, expected one_way or bidirectional"
            ))),
        }
    }
}

/// Chamfer value and its gradient with respect to `m`, with correspondences
/// held at their argmin.
pub fn chamfer_with_gradient(
    p: &[Vector3<f64>],
    m: &[Vector3<f64>],
    mode: ChamferMode,
) -> Result<(f64, Vec<Vector3<f64>>)> {
    let mut grad = vec![Vector3::zeros(); m.len()];
    let fwd = correspondences(p, m)?;
    let inv_p = 1.0 / p.len() as f64;
    let mut a = 0.0;
    for (pi, &(j, d)) in p.iter().zip(&fwd) {
        a += d;
        if d > 0.0 {
            grad[j] += (m[j] - pi) * (inv_p / d);
        }
    }
    a *= inv_p;
    if mode == ChamferMode::OneWay {
        return Ok((a, grad));
    }
    let back = correspondences(m, p)?;
    let inv_m = 1.0 / m.len() as f64;
    let mut b = 0.0;
    for (j, &(k, d)) in back.iter().enumerate() {
        b += d;
        if d > 0.0 {
            grad[j] += (m[j] - p[k]) * (inv_m / d);
        }
    }
    b *= inv_m;
    Ok((a + b, grad))
}

/// One observed point cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationFrame {
    /// Simulation step the cloud was captured at.
    pub step: usize,
    /// Points in the simulation frame.
    pub points: Vec<Vector3<f64>>,
    /// Points marked `false` are ignored.
    pub valid: Option<Vec<bool>>,
}

impl ObservationFrame {
    pub fn new(step: usize, points: Vec<Vector3<f64>>) -> Self {
        Self {
            step,
            points,
            valid: None,
        }
    }

    /// Valid points only.
    pub fn active_points(&self) -> Vec<Vector3<f64>> {
        match &self.valid {
            Some(mask) => self
                .points
                .iter()
                .zip(mask)
                .filter(|(_, &ok)| ok)
                .map(|(p, _)| *p)
                .collect(),
            None => self.points.clone(),
        }
    }
}

/// Timestamped partial point clouds of the cloth.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSequence {
    pub frames: Vec<ObservationFrame>,
    /// Transform that was applied to bring the raw points into the
    /// simulation frame.
    pub calibration: Similarity3<f64>,
}

impl ObservationSequence {
    /// Validated sequence whose points are already in the simulation frame.
    pub fn new(frames: Vec<ObservationFrame>) -> Result<Self> {
        Self::calibrated(frames, Similarity3::identity())
    }

    /// Applies `calibration` to raw points and validates the result.
    pub fn calibrated(mut frames: Vec<ObservationFrame>, calibration: Similarity3<f64>) -> Result<Self> {
        for f in &mut frames {
            for p in &mut f.points {
                *p = calibration.transform_point(&(*p).into()).coords;
            }
        }
        let s = Self { frames, calibration };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Observation("sequence has no frames".into()));
        }
        for w in self.frames.windows(2) {
            if w[1].step <= w[0].step {
                return Err(Error::Observation(format!(
                    "time indices must increase strictly, found {} after {}",
                    w[1].step, w[0].step
                )));
            }
        }
        for f in &self.frames {
            if let Some(mask) = &f.valid {
                if mask.len() != f.points.len() {
                    return Err(Error::Observation(format!(
                        "frame {}: mask has {} entries for {} points",
                        f.step,
                        mask.len(),
                        f.points.len()
                    )));
                }
            }
            if f.active_points().is_empty() {
                return Err(Error::Observation(format!("frame {} has no valid points", f.step)));
            }
            if f.points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
                return Err(Error::Observation(format!("frame {} has non-finite points", f.step)));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.step).collect()
    }

    pub fn last_step(&self) -> usize {
        self.frames.last().map_or(0, |f| f.step)
    }

    /// The last frame alone, for terminal-state objectives.
    pub fn final_only(&self) -> Self {
        Self {
            frames: self.frames.last().cloned().into_iter().collect(),
            calibration: self.calibration,
        }
    }

    /// Copy with every frame reduced to at most `max_points` points.
    pub fn downsampled(&self, max_points: usize) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|f| ObservationFrame::new(f.step, downsample(&f.active_points(), max_points)))
                .collect(),
            calibration: self.calibration,
        }
    }
}

/// Voxel-grid centroids, with the voxel grown until at most `max_points`
/// remain. Smaller clouds are returned unchanged.
pub fn downsample(points: &[Vector3<f64>], max_points: usize) -> Vec<Vector3<f64>> {
    if points.len() <= max_points || points.is_empty() || max_points == 0 {
        return points.to_vec();
    }
    let (lo, hi) = points.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let extent = (hi - lo).max().max(f64::MIN_POSITIVE);
    let mut voxel = extent / (max_points as f64).cbrt();
    loop {
        let mut cells: BTreeMap<[i64; 3], (Vector3<f64>, usize)> = BTreeMap::new();
        for p in points {
            let key = [0, 1, 2].map(|i| ((p[i] - lo[i]) / voxel).floor() as i64);
            let e = cells.entry(key).or_insert((Vector3::zeros(), 0));
            e.0 += p;
            e.1 += 1;
        }
        if cells.len() <= max_points {
            return cells.into_values().map(|(s, n)| s / n as f64).collect();
        }
        voxel *= 1.25;
    }
}

fn match_frames<'a>(frames: &'a [ClothState], obs: &ObservationSequence) -> Result<Vec<&'a ClothState>> {
    obs.validate()?;
    let mut missing = BTreeSet::new();
    let mut out = Vec::with_capacity(obs.frames.len());
    for f in &obs.frames {
        match frames.binary_search_by_key(&f.step, |s| s.step) {
            Ok(i) => out.push(&frames[i]),
            Err(_) => {
                missing.insert(f.step);
            }
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::MissingFrames(missing.into_iter().collect()))
    }
}

/// Mean Chamfer distance over the observed frames. `frames` must be sorted
/// by step.
pub fn sequence_loss(frames: &[ClothState], obs: &ObservationSequence, mode: ChamferMode) -> Result<f64> {
    Ok(sequence_loss_and_seeds(frames, obs, mode)?.0)
}

/// Gradient of [`sequence_loss`] with respect to vertex positions, keyed by
/// simulation step.
pub fn loss_adjoint_seeds(
    frames: &[ClothState],
    obs: &ObservationSequence,
    mode: ChamferMode,
) -> Result<BTreeMap<usize, Vec<Vector3<f64>>>> {
    Ok(sequence_loss_and_seeds(frames, obs, mode)?.1)
}

/// [`sequence_loss`] and [`loss_adjoint_seeds`] in one pass.
pub fn sequence_loss_and_seeds(
    frames: &[ClothState],
    obs: &ObservationSequence,
    mode: ChamferMode,
) -> Result<(f64, BTreeMap<usize, Vec<Vector3<f64>>>)> {
    let matched = match_frames(frames, obs)?;
    let scale = 1.0 / obs.frames.len() as f64;
    let mut total = 0.0;
    let mut seeds = BTreeMap::new();
    for (f, s) in obs.frames.iter().zip(matched) {
        let (v, mut g) = chamfer_with_gradient(&f.active_points(), &s.positions, mode)?;
        total += v;
        g.iter_mut().for_each(|x| *x *= scale);
        seeds.insert(f.step, g);
    }
    Ok((total * scale, seeds))
}
