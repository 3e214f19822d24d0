use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative slack allowed when comparing a segment speed with the limit.
pub const SPEED_TOL: f64 = 1e-12;

/// Piecewise-linear gripper path through timed waypoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Real = f64> {
    pub times: Vec<f64>,
    pub waypoints: Vec<Vector3<T>>,
    /// Speed limit in m/s.
    pub max_speed: f64,
}

impl<T: Real> Trajectory<T> {
    /// Builds a trajectory, checking every invariant.
    pub fn new(times: Vec<f64>, waypoints: Vec<Vector3<T>>, max_speed: f64) -> Result<Self> {
        let t = Self {
            times,
            waypoints,
            max_speed,
        };
        let v = t.violations();
        if v.is_empty() {
            Ok(t)
        } else {
            Err(Error::InfeasibleTrajectory(v.join("; ")))
        }
    }

    /// Evenly timed waypoints over `[0, duration]`.
    pub fn uniform(duration: f64, waypoints: Vec<Vector3<T>>, max_speed: f64) -> Result<Self> {
        let l = waypoints.len();
        if l < 2 {
            return Err(Error::InfeasibleTrajectory(format!(
                "need at least 2 waypoints, got {l}"
            )));
        }
        let times = (0..l)
            .map(|i| duration * i as f64 / (l - 1) as f64)
            .collect();
        Self::new(times, waypoints, max_speed)
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.waypoints.len() < 2 {
            v.push(format!(
                "need at least 2 waypoints, got {}",
                self.waypoints.len()
            ));
        }
        if self.times.len() != self.waypoints.len() {
            v.push(format!(
                "{} time stamps for {} waypoints",
                self.times.len(),
                self.waypoints.len()
            ));
            return v;
        }
        if !(self.max_speed > 0.0) {
            v.push(format!("max_speed must be positive, got {}", self.max_speed));
        }
        if self.times.iter().any(|t| !t.is_finite())
            || self
                .waypoints
                .iter()
                .any(|w| w.iter().any(|x| !x.value().is_finite()))
        {
            v.push("non-finite time stamp or waypoint".into());
        }
        for (i, w) in self.times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                v.push(format!("time stamps not increasing at waypoint {}", i + 1));
            }
        }
        if v.is_empty() {
            for (i, s) in self.segment_speeds().into_iter().enumerate() {
                if s > self.max_speed * (1.0 + SPEED_TOL) {
                    v.push(format!(
                        "segment {i} moves at {s:.6} m/s, above the {:.6} m/s limit",
                        self.max_speed
                    ));
                }
            }
        }
        v
    }

    pub fn is_feasible(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn segment_speeds(&self) -> Vec<f64> {
        (0..self.waypoints.len().saturating_sub(1))
            .map(|i| {
                let d = self.waypoints[i + 1].map(|x| x.value()) - self.waypoints[i].map(|x| x.value());
                d.norm() / (self.times[i + 1] - self.times[i])
            })
            .collect()
    }

    /// Position at time `t`, held constant outside the time span.
    pub fn position_at(&self, t: f64) -> Vector3<T> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.waypoints[0];
        }
        if t >= self.times[n - 1] {
            return self.waypoints[n - 1];
        }
        // first index with times[i] > t
        let i = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let a = T::lit((t - t0) / (t1 - t0));
        self.waypoints[i - 1] * (T::one() - a) + self.waypoints[i] * a
    }

    pub fn values(&self) -> Trajectory<f64> {
        Trajectory {
            times: self.times.clone(),
            waypoints: self.waypoints.iter().map(|w| w.map(|x| x.value())).collect(),
            max_speed: self.max_speed,
        }
    }
}

impl Trajectory<f64> {
    pub fn lift<U: Real>(&self) -> Trajectory<U> {
        Trajectory {
            times: self.times.clone(),
            waypoints: self.waypoints.iter().map(|w| w.map(U::lit)).collect(),
            max_speed: self.max_speed,
        }
    }

    /// Straight line from `start` to `end` over `duration` with `l` waypoints.
    pub fn linear(
        start: Vector3<f64>,
        end: Vector3<f64>,
        duration: f64,
        l: usize,
        max_speed: f64,
    ) -> Result<Self> {
        let pts = (0..l.max(2))
            .map(|i| start + (end - start) * (i as f64 / (l.max(2) - 1) as f64))
            .collect();
        Self::uniform(duration, pts, max_speed)
    }

    /// Copy with every waypoint shifted by `offset`.
    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self {
            waypoints: self.waypoints.iter().map(|w| w + offset).collect(),
            ..self.clone()
        }
    }
}

/// Shrinks every segment that exceeds the speed limit about its midpoint until
/// all segments are feasible. Feasible inputs are returned unchanged.
pub fn project_trajectory(traj: &Trajectory) -> Trajectory {
    let mut out = traj.clone();
    for _ in 0..100_000 {
        let mut changed = false;
        for i in 0..out.waypoints.len().saturating_sub(1) {
            let dt = out.times[i + 1] - out.times[i];
            let limit = out.max_speed * dt;
            let d = out.waypoints[i + 1] - out.waypoints[i];
            let len = d.norm();
            if len > limit * (1.0 + SPEED_TOL) {
                let mid = (out.waypoints[i] + out.waypoints[i + 1]) * 0.5;
                let half = d * (0.5 * limit / len);
                out.waypoints[i] = mid - half;
                out.waypoints[i + 1] = mid + half;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    out
}
