use nalgebra::Vector3;

use crate::scalar::Real;
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, PartialEq)]
pub enum ColliderShape {
    HalfSpace { point: Vector3<f64>, normal: Vector3<f64> },
    Sphere { center: Vector3<f64>, radius: f64 },
    Box { min: Vector3<f64>, max: Vector3<f64> },
}

/// Analytic rigid obstacle acting on grid velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct Collider {
    pub shape: ColliderShape,
    pub friction: f64,
    /// Scripted translation; offsets are relative to the first waypoint.
    pub motion: Option<Trajectory>,
}

impl Collider {
    pub fn fixed(shape: ColliderShape, friction: f64) -> Self {
        Self {
            shape,
            friction,
            motion: None,
        }
    }

    pub fn ground(height: f64, friction: f64) -> Self {
        Self::fixed(
            ColliderShape::HalfSpace {
                point: Vector3::new(0.0, 0.0, height),
                normal: Vector3::z(),
            },
            friction,
        )
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            v.push(format!("collider friction must be non-negative, got {}", self.friction));
        }
        match &self.shape {
            ColliderShape::HalfSpace { normal, .. } => {
                if !(normal.norm() > 0.0) {
                    v.push("half-space normal must be non-zero".into());
                }
            }
            ColliderShape::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    v.push(format!("sphere radius must be positive, got {radius}"));
                }
            }
            ColliderShape::Box { min, max } => {
                if (0..3).any(|i| !(max[i] > min[i])) {
                    v.push("box max must exceed min on every axis".into());
                }
            }
        }
        if let Some(m) = &self.motion {
            v.extend(m.violations().into_iter().map(|s| format!("collider motion: {s}")));
        }
        v
    }

    fn offset(&self, t: f64) -> Vector3<f64> {
        match &self.motion {
            Some(m) => m.position_at(t) - m.waypoints[0],
            None => Vector3::zeros(),
        }
    }

    /// Velocity of the obstacle over `[t, t + dt]`.
    pub fn velocity(&self, t: f64, dt: f64) -> Vector3<f64> {
        match &self.motion {
            Some(m) => (m.position_at(t + dt) - m.position_at(t)) / dt,
            None => Vector3::zeros(),
        }
    }

    /// Signed distance and outward unit normal at `p`, time `t`.
    pub fn signed_distance(&self, p: &Vector3<f64>, t: f64) -> (f64, Vector3<f64>) {
        let p = p - self.offset(t);
        match &self.shape {
            ColliderShape::HalfSpace { point, normal } => {
                let n = normal.normalize();
                ((p - point).dot(&n), n)
            }
            ColliderShape::Sphere { center, radius } => {
                let r = p - center;
                let len = r.norm();
                let n = if len > 0.0 { r / len } else { Vector3::z() };
                (len - radius, n)
            }
            ColliderShape::Box { min, max } => {
                let c = (min + max) * 0.5;
                let half = (max - min) * 0.5;
                let rel = p - c;
                let q = rel.abs() - half;
                if q.iter().any(|&x| x > 0.0) {
                    let outside = q.map(|x| x.max(0.0));
                    let len = outside.norm();
                    let n = Vector3::from_fn(|i, _| outside[i] * rel[i].signum()) / len;
                    (len, n)
                } else {
                    let axis = q.imax();
                    let mut n = Vector3::zeros();
                    n[axis] = if rel[axis] >= 0.0 { 1.0 } else { -1.0 };
                    (q[axis], n)
                }
            }
        }
    }

    /// Separating contact with Coulomb friction on one grid velocity.
    pub fn project<T: Real>(&self, node: &Vector3<f64>, v: Vector3<T>, t: f64, dt: f64) -> Vector3<T> {
        let (sd, n) = self.signed_distance(node, t);
        if sd > 0.0 {
            return v;
        }
        let vc = self.velocity(t, dt).map(T::lit);
        let n = n.map(T::lit);
        let rel = v - vc;
        let vn = rel.dot(&n);
        if vn.value() >= 0.0 {
            return v;
        }
        let vt = rel - n * vn;
        let vt_len2 = vt.dot(&vt).value();
        let limit = -self.friction * vn.value();
        if vt_len2.sqrt() <= limit {
            return vc;
        }
        let vt_len = vt.dot(&vt).sqrt();
        let scale = T::one() + T::lit(self.friction) * vn / vt_len;
        vc + vt * scale
    }
}
