use nalgebra::Vector3;

use crate::constitutive::{lame_from_params, ConstitutiveParams};
use crate::error::{Error, Result};
use crate::mesh::ClothMesh;
use crate::scalar::Real;

/// Background grid and time integration settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub cell_size: f64,
    pub domain_min: Vector3<f64>,
    pub domain_max: Vector3<f64>,
    pub dt: f64,
    pub gravity: Vector3<f64>,
    /// Per-step multiplier on grid velocities.
    pub damping: f64,
    pub cfl_factor: f64,
}

pub const DEFAULT_RESOLUTION: usize = 64;
pub const DEFAULT_DAMPING: f64 = 0.999;
pub const DEFAULT_CFL: f64 = 0.3;

impl GridConfig {
    /// Cubic-cell grid with `dx` = longest domain extent / `resolution`.
    /// `dt` is left at zero; call [`GridConfig::with_stable_dt`].
    pub fn new(domain_min: Vector3<f64>, domain_max: Vector3<f64>, resolution: usize) -> Self {
        let extent = (domain_max - domain_min).max();
        Self {
            cell_size: extent / resolution as f64,
            domain_min,
            domain_max,
            dt: 0.0,
            gravity: Vector3::new(0.0, 0.0, -9.81),
            damping: DEFAULT_DAMPING,
            cfl_factor: DEFAULT_CFL,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            v.push(format!("cell_size must be positive, got {}", self.cell_size));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(format!("dt must be positive, got {}", self.dt));
        }
        if (0..3).any(|i| !(self.domain_max[i] > self.domain_min[i])) {
            v.push("domain_max must exceed domain_min on every axis".into());
        }
        if !(0.0..=1.0).contains(&self.damping) {
            v.push(format!("damping must lie in [0, 1], got {}", self.damping));
        }
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 1.0) {
            v.push(format!("cfl_factor must lie in (0, 1], got {}", self.cfl_factor));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            v.push("gravity must be finite".into());
        }
        v
    }

    /// Elastic wave speed estimate `sqrt((2μ + λ + 2γ + k c_F) / ρ)`.
    pub fn wave_speed(params: &ConstitutiveParams) -> Result<f64> {
        let (mu, lambda) = lame_from_params(params.young_modulus, params.poisson_ratio)?;
        let stiff = 2.0 * mu
            + lambda
            + 2.0 * params.shear_stiffness
            + params.contact_stiffness * params.friction_coefficient;
        Ok((stiff / params.density).sqrt())
    }

    /// Largest admissible `dt` given the mesh resolution and an additional
    /// kinematic speed (grippers, colliders).
    pub fn cfl_limit(&self, params: &ConstitutiveParams, mesh: &ClothMesh, extra_speed: f64) -> Result<f64> {
        let h = self.cell_size.min(mesh.min_edge_length());
        Ok(self.cfl_factor * h / (Self::wave_speed(params)? + extra_speed))
    }

    pub fn check_cfl(&self, params: &ConstitutiveParams, mesh: &ClothMesh, extra_speed: f64) -> Result<()> {
        let limit = self.cfl_limit(params, mesh, extra_speed)?;
        if self.dt > limit {
            return Err(Error::Cfl { dt: self.dt, limit });
        }
        Ok(())
    }

    pub fn with_stable_dt(mut self, params: &ConstitutiveParams, mesh: &ClothMesh, extra_speed: f64) -> Result<Self> {
        self.dt = self.cfl_limit(params, mesh, extra_speed)?;
        Ok(self)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.domain_min[i] && p[i] <= self.domain_max[i])
    }
}

/// Quadratic B-spline weights of one particle over its 3×3×3 node stencil.
pub(crate) struct Stencil<T> {
    pub base: [i64; 3],
    pub w: [[T; 3]; 3],
    /// `(x_node - x_particle)` per axis and node offset.
    pub off: [[T; 3]; 3],
}

impl<T: Real> Stencil<T> {
    pub fn new(x: &Vector3<T>, origin: &Vector3<f64>, dx: f64) -> Self {
        let half = T::lit(0.5);
        let mut base = [0i64; 3];
        let mut w = [[T::zero(); 3]; 3];
        let mut off = [[T::zero(); 3]; 3];
        for axis in 0..3 {
            let rel = (x[axis] - T::lit(origin[axis])) / T::lit(dx);
            let b = (rel.value() - 0.5).floor();
            let fx = rel - T::lit(b);
            base[axis] = b as i64;
            let a0 = T::lit(1.5) - fx;
            let a1 = fx - T::one();
            let a2 = fx - half;
            w[axis] = [half * a0 * a0, T::lit(0.75) - a1 * a1, half * a2 * a2];
            for (a, o) in off[axis].iter_mut().enumerate() {
                *o = (T::lit(a as f64) - fx) * T::lit(dx);
            }
        }
        Self { base, w, off }
    }

    /// Visits the 27 stencil nodes as `(node index, weight, x_node - x_particle)`.
    #[inline]
    pub fn for_each<F: FnMut([i64; 3], T, Vector3<T>)>(&self, mut f: F) {
        for a in 0..3 {
            for b in 0..3 {
                let wab = self.w[0][a] * self.w[1][b];
                for c in 0..3 {
                    let node = [self.base[0] + a as i64, self.base[1] + b as i64, self.base[2] + c as i64];
                    let off = Vector3::new(self.off[0][a], self.off[1][b], self.off[2][c]);
                    f(node, wab * self.w[2][c], off);
                }
            }
        }
    }
}

/// Dense block of grid nodes covering a set of stencils.
pub(crate) struct GridBlock<T> {
    pub lo: [i64; 3],
    pub dims: [usize; 3],
    pub mass: Vec<T>,
    pub momentum: Vec<Vector3<T>>,
    pub velocity: Vec<Vector3<T>>,
}

impl<T: Real> GridBlock<T> {
    pub fn covering<'a, I: IntoIterator<Item = &'a [i64; 3]>>(bases: I) -> Self {
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for b in bases {
            for i in 0..3 {
                lo[i] = lo[i].min(b[i]);
                hi[i] = hi[i].max(b[i] + 2);
            }
        }
        let dims = [0, 1, 2].map(|i| (hi[i] - lo[i] + 1).max(0) as usize);
        let n = dims[0] * dims[1] * dims[2];
        Self {
            lo,
            dims,
            mass: vec![T::zero(); n],
            momentum: vec![Vector3::zeros(); n],
            velocity: vec![Vector3::zeros(); n],
        }
    }

    #[inline]
    pub fn index(&self, node: [i64; 3]) -> usize {
        let i = (node[0] - self.lo[0]) as usize;
        let j = (node[1] - self.lo[1]) as usize;
        let k = (node[2] - self.lo[2]) as usize;
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn node(&self, idx: usize) -> [i64; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [self.lo[0] + i as i64, self.lo[1] + j as i64, self.lo[2] + k as i64]
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }
}
