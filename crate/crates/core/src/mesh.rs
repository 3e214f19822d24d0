use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Minimum rest area of a triangle.
pub const MIN_REST_AREA: f64 = 1e-12;

/// Triangulated cloth in its rest configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ClothMesh {
    pub rest_vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Orthonormal rest frame per triangle: tangents, then unit normal.
    pub material_frames: Vec<Matrix3<f64>>,
    pub rest_areas: Vec<f64>,
    /// Inverse of the rest edge matrix expressed in the tangent frame.
    pub rest_edge_inverse: Vec<Matrix2<f64>>,
    pub thickness: f64,
}

impl ClothMesh {
    pub fn new(
        rest_vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        thickness: f64,
    ) -> Result<Self> {
        if !(thickness > 0.0 && thickness.is_finite()) {
            return Err(Error::Domain(format!(
                "thickness must be positive, got {thickness}"
            )));
        }
        if triangles.is_empty() {
            return Err(Error::Domain("mesh has no triangles".into()));
        }
        if let Some(v) = rest_vertices.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::Domain(format!("vertex {v} is not finite")));
        }
        let n = rest_vertices.len();
        let mut material_frames = Vec::with_capacity(triangles.len());
        let mut rest_areas = Vec::with_capacity(triangles.len());
        let mut rest_edge_inverse = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::Domain(format!(
                    "triangle {t} references vertex {bad}, but the mesh has {n} vertices"
                )));
            }
            let [x0, x1, x2] = tri.map(|i| rest_vertices[i]);
            let e1 = x1 - x0;
            let e2 = x2 - x0;
            let c = e1.cross(&e2);
            let area = 0.5 * c.norm();
            if !(area > MIN_REST_AREA) {
                return Err(Error::DegenerateElement {
                    element: t,
                    reason: format!("rest area {area:e} is below {MIN_REST_AREA:e}"),
                });
            }
            let normal = c / c.norm();
            let t1 = e1 / e1.norm();
            let t2 = normal.cross(&t1);
            let frame = Matrix3::from_columns(&[t1, t2, normal]);
            let b = Matrix2::new(t1.dot(&e1), t1.dot(&e2), t2.dot(&e1), t2.dot(&e2));
            let b_inv = b.try_inverse().ok_or_else(|| Error::DegenerateElement {
                element: t,
                reason: "singular rest edge matrix".into(),
            })?;
            material_frames.push(frame);
            rest_areas.push(area);
            rest_edge_inverse.push(b_inv);
        }
        Ok(Self {
            rest_vertices,
            triangles,
            material_frames,
            rest_areas,
            rest_edge_inverse,
            thickness,
        })
    }

    /// Flat rectangular sheet in the plane spanned by `u` and `v` starting at
    /// `origin`, with `nu × nv` vertices and alternating diagonals.
    pub fn rectangle(
        origin: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        nu: usize,
        nv: usize,
        thickness: f64,
    ) -> Result<Self> {
        if nu < 2 || nv < 2 {
            return Err(Error::Domain("a rectangle needs at least 2×2 vertices".into()));
        }
        let mut vertices = Vec::with_capacity(nu * nv);
        for j in 0..nv {
            for i in 0..nu {
                let a = i as f64 / (nu - 1) as f64;
                let b = j as f64 / (nv - 1) as f64;
                vertices.push(origin + u * a + v * b);
            }
        }
        let id = |i: usize, j: usize| j * nu + i;
        let mut triangles = Vec::with_capacity(2 * (nu - 1) * (nv - 1));
        for j in 0..nv - 1 {
            for i in 0..nu - 1 {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if (i + j) % 2 == 0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
        Self::new(vertices, triangles, thickness)
    }

    pub fn num_vertices(&self) -> usize {
        self.rest_vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn rest_volume(&self, t: usize) -> f64 {
        self.rest_areas[t] * self.thickness
    }

    pub fn total_rest_area(&self) -> f64 {
        self.rest_areas.iter().sum()
    }

    /// Lumped vertex masses, a third of each incident triangle's mass.
    pub fn vertex_masses(&self, density: f64) -> Vec<f64> {
        let mut m = vec![0.0; self.num_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let share = density * self.rest_volume(t) / 3.0;
            for &i in tri {
                m[i] += share;
            }
        }
        m
    }

    pub fn min_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| (self.rest_vertices[a] - self.rest_vertices[b]).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| (self.rest_vertices[a] - self.rest_vertices[b]).norm())
            .fold(0.0, f64::max)
    }

    /// Vertices sorted by a key, useful for picking grasp points.
    pub fn vertices_by<F: Fn(&Vector3<f64>) -> f64>(&self, key: F) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.num_vertices()).collect();
        idx.sort_by(|&a, &b| {
            key(&self.rest_vertices[a])
                .total_cmp(&key(&self.rest_vertices[b]))
                .then(a.cmp(&b))
        });
        idx
    }

    /// Index of the vertex closest to `p` (lowest index on ties).
    pub fn closest_vertex(&self, p: &Vector3<f64>) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, v) in self.rest_vertices.iter().enumerate() {
            let d = (v - p).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}
