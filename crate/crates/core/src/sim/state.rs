use nalgebra::{Isometry3, Matrix3, Matrix3x2, Vector3};

use crate::constitutive::{
    energy_terms, gram_schmidt, ConstitutiveParams, DeformationState, EnergyTerms, Material,
};
use crate::error::{Error, Result};
use crate::mesh::ClothMesh;
use crate::scalar::Real;

/// Dynamic state of the cloth at one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct ClothState<T: Real = f64> {
    pub step: usize,
    pub positions: Vec<Vector3<T>>,
    pub velocities: Vec<Vector3<T>>,
    /// APIC affine velocity matrices, one per vertex.
    pub affine: Vec<Matrix3<T>>,
    /// World image of each triangle's rest normal (third column of `F D`).
    pub normals: Vec<Vector3<T>>,
    pub deformation: Vec<DeformationState<T>>,
    pub masses: Vec<f64>,
}

/// World images of the two tangent directions of triangle `t`.
pub(crate) fn tangent_images<T: Real>(mesh: &ClothMesh, positions: &[Vector3<T>], t: usize) -> Matrix3x2<T> {
    let [i0, i1, i2] = mesh.triangles[t];
    let e = Matrix3x2::from_columns(&[positions[i1] - positions[i0], positions[i2] - positions[i0]]);
    e * mesh.rest_edge_inverse[t].map(T::lit)
}

/// Deformed material directions `d = [d1, d2, d3]` of triangle `t`.
pub(crate) fn material_images<T: Real>(
    mesh: &ClothMesh,
    positions: &[Vector3<T>],
    normal: &Vector3<T>,
    t: usize,
) -> Matrix3<T> {
    let tan = tangent_images(mesh, positions, t);
    Matrix3::from_columns(&[tan.column(0).into_owned(), tan.column(1).into_owned(), *normal])
}

pub(crate) fn element_error(t: usize, e: Error) -> Error {
    match e {
        Error::DegenerateElement { reason, .. } => Error::DegenerateElement { element: t, reason },
        other => other,
    }
}

/// Deformation state of triangle `t` without plastic projection.
pub(crate) fn deformation_of<T: Real>(
    mesh: &ClothMesh,
    positions: &[Vector3<T>],
    normal: &Vector3<T>,
    t: usize,
) -> Result<DeformationState<T>> {
    let d = material_images(mesh, positions, normal, t);
    let (q, r) = gram_schmidt(&d).map_err(|e| element_error(t, e))?;
    let frame = mesh.material_frames[t].map(T::lit);
    Ok(DeformationState::from_parts(d * frame.transpose(), frame, q, r))
}

/// Places the rest mesh at `pose` with zero velocity and stress-free elements.
pub fn init_state(mesh: &ClothMesh, pose: &Isometry3<f64>, params: &ConstitutiveParams) -> Result<ClothState> {
    params.validate()?;
    let positions: Vec<_> = mesh
        .rest_vertices
        .iter()
        .map(|v| pose.transform_point(&(*v).into()).coords)
        .collect();
    let rot = pose.rotation.to_rotation_matrix().into_inner();
    let normals: Vec<_> = mesh
        .material_frames
        .iter()
        .map(|d| rot * d.column(2))
        .collect();
    let deformation = (0..mesh.num_triangles())
        .map(|t| deformation_of(mesh, &positions, &normals[t], t))
        .collect::<Result<Vec<_>>>()?;
    let n = positions.len();
    Ok(ClothState {
        step: 0,
        positions,
        velocities: vec![Vector3::zeros(); n],
        affine: vec![Matrix3::zeros(); n],
        normals,
        deformation,
        masses: mesh.vertex_masses(params.density),
    })
}

impl<T: Real> ClothState<T> {
    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn linear_momentum(&self) -> Vector3<f64> {
        self.velocities
            .iter()
            .zip(&self.masses)
            .map(|(v, m)| v.map(|x| x.value()) * *m)
            .sum()
    }

    pub fn center_of_mass(&self) -> Vector3<f64> {
        let p: Vector3<f64> = self
            .positions
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| x.map(|x| x.value()) * *m)
            .sum();
        p / self.total_mass()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.velocities
            .iter()
            .zip(&self.masses)
            .map(|(v, m)| 0.5 * m * v.map(|x| x.value()).norm_squared())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        let vec_ok = |v: &Vector3<T>| v.iter().all(|x| x.value().is_finite());
        self.positions.iter().all(vec_ok)
            && self.velocities.iter().all(vec_ok)
            && self.normals.iter().all(vec_ok)
            && self.affine.iter().all(|m| m.iter().all(|x| x.value().is_finite()))
    }

    /// Primal copy.
    pub fn values(&self) -> ClothState<f64> {
        ClothState {
            step: self.step,
            positions: self.positions.iter().map(|v| v.map(|x| x.value())).collect(),
            velocities: self.velocities.iter().map(|v| v.map(|x| x.value())).collect(),
            affine: self.affine.iter().map(|m| m.map(|x| x.value())).collect(),
            normals: self.normals.iter().map(|v| v.map(|x| x.value())).collect(),
            deformation: self.deformation.iter().map(|d| d.values()).collect(),
            masses: self.masses.clone(),
        }
    }

    /// Volume-weighted elastic energy of the whole cloth, split by term.
    pub fn elastic_energy(&self, mesh: &ClothMesh, material: &Material<T>) -> EnergyTerms<T> {
        let mut total = EnergyTerms::<T>::zero();
        for (t, d) in self.deformation.iter().enumerate() {
            let e = energy_terms(&d.triangular, material);
            let v = T::lit(mesh.rest_volume(t));
            total.contact += e.contact * v;
            total.shear += e.shear * v;
            total.stretch += e.stretch * v;
            total.area += e.area * v;
        }
        total
    }
}

impl ClothState<f64> {
    /// Copy with tracked scalars.
    pub fn lift<U: Real>(&self) -> ClothState<U> {
        ClothState {
            step: self.step,
            positions: self.positions.iter().map(|v| v.map(U::lit)).collect(),
            velocities: self.velocities.iter().map(|v| v.map(U::lit)).collect(),
            affine: self.affine.iter().map(|m| m.map(U::lit)).collect(),
            normals: self.normals.iter().map(|v| v.map(U::lit)).collect(),
            deformation: Vec::new(),
            masses: self.masses.clone(),
        }
    }
}
