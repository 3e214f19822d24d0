//! One explicit MLS-MPM step on the Lagrangian cloth mesh.
//!
//! Vertices carry mass and transfer momentum with APIC; in-plane forces come
//! from the mesh. Each triangle's normal direction evolves with the mean
//! affine velocity of its three vertices, so the matching normal force is
//! scattered through the vertex stencils, where the grid always has mass.

use nalgebra::{Matrix3, Vector3};

use crate::constitutive::{energy_gradient_d, gram_schmidt, return_map, DeformationState};
use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::linalg::outer;
use crate::scalar::Real;
use crate::trajectory::Trajectory;

use super::grid::{GridBlock, Stencil};
use super::state::{element_error, material_images, ClothState};
use super::Scene;

/// Nodes lighter than this are treated as empty.
const MIN_NODE_MASS: f64 = 1e-14;

/// Advances `state` by one time step.
///
/// `controls` holds one trajectory per gripper of `scene`. Every branch is
/// decided on primal values, so running with a taped scalar reproduces the
/// `f64` result exactly.
pub fn step<T: Real>(
    scene: &Scene,
    state: &ClothState<T>,
    params: &ConstitutiveParams<T>,
    controls: &[Trajectory<T>],
) -> Result<ClothState<T>> {
    let mesh = &scene.mesh;
    let grid = &scene.grid;
    let n_step = state.step;
    let material = params.material()?;
    let dx = grid.cell_size;
    let dt = grid.dt;
    let dt_t = T::lit(dt);
    let d_inv = T::lit(4.0 / (dx * dx));
    let origin = grid.domain_min;
    let t_now = n_step as f64 * dt;
    let nv = mesh.num_vertices();
    let nt = mesh.num_triangles();
    if controls.len() != scene.grippers.len() {
        return Err(Error::Domain(format!(
            "{} trajectories for {} grippers",
            controls.len(),
            scene.grippers.len()
        )));
    }

    // Element forces. The normal column enters each vertex as an MLS stress
    // term `A_v = Σ_t g3 d3ᵀ / 3`.
    let third = T::lit(1.0 / 3.0);
    let mut vertex_force = vec![Vector3::<T>::zeros(); nv];
    let mut vertex_stress = vec![Matrix3::<T>::zeros(); nv];
    for t in 0..nt {
        let d = material_images(mesh, &state.positions, &state.normals[t], t);
        let (q, r) = gram_schmidt(&d).map_err(|e| element_error(t, e))?;
        let pd = energy_gradient_d(&q, &r, &material) * T::lit(mesh.rest_volume(t));
        let b_inv = mesh.rest_edge_inverse[t];
        let [i0, i1, i2] = mesh.triangles[t];
        // ∂Ψ/∂[e1 e2] = P_d[:, 0..2] B⁻ᵀ
        let p0 = pd.column(0).into_owned();
        let p1 = pd.column(1).into_owned();
        let g1 = p0 * T::lit(b_inv[(0, 0)]) + p1 * T::lit(b_inv[(0, 1)]);
        let g2 = p0 * T::lit(b_inv[(1, 0)]) + p1 * T::lit(b_inv[(1, 1)]);
        vertex_force[i1] -= g1;
        vertex_force[i2] -= g2;
        vertex_force[i0] += g1 + g2;
        let a = outer(&pd.column(2).into_owned(), &state.normals[t]) * third;
        for i in [i0, i1, i2] {
            vertex_stress[i] += a;
        }
    }

    // Particle to grid.
    let v_sten: Vec<Stencil<T>> = state
        .positions
        .iter()
        .map(|x| Stencil::new(x, &origin, dx))
        .collect();
    let mut block = GridBlock::<T>::covering(v_sten.iter().map(|s| &s.base));

    for (p, s) in v_sten.iter().enumerate() {
        let m = T::lit(state.masses[p]);
        let mc = state.affine[p] * m - vertex_stress[p] * (dt_t * d_inv);
        let base = state.velocities[p] * m + vertex_force[p] * dt_t;
        s.for_each(|node, w, off| {
            let i = block.index(node);
            block.mass[i] += w * m;
            block.momentum[i] += (base + mc * off) * w;
        });
    }

    // Grid update.
    let damping = T::lit(grid.damping);
    let g_dt = grid.gravity.map(|g| T::lit(g * dt));
    for i in 0..block.len() {
        let m = block.mass[i];
        if m.value() <= MIN_NODE_MASS {
            continue;
        }
        let mut v = block.momentum[i] / m * damping + g_dt;
        if !scene.colliders.is_empty() {
            let node = block.node(i);
            let x = origin + Vector3::new(node[0] as f64, node[1] as f64, node[2] as f64) * dx;
            for c in &scene.colliders {
                v = c.project(&x, v, t_now, dt);
            }
        }
        block.velocity[i] = v;
    }
    for (g, traj) in scene.grippers.iter().zip(controls) {
        let vg = (traj.position_at(t_now + dt) - traj.position_at(t_now)) / dt_t;
        for &p in &g.vertices {
            v_sten[p].for_each(|node, _, _| {
                let i = block.index(node);
                block.velocity[i] = vg;
            });
        }
    }

    // Grid to particle.
    let mut positions = Vec::with_capacity(nv);
    let mut velocities = Vec::with_capacity(nv);
    let mut affine = Vec::with_capacity(nv);
    for (p, s) in v_sten.iter().enumerate() {
        let mut v = Vector3::<T>::zeros();
        let mut c = Matrix3::<T>::zeros();
        s.for_each(|node, w, off| {
            let vi = block.velocity[block.index(node)];
            let wv = vi * w;
            v += wv;
            c += outer(&wv, &off);
        });
        c *= d_inv;
        positions.push(state.positions[p] + v * dt_t);
        velocities.push(v);
        affine.push(c);
    }
    let normals: Vec<Vector3<T>> = mesh
        .triangles
        .iter()
        .zip(&state.normals)
        .map(|(&[a, b, c], d3)| {
            let grad = (affine[a] + affine[b] + affine[c]) * third;
            d3 + grad * d3 * dt_t
        })
        .collect();

    check(scene, n_step + 1, &positions, &velocities, &normals)?;

    // Plasticity on the normal column of the rotation-free gradient.
    let mut deformation = Vec::with_capacity(nt);
    let mut normals = normals;
    for (t, normal) in normals.iter_mut().enumerate() {
        let d = material_images(mesh, &positions, normal, t);
        let (q, mut r) = gram_schmidt(&d).map_err(|e| element_error(t, e))?;
        let mut n = Matrix3::<T>::identity();
        n.set_column(2, &r.column(2).into_owned());
        let projected = return_map(&n, material.friction);
        let col = projected.column(2).into_owned();
        r.set_column(2, &col);
        *normal = q * col;
        let frame = mesh.material_frames[t].map(T::lit);
        let mut d = d;
        d.set_column(2, normal);
        deformation.push(DeformationState::from_parts(d * frame.transpose(), frame, q, r));
    }

    if affine.iter().any(|m| m.iter().any(|c| !c.value().is_finite())) {
        return Err(Error::Unstable {
            step: n_step + 1,
            reason: "non-finite affine velocity".into(),
        });
    }
    Ok(ClothState {
        step: n_step + 1,
        positions,
        velocities,
        affine,
        normals,
        deformation,
        masses: state.masses.clone(),
    })
}

fn check<T: Real>(
    scene: &Scene,
    step: usize,
    positions: &[Vector3<T>],
    velocities: &[Vector3<T>],
    normals: &[Vector3<T>],
) -> Result<()> {
    let finite = |v: &Vector3<T>| v.iter().all(|c| c.value().is_finite());
    if !(positions.iter().all(finite) && velocities.iter().all(finite) && normals.iter().all(finite)) {
        return Err(Error::Unstable {
            step,
            reason: "non-finite state".into(),
        });
    }
    let grid = &scene.grid;
    for (i, (x, v)) in positions.iter().zip(velocities).enumerate() {
        let speed = v.map(|c| c.value()).norm();
        if speed * grid.dt > grid.cell_size {
            return Err(Error::Unstable {
                step,
                reason: format!(
                    "vertex {i} moved {:.3e} m in one step, more than a grid cell",
                    speed * grid.dt
                ),
            });
        }
        if !grid.contains(&x.map(|c| c.value())) {
            return Err(Error::OutOfDomain { step, vertex: i });
        }
    }
    Ok(())
}

/// Total mass on the grid after scattering `state`.
pub fn scattered_mass<T: Real>(scene: &Scene, state: &ClothState<T>) -> f64 {
    let grid = &scene.grid;
    let sten: Vec<Stencil<T>> = state
        .positions
        .iter()
        .map(|x| Stencil::new(x, &grid.domain_min, grid.cell_size))
        .collect();
    let mut block = GridBlock::<T>::covering(sten.iter().map(|s| &s.base));
    for (p, s) in sten.iter().enumerate() {
        let m = T::lit(state.masses[p]);
        s.for_each(|node, w, _| {
            let i = block.index(node);
            block.mass[i] += w * m;
        });
    }
    block.mass.iter().map(|m| m.value()).sum()
}
