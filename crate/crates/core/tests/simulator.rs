use std::collections::BTreeMap;

use aepcloth::constitutive::ConstitutiveParams;
use aepcloth::mesh::ClothMesh;
use aepcloth::sim::*;
use aepcloth::trajectory::Trajectory;
use aepcloth::Error;
use nalgebra::{Isometry3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cotton() -> ConstitutiveParams {
    ConstitutiveParams {
        young_modulus: 609.02,
        poisson_ratio: 0.15,
        contact_stiffness: 6520.57,
        shear_stiffness: 1674.0,
        friction_coefficient: 0.1,
        density: 10.0,
    }
}

fn domain() -> GridConfig {
    GridConfig::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0), 64)
}

/// Horizontal `n × n` sheet of side 0.2 m at height `z`.
fn sheet(n: usize, z: f64) -> ClothMesh {
    ClothMesh::rectangle(
        Vector3::new(0.15, 0.15, z),
        Vector3::x() * 0.2,
        Vector3::y() * 0.2,
        n,
        n,
        1e-3,
    )
    .unwrap()
}

fn scene(mesh: ClothMesh, params: &ConstitutiveParams, extra_speed: f64) -> Scene {
    let mut grid = domain().with_stable_dt(params, &mesh, extra_speed).unwrap();
    // headroom for finite-difference perturbations of the stiffnesses
    grid.dt *= 0.9;
    Scene::new(mesh, grid)
}

fn hold(vertices: Vec<usize>, duration: f64) -> GripperConstraint {
    GripperConstraint {
        vertices,
        trajectory: Trajectory::linear(Vector3::zeros(), Vector3::zeros(), duration, 2, 1.0).unwrap(),
    }
}

fn jitter(mesh: &ClothMesh, rng: &mut ChaCha8Rng, amount: f64) -> Vec<Vector3<f64>> {
    mesh.rest_vertices
        .iter()
        .map(|v| v + Vector3::from_fn(|_, _| rng.random_range(-amount..amount)))
        .collect()
}

fn max_diff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

#[test]
fn init_state_masses_and_pose() {
    let p = cotton();
    let mesh = sheet(10, 0.2);
    let s = init_state(&mesh, &Isometry3::identity(), &p).unwrap();
    assert_eq!(s.positions, mesh.rest_vertices);
    let expected = p.density * mesh.thickness * mesh.total_rest_area();
    assert!((s.total_mass() - expected).abs() < 1e-10);

    let shift = Isometry3::translation(0.01, -0.02, 0.03);
    let moved = init_state(&mesh, &shift, &p).unwrap();
    for d in &moved.deformation {
        assert!((d.triangular - nalgebra::Matrix3::identity()).amax() < 1e-12);
    }
}

#[test]
fn flat_cloth_without_gravity_stays_put() {
    let p = cotton();
    let mut sc = scene(sheet(12, 0.2), &p, 0.0);
    sc.grid.gravity = Vector3::zeros();
    let mut prev = sc.initial_state(&p).unwrap();
    for _ in 0..100 {
        let next = step(&sc, &prev, &p, &[]).unwrap();
        assert!(max_diff(&next.positions, &prev.positions) < 1e-9);
        prev = next;
    }
    assert!(max_diff(&prev.positions, &sc.mesh.rest_vertices) < 1e-9);
}

#[test]
fn free_fall_gains_g_dt() {
    let p = cotton();
    let sc = scene(sheet(12, 0.2), &p, 0.0);
    let s0 = sc.initial_state(&p).unwrap();
    let s1 = step(&sc, &s0, &p, &[]).unwrap();
    let v = s1.linear_momentum() / s1.total_mass();
    assert!((v - sc.grid.gravity * sc.grid.dt).amax() < 1e-8);
}

#[test]
fn mass_and_momentum_are_conserved() {
    let p = cotton();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sc = scene(sheet(12, 0.2), &p, 0.5);
    sc.grid.gravity = Vector3::zeros();
    sc.grid.damping = 1.0;
    sc.initial_positions = Some(jitter(&sc.mesh, &mut rng, 0.003));
    let mut s = sc.initial_state(&p).unwrap();
    for v in &mut s.velocities {
        *v = Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3));
    }
    let m = s.total_mass();
    for _ in 0..100 {
        assert!((scattered_mass(&sc, &s) - m).abs() < 1e-10);
        let next = step(&sc, &s, &p, &[]).unwrap();
        assert!((next.linear_momentum() - s.linear_momentum()).amax() < 1e-8);
        s = next;
    }
}

#[test]
fn translation_by_whole_cells_translates_the_motion() {
    let p = cotton();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut a = scene(sheet(10, 0.2), &p, 0.0);
    a.initial_positions = Some(jitter(&a.mesh, &mut rng, 0.002));
    let offset = Vector3::new(3.0, -2.0, 1.0) * a.grid.cell_size;
    let mut b = a.clone();
    b.pose = Isometry3::translation(offset.x, offset.y, offset.z);
    b.initial_positions = a
        .initial_positions
        .as_ref()
        .map(|v| v.iter().map(|x| x + offset).collect());
    let ra = simulate(&a, &p, 60, 60).unwrap();
    let rb = simulate(&b, &p, 60, 60).unwrap();
    let shifted: Vec<_> = ra.final_state().positions.iter().map(|x| x + offset).collect();
    assert!(max_diff(&shifted, &rb.final_state().positions) < 1e-6);
}

#[test]
fn horizon_zero_returns_initial_frame() {
    let p = cotton();
    let sc = scene(sheet(10, 0.2), &p, 0.0);
    let r = simulate(&sc, &p, 0, 1).unwrap();
    assert_eq!(r.frames.len(), 1);
    assert_eq!(r.frames[0].step, 0);
}

#[test]
fn frames_follow_stride_and_include_last() {
    let p = cotton();
    let sc = scene(sheet(10, 0.2), &p, 0.0);
    let r = simulate(&sc, &p, 25, 10).unwrap();
    let steps: Vec<_> = r.frames.iter().map(|f| f.step).collect();
    assert_eq!(steps, vec![0, 10, 20, 25]);
    assert!(r.frame_at(20).is_some());
    assert!(r.frame_at(21).is_none());
}

#[test]
fn runs_are_bit_identical_and_replay_matches_checkpoints() {
    let p = cotton();
    let mut sc = scene(sheet(10, 0.3), &p, 0.0);
    sc.grippers.push(hold(vec![0, 9], 1.0));
    let a = simulate(&sc, &p, 120, 7).unwrap();
    let b = simulate(&sc, &p, 120, 7).unwrap();
    assert_eq!(a.frames, b.frames);
    a.tape.verify().unwrap();
    let fine = simulate_with(&sc, &p, 120, 7, 1, |_| {}).unwrap();
    assert_eq!(fine.frames, a.frames);
    fine.tape.verify().unwrap();
}

#[test]
fn hanging_cloth_comes_to_rest() {
    let p = cotton();
    let mesh = ClothMesh::rectangle(
        Vector3::new(0.15, 0.25, 0.35),
        Vector3::x() * 0.2,
        Vector3::z() * -0.15,
        11,
        9,
        1e-3,
    )
    .unwrap();
    let mut sc = scene(mesh, &p, 0.0);
    let horizon = 8000;
    sc.grippers.push(hold(vec![0, 10], horizon as f64 * sc.grid.dt));
    let mut peak: f64 = 0.0;
    let mut last = 0.0;
    simulate_with(&sc, &p, horizon, horizon, 1000, |s| {
        last = s.kinetic_energy();
        peak = peak.max(last);
    })
    .unwrap();
    assert!(peak > 0.0);
    assert!(last < 1e-6 * peak, "kinetic energy {last:e} vs peak {peak:e}");
}

#[test]
fn grasped_vertices_follow_their_gripper() {
    let p = cotton();
    let mesh = sheet(10, 0.2);
    let mut sc = scene(mesh, &p, 0.5);
    let horizon = 200;
    let duration = horizon as f64 * sc.grid.dt;
    let traj = Trajectory::linear(
        Vector3::new(0.15, 0.15, 0.2),
        Vector3::new(0.15 + 0.4 * duration, 0.15, 0.2 + 0.2 * duration),
        duration,
        5,
        0.5,
    )
    .unwrap();
    sc.grippers.push(GripperConstraint {
        vertices: vec![0],
        trajectory: traj.clone(),
    });
    let start = sc.mesh.rest_vertices[0];
    let dx = sc.grid.cell_size;
    simulate_with(&sc, &p, horizon, horizon, 10, |s| {
        let t = s.step as f64 * sc.grid.dt;
        let target = start + traj.position_at(t) - traj.waypoints[0];
        assert!((s.positions[0] - target).norm() <= 0.5 * dx);
    })
    .unwrap();
}

#[test]
fn ground_stops_a_falling_sheet() {
    let p = cotton();
    let mut sc = scene(sheet(10, 0.12), &p, 0.0);
    sc.colliders.push(Collider::ground(0.1, 0.5));
    let r = simulate(&sc, &p, 3000, 3000).unwrap();
    let lowest = r
        .final_state()
        .positions
        .iter()
        .map(|x| x.z)
        .fold(f64::INFINITY, f64::min);
    assert!(lowest > 0.1 - 2.0 * sc.grid.cell_size, "lowest vertex at {lowest}");
    assert!(lowest < 0.115);
}

#[test]
fn invalid_setups_are_rejected() {
    let p = cotton();
    let mut sc = scene(sheet(10, 0.2), &p, 0.0);
    sc.grid.dt *= 10.0;
    assert!(matches!(simulate(&sc, &p, 1, 1), Err(Error::Config(_))));

    let mut sc = scene(sheet(10, 0.2), &p, 0.0);
    sc.grippers.push(hold(vec![999], 1.0));
    sc.grippers.push(hold(vec![0], 1e-9));
    match simulate(&sc, &p, 10, 1) {
        Err(Error::Config(v)) => assert_eq!(v.len(), 2, "{v:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn leaving_the_domain_aborts_with_step() {
    let p = cotton();
    let mut sc = scene(sheet(10, 0.02), &p, 0.0);
    sc.grid.gravity = Vector3::new(0.0, 0.0, -200.0);
    match simulate(&sc, &p, 2000, 1) {
        Err(Error::OutOfDomain { step, .. }) => assert!(step > 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn explosive_state_is_reported_unstable() {
    let p = cotton();
    let sc = scene(sheet(10, 0.2), &p, 0.0);
    let mut s = sc.initial_state(&p).unwrap();
    for v in &mut s.velocities {
        *v = Vector3::new(100.0, 0.0, 0.0);
    }
    assert!(matches!(step(&sc, &s, &p, &[]), Err(Error::Unstable { step: 1, .. })));
    s.velocities[3] = Vector3::new(f64::NAN, 0.0, 0.0);
    assert!(matches!(step(&sc, &s, &p, &[]), Err(Error::Unstable { .. })));
}

// Adjoint checks.

fn linear_seeds(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
        .collect()
}

fn weighted_sum(x: &[Vector3<f64>], w: &[Vector3<f64>]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a.dot(b)).sum()
}

fn tilted_triangle() -> Scene {
    let p = cotton();
    let mesh = ClothMesh::new(
        vec![
            Vector3::new(0.2, 0.2, 0.25),
            Vector3::new(0.22, 0.2, 0.25),
            Vector3::new(0.2, 0.22, 0.25),
        ],
        vec![[0, 1, 2]],
        1e-3,
    )
    .unwrap();
    let mut sc = scene(mesh, &p, 0.0);
    sc.initial_positions = Some(vec![
        Vector3::new(0.2, 0.2, 0.25),
        Vector3::new(0.2215, 0.2005, 0.2515),
        Vector3::new(0.1995, 0.219, 0.24925),
    ]);
    sc
}

#[test]
fn zero_seeds_give_zero_gradients() {
    let p = cotton();
    let mut sc = scene(sheet(10, 0.2), &p, 0.0);
    sc.grippers.push(hold(vec![0], 1.0));
    let r = simulate(&sc, &p, 15, 5).unwrap();
    let mut seeds = BTreeMap::new();
    seeds.insert(15, vec![Vector3::zeros(); 100]);
    let g = backward(&r.tape, &seeds).unwrap();
    assert_eq!(g.params, [0.0; 4]);
    assert!(g.trajectories[0].iter().all(|v| *v == Vector3::zeros()));
}

#[test]
fn seeds_outside_the_tape_are_rejected() {
    let p = cotton();
    let sc = scene(sheet(10, 0.2), &p, 0.0);
    let r = simulate(&sc, &p, 5, 5).unwrap();
    let mut seeds = BTreeMap::new();
    seeds.insert(6, vec![Vector3::zeros(); 100]);
    assert!(matches!(backward(&r.tape, &seeds), Err(Error::TapeMismatch(_))));
    let mut seeds = BTreeMap::new();
    seeds.insert(5, vec![Vector3::zeros(); 3]);
    assert!(matches!(backward(&r.tape, &seeds), Err(Error::TapeMismatch(_))));
}

#[test]
fn single_step_gradient_matches_central_differences() {
    let p = cotton();
    let sc = tilted_triangle();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = linear_seeds(3, &mut rng);
    let loss = |q: &ConstitutiveParams| {
        let r = simulate(&sc, q, 1, 1).unwrap();
        weighted_sum(&r.final_state().positions, &w)
    };
    let r = simulate(&sc, &p, 1, 1).unwrap();
    let mut seeds = BTreeMap::new();
    seeds.insert(1, w.clone());
    let g = backward(&r.tape, &seeds).unwrap();
    let a = p.identifiable();
    for i in 0..4 {
        let h = 1e-4 * a[i];
        let mut plus = a;
        plus[i] += h;
        let mut minus = a;
        minus[i] -= h;
        let fd = (loss(&p.with_identifiable(plus)) - loss(&p.with_identifiable(minus))) / (2.0 * h);
        let rel = (g.params[i] - fd).abs() / fd.abs().max(1e-300);
        assert!(fd != 0.0, "parameter {i} has no effect");
        assert!(rel < 1e-3, "parameter {i}: adjoint {} vs fd {fd} (rel {rel:e})", g.params[i]);
    }
}

fn drag_scene(horizon: usize) -> (Scene, ConstitutiveParams) {
    let p = cotton();
    let mesh = sheet(10, 0.1 + 0.0005);
    let mut sc = scene(mesh, &p, 1.0);
    sc.colliders.push(Collider::ground(0.1, 0.3));
    let duration = horizon as f64 * sc.grid.dt;
    let start = sc.mesh.rest_vertices[0];
    let traj = Trajectory::linear(start, start + Vector3::new(-0.8, 0.0, 0.4) * duration, duration, 4, 1.0).unwrap();
    sc.grippers.push(GripperConstraint {
        vertices: (0..10).map(|i| 10 * i).collect(),
        trajectory: traj,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    sc.initial_positions = Some(
        sc.mesh
            .rest_vertices
            .iter()
            .map(|v| v + Vector3::new(0.0004 * rng.random_range(-1.0..1.0), 0.0004 * rng.random_range(-1.0..1.0), 0.0))
            .collect(),
    );
    (sc, p)
}

#[test]
fn drag_directional_derivative_matches_finite_differences() {
    let horizon = 50;
    let (sc, p) = drag_scene(horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w = linear_seeds(sc.mesh.num_vertices(), &mut rng);
    let loss = |q: &ConstitutiveParams| {
        let r = simulate(&sc, q, horizon, horizon).unwrap();
        weighted_sum(&r.final_state().positions, &w)
    };
    let r = simulate(&sc, &p, horizon, horizon).unwrap();
    let mut seeds = BTreeMap::new();
    seeds.insert(horizon, w.clone());
    let g = backward(&r.tape, &seeds).unwrap();

    let a = p.identifiable();
    let dir: [f64; 4] = std::array::from_fn(|i| a[i] * rng.random_range(-1.0..1.0));
    let eps = 1e-4;
    let shifted = |s: f64| p.with_identifiable(std::array::from_fn(|i| a[i] + s * dir[i]));
    let fd = (loss(&shifted(eps)) - loss(&shifted(-eps))) / (2.0 * eps);
    let ad: f64 = (0..4).map(|i| g.params[i] * dir[i]).sum();
    let rel = (ad - fd).abs() / fd.abs();
    assert!(rel < 0.05, "adjoint {ad} vs fd {fd} (rel {rel:e})");
}

#[test]
fn waypoint_gradient_matches_finite_differences() {
    let horizon = 20;
    let (sc, p) = drag_scene(horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = linear_seeds(sc.mesh.num_vertices(), &mut rng);
    let loss = |s: &Scene| {
        let r = simulate(s, &p, horizon, horizon).unwrap();
        weighted_sum(&r.final_state().positions, &w)
    };
    let r = simulate(&sc, &p, horizon, horizon).unwrap();
    let mut seeds = BTreeMap::new();
    seeds.insert(horizon, w.clone());
    let g = backward(&r.tape, &seeds).unwrap();
    let h = 1e-7;
    for (k, axis) in [(1, 0), (2, 2)] {
        let mut plus = sc.clone();
        plus.grippers[0].trajectory.waypoints[k][axis] += h;
        let mut minus = sc.clone();
        minus.grippers[0].trajectory.waypoints[k][axis] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let ad = g.trajectories[0][k][axis];
        assert!((ad - fd).abs() <= 0.05 * fd.abs(), "waypoint {k}/{axis}: adjoint {ad} vs fd {fd}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scatter_conserves_mass(seed in 0u64..1000, amount in 0.0f64..0.004) {
        let p = cotton();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sc = scene(sheet(10, 0.2), &p, 0.0);
        sc.initial_positions = Some(jitter(&sc.mesh, &mut rng, amount));
        let mut s = sc.initial_state(&p).unwrap();
        for _ in 0..5 {
            prop_assert!((scattered_mass(&sc, &s) - s.total_mass()).abs() < 1e-10);
            s = step(&sc, &s, &p, &[]).unwrap();
        }
    }

    #[test]
    fn whole_cell_shifts_commute_with_one_step(seed in 0u64..1000, i in -3i32..4, j in -3i32..4, k in -3i32..4) {
        let p = cotton();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = scene(sheet(10, 0.2), &p, 0.0);
        a.initial_positions = Some(jitter(&a.mesh, &mut rng, 0.002));
        let off = Vector3::new(i as f64, j as f64, k as f64) * a.grid.cell_size;
        let sa = a.initial_state(&p).unwrap();
        let mut sb = sa.clone();
        for x in &mut sb.positions {
            *x += off;
        }
        let na = step(&a, &sa, &p, &[]).unwrap();
        let nb = step(&a, &sb, &p, &[]).unwrap();
        let back: Vec<_> = nb.positions.iter().map(|x| x - off).collect();
        prop_assert!(max_diff(&back, &na.positions) < 1e-9);
    }
}
