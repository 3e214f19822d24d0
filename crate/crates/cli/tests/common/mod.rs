//! Fixture set and mutation harness shared by the fuzz and acceptance targets.

use std::collections::BTreeSet;
use std::path::Path;

use aepcloth_cli::{exit_code, run_with};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SCENE: &str = r#"horizon = 3
frames_stride = 1
seed = 2

[mesh]
path = "mesh.obj"

[grid]
min = [0.0, 0.0, 0.0]
max = [0.5, 0.5, 0.5]
resolution = 8

[material]
young_modulus = 600.0
poisson_ratio = 0.15
contact_stiffness = 6500.0
shear_stiffness = 1700.0
density = 20.0

[[colliders]]
kind = "sphere"
center = [0.25, 0.25, 0.0]
radius = 0.1
friction = 0.2

[[grippers]]
vertices = [0, 1]
trajectory = "traj.csv"

[observe]
samples = 50
noise = 0.001
dropout = 0.1

[identify]
observations = "obs"
initial_scale = 0.9
max_iterations = 1

[trajopt]
target = "target.ply"
episodes = 1

[ablation]
levels = [0.5]
"#;

const MESH: &str = "v 0.2 0.2 0.3\nv 0.3 0.2 0.3\nv 0.2 0.3 0.3\nv 0.3 0.3 0.3\nf 1 2 3\nf 2 4 3\n";

const TRAJ: &str = "gripper,time,x,y,z\n0,0,0,0,0\n0,0.05,0.001,0,0\n";

const PLY: &str = "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nend_header\n\
                   0.2 0.2 0.3\n0.3 0.2 0.3\n0.25 0.3 0.3\n";

const MANIFEST: &str = "[calibration]\nscale = 1.0\n\n[[frames]]\nstep = 3\nfile = \"frame.ply\"\n";

const STATS: &str = "run,E\n0,1.0\n0,2.0\n1,3.0\n";

const TOKENS: &[&str] = &[
    "nan", "inf", "-1", "0", "-0.0", "1e308", "7", "\"x\"", "[]", "true", "=", "[[", "]", ",", "#", "\n", "/", "f", "v", "1/2/3",
];

fn mutate(text: &str, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut b = text.as_bytes().to_vec();
    for _ in 0..rng.random_range(1..=3) {
        let at = rng.random_range(0..=b.len());
        match rng.random_range(0..7) {
            0 if !b.is_empty() => {
                let i = at.min(b.len() - 1);
                b[i] ^= 1 << rng.random_range(0..8);
            }
            1 if !b.is_empty() => {
                b.remove(at.min(b.len() - 1));
            }
            2 => b.insert(at, rng.random_range(0x20..0x7f)),
            3 => {
                let t = TOKENS.choose(rng).unwrap();
                let end = (at + rng.random_range(0..4)).min(b.len());
                b.splice(at..end, t.bytes());
            }
            4 => {
                let lines: Vec<&[u8]> = b.split(|&c| c == b'\n').collect();
                let k = rng.random_range(0..lines.len());
                let mut out = Vec::new();
                for (i, l) in lines.iter().enumerate() {
                    if i != k {
                        out.extend_from_slice(l);
                        out.push(b'\n');
                    }
                }
                b = out;
            }
            5 => {
                let lines: Vec<Vec<u8>> = b.split(|&c| c == b'\n').map(<[u8]>::to_vec).collect();
                let k = rng.random_range(0..lines.len());
                let mut out = Vec::new();
                for (i, l) in lines.iter().enumerate() {
                    out.extend_from_slice(l);
                    out.push(b'\n');
                    if i == k {
                        out.extend_from_slice(l);
                        out.push(b'\n');
                    }
                }
                b = out;
            }
            _ => b.truncate(at),
        }
    }
    b
}

pub fn write_fixture(dir: &Path) {
    std::fs::write(dir.join("scene.toml"), SCENE).unwrap();
    std::fs::write(dir.join("mesh.obj"), MESH).unwrap();
    std::fs::write(dir.join("traj.csv"), TRAJ).unwrap();
    std::fs::write(dir.join("target.ply"), PLY).unwrap();
    std::fs::create_dir_all(dir.join("obs")).unwrap();
    std::fs::write(dir.join("obs/manifest.toml"), MANIFEST).unwrap();
    std::fs::write(dir.join("obs/frame.ply"), PLY).unwrap();
    std::fs::write(dir.join("stats.csv"), STATS).unwrap();
}

/// Runs one command and checks the outcome contract.
pub fn check(args: &[&str], label: &str) -> i32 {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_with(std::iter::once("aepcloth").chain(args.iter().copied()), &mut out, &mut err);
    if code != 0 {
        let err = String::from_utf8_lossy(&err);
        let line = err.lines().last().unwrap_or_else(|| panic!("{label}: no error line"));
        let v: Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{label}: {e}: {line}"));
        let category = v["error"].as_str().unwrap_or_else(|| panic!("{label}: {line}"));
        assert_ne!(category, "internal", "{label}: {line}");
        assert_eq!(code, exit_code(category), "{label}");
        assert!(v["message"].is_string());
    }
    code
}

/// Runs `cases` mutated fixtures; returns the number of failing runs and
/// the distinct exit codes seen.
pub fn fuzz_fixtures(cases: usize, seed: u64) -> (usize, BTreeSet<i32>) {
    let files: [(&str, &str, &str); 7] = [
        ("scene.toml", SCENE, "simulate"),
        ("mesh.obj", MESH, "simulate"),
        ("traj.csv", TRAJ, "simulate"),
        ("obs/manifest.toml", MANIFEST, "identify"),
        ("obs/frame.ply", PLY, "identify"),
        ("target.ply", PLY, "trajopt"),
        ("stats.csv", STATS, "stats"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut categories = BTreeSet::new();
    for case in 0..cases {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path());
        let (name, text, cmd) = files[case % files.len()];
        std::fs::write(tmp.path().join(name), mutate(text, &mut rng)).unwrap();
        let cfg = tmp.path().join("scene.toml");
        let out = tmp.path().join("runs");
        let stats = tmp.path().join("stats.csv");
        let (cfg, out, stats) = (cfg.to_str().unwrap(), out.to_str().unwrap(), stats.to_str().unwrap());
        let label = format!("case {case} ({name})");
        let code = match cmd {
            "stats" => check(&["stats", "--input", stats, "--group-by", "run", "--out", out], &label),
            _ => {
                let scene_cmd = if name == "scene.toml" { ["simulate", "synth-obs", "gradcheck", "ablate"][case % 4] } else { cmd };
                check(&[scene_cmd, "--config", cfg, "--out", out], &label)
            }
        };
        if code != 0 {
            failures += 1;
            categories.insert(code);
        }
    }
    (failures, categories)
}
