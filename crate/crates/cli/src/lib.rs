//! The `aepcloth` command: every failure ends with one JSON line on stderr,
//! `{"error": <category>, "message": ...}`, and a category-specific exit code.

use std::ffi::OsString;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use aepcloth::analysis::{ablation_sweep, StatsSummary};
use aepcloth::identify::{multi_start_identify, IdentificationRun};
use aepcloth::io::*;
use aepcloth::loss::ChamferMode;
use aepcloth::sim::{gradcheck, simulate};
use aepcloth::trajopt::{final_state_loss, optimize_trajectory};
use aepcloth::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

/// Tolerances reported by `gradcheck`; the first decides the exit code.
pub const GRADCHECK_TOLERANCES: [f64; 3] = [1e-3, 1e-4, 1e-6];

#[derive(Parser, Debug)]
#[command(name = "aepcloth", version, about = "Differentiable MPM cloth simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scene config (TOML).
    #[arg(long, alias = "scene")]
    config: PathBuf,
    /// Output root; each run gets its own directory below it.
    #[arg(long, env = "AEPCLOTH_OUT", default_value = "runs")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the forward simulation and write OBJ frames.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames_stride: Option<usize>,
    },
    /// Recover (E, nu, k, gamma) from point-cloud observations.
    Identify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        starts: Option<usize>,
        /// one_way or bidirectional
        #[arg(long)]
        mode: Option<ChamferMode>,
    },
    /// Optimize gripper waypoints toward a target point set.
    Trajopt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Parameter ablation sweep and energy contributions.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Compare adjoint parameter gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and write synthetic point-cloud observations.
    SynthObs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames_stride: Option<usize>,
    },
    /// Pooled statistics of a CSV column.
    Stats {
        /// CSV files; each is one group unless --group-by is given.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long, default_value = "E")]
        column: String,
        #[arg(long)]
        group_by: Option<String>,
        #[arg(long, env = "AEPCLOTH_OUT", default_value = "runs")]
        out: PathBuf,
    },
}

/// A failure that is not an [`Error`] from the library.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            category: e.category(),
            message: e.to_string(),
        }
    }
}

/// Exit status of each error category.
pub fn exit_code(category: &str) -> i32 {
    match category {
        "usage" => 2,
        "config" => 3,
        "parse" => 4,
        "io" => 5,
        "observation" | "missing-frames" | "empty-set" => 6,
        "domain" => 7,
        "degenerate" | "unstable" | "out-of-domain" | "cfl" => 8,
        "gradient" | "tape" => 9,
        "trajectory" => 10,
        "stats" => 11,
        "gradcheck" => 12,
        "identify" => 13,
        _ => 70,
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs the command line with real standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Runs the command line, writing normal output to `out` and diagnostics to
/// `err`. Never panics: a panic inside a command becomes category `internal`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            return report(
                err,
                CliError {
                    category: "usage",
                    message: e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or(""),
                },
            )
        }
    };
    match catch_unwind(AssertUnwindSafe(|| dispatch(cli.command, out))) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => report(err, e),
        Err(p) => {
            let message = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            report(err, CliError { category: "internal", message })
        }
    }
}

fn report(err: &mut dyn Write, e: CliError) -> i32 {
    let _ = writeln!(err, "{}", json!({"error": e.category, "message": e.message}));
    exit_code(e.category)
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    write_text(path, &(serde_json::to_string_pretty(v).expect("json serializes") + "\n"))?;
    Ok(())
}

fn load(common: &Common) -> CliResult<(Setup, u64)> {
    let setup = Setup::load(&common.config)?;
    let seed = common.seed.unwrap_or(setup.config.seed);
    Ok((setup, seed))
}

fn dispatch(command: Command, out: &mut dyn Write) -> CliResult<()> {
    let started = Instant::now();
    match command {
        Command::Simulate { common, frames_stride } => {
            let (setup, seed) = load(&common)?;
            let stride = frames_stride.unwrap_or(setup.config.frames_stride);
            if stride == 0 {
                return Err(Error::Config(vec!["frames-stride must be at least 1".into()]).into());
            }
            let (mut art, dir) = RunArtifact::create(&common.out, "simulate", &setup, seed)?;
            let r = simulate(&setup.scene, &setup.params, setup.horizon, stride)?;
            for f in &r.frames {
                let name = PathBuf::from(format!("frames/frame_{:06}.obj", f.step));
                save_frame(&dir.join(&name), &f.positions, &setup.scene.mesh)?;
                art.frames.push(name);
            }
            let last = r.final_state();
            let material = setup.params.material()?;
            let summary = json!({
                "horizon": setup.horizon,
                "dt": setup.scene.grid.dt,
                "frames": r.frames.len(),
                "total_mass": last.total_mass(),
                "center_of_mass": last.center_of_mass().as_slice(),
                "kinetic_energy": last.kinetic_energy(),
                "elastic_energy": last.elastic_energy(&setup.scene.mesh, &material).total(),
                "wall_clock_s": started.elapsed().as_secs_f64(),
            });
            write_json(&dir.join("summary.json"), &summary)?;
            art.reports.push("summary.json".into());
            art.save(&dir)?;
            finish(out, &dir)
        }
        Command::SynthObs { common, frames_stride } => {
            let (setup, seed) = load(&common)?;
            let o = setup.observe();
            let every = frames_stride.or(o.every).unwrap_or(setup.horizon).max(1);
            let (mut art, dir) = RunArtifact::create(&common.out, "synth-obs", &setup, seed)?;
            let r = simulate(&setup.scene, &setup.params, setup.horizon, every)?;
            let settings = SynthSettings {
                camera: o.camera.map(Into::into),
                noise: o.noise,
                dropout: o.dropout,
                samples: o.samples,
                vertices: o.vertices,
                seed,
            };
            let seq = synthesize_observations(&r.frames[1..], &setup.scene.mesh, &settings)?;
            let obs_dir = dir.join("observations");
            save_pointcloud_sequence(&obs_dir, &seq)?;
            art.frames.push(PathBuf::from("observations").join(MANIFEST));
            for f in &seq.frames {
                art.frames.push(PathBuf::from(format!("observations/frame_{:06}.ply", f.step)));
            }
            art.save(&dir)?;
            finish(out, &dir)
        }
        Command::Identify { common, starts, mode } => {
            let (setup, seed) = load(&common)?;
            let obs_path = setup
                .observations_path()
                .ok_or_else(|| Error::Config(vec!["identify.observations is required".into()]))?;
            let obs = load_pointcloud_sequence(&obs_path)?;
            let mut cfg = setup.identification_config(obs)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let starts = starts.unwrap_or(setup.identify_starts());
            let (mut art, dir) = RunArtifact::create(&common.out, "identify", &setup, seed)?;
            let ms = multi_start_identify(&cfg, starts, seed)?;
            let ok: Vec<(usize, &IdentificationRun)> =
                ms.runs.iter().enumerate().filter_map(|(i, r)| r.as_ref().ok().map(|r| (i, r))).collect();
            write_text(&dir.join("trace.csv"), &identification_csv(&ok))?;
            let runs: Vec<Value> = ms
                .runs
                .iter()
                .zip(&ms.initial)
                .map(|(r, init)| match r {
                    Ok(r) => json!({"initial": init, "run": r, "best_params": r.best_params(), "best_loss": r.best().loss}),
                    Err(e) => json!({"initial": init, "error": e}),
                })
                .collect();
            write_json(&dir.join("trace.json"), &Value::from(runs))?;
            let summary = json!({
                "threshold_sim_units": cfg.scaled_threshold(),
                "mean": ms.stats.mean,
                "cov_percent": ms.stats.cov,
                "runs": ms.runs.len(),
                "failed": ms.runs.len() - ok.len(),
                "wall_clock_s": started.elapsed().as_secs_f64(),
            });
            write_json(&dir.join("summary.json"), &summary)?;
            art.traces.extend(["trace.csv".into(), "trace.json".into()]);
            art.reports.push("summary.json".into());
            art.save(&dir)?;
            if ok.is_empty() {
                let first = ms.runs.into_iter().find_map(|r| r.err()).unwrap_or_default();
                return Err(CliError {
                    category: "identify",
                    message: format!("every run failed; first: {first}"),
                });
            }
            finish(out, &dir)
        }
        Command::Trajopt { common, episodes } => {
            let (setup, seed) = load(&common)?;
            let target = setup.trajopt_target()?;
            let mut cfg = setup.trajopt_config();
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            let (mut art, dir) = RunArtifact::create(&common.out, "trajopt", &setup, seed)?;
            let res = optimize_trajectory(&setup.scene, &setup.params, &setup.scene.controls(), &target, &cfg)?;
            write_trajectory_csv(&dir.join("trajectory.csv"), &res.trajectories)?;
            write_text(&dir.join("trace.csv"), &trajopt_csv(&res.trace))?;
            write_json(&dir.join("trace.json"), &json!({"termination": res.termination, "trace": res.trace}))?;
            let achieved = final_state_loss(&setup.scene, &setup.params, &res.trajectories, &target, cfg.horizon)?;
            write_json(
                &dir.join("summary.json"),
                &json!({
                    "first_loss": res.trace.first().map(|r| r.loss),
                    "best_loss": achieved,
                    "episodes": res.trace.len(),
                    "wall_clock_s": started.elapsed().as_secs_f64(),
                }),
            )?;
            art.traces.extend(["trajectory.csv".into(), "trace.csv".into(), "trace.json".into()]);
            art.reports.push("summary.json".into());
            art.save(&dir)?;
            finish(out, &dir)
        }
        Command::Ablate { common } => {
            let (setup, seed) = load(&common)?;
            let actions = setup.actions()?;
            let (mut art, dir) = RunArtifact::create(&common.out, "ablate", &setup, seed)?;
            let report = ablation_sweep(&actions, &setup.params, &setup.ablation_levels())?;
            write_text(&dir.join("ablation.csv"), &ablation_csv(&report))?;
            write_json(&dir.join("ablation.json"), &json!(report))?;
            art.reports.extend(["ablation.csv".into(), "ablation.json".into()]);
            art.save(&dir)?;
            finish(out, &dir)
        }
        Command::Gradcheck { common } => {
            let (setup, seed) = load(&common)?;
            let (mut art, dir) = RunArtifact::create(&common.out, "gradcheck", &setup, seed)?;
            let report = gradcheck(&setup.scene, &setup.params, setup.horizon, seed)?;
            let verdicts: Vec<Value> = GRADCHECK_TOLERANCES
                .iter()
                .map(|t| json!({"tolerance": t, "pass": report.passes(*t)}))
                .collect();
            write_json(&dir.join("gradcheck.json"), &json!({"report": report, "verdicts": verdicts}))?;
            art.reports.push("gradcheck.json".into());
            art.save(&dir)?;
            for e in &report.entries {
                let _ = writeln!(
                    out,
                    "{:>6} adjoint {:+.9e} fd {:+.9e} rel {:.3e}",
                    e.parameter, e.adjoint, e.finite_difference, e.relative_error
                );
            }
            for t in GRADCHECK_TOLERANCES {
                let _ = writeln!(out, "tolerance {t:e}: {}", if report.passes(t) { "pass" } else { "fail" });
            }
            finish(out, &dir)?;
            if !report.passes(GRADCHECK_TOLERANCES[0]) {
                return Err(CliError {
                    category: "gradcheck",
                    message: format!(
                        "max relative error {:.3e} exceeds {:e}",
                        report.max_relative_error, GRADCHECK_TOLERANCES[0]
                    ),
                });
            }
            Ok(())
        }
        Command::Stats { input, column, group_by, out: root } => {
            let mut groups = Vec::new();
            for f in &input {
                let g = read_csv_column(f, &column, group_by.as_deref())?;
                match group_by {
                    Some(_) => groups.extend(g),
                    None => groups.push((f.display().to_string(), g.into_iter().flat_map(|(_, v)| v).collect())),
                }
            }
            let names: Vec<String> = groups.iter().map(|g| g.0.clone()).collect();
            let samples: Vec<Vec<f64>> = groups.into_iter().map(|g| g.1).collect();
            let summary = StatsSummary::from_groups(&samples)?;
            let v = json!({"column": column, "groups": names, "summary": summary});
            std::fs::create_dir_all(&root).map_err(|e| Error::Io { path: root.clone(), source: e })?;
            let path = root.join(format!("stats-{column}.json"));
            write_json(&path, &v)?;
            let _ = writeln!(out, "{}", serde_json::to_string(&v).expect("json serializes"));
            Ok(())
        }
    }
}

/// Prints the run directory once its artifact re-loads.
fn finish(out: &mut dyn Write, dir: &Path) -> CliResult<()> {
    RunArtifact::load(dir)?;
    let _ = writeln!(out, "{}", dir.display());
    Ok(())
}
