use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;

use super::{read_text, write_text};
use crate::analysis::AblationReport;
use crate::error::{Error, Result};
use crate::identify::IdentificationRun;
use crate::trajectory::Trajectory;
use crate::trajopt::EpisodeRecord;

fn csv_text<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>>(f: F) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

fn opt(x: Option<f64>) -> String {
    x.map(|x| x.to_string()).unwrap_or_default()
}

/// `gripper,time,x,y,z` rows, one per waypoint.
pub fn trajectory_csv(trajectories: &[Trajectory]) -> String {
    csv_text(|w| {
        w.write_record(["gripper", "time", "x", "y", "z"])?;
        for (g, t) in trajectories.iter().enumerate() {
            for (time, p) in t.times.iter().zip(&t.waypoints) {
                w.write_record([g.to_string(), time.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
            }
        }
        Ok(())
    })
}

pub fn write_trajectory_csv(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    write_text(path, &trajectory_csv(trajectories))
}

/// Trajectories keyed by gripper id, rows kept in file order.
pub fn parse_trajectory_csv(text: &str, path: &Path, max_speed: f64) -> Result<BTreeMap<usize, Trajectory>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["gripper", "time", "x", "y", "z"] {
        return Err(Error::parse(path, 1, "header must be gripper,time,x,y,z"));
    }
    let mut rows: BTreeMap<usize, (Vec<f64>, Vec<Vector3<f64>>)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let g: usize = rec[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad gripper id '{}'", &rec[0])))?;
        let v: Vec<f64> = (1..5).map(|i| super::number(path, line, &rec[i])).collect::<Result<_>>()?;
        let e = rows.entry(g).or_default();
        e.0.push(v[0]);
        e.1.push(Vector3::new(v[1], v[2], v[3]));
    }
    rows.into_iter()
        .map(|(g, (times, pts))| {
            Trajectory::new(times, pts, max_speed)
                .map(|t| (g, t))
                .map_err(|e| Error::parse(path, 0, format!("gripper {g}: {e}")))
        })
        .collect()
}

pub fn read_trajectory_csv(path: &Path, max_speed: f64) -> Result<BTreeMap<usize, Trajectory>> {
    parse_trajectory_csv(&read_text(path)?, path, max_speed)
}

/// One row per iteration; `run` distinguishes multi-start runs.
pub fn identification_csv(runs: &[(usize, &IdentificationRun)]) -> String {
    csv_text(|w| {
        w.write_record([
            "run", "iteration", "E", "nu", "k", "gamma", "loss", "grad_E", "grad_nu", "grad_k", "grad_gamma", "step_norm",
            "best_loss", "is_best", "wall_clock_s",
        ])?;
        for (run, r) in runs {
            for x in &r.records {
                let mut row = vec![run.to_string(), x.iteration.to_string()];
                row.extend(x.params.iter().map(f64::to_string));
                row.push(x.loss.to_string());
                row.extend(x.gradient.iter().map(f64::to_string));
                row.extend([
                    x.step_norm.to_string(),
                    x.best_loss.to_string(),
                    u8::from(x.is_best).to_string(),
                    x.wall_clock_s.to_string(),
                ]);
                w.write_record(row)?;
            }
        }
        Ok(())
    })
}

pub fn trajopt_csv(trace: &[EpisodeRecord]) -> String {
    csv_text(|w| {
        w.write_record(["episode", "loss", "best_loss", "is_best", "gradient_norm", "step_norm", "wall_clock_s"])?;
        for r in trace {
            w.write_record([
                r.episode.to_string(),
                r.loss.to_string(),
                r.best_loss.to_string(),
                u8::from(r.is_best).to_string(),
                r.gradient_norm.to_string(),
                r.step_norm.to_string(),
                r.wall_clock_s.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// One row per (action, parameter, level) cell, in report order.
pub fn ablation_csv(report: &AblationReport) -> String {
    csv_text(|w| {
        w.write_record(["action", "parameter", "level", "value", "distance", "contribution", "error"])?;
        for a in &report.actions {
            for c in &a.cells {
                let contribution = a.contributions.map(|k| k[c.parameter.index()]);
                w.write_record([
                    a.action.clone(),
                    c.parameter.to_string(),
                    c.level.to_string(),
                    c.value.to_string(),
                    opt(c.distance),
                    opt(contribution),
                    c.error.clone().unwrap_or_default(),
                ])?;
            }
            if let Some(e) = &a.error {
                w.write_record([a.action.as_str(), "", "", "", "", "", e.as_str()])?;
            }
        }
        Ok(())
    })
}

/// Values of `column` grouped by the optional `group_by` column, groups in
/// order of first appearance. Empty cells are skipped.
pub fn read_csv_column(path: &Path, column: &str, group_by: Option<&str>) -> Result<Vec<(String, Vec<f64>)>> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, 1, format!("no column '{name}'")))
    };
    let col = find(column)?;
    let grp = group_by.map(find).transpose()?;
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = rec.get(col).unwrap_or("");
        if cell.is_empty() {
            continue;
        }
        let x = super::number(path, line, cell)?;
        let key = grp.map_or(String::new(), |g| rec.get(g).unwrap_or("").to_string());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(x),
            None => groups.push((key, vec![x])),
        }
    }
    Ok(groups)
}
