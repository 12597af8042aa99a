//! Output artifacts: trajectory CSV, summary and error JSON, state checkpoints.
//!
//! Every artifact carries the resolved configuration and seed. Numbers in CSV
//! files are written with 17 significant digits so they round-trip exactly.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::diagnostics::Trajectory;
use crate::error::{Error, Result};
use crate::runner::RunOutput;
use crate::sweep::SweepResult;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const STATE_FILE: &str = "state.bin";
pub const ERROR_FILE: &str = "error.json";
pub const SWEEP_CSV_FILE: &str = "sweep.csv";
pub const SWEEP_JSON_FILE: &str = "sweep.json";

/// Round-trip representation of a float.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header line embedding configuration and seed, prefixed with `#`.
pub fn config_comment(config: &Value, seed: u64) -> String {
    format!("# qnet {VERSION} seed={seed} config={config}")
}

/// Columns `t, P, [Z], n_0.., [sz_0..]`; a missing `Z` is an empty field.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory, config: &RunConfig) -> Result<()> {
    writeln!(w, "{}", config_comment(&serde_json::to_value(config)?, config.seed))?;
    let mut header = vec!["t".to_string(), "P".to_string()];
    if traj.z.is_some() {
        header.push("Z".into());
    }
    header.extend((0..traj.n_sites).map(|i| format!("n_{i}")));
    if traj.sigma_z.is_some() {
        header.extend((0..traj.n_sites).map(|i| format!("sz_{i}")));
    }
    writeln!(w, "{}", header.join(","))?;
    let mut row = Vec::with_capacity(header.len());
    for k in 0..traj.len() {
        row.clear();
        row.push(fmt17(traj.times[k]));
        row.push(fmt17(traj.imbalance[k]));
        if let Some(z) = &traj.z {
            row.push(z[k].map(fmt17).unwrap_or_default());
        }
        row.extend(traj.occupations[k].iter().map(|&x| fmt17(x)));
        if let Some(sz) = &traj.sigma_z {
            row.extend(sz[k].iter().map(|&x| fmt17(x)));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn drift_json(traj: &Trajectory) -> Value {
    traj.drift
        .iter()
        .map(|d| (d.name.clone(), json!({"initial": d.initial, "max_abs": d.max_abs, "max_rel": d.max_rel()})))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

pub fn summary_json(out: &RunOutput) -> Result<Value> {
    Ok(json!({
        "version": VERSION,
        "engine": out.config.engine,
        "seed": out.config.seed,
        "eta": out.summary.eta,
        "P_min": out.summary.p_min,
        "summary": out.summary,
        "drift": drift_json(&out.trajectory),
        "metadata": out.trajectory.metadata,
        "wall_time_s": out.wall_time,
        // the window for P_min is a default of ours unless configured
        "window": {"t_max": out.config.t_max, "samples": out.config.samples},
        "config": out.config,
    }))
}

/// Machine-readable failure report.
pub fn error_json(err: &Error, config: Option<&RunConfig>) -> Value {
    let mut v = json!({
        "version": VERSION,
        "error": {"kind": err.kind(), "message": err.to_string()},
    });
    if let Some(field) = err.field() {
        v["error"]["field"] = json!(field);
    }
    if let Some(cfg) = config {
        v["seed"] = json!(cfg.seed);
        v["config"] = serde_json::to_value(cfg).unwrap_or(Value::Null);
    }
    v
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Write trajectory, summary and (for quantum runs) the final state into `dir`.
pub fn write_run_artifacts(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join(TRAJECTORY_FILE);
    let mut w = BufWriter::new(File::create(&path)?);
    write_trajectory_csv(&mut w, &out.trajectory, &out.config)?;
    w.flush()?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    write_json(&path, &summary_json(out)?)?;
    written.push(path);

    if let Some(psi) = &out.final_state {
        let path = dir.join(STATE_FILE);
        let mut w = BufWriter::new(File::create(&path)?);
        psi.write_checkpoint(&mut w)?;
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Mean `eta` as a CSV matrix: one column per value of the last axis, one row
/// per value of the first (a single row for one-axis sweeps). Points where
/// every replicate failed are left empty.
pub fn write_sweep_csv<W: Write>(mut w: W, res: &SweepResult) -> Result<()> {
    let plan = &res.plan;
    writeln!(w, "{}", config_comment(&serde_json::to_value(plan)?, plan.base_seed()))?;
    let last = plan.axes.last().ok_or_else(|| Error::invalid("axes", "sweep has no axes"))?;
    let cell = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    let means = res.mean_eta();
    let cols: Vec<String> = last.values.iter().map(|&v| fmt17(v)).collect();
    match plan.axes.as_slice() {
        [only] => {
            writeln!(w, "{},{}", only.param.name(), cols.join(","))?;
            let row: Vec<String> = means.iter().map(|&m| cell(m)).collect();
            writeln!(w, "eta,{}", row.join(","))?;
        }
        [first, second] => {
            writeln!(w, "{}\\{},{}", first.param.name(), second.param.name(), cols.join(","))?;
            for (i, chunk) in means.chunks(second.values.len()).enumerate() {
                let row: Vec<String> = chunk.iter().map(|&m| cell(m)).collect();
                writeln!(w, "{},{}", fmt17(first.values[i]), row.join(","))?;
            }
        }
        _ => return Err(Error::invalid("axes", "a sweep has one or two axes")),
    }
    Ok(())
}

/// Sweep metadata: plan, engine, seeds, resolved base configuration and
/// per-point statistics, failures and wall times.
pub fn sweep_json(res: &SweepResult) -> Result<Value> {
    let base = res.plan.point_config(&vec![0; res.shape.len()], 0).ok();
    Ok(json!({
        "version": VERSION,
        "engine": base.as_ref().map(|c| c.engine),
        "seed": res.plan.base_seed(),
        "plan": res.plan,
        "resolved_first_point": base,
        "shape": res.shape,
        "points": res.points,
        "failures": res.n_failures(),
        "wall_time_s": res.wall_time,
    }))
}

pub fn write_sweep_artifacts(dir: &Path, res: &SweepResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(SWEEP_CSV_FILE);
    let mut w = BufWriter::new(File::create(&csv)?);
    write_sweep_csv(&mut w, res)?;
    w.flush()?;
    let meta = dir.join(SWEEP_JSON_FILE);
    write_json(&meta, &sweep_json(res)?)?;
    Ok(vec![csv, meta])
}
