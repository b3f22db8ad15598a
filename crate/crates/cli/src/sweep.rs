//! Cartesian parameter sweeps executed on a worker pool.

use crate::args::{AnalysisArgs, ProblemArgs, RunArgs, ScheduleArgs};
use crate::error::{CliError, CliResult};
use crate::problem::{create, resolve};
use crate::run::{execute, write_outputs};
use plrates::analysis::{auto_fit, DEFAULT_R0};
use plrates::engine::RunStatus;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

const PROBLEM_KEYS: [&str; 6] = ["M", "K", "N", "nu", "zeta", "seed"];
const SCHEDULE_KEYS: [&str; 5] = ["alpha", "beta", "a", "b", "depth"];

/// Parse repeated `key=v1,v2,...` flags.
pub fn parse_grid(items: &[String]) -> CliResult<BTreeMap<String, Vec<f64>>> {
    let mut g = BTreeMap::new();
    for it in items {
        let (k, vs) =
            it.split_once('=').ok_or_else(|| CliError::usage(format!("grid entry {it:?} must be key=v1,v2")))?;
        let vals = vs
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::usage(format!("grid value {v:?} is not a number"))))
            .collect::<CliResult<Vec<_>>>()?;
        g.insert(k.trim().to_string(), vals);
    }
    Ok(g)
}

/// Grid points in index order; the last key varies fastest.
pub fn expand(grid: &BTreeMap<String, Vec<f64>>) -> CliResult<Vec<Vec<(String, f64)>>> {
    if grid.is_empty() || grid.values().any(|v| v.is_empty()) {
        return Err(CliError::usage("sweep grid is empty"));
    }
    for k in grid.keys() {
        if !PROBLEM_KEYS.contains(&k.as_str()) && !SCHEDULE_KEYS.contains(&k.as_str()) {
            return Err(CliError::usage(format!("unknown grid key {k:?}")));
        }
    }
    let mut points = vec![Vec::new()];
    for (k, vals) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((k.clone(), *v));
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

struct Outcome {
    status: String,
    message: String,
    xi_exp: Option<f64>,
}

pub struct SweepSpec<'a> {
    pub problem: &'a ProblemArgs,
    pub schedule: &'a ScheduleArgs,
    pub run: &'a RunArgs,
    pub analysis: &'a AnalysisArgs,
    pub grid: &'a BTreeMap<String, Vec<f64>>,
    pub jobs: usize,
    pub out_dir: &'a Path,
}

/// Runs every grid point and writes `index.csv`; returns the number of failed points.
pub fn sweep(spec: &SweepSpec) -> CliResult<usize> {
    let points = expand(spec.grid)?;
    std::fs::create_dir_all(spec.out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", spec.out_dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                run_point(spec, i, p).unwrap_or_else(|e| Outcome {
                    status: "error".into(),
                    message: e.message,
                    xi_exp: None,
                })
            })
            .collect()
    });

    let mut w = create(&spec.out_dir.join("index.csv"))?;
    let keys: Vec<&String> = spec.grid.keys().collect();
    let head: Vec<&str> = keys.iter().map(|k| k.as_str()).collect();
    writeln!(w, "index,{},file,status,xi_exp,message", head.join(","))?;
    let mut failed = 0;
    for (i, (p, o)) in points.iter().zip(&outcomes).enumerate() {
        if o.status != "completed" && o.status != "converged" {
            failed += 1;
        }
        let vals: Vec<String> = p.iter().map(|(_, v)| v.to_string()).collect();
        let xi = o.xi_exp.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{i},{},{},{},{xi},{}",
            vals.join(","),
            file_name(i),
            o.status,
            o.message.replace([',', '\n'], ";")
        )?;
    }
    w.flush()?;
    Ok(failed)
}

fn file_name(i: usize) -> String {
    format!("sweep_{i:04}.csv")
}

fn run_point(spec: &SweepSpec, i: usize, point: &[(String, f64)]) -> CliResult<Outcome> {
    let mut pa = spec.problem.clone();
    let mut sa = spec.schedule.clone();
    for (k, v) in point {
        let _ = pa.set(k, *v) || sa.set(k, *v);
    }
    let problem = resolve(&pa)?;
    let r0 = spec.analysis.r0.unwrap_or(DEFAULT_R0);
    let (traj, meta) = execute(&problem, &sa, spec.run, Some(r0))?;
    write_outputs(&spec.out_dir.join(file_name(i)), &traj, &meta)?;
    let (status, message) = match traj.status {
        RunStatus::Completed => ("completed", String::new()),
        RunStatus::Converged { step } => ("converged", format!("converged at step {step}")),
        RunStatus::Diverged { step } => ("diverged", format!("diverged at step {step}")),
    };
    let xi_exp = match (meta.zeta, meta.lambda_low) {
        (Some(z), Some(l)) if status != "diverged" => auto_fit(&traj, z, meta.nu, l, r0).ok().map(|f| f.exponent),
        _ => None,
    };
    Ok(Outcome { status: status.into(), message, xi_exp })
}
