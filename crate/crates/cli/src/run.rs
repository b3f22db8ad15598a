use crate::args::{RunArgs, ScheduleArgs, Steps};
use crate::error::{CliError, CliResult};
use crate::problem::{create, open, LoadedProblem};
use plrates::analysis::{schedule_profile, threshold_step, trajectory_threshold, DEFAULT_R0};
use plrates::engine::{dense_twin, run, Parallelism, Problem, RunEvent, RunOptions, RunStatus, Schedule, Trajectory};
use plrates::io::{read_trajectory_csv, write_trajectory_csv};
use serde::{Deserialize, Serialize};
use std::io::BufReader;
use std::path::{Path, PathBuf};

/// Run descriptor stored next to each trajectory CSV as `<csv>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub schedule: Schedule,
    pub problem: String,
    pub representation: String,
    pub n_steps: usize,
    pub status: RunStatus,
    pub alpha_mean: Option<f64>,
    pub orthogonality_defect: Option<f64>,
    pub zeta: Option<f64>,
    pub nu: Option<f64>,
    pub lambda_low: Option<f64>,
    pub events: Vec<RunEvent>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn representation(p: &LoadedProblem, choice: Option<&str>) -> CliResult<(Problem, &'static str)> {
    Ok(match (p, choice.unwrap_or("auto")) {
        (LoadedProblem::Measure(m), "auto" | "spectral") => (Problem::Spectral(m.clone()), "spectral"),
        (LoadedProblem::Measure(m), "dense") => (Problem::Dense(dense_twin(m)?), "dense"),
        (LoadedProblem::Operator { problem, .. }, "auto" | "dense") => (Problem::Dense(problem.clone()), "dense"),
        (LoadedProblem::Operator { problem, .. }, "spectral") => {
            (Problem::Spectral(problem.spectral_measure()?), "spectral")
        }
        (_, other) => return Err(CliError::usage(format!("unknown representation {other:?}"))),
    })
}

/// Steps needed to cover the automatic fit window.
fn auto_steps(
    problem: &Problem,
    p: &LoadedProblem,
    schedule: &Schedule,
    opts: &RunOptions,
    r0: f64,
) -> CliResult<usize> {
    let zeta = p.zeta().ok_or_else(|| CliError::usage("--steps auto needs ζ in the problem metadata"))?;
    let low = p.lambda_low()?;
    let (kind, _, _) = schedule_profile(schedule);
    let n_th = if matches!(schedule, Schedule::SteepestDescent) {
        let mut pilot_opts = opts.clone();
        pilot_opts.n_steps = 200;
        pilot_opts.probes.clear();
        pilot_opts.record = plrates::engine::Recording::Steps(vec![200]);
        let pilot = run(problem, schedule, &pilot_opts)?;
        trajectory_threshold(&pilot, zeta, p.nu(), low, r0)?
    } else {
        let (alpha, beta) = match schedule {
            Schedule::Constant { alpha, beta } => (*alpha, *beta),
            _ => (1.0, 0.0),
        };
        threshold_step(kind, zeta, p.nu(), alpha, beta, low, r0)?
    };
    let hi = match kind {
        plrates::analysis::ThresholdKind::ConstantRate => n_th / 50.0,
        plrates::analysis::ThresholdKind::JacobiScheduled => n_th / 3.0,
        plrates::analysis::ThresholdKind::StableCg => n_th,
    };
    Ok((hi.ceil() as usize + 1).max(20))
}

pub fn execute(
    p: &LoadedProblem,
    sched: &ScheduleArgs,
    ra: &RunArgs,
    r0: Option<f64>,
) -> CliResult<(Trajectory, RunMeta)> {
    let schedule = sched.resolve()?;
    let (problem, repr) = representation(p, ra.representation.as_deref())?;
    let mut opts = RunOptions::new(0);
    opts.allow_unstable = sched.allow_unstable;
    opts.orthogonality = sched.orthogonality()?;
    opts.parallelism = if ra.sequential { Parallelism::Sequential } else { Parallelism::Parallel };
    opts.probes = ra.probes.clone().unwrap_or_default();
    opts.n_steps = match ra.steps()? {
        Steps::Fixed(n) => n,
        Steps::Auto => auto_steps(&problem, p, &schedule, &opts, r0.unwrap_or(DEFAULT_R0))?,
    };
    opts.record = ra.recording(opts.n_steps)?;
    let traj = run(&problem, &schedule, &opts)?;
    let meta = RunMeta {
        schedule,
        problem: p.describe(),
        representation: repr.into(),
        n_steps: opts.n_steps,
        status: traj.status,
        alpha_mean: traj.alpha_mean,
        orthogonality_defect: traj.orthogonality_defect,
        zeta: p.zeta(),
        nu: p.nu(),
        lambda_low: p.lambda_low().ok(),
        events: traj.events.clone(),
    };
    Ok((traj, meta))
}

pub fn write_outputs(path: &Path, traj: &Trajectory, meta: &RunMeta) -> CliResult<()> {
    write_trajectory_csv(create(path)?, &traj.probe_grid, &traj.records, traj.status)?;
    let mut w = create(&sidecar_path(path))?;
    serde_json::to_writer_pretty(&mut w, meta).map_err(|e| CliError::data(e.to_string()))?;
    std::io::Write::write_all(&mut w, b"\n")?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// Trajectory CSV plus its sidecar, if one exists.
pub fn load_trajectory(path: &Path) -> CliResult<(plrates::io::CsvTrajectory, Option<RunMeta>)> {
    let csv = read_trajectory_csv(BufReader::new(open(path)?))?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let f = open(&side)?;
        Some(
            serde_json::from_reader(BufReader::new(f))
                .map_err(|e| CliError::data(format!("{}: {e}", side.display())))?,
        )
    } else {
        None
    };
    Ok((csv, meta))
}

pub fn status_error(meta: &RunMeta) -> Option<CliError> {
    match meta.status {
        RunStatus::Diverged { step } => Some(CliError::numerical(format!("run diverged at step {step}"))),
        _ => None,
    }
}
