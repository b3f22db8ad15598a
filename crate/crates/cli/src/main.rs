mod args;
mod config;
mod convert;
mod error;
mod problem;
mod report;
mod run;
mod svg;
mod sweep;
mod validate;

use args::{parse_count, AnalysisArgs, ProblemArgs, RunArgs, ScheduleArgs};
use clap::{Parser, Subcommand};
use error::{CliError, CliResult};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Only environment variable consulted: default directory for outputs.
const OUT_DIR_ENV: &str = "PLRATES_OUT_DIR";

#[derive(Parser)]
#[command(name = "plrates", version, about = "Loss-rate experiments for quadratic problems with power-law spectra")]
struct Cli {
    /// TOML config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a measure or operator file.
    Generate {
        /// diagonal, powerlaw, sd-lowerbound, equal-mass, chain or gram.
        kind: String,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one schedule and write a trajectory CSV plus `<csv>.json`.
    Run {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a Cartesian grid of configurations.
    Sweep {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// `key=v1,v2,...`; repeatable.
        #[arg(long)]
        grid: Vec<String>,
        /// Grid points run concurrently.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Oracle-equivalence suites: theorem3 (CG closed form), theorem11 (chain operator), representation, all.
    Validate {
        suite: String,
        /// Atom count of the equal-mass measures.
        #[arg(long = "M", default_value = "1e5")]
        m: String,
        /// Dimension of the chain operator.
        #[arg(long = "N", default_value = "200")]
        n: String,
    },
    /// Fit exponents of trajectory CSVs and compare them with theory.
    Report {
        /// Trajectory CSV files.
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
        /// Measure or operator file the runs used.
        #[arg(long)]
        problem: Option<PathBuf>,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, allow_hyphen_values = true)]
        zeta: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        nu: Option<f64>,
        /// Index range `lo:hi` for eigenvalue and partial-sum exponent fits.
        #[arg(long)]
        k_range: Option<String>,
        /// Report text file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// JSON-lines sidecar; defaults to `<output>.jsonl`.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Exit with the validation code when a comparison fails.
        #[arg(long)]
        strict: bool,
    },
    /// Convert IDX or CSV data to the binary dataset format.
    ConvertDataset {
        input: PathBuf,
        /// idx, csv or bin.
        #[arg(long, default_value = "idx")]
        format: String,
        /// IDX label file (idx input).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Map labels to 1 for this class and 0 otherwise.
        #[arg(long)]
        positive_class: Option<f64>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(error::code::USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let cfg = config::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Generate { kind, problem, output } => {
            let pa = problem.merge(&cfg.problem);
            let p = problem::generate(&kind, &pa)?;
            let path = output.unwrap_or_else(|| out_dir().join(format!("{kind}.txt")));
            problem::write_problem(&path, &p)?;
            println!("{} -> {}", p.summary(), path.display());
        }
        Cmd::Run { problem, schedule, run, analysis, output } => {
            let pa = problem.merge(&cfg.problem);
            let sa = schedule.merge(&cfg.schedule);
            let ra = run.merge(&cfg.run);
            let aa = analysis.merge(&cfg.analysis);
            let p = problem::resolve(&pa)?;
            let (traj, meta) = run::execute(&p, &sa, &ra, aa.r0)?;
            let path = output
                .or_else(|| cfg.run.out.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| out_dir().join(format!("{}.csv", meta.schedule.name())));
            run::write_outputs(&path, &traj, &meta)?;
            for ev in &meta.events {
                eprintln!("note: step {}: {}", ev.step, ev.message);
            }
            let last = traj.records.last().map(|r| format!("loss[{}]={:.6e}", r.step, r.loss)).unwrap_or_default();
            println!("{} {} steps, {last} -> {}", meta.schedule.name(), meta.n_steps, path.display());
            if let Some(e) = run::status_error(&meta) {
                return Err(e);
            }
        }
        Cmd::Sweep { problem, schedule, run, analysis, grid, jobs, output } => {
            let pa = problem.merge(&cfg.problem);
            let sa = schedule.merge(&cfg.schedule);
            let ra = run.merge(&cfg.run);
            let aa = analysis.merge(&cfg.analysis);
            let grid =
                if grid.is_empty() { cfg.sweep.grid.clone().unwrap_or_default() } else { sweep::parse_grid(&grid)? };
            let dir = output
                .or_else(|| cfg.sweep.out_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| out_dir().join("sweep"));
            let jobs = jobs.or(cfg.sweep.jobs).unwrap_or_else(rayon::current_num_threads);
            let spec = sweep::SweepSpec {
                problem: &pa,
                schedule: &sa,
                run: &ra,
                analysis: &aa,
                grid: &grid,
                jobs,
                out_dir: &dir,
            };
            let failed = sweep::sweep(&spec)?;
            println!("index -> {}", dir.join("index.csv").display());
            if failed > 0 {
                return Err(CliError::numerical(format!("{failed} grid points failed; see index.csv")));
            }
        }
        Cmd::Validate { suite, m, n } => {
            let checks = validate::run_suite(&suite, parse_count(&m, "--M")?, parse_count(&n, "--N")?)?;
            print!("{}", validate::render(&checks));
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(CliError::validation(format!("{failed} checks failed")));
            }
        }
        Cmd::Report { trajectories, problem, schedule, analysis, zeta, nu, k_range, output, json, svg, strict } => {
            let aa = analysis.merge(&cfg.analysis);
            let k_range = k_range
                .map(|s| {
                    let (a, b) = s.split_once(':').ok_or_else(|| CliError::usage("--k-range must be lo:hi"))?;
                    Ok::<_, CliError>((parse_count(a, "--k-range")?, parse_count(b, "--k-range")?))
                })
                .transpose()?;
            let inputs = report::ReportInputs {
                trajectories: &trajectories,
                problem: problem.as_deref(),
                schedule: &schedule,
                analysis: &aa,
                zeta,
                nu,
                k_range,
            };
            let out = report::build(&inputs)?;
            match &output {
                Some(path) => {
                    write_text(path, &out.text)?;
                    println!("report -> {}", path.display());
                }
                None => print!("{}", out.text),
            }
            let json = json.or_else(|| output.as_ref().map(|p| with_suffix(p, ".jsonl")));
            if let Some(path) = json {
                report::write_records(&path, &out.records)?;
            }
            if let Some(path) = svg {
                write_text(&path, &out.svg)?;
            }
            if strict && !out.all_pass {
                return Err(CliError::validation("at least one exponent comparison failed"));
            }
        }
        Cmd::ConvertDataset { input, format, labels, positive_class, limit, output } => {
            let spec = convert::ConvertSpec {
                input: &input,
                format: &format,
                labels: labels.as_deref(),
                positive_class,
                limit,
                output: &output,
            };
            let ds = convert::convert(&spec)?;
            println!("{} samples of dimension {} -> {}", ds.inputs.len(), ds.inputs[0].len(), output.display());
        }
    }
    Ok(())
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = problem::create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}
