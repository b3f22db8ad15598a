//! Building problems from generator flags or files.

use crate::args::{count_from, ProblemArgs};
use crate::error::{CliError, CliResult};
use plrates::io;
use plrates::spectrum::{
    cg_lowerbound_operator, discrete_powerlaw, equal_mass_discretization, gaussian_mix_dataset, normalize_dataset,
    ntk_gram, sd_lowerbound_measure, spectral_measure_from_gram, synthetic_diagonal, DiscreteMeasure, OperatorProblem,
    PowerLawSpec,
};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;

/// Gram matrices above this size are refused; the eigensolver is dense.
const MAX_GRAM: usize = 6000;

#[derive(Debug, Clone)]
pub enum LoadedProblem {
    Measure(DiscreteMeasure),
    Operator { problem: OperatorProblem, zeta: Option<f64>, nu: Option<f64> },
}

impl LoadedProblem {
    pub fn zeta(&self) -> Option<f64> {
        match self {
            LoadedProblem::Measure(m) => m.meta().zeta,
            LoadedProblem::Operator { zeta, .. } => *zeta,
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match self {
            LoadedProblem::Measure(m) => m.meta().nu,
            LoadedProblem::Operator { nu, .. } => *nu,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LoadedProblem::Measure(m) => format!("measure with {} atoms", m.len()),
            LoadedProblem::Operator { problem, .. } => format!("bidiagonal operator N={}", problem.operator.ncols()),
        }
    }

    /// Smallest atom, or smallest positive eigenvalue of `JJ†`.
    pub fn lambda_low(&self) -> CliResult<f64> {
        match self {
            LoadedProblem::Measure(m) => Ok(plrates::analysis::lambda_low(m, None)?),
            LoadedProblem::Operator { problem, .. } => {
                let ev = problem.gram_eigenvalues()?;
                ev.iter()
                    .copied()
                    .filter(|v| *v > 0.0)
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
                    .ok_or_else(|| CliError::data("operator has no positive eigenvalue"))
            }
        }
    }

    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "na".into());
        match self {
            LoadedProblem::Measure(m) => format!(
                "atoms={} zeta={} nu={} total_mass={:.10e}",
                m.len(),
                fmt(m.meta().zeta),
                fmt(m.meta().nu),
                m.total_mass()
            ),
            LoadedProblem::Operator { problem, zeta, nu } => {
                let t: f64 = problem.target.iter().map(|v| v * v).sum();
                format!(
                    "bidiagonal={} zeta={} nu={} total_mass={t:.10e}",
                    problem.operator.ncols(),
                    fmt(*zeta),
                    fmt(*nu)
                )
            }
        }
    }
}

fn need(v: Option<f64>, name: &str) -> CliResult<f64> {
    v.ok_or_else(|| CliError::usage(format!("--{name} required for this generator")))
}

pub fn generate(kind: &str, a: &ProblemArgs) -> CliResult<LoadedProblem> {
    let p = match kind {
        "diagonal" => {
            LoadedProblem::Measure(synthetic_diagonal(count_from(a.m, "M")?, need(a.nu, "nu")?, need(a.zeta, "zeta")?)?)
        }
        "powerlaw" => {
            LoadedProblem::Measure(discrete_powerlaw(need(a.zeta, "zeta")?, need(a.nu, "nu")?, count_from(a.k, "K")?)?)
        }
        "sd-lowerbound" => LoadedProblem::Measure(sd_lowerbound_measure(
            need(a.zeta, "zeta")?,
            need(a.nu, "nu")?,
            count_from(a.k, "K")?,
        )?),
        "equal-mass" => LoadedProblem::Measure(equal_mass_discretization(
            PowerLawSpec::new(need(a.zeta, "zeta")?)?,
            count_from(a.m, "M")?,
        )?),
        "chain" => {
            let (zeta, nu) = (need(a.zeta, "zeta")?, need(a.nu, "nu")?);
            let problem = cg_lowerbound_operator(zeta, nu, count_from(a.n, "N")?)?;
            for w in &problem.warnings {
                eprintln!("warning: {w}");
            }
            LoadedProblem::Operator { problem, zeta: Some(zeta), nu: Some(nu) }
        }
        "gram" => LoadedProblem::Measure(gram_measure(a)?),
        other => return Err(CliError::usage(format!("unknown generator {other:?}"))),
    };
    Ok(p)
}

fn gram_measure(a: &ProblemArgs) -> CliResult<DiscreteMeasure> {
    let (inputs, targets) = match (&a.data, &a.mixture) {
        (Some(path), None) => {
            let d = read_dataset(path, a.data_format.as_deref())?;
            (d.inputs, d.targets)
        }
        (None, Some(spec)) => {
            let seed = a.seed.ok_or_else(|| CliError::usage("--seed is mandatory for synthetic data"))?;
            let v: Vec<&str> = spec.split(',').collect();
            if v.len() != 4 {
                return Err(CliError::usage("--mixture expects dim,clusters,per_cluster,separation"));
            }
            let c = |i: usize| crate::args::parse_count(v[i], "--mixture");
            let sep: f64 = v[3].parse().map_err(|_| CliError::usage("--mixture separation must be a number"))?;
            gaussian_mix_dataset(c(0)?, c(1)?, c(2)?, sep, seed)?
        }
        _ => return Err(CliError::usage("gram generator needs exactly one of --data or --mixture")),
    };
    if inputs.len() > MAX_GRAM {
        return Err(CliError::usage(format!("{} samples exceed the Gram size limit {MAX_GRAM}", inputs.len())));
    }
    let inputs = if a.normalize { normalize_dataset(&inputs)? } else { inputs };
    let gram = ntk_gram(&inputs)?;
    Ok(spectral_measure_from_gram(&gram, &targets)?)
}

pub fn read_dataset(path: &Path, format: Option<&str>) -> CliResult<io::Dataset> {
    let fmt = format
        .map(str::to_owned)
        .unwrap_or_else(|| path.extension().and_then(|e| e.to_str()).unwrap_or("csv").to_ascii_lowercase());
    let f = open(path)?;
    match fmt.as_str() {
        "csv" | "txt" => Ok(io::read_csv_dataset(BufReader::new(f))?),
        "bin" => Ok(io::read_binary_dataset(BufReader::new(f))?),
        other => Err(CliError::usage(format!("unknown dataset format {other:?}"))),
    }
}

pub fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn read_problem_file(path: &Path) -> CliResult<LoadedProblem> {
    let mut r = BufReader::new(open(path)?);
    let head = {
        let buf = r.fill_buf()?;
        String::from_utf8_lossy(&buf[..buf.len().min(16)]).into_owned()
    };
    if head.starts_with("atoms=") {
        Ok(LoadedProblem::Measure(io::read_measure(r)?))
    } else if head.starts_with("bidiagonal=") {
        let (problem, zeta, nu) = io::read_operator(r)?;
        Ok(LoadedProblem::Operator { problem, zeta, nu })
    } else {
        Err(CliError::data(format!("{} is neither a measure nor an operator file", path.display())))
    }
}

pub fn write_problem(path: &Path, p: &LoadedProblem) -> CliResult<()> {
    let w = create(path)?;
    match p {
        LoadedProblem::Measure(m) => io::write_measure(w, m)?,
        LoadedProblem::Operator { problem, zeta, nu } => io::write_operator(w, problem, *zeta, *nu)?,
    }
    Ok(())
}

/// The problem named by `--problem` or by a generator.
pub fn resolve(a: &ProblemArgs) -> CliResult<LoadedProblem> {
    match (&a.problem, &a.generator) {
        (Some(path), None) => read_problem_file(path),
        (None, Some(kind)) => generate(kind, a),
        (Some(_), Some(_)) => Err(CliError::usage("give either --problem or --generator, not both")),
        (None, None) => Err(CliError::usage("no problem given (--problem FILE or --generator KIND)")),
    }
}
