//! Flag groups shared by several subcommands, and their merge with the config file.

use crate::config::{AnalysisSection, ProblemSection, RunSection, ScheduleSection, StepsValue};
use crate::error::{CliError, CliResult};
use clap::Args;
use plrates::engine::{Orthogonality, Recording, Schedule};
use std::path::PathBuf;

#[derive(Debug, Clone, Default, Args)]
pub struct ProblemArgs {
    /// Measure or band-operator file.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Generator kind: diagonal, powerlaw, sd-lowerbound, equal-mass, chain, gram.
    #[arg(long)]
    pub generator: Option<String>,
    /// Atom count for diagonal / equal-mass.
    #[arg(long = "M")]
    pub m: Option<f64>,
    /// Atom count for powerlaw / sd-lowerbound.
    #[arg(long = "K")]
    pub k: Option<f64>,
    /// Dimension of the chain operator.
    #[arg(long = "N")]
    pub n: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub nu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub zeta: Option<f64>,
    /// Dataset for the gram generator (last column is the target).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// csv or bin; inferred from the extension when absent.
    #[arg(long)]
    pub data_format: Option<String>,
    /// Standardize features before building the Gram matrix.
    #[arg(long)]
    pub normalize: bool,
    /// Synthetic data for the gram generator: `dim,clusters,per_cluster,separation`.
    #[arg(long)]
    pub mixture: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ProblemArgs {
    pub fn merge(mut self, c: &ProblemSection) -> Self {
        self.problem = self.problem.or_else(|| c.file.as_ref().map(PathBuf::from));
        self.generator = self.generator.or_else(|| c.generator.clone());
        self.m = self.m.or(c.m);
        self.k = self.k.or(c.k);
        self.n = self.n.or(c.n);
        self.nu = self.nu.or(c.nu);
        self.zeta = self.zeta.or(c.zeta);
        self.data = self.data.or_else(|| c.data.as_ref().map(PathBuf::from));
        self.data_format = self.data_format.or_else(|| c.data_format.clone());
        self.normalize |= c.normalize.unwrap_or(false);
        self.mixture = self.mixture.or_else(|| c.mixture.clone());
        self.seed = self.seed.or(c.seed);
        self
    }

    /// Apply a sweep override `key = value`.
    pub fn set(&mut self, key: &str, v: f64) -> bool {
        match key {
            "M" => self.m = Some(v),
            "K" => self.k = Some(v),
            "N" => self.n = Some(v),
            "nu" => self.nu = Some(v),
            "zeta" => self.zeta = Some(v),
            "seed" => self.seed = Some(v as u64),
            _ => return false,
        }
        true
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScheduleArgs {
    /// gd, hb, jacobi-hb, scheduled-gd, sd, cg, stable-cg.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Jacobi parameter a (> -1).
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Jacobi parameter b (> -1), default 0.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Largest scheduled-GD block is 2^depth.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Stable-CG orthogonality: target or parameter.
    #[arg(long)]
    pub orthogonality: Option<String>,
    /// Accept constant rates outside the stability region.
    #[arg(long)]
    pub allow_unstable: bool,
}

impl ScheduleArgs {
    pub fn merge(mut self, c: &ScheduleSection) -> Self {
        self.schedule = self.schedule.or_else(|| c.kind.clone());
        self.alpha = self.alpha.or(c.alpha);
        self.beta = self.beta.or(c.beta);
        self.a = self.a.or(c.a);
        self.b = self.b.or(c.b);
        self.depth = self.depth.or(c.depth);
        self.orthogonality = self.orthogonality.or_else(|| c.orthogonality.clone());
        self.allow_unstable |= c.allow_unstable.unwrap_or(false);
        self
    }

    pub fn set(&mut self, key: &str, v: f64) -> bool {
        match key {
            "alpha" => self.alpha = Some(v),
            "beta" => self.beta = Some(v),
            "a" => self.a = Some(v),
            "b" => self.b = Some(v),
            "depth" => self.depth = Some(v as u32),
            _ => return false,
        }
        true
    }

    pub fn resolve(&self) -> CliResult<Schedule> {
        let kind = self.schedule.as_deref().ok_or_else(|| CliError::usage("no schedule given (--schedule)"))?;
        let alpha = self.alpha.unwrap_or(1.0);
        let a = self.a.unwrap_or(1.0);
        let b = self.b.unwrap_or(0.0);
        let s = match kind {
            "gd" => Schedule::Constant { alpha, beta: self.beta.unwrap_or(0.0) },
            "hb" => Schedule::Constant { alpha, beta: self.beta.unwrap_or(0.9) },
            "jacobi-hb" => Schedule::JacobiHb { a, b },
            "scheduled-gd" => Schedule::ScheduledGd { a, b, depth: self.depth.unwrap_or(20) },
            "sd" => Schedule::SteepestDescent,
            "cg" => Schedule::ConjugateGradients,
            "stable-cg" => Schedule::StableConjugateGradients,
            other => return Err(CliError::usage(format!("unknown schedule {other:?}"))),
        };
        s.validate(self.allow_unstable)?;
        Ok(s)
    }

    pub fn orthogonality(&self) -> CliResult<Orthogonality> {
        match self.orthogonality.as_deref() {
            None | Some("target") => Ok(Orthogonality::Target),
            Some("parameter") => Ok(Orthogonality::Parameter),
            Some(o) => Err(CliError::usage(format!("unknown orthogonality {o:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Steps {
    Fixed(usize),
    /// Far enough to cover the automatic fit window.
    Auto,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Number of steps, or `auto` to cover the automatic fit window.
    #[arg(long)]
    pub steps: Option<String>,
    /// Comma-separated λ values tracked as unit-mass probes.
    #[arg(long, value_delimiter = ',')]
    pub probes: Option<Vec<f64>>,
    /// all, geometric:<points>, or steps:<n1>,<n2>,...
    #[arg(long)]
    pub record: Option<String>,
    /// auto, spectral or dense.
    #[arg(long)]
    pub representation: Option<String>,
    /// Disable data parallelism inside a run.
    #[arg(long)]
    pub sequential: bool,
}

impl RunArgs {
    pub fn merge(mut self, c: &RunSection) -> Self {
        self.steps = self.steps.or_else(|| match &c.steps {
            Some(StepsValue::Count(n)) => Some(n.to_string()),
            Some(StepsValue::Word(w)) => Some(w.clone()),
            None => None,
        });
        self.probes = self.probes.or_else(|| c.probes.clone());
        self.record = self.record.or_else(|| c.record.clone());
        self.representation = self.representation.or_else(|| c.representation.clone());
        self
    }

    pub fn steps(&self) -> CliResult<Steps> {
        match self.steps.as_deref() {
            None => Err(CliError::usage("number of steps required (--steps N or --steps auto)")),
            Some("auto") => Ok(Steps::Auto),
            Some(s) => parse_count(s, "--steps").map(Steps::Fixed),
        }
    }

    pub fn recording(&self, n_steps: usize) -> CliResult<Recording> {
        let spec = self.record.as_deref().unwrap_or("all");
        if spec == "all" {
            return Ok(Recording::All);
        }
        if let Some(p) = spec.strip_prefix("geometric:") {
            return Ok(Recording::geometric(n_steps, parse_count(p, "--record geometric")?));
        }
        if let Some(list) = spec.strip_prefix("steps:") {
            let v = list.split(',').map(|s| parse_count(s, "--record steps")).collect::<CliResult<Vec<_>>>()?;
            return Ok(Recording::Steps(v));
        }
        Err(CliError::usage(format!("unknown recording {spec:?}")))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalysisArgs {
    /// Controlled-loss fraction r0 for the threshold step.
    #[arg(long)]
    pub r0: Option<f64>,
    /// Explicit fit window `lo:hi`.
    #[arg(long)]
    pub window: Option<String>,
    /// Exponent tolerance; default 0.05·ξ + 0.05.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Override λ_low.
    #[arg(long)]
    pub lambda_low: Option<f64>,
}

impl AnalysisArgs {
    pub fn merge(mut self, c: &AnalysisSection) -> Self {
        self.r0 = self.r0.or(c.r0);
        self.window = self.window.or_else(|| c.window.map(|[a, b]| format!("{a}:{b}")));
        self.tolerance = self.tolerance.or(c.tolerance);
        self.lambda_low = self.lambda_low.or(c.lambda_low);
        self
    }

    pub fn window(&self) -> CliResult<Option<(usize, usize)>> {
        let Some(w) = &self.window else { return Ok(None) };
        let (a, b) = w.split_once(':').ok_or_else(|| CliError::usage(format!("window {w:?} must be lo:hi")))?;
        Ok(Some((parse_count(a, "--window")?, parse_count(b, "--window")?)))
    }
}

/// Nonnegative integer, accepting forms such as `1e6`.
pub fn parse_count(s: &str, what: &str) -> CliResult<usize> {
    let s = s.trim();
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| CliError::usage(format!("{what}: cannot parse {s:?} as a count")))?;
    if v < 0.0 || v.fract() != 0.0 || v > 1e15 {
        return Err(CliError::usage(format!("{what}: {s:?} is not a nonnegative integer")));
    }
    Ok(v as usize)
}

pub fn count_from(v: Option<f64>, name: &str) -> CliResult<usize> {
    let v = v.ok_or_else(|| CliError::usage(format!("--{name} required")))?;
    parse_count(&v.to_string(), &format!("--{name}"))
}
