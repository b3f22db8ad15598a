use crate::args::{AnalysisArgs, ScheduleArgs};
use crate::error::{CliError, CliResult};
use crate::problem::{create, read_problem_file, LoadedProblem};
use crate::run::load_trajectory;
use crate::svg::{self, Series};
use plrates::analysis::{
    compare, fit_power_law, schedule_profile, spectral_exponents, trajectory_threshold, Window, DEFAULT_R0,
};
use plrates::engine::Trajectory;
use plrates::oracle::{theoretical_exponent, Assumptions};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// One machine-readable record per check.
#[derive(Debug, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub name: String,
    pub schedule: Option<String>,
    pub xi_exp: Option<f64>,
    pub xi_theor: Option<f64>,
    pub delta: Option<f64>,
    pub tolerance: Option<f64>,
    pub window: Option<(usize, usize)>,
    pub n_th: Option<f64>,
    pub r_squared: Option<f64>,
    pub prefactor: Option<f64>,
    pub pass: Option<bool>,
    pub message: Option<String>,
}

impl CheckRecord {
    fn new(check: &str, name: &str) -> Self {
        CheckRecord {
            check: check.into(),
            name: name.into(),
            schedule: None,
            xi_exp: None,
            xi_theor: None,
            delta: None,
            tolerance: None,
            window: None,
            n_th: None,
            r_squared: None,
            prefactor: None,
            pass: None,
            message: None,
        }
    }
}

pub struct ReportInputs<'a> {
    pub trajectories: &'a [PathBuf],
    pub problem: Option<&'a Path>,
    pub schedule: &'a ScheduleArgs,
    pub analysis: &'a AnalysisArgs,
    pub zeta: Option<f64>,
    pub nu: Option<f64>,
    pub k_range: Option<(usize, usize)>,
}

pub struct ReportOutput {
    pub text: String,
    pub records: Vec<CheckRecord>,
    pub svg: String,
    pub all_pass: bool,
}

pub fn build(inp: &ReportInputs) -> CliResult<ReportOutput> {
    let problem: Option<LoadedProblem> = inp.problem.map(read_problem_file).transpose()?;
    let mut text = String::new();
    let mut records = Vec::new();
    let mut series = Vec::new();
    let mut all_pass = true;
    let r0 = inp.analysis.r0.unwrap_or(DEFAULT_R0);
    let window = inp.analysis.window()?;

    let mut spectral_zeta = None;
    if let Some(LoadedProblem::Measure(m)) = &problem {
        let range = inp.k_range.or_else(|| {
            (m.meta().zeta.is_none() || m.meta().nu.is_none()).then(|| (1.max(m.len() / 100), m.len() / 2))
        });
        if let Some((lo, hi)) = range {
            let mut rec = CheckRecord::new("spectrum", "problem");
            rec.window = Some((lo, hi));
            match spectral_exponents(m, lo, hi) {
                Ok(e) => {
                    text.push_str(&format!(
                        "spectrum  nu={:.4}  kappa={:.4}  zeta=kappa/nu={:.4}  k in [{lo}, {hi}]\n",
                        e.nu, e.kappa, e.zeta
                    ));
                    spectral_zeta = Some((e.zeta, e.nu));
                    rec.message = Some(format!("nu={} kappa={} zeta={}", e.nu, e.kappa, e.zeta));
                }
                Err(e) => {
                    text.push_str(&format!("spectrum  estimate failed: {e}\n"));
                    rec.message = Some(e.to_string());
                }
            }
            records.push(rec);
        }
    }

    for path in inp.trajectories {
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (csv, meta) = load_trajectory(path)?;
        let schedule = match (&inp.schedule.schedule, &meta) {
            (Some(_), _) => inp.schedule.resolve()?,
            (None, Some(m)) => m.schedule,
            (None, None) => {
                return Err(CliError::usage(format!("{name}: no sidecar metadata; pass --schedule")));
            }
        };
        let zeta = inp
            .zeta
            .or(problem.as_ref().and_then(|p| p.zeta()))
            .or(meta.as_ref().and_then(|m| m.zeta))
            .or(spectral_zeta.map(|z| z.0));
        let nu = inp
            .nu
            .or(problem.as_ref().and_then(|p| p.nu()))
            .or(meta.as_ref().and_then(|m| m.nu))
            .or(spectral_zeta.map(|z| z.1));
        let lambda_low = match inp.analysis.lambda_low {
            Some(v) => Some(v),
            None => match &problem {
                Some(p) => Some(p.lambda_low()?),
                None => meta.as_ref().and_then(|m| m.lambda_low),
            },
        };
        let alpha_mean = meta.as_ref().and_then(|m| m.alpha_mean).or_else(|| {
            let a: Vec<f64> = csv.records.iter().map(|r| r.alpha).collect();
            (!a.is_empty()).then(|| a.iter().sum::<f64>() / a.len() as f64)
        });
        let traj = Trajectory {
            problem: meta.as_ref().map(|m| m.problem.clone()).unwrap_or_default(),
            schedule,
            probe_grid: csv.probe_grid.clone(),
            records: csv.records.clone(),
            status: csv.status,
            events: Vec::new(),
            alpha_mean,
            orthogonality_defect: None,
        };
        let (kind, algo, sampling) = schedule_profile(&schedule);
        let mut rec = CheckRecord::new("fit", &name);
        rec.schedule = Some(schedule.name().into());
        let points = csv.records.iter().map(|r| (r.step as f64, r.loss)).collect();
        let mut s = Series { label: schedule.name().into(), points, fit: None, n_th: None };

        let fitted = (|| -> CliResult<_> {
            let n_th = match (zeta, lambda_low) {
                (Some(z), Some(l)) => Some(trajectory_threshold(&traj, z, nu, l, r0)?),
                _ => None,
            };
            let w = match (window, n_th) {
                (Some((lo, hi)), _) => Window::Explicit { lo, hi },
                (None, Some(n_th)) => Window::Auto { kind, n_th },
                (None, None) => {
                    return Err(CliError::usage("auto window needs ζ and λ_low; pass --window or a problem file"))
                }
            };
            let mut fit = fit_power_law(&traj, &w, sampling)?;
            fit.n_th = n_th;
            let pred = match zeta {
                Some(z) => {
                    let assume = if nu.is_some() { Assumptions::CdfEigendecay } else { Assumptions::CdfOnly };
                    Some(theoretical_exponent(algo, z, nu, assume)?)
                }
                None => None,
            };
            Ok((fit, pred))
        })();
        match fitted {
            Ok((fit, pred)) => {
                rec.xi_exp = Some(fit.exponent);
                rec.window = Some(fit.window);
                rec.n_th = fit.n_th;
                rec.r_squared = Some(fit.r_squared);
                rec.prefactor = Some(fit.prefactor);
                let theor = match &pred {
                    Some(p) => {
                        let c = compare(&fit, p, inp.analysis.tolerance);
                        rec.xi_theor = Some(c.xi_theor);
                        rec.delta = Some(c.delta);
                        rec.tolerance = Some(c.tolerance);
                        rec.pass = Some(c.pass);
                        all_pass &= c.pass;
                        format!("({:.4})", c.xi_theor)
                    }
                    None => "(na)".into(),
                };
                let verdict = match rec.pass {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "-",
                };
                let n_th = fit.n_th.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "na".into());
                text.push_str(&format!(
                    "{:<28} {:<13} {:>8.4} {:<10} window [{}, {}]  n_th={}  R2={:.6}  C={:.4e}  {}\n",
                    name,
                    schedule.name(),
                    fit.exponent,
                    theor,
                    fit.window.0,
                    fit.window.1,
                    n_th,
                    fit.r_squared,
                    fit.prefactor,
                    verdict
                ));
                s.label = format!("{} {:.2} {}", schedule.name(), fit.exponent, theor);
                s.fit = Some((fit.window.0 as f64, fit.window.1 as f64, fit.prefactor, fit.exponent));
                s.n_th = fit.n_th;
            }
            Err(e) => {
                all_pass = false;
                rec.pass = Some(false);
                rec.message = Some(e.message.clone());
                text.push_str(&format!("{:<28} {:<13} fit failed: {}\n", name, schedule.name(), e.message));
            }
        }
        records.push(rec);
        series.push(s);
    }
    let svg = svg::render("loss vs step", &series);
    Ok(ReportOutput { text, records, svg, all_pass })
}

pub fn write_records(path: &Path, records: &[CheckRecord]) -> CliResult<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| CliError::data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
