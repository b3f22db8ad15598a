//! Power-law fits, threshold steps and rate diagnostics.

use crate::engine::{Schedule, Trajectory};
use crate::error::{param, Error, Result};
use crate::numeric::least_squares;
use crate::oracle::{AlgorithmKind, TheoryPrediction};
use crate::spectrum::DiscreteMeasure;
use serde::{Deserialize, Serialize};

/// Largest number of points entering a fit.
pub const MAX_FIT_POINTS: usize = 200;
pub const DEFAULT_R0: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdKind {
    ConstantRate,
    JacobiScheduled,
    StableCg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    #[default]
    All,
    /// Only steps `2^l - 1`, the ends of scheduled-GD blocks.
    BlockEnds,
}

impl Sampling {
    fn min_points(self) -> usize {
        match self {
            Sampling::All => 10,
            Sampling::BlockEnds => 4,
        }
    }

    fn accepts(self, n: usize) -> bool {
        match self {
            Sampling::All => true,
            Sampling::BlockEnds => (n + 1).is_power_of_two(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "window", rename_all = "kebab-case")]
pub enum Window {
    Explicit { lo: usize, hi: usize },
    Auto { kind: ThresholdKind, n_th: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub exponent: f64,
    /// `C` in `L ≈ ½·C·n^{-ξ}`.
    pub prefactor: f64,
    pub window: (usize, usize),
    pub r_squared: f64,
    pub points: usize,
    pub sampling: Sampling,
    pub theoretical: Option<f64>,
    pub n_th: Option<f64>,
}

/// Auto window for a given threshold step; the lower edge is never below 10.
///
/// Constant-rate methods only show their asymptotic exponent well before `n_th`, Jacobi
/// schedules over `[n_th/100, n_th/3]`, and stable CG reaches its regime only close to `n_th`.
pub fn auto_window(kind: ThresholdKind, n_th: f64) -> Result<(usize, usize)> {
    if !(n_th.is_finite() && n_th > 0.0) {
        return Err(Error::Window(format!("threshold step must be positive, got {n_th}")));
    }
    let (lo, hi) = match kind {
        ThresholdKind::ConstantRate => (n_th / 1e4, n_th / 50.0),
        ThresholdKind::JacobiScheduled => (n_th / 100.0, n_th / 3.0),
        ThresholdKind::StableCg => (n_th / 3.0, n_th),
    };
    let lo = (lo.ceil() as usize).max(10);
    let hi = hi.floor() as usize;
    if lo >= hi {
        return Err(Error::Window(format!("auto window [{lo}, {hi}] is empty (n_th = {n_th:.3})")));
    }
    Ok((lo, hi))
}

/// Least-squares fit of `ln L` against `ln n` over a window of the trajectory.
pub fn fit_power_law(traj: &Trajectory, window: &Window, sampling: Sampling) -> Result<FitReport> {
    let steps: Vec<usize> = traj.steps();
    let losses = traj.losses();
    let mut rep = fit_points(&steps, &losses, window, sampling)?;
    if let Window::Auto { n_th, .. } = window {
        rep.n_th = Some(*n_th);
    }
    Ok(rep)
}

/// Fit on raw `(step, loss)` pairs, steps increasing.
pub fn fit_points(steps: &[usize], losses: &[f64], window: &Window, sampling: Sampling) -> Result<FitReport> {
    if steps.len() != losses.len() {
        return param("steps and losses differ in length");
    }
    let (lo, hi) = match *window {
        Window::Explicit { lo, hi } => (lo, hi),
        Window::Auto { kind, n_th } => {
            let (lo, hi) = auto_window(kind, n_th)?;
            let last = steps.last().copied().unwrap_or(0);
            (lo, hi.min(last))
        }
    };
    if lo == 0 || lo >= hi {
        return Err(Error::Window(format!("invalid window [{lo}, {hi}]")));
    }
    let cand: Vec<usize> =
        (0..steps.len()).filter(|&i| steps[i] >= lo && steps[i] <= hi && sampling.accepts(steps[i])).collect();
    if let Some(&i) = cand.iter().find(|&&i| !(losses[i] > 0.0 && losses[i].is_finite())) {
        return Err(Error::Window(format!("nonpositive loss {} at step {} in window", losses[i], steps[i])));
    }
    let chosen = subsample(&cand, steps, MAX_FIT_POINTS);
    if chosen.len() < sampling.min_points() {
        return Err(Error::Window(format!(
            "window [{lo}, {hi}] holds {} points, need {}",
            chosen.len(),
            sampling.min_points()
        )));
    }
    let xs: Vec<f64> = chosen.iter().map(|&i| (steps[i] as f64).ln()).collect();
    let ys: Vec<f64> = chosen.iter().map(|&i| losses[i].ln()).collect();
    if ys.iter().all(|y| *y == ys[0]) {
        return Err(Error::Fit("losses are constant over the window".into()));
    }
    let f = least_squares(&xs, &ys).ok_or_else(|| Error::Fit("degenerate fit abscissae".into()))?;
    Ok(FitReport {
        exponent: -f.slope,
        prefactor: 2.0 * f.intercept.exp(),
        window: (lo, hi),
        r_squared: f.r_squared.clamp(0.0, 1.0),
        points: chosen.len(),
        sampling,
        theoretical: None,
        n_th: None,
    })
}

/// Pick at most `max` indices whose steps are closest to a geometric grid.
fn subsample(cand: &[usize], steps: &[usize], max: usize) -> Vec<usize> {
    if cand.len() <= max {
        return cand.to_vec();
    }
    let a = (steps[cand[0]] as f64).ln();
    let b = (steps[*cand.last().unwrap()] as f64).ln();
    let mut out = Vec::with_capacity(max);
    let mut j = 0;
    for t in 0..max {
        let target = a + (b - a) * t as f64 / (max - 1) as f64;
        while j + 1 < cand.len() && (steps[cand[j + 1]] as f64).ln() <= target {
            j += 1;
        }
        let pick = if j + 1 < cand.len()
            && ((steps[cand[j + 1]] as f64).ln() - target) < (target - (steps[cand[j]] as f64).ln())
        {
            j + 1
        } else {
            j
        };
        if out.last() != Some(&cand[pick]) {
            out.push(cand[pick]);
        }
    }
    out
}

/// Step beyond which the finite spectrum stops looking like a power law.
pub fn threshold_step(
    kind: ThresholdKind,
    zeta: f64,
    nu: Option<f64>,
    alpha: f64,
    beta: f64,
    lambda_low: f64,
    r0: f64,
) -> Result<f64> {
    if !(r0 > 0.0 && r0 < 1.0) {
        return param(format!("r0 must lie in (0, 1), got {r0}"));
    }
    if !(lambda_low > 0.0) {
        return param(format!("λ_low must be positive, got {lambda_low}"));
    }
    if !(zeta > 0.0) {
        return param(format!("ζ must be positive, got {zeta}"));
    }
    let c = (1.0 - r0).powf(1.0 / zeta);
    Ok(match kind {
        ThresholdKind::ConstantRate => {
            if !(alpha > 0.0) || !(0.0..1.0).contains(&beta) {
                return param(format!("constant-rate threshold needs α > 0, 0 ≤ β < 1; got α={alpha}, β={beta}"));
            }
            c * (1.0 - beta) / (alpha * lambda_low)
        }
        ThresholdKind::JacobiScheduled => c / lambda_low.sqrt(),
        ThresholdKind::StableCg => {
            let Some(nu) = nu.filter(|v| *v > 0.0) else {
                return param("stable-CG threshold needs ν");
            };
            c * lambda_low.powf(-1.0 / (nu + 2.0))
        }
    })
}

/// Lower end of the power-law region: the smallest atom unless overridden.
pub fn lambda_low(m: &DiscreteMeasure, override_value: Option<f64>) -> Result<f64> {
    if let Some(v) = override_value {
        if !(v > 0.0 && v.is_finite()) {
            return param(format!("λ_low override must be positive, got {v}"));
        }
        return Ok(v);
    }
    if m.is_empty() {
        return Err(Error::Data("empty measure has no λ_low".into()));
    }
    Ok(m.lambda_min())
}

/// Threshold kind, table entry and fit sampling for a schedule.
pub fn schedule_profile(s: &Schedule) -> (ThresholdKind, AlgorithmKind, Sampling) {
    match s {
        Schedule::Constant { beta, .. } if *beta == 0.0 => {
            (ThresholdKind::ConstantRate, AlgorithmKind::GdConstant, Sampling::All)
        }
        Schedule::Constant { .. } => (ThresholdKind::ConstantRate, AlgorithmKind::HbConstant, Sampling::All),
        Schedule::SteepestDescent => (ThresholdKind::ConstantRate, AlgorithmKind::SteepestDescent, Sampling::All),
        Schedule::JacobiHb { .. } => (ThresholdKind::JacobiScheduled, AlgorithmKind::HbJacobi, Sampling::All),
        Schedule::ScheduledGd { .. } => {
            (ThresholdKind::JacobiScheduled, AlgorithmKind::GdScheduled, Sampling::BlockEnds)
        }
        Schedule::ConjugateGradients => (ThresholdKind::StableCg, AlgorithmKind::ConjugateGradients, Sampling::All),
        Schedule::StableConjugateGradients => {
            (ThresholdKind::StableCg, AlgorithmKind::StableConjugateGradients, Sampling::All)
        }
    }
}

/// `n_th` for a finished run; steepest descent uses its mean step size.
pub fn trajectory_threshold(traj: &Trajectory, zeta: f64, nu: Option<f64>, lambda_low: f64, r0: f64) -> Result<f64> {
    let (kind, _, _) = schedule_profile(&traj.schedule);
    let (alpha, beta) = match traj.schedule {
        Schedule::Constant { alpha, beta } => (alpha, beta),
        Schedule::SteepestDescent => {
            let a =
                traj.alpha_mean.ok_or_else(|| Error::Parameter("steepest-descent run has no executed steps".into()))?;
            (a, 0.0)
        }
        _ => (1.0, 0.0),
    };
    threshold_step(kind, zeta, nu, alpha, beta, lambda_low, r0)
}

/// Fit over the auto window derived from the run itself.
pub fn auto_fit(traj: &Trajectory, zeta: f64, nu: Option<f64>, lambda_low: f64, r0: f64) -> Result<FitReport> {
    let (kind, _, sampling) = schedule_profile(&traj.schedule);
    let n_th = trajectory_threshold(traj, zeta, nu, lambda_low, r0)?;
    fit_power_law(traj, &Window::Auto { kind, n_th }, sampling)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationSummary {
    /// `sup |α_{n+2} - α_n|` over the trailing half.
    pub amplitude: f64,
    /// First step after which the period-2 deviation stays below the tolerance.
    pub settling_step: Option<usize>,
    /// Period-2 regime with a nonzero alternation `|α_{n+1} - α_n|`.
    pub period_two: bool,
}

pub fn oscillation_diagnostics(alphas: &[f64], tol: f64) -> Result<OscillationSummary> {
    if alphas.len() < 3 {
        return param("oscillation diagnostics need at least 3 rates");
    }
    let dev: Vec<f64> = alphas.windows(3).map(|w| (w[2] - w[0]).abs()).collect();
    let half = dev.len() / 2;
    let amplitude = dev[half..].iter().fold(0.0f64, |a, b| a.max(*b));
    // suffix maxima give the first n after which every deviation is small
    let mut settling = None;
    let mut run_max = 0.0f64;
    for (i, d) in dev.iter().enumerate().rev() {
        run_max = run_max.max(*d);
        if run_max < tol {
            settling = Some(i);
        } else {
            break;
        }
    }
    let n = alphas.len();
    let alternation = (alphas[n - 1] - alphas[n - 2]).abs();
    Ok(OscillationSummary { amplitude, settling_step: settling, period_two: amplitude < tol && alternation >= tol })
}

/// Diagnostics on the recorded rates of an adaptive run.
pub fn trajectory_oscillation(traj: &Trajectory, tol: f64) -> Result<OscillationSummary> {
    if !traj.schedule.is_adaptive() {
        return Err(Error::NotApplicable(format!("{} has no adaptive rates", traj.schedule.name())));
    }
    let recs: Vec<_> = match traj.status {
        crate::engine::RunStatus::Completed => &traj.records[..traj.records.len().saturating_sub(1)],
        _ => &traj.records[..],
    }
    .iter()
    .collect();
    if recs.windows(2).any(|w| w[1].step != w[0].step + 1) {
        return param("oscillation diagnostics need every step recorded");
    }
    let alphas: Vec<f64> = recs.iter().map(|r| r.alpha).collect();
    let mut s = oscillation_diagnostics(&alphas, tol)?;
    if let (Some(i), Some(first)) = (s.settling_step.as_mut(), recs.first()) {
        *i += first.step;
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pass: bool,
    pub xi_exp: f64,
    pub xi_theor: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub window: (usize, usize),
    pub n_th: Option<f64>,
}

pub fn default_tolerance(xi_theor: f64) -> f64 {
    0.05 * xi_theor + 0.05
}

pub fn compare(fit: &FitReport, prediction: &TheoryPrediction, tolerance: Option<f64>) -> Comparison {
    let tol = tolerance.unwrap_or_else(|| default_tolerance(prediction.exponent));
    let delta = (fit.exponent - prediction.exponent).abs();
    Comparison {
        pass: delta <= tol,
        xi_exp: fit.exponent,
        xi_theor: prediction.exponent,
        delta,
        tolerance: tol,
        window: fit.window,
        n_th: fit.n_th,
    }
}

/// Power-law exponents estimated from a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralExponents {
    /// `λ_k ~ k^{-ν}`.
    pub nu: f64,
    /// Tail mass `Σ_{j>k} c_j² ~ k^{-κ}`.
    pub kappa: f64,
    /// `ζ = κ/ν`.
    pub zeta: f64,
}

/// Log-log fits of eigenvalue decay and tail mass over atom indices `k_lo..=k_hi` (1-based).
pub fn spectral_exponents(m: &DiscreteMeasure, k_lo: usize, k_hi: usize) -> Result<SpectralExponents> {
    if k_lo == 0 || k_hi >= m.len() || k_hi < k_lo + 2 {
        return Err(Error::Window(format!("index range [{k_lo}, {k_hi}] invalid for {} atoms", m.len())));
    }
    let mut tail = vec![0.0; m.len() + 1];
    for k in (0..m.len()).rev() {
        tail[k] = tail[k + 1] + m.masses()[k];
    }
    let idx: Vec<usize> = {
        let mut v: Vec<usize> = (0..MAX_FIT_POINTS)
            .map(|t| {
                let a = (k_lo as f64).ln();
                let b = (k_hi as f64).ln();
                (a + (b - a) * t as f64 / (MAX_FIT_POINTS - 1) as f64).exp().round() as usize
            })
            .collect();
        v.dedup();
        v
    };
    let xs: Vec<f64> = idx.iter().map(|&k| (k as f64).ln()).collect();
    let ly: Vec<f64> = idx.iter().map(|&k| m.atoms()[k - 1].ln()).collect();
    if idx.iter().any(|&k| !(tail[k] > 0.0)) {
        return Err(Error::Window("zero tail mass inside the index range".into()));
    }
    let ty: Vec<f64> = idx.iter().map(|&k| tail[k].ln()).collect();
    let f1 = least_squares(&xs, &ly).ok_or_else(|| Error::Fit("eigenvalue fit degenerate".into()))?;
    let f2 = least_squares(&xs, &ty).ok_or_else(|| Error::Fit("tail-mass fit degenerate".into()))?;
    let nu = -f1.slope;
    let kappa = -f2.slope;
    if !(nu > 0.0) {
        return Err(Error::Fit(format!("eigenvalues do not decay (ν = {nu})")));
    }
    Ok(SpectralExponents { nu, kappa, zeta: kappa / nu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_spectral, RunOptions};
    use crate::oracle::{theoretical_exponent, Assumptions, Validity};
    use crate::spectrum::{equal_mass_discretization, synthetic_diagonal, PowerLawSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn synth(f: impl Fn(f64) -> f64, lo: usize, hi: usize) -> (Vec<usize>, Vec<f64>) {
        let steps: Vec<usize> = (lo..=hi).collect();
        let l = steps.iter().map(|&n| f(n as f64)).collect();
        (steps, l)
    }

    #[test]
    fn exact_power_law() {
        let (s, l) = synth(|n| 0.5 * n.powi(-2), 10, 1000);
        let r = fit_points(&s, &l, &Window::Explicit { lo: 10, hi: 1000 }, Sampling::All).unwrap();
        assert_relative_eq!(r.exponent, 2.0, max_relative = 1e-12);
        assert_relative_eq!(r.prefactor, 1.0, max_relative = 1e-11);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert!(r.points <= MAX_FIT_POINTS);
    }

    #[test]
    fn perturbed_power_law() {
        let (s, l) = synth(|n| 0.5 * n.powi(-2) * (1.0 + 0.3 * n.ln().sin()), 10, 1000);
        let r = fit_points(&s, &l, &Window::Explicit { lo: 10, hi: 1000 }, Sampling::All).unwrap();
        assert!((1.9..=2.1).contains(&r.exponent), "{}", r.exponent);
    }

    #[test]
    fn fit_errors() {
        let (s, mut l) = synth(|n| 1.0 / n, 1, 100);
        assert!(matches!(
            fit_points(&s, &vec![0.3; 100], &Window::Explicit { lo: 10, hi: 100 }, Sampling::All),
            Err(Error::Fit(_))
        ));
        l[50] = 0.0;
        assert!(matches!(
            fit_points(&s, &l, &Window::Explicit { lo: 10, hi: 100 }, Sampling::All),
            Err(Error::Window(_))
        ));
        assert!(matches!(
            fit_points(&s, &l, &Window::Explicit { lo: 10, hi: 15 }, Sampling::All),
            Err(Error::Window(_))
        ));
        assert!(fit_points(&s, &l, &Window::Explicit { lo: 60, hi: 40 }, Sampling::All).is_err());
    }

    #[test]
    fn block_end_sampling() {
        // staircase between block ends must not disturb the fit
        let (s, l) = synth(|n| if (n as usize + 1).is_power_of_two() { n.powi(-2) } else { 1.0 }, 1, 1 << 12);
        let r = fit_points(&s, &l, &Window::Explicit { lo: 3, hi: 4095 }, Sampling::BlockEnds).unwrap();
        assert_eq!(r.points, 11);
        assert!(r.exponent > 1.99 && r.exponent < 2.01);
    }

    #[test]
    fn threshold_examples() {
        let t = threshold_step(ThresholdKind::ConstantRate, 1.0, None, 1.0, 0.9, 1e-6, 0.5).unwrap();
        assert_relative_eq!(t, 5e4, max_relative = 1e-12);
        let t = threshold_step(ThresholdKind::JacobiScheduled, 1.0, None, 0.0, 0.0, 1e-6, 0.5).unwrap();
        assert_relative_eq!(t, 500.0, max_relative = 1e-12);
        let t = threshold_step(ThresholdKind::StableCg, 1.0, Some(1.5), 0.0, 0.0, 1e-7, 0.5).unwrap();
        assert_relative_eq!(t, 0.5 * 1e-7f64.powf(-1.0 / 3.5), max_relative = 1e-12);
        // the controlled fraction vanishes as r0 → 1 and saturates as r0 → 0
        let tiny = threshold_step(ThresholdKind::JacobiScheduled, 1.0, None, 0.0, 0.0, 1e-6, 1.0 - 1e-12).unwrap();
        assert!(tiny < 1e-6);
        let full = threshold_step(ThresholdKind::JacobiScheduled, 1.0, None, 0.0, 0.0, 1e-6, 1e-12).unwrap();
        assert_relative_eq!(full, 1e3, max_relative = 1e-9);
        assert!(threshold_step(ThresholdKind::StableCg, 1.0, None, 0.0, 0.0, 1e-7, 0.5).is_err());
        assert!(threshold_step(ThresholdKind::JacobiScheduled, 1.0, None, 0.0, 0.0, 1e-7, 1.0).is_err());
    }

    #[test]
    fn threshold_monotone_in_lambda_low() {
        for kind in [ThresholdKind::ConstantRate, ThresholdKind::JacobiScheduled, ThresholdKind::StableCg] {
            let f = |l| threshold_step(kind, 0.7, Some(1.2), 1.3, 0.4, l, 0.5).unwrap();
            let vals: Vec<f64> = (1..12).map(|e| f(10f64.powi(-e))).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn auto_window_bounds() {
        for n_th in [100.0, 1e3, 1e5, 1.58e7] {
            let (lo, hi) = auto_window(ThresholdKind::JacobiScheduled, n_th).unwrap();
            assert!(lo >= 10 && hi as f64 <= n_th / 3.0);
            let (_, hi) = auto_window(ThresholdKind::ConstantRate, n_th * 100.0).unwrap();
            assert!(hi as f64 <= n_th * 100.0 / 3.0);
        }
        assert!(auto_window(ThresholdKind::JacobiScheduled, 20.0).is_err());
        let (lo, hi) = auto_window(ThresholdKind::StableCg, 69.5).unwrap();
        assert_eq!((lo, hi), (24, 69));
    }

    #[test]
    fn lambda_low_cases() {
        let m = synthetic_diagonal(1_000_000, 1.5, 1.0).unwrap();
        assert_relative_eq!(lambda_low(&m, None).unwrap(), 1e-9, max_relative = 1e-9);
        assert_eq!(lambda_low(&m, Some(5e-5)).unwrap(), 5e-5);
        let one = DiscreteMeasure::new(vec![0.3], vec![1.0]).unwrap();
        assert_eq!(lambda_low(&one, None).unwrap(), 0.3);
        assert!(matches!(DiscreteMeasure::new(vec![], vec![]), Err(Error::Data(_))));
    }

    #[test]
    fn oscillation_cases() {
        let s = oscillation_diagnostics(&[1.5; 40], 1e-3).unwrap();
        assert_eq!(s.amplitude, 0.0);
        assert_eq!(s.settling_step, Some(0));
        assert!(!s.period_two);
        let alt: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { 3.0 }).collect();
        let s = oscillation_diagnostics(&alt, 1e-3).unwrap();
        assert_eq!(s.amplitude, 0.0);
        assert!(s.period_two);
        let decaying: Vec<f64> = (0..60).map(|i| 2.0 + (-0.5 * i as f64).exp()).collect();
        let s = oscillation_diagnostics(&decaying, 1e-3).unwrap();
        assert!(s.settling_step.unwrap() > 5);
    }

    #[test]
    fn sd_uniform_measure_settles() {
        let m = equal_mass_discretization(PowerLawSpec::new(1.0).unwrap(), 1000).unwrap();
        let t = run_spectral(&m, &Schedule::SteepestDescent, &RunOptions::new(2000)).unwrap();
        let s = trajectory_oscillation(&t, 1e-3).unwrap();
        assert!(s.amplitude < 1e-3, "{}", s.amplitude);
        let gd = run_spectral(&m, &Schedule::gd(1.0), &RunOptions::new(10)).unwrap();
        assert!(matches!(trajectory_oscillation(&gd, 1e-3), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn compare_cases() {
        let mut fit = FitReport {
            exponent: 1.02,
            prefactor: 1.0,
            window: (10, 100),
            r_squared: 1.0,
            points: 50,
            sampling: Sampling::All,
            theoretical: None,
            n_th: None,
        };
        let p = TheoryPrediction { exponent: 1.0, prefactor: None, validity: Validity::Asymptotic };
        assert!(compare(&fit, &p, Some(0.05)).pass);
        fit.exponent = 2.0;
        let p =
            theoretical_exponent(AlgorithmKind::StableConjugateGradients, 1.0, Some(1.5), Assumptions::CdfEigendecay)
                .unwrap();
        let c = compare(&fit, &p, Some(0.15));
        assert!(!c.pass);
        assert_relative_eq!(c.delta, 1.5);
        assert_relative_eq!(compare(&fit, &p, None).tolerance, 0.225);
    }

    #[test]
    fn spectral_exponent_recovery() {
        let m = synthetic_diagonal(20_000, 1.5, 1.0).unwrap();
        let e = spectral_exponents(&m, 10, 10_000).unwrap();
        assert!((e.nu - 1.5).abs() < 1e-9);
        assert!((e.zeta - 1.0).abs() < 0.02, "{e:?}");
    }

    proptest! {
        #[test]
        fn fit_scale_invariance(xi in 0.1f64..4.0, c in 0.01f64..10.0, k in 1e-6f64..1e6) {
            let (s, l) = synth(|n| 0.5 * c * n.powf(-xi) * (1.0 + 0.1 * (n * 0.37).cos()), 10, 2000);
            let w = Window::Explicit { lo: 10, hi: 2000 };
            let a = fit_points(&s, &l, &w, Sampling::All).unwrap();
            let scaled: Vec<f64> = l.iter().map(|v| v * k).collect();
            let b = fit_points(&s, &scaled, &w, Sampling::All).unwrap();
            prop_assert!((a.exponent - b.exponent).abs() <= 1e-9 * a.exponent.abs().max(1.0));
            prop_assert!((b.prefactor / a.prefactor / k - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn fit_recovers_exact(xi in 0.1f64..4.0, c in 0.01f64..10.0) {
            let (s, l) = synth(|n| 0.5 * c * n.powf(-xi), 10, 5000);
            let r = fit_points(&s, &l, &Window::Explicit { lo: 10, hi: 5000 }, Sampling::All).unwrap();
            prop_assert!((r.exponent - xi).abs() < 1e-10);
            prop_assert!((r.prefactor / c - 1.0).abs() < 1e-9);
            prop_assert!((r.r_squared - 1.0).abs() < 1e-12);
        }
    }
}
