//! Optimizer runs in the spectral and dense representations.
//!
//! In the spectral representation the state is `u_k = p_n(λ_k)·c_k`, the target-space
//! residual expressed in the eigenbasis of `JJ†`, and the loss is `½Σu_k²`. A gradient step
//! maps `u ↦ (1 - αλ)u`; heavy ball adds `β(u - u_prev)`.
//!
//! The inner products needed by the adaptive methods follow from `r_n = J†δf_n` and
//! `Jp_n = δf_n - δf_{n-1}`:
//!
//! | parameter space | spectral form      |
//! |-----------------|--------------------|
//! | `⟨r, r⟩`        | `Σ λ u²`           |
//! | `⟨Ar, r⟩`       | `Σ λ² u²`          |
//! | `⟨Ap, p⟩`       | `Σ (u - u')²`      |
//! | `⟨r, p⟩`        | `Σ u (u - u')`     |
//! | `⟨Ar, p⟩`       | `Σ λ u (u - u')`   |
//!
//! Non-adaptive schedules do not couple atoms, so each block of atoms is advanced through
//! all steps at once while it sits in cache. Loss sums are combined with a fixed pairwise
//! tree, which makes results independent of the thread count.

use crate::error::{param, Error, Result};
use crate::numeric::pairwise_merge;
use crate::specfun::{jacobi_roots, JacobiParams};
use crate::spectrum::{DiscreteMeasure, Operator, OperatorProblem};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Loss growth factor treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e12;
/// Default dimension cap for the dense representation.
pub const DEFAULT_DENSE_CAP: usize = 5_000;
/// Default number of stored stable-CG steps.
pub const DEFAULT_HISTORY_CAP: usize = 5_000;

const CHUNK: usize = 4096;
const BLOCK: usize = 512;
const SUPER: usize = 16 * BLOCK;
const MAX_EVENTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    Constant {
        alpha: f64,
        beta: f64,
    },
    JacobiHb {
        a: f64,
        b: f64,
    },
    /// Inverse Jacobi roots of degrees `1, 2, 4, ...`, at most `2^depth`.
    ScheduledGd {
        a: f64,
        b: f64,
        depth: u32,
    },
    SteepestDescent,
    ConjugateGradients,
    StableConjugateGradients,
}

impl Schedule {
    pub fn gd(alpha: f64) -> Self {
        Schedule::Constant { alpha, beta: 0.0 }
    }

    pub fn validate(&self, allow_unstable: bool) -> Result<()> {
        match *self {
            Schedule::Constant { alpha, beta } => {
                if !(0.0..1.0).contains(&beta) {
                    return param(format!("momentum must lie in [0, 1), got {beta}"));
                }
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return param(format!("learning rate must be positive, got {alpha}"));
                }
                if !allow_unstable && alpha >= 2.0 * (1.0 + beta) {
                    return param(format!(
                        "alpha = {alpha} outside the stability region alpha < 2(1+beta) = {}",
                        2.0 * (1.0 + beta)
                    ));
                }
                Ok(())
            }
            Schedule::JacobiHb { a, b } | Schedule::ScheduledGd { a, b, .. } => JacobiParams::new(a, b).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Schedule::SteepestDescent | Schedule::ConjugateGradients | Schedule::StableConjugateGradients)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Constant { beta, .. } if *beta == 0.0 => "gd",
            Schedule::Constant { .. } => "hb",
            Schedule::JacobiHb { .. } => "jacobi-hb",
            Schedule::ScheduledGd { .. } => "scheduled-gd",
            Schedule::SteepestDescent => "sd",
            Schedule::ConjugateGradients => "cg",
            Schedule::StableConjugateGradients => "stable-cg",
        }
    }
}

/// Inner product used to orthogonalize stable-CG steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orthogonality {
    /// `⟨Jx, Jy⟩`: steps become A-conjugate, as in exact CG.
    #[default]
    Target,
    /// Plain parameter-space inner product.
    Parameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    fn enabled(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Which steps are stored in the trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Recording {
    #[default]
    All,
    Steps(Vec<usize>),
}

impl Recording {
    /// Every step up to 20, then roughly `points` log-spaced steps, always including the last.
    pub fn geometric(n_steps: usize, points: usize) -> Self {
        let mut s: Vec<usize> = (0..=n_steps.min(20)).collect();
        if n_steps > 20 && points > 0 {
            let lo = 20f64.ln();
            let hi = (n_steps as f64).ln();
            for i in 0..=points {
                s.push((lo + (hi - lo) * i as f64 / points as f64).exp().round() as usize);
            }
        }
        s.push(n_steps);
        Recording::Steps(s)
    }

    fn resolve(&self, n_steps: usize) -> Vec<usize> {
        match self {
            Recording::All => (0..=n_steps).collect(),
            Recording::Steps(s) => {
                let mut v: Vec<usize> = s.iter().copied().filter(|&k| k <= n_steps).collect();
                v.push(0);
                v.push(n_steps);
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub n_steps: usize,
    /// λ values of unit-mass pseudo-atoms tracked alongside the run.
    pub probes: Vec<f64>,
    pub record: Recording,
    pub allow_unstable: bool,
    pub parallelism: Parallelism,
    pub orthogonality: Orthogonality,
    pub history_cap: usize,
    pub dense_cap: usize,
}

impl RunOptions {
    pub fn new(n_steps: usize) -> Self {
        Self {
            n_steps,
            probes: Vec::new(),
            record: Recording::All,
            allow_unstable: false,
            parallelism: Parallelism::default(),
            orthogonality: Orthogonality::default(),
            history_cap: DEFAULT_HISTORY_CAP,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }

    pub fn with_probes(mut self, probes: Vec<f64>) -> Self {
        self.probes = probes;
        self
    }

    pub fn with_record(mut self, record: Recording) -> Self {
        self.record = record;
        self
    }

    pub fn with_parallelism(mut self, p: Parallelism) -> Self {
        self.parallelism = p;
        self
    }

    pub fn with_orthogonality(mut self, o: Orthogonality) -> Self {
        self.orthogonality = o;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub alpha: f64,
    pub beta: f64,
    pub probes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// Loss exceeded the divergence threshold or became non-finite at `step`.
    Diverged {
        step: usize,
    },
    /// The method has nothing left to do after `step` (zero gradient or direction).
    Converged {
        step: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub step: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub problem: String,
    pub schedule: Schedule,
    pub probe_grid: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub status: RunStatus,
    pub events: Vec<RunEvent>,
    /// Mean of `α_n` over all executed steps.
    pub alpha_mean: Option<f64>,
    /// Largest cosine between distinct stored stable-CG steps.
    pub orthogonality_defect: Option<f64>,
}

impl Trajectory {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn steps(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.step).collect()
    }

    pub fn loss_at(&self, step: usize) -> Option<f64> {
        self.records.binary_search_by_key(&step, |r| r.step).ok().map(|i| self.records[i].loss)
    }
}

/// A quadratic problem in either representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Spectral(DiscreteMeasure),
    Dense(OperatorProblem),
}

impl Problem {
    pub fn describe(&self) -> String {
        match self {
            Problem::Spectral(m) => format!("spectral measure, {} atoms", m.len()),
            Problem::Dense(p) => format!("dense operator {}x{}", p.operator.nrows(), p.operator.ncols()),
        }
    }
}

/// `(α_n, β_n)` turning heavy ball into the normalized Jacobi residual recurrence.
pub fn jacobi_schedule(n: usize, a: f64, b: f64) -> Result<(f64, f64)> {
    JacobiParams::new(a, b)?;
    if n == 0 {
        return Ok(((a + b + 2.0) / (2.0 * (a + 1.0)), 0.0));
    }
    let nf = n as f64;
    let s = 2.0 * nf + a + b;
    let d1 = nf + a + 1.0;
    let d2 = nf + a + b + 1.0;
    if d1 == 0.0 || d2 == 0.0 || s == 0.0 {
        return param(format!("Jacobi schedule undefined at n={n} for a={a}, b={b}"));
    }
    let alpha = (s + 1.0) * (s + 2.0) / (2.0 * d1 * d2);
    let beta = nf * (nf + b) * (s + 2.0) / (d1 * d2 * s);
    Ok((alpha, beta))
}

/// Step sizes `α_1..α_total` of scheduled GD: inverse Jacobi roots of degree `2^l`, largest root first.
pub fn scheduled_gd_rates(total: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    let p = JacobiParams::new(a, b)?;
    let mut out = Vec::with_capacity(total);
    let mut degree = 1usize;
    while out.len() < total {
        let roots = jacobi_roots(degree, &p)?;
        for r in roots.into_iter().take(total - out.len()) {
            out.push(1.0 / r);
        }
        degree *= 2;
    }
    Ok(out)
}

fn level_count(steps: usize) -> u32 {
    // number of 2^l blocks needed to cover `steps` rates
    usize::BITS - steps.leading_zeros()
}

/// Per-step coefficient tables `α_0..α_N`, `β_0..β_N` of a non-adaptive schedule.
fn coefficient_tables(schedule: &Schedule, n_steps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = n_steps + 1;
    match *schedule {
        Schedule::Constant { alpha, beta } => Ok((vec![alpha; len], vec![beta; len])),
        Schedule::JacobiHb { a, b } => {
            let mut al = Vec::with_capacity(len);
            let mut be = Vec::with_capacity(len);
            for n in 0..len {
                let (x, y) = jacobi_schedule(n, a, b)?;
                al.push(x);
                be.push(y);
            }
            Ok((al, be))
        }
        Schedule::ScheduledGd { a, b, depth } => {
            if level_count(len) > depth + 1 {
                return param(format!("{n_steps} steps need Jacobi degree above 2^{depth}; raise the schedule depth"));
            }
            Ok((scheduled_gd_rates(len, a, b)?, vec![0.0; len]))
        }
        _ => Err(Error::Parameter("adaptive schedule has no coefficient table".into())),
    }
}

/// Residual amplitudes at step `n` and the previous step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub u: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub step: usize,
}

impl SpectralState {
    pub fn initial(m: &DiscreteMeasure) -> Self {
        let u: Vec<f64> = m.masses().iter().map(|c| c.sqrt()).collect();
        Self { u_prev: u.clone(), u, step: 0 }
    }

    pub fn loss(&self) -> f64 {
        0.5 * crate::numeric::pairwise_sum(&self.u.iter().map(|v| v * v).collect::<Vec<_>>())
    }
}

/// Outcome of an adaptive-rate computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rates {
    Step {
        alpha: f64,
        beta: f64,
    },
    /// The 2x2 CG system is singular; a steepest-descent step is used instead.
    Singular {
        alpha: f64,
    },
    Converged,
}

/// Exact line-search step size `Σλu² / Σλ²u²`.
pub fn sd_rate(state: &SpectralState, m: &DiscreteMeasure) -> Rates {
    let s = spectral_sums(m.atoms(), &state.u, &state.u_prev, false);
    sd_from_sums(&s)
}

/// Optimal `(α_n, β_n)` of conjugate gradients; step 0 is a steepest-descent step.
pub fn cg_rates(state: &SpectralState, m: &DiscreteMeasure) -> Rates {
    let s = spectral_sums(m.atoms(), &state.u, &state.u_prev, false);
    cg_from_sums(&s, state.step)
}

/// The six sums used by SD and CG.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Sums {
    uu: f64,
    rr: f64,
    arr: f64,
    app: f64,
    rp: f64,
    arp: f64,
}

impl Sums {
    fn from_array(a: [f64; 6]) -> Self {
        Sums { uu: a[0], rr: a[1], arr: a[2], app: a[3], rp: a[4], arp: a[5] }
    }
}

fn sd_from_sums(s: &Sums) -> Rates {
    if !(s.arr > 0.0) {
        return Rates::Converged;
    }
    Rates::Step { alpha: s.rr / s.arr, beta: 0.0 }
}

fn cg_from_sums(s: &Sums, step: usize) -> Rates {
    if !(s.arr > 0.0) {
        return Rates::Converged;
    }
    if step == 0 {
        return Rates::Step { alpha: s.rr / s.arr, beta: 0.0 };
    }
    let det = s.arr * s.app - s.arp * s.arp;
    if !(det > 1e-14 * s.arr * s.app) {
        return Rates::Singular { alpha: s.rr / s.arr };
    }
    let alpha = (s.rr * s.app - s.rp * s.arp) / det;
    let beta = (s.rr * s.arp - s.rp * s.arr) / det;
    if !(alpha.is_finite() && beta.is_finite()) {
        return Rates::Singular { alpha: s.rr / s.arr };
    }
    Rates::Step { alpha, beta }
}

/// Pairwise sums of `S` quantities over `lo..hi`.
fn multi_sum<const S: usize, F: Fn(usize) -> [f64; S]>(lo: usize, hi: usize, f: &F) -> [f64; S] {
    if hi - lo <= 64 {
        let mut acc = [0.0; S];
        for i in lo..hi {
            let v = f(i);
            for j in 0..S {
                acc[j] += v[j];
            }
        }
        return acc;
    }
    let mid = lo + (hi - lo) / 2;
    let a = multi_sum(lo, mid, f);
    let b = multi_sum(mid, hi, f);
    let mut out = [0.0; S];
    for j in 0..S {
        out[j] = a[j] + b[j];
    }
    out
}

/// Fixed-chunk reduction; identical results with or without threads.
fn chunked_sum<const S: usize, F>(n: usize, par: bool, f: F) -> [f64; S]
where
    F: Fn(usize) -> [f64; S] + Sync,
{
    let chunks = n.div_ceil(CHUNK).max(1);
    let part = |c: usize| multi_sum(c * CHUNK, ((c + 1) * CHUNK).min(n), &f).to_vec();
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<f64>> =
        if par { (0..chunks).into_par_iter().map(part).collect() } else { (0..chunks).map(part).collect() };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<f64>> = {
        let _ = par;
        (0..chunks).map(part).collect()
    };
    let merged = pairwise_merge(parts);
    let mut out = [0.0; S];
    out.copy_from_slice(&merged);
    out
}

fn spectral_sums(atoms: &[f64], u: &[f64], up: &[f64], par: bool) -> Sums {
    let k = atoms.len();
    Sums::from_array(chunked_sum(k, par, |i| {
        let (l, x) = (atoms[i], u[i]);
        let p = x - up[i];
        let lx = l * x;
        [x * x, lx * x, lx * lx, p * p, x * p, lx * p]
    }))
}

/// Apply `f` to matching chunks of two mutable and one shared slice.
fn for_chunks2<F>(par: bool, a: &mut [f64], b: &mut [f64], c: &[f64], f: F)
where
    F: Fn(&mut [f64], &mut [f64], &[f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par {
        a.par_chunks_mut(CHUNK)
            .zip(b.par_chunks_mut(CHUNK))
            .zip(c.par_chunks(CHUNK))
            .for_each(|((x, y), z)| f(x, y, z));
        return;
    }
    let _ = par;
    for ((x, y), z) in a.chunks_mut(CHUNK).zip(b.chunks_mut(CHUNK)).zip(c.chunks(CHUNK)) {
        f(x, y, z);
    }
}

fn hb_update(u: &mut [f64], up: &mut [f64], lam: &[f64], alpha: f64, beta: f64) {
    let g = 1.0 + beta;
    for i in 0..u.len() {
        let x = u[i];
        let next = (g - alpha * lam[i]) * x - beta * up[i];
        up[i] = x;
        u[i] = next;
    }
}

/// Run `schedule` on a spectral or dense problem.
pub fn run(problem: &Problem, schedule: &Schedule, opts: &RunOptions) -> Result<Trajectory> {
    match problem {
        Problem::Spectral(m) => run_spectral(m, schedule, opts),
        Problem::Dense(p) => dense_run(p, schedule, opts),
    }
}

/// Run in the spectral (atom-wise residual) representation.
pub fn run_spectral(m: &DiscreteMeasure, schedule: &Schedule, opts: &RunOptions) -> Result<Trajectory> {
    schedule.validate(opts.allow_unstable)?;
    if let Some(p) = opts.probes.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return param(format!("probe λ must be finite and nonnegative, got {p}"));
    }
    let steps = opts.record.resolve(opts.n_steps);
    let mut traj = Trajectory {
        problem: format!("spectral measure, {} atoms", m.len()),
        schedule: *schedule,
        probe_grid: opts.probes.clone(),
        records: Vec::with_capacity(steps.len()),
        status: RunStatus::Completed,
        events: Vec::new(),
        alpha_mean: None,
        orthogonality_defect: None,
    };
    match schedule {
        Schedule::SteepestDescent | Schedule::ConjugateGradients => adaptive_run(m, schedule, opts, &steps, &mut traj),
        Schedule::StableConjugateGradients => stable_cg_run(m, opts, &steps, &mut traj),
        _ => blocked_run(m, schedule, opts, &steps, &mut traj),
    }?;
    Ok(traj)
}

/// Per-record sums of `u²` for the atoms in `lo..hi`, one block at a time.
fn superchunk_losses(
    atoms: &[f64],
    masses: &[f64],
    alpha: &[f64],
    beta: &[f64],
    steps: &[usize],
    gd_only: bool,
) -> Vec<f64> {
    let n_steps = *steps.last().unwrap();
    let r = steps.len();
    // binary-counter stack of partial vectors gives a balanced tree over blocks
    let mut stack: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut u = [0.0f64; BLOCK];
    let mut up = [0.0f64; BLOCK];
    let mut sq = [0.0f64; BLOCK];
    for (lam, cm) in atoms.chunks(BLOCK).zip(masses.chunks(BLOCK)) {
        let b = lam.len();
        for i in 0..b {
            u[i] = cm[i].sqrt();
            up[i] = u[i];
        }
        let mut part = vec![0.0; r];
        let mut ri = 0;
        for n in 0..=n_steps {
            if steps[ri] == n {
                for i in 0..b {
                    sq[i] = u[i] * u[i];
                }
                part[ri] = crate::numeric::pairwise_sum(&sq[..b]);
                ri += 1;
                if ri == r {
                    break;
                }
            }
            if gd_only {
                let a = alpha[n];
                for i in 0..b {
                    u[i] *= 1.0 - a * lam[i];
                }
            } else {
                hb_update(&mut u[..b], &mut up[..b], lam, alpha[n], beta[n]);
            }
        }
        let mut level = 0;
        while let Some((l, _)) = stack.last() {
            if *l != level {
                break;
            }
            let (_, prev) = stack.pop().unwrap();
            for (p, q) in part.iter_mut().zip(prev) {
                *p += q;
            }
            level += 1;
        }
        stack.push((level, part));
    }
    let mut acc: Option<Vec<f64>> = None;
    while let Some((_, v)) = stack.pop() {
        acc = Some(match acc {
            None => v,
            Some(mut a) => {
                for (x, y) in a.iter_mut().zip(&v) {
                    *x += y;
                }
                a
            }
        });
    }
    acc.unwrap_or_else(|| vec![0.0; r])
}

fn blocked_run(
    m: &DiscreteMeasure,
    schedule: &Schedule,
    opts: &RunOptions,
    steps: &[usize],
    traj: &mut Trajectory,
) -> Result<()> {
    let (alpha, beta) = coefficient_tables(schedule, opts.n_steps)?;
    let gd_only = beta.iter().all(|b| *b == 0.0);
    let atoms = m.atoms();
    let masses = m.masses();
    let supers = atoms.len().div_ceil(SUPER);
    let work = |s: usize| {
        let lo = s * SUPER;
        let hi = ((s + 1) * SUPER).min(atoms.len());
        superchunk_losses(&atoms[lo..hi], &masses[lo..hi], &alpha, &beta, steps, gd_only)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<f64>> = if opts.parallelism.enabled() {
        (0..supers).into_par_iter().map(work).collect()
    } else {
        (0..supers).map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<f64>> = (0..supers).map(work).collect();
    let sums = pairwise_merge(parts);

    // probes: unit-mass pseudo-atoms through the same recurrence
    let mut probe_vals: Vec<Vec<f64>> = vec![Vec::new(); steps.len()];
    if !opts.probes.is_empty() {
        let mut u = vec![1.0; opts.probes.len()];
        let mut up = u.clone();
        let mut ri = 0;
        for n in 0..=opts.n_steps {
            if steps[ri] == n {
                probe_vals[ri] = u.clone();
                ri += 1;
                if ri == steps.len() {
                    break;
                }
            }
            hb_update(&mut u, &mut up, &opts.probes, alpha[n], beta[n]);
        }
    }

    let loss0 = 0.5 * sums[0];
    for (ri, &n) in steps.iter().enumerate() {
        let loss = 0.5 * sums[ri];
        if diverged(loss, loss0) {
            traj.status = RunStatus::Diverged { step: n };
            break;
        }
        traj.records.push(StepRecord {
            step: n,
            loss,
            alpha: alpha[n],
            beta: beta[n],
            probes: std::mem::take(&mut probe_vals[ri]),
        });
    }
    let executed = match traj.status {
        RunStatus::Diverged { step } => step,
        _ => opts.n_steps,
    };
    if executed > 0 {
        traj.alpha_mean = Some(alpha[..executed].iter().sum::<f64>() / executed as f64);
    }
    Ok(())
}

fn diverged(loss: f64, loss0: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_FACTOR * loss0
}

fn push_event(traj: &mut Trajectory, step: usize, message: String) {
    if traj.events.len() < MAX_EVENTS {
        traj.events.push(RunEvent { step, message });
    }
}

/// Atoms followed by probes; sums run over the first `k` entries only.
fn extended(m: &DiscreteMeasure, probes: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut lam = m.atoms().to_vec();
    lam.extend_from_slice(probes);
    let mut u: Vec<f64> = m.masses().iter().map(|c| c.sqrt()).collect();
    u.extend(std::iter::repeat_n(1.0, probes.len()));
    (lam, u)
}

fn adaptive_run(
    m: &DiscreteMeasure,
    schedule: &Schedule,
    opts: &RunOptions,
    steps: &[usize],
    traj: &mut Trajectory,
) -> Result<()> {
    let par = opts.parallelism.enabled();
    let k = m.len();
    let (lam, mut u) = extended(m, &opts.probes);
    let mut up = u.clone();
    let mut ri = 0;
    let mut loss0 = f64::NAN;
    let mut alpha_sum = 0.0;
    for n in 0..=opts.n_steps {
        let s = spectral_sums(&lam[..k], &u[..k], &up[..k], par);
        let loss = 0.5 * s.uu;
        if n == 0 {
            loss0 = loss;
        }
        if diverged(loss, loss0) {
            traj.status = RunStatus::Diverged { step: n };
            break;
        }
        let rates = match schedule {
            Schedule::SteepestDescent => sd_from_sums(&s),
            _ => cg_from_sums(&s, n),
        };
        let (alpha, beta) = match rates {
            Rates::Step { alpha, beta } => (alpha, beta),
            Rates::Singular { alpha } => {
                push_event(traj, n, "singular CG system, steepest-descent step taken".into());
                (alpha, 0.0)
            }
            Rates::Converged => (0.0, 0.0),
        };
        let last = n == opts.n_steps || rates == Rates::Converged;
        if steps[ri] == n || last {
            traj.records.push(StepRecord { step: n, loss, alpha, beta, probes: u[k..].to_vec() });
            if steps[ri] == n {
                ri += 1;
            }
        }
        if rates == Rates::Converged {
            traj.status = RunStatus::Converged { step: n };
            break;
        }
        if n == opts.n_steps {
            break;
        }
        alpha_sum += alpha;
        for_chunks2(par, &mut u, &mut up, &lam, |x, y, l| hb_update(x, y, l, alpha, beta));
    }
    let executed = traj.records.last().map(|r| r.step).unwrap_or(0);
    if executed > 0 {
        traj.alpha_mean = Some(alpha_sum / executed as f64);
    }
    Ok(())
}

/// Stored, normalized steps of stable CG together with the chosen inner product.
struct StepHistory {
    dirs: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
    cap: usize,
    dropped: bool,
}

impl StepHistory {
    fn dot(&self, a: &[f64], b: &[f64], k: usize, par: bool) -> f64 {
        match &self.weights {
            None => chunked_sum(k, par, |i| [a[i] * b[i]])[0],
            Some(w) => chunked_sum(k, par, |i| [a[i] * b[i] * w[i]])[0],
        }
    }

    /// Two classical Gram-Schmidt passes; returns the total coefficients.
    fn orthogonalize(&self, d: &mut [f64], k: usize, par: bool) -> Vec<f64> {
        let mut total = vec![0.0; self.dirs.len()];
        for _ in 0..2 {
            let coef: Vec<f64> = self.dirs.iter().map(|s| self.dot(d, s, k, par)).collect();
            for (c, s) in coef.iter().zip(&self.dirs) {
                for (x, y) in d.iter_mut().zip(s) {
                    *x -= c * y;
                }
            }
            for (t, c) in total.iter_mut().zip(&coef) {
                *t += c;
            }
        }
        total
    }

    fn push(&mut self, dir: Vec<f64>) -> bool {
        let mut dropped_now = false;
        if self.dirs.len() >= self.cap {
            self.dirs.remove(0);
            dropped_now = !self.dropped;
            self.dropped = true;
        }
        self.dirs.push(dir);
        dropped_now
    }
}

fn stable_cg_run(m: &DiscreteMeasure, opts: &RunOptions, steps: &[usize], traj: &mut Trajectory) -> Result<()> {
    let par = opts.parallelism.enabled();
    let k = m.len();
    let (lam, mut u) = extended(m, &opts.probes);
    let weights = match opts.orthogonality {
        Orthogonality::Target => None,
        Orthogonality::Parameter => Some(lam[..k].iter().map(|l| 1.0 / l).collect()),
    };
    let mut hist = StepHistory { dirs: Vec::new(), weights, cap: opts.history_cap.max(1), dropped: false };
    let mut ri = 0;
    let mut loss0 = f64::NAN;
    let mut alpha_sum = 0.0;
    let mut defect: f64 = 0.0;
    // scale of the previous step: Δu_{n-1} = prev_scale · s_last
    let mut prev_scale = 0.0;
    for n in 0..=opts.n_steps {
        let loss = 0.5 * chunked_sum(k, par, |i| [u[i] * u[i]])[0];
        if n == 0 {
            loss0 = loss;
        }
        if diverged(loss, loss0) {
            traj.status = RunStatus::Diverged { step: n };
            break;
        }
        let mut d: Vec<f64> = lam.iter().zip(&u).map(|(l, x)| -l * x).collect();
        let gnorm = hist.dot(&d, &d, k, par).sqrt();
        let coef = hist.orthogonalize(&mut d, k, par);
        let dnorm = hist.dot(&d, &d, k, par).sqrt();
        let dd = chunked_sum(k, par, |i| [d[i] * d[i]])[0];
        let converged = !(gnorm > 0.0) || !(dnorm > 1e-14 * gnorm) || !(dd > 0.0);
        let (alpha, beta, t) = if converged {
            (0.0, 0.0, 0.0)
        } else {
            let ud = chunked_sum(k, par, |i| [u[i] * d[i]])[0];
            let t = -ud / dd;
            let beta = match coef.last() {
                Some(c) if prev_scale != 0.0 => -t * c / prev_scale,
                _ => 0.0,
            };
            (t, beta, t)
        };
        let last = n == opts.n_steps || converged;
        if steps[ri] == n || last {
            traj.records.push(StepRecord { step: n, loss, alpha, beta, probes: u[k..].to_vec() });
            if steps[ri] == n {
                ri += 1;
            }
        }
        if converged {
            traj.status = RunStatus::Converged { step: n };
            break;
        }
        if n == opts.n_steps {
            break;
        }
        alpha_sum += alpha;
        for (x, y) in u.iter_mut().zip(&d) {
            *x += t * y;
        }
        let inv = 1.0 / dnorm;
        let dir: Vec<f64> = d.iter().map(|v| v * inv).collect();
        for s in &hist.dirs {
            defect = defect.max(hist.dot(&dir, s, k, par).abs());
        }
        prev_scale = t * dnorm;
        if hist.push(dir) {
            push_event(traj, n, format!("stable CG history cap {} reached, dropping oldest steps", hist.cap));
        }
    }
    let executed = traj.records.last().map(|r| r.step).unwrap_or(0);
    if executed > 0 {
        traj.alpha_mean = Some(alpha_sum / executed as f64);
    }
    traj.orthogonality_defect = Some(defect);
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::numeric::pairwise_sum_by(0, a.len(), |i| a[i] * b[i])
}

/// Run with explicit iterates `w_n` and the literal parameter-space formulas.
pub fn dense_run(p: &OperatorProblem, schedule: &Schedule, opts: &RunOptions) -> Result<Trajectory> {
    schedule.validate(opts.allow_unstable)?;
    let dim = p.operator.ncols();
    if dim > opts.dense_cap || p.operator.nrows() > opts.dense_cap {
        return param(format!("dense representation limited to {} dimensions, got {dim}", opts.dense_cap));
    }
    if !opts.probes.is_empty() {
        return param("polynomial probes need the spectral representation");
    }
    let steps = opts.record.resolve(opts.n_steps);
    let mut traj = Trajectory {
        problem: format!("dense operator {}x{}", p.operator.nrows(), dim),
        schedule: *schedule,
        probe_grid: Vec::new(),
        records: Vec::with_capacity(steps.len()),
        status: RunStatus::Completed,
        events: Vec::new(),
        alpha_mean: None,
        orthogonality_defect: None,
    };
    let tables = if schedule.is_adaptive() { None } else { Some(coefficient_tables(schedule, opts.n_steps)?) };
    let op: &Operator = &p.operator;
    let ata = |x: &[f64]| op.apply_transpose(&op.apply(x));
    let mut w = vec![0.0; dim];
    let mut w_prev = w.clone();
    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut ri = 0;
    let mut loss0 = f64::NAN;
    let mut alpha_sum = 0.0;
    let mut defect: f64 = 0.0;
    let mut prev_scale = 0.0;
    for n in 0..=opts.n_steps {
        let jw = op.apply(&w);
        let delta: Vec<f64> = jw.iter().zip(&p.target).map(|(a, b)| a - b).collect();
        let loss = 0.5 * dot(&delta, &delta);
        if n == 0 {
            loss0 = loss;
        }
        if diverged(loss, loss0) {
            traj.status = RunStatus::Diverged { step: n };
            break;
        }
        let r = op.apply_transpose(&delta);
        let pdir: Vec<f64> = w.iter().zip(&w_prev).map(|(a, b)| a - b).collect();
        let mut step_dir: Option<Vec<f64>> = None;
        let rates = match schedule {
            Schedule::SteepestDescent | Schedule::ConjugateGradients => {
                let ar = ata(&r);
                let ap = ata(&pdir);
                let s = Sums {
                    uu: 2.0 * loss,
                    rr: dot(&r, &r),
                    arr: dot(&ar, &r),
                    app: dot(&ap, &pdir),
                    rp: dot(&r, &pdir),
                    arp: dot(&ar, &pdir),
                };
                if matches!(schedule, Schedule::SteepestDescent) {
                    sd_from_sums(&s)
                } else {
                    cg_from_sums(&s, n)
                }
            }
            Schedule::StableConjugateGradients => {
                let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
                let mut jd = op.apply(&d);
                let ip = |x: &[f64], jx: &[f64], y: &[f64], jy: &[f64]| match opts.orthogonality {
                    Orthogonality::Target => dot(jx, jy),
                    Orthogonality::Parameter => dot(x, y),
                };
                let gnorm = ip(&d, &jd, &d, &jd).sqrt();
                let mut last_coef = 0.0;
                for _ in 0..2 {
                    let coef: Vec<f64> = history.iter().map(|(s, js)| ip(&d, &jd, s, js)).collect();
                    for (c, (s, js)) in coef.iter().zip(&history) {
                        for (x, y) in d.iter_mut().zip(s) {
                            *x -= c * y;
                        }
                        for (x, y) in jd.iter_mut().zip(js) {
                            *x -= c * y;
                        }
                    }
                    if let Some(c) = coef.last() {
                        last_coef += c;
                    }
                }
                let dnorm = ip(&d, &jd, &d, &jd).sqrt();
                let jdjd = dot(&jd, &jd);
                if !(gnorm > 0.0) || !(dnorm > 1e-14 * gnorm) || !(jdjd > 0.0) {
                    Rates::Converged
                } else {
                    let t = -dot(&jd, &delta) / jdjd;
                    let beta = if history.is_empty() || prev_scale == 0.0 { 0.0 } else { -t * last_coef / prev_scale };
                    let inv = 1.0 / dnorm;
                    let s: Vec<f64> = d.iter().map(|v| v * inv).collect();
                    let js: Vec<f64> = jd.iter().map(|v| v * inv).collect();
                    for (h, jh) in &history {
                        defect = defect.max(ip(&s, &js, h, jh).abs());
                    }
                    prev_scale = t * dnorm;
                    step_dir = Some(d.iter().map(|v| v * t).collect());
                    if history.len() >= opts.history_cap.max(1) {
                        history.remove(0);
                    }
                    history.push((s, js));
                    Rates::Step { alpha: t, beta }
                }
            }
            _ => {
                let (al, be) = tables.as_ref().unwrap();
                Rates::Step { alpha: al[n], beta: be[n] }
            }
        };
        let (alpha, beta) = match rates {
            Rates::Step { alpha, beta } => (alpha, beta),
            Rates::Singular { alpha } => {
                push_event(&mut traj, n, "singular CG system, steepest-descent step taken".into());
                (alpha, 0.0)
            }
            Rates::Converged => (0.0, 0.0),
        };
        let last = n == opts.n_steps || rates == Rates::Converged;
        if steps[ri] == n || last {
            traj.records.push(StepRecord { step: n, loss, alpha, beta, probes: Vec::new() });
            if steps[ri] == n {
                ri += 1;
            }
        }
        if rates == Rates::Converged {
            traj.status = RunStatus::Converged { step: n };
            break;
        }
        if n == opts.n_steps {
            break;
        }
        alpha_sum += alpha;
        let next: Vec<f64> = match &step_dir {
            Some(sd) => w.iter().zip(sd).map(|(a, b)| a + b).collect(),
            None => (0..dim).map(|i| w[i] - alpha * r[i] + beta * pdir[i]).collect(),
        };
        w_prev = std::mem::replace(&mut w, next);
    }
    let executed = traj.records.last().map(|r| r.step).unwrap_or(0);
    if executed > 0 {
        traj.alpha_mean = Some(alpha_sum / executed as f64);
    }
    if matches!(schedule, Schedule::StableConjugateGradients) {
        traj.orthogonality_defect = Some(defect);
    }
    Ok(traj)
}

/// Diagonal operator `J = diag(√λ_k)` with target `c_k`, the dense twin of a measure.
pub fn dense_twin(m: &DiscreteMeasure) -> Result<OperatorProblem> {
    let diag: Vec<f64> = m.atoms().iter().map(|l| l.sqrt()).collect();
    let sub = vec![0.0; diag.len().saturating_sub(1)];
    let target: Vec<f64> = m.masses().iter().map(|c| c.sqrt()).collect();
    OperatorProblem::new(Operator::LowerBidiagonal { diag, sub }, target)
}

/// Cached scheduled-GD rates keyed by `(a, b)` bit patterns.
#[derive(Debug, Default)]
pub struct RootCache {
    rates: HashMap<(u64, u64), Vec<f64>>,
}

impl RootCache {
    pub fn rates(&mut self, total: usize, a: f64, b: f64) -> Result<&[f64]> {
        let key = (a.to_bits(), b.to_bits());
        let have = self.rates.get(&key).map(|v| v.len()).unwrap_or(0);
        if have < total {
            let v = scheduled_gd_rates(total.next_power_of_two() * 2 - 1, a, b)?;
            self.rates.insert(key, v);
        }
        Ok(&self.rates[&key][..total])
    }
}
