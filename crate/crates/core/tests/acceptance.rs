//! Acceptance checks; one PASS/FAIL line per criterion, indented detail lines below it.

use plrates::analysis::{
    auto_fit, fit_points, lambda_low, trajectory_oscillation, trajectory_threshold, Sampling, Window,
};
use plrates::engine::{dense_run, dense_twin, run_spectral, Recording, RunOptions, RunStatus, Schedule, Trajectory};
use plrates::oracle::{
    cg_chain_loss, cg_exact_powerlaw_loss, chebyshev_trial_loss, hb_asymptotic_loss, jacobi_bound_constant,
};
use plrates::specfun::{hb_constant_residual, jacobi_residual_eval, JacobiParams};
use plrates::spectrum::{
    cg_lowerbound_operator, discrete_powerlaw, equal_mass_discretization, sd_lowerbound_measure,
    spectral_measure_from_gram, synthetic_diagonal, DiscreteMeasure, PowerLawSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, summary: String::new(), details: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.details.push(format!("note {line}"));
    }
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let worst = |zeta: f64, m: usize| {
        let mu = equal_mass_discretization(PowerLawSpec::new(zeta).unwrap(), m).unwrap();
        let t = run_spectral(&mu, &Schedule::ConjugateGradients, &RunOptions::new(25)).unwrap();
        t.records.iter().map(|r| (r.loss / cg_exact_powerlaw_loss(r.step, zeta) - 1.0).abs()).fold(0.0f64, f64::max)
    };
    for zeta in [0.5, 1.0, 2.0] {
        let e = worst(zeta, 100_000);
        o.check(e <= 0.01, format!("zeta={zeta} M=1e5: max relative error {e:.3e} (bound 1e-2)"));
    }
    o.note(format!(
        "zeta=2 at M=1e6 (finer grid, not the criterion): max relative error {:.3e}",
        worst(2.0, 1_000_000)
    ));
    o.summary = "CG on equal-mass power law vs exact Gamma-ratio loss, n <= 25".into();
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let (zeta, nu) = (0.5, 1.0);
    let p = cg_lowerbound_operator(zeta, nu, 200).unwrap();
    let t = dense_run(&p, &Schedule::StableConjugateGradients, &RunOptions::new(50)).unwrap();
    let e = t.records.iter().map(|r| (r.loss / cg_chain_loss(r.step, zeta, nu) - 1.0).abs()).fold(0.0f64, f64::max);
    o.check(
        t.records.len() == 51 && e <= 1e-6,
        format!("stable CG loss vs chain formula, n <= 50: max relative error {e:.3e}"),
    );

    let sandwich = |ev: &[f64], count: usize| {
        let bad: Vec<usize> = (0..count)
            .filter(|&i| {
                let k = (i + 1) as f64;
                !(ev[i] >= (2.0 * k).powf(-nu) && ev[i] <= 9.0 * k.powf(-nu))
            })
            .collect();
        bad
    };
    let ev = p.gram_eigenvalues().unwrap();
    let bad = sandwich(&ev, ev.len());
    let detail = match (bad.first(), bad.last()) {
        (Some(a), Some(b)) => format!(", violated at k = {}..{} ({} of 200)", a + 1, b + 1, bad.len()),
        _ => String::new(),
    };
    o.check(bad.is_empty(), format!("eigenvalues of JJ^T for N=200 inside [(2k)^-nu, 9k^-nu] for all k{detail}"));
    let big = cg_lowerbound_operator(zeta, nu, 3200).unwrap().gram_eigenvalues().unwrap();
    o.note(format!(
        "leading 200 eigenvalues of the N=3200 truncation violate the bounds at {} indices",
        sandwich(&big, 200).len()
    ));
    o.summary = "stable CG on the bidiagonal lower-bound operator".into();
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let (zeta, nu) = (1.0, 1.5);
    let m = synthetic_diagonal(100_000, nu, zeta).unwrap();
    let low = lambda_low(&m, None).unwrap();
    let cases: [(Schedule, f64, f64); 6] = [
        (Schedule::gd(1.0), 1.0, 0.05),
        (Schedule::Constant { alpha: 1.0, beta: 0.9 }, 1.0, 0.05),
        (Schedule::SteepestDescent, 1.0, 0.1),
        (Schedule::JacobiHb { a: 1.0, b: 0.0 }, 2.0, 0.1),
        (Schedule::ScheduledGd { a: 1.0, b: 0.0, depth: 12 }, 2.0, 0.15),
        (Schedule::StableConjugateGradients, 3.5, 0.2),
    ];
    for (s, target, tol) in cases {
        let start = Instant::now();
        let t = run_to_window(&m, &s, zeta, Some(nu), low);
        match auto_fit(&t, zeta, Some(nu), low, 0.5) {
            Ok(f) => o.check(
                (f.exponent - target).abs() <= tol,
                format!(
                    "{:<12} xi_exp={:.4} ({target}) +-{tol} window [{}, {}] n_th={:.4e} R2={:.5} [{:.1}s]",
                    s.name(),
                    f.exponent,
                    f.window.0,
                    f.window.1,
                    f.n_th.unwrap_or(f64::NAN),
                    f.r_squared,
                    start.elapsed().as_secs_f64()
                ),
            ),
            Err(e) => o.check(false, format!("{}: fit failed: {e}", s.name())),
        }
    }
    o.summary = "fitted exponents on synthetic_diagonal(M=1e5, nu=1.5, zeta=1) over auto windows".into();
    o
}

/// Run far enough to cover the auto window; SD needs a pilot run for its mean step size.
fn run_to_window(m: &DiscreteMeasure, s: &Schedule, zeta: f64, nu: Option<f64>, low: f64) -> Trajectory {
    let pilot = run_spectral(m, s, &RunOptions::new(200).with_record(Recording::geometric(200, 10))).unwrap();
    let n_th = trajectory_threshold(&pilot, zeta, nu, low, 0.5).unwrap();
    let hi = match s {
        Schedule::Constant { .. } | Schedule::SteepestDescent => n_th / 50.0,
        Schedule::StableConjugateGradients | Schedule::ConjugateGradients => n_th,
        _ => n_th / 3.0,
    };
    let n = (hi.ceil() as usize + 1).max(20);
    let rec = match s {
        Schedule::ScheduledGd { .. } => Recording::Steps((1..=n).filter(|k| (k + 1).is_power_of_two()).collect()),
        _ => Recording::geometric(n, 400),
    };
    run_spectral(m, s, &RunOptions::new(n).with_record(rec)).unwrap()
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let zeta = 1.0;
    let m = discrete_powerlaw(zeta, 1.5, 1_000_000).unwrap();
    let n = 10_000;
    for (alpha, beta) in [(1.0, 0.0), (1.0, 0.9)] {
        let t = run_spectral(
            &m,
            &Schedule::Constant { alpha, beta },
            &RunOptions::new(n).with_record(Recording::Steps(vec![n])),
        )
        .unwrap();
        let ratio = t.loss_at(n).unwrap() / hb_asymptotic_loss(n as f64, alpha, beta, zeta);
        o.check((0.95..=1.05).contains(&ratio), format!("alpha={alpha} beta={beta}: L_n / leading term = {ratio:.5}"));
    }
    o.summary = "constant-rate prefactor on discrete_powerlaw(1, 1.5, 1e6) at n = 1e4".into();
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let m = synthetic_diagonal(100_000, 1.5, 1.0).unwrap();
    let s = jacobi_bound_constant(1.0, 1.0).unwrap();
    let t = run_spectral(&m, &Schedule::JacobiHb { a: 1.0, b: 0.0 }, &RunOptions::new(10_000)).unwrap();
    let worst =
        t.records[100..].iter().map(|r| r.loss / (0.5 * s * (r.step as f64).powi(-2) * 1.1)).fold(0.0f64, f64::max);
    o.check(worst <= 1.0, format!("max over n in [1e2, 1e4] of L_n / (1.1 S n^-2 / 2) = {worst:.4}"));
    o.summary = format!("Jacobi-HB (a=1, b=0) below the bound with S(1,1) = {s:.4}");
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let (zeta, nu) = (1.0, 2.0);
    let m = sd_lowerbound_measure(zeta, nu, 10_000).unwrap();
    let low = lambda_low(&m, None).unwrap();
    let pilot = run_spectral(&m, &Schedule::SteepestDescent, &RunOptions::new(10_000)).unwrap();
    let amax = pilot.records[..pilot.records.len() - 1].iter().map(|r| r.alpha).fold(0.0f64, f64::max);
    o.check(amax <= 50.0, format!("max alpha_n over n <= 1e4 = {amax:.4}"));
    let n_th = trajectory_threshold(&pilot, zeta, Some(nu), low, 0.5).unwrap();
    let n = (n_th / 50.0).ceil() as usize + 1;
    let t = run_spectral(&m, &Schedule::SteepestDescent, &RunOptions::new(n).with_record(Recording::geometric(n, 400)))
        .unwrap();
    match auto_fit(&t, zeta, Some(nu), low, 0.5) {
        Ok(f) => o.check(
            (f.exponent - 1.0).abs() <= 0.1,
            format!("SD xi_exp={:.4} (1) +-0.1 window [{}, {}]", f.exponent, f.window.0, f.window.1),
        ),
        Err(e) => o.check(false, format!("SD fit failed: {e}")),
    }
    let u = equal_mass_discretization(PowerLawSpec::new(1.0).unwrap(), 1000).unwrap();
    let t = run_spectral(&u, &Schedule::SteepestDescent, &RunOptions::new(2000)).unwrap();
    let osc = trajectory_oscillation(&t, 1e-3).unwrap();
    o.check(osc.amplitude < 1e-3, format!("uniform measure: trailing period-2 amplitude {:.3e}", osc.amplitude));
    o.summary = "steepest descent on the lower-bound measure and the uniform measure".into();
    o
}

fn random_measure(rng: &mut ChaCha8Rng, k: usize) -> DiscreteMeasure {
    let mut atoms: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
    atoms.sort_by(|a, b| b.total_cmp(a));
    atoms[0] = 1.0;
    let masses = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
    DiscreteMeasure::new(atoms, masses).unwrap()
}

fn all_schedules() -> Vec<Schedule> {
    vec![
        Schedule::gd(1.0),
        Schedule::gd(1.9),
        Schedule::Constant { alpha: 1.0, beta: 0.9 },
        Schedule::Constant { alpha: 0.6, beta: 0.3 },
        Schedule::JacobiHb { a: 1.0, b: 0.0 },
        Schedule::JacobiHb { a: 0.25, b: -0.5 },
        Schedule::ScheduledGd { a: 1.0, b: 0.0, depth: 12 },
        Schedule::SteepestDescent,
        Schedule::ConjugateGradients,
        Schedule::StableConjugateGradients,
    ]
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let measures: Vec<DiscreteMeasure> = (0..10).map(|i| random_measure(&mut rng, 3 + 3 * i)).collect();

    let mut worst = 0.0f64;
    for m in &measures {
        for s in all_schedules() {
            let t = run_spectral(m, &s, &RunOptions::new(60).with_probes(vec![0.0])).unwrap();
            worst = t.records.iter().map(|r| (r.probes[0] - 1.0).abs()).fold(worst, f64::max);
        }
    }
    o.check(worst <= 1e-12, format!("p_n(0) = 1 for all schedules: max deviation {worst:.1e}"));

    let mut ok = true;
    for m in &measures {
        for s in [Schedule::SteepestDescent, Schedule::ConjugateGradients, Schedule::StableConjugateGradients] {
            let t = run_spectral(m, &s, &RunOptions::new(3 * m.len())).unwrap();
            let l0 = t.records[0].loss;
            ok &= t.records.windows(2).all(|w| w[1].loss <= w[0].loss + 1e-15 * l0);
        }
    }
    o.check(ok, "SD / CG / stable CG losses non-increasing".into());

    let mut worst = 0.0f64;
    for m in &measures {
        let t = run_spectral(m, &Schedule::ConjugateGradients, &RunOptions::new(m.len())).unwrap();
        let last = match t.status {
            RunStatus::Converged { .. } => 0.0,
            _ => t.records.last().unwrap().loss,
        };
        worst = worst.max(last / t.records[0].loss);
    }
    o.check(worst <= 1e-20, format!("CG terminates at step K (K <= 30): max L_K / L_0 = {worst:.1e}"));

    let mut ok = true;
    for m in &measures {
        let k = m.len();
        let cg = run_spectral(m, &Schedule::ConjugateGradients, &RunOptions::new(k)).unwrap();
        let l0 = cg.records[0].loss;
        for s in all_schedules() {
            let t = run_spectral(m, &s, &RunOptions::new(k)).unwrap();
            ok &= cg.records.iter().zip(&t.records).all(|(a, b)| a.loss <= b.loss + 1e-12 * l0);
        }
    }
    o.check(ok, "CG loss <= every other schedule at every step".into());

    let mut ok = true;
    for (i, k) in [100usize, 300, 1000].iter().enumerate() {
        let m = discrete_powerlaw(0.5 + 0.5 * i as f64, 1.5, *k).unwrap();
        let t = run_spectral(&m, &Schedule::ConjugateGradients, &RunOptions::new(60)).unwrap();
        for r in t.records.iter().skip(2) {
            ok &= r.loss <= chebyshev_trial_loss(r.step, &m, 1.5).unwrap() * (1.0 + 1e-9);
        }
    }
    o.check(ok, "CG loss <= Chebyshev trial-polynomial loss".into());

    let grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
    let mut worst = 0.0f64;
    let m = &measures[0];
    for (a, b) in [(1.0, 0.0), (0.5, 0.0), (2.0, -0.5), (0.25, 0.5)] {
        let p = JacobiParams::new(a, b).unwrap();
        let t = run_spectral(m, &Schedule::JacobiHb { a, b }, &RunOptions::new(60).with_probes(grid.clone())).unwrap();
        for r in &t.records {
            for (l, v) in grid.iter().zip(&r.probes) {
                let want = jacobi_residual_eval(r.step, &p, *l);
                worst = worst.max((v - want).abs() / want.abs().max(1e-3));
            }
        }
    }
    for (alpha, beta) in [(1.0, 0.9), (1.5, 0.5)] {
        let t = run_spectral(m, &Schedule::Constant { alpha, beta }, &RunOptions::new(200).with_probes(grid.clone()))
            .unwrap();
        for r in &t.records {
            for (l, v) in grid.iter().zip(&r.probes) {
                let want = hb_constant_residual(r.step, alpha, beta, *l);
                let scale = want.abs().max(beta.sqrt().powi(r.step as i32) * (r.step + 2) as f64);
                worst = worst.max((v - want).abs() / scale);
            }
        }
    }
    o.check(worst <= 1e-9, format!("schedule <-> residual polynomial equivalence: max relative deviation {worst:.1e}"));

    let fine: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
    let single = DiscreteMeasure::new(vec![1.0], vec![1.0]).unwrap();
    let mut worst = 0.0f64;
    for a in [0.5, 1.0, 2.0] {
        let t = run_spectral(
            &single,
            &Schedule::ScheduledGd { a, b: 0.0, depth: 10 },
            &RunOptions::new(1023).with_probes(fine.clone()),
        )
        .unwrap();
        worst = t.records.iter().flat_map(|r| r.probes.iter()).fold(worst, |w, v| w.max(v.abs()));
    }
    o.check(worst <= 1.0 + 1e-9, format!("scheduled GD prefix polynomials bounded on [0,1]: max |p| = {worst:.6}"));

    let mut worst = 0.0f64;
    for m in measures.iter().take(6) {
        let twin = dense_twin(m).unwrap();
        for s in all_schedules() {
            let a = run_spectral(m, &s, &RunOptions::new(100)).unwrap();
            let b = dense_run(&twin, &s, &RunOptions::new(100)).unwrap();
            let l0 = a.records[0].loss;
            for (x, y) in a.records.iter().zip(&b.records) {
                worst = worst.max((x.loss - y.loss).abs() / x.loss.max(1e-8 * l0));
            }
        }
    }
    o.check(worst <= 1e-8, format!("spectral <-> dense representation: max relative deviation {worst:.1e}"));

    let mut worst = 0.0f64;
    for n in [5usize, 20, 60] {
        let raw = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = raw.qr().q();
        let atoms: Vec<f64> = (0..n).map(|k| (1.0 + k as f64).powf(-1.3)).collect();
        let coef: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let lam = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(atoms.clone()));
        let g = &q * lam * q.transpose();
        let g = 0.5 * (&g + g.transpose());
        let y = &q * nalgebra::DVector::from_vec(coef.clone());
        let m = spectral_measure_from_gram(&g, y.as_slice()).unwrap();
        for k in 0..n {
            worst = worst.max((m.atoms()[k] / atoms[k] - 1.0).abs());
            worst = worst.max((m.masses()[k] / (coef[k] * coef[k]) - 1.0).abs());
        }
    }
    o.check(worst <= 1e-8, format!("Gram eigendecomposition round trip: max relative deviation {worst:.1e}"));

    let steps: Vec<usize> = (10..=1000).collect();
    let mut worst = 0.0f64;
    for (xi, c) in [(0.5, 1.0), (2.0, 1.0), (3.5, 0.01)] {
        let l: Vec<f64> = steps.iter().map(|&n| 0.5 * c * (n as f64).powf(-xi)).collect();
        let f = fit_points(&steps, &l, &Window::Explicit { lo: 10, hi: 1000 }, Sampling::All).unwrap();
        worst = worst.max((f.exponent - xi).abs()).max((1.0 - f.r_squared).abs());
    }
    o.check(worst <= 1e-12, format!("fit recovers exact power laws (R2 = 1): max deviation {worst:.1e}"));

    o.summary = "property suites".into();
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let (zeta, nu) = (1.0, 1.5);
    let m = synthetic_diagonal(100_000, nu, zeta).unwrap();
    let low = lambda_low(&m, None).unwrap();
    let fit = |a: f64, b: f64| {
        let t = run_to_window(&m, &Schedule::JacobiHb { a, b }, zeta, Some(nu), low);
        auto_fit(&t, zeta, Some(nu), low, 0.5).unwrap().exponent
    };
    let low_a = fit(zeta - 0.75, 0.0);
    o.check(low_a < 1.9, format!("a = zeta-0.75: xi_exp = {low_a:.4} (< 1.9)"));
    for a in [zeta - 0.25, zeta + 1.0] {
        let x = fit(a, 0.0);
        o.check((x - 2.0).abs() <= 0.15, format!("a = {a}: xi_exp = {x:.4} (2.0 +-0.15)"));
    }
    let base = fit(1.0, 0.0);
    for b in [-0.5, 0.5] {
        let x = fit(1.0, b);
        o.check(
            (x - base).abs() <= 0.05,
            format!("a = 1, b = {b}: xi_exp = {x:.4}, shift {:.4} from b = 0 (<= 0.05)", (x - base).abs()),
        );
    }
    o.summary = "Jacobi-HB parameter sweep at zeta = 1".into();
    o
}

fn main() {
    // libtest flags such as --nocapture are irrelevant here; a name filter selects criteria
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("criterion_1", criterion_1),
        ("criterion_2", criterion_2),
        ("criterion_3", criterion_3),
        ("criterion_4", criterion_4),
        ("criterion_5", criterion_5),
        ("criterion_6", criterion_6),
        ("criterion_7", criterion_7),
        ("criterion_8", criterion_8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {name}: {} ({:.1}s)", out.summary, start.elapsed().as_secs_f64());
        for d in &out.details {
            println!("         {d}");
        }
        failed += usize::from(!out.pass);
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
