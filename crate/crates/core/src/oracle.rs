//! Closed-form losses, bounds and predicted exponents.

use crate::error::{param, Result};
use crate::specfun::{chebyshev_t_log, ln_gamma_pos};
use crate::spectrum::DiscreteMeasure;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validity {
    Exact,
    Asymptotic,
    UpperBound,
}

/// Predicted loss decay `L_n ≈ ½·C·n^{-ξ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub exponent: f64,
    pub prefactor: Option<f64>,
    pub validity: Validity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    GdConstant,
    GdScheduled,
    SteepestDescent,
    HbConstant,
    HbJacobi,
    ConjugateGradients,
    StableConjugateGradients,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assumptions {
    /// Only `ρ((0, λ]) ~ Qλ^ζ` is known.
    CdfOnly,
    /// Additionally the eigenvalues decay as `λ_k ≤ Λk^{-ν}`.
    CdfEigendecay,
}

/// Leading term `(Γ(ζ+1)/2)·(2αn/(1-β))^{-ζ}` of constant-rate GD/HB.
pub fn hb_asymptotic_loss(n: f64, alpha: f64, beta: f64, zeta: f64) -> f64 {
    0.5 * (ln_gamma_pos(zeta + 1.0) - zeta * (2.0 * alpha * n / (1.0 - beta)).ln()).exp()
}

/// Exact CG loss `Γ²(ζ+1)·n!²/(2Γ²(ζ+n+1))` for the measure with CDF `λ^ζ` on `[0, 1]`.
pub fn cg_exact_powerlaw_loss(n: usize, zeta: f64) -> f64 {
    let nf = n as f64;
    let lg = ln_gamma_pos(zeta + 1.0) + ln_gamma_pos(nf + 1.0) - ln_gamma_pos(zeta + nf + 1.0);
    0.5 * (2.0 * lg).exp()
}

/// Exact CG loss `(2Σ_{m=1}^{n+1} m^{(2+ν)ζ-1})^{-1}` on the lower-bound chain operator.
pub fn cg_chain_loss(n: usize, zeta: f64, nu: f64) -> f64 {
    let p = (2.0 + nu) * zeta - 1.0;
    let s: f64 = (1..=n + 1).rev().map(|m| (m as f64).powf(p)).sum();
    1.0 / (2.0 * s)
}

/// Companion asymptotic `((2+ν)ζ/2)·n^{-(2+ν)ζ}` of [`cg_chain_loss`].
pub fn cg_chain_loss_asymptotic(n: f64, zeta: f64, nu: f64) -> f64 {
    let e = (2.0 + nu) * zeta;
    0.5 * e * n.powf(-e)
}

/// Constant `S(ζ, a)` of the Jacobi-HB bound `L_n ≤ ½·S·n^{-2ζ}`.
pub fn jacobi_bound_constant(zeta: f64, a: f64) -> Result<f64> {
    if !(a > 0.0 && a > zeta - 0.5) {
        return param(format!("bound needs a > max(0, ζ - 1/2); got a = {a}, ζ = {zeta}"));
    }
    let q = 4.0 * a + 5.0;
    let lead = (q * q / 2.0).powf(zeta);
    let ln_frac = (2.0 * a + 2.0) * std::f64::consts::LN_2 + 2.0 * ln_gamma_pos(a + 1.0)
        - std::f64::consts::PI.ln()
        - (2.0 * a + 1.0) * q.ln();
    Ok(lead * (1.0 + zeta / (a + 0.5 - zeta) * ln_frac.exp()))
}

/// Upper bound `(L₀^{1/s} + (1/|s|)(ζ/(2(s+ζ)))^{1/s}·n)^s` on steepest-descent losses.
pub fn sd_upper_bound(n: f64, s: f64, zeta: f64, loss0: f64) -> Result<f64> {
    if !(s > -zeta && s < 0.0) {
        return param(format!("exponent s must lie in (-ζ, 0) = ({}, 0), got {s}", -zeta));
    }
    if !(loss0 > 0.0) {
        return param(format!("initial loss must be positive, got {loss0}"));
    }
    let inner = loss0.powf(1.0 / s) + (zeta / (2.0 * (s + zeta))).powf(1.0 / s) * n / s.abs();
    Ok(inner.powf(s))
}

/// Loss of the shifted Chebyshev residual polynomial, an upper bound on the CG loss.
///
/// `T_n` is rescaled so `[c²ln²n/n², 1]` maps onto `[-1, 1]` and normalized at `λ = 0`.
pub fn chebyshev_trial_loss(n: usize, measure: &DiscreteMeasure, c: f64) -> Result<f64> {
    if n < 2 {
        return param("Chebyshev trial polynomial needs n ≥ 2");
    }
    let ln_n = (n as f64).ln();
    let eps = (c * ln_n / n as f64).powi(2);
    if !(c > 0.0 && eps < 1.0) {
        return param(format!("interval [{eps}, 1] is empty for n = {n}, c = {c}"));
    }
    let map = |l: f64| (2.0 * l - 1.0 - eps) / (1.0 - eps);
    let (ln0, _) = chebyshev_t_log(n, map(0.0));
    let terms: Vec<f64> = measure
        .atoms()
        .iter()
        .zip(measure.masses())
        .map(|(&l, &m)| {
            let (lt, _) = chebyshev_t_log(n, map(l));
            m * (2.0 * (lt - ln0)).exp()
        })
        .collect();
    Ok(0.5 * crate::numeric::pairwise_sum(&terms))
}

/// Predicted exponent for an algorithm family.
pub fn theoretical_exponent(
    kind: AlgorithmKind,
    zeta: f64,
    nu: Option<f64>,
    assumptions: Assumptions,
) -> Result<TheoryPrediction> {
    use AlgorithmKind::*;
    if !(zeta > 0.0) {
        return param(format!("ζ must be positive, got {zeta}"));
    }
    let (exponent, validity) = match (kind, assumptions) {
        (GdConstant | HbConstant, _) => (zeta, Validity::Asymptotic),
        (SteepestDescent, _) => (zeta, Validity::UpperBound),
        (GdScheduled | HbJacobi, _) => (2.0 * zeta, Validity::UpperBound),
        (ConjugateGradients | StableConjugateGradients, Assumptions::CdfOnly) => (2.0 * zeta, Validity::UpperBound),
        (ConjugateGradients | StableConjugateGradients, Assumptions::CdfEigendecay) => {
            let Some(nu) = nu.filter(|v| *v > 0.0) else {
                return param("eigenvalue decay exponent ν required for this prediction");
            };
            ((2.0 + nu) * zeta, Validity::UpperBound)
        }
    };
    Ok(TheoryPrediction { exponent, prefactor: None, validity })
}
