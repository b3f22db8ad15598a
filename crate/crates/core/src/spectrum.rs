//! Spectral measures and quadratic problems.
//!
//! A [`DiscreteMeasure`] is the list of eigenvalues `λ_k` of `JJ†` together with the squared
//! coefficients `c_k²` of the target in the matching eigenbasis. Everything the optimizers
//! do on a quadratic is determined by it.

use crate::error::{param, Error, Result};
use crate::numeric::pairwise_sum;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Construction parameters carried alongside a measure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    pub zeta: Option<f64>,
    pub nu: Option<f64>,
    /// Eigenvalue envelope constant: `λ_k ≤ Λ·k^{-ν}`.
    pub lambda_scale: Option<f64>,
    /// CDF constant: `ρ((0,λ]) ≤ Q·λ^ζ`.
    pub q: Option<f64>,
    /// Factor applied to raw eigenvalues at ingestion.
    pub eigen_rescale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    masses: Vec<f64>,
    meta: MeasureMeta,
}

impl DiscreteMeasure {
    /// Atoms must be positive and non-increasing; masses nonnegative and finite.
    pub fn new(atoms: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if atoms.len() != masses.len() {
            return Err(Error::Data(format!("{} atoms but {} masses", atoms.len(), masses.len())));
        }
        if atoms.is_empty() {
            return Err(Error::Data("empty measure".into()));
        }
        for (k, &l) in atoms.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Data(format!("atom {k} is not a positive finite number: {l}")));
            }
            if k > 0 && l > atoms[k - 1] {
                return Err(Error::Data(format!("atoms not sorted in decreasing order at index {k}")));
            }
        }
        if let Some(k) = masses.iter().position(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::Data(format!("mass {k} is negative or non-finite: {}", masses[k])));
        }
        Ok(Self { atoms, masses, meta: MeasureMeta::default() })
    }

    /// Attach metadata, checking the eigenvalue envelope when `(Λ, ν)` are both present.
    pub fn with_meta(mut self, meta: MeasureMeta) -> Result<Self> {
        if let (Some(big), Some(nu)) = (meta.lambda_scale, meta.nu) {
            for (k, &l) in self.atoms.iter().enumerate() {
                let bound = big * ((k + 1) as f64).powf(-nu);
                if l > bound * (1.0 + 1e-12) {
                    return Err(Error::Data(format!("atom {} = {l} exceeds envelope {bound}", k + 1)));
                }
            }
        }
        self.meta = meta;
        Ok(self)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn meta(&self) -> &MeasureMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.masses)
    }

    pub fn lambda_max(&self) -> f64 {
        self.atoms[0]
    }

    pub fn lambda_min(&self) -> f64 {
        *self.atoms.last().unwrap()
    }

    /// Largest ratio `ρ((0,λ_k]) / λ_k^ζ` over the atoms, which is the smallest valid `Q`.
    pub fn cdf_constant(&self, zeta: f64) -> f64 {
        let mut tail = 0.0;
        let mut comp = 0.0;
        let mut best: f64 = 0.0;
        for (l, m) in self.atoms.iter().zip(&self.masses).rev() {
            let (s, c) = neumaier_add(tail, comp, *m);
            tail = s;
            comp = c;
            best = best.max((tail + comp) / l.powf(zeta));
        }
        best
    }
}

fn neumaier_add(sum: f64, comp: f64, x: f64) -> (f64, f64) {
    let t = sum + x;
    let c = if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
    (t, comp + c)
}

/// `ρ((0, λ])`, atoms at `λ` included.
pub fn measure_cdf(m: &DiscreteMeasure, lambda: f64) -> f64 {
    let i = m.atoms.partition_point(|&a| a > lambda);
    pairwise_sum(&m.masses[i..])
}

/// Precomputed tail sums for repeated CDF queries.
#[derive(Debug, Clone)]
pub struct CdfTable {
    atoms: Vec<f64>,
    tails: Vec<f64>,
}

impl CdfTable {
    pub fn new(m: &DiscreteMeasure) -> Self {
        let n = m.len();
        let mut tails = vec![0.0; n + 1];
        let (mut s, mut c) = (0.0, 0.0);
        for i in (0..n).rev() {
            (s, c) = neumaier_add(s, c, m.masses[i]);
            tails[i] = s + c;
        }
        Self { atoms: m.atoms.clone(), tails }
    }

    pub fn cdf(&self, lambda: f64) -> f64 {
        self.tails[self.atoms.partition_point(|&a| a > lambda)]
    }
}

/// Exact power law `ρ((0,λ]) = λ^ζ` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSpec {
    zeta: f64,
}

impl PowerLawSpec {
    pub fn new(zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return param(format!("zeta must be positive, got {zeta}"));
        }
        Ok(Self { zeta })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }
}

fn check_exponents(zeta: f64, nu: f64) -> Result<()> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return param(format!("zeta must be positive, got {zeta}"));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return param(format!("nu must be positive, got {nu}"));
    }
    Ok(())
}

fn generated(atoms: Vec<f64>, masses: Vec<f64>, zeta: f64, nu: Option<f64>) -> Result<DiscreteMeasure> {
    let m = DiscreteMeasure::new(atoms, masses)?;
    let q = m.cdf_constant(zeta);
    m.with_meta(MeasureMeta { zeta: Some(zeta), nu, lambda_scale: nu.map(|_| 1.0), q: Some(q), eigen_rescale: None })
}

/// Diagonal problem `λ_k = k^{-ν}` with masses `ζν·k^{-(ζν+1)}`, `k = 1..M`.
///
/// The masses are the increments of `k^{-ζν}`, so the CDF tracks `λ^ζ` at small λ.
pub fn synthetic_diagonal(m: usize, nu: f64, zeta: f64) -> Result<DiscreteMeasure> {
    check_exponents(zeta, nu)?;
    if m == 0 {
        return param("synthetic_diagonal needs M >= 1");
    }
    let p = zeta * nu;
    let atoms = (1..=m).map(|k| (k as f64).powf(-nu)).collect();
    let masses = (1..=m).map(|k| p * (k as f64).powf(-(p + 1.0))).collect();
    generated(atoms, masses, zeta, Some(nu))
}

/// `k^{-p} - (k+1)^{-p}` without cancellation.
fn power_increment(k: f64, p: f64) -> f64 {
    -(-p * (1.0 / k).ln_1p()).exp_m1() * k.powf(-p)
}

/// Atoms `k^{-ν}` with masses `k^{-ζν} - (k+1)^{-ζν}`, `k = 1..K`.
pub fn discrete_powerlaw(zeta: f64, nu: f64, k_count: usize) -> Result<DiscreteMeasure> {
    check_exponents(zeta, nu)?;
    if k_count == 0 {
        return param("discrete_powerlaw needs K >= 1");
    }
    let p = zeta * nu;
    let atoms = (1..=k_count).map(|k| (k as f64).powf(-nu)).collect();
    let masses = (1..=k_count).map(|k| power_increment(k as f64, p)).collect();
    generated(atoms, masses, zeta, Some(nu))
}

/// Cut-off index below which the slow-SD measure has no tail atoms.
pub fn sd_lowerbound_k0(nu: f64) -> usize {
    10f64.powf(2.0 / nu).ceil() as usize
}

/// `Σ_{k>k0} (k^{-ζν} - (k+1)^{-ζν}) k^{-ν}` to relative accuracy well below 1e-10.
pub fn sd_lowerbound_balance(zeta: f64, nu: f64, k0: usize) -> f64 {
    let p = zeta * nu;
    let cut = (k0 + 1).max(1 << 20);
    let head: Vec<f64> = ((k0 + 1)..=cut).map(|k| power_increment(k as f64, p) * (k as f64).powf(-nu)).collect();
    // midpoint-integral tail with the first three terms of the large-k expansion
    let t = cut as f64 + 0.5;
    let e = p + nu;
    let tail = p * t.powf(-e) / e - p * (p + 1.0) / 2.0 * t.powf(-e - 1.0) / (e + 1.0)
        + p * (p + 1.0) * (p + 2.0) / 6.0 * t.powf(-e - 2.0) / (e + 2.0);
    pairwise_sum(&head) + tail
}

/// Measure on which steepest descent is slow: a power-law tail `k > k0` balanced by an atom at 1.
pub fn sd_lowerbound_measure(zeta: f64, nu: f64, k_count: usize) -> Result<DiscreteMeasure> {
    check_exponents(zeta, nu)?;
    let k0 = sd_lowerbound_k0(nu);
    if k_count <= k0 {
        return param(format!("sd_lowerbound_measure needs K > k0 = {k0}, got {k_count}"));
    }
    let p = zeta * nu;
    let mut atoms = vec![1.0];
    let mut masses = vec![sd_lowerbound_balance(zeta, nu, k0)];
    for k in (k0 + 1)..=k_count {
        let kf = k as f64;
        atoms.push(kf.powf(-nu));
        masses.push(power_increment(kf, p));
    }
    generated(atoms, masses, zeta, Some(nu))
}

/// Equal-mass midpoint discretization of the exact law `ρ((0,λ]) = λ^ζ`.
pub fn equal_mass_discretization(spec: PowerLawSpec, m: usize) -> Result<DiscreteMeasure> {
    if m == 0 {
        return param("equal_mass_discretization needs M >= 1");
    }
    let mf = m as f64;
    let inv = 1.0 / spec.zeta;
    let atoms = (1..=m).map(|k| ((mf - k as f64 + 0.5) / mf).powf(inv)).collect();
    let masses = vec![1.0 / mf; m];
    generated(atoms, masses, spec.zeta, None)
}

/// Linear operator between parameter and target space.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DMatrix<f64>),
    /// Square lower-bidiagonal matrix: `diag[i]` at `(i, i)`, `sub[i]` at `(i+1, i)`.
    LowerBidiagonal {
        diag: Vec<f64>,
        sub: Vec<f64>,
    },
}

impl Operator {
    pub fn nrows(&self) -> usize {
        match self {
            Operator::Dense(m) => m.nrows(),
            Operator::LowerBidiagonal { diag, .. } => diag.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Operator::Dense(m) => m.ncols(),
            Operator::LowerBidiagonal { diag, .. } => diag.len(),
        }
    }

    /// `J w`
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        match self {
            Operator::Dense(m) => (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * w[j]).sum()).collect(),
            Operator::LowerBidiagonal { diag, sub } => (0..diag.len())
                .map(|i| {
                    let mut v = diag[i] * w[i];
                    if i > 0 {
                        v += sub[i - 1] * w[i - 1];
                    }
                    v
                })
                .collect(),
        }
    }

    /// `J† f`
    pub fn apply_transpose(&self, f: &[f64]) -> Vec<f64> {
        match self {
            Operator::Dense(m) => (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)] * f[i]).sum()).collect(),
            Operator::LowerBidiagonal { diag, sub } => (0..diag.len())
                .map(|j| {
                    let mut v = diag[j] * f[j];
                    if j + 1 < diag.len() {
                        v += sub[j] * f[j + 1];
                    }
                    v
                })
                .collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Operator::Dense(m) => m.clone(),
            Operator::LowerBidiagonal { diag, sub } => {
                let n = diag.len();
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    m[(i, i)] = diag[i];
                    if i + 1 < n {
                        m[(i + 1, i)] = sub[i];
                    }
                }
                m
            }
        }
    }
}

/// Quadratic `L(w) = ½‖Jw - f*‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorProblem {
    pub operator: Operator,
    pub target: Vec<f64>,
    pub warnings: Vec<String>,
}

impl OperatorProblem {
    pub fn new(operator: Operator, target: Vec<f64>) -> Result<Self> {
        if operator.nrows() != target.len() {
            return Err(Error::Data(format!(
                "operator has {} rows but target has length {}",
                operator.nrows(),
                target.len()
            )));
        }
        if operator.nrows() == 0 || operator.ncols() == 0 {
            return Err(Error::Data("empty operator".into()));
        }
        Ok(Self { operator, target, warnings: Vec::new() })
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        let r: Vec<f64> = self.operator.apply(w).iter().zip(&self.target).map(|(a, b)| (a - b) * (a - b)).collect();
        0.5 * pairwise_sum(&r)
    }

    /// Eigenvalues of `JJ†` in decreasing order.
    pub fn gram_eigenvalues(&self) -> Result<Vec<f64>> {
        let mut ev = match &self.operator {
            Operator::LowerBidiagonal { diag, sub } => {
                let n = diag.len();
                let mut d: Vec<f64> =
                    (0..n).map(|i| diag[i] * diag[i] + if i > 0 { sub[i - 1] * sub[i - 1] } else { 0.0 }).collect();
                let mut e: Vec<f64> = (0..n).map(|i| if i + 1 < n { diag[i] * sub[i] } else { 0.0 }).collect();
                crate::specfun::tridiagonal_eigenvalues(&mut d, &mut e)
                    .map_err(|_| Error::Numerical("tridiagonal eigenvalues did not converge".into()))?;
                d
            }
            Operator::Dense(j) => {
                let gram = j * j.transpose();
                nalgebra::SymmetricEigen::new(gram).eigenvalues.as_slice().to_vec()
            }
        };
        ev.sort_by(|a, b| b.total_cmp(a));
        Ok(ev)
    }

    /// Spectral measure of `(JJ†, f*)`, without rescaling.
    pub fn spectral_measure(&self) -> Result<DiscreteMeasure> {
        let j = self.operator.to_dense();
        let gram = &j * j.transpose();
        measure_from_symmetric(&gram, &self.target, false)
    }
}

/// Chain operator whose CG losses have a closed form; the target is `e₁`.
pub fn cg_lowerbound_operator(zeta: f64, nu: f64, n: usize) -> Result<OperatorProblem> {
    check_exponents(zeta, nu)?;
    if n < 2 {
        return param(format!("cg_lowerbound_operator needs N >= 2, got {n}"));
    }
    let g = (1.0 - (2.0 + nu) * zeta) / 2.0;
    let diag: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-nu / 2.0)).collect();
    let sub: Vec<f64> = (2..=n)
        .map(|k| {
            let kf = k as f64;
            -(kf / (kf - 1.0)).powf(g) * (kf - 1.0).powf(-nu / 2.0)
        })
        .collect();
    let mut target = vec![0.0; n];
    target[0] = 1.0;
    let mut p = OperatorProblem::new(Operator::LowerBidiagonal { diag, sub }, target)?;
    if !(zeta < 1.0) {
        p.warnings.push(format!(
            "zeta = {zeta} >= 1: the CDF power law of this operator is only guaranteed for 0 < zeta < 1"
        ));
    }
    Ok(p)
}

/// Kernel of an infinitely wide shallow ReLU network.
pub fn ntk_kernel(x: &[f64], y: &[f64]) -> f64 {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    ntk_from_parts(nx, ny, x.iter().zip(y).map(|(a, b)| a * b).sum())
}

fn ntk_from_parts(nx: f64, ny: f64, dot: f64) -> f64 {
    let c = (dot / (nx * ny)).clamp(-1.0, 1.0);
    let phi = c.acos();
    nx * ny * (phi.sin() + 2.0 * c * (PI - phi)) / (2.0 * PI)
}

/// Gram matrix of [`ntk_kernel`]. Rows are filled independently.
pub fn ntk_gram(data: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let norms: Vec<f64> = data.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if let Some(i) = norms.iter().position(|n| !(*n > 0.0 && n.is_finite())) {
        return Err(Error::Data(format!("sample {i} has zero or non-finite norm")));
    }
    if let Some(i) = data.iter().position(|x| x.len() != data[0].len()) {
        return Err(Error::Data(format!("sample {i} has dimension {} != {}", data[i].len(), data[0].len())));
    }
    let n = data.len();
    let row = |i: usize| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let dot: f64 = data[i].iter().zip(&data[j]).map(|(a, b)| a * b).sum();
                ntk_from_parts(norms[i], norms[j], dot)
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..n).map(row).collect();
    let mut g = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    // exact symmetry regardless of summation order
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Centre the samples and scale so that the mean squared norm is one.
pub fn normalize_dataset(data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if data.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let d = data[0].len();
    let nf = data.len() as f64;
    let mut mean = vec![0.0; d];
    for x in data {
        if x.len() != d {
            return Err(Error::Data("samples of different dimension".into()));
        }
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / nf;
        }
    }
    let centred: Vec<Vec<f64>> = data.iter().map(|x| x.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
    let r2 = centred.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / nf;
    if !(r2 > 0.0) {
        return Err(Error::Data("dataset has zero spread".into()));
    }
    let r = r2.sqrt();
    Ok(centred.into_iter().map(|x| x.into_iter().map(|v| v / r).collect()).collect())
}

/// Spectral measure of a Gram matrix and target vector, rescaled so that `λ_max = 1`.
pub fn spectral_measure_from_gram(gram: &DMatrix<f64>, targets: &[f64]) -> Result<DiscreteMeasure> {
    measure_from_symmetric(gram, targets, true)
}

fn measure_from_symmetric(gram: &DMatrix<f64>, targets: &[f64], rescale: bool) -> Result<DiscreteMeasure> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::Data(format!("matrix is {}x{}, not square", n, gram.ncols())));
    }
    if targets.len() != n {
        return Err(Error::Data(format!("{} targets for a {n}x{n} matrix", targets.len())));
    }
    let scale = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .fold(0.0f64, |m, (i, j)| m.max((gram[(i, j)] - gram[(j, i)]).abs()));
    if asym > 1e-8 * scale {
        return Err(Error::Data(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    let eig = nalgebra::SymmetricEigen::new(gram.clone());
    let y = nalgebra::DVector::from_column_slice(targets);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    if !(lmax > 0.0) {
        return Err(Error::Data("matrix has no positive eigenvalues".into()));
    }
    let cutoff = n as f64 * f64::EPSILON * lmax;
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > cutoff)
        .map(|i| {
            let c = eig.eigenvectors.column(i).dot(&y);
            (eig.eigenvalues[i], c * c)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let factor = if rescale { 1.0 / lmax } else { 1.0 };
    let (atoms, masses) = pairs.into_iter().map(|(l, m)| (l * factor, m)).unzip();
    let m = DiscreteMeasure::new(atoms, masses)?;
    m.with_meta(MeasureMeta { eigen_rescale: rescale.then_some(factor), ..Default::default() })
}

/// Seeded Gaussian mixture with alternating `{0, 1}` cluster labels.
pub fn gaussian_mix_dataset(
    d: usize,
    n_clusters: usize,
    per_cluster: usize,
    separation: f64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if d == 0 || n_clusters == 0 || per_cluster == 0 {
        return param("gaussian_mix_dataset needs positive dimension and counts");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let centers: Vec<Vec<f64>> =
        (0..n_clusters).map(|_| (0..d).map(|_| separation * draw(&mut rng)).collect()).collect();
    let mut xs = Vec::with_capacity(n_clusters * per_cluster);
    let mut ys = Vec::with_capacity(n_clusters * per_cluster);
    for (j, c) in centers.iter().enumerate() {
        for _ in 0..per_cluster {
            xs.push(c.iter().map(|v| v + draw(&mut rng)).collect());
            ys.push((j % 2) as f64);
        }
    }
    Ok((xs, ys))
}

/// Envelope constant `Λ = max_k λ_k·k^ν` for a measure with known decay exponent.
pub fn fitted_lambda_scale(m: &DiscreteMeasure, nu: f64) -> f64 {
    m.atoms.iter().enumerate().fold(0.0, |b, (k, l)| b.max(l * ((k + 1) as f64).powf(nu)))
}
