//! Data-generating processes for the size and power designs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_chi2, sample_normal, Innovation, RngStream};
use crate::error::{Error, Result};

/// Autoregressive coefficient shared by regressors and errors.
pub const AR_COEF: f64 = 0.6;
/// Moving-average coefficient of the ARMA(1,1) errors.
pub const MA_COEF: f64 = 0.2;
/// Burn-in length of the regressor recursion (`t = −50, …, 0`).
pub const REGRESSOR_BURN_IN: usize = 51;
/// Smallest eigenvalue kept when repairing a row-covariance draw.
pub const EIGEN_FLOOR: f64 = 1e-6;

/// Serial-correlation structure of the simulated errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorProcess {
    /// Serially uncorrelated errors.
    Iid,
    Ar1,
    Arma11,
}

impl ErrorProcess {
    /// `(φ, θ)` of `ε_t = φ ε_{t−1} + e_t + θ e_{t−1}`.
    pub fn coefficients(self) -> (f64, f64) {
        match self {
            ErrorProcess::Iid => (0.0, 0.0),
            ErrorProcess::Ar1 => (AR_COEF, 0.0),
            ErrorProcess::Arma11 => (AR_COEF, MA_COEF),
        }
    }
}

impl std::str::FromStr for ErrorProcess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iid" | "none" => Ok(ErrorProcess::Iid),
            "ar1" => Ok(ErrorProcess::Ar1),
            "arma11" => Ok(ErrorProcess::Arma11),
            _ => Err(Error::Config(format!(
                "unknown error process `{s}` (ar1|arma11|iid)"
            ))),
        }
    }
}

/// `α_i ~ N(0, 1)` and slopes `β_li ~ N(1, 0.04)`, the latter as an
/// `N × (p − 1)` matrix.
pub fn gen_coefficients<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    p: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let alpha = DVector::from_fn(n, |_, _| sample_normal(rng));
    let beta = DMatrix::from_fn(n, p.saturating_sub(1), |_, _| {
        1.0 + 0.2 * sample_normal(rng)
    });
    (alpha, beta)
}

/// `x_t = φ x_{t−1} + v_t` from `x = 0` before the first innovation,
/// dropping the first `burn_in` values.
pub fn ar1_path(innovations: &[f64], phi: f64, burn_in: usize) -> Vec<f64> {
    let mut x = 0.0;
    let mut out = Vec::with_capacity(innovations.len().saturating_sub(burn_in));
    for (k, v) in innovations.iter().enumerate() {
        x = phi * x + v;
        if k >= burn_in {
            out.push(x);
        }
    }
    out
}

/// Per-unit `T × p` regressor blocks: an intercept column followed by
/// `p − 1` AR(1) columns with unit-specific innovation scale
/// `ψ²/(1 − 0.36)`, `ψ² ~ χ²₆/6`.
pub fn gen_regressors<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    t: usize,
    p: usize,
) -> Vec<DMatrix<f64>> {
    (0..n)
        .map(|_| {
            let mut x = DMatrix::from_element(t, p, 1.0);
            for l in 1..p {
                let psi2 = sample_chi2(rng, 6) / 6.0;
                let sd = (psi2 / (1.0 - AR_COEF * AR_COEF)).sqrt();
                let innov: Vec<f64> = (0..REGRESSOR_BURN_IN + t)
                    .map(|_| sd * sample_normal(rng))
                    .collect();
                let path = ar1_path(&innov, AR_COEF, REGRESSOR_BURN_IN);
                x.set_column(l, &DVector::from_vec(path));
            }
            x
        })
        .collect()
}

/// `ε_1 = e_1`, `ε_t = φ ε_{t−1} + e_t + θ e_{t−1}`.
pub fn arma_filter(innovations: &[f64], phi: f64, theta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(innovations.len());
    let mut prev_eps = 0.0;
    let mut prev_e = 0.0;
    for (k, &e) in innovations.iter().enumerate() {
        let eps = if k == 0 {
            e
        } else {
            phi * prev_eps + e + theta * prev_e
        };
        out.push(eps);
        prev_eps = eps;
        prev_e = e;
    }
    out
}

/// `N × T` null errors; row `i` is driven by `rng.substream(i)`.
pub fn gen_null_errors(
    rng: &RngStream,
    n: usize,
    t: usize,
    process: ErrorProcess,
    innovation: Innovation,
) -> DMatrix<f64> {
    let (phi, theta) = process.coefficients();
    let mut out = DMatrix::zeros(n, t);
    for i in 0..n {
        let mut unit_rng = rng.substream(i as u64);
        let e: Vec<f64> = (0..t).map(|_| innovation.sample(&mut unit_rng)).collect();
        let row = arma_filter(&e, phi, theta);
        for (s, v) in row.into_iter().enumerate() {
            out[(i, s)] = v;
        }
    }
    out
}

/// Spatial MA(1) across the unit ordering, applied to each column:
/// interior `ε*_i = δ(0.5 ε_{i−1} + 0.5 ε_{i+1}) + ε_i`, end rows use
/// `0.5 δ` times their single neighbour.
pub fn apply_sma(errors: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    let n = errors.nrows();
    if n < 3 {
        return Err(Error::SmallSample(format!(
            "SMA alternative needs N >= 3, got {n}"
        )));
    }
    let mut out = errors.clone();
    for i in 0..n {
        let mut row = errors.row(i).into_owned();
        if i > 0 {
            row += errors.row(i - 1) * (0.5 * delta);
        }
        if i + 1 < n {
            row += errors.row(i + 1) * (0.5 * delta);
        }
        out.set_row(i, &row);
    }
    Ok(out)
}

/// A random row-covariance matrix supported on a unit subset.
#[derive(Debug, Clone)]
pub struct PsiDraw {
    pub psi: DMatrix<f64>,
    /// Sorted unit indices of the dependent block.
    pub support: Vec<usize>,
    /// True when eigenvalue clipping was needed.
    pub repaired: bool,
}

/// Unit diagonal plus iid `U[lo, hi]` off-diagonals on a random subset of
/// size `k`; the block is eigen-repaired if it is not positive definite.
pub fn block_psi<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    k: usize,
    lo: f64,
    hi: f64,
) -> Result<PsiDraw> {
    if k > n {
        return Err(Error::Domain(format!("support size {k} exceeds N = {n}")));
    }
    let mut support = sample(rng, n, k).into_vec();
    support.sort_unstable();
    let mut block = DMatrix::identity(k, k);
    for a in 0..k {
        for b in a + 1..k {
            let v = rng.random_range(lo..=hi);
            block[(a, b)] = v;
            block[(b, a)] = v;
        }
    }
    let (block, repaired) = repair_psd(&block, EIGEN_FLOOR)?;
    let mut psi = DMatrix::identity(n, n);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            psi[(i, j)] = block[(a, b)];
        }
    }
    Ok(PsiDraw {
        psi,
        support,
        repaired,
    })
}

/// Sparse design: `|S| = ⌈N^0.3⌉`, entries `U[√(4 log N/T), √(6 log N/T)]`.
pub fn gen_sparse_psi<R: Rng + ?Sized>(rng: &mut R, n: usize, t: usize) -> Result<PsiDraw> {
    if n < 2 {
        return Err(Error::SmallSample(format!(
            "sparse alternative needs N >= 2, got {n}"
        )));
    }
    let (lo, hi) = sparse_range(n, t);
    block_psi(rng, n, sparse_support_size(n), lo, hi)
}

pub fn sparse_support_size(n: usize) -> usize {
    ((n as f64).powf(0.3).ceil() as usize).clamp(2, n)
}

pub fn sparse_range(n: usize, t: usize) -> (f64, f64) {
    let r = (n as f64).ln() / t as f64;
    ((4.0 * r).sqrt(), (6.0 * r).sqrt())
}

/// Density sweep: `|S| = k`, entries `U[√(7/k · log N/T), √(9/k · log N/T)]`.
pub fn gen_density_psi<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    t: usize,
    k: usize,
) -> Result<PsiDraw> {
    if k < 2 || k > n {
        return Err(Error::Domain(format!(
            "density size k must satisfy 2 <= k <= N, got {k}"
        )));
    }
    let (lo, hi) = density_range(n, t, k);
    block_psi(rng, n, k, lo, hi)
}

pub fn density_range(n: usize, t: usize, k: usize) -> (f64, f64) {
    let r = (n as f64).ln() / t as f64 / k as f64;
    ((7.0 * r).sqrt(), (9.0 * r).sqrt())
}

fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), 1e-14, 100_000).ok_or(Error::EigenFailure)
}

/// Clips eigenvalues below `floor` and reassembles `V diag(λ) V'`.
pub fn repair_psd(m: &DMatrix<f64>, floor: f64) -> Result<(DMatrix<f64>, bool)> {
    let eig = symmetric_eigen(m)?;
    if eig.eigenvalues.min() >= floor {
        return Ok((m.clone(), false));
    }
    let lam = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&lam) * v.transpose();
    out = (&out + out.transpose()) * 0.5;
    Ok((out, true))
}

/// Principal square root `V diag(√λ) V'` of a symmetric PSD matrix;
/// eigenvalues that round below zero are treated as zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(m)?;
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&root) * v.transpose())
}

/// `Ψ^{1/2} · errors`.
pub fn apply_psi_sqrt(psi: &DMatrix<f64>, errors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if psi.nrows() != errors.nrows() || !psi.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Ψ is {:?} but errors have {} rows",
            psi.shape(),
            errors.nrows()
        )));
    }
    Ok(psd_sqrt(psi)? * errors)
}

/// `y_it = α_i + Σ_l x_li,t β_li + ε_it` for every unit.
pub fn assemble_responses(
    x: &[DMatrix<f64>],
    alpha: &DVector<f64>,
    beta: &DMatrix<f64>,
    errors: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (n, t) = errors.shape();
    let mut y = errors.clone();
    for i in 0..n {
        let p = x[i].ncols();
        for s in 0..t {
            let mut v = alpha[i];
            for l in 1..p {
                v += x[i][(s, l)] * beta[(i, l - 1)];
            }
            y[(i, s)] += v;
        }
    }
    y
}
