//! Population quantities of the simulated error model, used as oracles.

use nalgebra::DMatrix;

use crate::distributions::{Innovation, RngStream};
use crate::error::{Error, Result};
use crate::simulation::dgp::{psd_sqrt, ErrorProcess};

/// Impulse response `h_0 = 1`, `h_1 = φ + θ`, `h_k = φ h_{k−1}`.
fn impulse_response(phi: f64, theta: f64, t: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(t);
    for k in 0..t {
        h.push(match k {
            0 => 1.0,
            1 => phi + theta,
            _ => phi * h[k - 1],
        });
    }
    h
}

/// Lower-triangular `L` with `ε = L e` for the recursion started at `ε_1 = e_1`.
pub fn sigma_map(phi: f64, theta: f64, t: usize) -> DMatrix<f64> {
    let h = impulse_response(phi, theta, t);
    DMatrix::from_fn(t, t, |r, c| if r >= c { h[r - c] } else { 0.0 })
}

/// Exact finite-sample column covariance `Σ = LL'` for unit-variance
/// innovations and arbitrary ARMA(1,1) coefficients.
pub fn sigma_oracle_arma(phi: f64, theta: f64, t: usize) -> DMatrix<f64> {
    let l = sigma_map(phi, theta, t);
    &l * l.transpose()
}

pub fn sigma_oracle(process: ErrorProcess, t: usize) -> DMatrix<f64> {
    let (phi, theta) = process.coefficients();
    sigma_oracle_arma(phi, theta, t)
}

/// `tr²(Σ)/‖Σ‖²_F`.
pub fn true_scaling_ratio(sigma: &DMatrix<f64>) -> f64 {
    let tr = sigma.trace();
    tr * tr / sigma.norm_squared()
}

/// Kronecker error model `E = U^{1/2} Z L'`, so rows have covariance
/// `Σ = LL'` and columns have covariance `U`.
#[derive(Debug, Clone)]
pub struct ErrorFactorModel {
    pub n_units: usize,
    /// Row covariance; `None` stands for `I_N`.
    pub u_matrix: Option<DMatrix<f64>>,
    pub sigma_map: DMatrix<f64>,
}

impl ErrorFactorModel {
    /// Cross-sectionally independent errors (`U = I_N`).
    pub fn null(process: ErrorProcess, n: usize, t: usize) -> Self {
        let (phi, theta) = process.coefficients();
        ErrorFactorModel {
            n_units: n,
            u_matrix: None,
            sigma_map: sigma_map(phi, theta, t),
        }
    }

    pub fn with_row_covariance(mut self, u: DMatrix<f64>) -> Result<Self> {
        if u.shape() != (self.n_units, self.n_units) {
            return Err(Error::DimensionMismatch(format!(
                "row covariance is {:?}, expected {n} x {n}",
                u.shape(),
                n = self.n_units
            )));
        }
        self.u_matrix = Some(u);
        Ok(self)
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        &self.sigma_map * self.sigma_map.transpose()
    }

    /// Draws `U^{1/2} Z L'`; row `i` of `Z` uses `rng.substream(i)`.
    pub fn sample(&self, rng: &RngStream, innovation: Innovation) -> Result<DMatrix<f64>> {
        let n = self.n_units;
        let t = self.sigma_map.nrows();
        let mut z = DMatrix::zeros(n, t);
        for i in 0..n {
            let mut unit = rng.substream(i as u64);
            for s in 0..t {
                z[(i, s)] = innovation.sample(&mut unit);
            }
        }
        let rows = z * self.sigma_map.transpose();
        match &self.u_matrix {
            None => Ok(rows),
            Some(u) => Ok(psd_sqrt(u)? * rows),
        }
    }
}

/// `M_i = P_i Σ P_i = Σ − B_iΣ − ΣB_i + B_iΣB_i` with `B_i = Q_iQ_i'`.
pub fn projected_sigma(sigma: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    if q.ncols() == 0 {
        return sigma.clone();
    }
    // B Σ = Q (Q'Σ)
    let qt_sigma = q.tr_mul(sigma);
    let b_sigma = q * &qt_sigma;
    let inner = &qt_sigma * q;
    let b_sigma_b = q * inner * q.transpose();
    let mut m = sigma - &b_sigma - b_sigma.transpose() + b_sigma_b;
    m = (&m + m.transpose()) * 0.5;
    m
}

/// Population variance of `S_N` under the null:
/// `2/(N(N−1)) Σ_{i<j} tr(M_iM_j) / (tr(M_i) tr(M_j))`.
///
/// With `A_i = M_i / tr(M_i)` the pair sum is
/// `½ (‖Σ_i A_i‖²_F − Σ_i ‖A_i‖²_F)`, which avoids the `O(N²T²)` loop.
pub fn oracle_sigma2_sn(sigma: &DMatrix<f64>, bases: &[DMatrix<f64>]) -> Result<f64> {
    let n = bases.len();
    if n < 2 {
        return Err(Error::SmallSample(format!("need N >= 2, got {n}")));
    }
    let t = sigma.nrows();
    if !sigma.is_square() || bases.iter().any(|q| q.nrows() != t) {
        return Err(Error::DimensionMismatch("Σ and bases disagree on T".into()));
    }
    let mut total = DMatrix::zeros(t, t);
    let mut self_sq = 0.0;
    for q in bases {
        let m = projected_sigma(sigma, q);
        let tr = m.trace();
        if !(tr > 0.0) {
            return Err(Error::Numerical("projected Σ has zero trace".into()));
        }
        let a = m / tr;
        self_sq += a.norm_squared();
        total += a;
    }
    let pair_sum = 0.5 * (total.norm_squared() - self_sq);
    let nf = n as f64;
    Ok(2.0 / (nf * (nf - 1.0)) * pair_sum)
}
