//! Residual cross-sectional correlation matrix shared by every test.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::panel_model::ResidualSet;

/// Largest overshoot of `|ρ̂_ij|` above 1 that is silently clipped.
const CLIP_TOL: f64 = 1e-12;

/// Symmetric matrix of pairwise residual correlations with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    rho: DMatrix<f64>,
}

impl CorrMatrix {
    /// Validates symmetry, unit diagonal and `|ρ| ≤ 1`.
    pub fn from_matrix(rho: DMatrix<f64>) -> Result<Self> {
        let n = rho.nrows();
        if n != rho.ncols() {
            return Err(Error::DimensionMismatch(
                "correlation matrix must be square".into(),
            ));
        }
        for i in 0..n {
            if rho[(i, i)] != 1.0 {
                return Err(Error::Numerical(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let v = rho[(i, j)];
                if v != rho[(j, i)] {
                    return Err(Error::Numerical(format!(
                        "entry ({i}, {j}) is not symmetric"
                    )));
                }
                if !(v.abs() <= 1.0 + CLIP_TOL) {
                    return Err(Error::Numerical(format!(
                        "entry ({i}, {j}) = {v} outside [-1, 1]"
                    )));
                }
            }
        }
        Ok(CorrMatrix { rho })
    }

    /// Builds an `N × N` matrix from the strict upper triangle listed row by
    /// row: `(0,1), (0,2), …, (1,2), …`.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::DimensionMismatch(format!(
                "{} upper entries for N = {n}",
                upper.len()
            )));
        }
        let mut rho = DMatrix::identity(n, n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().unwrap();
                rho[(i, j)] = v;
                rho[(j, i)] = v;
            }
        }
        CorrMatrix::from_matrix(rho)
    }

    pub fn n(&self) -> usize {
        self.rho.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rho[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rho
    }

    /// Iterates `ρ̂_ij` over `i < j`.
    pub fn upper(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| self.rho[(i, j)]))
    }

    pub fn n_pairs(&self) -> usize {
        let n = self.n();
        n * n.saturating_sub(1) / 2
    }
}

/// `ρ̂_ij = ε̂_i'ε̂_j / (‖ε̂_i‖ ‖ε̂_j‖)` on raw (undemeaned) residuals.
pub fn residual_correlations(resids: &ResidualSet) -> Result<CorrMatrix> {
    resids.check_nondegenerate()?;
    let e = &resids.resid;
    let n = e.nrows();
    let gram = e * e.transpose();
    let scale: Vec<f64> = (0..n).map(|i| gram[(i, i)].sqrt()).collect();
    let mut rho = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let mut v = gram[(i, j)] / (scale[i] * scale[j]);
            if v.abs() > 1.0 {
                if v.abs() - 1.0 > CLIP_TOL {
                    return Err(Error::Numerical(format!(
                        "correlation ({i}, {j}) = {v} exceeds 1 beyond tolerance"
                    )));
                }
                v = v.signum();
            }
            rho[(i, j)] = v;
            rho[(j, i)] = v;
        }
    }
    Ok(CorrMatrix { rho })
}
