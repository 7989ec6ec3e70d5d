//! Per-unit OLS fits, residual extraction and the projection-trace
//! functionals used by the bias-corrected comparator tests.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a regressor matrix is treated
/// as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Residual vectors shorter than this fraction of `‖y‖` are set to exactly
/// zero, so a perfect fit yields a zero residual row.
const ZERO_RESID_REL: f64 = 1e-12;

/// Observed responses and regressors of a balanced panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    /// `N × T` responses, one row per unit.
    y: DMatrix<f64>,
    /// Per-unit `T × p` regressor matrices.
    x: Vec<DMatrix<f64>>,
}

impl PanelDataset {
    /// Requires `N ≥ 2` and `T > p ≥ 1` with every regressor block `T × p`.
    /// Full column rank is checked when the units are fitted.
    pub fn new(y: DMatrix<f64>, x: Vec<DMatrix<f64>>) -> Result<Self> {
        let (n, t) = y.shape();
        if n < 2 {
            return Err(Error::DimensionMismatch(format!(
                "need at least 2 units, got {n}"
            )));
        }
        if x.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} response rows but {} regressor blocks",
                x.len()
            )));
        }
        let p = x[0].ncols();
        if p == 0 || t <= p {
            return Err(Error::DimensionMismatch(format!(
                "need T > p >= 1, got T={t}, p={p}"
            )));
        }
        if let Some(i) = x.iter().position(|xi| xi.shape() != (t, p)) {
            return Err(Error::DimensionMismatch(format!(
                "unit {i}: regressor block is {:?}, expected ({t}, {p})",
                x[i].shape()
            )));
        }
        if y.iter()
            .chain(x.iter().flat_map(|xi| xi.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(Error::DimensionMismatch(
                "panel contains non-finite values".into(),
            ));
        }
        Ok(PanelDataset { y, x })
    }

    pub fn n_units(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.x[0].ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &[DMatrix<f64>] {
        &self.x
    }

    pub fn unit_y(&self, i: usize) -> DVector<f64> {
        self.y.row(i).transpose()
    }

    /// Reorders units; `order[k]` is the old index of the new unit `k`.
    pub fn permuted(&self, order: &[usize]) -> PanelDataset {
        let y = DMatrix::from_fn(self.y.nrows(), self.y.ncols(), |i, t| self.y[(order[i], t)]);
        let x = order.iter().map(|&i| self.x[i].clone()).collect();
        PanelDataset { y, x }
    }
}

/// Output of a single unit's least-squares fit.
#[derive(Debug, Clone)]
pub struct UnitFit {
    pub beta_hat: DVector<f64>,
    pub resid: DVector<f64>,
    /// `T × p` orthonormal basis of the regressor column space.
    pub q: DMatrix<f64>,
}

/// Least squares through a Householder QR of `x`. The orthonormal factor is
/// returned alongside the coefficients for the projection traces.
pub fn fit_unit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<UnitFit> {
    let (t, p) = x.shape();
    if y.len() != t {
        return Err(Error::DimensionMismatch(format!(
            "regressors have {t} rows but response has length {}",
            y.len()
        )));
    }
    if p == 0 || p > t {
        return Err(Error::DimensionMismatch(format!(
            "need 1 <= p <= T, got p={p}, T={t}"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let (smin, smax) = sv.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &s| {
        (lo.min(s), hi.max(s))
    });
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        return Err(Error::RankDeficient { ratio });
    }
    let q = qr.q();
    let qty = q.tr_mul(y);
    let beta_hat = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { ratio: smin / smax })?;

    let mut resid = y - &q * &qty;
    // one re-orthogonalization pass
    let corr = q.tr_mul(&resid);
    resid -= &q * corr;
    if resid.norm() <= ZERO_RESID_REL * y.norm() {
        resid.fill(0.0);
    }
    Ok(UnitFit { beta_hat, resid, q })
}

/// Per-unit OLS residuals and the regressor bases that produced them.
#[derive(Debug, Clone)]
pub struct ResidualSet {
    /// `N × T`, row `i` holds `ε̂_i`.
    pub resid: DMatrix<f64>,
    pub beta_hat: Vec<DVector<f64>>,
    pub resid_sq_norm: Vec<f64>,
    /// Per-unit `T × p` orthonormal bases `Q_i`.
    pub ortho_basis: Vec<DMatrix<f64>>,
}

impl ResidualSet {
    /// Wraps a raw `N × T` residual matrix that did not come from a
    /// regression. Bases are empty (`p = 0`), so `P_i = I_T`.
    pub fn from_residual_matrix(resid: DMatrix<f64>) -> ResidualSet {
        let (n, t) = resid.shape();
        let resid_sq_norm = resid.row_iter().map(|r| r.norm_squared()).collect();
        ResidualSet {
            resid,
            beta_hat: vec![DVector::zeros(0); n],
            resid_sq_norm,
            ortho_basis: vec![DMatrix::zeros(t, 0); n],
        }
    }

    pub fn n_units(&self) -> usize {
        self.resid.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.resid.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.ortho_basis.first().map_or(0, |q| q.ncols())
    }

    /// Errors with [`Error::DegenerateResidual`] for the first zero row.
    pub fn check_nondegenerate(&self) -> Result<()> {
        match self.resid_sq_norm.iter().position(|&s| !(s > 0.0)) {
            Some(i) => Err(Error::DegenerateResidual(i)),
            None => Ok(()),
        }
    }
}

/// Fits every unit of `data`. Units are fitted in parallel; the result does
/// not depend on scheduling.
pub fn build_residuals(data: &PanelDataset) -> Result<ResidualSet> {
    let n = data.n_units();
    let t = data.n_periods();
    let fits: Vec<UnitFit> = (0..n)
        .into_par_iter()
        .map(|i| fit_unit_ols(&data.x[i], &data.unit_y(i)).map_err(|e| e.for_unit(i)))
        .collect::<Result<_>>()?;

    let mut resid = DMatrix::zeros(n, t);
    let mut beta_hat = Vec::with_capacity(n);
    let mut resid_sq_norm = Vec::with_capacity(n);
    let mut ortho_basis = Vec::with_capacity(n);
    for (i, fit) in fits.into_iter().enumerate() {
        resid.set_row(i, &fit.resid.transpose());
        resid_sq_norm.push(fit.resid.norm_squared());
        beta_hat.push(fit.beta_hat);
        ortho_basis.push(fit.q);
    }
    Ok(ResidualSet {
        resid,
        beta_hat,
        resid_sq_norm,
        ortho_basis,
    })
}

/// `tr(P_i P_j)` and `tr((P_i P_j)²)` for `P_k = I − Q_k Q_k'`.
///
/// With `G = Q_i'Q_j`, idempotence gives `T − 2p + ‖G‖²_F` and
/// `T − 2p + ‖G'G‖²_F`, so only a `p × p` product is formed.
pub fn trace_pipj(q_i: &DMatrix<f64>, q_j: &DMatrix<f64>) -> Result<(f64, f64)> {
    if q_i.shape() != q_j.shape() {
        return Err(Error::DimensionMismatch(format!(
            "bases have shapes {:?} and {:?}",
            q_i.shape(),
            q_j.shape()
        )));
    }
    let (t, p) = q_i.shape();
    let g = q_i.tr_mul(q_j);
    let gtg = g.tr_mul(&g);
    let base = t as f64 - 2.0 * p as f64;
    Ok((base + g.norm_squared(), base + gtg.norm_squared()))
}
