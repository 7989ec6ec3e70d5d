//! Classical cross-sectional dependence tests used as baselines.
//!
//! Sidedness: LM_BP, LM_PUY and LM_FJLX reject in the upper tail, CD_P is
//! two-sided.

use rayon::prelude::*;

use crate::correlation::{residual_correlations, CorrMatrix};
use crate::distributions::{chi2_quantile, chi2_sf, std_normal_quantile, std_normal_sf};
use crate::error::{Error, Result};
use crate::outcome::{check_alpha, Method, TestOutcome};
use crate::panel_model::{trace_pipj, ResidualSet};
use crate::sum_test::P_FLOOR;

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::SmallSample(format!("need N >= 2, got {n}")));
    }
    Ok(())
}

fn upper_normal(method: Method, stat: f64, alpha: f64) -> Result<TestOutcome> {
    let z = std_normal_quantile(1.0 - alpha)?;
    Ok(TestOutcome::new(
        method,
        stat,
        std_normal_sf(stat).max(P_FLOOR),
        alpha,
        stat > z,
    )
    .with_aux("critical_value", z))
}

/// `LM_BP = T Σ_{i<j} ρ̂²_ij`, referred to χ² with `N(N−1)/2` df.
pub fn lm_bp_test(corr: &CorrMatrix, t: usize, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    check_n(corr.n())?;
    let stat = t as f64 * corr.upper().map(|r| r * r).sum::<f64>();
    let df = corr.n_pairs() as f64;
    let p = chi2_sf(stat, df)?.max(P_FLOOR);
    Ok(TestOutcome::new(Method::LmBp, stat, p, alpha, p < alpha)
        .with_aux("df", df)
        .with_aux("critical_value", chi2_quantile(1.0 - alpha, df)?))
}

/// `CD_P = sqrt(2T/(N(N−1))) Σ_{i<j} ρ̂_ij`, two-sided normal.
pub fn cd_p_test(corr: &CorrMatrix, t: usize, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    check_n(corr.n())?;
    let n = corr.n() as f64;
    let stat = (2.0 * t as f64 / (n * (n - 1.0))).sqrt() * corr.upper().sum::<f64>();
    let p = (2.0 * std_normal_sf(stat.abs())).clamp(P_FLOOR, 1.0);
    Ok(TestOutcome::new(Method::CdP, stat, p, alpha, p < alpha)
        .with_aux("critical_value", std_normal_quantile(1.0 - alpha / 2.0)?))
}

/// Finite-sample moment constants `(a_1T, a_2T)` of the bias-adjusted LM
/// statistic for `T − p` residual degrees of freedom.
pub fn puy_constants(dof: usize) -> Result<(f64, f64)> {
    if dof <= 4 {
        return Err(Error::SmallSample(format!(
            "LM_PUY needs T - p > 4, got {dof}"
        )));
    }
    let k = dof as f64;
    let ratio = ((k - 8.0) * (k + 2.0) + 24.0) / ((k + 2.0) * (k - 2.0) * (k - 4.0));
    let a2 = 3.0 * ratio * ratio;
    Ok((a2 - 1.0 / (k * k), a2))
}

/// `tr(P_iP_j)` and `tr((P_iP_j)²)` for every pair `i < j`, in
/// [`CorrMatrix::upper`] order.
fn pair_traces(resids: &ResidualSet) -> Result<Vec<(f64, f64)>> {
    let n = resids.n_units();
    let q = &resids.ortho_basis;
    let rows: Vec<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| trace_pipj(&q[i], &q[j]))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Bias-adjusted LM statistic with `E(P_iP_j)` taken at the observed
/// regressors.
pub fn lm_puy_test(resids: &ResidualSet, alpha: f64) -> Result<TestOutcome> {
    let corr = residual_correlations(resids)?;
    lm_puy_with_corr(resids, &corr, alpha)
}

pub(crate) fn lm_puy_with_corr(
    resids: &ResidualSet,
    corr: &CorrMatrix,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let n = resids.n_units();
    check_n(n)?;
    let (t, p) = (resids.n_periods(), resids.n_regressors());
    let dof = t.saturating_sub(p);
    let (a1, a2) = puy_constants(dof)?;
    let k = dof as f64;
    let traces = pair_traces(resids)?;
    let mut acc = 0.0;
    for (rho, (tr1, tr2)) in corr.upper().zip(traces) {
        let mu = tr1 / k;
        let v2 = tr1 * tr1 * a1 + 2.0 * tr2 * a2;
        if !(v2 > 0.0) {
            return Err(Error::Numerical(format!(
                "LM_PUY pair variance {v2} is not positive"
            )));
        }
        acc += (k * rho * rho - mu) / v2.sqrt();
    }
    let nf = n as f64;
    let stat = (2.0 / (nf * (nf - 1.0))).sqrt() * acc;
    Ok(upper_normal(Method::LmPuy, stat, alpha)?
        .with_aux("a1", a1)
        .with_aux("a2", a2))
}

/// `LM_FJLX = [Σ_{i<j} Tρ̂²_ij − μ_N] / N` with
/// `μ_N = T/(T−p)² Σ_{i<j} tr(P_iP_j)`.
pub fn lm_fjlx_test(resids: &ResidualSet, alpha: f64) -> Result<TestOutcome> {
    let corr = residual_correlations(resids)?;
    lm_fjlx_with_corr(resids, &corr, alpha)
}

pub(crate) fn lm_fjlx_with_corr(
    resids: &ResidualSet,
    corr: &CorrMatrix,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let n = resids.n_units();
    check_n(n)?;
    let (t, p) = (resids.n_periods(), resids.n_regressors());
    if t <= p {
        return Err(Error::SmallSample(format!(
            "LM_FJLX needs T > p, got T={t}, p={p}"
        )));
    }
    let tf = t as f64;
    let dof = (t - p) as f64;
    let tr_sum: f64 = pair_traces(resids)?.iter().map(|(a, _)| a).sum();
    let mu_n = tf / (dof * dof) * tr_sum;
    let sq: f64 = corr.upper().map(|r| tf * r * r).sum();
    let stat = (sq - mu_n) / n as f64;
    Ok(upper_normal(Method::LmFjlx, stat, alpha)?.with_aux("mu_n", mu_n))
}
