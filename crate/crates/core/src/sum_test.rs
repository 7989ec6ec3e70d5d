//! Sum-based test: `S_N` standardized by its plug-in variance, calibrated
//! against the standard normal upper tail.

use nalgebra::DMatrix;

use crate::correlation::{residual_correlations, CorrMatrix};
use crate::distributions::{std_normal_quantile, std_normal_sf};
use crate::error::{Error, Result};
use crate::outcome::{check_alpha, Method, TestOutcome};
use crate::panel_model::ResidualSet;

/// Variance estimates at or below this value are reported as
/// [`Error::NonPositiveVariance`].
pub const VAR_FLOOR: f64 = 1e-12;

/// Smallest p-value reported by any test.
pub const P_FLOOR: f64 = 1e-300;

/// `S_N = sqrt(2 / (N(N−1))) Σ_{i<j} ρ̂_ij`.
pub fn compute_sn(corr: &CorrMatrix) -> f64 {
    let n = corr.n() as f64;
    (2.0 / (n * (n - 1.0))).sqrt() * corr.upper().sum::<f64>()
}

/// Unit-normalized residual rows `v_k = ε̂_k / ‖ε̂_k‖`.
pub(crate) fn normalized_rows(resids: &ResidualSet) -> Result<DMatrix<f64>> {
    resids.check_nondegenerate()?;
    let mut v = resids.resid.clone();
    for (mut row, &ss) in v.row_iter_mut().zip(&resids.resid_sq_norm) {
        row /= ss.sqrt();
    }
    Ok(v)
}

/// Plug-in variance of `S_N`:
/// `2/(N(N−1)) Σ_{i<j} v_j'(v_i − v̄_ij) · v_i'(v_j − v̄_ij)` where `v̄_ij`
/// averages `v_k` over `k ∉ {i, j}`.
///
/// Evaluated from the Gram matrix `K = VV'` and its row sums `r`:
/// `v_j'v̄_ij = (r_j − K_ij − K_jj)/(N−2)`.
pub fn estimate_sigma2_sn(resids: &ResidualSet) -> Result<f64> {
    let n = resids.n_units();
    if n < 3 {
        return Err(Error::SmallSample(format!(
            "sigma2 of S_N needs N >= 3, got {n}"
        )));
    }
    let v = normalized_rows(resids)?;
    let k = &v * v.transpose();
    let row_sums: Vec<f64> = k.row_iter().map(|r| r.sum()).collect();
    let m = (n - 2) as f64;
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let kij = k[(i, j)];
            let a = kij - (row_sums[j] - kij - k[(j, j)]) / m;
            let b = kij - (row_sums[i] - kij - k[(i, i)]) / m;
            acc += a * b;
        }
    }
    let nf = n as f64;
    let sigma2 = 2.0 / (nf * (nf - 1.0)) * acc;
    if !(sigma2 > VAR_FLOOR) {
        return Err(Error::NonPositiveVariance(sigma2));
    }
    Ok(sigma2)
}

/// One-sided upper test of `S_N / σ̂_{S_N}` against `z_α = Φ^{-1}(1 − α)`.
pub fn sum_test(resids: &ResidualSet, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let corr = residual_correlations(resids)?;
    sum_test_with_corr(resids, &corr, alpha)
}

pub(crate) fn sum_test_with_corr(
    resids: &ResidualSet,
    corr: &CorrMatrix,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let sn = compute_sn(corr);
    let sigma2 = estimate_sigma2_sn(resids)?;
    let stat = sn / sigma2.sqrt();
    let z_alpha = std_normal_quantile(1.0 - alpha)?;
    Ok(TestOutcome::new(
        Method::SN,
        stat,
        std_normal_sf(stat).max(P_FLOOR),
        alpha,
        stat > z_alpha,
    )
    .with_aux("s_n", sn)
    .with_aux("sigma2_hat", sigma2)
    .with_aux("critical_value", z_alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// The variance formula evaluated literally, with an explicit `v̄_ij`.
    fn literal_sigma2(e: &DMatrix<f64>) -> f64 {
        let n = e.nrows();
        let v: Vec<Vec<f64>> = e
            .row_iter()
            .map(|r| {
                let nrm = r.norm();
                r.iter().map(|x| x / nrm).collect()
            })
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let t = e.ncols();
        let mut acc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let mut vbar = vec![0.0; t];
                for k in (0..n).filter(|&k| k != i && k != j) {
                    for s in 0..t {
                        vbar[s] += v[k][s] / (n - 2) as f64;
                    }
                }
                let di: Vec<f64> = (0..t).map(|s| v[i][s] - vbar[s]).collect();
                let dj: Vec<f64> = (0..t).map(|s| v[j][s] - vbar[s]).collect();
                acc += dot(&v[j], &di) * dot(&v[i], &dj);
            }
        }
        2.0 / (n * (n - 1)) as f64 * acc
    }

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, t, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn sn_examples() {
        assert_eq!(
            compute_sn(&CorrMatrix::from_upper(4, &[0.0; 6]).unwrap()),
            0.0
        );
        assert_eq!(
            compute_sn(&CorrMatrix::from_upper(2, &[0.37]).unwrap()),
            0.37
        );
        let c = CorrMatrix::from_upper(3, &[0.1, 0.2, -0.3]).unwrap();
        assert_abs_diff_eq!(compute_sn(&c), 0.0, epsilon = 1e-15);
        let c = CorrMatrix::from_upper(3, &[0.1, 0.2, 0.3]).unwrap();
        let oracle = (1.0f64 / 3.0).sqrt() * (0.1 + 0.2 + 0.3);
        assert_abs_diff_eq!(compute_sn(&c), oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(compute_sn(&c), 0.34641, epsilon = 1e-5);
    }

    #[test]
    fn orthogonal_rows_have_zero_variance() {
        let e = DMatrix::<f64>::identity(3, 3);
        let r = estimate_sigma2_sn(&ResidualSet::from_residual_matrix(e));
        assert!(matches!(r, Err(Error::NonPositiveVariance(v)) if v.abs() < 1e-15));
    }

    #[test]
    fn fast_path_matches_literal_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in 3..=8 {
            for t in [3, 5, 8] {
                let e = gaussian(&mut rng, n, t);
                let lit = literal_sigma2(&e);
                match estimate_sigma2_sn(&ResidualSet::from_residual_matrix(e)) {
                    Ok(fast) => assert_abs_diff_eq!(fast, lit, epsilon = 1e-12),
                    Err(Error::NonPositiveVariance(v)) => {
                        assert_abs_diff_eq!(v, lit, epsilon = 1e-12)
                    }
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn sum_test_decisions() {
        let z = std_normal_quantile(0.95).unwrap();
        assert_abs_diff_eq!(z, 1.6449, epsilon = 1e-4);
        // statistic 0 -> p = 0.5
        assert_eq!(std_normal_sf(0.0), 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = gaussian(&mut rng, 10, 20);
        let out = sum_test(&ResidualSet::from_residual_matrix(e), 0.05).unwrap();
        assert_eq!(out.method, Method::SN);
        assert_eq!(out.reject, out.statistic > z);
        assert_abs_diff_eq!(out.p_value, std_normal_sf(out.statistic), epsilon = 1e-15);
        assert!(sum_test(
            &ResidualSet::from_residual_matrix(DMatrix::identity(3, 4)),
            1.5
        )
        .is_err());
    }

    #[test]
    fn iid_null_size_is_nominal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2026);
        let reps = 2000;
        let rejects = (0..reps)
            .filter(|_| {
                let e = gaussian(&mut rng, 50, 50);
                sum_test(&ResidualSet::from_residual_matrix(e), 0.05)
                    .unwrap()
                    .reject
            })
            .count();
        let rate = rejects as f64 / reps as f64;
        assert!((rate - 0.05).abs() <= 0.015, "rate {rate}");
    }

    proptest! {
        #[test]
        fn sigma2_row_scale_invariant(seed in 0u64..1000, scales in proptest::collection::vec(0.1f64..20.0, 6)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = gaussian(&mut rng, 6, 7);
            let scaled = DMatrix::from_fn(6, 7, |i, t| e[(i, t)] * scales[i]);
            let a = estimate_sigma2_sn(&ResidualSet::from_residual_matrix(e));
            let b = estimate_sigma2_sn(&ResidualSet::from_residual_matrix(scaled));
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0)),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
            }
        }
    }
}
