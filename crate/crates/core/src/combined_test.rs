//! Fisher combination of the max- and sum-test p-values, calibrated
//! against χ²₄.

use crate::error::{Error, Result};
use crate::outcome::{check_alpha, Method, TestOutcome};
use crate::sum_test::P_FLOOR;

/// `T_C = −2 log p_l − 2 log p_s`; inputs below [`P_FLOOR`] are clamped.
pub fn fisher_combine(p_l: f64, p_s: f64) -> Result<f64> {
    for p in [p_l, p_s] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!(
                "p-value must lie in (0, 1], got {p}"
            )));
        }
    }
    Ok(-2.0 * p_l.max(P_FLOOR).ln() - 2.0 * p_s.max(P_FLOOR).ln())
}

/// `F(x) = 1 − e^{−x/2}(1 + x/2)` for `x ≥ 0`.
pub fn chi2_4_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    -(-x / 2.0).exp_m1() - (-x / 2.0).exp() * x / 2.0
}

pub fn chi2_4_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    (-x / 2.0).exp() * (1.0 + x / 2.0)
}

/// `1 − α` quantile of χ²₄ from the closed-form CDF.
pub fn chi2_4_quantile(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    // sf is decreasing; bracket then bisect and polish with Newton
    let (mut lo, mut hi) = (0.0_f64, 8.0_f64);
    while chi2_4_sf(hi) > alpha {
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if chi2_4_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let dens = x * (-x / 2.0).exp() / 4.0;
        if dens > 0.0 {
            x += (chi2_4_sf(x) - alpha) / dens;
        }
    }
    Ok(x)
}

/// Combines a max-test and a sum-test outcome computed on the same
/// residuals; rejects when `T_C ≥ q_α`.
pub fn combined_test(
    max_out: &TestOutcome,
    sum_out: &TestOutcome,
    alpha: f64,
) -> Result<TestOutcome> {
    if max_out.method != Method::LN || sum_out.method != Method::SN {
        return Err(Error::Domain(format!(
            "combined test expects (L_N, S_N) outcomes, got ({}, {})",
            max_out.method, sum_out.method
        )));
    }
    let tc = fisher_combine(max_out.p_value, sum_out.p_value)?;
    let q = chi2_4_quantile(alpha)?;
    Ok(
        TestOutcome::new(Method::TC, tc, chi2_4_sf(tc).max(P_FLOOR), alpha, tc >= q)
            .with_aux("p_l", max_out.p_value)
            .with_aux("p_s", sum_out.p_value)
            .with_aux("critical_value", q),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Composite Simpson on the χ²₄ density.
    fn integrated_cdf(x: f64) -> f64 {
        let n = 4000;
        let h = x / n as f64;
        let f = |u: f64| u * (-u / 2.0).exp() / 4.0;
        let mut s = f(0.0) + f(x);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_combine(1.0, 1.0).unwrap(), 0.0);
        let e1 = (-1.0f64).exp();
        assert_abs_diff_eq!(fisher_combine(e1, e1).unwrap(), 4.0, epsilon = 1e-14);
        let v = fisher_combine(0.05, 0.20).unwrap();
        assert_abs_diff_eq!(v, -2.0 * (0.05f64.ln() + 0.20f64.ln()), epsilon = 1e-14);
        assert_abs_diff_eq!(v, 9.2103, epsilon = 1e-4);
        assert!(fisher_combine(0.0, 0.5).is_err());
        assert!(fisher_combine(0.5, 1.5).is_err());
        assert!(fisher_combine(f64::NAN, 0.5).is_err());
        let tiny = fisher_combine(1e-320, 1.0).unwrap();
        assert_abs_diff_eq!(tiny, -2.0 * P_FLOOR.ln(), epsilon = 1e-12);
    }

    #[test]
    fn chi2_4_closed_form_matches_integration() {
        let mut x = 0.0;
        while x <= 50.0 {
            assert_abs_diff_eq!(chi2_4_cdf(x), integrated_cdf(x), epsilon = 1e-10);
            x += 0.5;
        }
        assert_eq!(chi2_4_sf(0.0), 1.0);
    }

    #[test]
    fn chi2_4_quantile_by_bisection() {
        let (mut lo, mut hi) = (0.0_f64, 50.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - (-mid / 2.0).exp() * (1.0 + mid / 2.0) < 0.95 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = chi2_4_quantile(0.05).unwrap();
        assert_abs_diff_eq!(q, lo, epsilon = 1e-10);
        assert_abs_diff_eq!(q, 9.4877, epsilon = 1e-4);
        let general = crate::distributions::chi2_quantile(0.95, 4.0).unwrap();
        assert_abs_diff_eq!(q, general, epsilon = 1e-8);
    }

    #[test]
    fn combined_outcome() {
        let l = TestOutcome::new(Method::LN, 0.0, 0.05, 0.05, false);
        let s = TestOutcome::new(Method::SN, 0.0, 0.20, 0.05, false);
        let c = combined_test(&l, &s, 0.05).unwrap();
        assert_eq!(c.method, Method::TC);
        assert_eq!(c.statistic, fisher_combine(0.05, 0.20).unwrap());
        assert!(!c.reject);
        assert_abs_diff_eq!(c.p_value, chi2_4_sf(c.statistic), epsilon = 1e-15);

        let one = TestOutcome::new(Method::LN, 0.0, 1.0, 0.05, false);
        let one_s = TestOutcome::new(Method::SN, 0.0, 1.0, 0.05, false);
        assert_eq!(combined_test(&one, &one_s, 0.05).unwrap().p_value, 1.0);
        assert!(combined_test(&s, &l, 0.05).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_decreasing(a in 1e-6f64..1.0, b in 1e-6f64..1.0, d in 1e-4f64..0.5) {
            prop_assert_eq!(fisher_combine(a, b).unwrap(), fisher_combine(b, a).unwrap());
            let smaller = (a * (1.0 - d)).max(1e-7);
            prop_assert!(fisher_combine(smaller, b).unwrap() > fisher_combine(a, b).unwrap());
        }
    }
}
