//! Runs a set of tests against one residual set, sharing the correlation
//! matrix between them.

use crate::combined_test::combined_test;
use crate::comparators::{cd_p_test, lm_bp_test, lm_fjlx_with_corr, lm_puy_with_corr};
use crate::correlation::residual_correlations;
use crate::error::{Error, Result};
use crate::max_test::max_test_with_corr;
use crate::outcome::{Method, TestOutcome};
use crate::panel_model::ResidualSet;
use crate::sum_test::sum_test_with_corr;

/// Outcome of each requested method, in the order requested. A failure in
/// one method never hides the others; `T_C` fails when either input does.
pub fn run_battery(
    resids: &ResidualSet,
    alpha: f64,
    nu: f64,
    methods: &[Method],
) -> Vec<(Method, Result<TestOutcome>)> {
    let corr = match residual_correlations(resids) {
        Ok(c) => c,
        Err(e) => {
            let msg = e.to_string();
            return methods
                .iter()
                .map(|&m| (m, Err(Error::Numerical(msg.clone()).for_method(m))))
                .collect();
        }
    };
    let t = resids.n_periods();
    let wants = |m| methods.contains(&m);
    let need_sn = wants(Method::SN) || wants(Method::TC);
    let need_ln = wants(Method::LN) || wants(Method::TC);
    let mut sn = need_sn.then(|| sum_test_with_corr(resids, &corr, alpha));
    let mut ln = need_ln.then(|| max_test_with_corr(resids, &corr, alpha, nu));
    let mut tc = wants(Method::TC).then(|| match (sn.as_ref().unwrap(), ln.as_ref().unwrap()) {
        (Ok(s), Ok(l)) => combined_test(l, s, alpha),
        (Err(e), _) | (_, Err(e)) => Err(Error::Numerical(format!("input test failed: {e}"))),
    });

    methods
        .iter()
        .map(|&m| {
            let out = match m {
                Method::SN => take(&mut sn),
                Method::LN => take(&mut ln),
                Method::TC => take(&mut tc),
                Method::LmBp => lm_bp_test(&corr, t, alpha),
                Method::CdP => cd_p_test(&corr, t, alpha),
                Method::LmPuy => lm_puy_with_corr(resids, &corr, alpha),
                Method::LmFjlx => lm_fjlx_with_corr(resids, &corr, alpha),
            };
            (m, out.map_err(|e| e.for_method(m)))
        })
        .collect()
}

fn take(slot: &mut Option<Result<TestOutcome>>) -> Result<TestOutcome> {
    slot.take()
        .unwrap_or_else(|| Err(Error::Config("method requested more than once".into())))
}
