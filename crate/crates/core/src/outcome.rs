use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Identifies which test produced a [`TestOutcome`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "S_N")]
    SN,
    #[serde(rename = "L_N")]
    LN,
    #[serde(rename = "T_C")]
    TC,
    #[serde(rename = "LM_BP")]
    LmBp,
    #[serde(rename = "LM_PUY")]
    LmPuy,
    #[serde(rename = "LM_FJLX")]
    LmFjlx,
    #[serde(rename = "CD_P")]
    CdP,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::SN,
        Method::LN,
        Method::TC,
        Method::LmBp,
        Method::LmPuy,
        Method::LmFjlx,
        Method::CdP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SN => "S_N",
            Method::LN => "L_N",
            Method::TC => "T_C",
            Method::LmBp => "LM_BP",
            Method::LmPuy => "LM_PUY",
            Method::LmFjlx => "LM_FJLX",
            Method::CdP => "CD_P",
        }
    }

    /// Tail convention used to turn the statistic into a p-value.
    pub fn sidedness(self) -> Sidedness {
        match self {
            Method::CdP => Sidedness::TwoSided,
            _ => Sidedness::Upper,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sidedness {
    Upper,
    TwoSided,
}

/// Result of a single test on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Named by-products such as `sigma2_hat`, `scaling_ratio` or
    /// `critical_value`. Flags are stored as 0.0/1.0.
    pub aux: BTreeMap<String, f64>,
}

impl TestOutcome {
    pub(crate) fn new(
        method: Method,
        statistic: f64,
        p_value: f64,
        alpha: f64,
        reject: bool,
    ) -> Self {
        TestOutcome {
            method,
            statistic,
            p_value,
            alpha,
            reject,
            aux: BTreeMap::new(),
        }
    }

    pub(crate) fn with_aux(mut self, key: &str, value: f64) -> Self {
        self.aux.insert(key.to_owned(), value);
        self
    }

    pub fn aux(&self, key: &str) -> Option<f64> {
        self.aux.get(key).copied()
    }
}

pub(crate) fn check_alpha(alpha: f64) -> crate::Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}
