//! Monte Carlo size/power runner.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::run_battery;
use crate::distributions::{Innovation, RngStream};
use crate::error::{Error, Result};
use crate::max_test::DEFAULT_NU;
use crate::outcome::{check_alpha, Method, TestOutcome};
use crate::panel_model::{build_residuals, PanelDataset};
use crate::simulation::dgp::{
    apply_psi_sqrt, apply_sma, assemble_responses, block_psi, density_range, gen_coefficients,
    gen_null_errors, gen_regressors, sparse_range, sparse_support_size, ErrorProcess, PsiDraw,
};

const STREAM_COEFFICIENTS: u64 = 0;
const STREAM_REGRESSORS: u64 = 1;
const STREAM_ERRORS: u64 = 2;
const STREAM_PSI: u64 = 3;
/// Stream id of the shared design when `fixed_design` is set.
const FIXED_DESIGN_STREAM: u64 = u64::MAX;

pub const DEFAULT_SMA_DELTA: f64 = 0.2;

/// Cross-sectional structure of the simulated errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Alternative {
    Null,
    Sma { delta: f64 },
    Sparse,
    Density { k: usize },
}

impl std::fmt::Display for Alternative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Alternative::Null => write!(f, "none"),
            Alternative::Sma { delta } => write!(f, "sma:{delta}"),
            Alternative::Sparse => write!(f, "sparse"),
            Alternative::Density { k } => write!(f, "density:{k}"),
        }
    }
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    /// `none`, `sma`, `sma:DELTA`, `sparse` or `density:K`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (head, arg) = match lower.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (lower.as_str(), None),
        };
        let bad = || {
            Error::Config(format!(
                "invalid alternative `{s}` (none|sma|sparse|density:K)"
            ))
        };
        match (head, arg) {
            ("none" | "null", None) => Ok(Alternative::Null),
            ("sparse", None) => Ok(Alternative::Sparse),
            ("sma", None) => Ok(Alternative::Sma {
                delta: DEFAULT_SMA_DELTA,
            }),
            ("sma", Some(a)) => a
                .parse()
                .map(|delta| Alternative::Sma { delta })
                .map_err(|_| bad()),
            ("density", Some(a)) => a
                .parse()
                .map(|k| Alternative::Density { k })
                .map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// Scale of the off-diagonal entries of `Ψ` in the sparse and density
/// designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiScale {
    /// `U[√(4 log N/T), √(6 log N/T)]` (density: `√(7/k · log N/T)` ..).
    #[default]
    LogNOverT,
    /// The same bounds with `N` and `T` exchanged, `√(4 log T/N)` etc.
    LogTOverN,
}

impl std::str::FromStr for PsiScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logn_over_t" | "text" => Ok(PsiScale::LogNOverT),
            "logt_over_n" | "tables" => Ok(PsiScale::LogTOverN),
            _ => Err(Error::Config(format!(
                "unknown psi scale `{s}` (text|tables)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_units: usize,
    pub n_periods: usize,
    /// Includes the intercept column.
    pub n_regressors: usize,
    pub error_process: ErrorProcess,
    pub innovation: Innovation,
    pub alternative: Alternative,
    pub psi_scale: PsiScale,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub nu: f64,
    /// Hold coefficients and regressors fixed across replications.
    pub fixed_design: bool,
    /// Also run `LM_BP` and `LM_FJLX`.
    pub extra_comparators: bool,
}

impl McConfig {
    /// Table-1 style defaults: AR(1) normal errors under the null.
    pub fn new(n_units: usize, n_periods: usize, n_regressors: usize) -> Self {
        McConfig {
            n_units,
            n_periods,
            n_regressors,
            error_process: ErrorProcess::Ar1,
            innovation: Innovation::Normal,
            alternative: Alternative::Null,
            psi_scale: PsiScale::LogNOverT,
            reps: 1000,
            alpha: 0.05,
            seed: 1,
            nu: DEFAULT_NU,
            fixed_design: false,
            extra_comparators: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        check_alpha(self.alpha).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        if self.n_regressors == 0 || self.n_periods <= self.n_regressors {
            return Err(Error::Config(format!(
                "need T > p >= 1, got T = {}, p = {}",
                self.n_periods, self.n_regressors
            )));
        }
        if self.n_units < 4 {
            return Err(Error::Config(format!("need N >= 4, got {}", self.n_units)));
        }
        match self.alternative {
            Alternative::Sma { delta } if !delta.is_finite() => {
                Err(Error::Config("SMA delta must be finite".into()))
            }
            Alternative::Density { k } if k < 2 || k > self.n_units => Err(Error::Config(format!(
                "density k must lie in [2, N], got {k}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m = vec![
            Method::SN,
            Method::LN,
            Method::TC,
            Method::LmPuy,
            Method::CdP,
        ];
        if self.extra_comparators {
            m.extend([Method::LmBp, Method::LmFjlx]);
        }
        m
    }
}

/// One simulated panel plus the ingredients that produced it.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub data: PanelDataset,
    pub errors: DMatrix<f64>,
    pub psi: Option<PsiDraw>,
}

/// Draws replication `rep` of `config`. Every random object comes from a
/// stream derived from `(seed, rep)`, so the result does not depend on which
/// other replications were run.
pub fn simulate_panel(config: &McConfig, rep: u64) -> Result<SimulatedPanel> {
    let (n, t, p) = (config.n_units, config.n_periods, config.n_regressors);
    let stream = RngStream::new(config.seed, rep);
    let design = if config.fixed_design {
        RngStream::new(config.seed, FIXED_DESIGN_STREAM)
    } else {
        stream.clone()
    };
    let (alpha, beta) = gen_coefficients(&mut design.substream(STREAM_COEFFICIENTS), n, p);
    let x = gen_regressors(&mut design.substream(STREAM_REGRESSORS), n, t, p);
    let null = gen_null_errors(
        &stream.substream(STREAM_ERRORS),
        n,
        t,
        config.error_process,
        config.innovation,
    );
    let mut psi_rng = stream.substream(STREAM_PSI);
    let (errors, psi) = match config.alternative {
        Alternative::Null => (null, None),
        Alternative::Sma { delta } => (apply_sma(&null, delta)?, None),
        Alternative::Sparse | Alternative::Density { .. } => {
            let (a, b) = match config.psi_scale {
                PsiScale::LogNOverT => (n, t),
                PsiScale::LogTOverN => (t, n),
            };
            let (k, (lo, hi)) = match config.alternative {
                Alternative::Density { k } => (k, density_range(a, b, k)),
                _ => (sparse_support_size(n), sparse_range(a, b)),
            };
            let draw = block_psi(&mut psi_rng, n, k, lo, hi)?;
            (apply_psi_sqrt(&draw.psi, &null)?, Some(draw))
        }
    };
    let y = assemble_responses(&x, &alpha, &beta, &errors);
    Ok(SimulatedPanel {
        data: PanelDataset::new(y, x)?,
        errors,
        psi,
    })
}

#[derive(Debug)]
pub struct Replication {
    pub outcomes: Vec<(Method, Result<TestOutcome>)>,
    pub psi_repaired: bool,
}

pub fn run_replication(config: &McConfig, rep: u64) -> Result<Replication> {
    let sim = simulate_panel(config, rep)?;
    let resids = build_residuals(&sim.data)?;
    Ok(Replication {
        outcomes: run_battery(&resids, config.alpha, config.nu, &config.methods()),
        psi_repaired: sim.psi.is_some_and(|d| d.repaired),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub rejections: usize,
    /// Replications in which this method produced an outcome.
    pub completed: usize,
    pub failures: usize,
    pub rejection_rate: f64,
    pub mc_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub methods: Vec<MethodSummary>,
    /// Replications whose panel was generated and fitted.
    pub reps_completed: usize,
    /// Replications that failed before any test ran.
    pub reps_failed: usize,
    pub psi_repairs: usize,
    /// First few distinct failure messages, for diagnostics.
    pub failure_samples: Vec<String>,
}

impl McReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == method)
    }

    pub fn rate(&self, method: Method) -> Option<f64> {
        self.summary(method).map(|s| s.rejection_rate)
    }
}

const MAX_FAILURE_SAMPLES: usize = 5;

fn summarize(config: &McConfig, reps: Vec<Result<Replication>>) -> McReport {
    let methods = config.methods();
    let mut rejections = vec![0usize; methods.len()];
    let mut completed = vec![0usize; methods.len()];
    let mut failures = vec![0usize; methods.len()];
    let (mut reps_completed, mut reps_failed, mut psi_repairs) = (0, 0, 0);
    let mut failure_samples: Vec<String> = Vec::new();
    let mut note = |msg: String| {
        if failure_samples.len() < MAX_FAILURE_SAMPLES && !failure_samples.contains(&msg) {
            failure_samples.push(msg);
        }
    };
    for rep in reps {
        match rep {
            Err(e) => {
                reps_failed += 1;
                failures.iter_mut().for_each(|f| *f += 1);
                note(e.to_string());
            }
            Ok(r) => {
                reps_completed += 1;
                psi_repairs += usize::from(r.psi_repaired);
                for (k, (_, out)) in r.outcomes.into_iter().enumerate() {
                    match out {
                        Ok(o) => {
                            completed[k] += 1;
                            rejections[k] += usize::from(o.reject);
                        }
                        Err(e) => {
                            failures[k] += 1;
                            note(e.to_string());
                        }
                    }
                }
            }
        }
    }
    let methods = methods
        .into_iter()
        .enumerate()
        .map(|(k, method)| {
            let (rate, se) = if completed[k] == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let c = completed[k] as f64;
                let r = rejections[k] as f64 / c;
                (r, (r * (1.0 - r) / c).sqrt())
            };
            MethodSummary {
                method,
                rejections: rejections[k],
                completed: completed[k],
                failures: failures[k],
                rejection_rate: rate,
                mc_std_error: se,
            }
        })
        .collect();
    McReport {
        config: config.clone(),
        methods,
        reps_completed,
        reps_failed,
        psi_repairs,
        failure_samples,
    }
}

/// Runs `config.reps` replications on the current rayon pool.
pub fn run_monte_carlo(config: &McConfig) -> Result<McReport> {
    config.validate()?;
    let reps: Vec<Result<Replication>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect();
    Ok(summarize(config, reps))
}

/// As [`run_monte_carlo`] on a dedicated pool of `threads` workers.
pub fn run_monte_carlo_with_threads(config: &McConfig, threads: usize) -> Result<McReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_monte_carlo(config))
}
