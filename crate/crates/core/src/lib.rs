//! Cross-sectional independence tests for heterogeneous panel data models
//! whose errors may be serially correlated.
//!
//! The crate provides the sum-based statistic `S_N`, the max-based statistic
//! built on `L_N` with a thresholded column-covariance correction, their
//! Fisher combination `T_C`, four classical comparators, and a Monte Carlo
//! harness for size/power studies.
//!
//! ```no_run
//! use panelcsd::{cli_io, panel_model::build_residuals};
//!
//! let data = cli_io::load_panel_csv("panel.csv".as_ref(), true).unwrap();
//! let records = cli_io::run_tests(&data, 0.05, 1.42, false).unwrap();
//! for r in &records {
//!     println!("{} {} {}", r.method, r.statistic, r.p_value);
//! }
//! # let _ = build_residuals(&data);
//! ```

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod cli_io;
pub mod combined_test;
pub mod comparators;
pub mod correlation;
pub mod distributions;
pub mod error;
pub mod outcome;
pub mod panel_model;
pub mod simulation;
pub mod sum_test;

pub use combined_test::{combined_test, fisher_combine};
pub use comparators::{cd_p_test, lm_bp_test, lm_fjlx_test, lm_puy_test};
pub use correlation::{residual_correlations, CorrMatrix};
pub use error::{Error, Result};
pub use max_test::{max_test, CovEstimate, GumbelCalibration, DEFAULT_NU};
pub use outcome::{Method, TestOutcome};
pub use panel_model::{build_residuals, PanelDataset, ResidualSet};
pub use simulation::{run_monte_carlo, McConfig, McReport};
pub use sum_test::sum_test;
