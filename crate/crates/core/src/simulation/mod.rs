//! Data-generating processes, population oracles and the Monte Carlo runner.

pub mod dgp;
pub mod oracle;
pub mod runner;

pub use dgp::ErrorProcess;
pub use oracle::{oracle_sigma2_sn, sigma_oracle, ErrorFactorModel};
pub use runner::{
    run_monte_carlo, run_monte_carlo_with_threads, run_replication, simulate_panel, Alternative,
    McConfig, McReport, MethodSummary, PsiScale,
};
