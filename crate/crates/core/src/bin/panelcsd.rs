use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use panelcsd::cli_io::{
    apply_mc_pairs, format_mc_reports, format_records, load_panel_csv, parse_cell, parse_config,
    run_tests, OutputFormat,
};
use panelcsd::simulation::{run_monte_carlo, Alternative, McConfig};
use panelcsd::{Error, Result};

#[derive(Parser)]
#[command(
    name = "panelcsd",
    version,
    about = "Cross-sectional independence tests for panel data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a long-format CSV panel for cross-sectional dependence.
    Test(TestArgs),
    /// Monte Carlo size/power study.
    Simulate(SimArgs),
    /// Reproduce one cell of a size/power table, or the density sweep.
    Table(TableArgs),
}

#[derive(Args)]
struct Common {
    /// Flat key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Also run LM_BP, LM_PUY, LM_FJLX and CD_P (simulations always run
    /// LM_PUY and CD_P).
    #[arg(long)]
    comparators: bool,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    no_intercept: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long = "p")]
    p: Option<usize>,
    /// ar1, arma11 or iid
    #[arg(long)]
    null: Option<String>,
    /// normal, t6 or chi5
    #[arg(long)]
    dist: Option<String>,
    /// none, sma, sma:DELTA, sparse or density:K
    #[arg(long)]
    alt: Option<String>,
    /// Entry scale of the sparse/density Ψ: text (log N/T) or tables (log T/N)
    #[arg(long)]
    psi_scale: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hold coefficients and regressors fixed across replications.
    #[arg(long)]
    fixed_design: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TableArgs {
    /// 1 (size), 2 (SMA power), 3 (sparse power) or fig1 (density sweep).
    #[arg(long)]
    table: String,
    /// e.g. N=100,T=200,p=3,dist=normal,proc=ar1; for fig1 add k=2:8:16
    #[arg(long, default_value = "")]
    cell: String,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to `tables`.
    #[arg(long)]
    psi_scale: Option<String>,
    #[command(flatten)]
    common: Common,
}

/// Config-file entries overlaid with the flags that were given.
fn merged_pairs(
    common: &Common,
    flags: Vec<(&str, Option<String>)>,
) -> Result<BTreeMap<String, String>> {
    let mut pairs = match &common.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let shared = [
        ("alpha", common.alpha.map(|v| v.to_string())),
        ("nu", common.nu.map(|v| v.to_string())),
        ("format", common.format.clone()),
        ("threads", common.threads.map(|v| v.to_string())),
        ("comparators", common.comparators.then(|| "true".to_owned())),
    ];
    for (k, v) in flags.into_iter().chain(shared) {
        if let Some(v) = v {
            pairs.insert(k.to_owned(), v);
        }
    }
    Ok(pairs)
}

fn get<T: std::str::FromStr>(pairs: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match pairs.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
    }
}

fn flag_bool(pairs: &BTreeMap<String, String>, key: &str) -> bool {
    pairs
        .get(key)
        .is_some_and(|v| matches!(v.to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "on"))
}

fn with_threads<T>(
    pairs: &BTreeMap<String, String>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T>
where
    T: Send,
{
    match get::<usize>(pairs, "threads", 0)? {
        0 => f(),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(f),
    }
}

fn run_test(args: TestArgs) -> Result<String> {
    let pairs = merged_pairs(
        &args.common,
        vec![
            ("input", args.input.map(|p| p.display().to_string())),
            ("no_intercept", args.no_intercept.then(|| "true".to_owned())),
        ],
    )?;
    let input = pairs
        .get("input")
        .ok_or_else(|| Error::Config("--input is required".into()))?;
    let alpha: f64 = get(&pairs, "alpha", 0.05)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let nu: f64 = get(&pairs, "nu", panelcsd::DEFAULT_NU)?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::Config(format!("nu must be positive, got {nu}")));
    }
    let format: OutputFormat = get(&pairs, "format", OutputFormat::Csv)?;
    let data = load_panel_csv(input.as_ref(), !flag_bool(&pairs, "no_intercept"))?;
    let records = run_tests(&data, alpha, nu, flag_bool(&pairs, "comparators"))?;
    format_records(&records, format)
}

fn run_simulate(args: SimArgs) -> Result<String> {
    let pairs = merged_pairs(
        &args.common,
        vec![
            ("N", args.n.map(|v| v.to_string())),
            ("T", args.t.map(|v| v.to_string())),
            ("p", args.p.map(|v| v.to_string())),
            ("null", args.null),
            ("dist", args.dist),
            ("alt", args.alt),
            ("psi_scale", args.psi_scale),
            ("reps", args.reps.map(|v| v.to_string())),
            ("seed", args.seed.map(|v| v.to_string())),
            ("fixed_design", args.fixed_design.then(|| "true".to_owned())),
        ],
    )?;
    let cfg = apply_mc_pairs(McConfig::new(100, 200, 3), &pairs)?;
    let format: OutputFormat = get(&pairs, "format", OutputFormat::Csv)?;
    let report = with_threads(&pairs, || run_monte_carlo(&cfg))?;
    format_mc_reports(&[report], format)
}

fn run_table(args: TableArgs) -> Result<String> {
    let mut pairs = merged_pairs(
        &args.common,
        vec![
            ("reps", args.reps.map(|v| v.to_string())),
            ("seed", args.seed.map(|v| v.to_string())),
            ("psi_scale", args.psi_scale),
        ],
    )?;
    pairs
        .entry("psi_scale".to_owned())
        .or_insert_with(|| "tables".to_owned());
    pairs.extend(parse_cell(&args.cell)?);
    let format: OutputFormat = get(&pairs, "format", OutputFormat::Csv)?;
    let (base, ks): (McConfig, Vec<usize>) = match args.table.to_ascii_lowercase().as_str() {
        "1" => (McConfig::new(100, 200, 3), vec![]),
        "2" => (
            McConfig {
                alternative: Alternative::Sma { delta: 0.2 },
                ..McConfig::new(100, 200, 3)
            },
            vec![],
        ),
        "3" => (
            McConfig {
                alternative: Alternative::Sparse,
                ..McConfig::new(100, 200, 3)
            },
            vec![],
        ),
        "fig1" | "figure1" => {
            let ks = match pairs.get("k") {
                Some(spec) => spec
                    .split(':')
                    .map(|k| {
                        k.parse()
                            .map_err(|_| Error::Config(format!("bad k list `{spec}`")))
                    })
                    .collect::<Result<Vec<usize>>>()?,
                None => vec![2, 4, 8, 16, 32, 64],
            };
            (McConfig::new(100, 300, 3), ks)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown table `{other}` (1|2|3|fig1)"
            )))
        }
    };
    if pairs.contains_key("alt") {
        return Err(Error::Config(
            "the table fixes the alternative; use `simulate --alt` instead".into(),
        ));
    }
    let cfg = apply_mc_pairs(base, &pairs)?;
    let reports = with_threads(&pairs, || {
        if ks.is_empty() {
            Ok(vec![run_monte_carlo(&cfg)?])
        } else {
            ks.iter()
                .map(|&k| {
                    run_monte_carlo(&McConfig {
                        alternative: Alternative::Density { k },
                        ..cfg.clone()
                    })
                })
                .collect()
        }
    })?;
    format_mc_reports(&reports, format)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(a) => run_test(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Table(a) => run_table(a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("panelcsd: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
