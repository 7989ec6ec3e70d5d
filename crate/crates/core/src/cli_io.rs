//! CSV panel ingestion, key=value configuration and report formatting.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::battery::run_battery;
use crate::error::{Error, Result};
use crate::outcome::{Method, TestOutcome};
use crate::panel_model::{build_residuals, PanelDataset};
use crate::simulation::{Alternative, McConfig, McReport};

/// One line of a test report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub aux: BTreeMap<String, f64>,
}

impl From<TestOutcome> for ReportRecord {
    fn from(o: TestOutcome) -> Self {
        ReportRecord {
            method: o.method.name().to_owned(),
            statistic: o.statistic,
            p_value: o.p_value,
            reject: o.reject,
            alpha: o.alpha,
            aux: o.aux,
        }
    }
}

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        msg: msg.into(),
    }
}

/// Orders time labels numerically when they all parse as numbers, otherwise
/// lexically.
fn sort_labels(labels: &mut [String]) {
    let numeric: Option<Vec<f64>> = labels.iter().map(|s| s.parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => labels.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        }),
        None => labels.sort(),
    }
}

/// Parses long-format CSV text with header `unit,time,y,x1,...`. Units keep
/// the order in which they first appear. With `intercept` a column of ones
/// is prepended to every regressor matrix.
pub fn parse_panel_csv(text: &str, intercept: bool) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[0] != "unit" || cols[1] != "time" || cols[2] != "y" {
        return Err(parse_err(1, "header must start with `unit,time,y`"));
    }
    let n_x = cols.len() - 3;
    let p = n_x + usize::from(intercept);
    if p == 0 {
        return Err(parse_err(
            1,
            "no regressors: add x columns or drop --no-intercept",
        ));
    }

    let mut units: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut obs: HashMap<(usize, String), Vec<f64>> = HashMap::new();
    let mut times: Vec<String> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", cols.len(), rec.len()),
            ));
        }
        let unit = rec[0].to_owned();
        let time = rec[1].to_owned();
        if unit.is_empty() || time.is_empty() {
            return Err(parse_err(line, "empty unit or time label"));
        }
        let values = rec
            .iter()
            .skip(2)
            .zip(&cols[2..])
            .map(|(v, name)| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(parse_err(
                    line,
                    format!("column `{name}`: `{v}` is not a finite number"),
                )),
            })
            .collect::<Result<Vec<f64>>>()?;
        let next = units.len();
        let u = *unit_index.entry(unit.clone()).or_insert(next);
        if u == next {
            units.push(unit.clone());
        }
        if obs.insert((u, time.clone()), values).is_some() {
            return Err(Error::DuplicateObservation { unit, time });
        }
        if !times.contains(&time) {
            times.push(time);
        }
    }
    if units.is_empty() {
        return Err(parse_err(2, "no observations"));
    }
    sort_labels(&mut times);

    let (n, t) = (units.len(), times.len());
    let mut y = DMatrix::zeros(n, t);
    let mut x = vec![DMatrix::zeros(t, p); n];
    for (i, unit) in units.iter().enumerate() {
        for (s, time) in times.iter().enumerate() {
            let v = obs
                .get(&(i, time.clone()))
                .ok_or_else(|| Error::UnbalancedPanel {
                    unit: unit.clone(),
                    time: time.clone(),
                })?;
            y[(i, s)] = v[0];
            if intercept {
                x[i][(s, 0)] = 1.0;
            }
            for l in 0..n_x {
                x[i][(s, l + usize::from(intercept))] = v[l + 1];
            }
        }
    }
    PanelDataset::new(y, x)
}

pub fn load_panel_csv(path: &Path, intercept: bool) -> Result<PanelDataset> {
    parse_panel_csv(&std::fs::read_to_string(path)?, intercept)
}

/// Writes `data` in the long format read by [`parse_panel_csv`], with units
/// and periods labelled from 1. With `skip_intercept` the first regressor
/// column is omitted.
pub fn write_panel_csv<W: Write>(data: &PanelDataset, skip_intercept: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let first = usize::from(skip_intercept);
    let p = data.n_regressors();
    let mut header = vec!["unit".to_owned(), "time".to_owned(), "y".to_owned()];
    header.extend((first..p).map(|l| format!("x{}", l + 1 - first)));
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n_units() {
        let xi = &data.x()[i];
        for s in 0..data.n_periods() {
            let mut row = vec![
                (i + 1).to_string(),
                (s + 1).to_string(),
                data.y()[(i, s)].to_string(),
            ];
            row.extend((first..p).map(|l| xi[(s, l)].to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs `S_N`, `L_N` and `T_C`, plus the four comparators when asked.
pub fn run_tests(
    data: &PanelDataset,
    alpha: f64,
    nu: f64,
    comparators: bool,
) -> Result<Vec<ReportRecord>> {
    let mut methods = vec![Method::SN, Method::LN, Method::TC];
    if comparators {
        methods.extend([Method::LmBp, Method::LmPuy, Method::LmFjlx, Method::CdP]);
    }
    let resids = build_residuals(data)?;
    run_battery(&resids, alpha, nu, &methods)
        .into_iter()
        .map(|(_, out)| out.map(ReportRecord::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown format `{s}` (csv|json)"))),
        }
    }
}

// Rust's `Display` for f64 prints the shortest string that parses back to
// the same value.
pub fn format_records(records: &[ReportRecord], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut s = String::from("method,statistic,p_value,reject,alpha\n");
            for r in records {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.method, r.statistic, r.p_value, r.reject, r.alpha
                ));
            }
            Ok(s)
        }
        OutputFormat::Json => Ok(serde_json::to_string_pretty(records).map_err(to_config)? + "\n"),
    }
}

/// Reads back the CSV produced by [`format_records`] (without aux values).
pub fn parse_records_csv(text: &str) -> Result<Vec<ReportRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec =
            rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|e| parse_err(line, e.to_string()))
        };
        out.push(ReportRecord {
            method: rec[0].to_owned(),
            statistic: num(1)?,
            p_value: num(2)?,
            reject: rec[3]
                .parse()
                .map_err(|_| parse_err(line, "reject must be true or false"))?,
            alpha: num(4)?,
            aux: BTreeMap::new(),
        });
    }
    Ok(out)
}

fn to_config(e: serde_json::Error) -> Error {
    Error::Config(e.to_string())
}

pub const MC_CSV_HEADER: &str =
    "method,rejection_rate,mc_std_error,rejections,completed,failures,N,T,p,proc,dist,alt,psi_scale,reps,alpha,nu,seed";

/// Rows of [`MC_CSV_HEADER`], one per method.
pub fn mc_csv_rows(report: &McReport) -> String {
    let c = &report.config;
    let proc_name = serde_json::to_value(c.error_process).ok();
    let dist_name = serde_json::to_value(c.innovation).ok();
    let label = |v: Option<serde_json::Value>| {
        v.and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    };
    let scale_name = label(serde_json::to_value(c.psi_scale).ok());
    let (proc_name, dist_name) = (label(proc_name), label(dist_name));
    let mut s = String::new();
    for m in &report.methods {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            m.method,
            m.rejection_rate,
            m.mc_std_error,
            m.rejections,
            m.completed,
            m.failures,
            c.n_units,
            c.n_periods,
            c.n_regressors,
            proc_name,
            dist_name,
            c.alternative,
            scale_name,
            c.reps,
            c.alpha,
            c.nu,
            c.seed
        ));
    }
    s
}

pub fn format_mc_reports(reports: &[McReport], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut s = format!("{MC_CSV_HEADER}\n");
            for r in reports {
                s.push_str(&mc_csv_rows(r));
            }
            Ok(s)
        }
        OutputFormat::Json if reports.len() == 1 => {
            Ok(serde_json::to_string_pretty(&reports[0]).map_err(to_config)? + "\n")
        }
        OutputFormat::Json => Ok(serde_json::to_string_pretty(reports).map_err(to_config)? + "\n"),
    }
}

/// Flat `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", k + 1)))?;
        out.insert(key.trim().to_owned(), value.trim().to_owned());
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{v}`"
        ))),
    }
}

/// Overlays `pairs` on `base`. Keys follow the command-line flag names
/// (`N`, `T`, `p`, `null`, `dist`, `alt`, `reps`, `seed`, `alpha`, `nu`,
/// `comparators`, `fixed_design`, `psi_scale`); `proc` is accepted for `null`.
/// Unrelated keys such as `threads` or `format` are ignored.
pub fn apply_mc_pairs(mut cfg: McConfig, pairs: &BTreeMap<String, String>) -> Result<McConfig> {
    for (key, v) in pairs {
        match key.as_str() {
            "N" | "n_units" => cfg.n_units = parse_value(key, v)?,
            "T" | "n_periods" => cfg.n_periods = parse_value(key, v)?,
            "p" | "n_regressors" => cfg.n_regressors = parse_value(key, v)?,
            "null" | "proc" => cfg.error_process = v.parse()?,
            "dist" => cfg.innovation = v.parse()?,
            "alt" => cfg.alternative = v.parse::<Alternative>()?,
            "psi_scale" => cfg.psi_scale = v.parse()?,
            "reps" => cfg.reps = parse_value(key, v)?,
            "seed" => cfg.seed = parse_value(key, v)?,
            "alpha" => cfg.alpha = parse_value(key, v)?,
            "nu" => cfg.nu = parse_value(key, v)?,
            "comparators" => cfg.extra_comparators = parse_bool(key, v)?,
            "fixed_design" => cfg.fixed_design = parse_bool(key, v)?,
            "threads" | "format" | "input" | "no_intercept" | "k" => {}
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
    }
    Ok(cfg)
}

/// Parses a table cell spec such as `N=100,T=200,p=3,dist=normal,proc=ar1`.
pub fn parse_cell(spec: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("cell entry `{part}` is not key=value")))?;
        out.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combined_test::fisher_combine;
    use crate::simulation::{simulate_panel, Alternative};

    const SMALL: &str = "unit,time,y,x1\n\
        a,1,1.5,0.1\n a,2,2.25,0.2\n a,3,0.5,-0.3\n\
        b,1,-1,1\n b,2,3.125,2\n b,3,0.75,0.5\n";

    #[test]
    fn loads_small_panel() {
        let d = parse_panel_csv(SMALL, true).unwrap();
        assert_eq!((d.n_units(), d.n_periods(), d.n_regressors()), (2, 3, 2));
        assert_eq!(d.y()[(1, 1)], 3.125);
        assert_eq!(d.x()[0][(2, 0)], 1.0);
        assert_eq!(d.x()[0][(2, 1)], -0.3);
        let d = parse_panel_csv(SMALL, false).unwrap();
        assert_eq!(d.n_regressors(), 1);
    }

    #[test]
    fn time_order_is_numeric() {
        let text = "unit,time,y,x1\n1,10,3,1\n1,9,2,2\n1,2,1,4\n2,2,1,0\n2,9,5,1\n2,10,7,3\n";
        let d = parse_panel_csv(text, true).unwrap();
        assert_eq!(
            d.y().row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn input_errors() {
        let missing = SMALL.replace(" b,3,0.75,0.5\n", "");
        match parse_panel_csv(&missing, true) {
            Err(Error::UnbalancedPanel { unit, time }) => {
                assert_eq!((unit.as_str(), time.as_str()), ("b", "3"))
            }
            other => panic!("{other:?}"),
        }
        let dup = format!("{SMALL}a,2,9,9\n");
        assert!(matches!(
            parse_panel_csv(&dup, true),
            Err(Error::DuplicateObservation { .. })
        ));
        let bad = SMALL.replace("2.25", "oops");
        match parse_panel_csv(&bad, true) {
            Err(e @ Error::Parse { line: 3, .. }) => assert!(e.is_input_error()),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_panel_csv("u,t,y\n", true),
            Err(Error::Parse { line: 1, .. })
        ));
        let ragged = SMALL.replace("0.1\n", "0.1,7\n");
        assert!(matches!(
            parse_panel_csv(&ragged, true),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn panel_round_trip() {
        let cfg = McConfig {
            n_units: 5,
            ..McConfig::new(5, 20, 3)
        };
        let d = simulate_panel(&cfg, 0).unwrap().data;
        let mut buf = Vec::new();
        write_panel_csv(&d, true, &mut buf).unwrap();
        let back = parse_panel_csv(std::str::from_utf8(&buf).unwrap(), true).unwrap();
        assert_eq!(back.y(), d.y());
        assert_eq!(back.x(), d.x());
    }

    #[test]
    fn records_round_trip_and_combine() {
        let cfg = McConfig::new(30, 60, 3);
        let d = simulate_panel(&cfg, 4).unwrap().data;
        let recs = run_tests(&d, 0.05, 1.42, true).unwrap();
        let names: Vec<&str> = recs.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(
            names,
            ["S_N", "L_N", "T_C", "LM_BP", "LM_PUY", "LM_FJLX", "CD_P"]
        );
        let tc = fisher_combine(recs[1].p_value, recs[0].p_value).unwrap();
        assert_eq!(recs[2].statistic, tc);

        let csv = format_records(&recs, OutputFormat::Csv).unwrap();
        let back = parse_records_csv(&csv).unwrap();
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(
                (a.statistic, a.p_value, a.reject, a.alpha),
                (b.statistic, b.p_value, b.reject, b.alpha)
            );
        }
        let json = format_records(&recs, OutputFormat::Json).unwrap();
        let back: Vec<ReportRecord> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn iid_panel_is_not_rejected_wildly() {
        let cfg = McConfig {
            error_process: crate::simulation::ErrorProcess::Iid,
            ..McConfig::new(50, 100, 3)
        };
        let d = simulate_panel(&cfg, 11).unwrap().data;
        for r in run_tests(&d, 0.05, 1.42, false).unwrap() {
            assert!(r.p_value > 0.001, "{r:?}");
        }
    }

    #[test]
    fn sma_favours_sum_test() {
        let cfg = McConfig {
            alternative: Alternative::Sma { delta: 0.2 },
            seed: 2024,
            ..McConfig::new(50, 100, 3)
        };
        let wins = (0..100)
            .filter(|&r| {
                let d = simulate_panel(&cfg, r).unwrap().data;
                let recs = run_tests(&d, 0.05, 1.42, false).unwrap();
                recs[0].p_value < recs[1].p_value
            })
            .count();
        assert!(wins >= 70, "S_N p-value smaller in {wins} of 100 runs");
    }

    #[test]
    fn config_overlay() {
        let pairs =
            parse_config("# study\nN = 40\nT=80 # periods\nalt=density:4\ncomparators=yes\n")
                .unwrap();
        let cfg = apply_mc_pairs(McConfig::new(10, 10, 3), &pairs).unwrap();
        assert_eq!((cfg.n_units, cfg.n_periods), (40, 80));
        assert_eq!(cfg.alternative, Alternative::Density { k: 4 });
        assert!(cfg.extra_comparators);
        assert!(parse_config("novalue\n").is_err());
        let bad = parse_cell("N=100,bogus=1").unwrap();
        assert!(apply_mc_pairs(cfg, &bad).is_err());
    }
}
