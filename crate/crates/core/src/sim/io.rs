//! CSV ingestion and CSV/JSON report output.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so emitting and
//! re-parsing a report reproduces every value exactly and identical inputs give
//! identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::monte_carlo::{ConfigEcho, EstimatorSummary, SimulationReport};
use crate::crossfit::UniformBand;
use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::estimators::{CurveEstimate, Estimator};
use crate::kernels::Bandwidth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidConfig(format!("unknown output format `{other}`"))),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads the named columns of a headed CSV file.
///
/// With `standardize`, every selected column is centered and divided by its population
/// (divide-by-`n`) standard deviation.
pub fn load_csv(
    path: &Path,
    outcome: &str,
    treatment: &str,
    covariates: &[String],
    standardize: bool,
) -> Result<ObservationSet> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv(&text, outcome, treatment, covariates, standardize)
}

/// [`load_csv`] on in-memory text.
pub fn parse_csv(
    text: &str,
    outcome: &str,
    treatment: &str,
    covariates: &[String],
    standardize: bool,
) -> Result<ObservationSet> {
    if covariates.is_empty() {
        return Err(Error::InvalidConfig("at least one covariate column is required".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let mut names: Vec<&str> = vec![outcome, treatment];
    names.extend(covariates.iter().map(String::as_str));
    let cols = names.iter().map(|n| index(n)).collect::<Result<Vec<_>>>()?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (k, &c) in cols.iter().enumerate() {
            let cell = record.get(c).unwrap_or("");
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                column: names[k].to_string(),
                row: row + 1,
                value: cell.to_string(),
            })?;
            columns[k].push(value);
        }
    }
    if standardize {
        for (k, col) in columns.iter_mut().enumerate() {
            zscore(col, names[k])?;
        }
    }
    let d = covariates.len();
    let n = columns[0].len();
    let mut s = Vec::with_capacity(n * d);
    for i in 0..n {
        for col in &columns[2..] {
            s.push(col[i]);
        }
    }
    let t = columns.swap_remove(1);
    let y = columns.swap_remove(0);
    ObservationSet::new(y, t, s, d)
}

fn zscore(col: &mut [f64], name: &str) -> Result<()> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance(name.to_string()));
    }
    for v in col.iter_mut() {
        *v = (*v - mean) / sd;
    }
    Ok(())
}

/// One grid point of an emitted curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    pub estimate: f64,
    pub variance: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n_effective: usize,
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_upper: Option<f64>,
}

/// Serialized form of a single estimated curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOutput {
    pub method: Estimator,
    pub bandwidth: Bandwidth,
    pub n: usize,
    pub band_quantile: Option<f64>,
    pub points: Vec<CurveRow>,
    pub config: ConfigEcho,
}

impl CurveOutput {
    pub fn new(curve: &CurveEstimate, band: Option<&UniformBand>, config: ConfigEcho) -> Self {
        let points = (0..curve.grid.len())
            .map(|k| {
                let e = &curve.estimates[k];
                CurveRow {
                    t: curve.grid.points()[k],
                    estimate: e.value,
                    variance: e.variance,
                    ci_lower: curve.ci_lower[k],
                    ci_upper: curve.ci_upper[k],
                    n_effective: e.n_effective,
                    flagged: e.flagged,
                    band_lower: band.map(|b| b.lower[k]),
                    band_upper: band.map(|b| b.upper[k]),
                }
            })
            .collect();
        Self {
            method: curve.method,
            bandwidth: curve.h,
            n: curve.n,
            band_quantile: band.map(|b| b.quantile),
            points,
            config,
        }
    }
}

/// Any document the CLI writes as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Output {
    Curve(CurveOutput),
    Simulation(SimulationReport),
}

fn num(out: &mut String, v: f64) {
    write!(out, "{v}").expect("writing to a String cannot fail");
}

fn opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        num(out, v);
    }
}

pub fn curve_csv(curve: &CurveOutput) -> String {
    let banded = curve.band_quantile.is_some();
    let mut out = String::from("t,estimate,variance,ci_lo,ci_hi,n_effective,flagged");
    if banded {
        out.push_str(",band_lo,band_hi");
    }
    out.push('\n');
    for p in &curve.points {
        for v in [p.t, p.estimate, p.variance, p.ci_lower, p.ci_upper] {
            num(&mut out, v);
            out.push(',');
        }
        write!(out, "{},{}", p.n_effective, p.flagged).expect("infallible");
        if banded {
            out.push(',');
            opt(&mut out, p.band_lower);
            out.push(',');
            opt(&mut out, p.band_upper);
        }
        out.push('\n');
    }
    out
}

pub const REPORT_HEADER: &str = "estimator,t,truth,estimate,variance,ci_lo,ci_hi,bias,rmse,coverage";

pub fn report_csv(report: &SimulationReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for s in &report.summaries {
        for (k, &t) in report.grid.points().iter().enumerate() {
            out.push_str(s.estimator.name());
            for v in [
                t,
                s.truth[k],
                s.mean_estimate[k],
                s.mean_variance[k],
                s.mean_ci_lower[k],
                s.mean_ci_upper[k],
                s.bias[k],
                s.rmse[k],
            ] {
                out.push(',');
                num(&mut out, v);
            }
            out.push(',');
            opt(&mut out, s.coverage.as_ref().map(|c| c[k]));
            out.push('\n');
        }
    }
    out
}

pub fn render(output: &Output, format: Format) -> Result<String> {
    Ok(match (output, format) {
        (Output::Curve(c), Format::Csv) => curve_csv(c),
        (Output::Simulation(r), Format::Csv) => report_csv(r),
        (doc, Format::Json) => {
            let mut s = serde_json::to_string_pretty(doc)?;
            s.push('\n');
            s
        }
    })
}

/// Writes `output` to `path`.
pub fn emit_report(output: &Output, format: Format, path: &Path) -> Result<()> {
    let text = render(output, format)?;
    fs::write(path, text).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_output(path: &Path) -> Result<Output> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Parsed row of a simulation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub estimator: Estimator,
    pub t: f64,
    /// truth, estimate, variance, ci_lo, ci_hi, bias, rmse.
    pub values: [f64; 7],
    pub coverage: Option<f64>,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != REPORT_HEADER {
        return Err(Error::InvalidConfig("not a simulation report CSV".into()));
    }
    let mut rows = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> Result<f64> {
            rec[c].parse().map_err(|_| Error::NonNumeric {
                column: header[c].clone(),
                row: row + 1,
                value: rec[c].to_string(),
            })
        };
        let mut values = [0.0; 7];
        for (k, v) in values.iter_mut().enumerate() {
            *v = field(k + 2)?;
        }
        rows.push(ReportRow {
            estimator: rec[0].parse()?,
            t: field(1)?,
            values,
            coverage: if rec[9].is_empty() { None } else { Some(field(9)?) },
        });
    }
    Ok(rows)
}

/// Combines reports of the same experiment run with different seeds, weighting by replications.
pub fn pool_reports(reports: &[SimulationReport]) -> Result<SimulationReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidConfig("nothing to aggregate".into()))?;
    for r in &reports[1..] {
        if r.grid != first.grid
            || r.summaries.iter().map(|s| s.estimator).ne(first.summaries.iter().map(|s| s.estimator))
        {
            return Err(Error::InvalidConfig(
                "reports differ in grid or estimators and cannot be pooled".into(),
            ));
        }
    }
    let total: usize = reports.iter().map(|r| r.replications).sum();
    let weights: Vec<f64> = reports
        .iter()
        .map(|r| r.replications as f64 / total as f64)
        .collect();
    let g = first.grid.len();
    let pool = |pick: &dyn Fn(&SimulationReport) -> Vec<f64>| -> Vec<f64> {
        let picked: Vec<Vec<f64>> = reports.iter().map(pick).collect();
        (0..g)
            .map(|k| picked.iter().zip(&weights).map(|(p, w)| w * p[k]).sum())
            .collect()
    };
    let summaries = (0..first.summaries.len())
        .map(|j| {
            let mean_estimate = pool(&|r| r.summaries[j].mean_estimate.clone());
            let truth = first.summaries[j].truth.clone();
            let mse = pool(&|r| r.summaries[j].rmse.iter().map(|v| v * v).collect());
            let coverage = if reports.iter().all(|r| r.summaries[j].coverage.is_some()) {
                Some(pool(&|r| r.summaries[j].coverage.clone().unwrap_or_default()))
            } else {
                None
            };
            EstimatorSummary {
                estimator: first.summaries[j].estimator,
                bias: (0..g).map(|k| mean_estimate[k] - truth[k]).collect(),
                truth,
                mean_variance: pool(&|r| r.summaries[j].mean_variance.clone()),
                mean_ci_lower: pool(&|r| r.summaries[j].mean_ci_lower.clone()),
                mean_ci_upper: pool(&|r| r.summaries[j].mean_ci_upper.clone()),
                rmse: mse.into_iter().map(f64::sqrt).collect(),
                mean_estimate,
                coverage,
            }
        })
        .collect();
    let mut config = first.config.clone();
    config.replications = Some(total);
    Ok(SimulationReport {
        grid: first.grid.clone(),
        replications: total,
        failed: reports.iter().map(|r| r.failed).sum(),
        summaries,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::monte_carlo::{run_monte_carlo, MonteCarloSpec};
    use crate::sim::DgpKind;
    use crate::EvalGrid;

    const SCHEMA: &str = include_str!("../../schema/output.schema.json");

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn small_report(grid_points: usize, seed: u64) -> SimulationReport {
        let mut spec = MonteCarloSpec::preset(DgpKind::Dgp1, 200, 2, 2, seed).unwrap();
        spec.grid = EvalGrid::linspace(-2.0, 2.0, grid_points).unwrap();
        run_monte_carlo(&spec).unwrap()
    }

    #[test]
    fn three_rows_round_trip() {
        let text = "y,t,s1,s2\n1.5,0.25,-3,7\n-2,1e-3,0.5,0\n4,2,1,1\n";
        let data = parse_csv(text, "y", "t", &cols(&["s1", "s2"]), false).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.outcomes(), &[1.5, -2.0, 4.0]);
        assert_eq!(data.treatments(), &[0.25, 1e-3, 2.0]);
        assert_eq!(data.covariates(0), &[-3.0, 7.0]);
        assert_eq!(data.covariates(1), &[0.5, 0.0]);
    }

    #[test]
    fn standardize_uses_population_sd() {
        let text = "y,t,s\n1,1,10\n2,2,20\n3,3,40\n";
        let data = parse_csv(text, "y", "t", &cols(&["s"]), true).unwrap();
        let expect = [-1.224_744_871, 0.0, 1.224_744_871];
        for (a, b) in data.outcomes().iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
        for (a, b) in data.treatments().iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            parse_csv("y,t\n1,2\n3,4\n", "y", "t", &cols(&["s"]), false),
            Err(Error::MissingColumn(c)) if c == "s"
        ));
        assert!(parse_csv("", "y", "t", &cols(&["s"]), false).is_err());
        assert!(matches!(
            parse_csv("y,t,s\n1,2,3\n1,x,3\n", "y", "t", &cols(&["s"]), false),
            Err(Error::NonNumeric { row: 2, .. })
        ));
        assert!(parse_csv("y,t,s\n1,2,3\n1,2,3\n", "y", "t", &cols(&["s"]), false).is_ok());
        assert!(matches!(
            parse_csv("y,t,s\n1,2,3\n4,5,3\n", "y", "t", &cols(&["s"]), true),
            Err(Error::ZeroVariance(c)) if c == "s"
        ));
        let missing = load_csv(Path::new("/nonexistent/data.csv"), "y", "t", &cols(&["s"]), false);
        assert!(missing.unwrap_err().is_validation());
    }

    #[test]
    fn report_csv_has_one_row_per_grid_point() {
        let report = small_report(81, 1);
        let text = report_csv(&report);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines.len(), 1 + 81 * report.summaries.len());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let report = small_report(21, 2);
        let rows = parse_report_csv(&report_csv(&report)).unwrap();
        let mut it = rows.iter();
        for s in &report.summaries {
            for (k, &t) in report.grid.points().iter().enumerate() {
                let row = it.next().unwrap();
                assert_eq!(row.estimator, s.estimator);
                assert_eq!(row.t, t);
                let expect = [
                    s.truth[k],
                    s.mean_estimate[k],
                    s.mean_variance[k],
                    s.mean_ci_lower[k],
                    s.mean_ci_upper[k],
                    s.bias[k],
                    s.rmse[k],
                ];
                for (a, b) in row.values.iter().zip(expect) {
                    assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
                assert_eq!(row.coverage, s.coverage.as_ref().map(|c| c[k]));
            }
        }
    }

    #[test]
    fn json_round_trip_and_schema() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        let validator = jsonschema::validator_for(&schema).unwrap();
        let doc = Output::Simulation(small_report(11, 3));
        let text = render(&doc, Format::Json).unwrap();
        assert_eq!(text, render(&doc, Format::Json).unwrap());
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(validator.is_valid(&value));
        let back: Output = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);

        let mut broken = value.clone();
        broken["summaries"][0]["rmse"][0] = serde_json::json!(-1.0);
        assert!(!validator.is_valid(&broken));
        broken = value;
        broken["kind"] = serde_json::json!("table");
        assert!(!validator.is_valid(&broken));
    }

    #[test]
    fn unwritable_path_is_a_runtime_error() {
        let doc = Output::Simulation(small_report(3, 4));
        let err = emit_report(&doc, Format::Csv, Path::new("/nonexistent/dir/out.csv")).unwrap_err();
        assert!(matches!(err, Error::Write { .. }));
        assert!(!err.is_validation());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let doc = Output::Simulation(small_report(5, 5));
        emit_report(&doc, Format::Json, &path).unwrap();
        assert_eq!(read_output(&path).unwrap(), doc);
        let csv_path = dir.path().join("data.csv");
        fs::write(&csv_path, "y,t,s\n1,0,2\n2,1,3\n").unwrap();
        let data = load_csv(&csv_path, "y", "t", &cols(&["s"]), false).unwrap();
        assert_eq!(data.len(), 2);
    }

    #[test]
    fn pooling() {
        let a = small_report(7, 6);
        let same = pool_reports(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(same.replications, 2 * a.replications);
        for (p, s) in same.summaries.iter().zip(&a.summaries) {
            for k in 0..7 {
                assert!((p.mean_estimate[k] - s.mean_estimate[k]).abs() < 1e-12);
                assert!((p.rmse[k] - s.rmse[k]).abs() < 1e-12);
                assert!(p.rmse[k] >= p.bias[k].abs() - 1e-12);
            }
        }
        let b = small_report(7, 7);
        let pooled = pool_reports(&[a.clone(), b.clone()]).unwrap();
        let k = 3;
        let mid = 0.5 * (a.summaries[2].mean_estimate[k] + b.summaries[2].mean_estimate[k]);
        assert!((pooled.summaries[2].mean_estimate[k] - mid).abs() < 1e-12);
        assert!(pool_reports(&[a, small_report(5, 1)]).is_err());
        assert!(pool_reports(&[]).is_err());
    }
}
