//! Benchmark records, suite runner and conditioning diagnosis.

mod cli;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acopf::{build_acopf, load_case, CaseError};
use crate::ipm::{solve, InvalidOption, SolveReport, SolverOptions};

pub use cli::run;

/// One solved (or failed) case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub case: String,
    pub n_var: usize,
    pub n_con: usize,
    pub iterations: usize,
    /// Solver status, or `Error` when the case never reached the solver.
    pub status: String,
    #[serde(deserialize_with = "nan_from_null")]
    pub objective: f64,
    /// Unscaled inf-norm violation.
    #[serde(deserialize_with = "nan_from_null")]
    pub constraint_violation: f64,
    /// Scaled residual used for termination.
    #[serde(deserialize_with = "nan_from_null")]
    pub scaled_residual: f64,
    pub time_total: f64,
    pub time_ad: f64,
    pub time_linear: f64,
    pub time_internal: f64,
    pub condensed_condition: Option<f64>,
    pub augmented_condition: Option<f64>,
    pub error: Option<String>,
}

/// JSON writes NaN as `null`; read it back as NaN.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Column order of [`BenchRecord::csv_row`].
pub const CSV_HEADER: &str = "case,n_var,n_con,iterations,status,objective,constraint_violation,scaled_residual,\
time_total,time_ad,time_linear,time_internal,condensed_condition,augmented_condition,error";

impl BenchRecord {
    pub fn from_report(case: &str, n_var: usize, n_con: usize, report: &SolveReport) -> Self {
        let cond = report.conditioning.unwrap_or_default();
        BenchRecord {
            case: case.to_string(),
            n_var,
            n_con,
            iterations: report.iterations,
            status: report.status.to_string(),
            objective: report.objective,
            constraint_violation: report.constraint_violation,
            scaled_residual: report.scaled_residual,
            time_total: report.timings.total,
            time_ad: report.timings.ad,
            time_linear: report.timings.linear,
            time_internal: report.timings.internal,
            condensed_condition: cond.condensed,
            augmented_condition: cond.augmented,
            error: report.message.clone(),
        }
    }

    pub fn failure(case: &str, error: impl ToString) -> Self {
        BenchRecord {
            case: case.to_string(),
            n_var: 0,
            n_con: 0,
            iterations: 0,
            status: "Error".to_string(),
            objective: f64::NAN,
            constraint_violation: f64::NAN,
            scaled_residual: f64::NAN,
            time_total: 0.0,
            time_ad: 0.0,
            time_linear: 0.0,
            time_internal: 0.0,
            condensed_condition: None,
            augmented_condition: None,
            error: Some(error.to_string()),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == "Optimal"
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        [
            csv_field(&self.case),
            self.n_var.to_string(),
            self.n_con.to_string(),
            self.iterations.to_string(),
            csv_field(&self.status),
            format!("{:.10e}", self.objective),
            format!("{:e}", self.constraint_violation),
            format!("{:e}", self.scaled_residual),
            format!("{:.6}", self.time_total),
            format!("{:.6}", self.time_ad),
            format!("{:.6}", self.time_linear),
            format!("{:.6}", self.time_internal),
            opt(self.condensed_condition),
            opt(self.augmented_condition),
            csv_field(self.error.as_deref().unwrap_or("")),
        ]
        .join(",")
    }

    /// Same row without the timing columns, for run-to-run comparison.
    pub fn numeric_columns(&self) -> (usize, usize, usize, &str, u64, u64, u64) {
        (
            self.n_var,
            self.n_con,
            self.iterations,
            &self.status,
            self.objective.to_bits(),
            self.constraint_violation.to_bits(),
            self.scaled_residual.to_bits(),
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Aligned table: case, timings, iterations, objective, violation, status.
pub fn render_table(records: &[BenchRecord]) -> String {
    let case_w = records.iter().map(|r| r.case.len()).max().unwrap_or(0).max(4);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<case_w$} {:>8} {:>8} {:>8} {:>8} {:>5} {:>16} {:>10}  status",
        "case", "ad(s)", "lin(s)", "int(s)", "tot(s)", "iter", "objective", "viol"
    );
    for r in records {
        let _ = write!(
            out,
            "{:<case_w$} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>5} {:>16.6e} {:>10.2e}  {}",
            r.case,
            r.time_ad,
            r.time_linear,
            r.time_internal,
            r.time_total,
            r.iterations,
            r.objective,
            r.constraint_violation,
            r.status
        );
        if let Some(e) = &r.error {
            let _ = write!(out, " ({e})");
        }
        out.push('\n');
    }
    out
}

pub fn case_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("invalid option {}: {}", .0.name, .0.reason)]
    Option(InvalidOption),
}

/// Loads, builds and solves one case file.
pub fn solve_case(path: &Path, options: &SolverOptions) -> Result<(BenchRecord, SolveReport), BenchError> {
    let network = load_case(path)?;
    let acopf = build_acopf(&network)?;
    let report = solve(&acopf.model, options).map_err(BenchError::Option)?;
    let record = BenchRecord::from_report(&case_name(path), acopf.model.n_var, acopf.model.n_con, &report);
    Ok((record, report))
}

/// Case paths listed in a manifest: one per line, `#` comments, paths
/// relative to the manifest's directory.
pub fn read_manifest(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| dir.join(l))
        .collect())
}

/// Solves every case; failures become error rows. `parallel > 1` runs
/// cases concurrently, output order follows the input.
pub fn run_suite(cases: &[PathBuf], options: &SolverOptions, parallel: usize) -> Vec<BenchRecord> {
    let one = |p: &PathBuf| match solve_case(p, options) {
        Ok((record, _)) => record,
        Err(e) => BenchRecord::failure(&case_name(p), e),
    };
    if parallel <= 1 {
        return cases.iter().map(one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallel).build() {
        Ok(pool) => pool.install(|| cases.par_iter().map(one).collect()),
        Err(_) => cases.iter().map(one).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condensed: f64,
    pub augmented: f64,
    pub iterations: usize,
}

impl ConditionReport {
    pub fn ratio(&self) -> f64 {
        self.condensed / self.augmented
    }
}

#[derive(Debug, Error)]
pub enum DiagnoseError {
    #[error("augmented system of dimension {dimension} exceeds the limit {limit}")]
    SkippedTooLarge { dimension: usize, limit: usize },
    #[error("condition estimate unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

/// κ₁ estimates of the condensed and augmented matrices at the final iterate
/// of a solve at `tol`.
pub fn diagnose_conditioning(path: &Path, tol: f64, max_dimension: usize) -> Result<ConditionReport, DiagnoseError> {
    let network = load_case(path).map_err(BenchError::from)?;
    let acopf = build_acopf(&network).map_err(BenchError::from)?;
    let (n, m) = (acopf.model.n_var, acopf.model.n_con);
    if n + 2 * m > max_dimension {
        return Err(DiagnoseError::SkippedTooLarge { dimension: n + 2 * m, limit: max_dimension });
    }
    let mut options = SolverOptions::with_tol(tol);
    options.diagnose_conditioning = true;
    options.max_augmented_dimension = max_dimension;
    let report = solve(&acopf.model, &options).map_err(BenchError::Option)?;
    let cond = report.conditioning.unwrap_or_default();
    match (cond.condensed, cond.augmented) {
        (Some(condensed), Some(augmented)) => {
            Ok(ConditionReport { condensed, augmented, iterations: report.iterations })
        }
        _ => Err(DiagnoseError::Unavailable(format!("solver finished with {}", report.status))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BenchRecord {
        BenchRecord {
            case: "case, \"x\"".into(),
            n_var: 10,
            n_con: 7,
            iterations: 12,
            status: "Optimal".into(),
            objective: 2178.0801234,
            constraint_violation: 9.6e-5,
            scaled_residual: 3.1e-5,
            time_total: 0.5,
            time_ad: 0.1,
            time_linear: 0.3,
            time_internal: 0.1,
            condensed_condition: Some(1e14),
            augmented_condition: None,
            error: None,
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        assert_eq!(BenchRecord::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn failure_round_trips_through_json() {
        let r = BenchRecord::failure("bad", "line 5: unexpected token");
        let back = BenchRecord::from_json(&r.to_json()).unwrap();
        assert!(back.objective.is_nan() && back.scaled_residual.is_nan());
        assert_eq!(back.error, r.error);
    }

    #[test]
    fn csv_quoting_and_width() {
        let row = sample().csv_row();
        assert!(row.starts_with("\"case, \"\"x\"\"\",10,7,12,Optimal,"));
        let header_cols = CSV_HEADER.split(',').count();
        let unquoted = row.replacen("\"case, \"\"x\"\"\"", "c", 1);
        assert_eq!(unquoted.split(',').count(), header_cols);
    }

    #[test]
    fn empty_table_has_header_only() {
        assert_eq!(render_table(&[]).lines().count(), 1);
        assert_eq!(render_csv(&[]).lines().count(), 1);
    }
}
