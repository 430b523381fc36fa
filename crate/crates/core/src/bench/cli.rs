use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::{read_manifest, render_csv, render_table, run_suite, solve_case, BenchRecord};
use crate::ipm::{IterationLog, SolveStatus, SolverOptions};
use crate::kkt::KktBackend;

#[derive(Parser, Debug)]
#[command(name = "condopf", about = "Condensed-space interior-point ACOPF benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one MATPOWER case.
    Solve {
        case: PathBuf,
        #[arg(long, default_value_t = 1e-4, value_parser = positive_f64)]
        tol: f64,
        #[arg(long, default_value_t = 3000)]
        max_iter: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// 0 silent, 1 iteration table, 2 solver info, 3 debug.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=3))]
        log_level: u8,
        #[arg(long)]
        diagnose_conditioning: bool,
        #[arg(long, value_enum, default_value_t = Backend::Condensed)]
        backend: Backend,
    },
    /// Solve every case listed in a manifest file.
    Suite {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value_t = 1e-4, value_parser = positive_f64)]
        tol: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Backend {
    Condensed,
    Augmented,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("tol must be > 0".into())
    }
}

fn init_logging(level: u8) {
    let filter = match level {
        0 | 1 => log::LevelFilter::Warn,
        2 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(filter).target(env_logger::Target::Stderr).try_init();
}

fn iteration_table(trace: &[IterationLog]) -> String {
    let mut s = format!(
        "{:>4} {:>15} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "iter", "objective", "inf_pr", "inf_du", "mu", "alpha_pr", "alpha_du", "delta_w"
    );
    for t in trace {
        s += &format!(
            "{:>4} {:>15.8e} {:>9.2e} {:>9.2e} {:>9.2e} {:>9.2e} {:>9.2e} {:>9.2e}\n",
            t.iter, t.objective, t.inf_pr, t.inf_du, t.mu, t.alpha_primal, t.alpha_dual, t.delta_w
        );
    }
    s
}

/// Runs the command line `args` (program name first). Exit code 0 on an
/// optimal solve, 2 on any other termination, 1 on usage or input errors.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match cli.command {
        Command::Solve { case, tol, max_iter, format, log_level, diagnose_conditioning, backend } => {
            init_logging(log_level);
            let mut options = SolverOptions::with_tol(tol);
            options.max_iter = max_iter;
            options.diagnose_conditioning = diagnose_conditioning;
            options.kkt_backend = match backend {
                Backend::Condensed => KktBackend::Condensed,
                Backend::Augmented => KktBackend::Augmented,
            };
            let (record, report) = match solve_case(&case, &options) {
                Ok(r) => r,
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", case.display());
                    return 1;
                }
            };
            if log_level >= 1 {
                let table = iteration_table(&report.trace);
                // keep stdout machine-readable for json and csv
                let _ = if format == Format::Text {
                    out.write_all(table.as_bytes())
                } else {
                    err.write_all(table.as_bytes())
                };
            }
            let _ = match format {
                Format::Text => write!(out, "{}", render_table(std::slice::from_ref(&record))),
                Format::Json => writeln!(out, "{}", record.to_json()),
                Format::Csv => write!(out, "{}", render_csv(std::slice::from_ref(&record))),
            };
            if report.status == SolveStatus::Optimal {
                0
            } else {
                2
            }
        }
        Command::Suite { manifest, out: out_dir, parallel, tol } => {
            init_logging(0);
            let cases = match read_manifest(&manifest) {
                Ok(c) => c,
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", manifest.display());
                    return 1;
                }
            };
            let records = run_suite(&cases, &SolverOptions::with_tol(tol), parallel.max(1));
            let _ = write!(out, "{}", render_table(&records));
            if let Some(dir) = out_dir {
                if let Err(e) = write_suite_files(&dir, &records) {
                    let _ = writeln!(err, "error: {}: {e}", dir.display());
                    return 1;
                }
            }
            0
        }
    }
}

fn write_suite_files(dir: &std::path::Path, records: &[BenchRecord]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("suite.csv"), render_csv(records))?;
    std::fs::write(dir.join("suite.txt"), render_table(records))?;
    std::fs::write(dir.join("suite.json"), serde_json::to_string_pretty(records).expect("records serialize"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("condopf").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn zero_tol_is_usage_error() {
        let (code, _, err) = run_args(&["solve", "x.m", "--tol", "0"]);
        assert_eq!(code, 1);
        assert!(err.contains("tol must be > 0"), "{err}");
    }

    #[test]
    fn missing_file_names_path() {
        let (code, _, err) = run_args(&["solve", "/nonexistent/case.m"]);
        assert_eq!(code, 1);
        assert!(err.contains("/nonexistent/case.m"), "{err}");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("suite"));
    }
}
