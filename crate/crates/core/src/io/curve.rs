//! Training-curve CSV export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::IoError;
use crate::learn::TrainRun;

pub const CURVE_HEADER: &str = "iteration,train_ll,gamma_accepted,wall_ms";

/// Renders the curve. With `timing == false` the `wall_ms` column is left
/// empty, which makes the output a pure function of the inputs.
pub fn curve_csv(run: &TrainRun, timing: bool) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for (k, ll) in run.ll_curve.iter().enumerate() {
        let _ = write!(out, "{k},{ll},");
        if let Some(g) = run.gammas[k] {
            let _ = write!(out, "{g}");
        }
        out.push(',');
        if timing {
            let _ = write!(out, "{:.3}", run.elapsed_ms[k]);
        }
        out.push('\n');
    }
    out
}

pub fn export_curve(run: &TrainRun, path: impl AsRef<Path>, timing: bool) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, curve_csv(run, timing)).map_err(|e| IoError::Write { path: path.to_path_buf(), source: e })
}

pub const SUMMARY_HEADER: &str = "algorithm,final_ll,initial_ll,iterations,stop_reason,wall_ms";

/// One row per run: final and initial mean log-likelihood, iterations,
/// stop reason and total wall time (blank without `timing`).
pub fn summary_csv(runs: &[TrainRun], timing: bool) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for run in runs {
        let _ = write!(
            out,
            "{},{},{},{},{},",
            run.algorithm,
            run.final_ll(),
            run.ll_curve[0],
            run.iters_used,
            run.stop_reason
        );
        if timing {
            let _ = write!(out, "{:.3}", run.wall_time * 1e3);
        }
        out.push('\n');
    }
    out
}
