//! Evaluation reports: a three-key summary and an interval CSV.
//!
//! Formatting goes through `f64::to_string` (shortest round-trip
//! form), so a report is a pure function of the numbers in it and
//! reruns on unchanged inputs produce byte-identical files.

use signpose_core::eval::{
    self, IntervalMode, IntervalReport, TaeBundle,
};
use signpose_core::pose::PoseSequence;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub fgd: f64,
    pub duracc: f64,
    /// Fixed-length feature windows entering the FGD, both sides.
    pub n_windows: usize,
}

/// Full evaluation of paired corpora (pairing is by position): global
/// FGD over all feature windows, duration accuracy over sequence
/// lengths, and the per-length-bin FGD breakdown.
pub fn evaluate(
    real: &[PoseSequence],
    generated: &[PoseSequence],
    tae: &TaeBundle,
    fps: usize,
    bins: &[(usize, usize)],
    mode: IntervalMode,
) -> Result<(EvalSummary, IntervalReport)> {
    let fixed_len = tae.config.fixed_len;
    let mut real_windows = Vec::new();
    for seq in real {
        real_windows.extend(eval::fix_length(seq, fixed_len)?);
    }
    let mut gen_windows = Vec::new();
    for seq in generated {
        gen_windows.extend(eval::fix_length(seq, fixed_len)?);
    }

    let real_stats = eval::gaussian_moments(&eval::extract_features(&real_windows, tae)?)?;
    let gen_stats = eval::gaussian_moments(&eval::extract_features(&gen_windows, tae)?)?;
    let fgd = eval::fgd(&real_stats, &gen_stats)?;

    let pred: Vec<usize> = generated.iter().map(PoseSequence::len).collect();
    let gt: Vec<usize> = real.iter().map(PoseSequence::len).collect();
    let duracc = eval::duration_accuracy(&pred, &gt, fps)?;

    let intervals = eval::interval_fgd(real, generated, bins, mode, tae, fps)?;

    let summary = EvalSummary {
        fgd,
        duracc,
        n_windows: real_windows.len() + gen_windows.len(),
    };
    Ok((summary, intervals))
}

pub fn summary_text(summary: &EvalSummary) -> String {
    format!(
        "fgd = {}\nduracc = {}\nn_windows = {}\n",
        summary.fgd, summary.duracc, summary.n_windows
    )
}

/// One row per bin; the fgd cell is empty when a bin had too few
/// windows to fit moments.
pub fn intervals_csv(report: &IntervalReport) -> String {
    let mut s = String::from("bin_start,bin_end,fgd,count\n");
    for bin in &report.bins {
        let fgd = bin.fgd.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{fgd},{}\n", bin.lo, bin.hi, bin.count));
    }
    s
}
