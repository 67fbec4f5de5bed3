//! Benchmark harness: runs estimation methods over a generated corpus,
//! pools per-window residuals against ground truth, and reports RMSE/SDE
//! next to published reference values.
//!
//! Metrics pool every window of every session (rather than averaging
//! per-session errors), and SDE uses the population standard deviation;
//! both choices are documented in the report header and make the metrics
//! order-independent and exactly consistent with the identity
//! `rmse^2 = bias^2 + sde^2`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::ingest::{read_ground_truth, read_trace_csv, GroundTruth, SessionTrace};
use crate::labeler::FrameLabel;
use crate::pulse::{combine_still, SubRoiMatrix};
use crate::spectral::{
    band_peaks, estimate_session, estimate_session_argmax, power_spectrum, HrEstimate, HrSeries,
    HrSource,
};
use crate::synth::{read_corpus_manifest, CORPUS_MANIFEST_NAME};

/// The estimation methods the harness can run, keyed by the letters used
/// throughout reports and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodId {
    /// (a) Uniform green mean per window, strongest peak, no labeling.
    GreenBaseline,
    /// (d) Noise-adaptive extraction, per-window strongest peak.
    AdaptiveNoTrack,
    /// (e) Method (d) plus still-anchored peak tracking.
    AdaptiveTracked,
}

impl MethodId {
    pub fn letter(self) -> &'static str {
        match self {
            MethodId::GreenBaseline => "a",
            MethodId::AdaptiveNoTrack => "d",
            MethodId::AdaptiveTracked => "e",
        }
    }

    /// Every method, in report order.
    pub fn all() -> [MethodId; 3] {
        [
            MethodId::GreenBaseline,
            MethodId::AdaptiveNoTrack,
            MethodId::AdaptiveTracked,
        ]
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(MethodId::GreenBaseline),
            "d" => Ok(MethodId::AdaptiveNoTrack),
            "e" => Ok(MethodId::AdaptiveTracked),
            other => Err(Error::ConfigInvalid(format!(
                "unknown method {other:?} (expected a, d or e)"
            ))),
        }
    }
}

/// Parses a comma-separated method list like `a,d,e`.
pub fn parse_methods(s: &str) -> Result<Vec<MethodId>> {
    let methods: Vec<MethodId> = s
        .split(',')
        .map(|item| item.trim().parse())
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(Error::ConfigInvalid("no methods requested".to_string()));
    }
    Ok(methods)
}

/// Baseline method (a): per window, the unweighted mean of all sub-ROI
/// greens (mean-removed) and its strongest in-band peak. No labeling, no
/// tracking — every window is treated as still.
pub fn baseline_green(trace: &SessionTrace, cfg: &PipelineConfig) -> Result<HrSeries> {
    cfg.validate()?;
    if trace.frames.len() < cfg.window_len {
        return Err(Error::TraceTooShort {
            frames: trace.frames.len(),
            needed: cfg.window_len,
        });
    }
    let uniform = vec![1.0 / trace.n_subrois as f64; trace.n_subrois];
    let n_windows = trace.frames.len() / cfg.window_len;
    let mut estimates = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let start = w * cfg.window_len;
        let mut m = SubRoiMatrix::from_trace_window(trace, start, cfg.window_len)?;
        m.remove_row_means();
        let g = combine_still(&m, &uniform)?;
        let spectrum = power_spectrum(&g, trace.fps, &cfg.spectral);
        let peaks = band_peaks(&spectrum, &cfg.spectral)?;
        estimates.push(HrEstimate {
            window_index: w,
            t_start_sec: trace.frames[start].t_sec,
            label: FrameLabel::Still,
            hr_bpm: peaks[0].bpm(),
            source: HrSource::Argmax,
        });
    }
    Ok(HrSeries { estimates })
}

/// Per-window estimation errors `estimate - truth`, bpm.
pub fn residuals(est: &HrSeries, truth: &GroundTruth) -> Result<Vec<f64>> {
    if est.len() != truth.windows.len() {
        return Err(Error::LengthMismatch {
            left: est.len(),
            right: truth.windows.len(),
            detail: "estimated windows vs ground-truth windows".to_string(),
        });
    }
    Ok(est
        .estimates
        .iter()
        .zip(&truth.windows)
        .map(|(e, t)| e.hr_bpm - t.hr_bpm)
        .collect())
}

/// Mean residual (signed bias), bpm.
pub fn bias_of(residuals: &[f64]) -> f64 {
    assert!(!residuals.is_empty(), "metrics need at least one residual");
    residuals.iter().sum::<f64>() / residuals.len() as f64
}

/// Root mean square of the residuals, bpm.
pub fn rmse_of(residuals: &[f64]) -> f64 {
    assert!(!residuals.is_empty(), "metrics need at least one residual");
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Population standard deviation of the residuals (two-pass), bpm.
pub fn sde_of(residuals: &[f64]) -> f64 {
    let bias = bias_of(residuals);
    (residuals.iter().map(|r| (r - bias).powi(2)).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Root Mean Square Error of an estimate series against ground truth.
pub fn rmse(est: &HrSeries, truth: &GroundTruth) -> Result<f64> {
    Ok(rmse_of(&residuals(est, truth)?))
}

/// Standard Deviation of Error (population) against ground truth.
pub fn sde(est: &HrSeries, truth: &GroundTruth) -> Result<f64> {
    Ok(sde_of(&residuals(est, truth)?))
}

/// Pooled metrics of one method over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: MethodId,
    pub rmse_bpm: f64,
    pub sde_bpm: f64,
    /// Residuals of every window of every session, in session order.
    pub residuals: Vec<f64>,
}

impl MethodReport {
    pub fn n_windows(&self) -> usize {
        self.residuals.len()
    }
}

/// Benchmark outcome: one pooled report per requested method.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub methods: Vec<MethodReport>,
}

impl ErrorReport {
    /// The report of one method, if it was run.
    pub fn method(&self, id: MethodId) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == id)
    }
}

fn run_method(trace: &SessionTrace, method: MethodId, cfg: &PipelineConfig) -> Result<HrSeries> {
    match method {
        MethodId::GreenBaseline => baseline_green(trace, cfg),
        MethodId::AdaptiveNoTrack => estimate_session_argmax(trace, cfg),
        MethodId::AdaptiveTracked => estimate_session(trace, cfg),
    }
}

/// Runs `methods` over every session listed in `corpus_dir/corpus.csv`
/// and pools the residuals. Sessions are evaluated in parallel;
/// aggregation keeps session order (the metrics are order-independent
/// regardless).
pub fn run_bench(
    corpus_dir: impl AsRef<Path>,
    methods: &[MethodId],
    cfg: &PipelineConfig,
) -> Result<ErrorReport> {
    let corpus_dir = corpus_dir.as_ref();
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::ConfigInvalid("no methods requested".to_string()));
    }
    let manifest = read_corpus_manifest(corpus_dir.join(CORPUS_MANIFEST_NAME))?;
    if manifest.sessions.is_empty() {
        return Err(Error::CorpusInvalid(
            "corpus manifest lists no sessions".to_string(),
        ));
    }
    // Per session: the residual vector of every requested method.
    let per_session: Vec<Vec<Vec<f64>>> = manifest
        .sessions
        .par_iter()
        .map(|entry| -> Result<Vec<Vec<f64>>> {
            let trace = read_trace_csv(corpus_dir.join(&entry.path))?;
            let truth = read_ground_truth(corpus_dir.join(&entry.truth_path))?;
            methods
                .iter()
                .map(|&m| residuals(&run_method(&trace, m, cfg)?, &truth))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let methods = methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let pooled: Vec<f64> = per_session
                .iter()
                .flat_map(|session| session[mi].iter().copied())
                .collect();
            MethodReport {
                method,
                rmse_bpm: rmse_of(&pooled),
                sde_bpm: sde_of(&pooled),
                residuals: pooled,
            }
        })
        .collect();
    Ok(ErrorReport { methods })
}

/// Published reference metrics included in every report for context:
/// method letter, RMSE, SDE (bpm) on the original evaluation dataset.
pub const REFERENCE_ROWS: [(&str, f64, f64); 4] = [
    ("a", 21.68, 12.62),
    ("c", 11.66, 11.51),
    ("d", 8.95, 6.10),
    ("e", 7.82, 5.08),
];

const REPORT_HEADER: &str = "method,scope,rmse_bpm,sde_bpm,windows";

/// Whether a report row was measured on this corpus or carried over as a
/// published reference value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportScope {
    Measured,
    Reference,
}

impl ReportScope {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportScope::Measured => "measured",
            ReportScope::Reference => "reference",
        }
    }
}

/// One parsed report row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// Method letter; reference rows may carry letters (like `c`) that the
    /// harness itself does not implement.
    pub method: String,
    pub scope: ReportScope,
    pub rmse_bpm: f64,
    pub sde_bpm: f64,
    /// Pooled window count; absent on reference rows.
    pub windows: Option<usize>,
}

/// Writes the report CSV: measured rows first, then the published
/// reference rows for context.
pub fn write_report(report: &ErrorReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("# heart-rate benchmark report\n");
    out.push_str("# measured rows: RMSE/SDE pooled over every window of every corpus session\n");
    out.push_str("# (population SDE; pooling, not per-session averaging)\n");
    out.push_str(
        "# reference rows: published values on the original evaluation dataset, for context\n",
    );
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for m in &report.methods {
        out.push_str(&format!(
            "{},measured,{},{},{}\n",
            m.method,
            m.rmse_bpm,
            m.sde_bpm,
            m.n_windows()
        ));
    }
    for (letter, rmse_bpm, sde_bpm) in REFERENCE_ROWS {
        out.push_str(&format!("{letter},reference,{rmse_bpm},{sde_bpm},\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::IoFailure {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads a report CSV back into its rows.
pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::IoFailure {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (i, line) in text.lines().enumerate() {
        let bad = |detail: String| Error::CorpusInvalid(format!("report line {}: {detail}", i + 1));
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != REPORT_HEADER {
                return Err(bad(format!(
                    "expected header {REPORT_HEADER:?}, got {line:?}"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(format!("{} fields, expected 5", fields.len())));
        }
        let scope = match fields[1] {
            "measured" => ReportScope::Measured,
            "reference" => ReportScope::Reference,
            other => return Err(bad(format!("unknown scope {other:?}"))),
        };
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| bad(format!("invalid number {s:?}")))
        };
        let windows = if fields[4].is_empty() {
            None
        } else {
            Some(
                fields[4]
                    .parse::<usize>()
                    .map_err(|_| bad(format!("invalid window count {:?}", fields[4])))?,
            )
        };
        rows.push(ReportRow {
            method: fields[0].to_string(),
            scope,
            rmse_bpm: num(fields[2])?,
            sde_bpm: num(fields[3])?,
            windows,
        });
    }
    if !saw_header {
        return Err(Error::CorpusInvalid(format!(
            "report {} has no header line",
            path.display()
        )));
    }
    Ok(rows)
}
