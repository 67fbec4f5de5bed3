//! Error type shared by every stage of the pipeline.
//!
//! Variants split into two families: problems with the data handed to us
//! (malformed files, out-of-range values, traces too short to analyze) and
//! violations of internal invariants that indicate a bug rather than bad
//! input. [`Error::exit_code`] maps the former to exit code 1 and the latter
//! to exit code 2 for the command-line front end.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A metadata or column header line does not match the expected layout.
    #[error("malformed header at line {line}: {detail}")]
    MalformedHeader { line: usize, detail: String },

    /// A data row has the wrong number of comma-separated fields.
    #[error("row arity mismatch at line {line}: expected {expected} fields, got {got}")]
    RowArityMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },

    /// Timestamps must be strictly increasing between consecutive frames.
    #[error("non-monotonic time at line {line}: t_sec={t_sec} does not advance")]
    NonMonotonicTime { line: usize, t_sec: f64 },

    /// A numeric field failed to parse or parsed to NaN/infinity.
    #[error("non-finite value at line {line}, column {column}")]
    NonFiniteValue { line: usize, column: String },

    /// A parsed value falls outside its documented range.
    #[error("value out of range at line {line}: {detail}")]
    RangeError { line: usize, detail: String },

    /// Underlying filesystem failure, tagged with the path involved.
    #[error("io failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Image file does not start with the binary RGB magic "P6".
    #[error("unsupported image magic {found:?}: only binary RGB (P6) is read")]
    UnsupportedMagic { found: String },

    /// Image declares a sample depth other than 8 bits per channel.
    #[error("unsupported maxval {maxval}: only maxval 255 is read")]
    UnsupportedMaxval { maxval: u32 },

    /// Image payload ends before width * height * 3 bytes.
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },

    /// Landmarks all coincide along an axis, so no face box can be derived.
    #[error("degenerate landmarks: zero spatial span along an axis")]
    DegenerateLandmarks,

    /// The face box has fewer pixel rows or columns than grid cells.
    #[error("rect {w}x{h} too small for a {rows}x{cols} sub-ROI grid")]
    RectTooSmall {
        w: u32,
        h: u32,
        rows: u32,
        cols: u32,
    },

    /// The sub-ROI grid extends outside the image it is sampled from.
    #[error("grid rect ({x0},{y0}) {w}x{h} out of bounds for {width}x{height} image")]
    GridOutOfBounds {
        x0: i64,
        y0: i64,
        w: u32,
        h: u32,
        width: usize,
        height: usize,
    },

    /// Internal arrays that must agree in shape do not.
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },

    /// A window index points past the last full analysis window.
    #[error("window {index} out of range: trace has {available} full windows")]
    WindowOutOfRange { index: usize, available: usize },

    /// No spectral peak survived the band and magnitude-floor filters.
    #[error("no spectral peak inside the {lo_hz}-{hi_hz} Hz band")]
    NoPeakInBand { lo_hz: f64, hi_hz: f64 },

    /// A session-level operation received zero analysis windows.
    #[error("empty session: no analysis windows to process")]
    EmptySession,

    /// The trace holds fewer frames than one analysis window.
    #[error("trace too short: {frames} frames, need at least {needed}")]
    TraceTooShort { frames: usize, needed: usize },

    /// A configuration key or value is unusable.
    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    /// The corpus manifest is unusable or inconsistent with the layout.
    #[error("invalid corpus: {0}")]
    CorpusInvalid(String),

    /// Two sequences that must pair element-wise have different lengths.
    #[error("length mismatch: {left} vs {right} ({detail})")]
    LengthMismatch {
        left: usize,
        right: usize,
        detail: String,
    },

    /// An internal invariant was violated; this is a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Exit code for the command-line front end: 1 for bad input, 2 for
    /// violated internal invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. }
            | Error::WindowOutOfRange { .. }
            | Error::EmptySession
            | Error::Invariant(_) => 2,
            _ => 1,
        }
    }
}
