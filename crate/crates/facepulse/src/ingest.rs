//! On-disk formats: session trace CSV, landmark-only CSV, ground-truth CSV
//! and binary RGB (P6) frame images.
//!
//! A session trace looks like
//!
//! ```text
//! # fps=25 n_subrois=40 n_lips=4
//! frame,t_sec,nose_x,nose_y,lip1_x,lip1_y,...,lip4_y,g_1,...,g_40
//! 0,0,320,220,290,280,...
//! ```
//!
//! Line 1 carries capture metadata, line 2 the column header, and every
//! following row one frame. Floats are written with Rust's shortest
//! round-trip formatting, so a write/read cycle reproduces the same bytes
//! and the same values. Parsers fail eagerly with the offending line number
//! and never return partially-read data.

use std::fmt::Write as _;
use std::fs;
use std::ops::Sub;
use std::path::Path;

use crate::error::{Error, Result};

/// 2-D image-plane position in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance to `other`.
    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Euclidean length when the point is used as a displacement vector.
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Sub for Point {
    type Output = Point;

    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// One video frame reduced to landmarks plus per-sub-ROI green means.
///
/// `greens[r]` is the mean green intensity of sub-ROI `r` in this frame;
/// the vector is empty for landmark-only tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub t_sec: f64,
    pub nose: Point,
    pub lips: Vec<Point>,
    pub greens: Vec<f64>,
}

impl FrameRecord {
    /// Landmark by flat index: 0 is the nose, 1.. the lip points.
    pub fn landmark(&self, idx: usize) -> Option<Point> {
        if idx == 0 {
            Some(self.nose)
        } else {
            self.lips.get(idx - 1).copied()
        }
    }

    pub fn landmark_count(&self) -> usize {
        1 + self.lips.len()
    }
}

/// A full capture session: metadata plus one record per frame.
///
/// Invariants established by the readers and generators: `fps > 0`,
/// `n_subrois >= 1`, every frame has exactly `n_subrois` greens and
/// `n_lips` lip points, frame indices are consecutive from 0 and `t_sec`
/// is strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub fps: f64,
    pub n_subrois: usize,
    pub n_lips: usize,
    pub frames: Vec<FrameRecord>,
}

impl SessionTrace {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Landmark trajectories without green samples, as produced by a face
/// tracker before sub-ROI extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkTrack {
    pub fps: f64,
    pub n_lips: usize,
    pub frames: Vec<FrameRecord>,
}

/// Reference heart rate for one analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtWindow {
    pub window_index: usize,
    pub t_start_sec: f64,
    pub hr_bpm: f64,
}

/// Per-window reference heart rates for a session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub windows: Vec<GtWindow>,
}

/// Decoded 8-bit RGB image, rows top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, `3 * width * height` bytes.
    pub rgb: Vec<u8>,
}

impl FrameImage {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(Error::DimensionMismatch {
                detail: format!(
                    "rgb buffer holds {} bytes, {}x{} image needs {}",
                    rgb.len(),
                    width,
                    height,
                    3 * width * height
                ),
            });
        }
        Ok(Self { width, height, rgb })
    }

    /// Green channel value at pixel (x, y). Panics if out of bounds.
    pub fn green(&self, x: usize, y: usize) -> u8 {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        self.rgb[3 * (y * self.width + x) + 1]
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// Formats a float with shortest round-trip precision (`25` not `25.0`).
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Metadata line: `# fps=<float> n_subrois=<int> n_lips=<int>`.
fn format_meta_line(fps: f64, n_subrois: usize, n_lips: usize) -> String {
    format!(
        "# fps={} n_subrois={} n_lips={}",
        fmt_f64(fps),
        n_subrois,
        n_lips
    )
}

fn parse_meta_line(line: &str) -> Result<(f64, usize, usize)> {
    let malformed = |detail: &str| Error::MalformedHeader {
        line: 1,
        detail: detail.to_string(),
    };
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| malformed("expected leading '#'"))?;
    let mut fps = None;
    let mut n_subrois = None;
    let mut n_lips = None;
    for token in body.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| malformed(&format!("token {token:?} is not key=value")))?;
        match key {
            "fps" => {
                fps = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| malformed(&format!("fps value {value:?} is not a number")))?,
                )
            }
            "n_subrois" => {
                n_subrois = Some(value.parse::<usize>().map_err(|_| {
                    malformed(&format!("n_subrois value {value:?} is not an integer"))
                })?)
            }
            "n_lips" => {
                n_lips =
                    Some(value.parse::<usize>().map_err(|_| {
                        malformed(&format!("n_lips value {value:?} is not an integer"))
                    })?)
            }
            other => return Err(malformed(&format!("unknown metadata key {other:?}"))),
        }
    }
    let fps = fps.ok_or_else(|| malformed("missing fps"))?;
    let n_subrois = n_subrois.ok_or_else(|| malformed("missing n_subrois"))?;
    let n_lips = n_lips.ok_or_else(|| malformed("missing n_lips"))?;
    if !fps.is_finite() || fps <= 0.0 {
        return Err(Error::RangeError {
            line: 1,
            detail: format!("fps must be finite and > 0, got {fps}"),
        });
    }
    Ok((fps, n_subrois, n_lips))
}

/// Column header shared by trace and landmark files; traces append the
/// `g_*` columns.
fn column_header(n_lips: usize, n_subrois: usize) -> String {
    let mut header = String::from("frame,t_sec,nose_x,nose_y");
    for l in 1..=n_lips {
        write!(header, ",lip{l}_x,lip{l}_y").unwrap();
    }
    for r in 1..=n_subrois {
        write!(header, ",g_{r}").unwrap();
    }
    header
}

/// Column name for error messages, by flat field position.
fn column_name(col: usize, n_lips: usize) -> String {
    match col {
        0 => "frame".to_string(),
        1 => "t_sec".to_string(),
        2 => "nose_x".to_string(),
        3 => "nose_y".to_string(),
        c if c < 4 + 2 * n_lips => {
            let rel = c - 4;
            let axis = if rel % 2 == 0 { "x" } else { "y" };
            format!("lip{}_{axis}", rel / 2 + 1)
        }
        c => format!("g_{}", c - 4 - 2 * n_lips + 1),
    }
}

fn parse_field(raw: &str, line: usize, col: usize, n_lips: usize) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::NonFiniteValue {
        line,
        column: column_name(col, n_lips),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFiniteValue {
            line,
            column: column_name(col, n_lips),
        });
    }
    Ok(v)
}

/// Parses one frame row. `line` is the 1-based file line for errors,
/// `expect_index` the required frame index, `prev_t` the previous
/// timestamp (None for the first row).
fn parse_frame_row(
    row: &str,
    line: usize,
    n_lips: usize,
    n_subrois: usize,
    expect_index: usize,
    prev_t: Option<f64>,
) -> Result<FrameRecord> {
    let expected = 4 + 2 * n_lips + n_subrois;
    let fields: Vec<&str> = row.split(',').collect();
    if fields.len() != expected {
        return Err(Error::RowArityMismatch {
            line,
            expected,
            got: fields.len(),
        });
    }
    let frame_index: usize = fields[0].trim().parse().map_err(|_| Error::RangeError {
        line,
        detail: format!("frame index {:?} is not a non-negative integer", fields[0]),
    })?;
    if frame_index != expect_index {
        return Err(Error::RangeError {
            line,
            detail: format!(
                "frame index {frame_index} breaks the 0,1,2,... sequence (expected {expect_index})"
            ),
        });
    }
    let t_sec = parse_field(fields[1], line, 1, n_lips)?;
    if let Some(prev) = prev_t {
        if t_sec <= prev {
            return Err(Error::NonMonotonicTime { line, t_sec });
        }
    }
    let nose = Point::new(
        parse_field(fields[2], line, 2, n_lips)?,
        parse_field(fields[3], line, 3, n_lips)?,
    );
    let mut lips = Vec::with_capacity(n_lips);
    for l in 0..n_lips {
        lips.push(Point::new(
            parse_field(fields[4 + 2 * l], line, 4 + 2 * l, n_lips)?,
            parse_field(fields[5 + 2 * l], line, 5 + 2 * l, n_lips)?,
        ));
    }
    let mut greens = Vec::with_capacity(n_subrois);
    for r in 0..n_subrois {
        let col = 4 + 2 * n_lips + r;
        greens.push(parse_field(fields[col], line, col, n_lips)?);
    }
    Ok(FrameRecord {
        frame_index,
        t_sec,
        nose,
        lips,
        greens,
    })
}

/// Warn (via `log`) when the median frame spacing drifts more than 1% from
/// the nominal 1/fps, which usually means dropped frames or a wrong header.
fn check_frame_spacing(frames: &[FrameRecord], fps: f64, origin: &Path) {
    if frames.len() < 3 {
        return;
    }
    let mut diffs: Vec<f64> = frames.windows(2).map(|w| w[1].t_sec - w[0].t_sec).collect();
    diffs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let median = diffs[diffs.len() / 2];
    let nominal = 1.0 / fps;
    if (median - nominal).abs() > 0.01 * nominal {
        log::warn!(
            "{}: median frame spacing {median:.6}s deviates >1% from 1/fps = {nominal:.6}s",
            origin.display()
        );
    }
}

fn read_rows(path: &Path, require_subrois: bool) -> Result<(f64, usize, usize, Vec<FrameRecord>)> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = content.lines();
    let meta = lines.next().ok_or_else(|| Error::MalformedHeader {
        line: 1,
        detail: "empty file".to_string(),
    })?;
    let (fps, n_subrois, n_lips) = parse_meta_line(meta)?;
    if require_subrois && n_subrois == 0 {
        return Err(Error::RangeError {
            line: 1,
            detail: "n_subrois must be >= 1 for a trace file".to_string(),
        });
    }
    if !require_subrois && n_subrois != 0 {
        return Err(Error::MalformedHeader {
            line: 1,
            detail: format!("landmark file must declare n_subrois=0, got {n_subrois}"),
        });
    }
    let header = lines.next().ok_or_else(|| Error::MalformedHeader {
        line: 2,
        detail: "missing column header".to_string(),
    })?;
    let expected_header = column_header(n_lips, n_subrois);
    if header != expected_header {
        return Err(Error::MalformedHeader {
            line: 2,
            detail: format!("column header {header:?} does not match {expected_header:?}"),
        });
    }
    let mut frames = Vec::new();
    let mut prev_t = None;
    for (i, row) in lines.enumerate() {
        if row.is_empty() {
            continue;
        }
        let line = i + 3;
        let frame = parse_frame_row(row, line, n_lips, n_subrois, frames.len(), prev_t)?;
        prev_t = Some(frame.t_sec);
        frames.push(frame);
    }
    check_frame_spacing(&frames, fps, path);
    Ok((fps, n_subrois, n_lips, frames))
}

/// Reads a session trace CSV. Fails with the offending line number on any
/// structural or numeric problem; never returns a partial trace.
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<SessionTrace> {
    let path = path.as_ref();
    let (fps, n_subrois, n_lips, frames) = read_rows(path, true)?;
    Ok(SessionTrace {
        fps,
        n_subrois,
        n_lips,
        frames,
    })
}

fn format_frame_row(out: &mut String, frame: &FrameRecord) {
    write!(out, "{},{}", frame.frame_index, fmt_f64(frame.t_sec)).unwrap();
    write!(out, ",{},{}", fmt_f64(frame.nose.x), fmt_f64(frame.nose.y)).unwrap();
    for lip in &frame.lips {
        write!(out, ",{},{}", fmt_f64(lip.x), fmt_f64(lip.y)).unwrap();
    }
    for g in &frame.greens {
        write!(out, ",{}", fmt_f64(*g)).unwrap();
    }
    out.push('\n');
}

/// Writes a session trace CSV that [`read_trace_csv`] reproduces exactly.
pub fn write_trace_csv(trace: &SessionTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format_meta_line(trace.fps, trace.n_subrois, trace.n_lips);
    out.push('\n');
    out.push_str(&column_header(trace.n_lips, trace.n_subrois));
    out.push('\n');
    for frame in &trace.frames {
        format_frame_row(&mut out, frame);
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a landmark-only CSV (same layout as a trace, minus `g_*` columns,
/// with `n_subrois=0` in the metadata line).
pub fn read_landmark_csv(path: impl AsRef<Path>) -> Result<LandmarkTrack> {
    let path = path.as_ref();
    let (fps, _, n_lips, frames) = read_rows(path, false)?;
    Ok(LandmarkTrack {
        fps,
        n_lips,
        frames,
    })
}

/// Writes a landmark-only CSV readable by [`read_landmark_csv`].
pub fn write_landmark_csv(track: &LandmarkTrack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format_meta_line(track.fps, 0, track.n_lips);
    out.push('\n');
    out.push_str(&column_header(track.n_lips, 0));
    out.push('\n');
    for frame in &track.frames {
        format_frame_row(&mut out, frame);
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a per-window reference heart-rate CSV
/// (`window,t_start_sec,hr_bpm`).
pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = content.lines();
    let header = lines.next().ok_or_else(|| Error::MalformedHeader {
        line: 1,
        detail: "empty file".to_string(),
    })?;
    if header != "window,t_start_sec,hr_bpm" {
        return Err(Error::MalformedHeader {
            line: 1,
            detail: format!("expected \"window,t_start_sec,hr_bpm\", got {header:?}"),
        });
    }
    let mut windows = Vec::new();
    for (i, row) in lines.enumerate() {
        if row.is_empty() {
            continue;
        }
        let line = i + 2;
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::RowArityMismatch {
                line,
                expected: 3,
                got: fields.len(),
            });
        }
        let window_index: usize = fields[0].trim().parse().map_err(|_| Error::RangeError {
            line,
            detail: format!("window index {:?} is not a non-negative integer", fields[0]),
        })?;
        if window_index != windows.len() {
            return Err(Error::RangeError {
                line,
                detail: format!(
                    "window index {window_index} breaks the 0,1,2,... sequence (expected {})",
                    windows.len()
                ),
            });
        }
        let parse = |raw: &str, column: &str| -> Result<f64> {
            let v: f64 = raw.trim().parse().map_err(|_| Error::NonFiniteValue {
                line,
                column: column.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    line,
                    column: column.to_string(),
                });
            }
            Ok(v)
        };
        let t_start_sec = parse(fields[1], "t_start_sec")?;
        let hr_bpm = parse(fields[2], "hr_bpm")?;
        if hr_bpm <= 0.0 || hr_bpm >= 300.0 {
            return Err(Error::RangeError {
                line,
                detail: format!("hr_bpm {hr_bpm} outside the plausible (0, 300) range"),
            });
        }
        windows.push(GtWindow {
            window_index,
            t_start_sec,
            hr_bpm,
        });
    }
    Ok(GroundTruth { windows })
}

/// Writes a reference heart-rate CSV readable by [`read_ground_truth`].
pub fn write_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("window,t_start_sec,hr_bpm\n");
    for w in &gt.windows {
        writeln!(
            out,
            "{},{},{}",
            w.window_index,
            fmt_f64(w.t_start_sec),
            fmt_f64(w.hr_bpm)
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Cursor over the textual PPM header: tokens separated by whitespace,
/// with `#` comments running to end of line.
struct PpmCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> PpmCursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }
}

/// Reads a binary RGB (P6, maxval 255) image.
pub fn read_ppm_frame(path: impl AsRef<Path>) -> Result<FrameImage> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    if data.len() < 2 || &data[0..2] != b"P6" {
        let found = String::from_utf8_lossy(&data[..data.len().min(2)]).into_owned();
        return Err(Error::UnsupportedMagic { found });
    }
    let mut cursor = PpmCursor {
        data: &data,
        pos: 2,
    };
    let mut dims = [0usize; 3];
    for (i, name) in ["width", "height", "maxval"].iter().enumerate() {
        let token = cursor.token().ok_or_else(|| Error::MalformedHeader {
            line: 1,
            detail: format!("image header ends before {name}"),
        })?;
        dims[i] = std::str::from_utf8(token)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader {
                line: 1,
                detail: format!(
                    "image {name} token {:?} is not an integer",
                    String::from_utf8_lossy(token)
                ),
            })?;
    }
    let (width, height, maxval) = (dims[0], dims[1], dims[2]);
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval {
            maxval: maxval as u32,
        });
    }
    // Exactly one whitespace byte separates the header from the payload.
    if cursor.pos >= data.len() || !data[cursor.pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader {
            line: 1,
            detail: "missing whitespace between maxval and payload".to_string(),
        });
    }
    let payload = &data[cursor.pos + 1..];
    let expected = 3 * width * height;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }
    FrameImage::new(width, height, payload[..expected].to_vec())
}

/// Writes a binary RGB (P6, maxval 255) image.
pub fn write_ppm_frame(image: &FrameImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.rgb);
    fs::write(path, out).map_err(|e| io_err(path, e))
}
