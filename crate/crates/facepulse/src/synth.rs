//! Synthetic session generator: pulse traces with known per-window heart
//! rate and controllable rigid-motion / facial-expression noise, plus
//! corpus assembly for benchmarking.
//!
//! The generator is the verification substrate for the rest of the crate,
//! so its noise is constructed to exercise the exact mechanisms the
//! extraction stages target:
//!
//! * Rigid segments translate the nose and all lip points along one random
//!   direction and couple the same trajectory into every sub-ROI's green
//!   signal with a random per-sub-ROI gain — a rank-1 corruption that the
//!   motion rule's per-row regression can remove almost exactly.
//! * Expression segments move each lip point independently and inject
//!   gated low-frequency bursts at 10-20x the pulse amplitude into a small
//!   set of lip-owned sub-ROIs, which the expression rule attenuates via
//!   amplitude weights and movement normalization.
//!
//! Everything is reproducible: one seed determines every sample, and the
//! manifest written next to each session re-runs the generator bit for bit.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::{parse_f64, parse_u64, parse_usize, read_kv_file};
use crate::error::{Error, Result};
use crate::ingest::{
    write_ground_truth, write_trace_csv, FrameRecord, GroundTruth, GtWindow, Point, SessionTrace,
};
use crate::labeler::LabelerConfig;
use crate::roi_grid::{assign_landmarks, face_rect, grid_divide, DEFAULT_ROI_MARGIN};

/// Default pulse amplitude in green units.
pub const DEFAULT_PULSE_AMP: f64 = 0.5;

/// Default sensor noise standard deviation in green units.
pub const DEFAULT_SENSOR_SIGMA: f64 = 0.1;

/// Default green baseline level (mid-scale of an 8-bit channel).
pub const DEFAULT_BASELINE_GREEN: f64 = 128.0;

/// Analysis window length in seconds; ground-truth windows use the same
/// convention as the estimation pipeline (100 frames at 25 fps).
pub const SYNTH_WINDOW_SEC: f64 = 4.0;

/// File name of the corpus manifest inside a corpus directory.
pub const CORPUS_MANIFEST_NAME: &str = "corpus.csv";

/// Spread of the per-sub-ROI pulse phase offsets: small spatial diversity
/// without destroying coherence of the mean.
const PHASE_SPREAD_RAD: f64 = 0.2 * PI;

/// Frequency band of landmark trajectories and green bursts, Hz.
const NOISE_BAND_HZ: (f64, f64) = (0.5, 2.0);

/// Expression bursts scale to this multiple range of the pulse amplitude.
const BURST_SCALE_RANGE: (f64, f64) = (10.0, 20.0);

/// Sinusoid components per landmark trajectory.
const TRAJECTORY_COMPONENTS: usize = 3;

/// Sinusoid components per green burst.
const BURST_COMPONENTS: usize = 4;

/// Raised-cosine ramp applied at segment edges, seconds.
const SEGMENT_TAPER_SEC: f64 = 0.5;

/// Raised-cosine ramp at the edges of each burst gate run, seconds.
const GATE_EDGE_SEC: f64 = 0.1;

/// Bounds of one burst gate run (on or off), seconds.
const GATE_RUN_SEC: (f64, f64) = (0.5, 1.0);

/// Fraction of sub-ROIs that receive bursts when a segment does not name
/// them explicitly.
const DEFAULT_AFFECTED_FRACTION: f64 = 0.15;

/// Shortest noise segment the generator accepts, frames.
const MIN_SEGMENT_FRAMES: usize = 8;

/// Windows per noise block in the standard corpus layout.
const CORPUS_BLOCK_WINDOWS: usize = 3;

/// Corpus segments sit at this multiple of the labeler detection
/// threshold, comfortably above it but at a realistic scale.
const CORPUS_SEGMENT_THRESHOLD_MULTIPLE: f64 = 5.0;

/// Salt separating the per-session layout stream from the sample stream.
const LAYOUT_SEED_SALT: u64 = 0x5EED_1A70_57A7_1C5E;

/// Rest position of the nose landmark, pixels.
pub fn rest_nose() -> Point {
    Point::new(320.0, 220.0)
}

/// Rest positions of the four lip landmarks (left, right, top, bottom).
pub fn rest_lips() -> Vec<Point> {
    vec![
        Point::new(290.0, 280.0),
        Point::new(350.0, 280.0),
        Point::new(320.0, 260.0),
        Point::new(320.0, 300.0),
    ]
}

/// The two noise families a segment can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Whole-head translation: all landmarks move together.
    Rigid,
    /// Facial expression: lips move independently, local green bursts.
    Expression,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Rigid => "rigid",
            NoiseKind::Expression => "expression",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rigid" => Ok(NoiseKind::Rigid),
            "expression" => Ok(NoiseKind::Expression),
            other => Err(Error::ConfigInvalid(format!(
                "unknown noise kind {other:?} (expected rigid or expression)"
            ))),
        }
    }
}

/// One noise interval within a session.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSegment {
    pub kind: NoiseKind,
    pub t_start_sec: f64,
    pub t_end_sec: f64,
    /// Landmark trajectory amplitude as the mean per-frame step in pixels;
    /// for rigid segments also the green coupling scale in green units.
    pub amp: f64,
    /// Sub-ROIs whose greens receive expression bursts. Empty means
    /// "choose automatically" (lip-owned cells); must be empty for rigid
    /// segments, which couple into every sub-ROI.
    pub affected: Vec<usize>,
}

impl NoiseSegment {
    /// Serialized form `kind:t_start:t_end:amp:affected` with `affected`
    /// either `-` (empty/automatic) or a `;`-separated index list.
    pub fn to_kv_value(&self) -> String {
        let affected = if self.affected.is_empty() {
            "-".to_string()
        } else {
            self.affected
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        format!(
            "{}:{}:{}:{}:{}",
            self.kind, self.t_start_sec, self.t_end_sec, self.amp, affected
        )
    }

    /// Parses the serialized form; `auto` is accepted as an alias of `-`.
    pub fn from_kv_value(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 5 {
            return Err(Error::ConfigInvalid(format!(
                "segment must be kind:t_start:t_end:amp:affected, got {s:?}"
            )));
        }
        let kind = parts[0].parse::<NoiseKind>()?;
        let t_start_sec = parse_f64("segment t_start", parts[1])?;
        let t_end_sec = parse_f64("segment t_end", parts[2])?;
        let amp = parse_f64("segment amp", parts[3])?;
        let affected = match parts[4] {
            "-" | "auto" => Vec::new(),
            list => list
                .split(';')
                .map(|item| parse_usize("segment affected", item))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Self {
            kind,
            t_start_sec,
            t_end_sec,
            amp,
            affected,
        })
    }
}

/// Generator configuration; all fields have working defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub duration_sec: f64,
    pub fps: f64,
    pub n_subrois: usize,
    pub n_lips: usize,
    /// Piecewise-constant heart rate, one value per analysis window; a
    /// shorter list extends with its last value.
    pub hr_profile: Vec<f64>,
    /// Pulse amplitude, green units.
    pub pulse_amp: f64,
    /// Per-sample gaussian sensor noise, green units.
    pub sensor_noise_sigma: f64,
    pub baseline_green: f64,
    pub segments: Vec<NoiseSegment>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            duration_sec: 60.0,
            fps: 25.0,
            n_subrois: 40,
            n_lips: 4,
            hr_profile: vec![72.0],
            pulse_amp: DEFAULT_PULSE_AMP,
            sensor_noise_sigma: DEFAULT_SENSOR_SIGMA,
            baseline_green: DEFAULT_BASELINE_GREEN,
            segments: Vec::new(),
        }
    }
}

impl SynthConfig {
    /// Frames per analysis window under this configuration.
    pub fn window_len(&self) -> usize {
        (SYNTH_WINDOW_SEC * self.fps).round() as usize
    }

    /// Total frame count of a generated session.
    pub fn n_frames(&self) -> usize {
        (self.duration_sec * self.fps).round() as usize
    }

    /// Number of full analysis windows (and ground-truth entries).
    pub fn n_windows(&self) -> usize {
        self.n_frames() / self.window_len().max(1)
    }

    /// Heart rate of window `w`: the profile extended with its last value.
    pub fn hr_at(&self, w: usize) -> f64 {
        self.hr_profile[w.min(self.hr_profile.len() - 1)]
    }

    /// Per-window heart rates for every full window.
    pub fn hr_schedule(&self) -> Vec<f64> {
        (0..self.n_windows()).map(|w| self.hr_at(w)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::ConfigInvalid(detail));
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return bad(format!("fps must be > 0, got {}", self.fps));
        }
        if !self.duration_sec.is_finite() || self.duration_sec <= 0.0 {
            return bad(format!(
                "duration_sec must be > 0, got {}",
                self.duration_sec
            ));
        }
        if self.n_frames() == 0 {
            return bad("duration and fps yield an empty session".to_string());
        }
        if self.window_len() == 0 {
            return bad("fps too low for the 4 s analysis window".to_string());
        }
        if self.n_subrois == 0 {
            return bad("n_subrois must be >= 1".to_string());
        }
        let max_lips = rest_lips().len();
        if self.n_lips == 0 || self.n_lips > max_lips {
            return bad(format!(
                "n_lips must lie in 1..={max_lips}, got {}",
                self.n_lips
            ));
        }
        if self.hr_profile.is_empty() {
            return bad("hr_profile must hold at least one rate".to_string());
        }
        for &hr in &self.hr_profile {
            if !hr.is_finite() || !(42.0..=240.0).contains(&hr) {
                return bad(format!(
                    "heart rate {hr} outside the plausible 42-240 bpm band"
                ));
            }
        }
        if !self.pulse_amp.is_finite() || self.pulse_amp < 0.0 {
            return bad(format!("pulse_amp must be >= 0, got {}", self.pulse_amp));
        }
        if !self.sensor_noise_sigma.is_finite() || self.sensor_noise_sigma < 0.0 {
            return bad(format!(
                "sensor_noise_sigma must be >= 0, got {}",
                self.sensor_noise_sigma
            ));
        }
        if !self.baseline_green.is_finite() {
            return bad(format!(
                "baseline_green must be finite, got {}",
                self.baseline_green
            ));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !seg.t_start_sec.is_finite()
                || !seg.t_end_sec.is_finite()
                || seg.t_start_sec < 0.0
                || seg.t_start_sec >= seg.t_end_sec
                || seg.t_end_sec > self.duration_sec
            {
                return bad(format!(
                    "segment {i} interval [{}, {}] not inside the {} s session",
                    seg.t_start_sec, seg.t_end_sec, self.duration_sec
                ));
            }
            let frames = ((seg.t_end_sec - seg.t_start_sec) * self.fps).round() as usize;
            if frames < MIN_SEGMENT_FRAMES {
                return bad(format!(
                    "segment {i} spans {frames} frames, need at least {MIN_SEGMENT_FRAMES}"
                ));
            }
            if !seg.amp.is_finite() || seg.amp < 0.0 {
                return bad(format!(
                    "segment {i} amplitude must be >= 0, got {}",
                    seg.amp
                ));
            }
            match seg.kind {
                NoiseKind::Rigid => {
                    if !seg.affected.is_empty() {
                        return bad(format!(
                            "segment {i} is rigid and couples into every sub-ROI; affected must be empty"
                        ));
                    }
                }
                NoiseKind::Expression => {
                    if let Some(&r) = seg.affected.iter().find(|&&r| r >= self.n_subrois) {
                        return bad(format!(
                            "segment {i} affects sub-ROI {r}, session has {}",
                            self.n_subrois
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies one configuration key; `Ok(false)` for unknown keys so
    /// callers can layer their own keys on top.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "seed" => self.seed = parse_u64(key, value)?,
            "duration_sec" => self.duration_sec = parse_f64(key, value)?,
            "fps" => self.fps = parse_f64(key, value)?,
            "n_subrois" => self.n_subrois = parse_usize(key, value)?,
            "n_lips" => self.n_lips = parse_usize(key, value)?,
            "hr_profile" => {
                self.hr_profile = value
                    .split(';')
                    .map(|item| parse_f64(key, item))
                    .collect::<Result<Vec<_>>>()?;
            }
            "pulse_amp" => self.pulse_amp = parse_f64(key, value)?,
            "sensor_noise_sigma" => self.sensor_noise_sigma = parse_f64(key, value)?,
            "baseline_green" => self.baseline_green = parse_f64(key, value)?,
            "segment" => self.segments.push(NoiseSegment::from_kv_value(value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Loads a flat `key=value` file over the current values.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        for (key, value) in read_kv_file(&path)? {
            if !self.apply_kv(&key, &value)? {
                return Err(Error::ConfigInvalid(format!(
                    "unknown generator key {key:?} in {}",
                    path.as_ref().display()
                )));
            }
        }
        Ok(())
    }

    /// Segments with automatic `affected` sets made explicit (sorted,
    /// deduplicated). Fails if an expression segment ends up empty.
    pub fn resolved_segments(&self) -> Result<Vec<NoiseSegment>> {
        let mut auto: Option<Vec<usize>> = None;
        let mut out = self.segments.clone();
        for seg in &mut out {
            if seg.kind != NoiseKind::Expression {
                continue;
            }
            if seg.affected.is_empty() {
                if auto.is_none() {
                    auto = Some(default_affected_subrois(self)?);
                }
                seg.affected = auto.clone().unwrap();
            } else {
                seg.affected.sort_unstable();
                seg.affected.dedup();
            }
            if seg.affected.is_empty() {
                return Err(Error::ConfigInvalid(
                    "expression segment resolved to no affected sub-ROIs".to_string(),
                ));
            }
        }
        Ok(out)
    }
}

/// The landmark layout every generated session starts from.
fn rest_frame(cfg: &SynthConfig) -> FrameRecord {
    FrameRecord {
        frame_index: 0,
        t_sec: 0.0,
        nose: rest_nose(),
        lips: rest_lips()[..cfg.n_lips].to_vec(),
        greens: vec![0.0; cfg.n_subrois],
    }
}

/// Width of the face ROI the pipeline derives from the rest layout; used
/// to express segment amplitudes as multiples of the labeler thresholds.
pub fn rest_roi_width(cfg: &SynthConfig) -> Result<f64> {
    Ok(face_rect(&rest_frame(cfg), DEFAULT_ROI_MARGIN)?.w as f64)
}

/// Default burst targets: lip-owned grid cells of the rest layout, evenly
/// spaced, `ceil(0.15 * n_subrois)` of them.
pub fn default_affected_subrois(cfg: &SynthConfig) -> Result<Vec<usize>> {
    let frame = rest_frame(cfg);
    let rect = face_rect(&frame, DEFAULT_ROI_MARGIN)?;
    let grid = grid_divide(rect, cfg.n_subrois)?;
    let assignment = assign_landmarks(&grid, &frame);
    let lip_cells: Vec<usize> = assignment
        .owner
        .iter()
        .enumerate()
        .filter(|&(_, &owner)| owner >= 1)
        .map(|(r, _)| r)
        .collect();
    let pool = if lip_cells.is_empty() {
        (0..cfg.n_subrois).collect()
    } else {
        lip_cells
    };
    let k =
        ((DEFAULT_AFFECTED_FRACTION * cfg.n_subrois as f64).ceil() as usize).clamp(1, pool.len());
    if k == 1 {
        return Ok(vec![pool[0]]);
    }
    // Integer spacing is strictly increasing because pool.len() >= k.
    Ok((0..k)
        .map(|j| pool[j * (pool.len() - 1) / (k - 1)])
        .collect())
}

/// Everything needed to reproduce a generated session: the fully resolved
/// configuration plus the derived window layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthManifest {
    /// Resolved generator configuration (automatic sub-ROI sets made
    /// explicit); feeding it back to [`generate`] reproduces the session
    /// bit for bit.
    pub config: SynthConfig,
    pub n_frames: usize,
    pub n_windows: usize,
    pub window_len: usize,
    /// Reference heart rate of every full window.
    pub hr_schedule: Vec<f64>,
}

impl SynthManifest {
    /// Derives the manifest for an already-resolved configuration.
    pub fn for_config(config: SynthConfig) -> Self {
        let hr_schedule = config.hr_schedule();
        Self {
            n_frames: config.n_frames(),
            n_windows: config.n_windows(),
            window_len: config.window_len(),
            hr_schedule,
            config,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes a manifest as a flat `key=value` file (generator keys plus the
/// derived layout), reusable directly as a generator configuration.
pub fn write_manifest(manifest: &SynthManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let cfg = &manifest.config;
    let mut out = String::from("# synthetic session manifest; also a valid generator config\n");
    out.push_str(&format!("seed={}\n", cfg.seed));
    out.push_str(&format!("duration_sec={}\n", cfg.duration_sec));
    out.push_str(&format!("fps={}\n", cfg.fps));
    out.push_str(&format!("n_subrois={}\n", cfg.n_subrois));
    out.push_str(&format!("n_lips={}\n", cfg.n_lips));
    out.push_str(&format!("hr_profile={}\n", join_f64(&cfg.hr_profile)));
    out.push_str(&format!("pulse_amp={}\n", cfg.pulse_amp));
    out.push_str(&format!("sensor_noise_sigma={}\n", cfg.sensor_noise_sigma));
    out.push_str(&format!("baseline_green={}\n", cfg.baseline_green));
    for seg in &cfg.segments {
        out.push_str(&format!("segment={}\n", seg.to_kv_value()));
    }
    out.push_str(&format!("n_frames={}\n", manifest.n_frames));
    out.push_str(&format!("n_windows={}\n", manifest.n_windows));
    out.push_str(&format!("window_len={}\n", manifest.window_len));
    out.push_str(&format!(
        "hr_schedule={}\n",
        join_f64(&manifest.hr_schedule)
    ));
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a manifest back; the derived layout keys are cross-checked
/// against the configuration they were derived from.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<SynthManifest> {
    let path = path.as_ref();
    let mut cfg = SynthConfig {
        hr_profile: Vec::new(),
        ..SynthConfig::default()
    };
    let mut stored: Vec<(String, String)> = Vec::new();
    for (key, value) in read_kv_file(path)? {
        match key.as_str() {
            "n_frames" | "n_windows" | "window_len" | "hr_schedule" => {
                stored.push((key, value));
            }
            _ => {
                if !cfg.apply_kv(&key, &value)? {
                    return Err(Error::ConfigInvalid(format!(
                        "unknown manifest key {key:?} in {}",
                        path.display()
                    )));
                }
            }
        }
    }
    cfg.validate()?;
    let manifest = SynthManifest::for_config(cfg);
    for (key, value) in stored {
        let actual = match key.as_str() {
            "n_frames" => manifest.n_frames.to_string(),
            "n_windows" => manifest.n_windows.to_string(),
            "window_len" => manifest.window_len.to_string(),
            _ => join_f64(&manifest.hr_schedule),
        };
        if value != actual {
            return Err(Error::ConfigInvalid(format!(
                "manifest key {key} holds {value:?} but the configuration derives {actual:?}"
            )));
        }
    }
    Ok(manifest)
}

/// Raised-cosine ramp of `ramp` frames at both ends, 1.0 in the interior.
fn edge_taper(len: usize, ramp: usize) -> Vec<f64> {
    let ramp = ramp.min(len / 2);
    (0..len)
        .map(|i| {
            let d = (i + 1).min(len - i);
            if d <= ramp {
                0.5 * (1.0 - (PI * d as f64 / (ramp as f64 + 1.0)).cos())
            } else {
                1.0
            }
        })
        .collect()
}

/// A landmark trajectory over one segment: per-frame 2-D offsets plus the
/// scalar signal they ride on (all offsets lie on one line).
struct Trajectory {
    offsets: Vec<Point>,
    scalar: Vec<f64>,
}

/// Draws a band-limited trajectory along one random direction, tapered at
/// the segment edges and normalized so the mean per-frame step is `amp`.
fn draw_trajectory(rng: &mut ChaCha8Rng, len: usize, fps: f64, amp: f64) -> Trajectory {
    let theta = rng.random_range(0.0..TAU);
    let (ux, uy) = (theta.cos(), theta.sin());
    let comps: Vec<(f64, f64, f64)> = (0..TRAJECTORY_COMPONENTS)
        .map(|_| {
            (
                rng.random_range(NOISE_BAND_HZ.0..NOISE_BAND_HZ.1),
                rng.random_range(0.5..1.0),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    let taper = edge_taper(len, (SEGMENT_TAPER_SEC * fps).round() as usize);
    let mut scalar: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / fps;
            let v: f64 = comps
                .iter()
                .map(|&(freq, rel, phase)| rel * (TAU * freq * t + phase).sin())
                .sum();
            v * taper[i]
        })
        .collect();
    let mean_step = if len > 1 {
        scalar.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (len - 1) as f64
    } else {
        0.0
    };
    let scale = if mean_step > 1e-12 {
        amp / mean_step
    } else {
        0.0
    };
    for v in &mut scalar {
        *v *= scale;
    }
    let offsets = scalar.iter().map(|&v| Point::new(ux * v, uy * v)).collect();
    Trajectory { offsets, scalar }
}

/// Mean-removed, peak-normalized copy of `s` (zeros when degenerate).
fn unit_peak_mean_removed(s: &[f64]) -> Vec<f64> {
    let mean = s.iter().sum::<f64>() / s.len().max(1) as f64;
    let mut v: Vec<f64> = s.iter().map(|x| x - mean).collect();
    let peak = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if peak > 1e-12 {
        for x in &mut v {
            *x /= peak;
        }
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

/// Random on/off gate: alternating runs of 0.5-1 s with raised-cosine
/// edges on each on-run. Degenerate all-off draws become all-on so every
/// expression segment carries at least one burst.
fn draw_gate(rng: &mut ChaCha8Rng, len: usize, fps: f64) -> Vec<f64> {
    let mut gate = vec![0.0f64; len];
    let mut on = rng.random::<bool>();
    let mut pos = 0usize;
    while pos < len {
        let run =
            ((rng.random_range(GATE_RUN_SEC.0..GATE_RUN_SEC.1) * fps).round() as usize).max(1);
        let end = (pos + run).min(len);
        if on {
            gate[pos..end].iter_mut().for_each(|v| *v = 1.0);
        }
        on = !on;
        pos = end;
    }
    if !gate.contains(&1.0) {
        gate.iter_mut().for_each(|v| *v = 1.0);
    }
    let edge = ((GATE_EDGE_SEC * fps).round() as usize).max(1);
    let mut out = gate.clone();
    let mut i = 0;
    while i < len {
        if gate[i] != 1.0 {
            i += 1;
            continue;
        }
        let start = i;
        while i < len && gate[i] == 1.0 {
            i += 1;
        }
        let e = edge.min((i - start) / 2);
        for j in 0..e {
            let w = 0.5 * (1.0 - (PI * (j + 1) as f64 / (e as f64 + 1.0)).cos());
            out[start + j] *= w;
            out[i - 1 - j] *= w;
        }
    }
    out
}

/// Band-limited smooth burst, peak-normalized to 1.
fn draw_burst(rng: &mut ChaCha8Rng, len: usize, fps: f64) -> Vec<f64> {
    let comps: Vec<(f64, f64, f64)> = (0..BURST_COMPONENTS)
        .map(|_| {
            (
                rng.random_range(NOISE_BAND_HZ.0..NOISE_BAND_HZ.1),
                rng.random_range(0.5..1.0),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    let b: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / fps;
            comps
                .iter()
                .map(|&(freq, rel, phase)| rel * (TAU * freq * t + phase).sin())
                .sum()
        })
        .collect();
    let peak = b.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if peak > 1e-12 {
        b.into_iter().map(|x| x / peak).collect()
    } else {
        vec![0.0; len]
    }
}

fn shifted(base: Point, off: Point) -> Point {
    Point::new(base.x + off.x, base.y + off.y)
}

/// Generates one session: trace, per-window ground truth, and the
/// manifest that reproduces both.
///
/// Green model per sub-ROI `r` and frame `t`:
/// `baseline + pulse_amp * sin(phi(t) + phase_r) + noise_r(t) + sensor`,
/// where `phi` accumulates the per-window heart rate, `noise_r` collects
/// the segment couplings described at module level, and `sensor` is white
/// gaussian noise. The draw order (pulse phases, then each segment's
/// parameters in declaration order, then sensor noise frame-major) is
/// fixed, so a seed pins every sample.
pub fn generate(cfg: &SynthConfig) -> Result<(SessionTrace, GroundTruth, SynthManifest)> {
    cfg.validate()?;
    let segments = cfg.resolved_segments()?;
    let n = cfg.n_subrois;
    let n_frames = cfg.n_frames();
    let window_len = cfg.window_len();
    let n_windows = n_frames / window_len;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let phases: Vec<f64> = (0..n)
        .map(|_| rng.random::<f64>() * PHASE_SPREAD_RAD)
        .collect();

    let mut nose_off = vec![Point::new(0.0, 0.0); n_frames];
    let mut lip_off = vec![vec![Point::new(0.0, 0.0); n_frames]; cfg.n_lips];
    let mut green_noise = vec![0.0f64; n_frames * n];

    for seg in &segments {
        let f0 = ((seg.t_start_sec * cfg.fps).round() as usize).min(n_frames);
        let f1 = ((seg.t_end_sec * cfg.fps).round() as usize).min(n_frames);
        let len = f1 - f0;
        match seg.kind {
            NoiseKind::Rigid => {
                let traj = draw_trajectory(&mut rng, len, cfg.fps, seg.amp);
                for (i, &off) in traj.offsets.iter().enumerate() {
                    let t = f0 + i;
                    nose_off[t] = shifted(nose_off[t], off);
                    for lip in &mut lip_off {
                        lip[t] = shifted(lip[t], off);
                    }
                }
                // The green coupling rides on the trajectory's projection
                // onto its own dominant axis — by construction the scalar
                // signal itself, mean-removed and peak-normalized.
                let proj = unit_peak_mean_removed(&traj.scalar);
                for r in 0..n {
                    let c = rng.random_range(0.5..1.5) * seg.amp;
                    for (i, &v) in proj.iter().enumerate() {
                        green_noise[(f0 + i) * n + r] += c * v;
                    }
                }
            }
            NoiseKind::Expression => {
                for lip in lip_off.iter_mut() {
                    let traj = draw_trajectory(&mut rng, len, cfg.fps, seg.amp);
                    for (i, &off) in traj.offsets.iter().enumerate() {
                        lip[f0 + i] = shifted(lip[f0 + i], off);
                    }
                }
                let gate = draw_gate(&mut rng, len, cfg.fps);
                for &r in &seg.affected {
                    let burst = draw_burst(&mut rng, len, cfg.fps);
                    let scale =
                        rng.random_range(BURST_SCALE_RANGE.0..BURST_SCALE_RANGE.1) * cfg.pulse_amp;
                    for i in 0..len {
                        green_noise[(f0 + i) * n + r] += scale * gate[i] * burst[i];
                    }
                }
            }
        }
    }

    if cfg.sensor_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.sensor_noise_sigma)
            .expect("sigma validated non-negative and finite");
        for v in green_noise.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    // Phase accumulation: each window's frames advance at that window's
    // rate, so within a window the pulse is a pure tone at the truth rate.
    let last_window = n_windows.saturating_sub(1);
    let mut phase = vec![0.0f64; n_frames];
    for t in 1..n_frames {
        let w = (t / window_len).min(last_window);
        phase[t] = phase[t - 1] + TAU * cfg.hr_at(w) / 60.0 / cfg.fps;
    }

    let rest_nose_p = rest_nose();
    let rest_lips_p = rest_lips();
    let frames: Vec<FrameRecord> = (0..n_frames)
        .map(|t| {
            let greens = (0..n)
                .map(|r| {
                    cfg.baseline_green
                        + cfg.pulse_amp * (phase[t] + phases[r]).sin()
                        + green_noise[t * n + r]
                })
                .collect();
            FrameRecord {
                frame_index: t,
                t_sec: t as f64 / cfg.fps,
                nose: shifted(rest_nose_p, nose_off[t]),
                lips: (0..cfg.n_lips)
                    .map(|l| shifted(rest_lips_p[l], lip_off[l][t]))
                    .collect(),
                greens,
            }
        })
        .collect();

    let trace = SessionTrace {
        fps: cfg.fps,
        n_subrois: n,
        n_lips: cfg.n_lips,
        frames,
    };
    let truth = GroundTruth {
        windows: (0..n_windows)
            .map(|w| GtWindow {
                window_index: w,
                t_start_sec: (w * window_len) as f64 / cfg.fps,
                hr_bpm: cfg.hr_at(w),
            })
            .collect(),
    };
    let manifest = SynthManifest::for_config(SynthConfig {
        segments,
        ..cfg.clone()
    });
    Ok((trace, truth, manifest))
}

/// One corpus session: file locations (relative to the manifest) and the
/// seed it was generated from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub session: String,
    pub path: String,
    pub truth_path: String,
    pub seed: u64,
}

/// The corpus index written as `corpus.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusManifest {
    pub sessions: Vec<CorpusEntry>,
}

const CORPUS_HEADER: &str = "session,path,truth_path,seed";

/// Writes the corpus index CSV.
pub fn write_corpus_manifest(manifest: &CorpusManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(CORPUS_HEADER);
    out.push('\n');
    for e in &manifest.sessions {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.session, e.path, e.truth_path, e.seed
        ));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a corpus index CSV back.
pub fn read_corpus_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(CORPUS_HEADER) => {}
        other => {
            return Err(Error::CorpusInvalid(format!(
                "corpus manifest must start with {CORPUS_HEADER:?}, got {other:?}"
            )))
        }
    }
    let mut sessions = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::CorpusInvalid(format!(
                "corpus row {} has {} fields, expected 4",
                i + 2,
                fields.len()
            )));
        }
        let seed = fields[3].parse::<u64>().map_err(|_| {
            Error::CorpusInvalid(format!(
                "corpus row {} has invalid seed {:?}",
                i + 2,
                fields[3]
            ))
        })?;
        sessions.push(CorpusEntry {
            session: fields[0].to_string(),
            path: fields[1].to_string(),
            truth_path: fields[2].to_string(),
            seed,
        });
    }
    Ok(CorpusManifest { sessions })
}

/// Derives session `i` of an `n`-session corpus from the base
/// configuration: stratified heart rate in 50-150 bpm with small steps
/// every five windows, and (when the session is long enough) one rigid
/// and one expression block of three windows each, never touching window
/// 0 so tracking always has an anchor.
fn session_config(base: &SynthConfig, i: usize, n: usize) -> Result<SynthConfig> {
    let seed = base.seed.wrapping_add(1 + i as u64);
    let mut layout = ChaCha8Rng::seed_from_u64(seed ^ LAYOUT_SEED_SALT);
    let n_windows = base.n_windows();
    let window_sec = base.window_len() as f64 / base.fps;

    // Stratified base rate: session i draws from its own n-th of 50-150.
    let lo = 50.0 + 100.0 * i as f64 / n as f64;
    let hi = 50.0 + 100.0 * (i + 1) as f64 / n as f64;
    let mut hr = layout.random_range(lo..hi);
    let mut profile = Vec::with_capacity(n_windows.max(1));
    for w in 0..n_windows.max(1) {
        if w > 0 && w % 5 == 0 {
            let step = if layout.random::<bool>() { 5.0 } else { -5.0 };
            hr = (hr + step).clamp(50.0, 150.0);
        }
        profile.push(hr);
    }

    let segments = if n_windows > 2 * CORPUS_BLOCK_WINDOWS {
        let space = (n_windows - 1) - 2 * CORPUS_BLOCK_WINDOWS;
        let g1 = layout.random_range(0..=space);
        let g2 = layout.random_range(0..=space - g1);
        let b1 = 1 + g1;
        let b2 = b1 + CORPUS_BLOCK_WINDOWS + g2;
        let (k1, k2) = if layout.random::<bool>() {
            (NoiseKind::Expression, NoiseKind::Rigid)
        } else {
            (NoiseKind::Rigid, NoiseKind::Expression)
        };
        let width = rest_roi_width(base)?;
        let thresholds = LabelerConfig::default();
        let block = |kind: NoiseKind, b: usize| {
            let theta = match kind {
                NoiseKind::Rigid => thresholds.theta_motion,
                NoiseKind::Expression => thresholds.theta_expression,
            };
            NoiseSegment {
                kind,
                t_start_sec: b as f64 * window_sec,
                t_end_sec: (b + CORPUS_BLOCK_WINDOWS) as f64 * window_sec,
                amp: CORPUS_SEGMENT_THRESHOLD_MULTIPLE * theta * width,
                affected: Vec::new(),
            }
        };
        vec![block(k1, b1), block(k2, b2)]
    } else {
        Vec::new()
    };

    Ok(SynthConfig {
        seed,
        hr_profile: profile,
        segments,
        ..base.clone()
    })
}

/// Generates an `n_sessions` corpus under `out_dir`: per session a trace
/// CSV, a ground-truth CSV and a manifest, plus the corpus index
/// `corpus.csv`. Returns the index.
pub fn make_corpus(
    n_sessions: usize,
    base: &SynthConfig,
    out_dir: impl AsRef<Path>,
) -> Result<CorpusManifest> {
    let out_dir = out_dir.as_ref();
    base.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let sessions: Vec<CorpusEntry> = (0..n_sessions)
        .into_par_iter()
        .map(|i| -> Result<CorpusEntry> {
            let cfg = session_config(base, i, n_sessions)?;
            let (trace, truth, manifest) = generate(&cfg)?;
            let name = format!("session{i:03}");
            let trace_name = format!("{name}_trace.csv");
            let truth_name = format!("{name}_truth.csv");
            write_trace_csv(&trace, out_dir.join(&trace_name))?;
            write_ground_truth(&truth, out_dir.join(&truth_name))?;
            write_manifest(&manifest, out_dir.join(format!("{name}_synth.cfg")))?;
            Ok(CorpusEntry {
                session: name,
                path: trace_name,
                truth_path: truth_name,
                seed: cfg.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = CorpusManifest { sessions };
    write_corpus_manifest(&manifest, out_dir.join(CORPUS_MANIFEST_NAME))?;
    Ok(manifest)
}
