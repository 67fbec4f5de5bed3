//! Frequency-domain heart-rate estimation: windowed zero-padded FFT,
//! in-band peak picking with parabolic refinement, and temporal tracking
//! that uses still windows as anchors.
//!
//! Tracking rationale: a window dominated by motion or expression noise
//! often shows several spectral peaks of similar strength, and the
//! globally strongest one is not always the pulse. Still windows are
//! trustworthy, so for every noisy window the candidate peak closest to
//! the rate of the nearest still window wins, provided it lies within a
//! plausibility radius; otherwise the window falls back to its strongest
//! peak.

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::ingest::SessionTrace;
use crate::labeler::{label_frames, FrameLabel};
use crate::pulse::extract_pulse;
use crate::roi_grid::{assign_landmarks, face_rect, grid_divide};

/// Tuning for spectrum computation, peak picking and tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    /// Lower edge of the plausible pulse band, Hz.
    pub band_low_hz: f64,
    /// Upper edge of the plausible pulse band, Hz.
    pub band_high_hz: f64,
    /// FFT length after zero-padding; must be at least the window length.
    pub pad_len: usize,
    /// Peaks kept per window, strongest first.
    pub top_k: usize,
    /// In-band local maxima weaker than this fraction of the strongest
    /// in-band magnitude are discarded.
    pub mag_floor_ratio: f64,
    /// Tracking accepts a candidate only within this distance (bpm) of the
    /// anchor rate.
    pub track_radius_bpm: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            band_low_hz: 0.7,
            band_high_hz: 4.0,
            pad_len: 2048,
            top_k: 5,
            mag_floor_ratio: 0.25,
            track_radius_bpm: 18.0,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.band_low_hz.is_finite()
            || !self.band_high_hz.is_finite()
            || self.band_low_hz <= 0.0
            || self.band_high_hz <= self.band_low_hz
        {
            return Err(Error::ConfigInvalid(format!(
                "pulse band [{}, {}] Hz is not a positive interval",
                self.band_low_hz, self.band_high_hz
            )));
        }
        if self.pad_len < 2 {
            return Err(Error::ConfigInvalid(format!(
                "pad_len must be >= 2, got {}",
                self.pad_len
            )));
        }
        if self.top_k == 0 {
            return Err(Error::ConfigInvalid("top_k must be >= 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.mag_floor_ratio) {
            return Err(Error::ConfigInvalid(format!(
                "mag_floor_ratio must lie in [0, 1], got {}",
                self.mag_floor_ratio
            )));
        }
        if !self.track_radius_bpm.is_finite() || self.track_radius_bpm <= 0.0 {
            return Err(Error::ConfigInvalid(format!(
                "track_radius_bpm must be > 0, got {}",
                self.track_radius_bpm
            )));
        }
        Ok(())
    }
}

/// One-sided magnitude spectrum on the zero-padded FFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin center frequencies, Hz, from DC to fps/2.
    pub freqs: Vec<f64>,
    /// Bin magnitudes (unnormalized |FFT|).
    pub mags: Vec<f64>,
    /// FFT length the spectrum was computed with; the bin spacing is
    /// `fps / pad_len`.
    pub pad_len: usize,
}

/// A spectral peak candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub freq_hz: f64,
    /// Magnitude of the peak's center bin.
    pub mag: f64,
    /// Whether parabolic refinement was applied (false on a degenerate
    /// three-point fit).
    pub interpolated: bool,
}

impl Peak {
    pub fn bpm(&self) -> f64 {
        60.0 * self.freq_hz
    }
}

/// Symmetric raised-cosine (Hann) window of length `len`:
/// `w[i] = 0.5 - 0.5 cos(2 pi i / (len - 1))`, zero at both ends.
pub fn hann_window(len: usize) -> Vec<f64> {
    assert!(len >= 2, "hann window needs at least 2 samples");
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Magnitude spectrum of one pulse window: mean removal, Hann taper,
/// zero-padding to `cfg.pad_len`, FFT, one-sided magnitudes.
pub fn power_spectrum(samples: &[f64], fps: f64, cfg: &SpectralConfig) -> Spectrum {
    let t_len = samples.len();
    assert!(t_len >= 2, "spectrum needs at least 2 samples");
    assert!(
        cfg.pad_len >= t_len,
        "pad_len {} shorter than window of {t_len}",
        cfg.pad_len
    );
    let mean = samples.iter().sum::<f64>() / t_len as f64;
    let hann = hann_window(t_len);
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); cfg.pad_len];
    for (i, (s, w)) in samples.iter().zip(&hann).enumerate() {
        buf[i] = Complex::new((s - mean) * w, 0.0);
    }
    FftPlanner::new()
        .plan_fft_forward(cfg.pad_len)
        .process(&mut buf);
    let half = cfg.pad_len / 2;
    let freqs = (0..=half)
        .map(|k| k as f64 * fps / cfg.pad_len as f64)
        .collect();
    let mags = buf[..=half].iter().map(|c| c.norm()).collect();
    Spectrum {
        freqs,
        mags,
        pad_len: cfg.pad_len,
    }
}

/// In-band local maxima of the spectrum, parabolic-refined, strongest
/// first (ties toward lower frequency), truncated to `cfg.top_k`.
pub fn band_peaks(spectrum: &Spectrum, cfg: &SpectralConfig) -> Result<Vec<Peak>> {
    let no_peak = || Error::NoPeakInBand {
        lo_hz: cfg.band_low_hz,
        hi_hz: cfg.band_high_hz,
    };
    let in_band =
        |k: usize| spectrum.freqs[k] >= cfg.band_low_hz && spectrum.freqs[k] <= cfg.band_high_hz;
    let band_max = (0..spectrum.mags.len())
        .filter(|&k| in_band(k))
        .map(|k| spectrum.mags[k])
        .fold(f64::NEG_INFINITY, f64::max);
    if !band_max.is_finite() || band_max <= 0.0 {
        return Err(no_peak());
    }
    let floor = cfg.mag_floor_ratio * band_max;
    let mut peaks = Vec::new();
    for k in 1..spectrum.mags.len().saturating_sub(1) {
        if !in_band(k) {
            continue;
        }
        let (a, b, c) = (spectrum.mags[k - 1], spectrum.mags[k], spectrum.mags[k + 1]);
        if !(b > a && b >= c && b >= floor) {
            continue;
        }
        // Three-point parabolic refinement of the peak position.
        let denom = a - 2.0 * b + c;
        let (delta, interpolated) = if denom.abs() > 1e-30 {
            ((0.5 * (a - c) / denom).clamp(-0.5, 0.5), true)
        } else {
            (0.0, false)
        };
        let bin_hz = spectrum.freqs[1] - spectrum.freqs[0];
        let freq_hz = (spectrum.freqs[k] + delta * bin_hz).clamp(cfg.band_low_hz, cfg.band_high_hz);
        peaks.push(Peak {
            freq_hz,
            mag: b,
            interpolated,
        });
    }
    if peaks.is_empty() {
        return Err(no_peak());
    }
    peaks.sort_by(|p, q| {
        q.mag
            .partial_cmp(&p.mag)
            .unwrap()
            .then(p.freq_hz.partial_cmp(&q.freq_hz).unwrap())
    });
    peaks.truncate(cfg.top_k);
    Ok(peaks)
}

/// How a window's final heart rate was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HrSource {
    /// Strongest in-band peak, taken at face value (still windows, and
    /// every window when tracking is disabled).
    Argmax,
    /// Candidate peak selected by proximity to a still-window anchor.
    Tracked,
    /// No usable anchor or no candidate within the radius; strongest peak.
    Fallback,
}

impl HrSource {
    pub fn as_str(self) -> &'static str {
        match self {
            HrSource::Argmax => "argmax",
            HrSource::Tracked => "tracked",
            HrSource::Fallback => "fallback",
        }
    }
}

impl fmt::Display for HrSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HrSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(HrSource::Argmax),
            "tracked" => Ok(HrSource::Tracked),
            "fallback" => Ok(HrSource::Fallback),
            other => Err(Error::ConfigInvalid(format!("unknown hr source {other:?}"))),
        }
    }
}

/// Final heart-rate estimate for one analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrEstimate {
    pub window_index: usize,
    pub t_start_sec: f64,
    pub label: FrameLabel,
    pub hr_bpm: f64,
    pub source: HrSource,
}

/// Heart-rate estimates for every full window of a session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HrSeries {
    pub estimates: Vec<HrEstimate>,
}

impl HrSeries {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// Peak candidates of one window, ready for tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPeaks {
    pub label: FrameLabel,
    pub t_start_sec: f64,
    /// Non-empty, strongest first (as produced by [`band_peaks`]).
    pub peaks: Vec<Peak>,
}

impl WindowPeaks {
    fn top_bpm(&self) -> f64 {
        self.peaks[0].bpm()
    }
}

/// Per-window strongest peak, no tracking.
pub fn argmax_series(windows: &[WindowPeaks]) -> HrSeries {
    let estimates = windows
        .iter()
        .enumerate()
        .map(|(i, w)| HrEstimate {
            window_index: i,
            t_start_sec: w.t_start_sec,
            label: w.label,
            hr_bpm: w.top_bpm(),
            source: HrSource::Argmax,
        })
        .collect();
    HrSeries { estimates }
}

/// Tracking pass over a session's window peaks.
///
/// Still windows keep their strongest peak and act as anchors. Every other
/// window looks up its nearest still window (preceding preferred on
/// distance ties) and takes the candidate closest to that anchor's rate,
/// if it lies within `track_radius_bpm`; otherwise the strongest peak is
/// kept and the estimate is marked [`HrSource::Fallback`]. Sessions
/// without any still window fall back throughout.
pub fn track_hr(windows: &[WindowPeaks], cfg: &SpectralConfig) -> Result<HrSeries> {
    if windows.is_empty() {
        return Err(Error::EmptySession);
    }
    if windows.iter().any(|w| w.peaks.is_empty()) {
        return Err(Error::Invariant(
            "track_hr received a window without peaks".to_string(),
        ));
    }
    let anchors: Vec<(usize, f64)> = windows
        .iter()
        .enumerate()
        .filter(|(_, w)| w.label == FrameLabel::Still)
        .map(|(i, w)| (i, w.top_bpm()))
        .collect();
    let estimates = windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (hr_bpm, source) = if w.label == FrameLabel::Still {
                (w.top_bpm(), HrSource::Argmax)
            } else if anchors.is_empty() {
                (w.top_bpm(), HrSource::Fallback)
            } else {
                // Nearest anchor; on equal distance the earlier (and thus
                // preceding) window wins because ties keep the first hit.
                let mut anchor_bpm = anchors[0].1;
                let mut best_dist = usize::MAX;
                for &(ai, bpm) in &anchors {
                    let dist = ai.abs_diff(i);
                    if dist < best_dist {
                        best_dist = dist;
                        anchor_bpm = bpm;
                    }
                }
                // Candidate nearest the anchor rate; ties keep the first
                // (strongest) candidate.
                let mut cand = w.peaks[0].bpm();
                let mut cand_err = f64::INFINITY;
                for p in &w.peaks {
                    let err = (p.bpm() - anchor_bpm).abs();
                    if err < cand_err {
                        cand_err = err;
                        cand = p.bpm();
                    }
                }
                if cand_err <= cfg.track_radius_bpm {
                    (cand, HrSource::Tracked)
                } else {
                    (w.top_bpm(), HrSource::Fallback)
                }
            };
            HrEstimate {
                window_index: i,
                t_start_sec: w.t_start_sec,
                label: w.label,
                hr_bpm,
                source,
            }
        })
        .collect();
    Ok(HrSeries { estimates })
}

/// Shared front half of session estimation: label frames, extract one
/// pulse signal per full window, and reduce each to its peak candidates.
pub fn estimate_windows(trace: &SessionTrace, cfg: &PipelineConfig) -> Result<Vec<WindowPeaks>> {
    cfg.validate()?;
    if trace.frames.len() < cfg.window_len {
        return Err(Error::TraceTooShort {
            frames: trace.frames.len(),
            needed: cfg.window_len,
        });
    }
    let frame0 = &trace.frames[0];
    let rect = match cfg.roi_rect {
        Some(rect) => rect,
        None => face_rect(frame0, cfg.roi_margin)?,
    };
    let grid = grid_divide(rect, trace.n_subrois)?;
    let assignment = assign_landmarks(&grid, frame0);
    let labels = label_frames(trace, &cfg.resolved_labeler(&rect))?;
    let n_windows = trace.frames.len() / cfg.window_len;
    let mut windows = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let pw = extract_pulse(trace, &labels, &assignment, w, cfg.window_len)?;
        let spectrum = power_spectrum(&pw.samples, trace.fps, &cfg.spectral);
        let peaks = band_peaks(&spectrum, &cfg.spectral)?;
        windows.push(WindowPeaks {
            label: pw.label,
            t_start_sec: trace.frames[w * cfg.window_len].t_sec,
            peaks,
        });
    }
    Ok(windows)
}

/// Full adaptive pipeline for one session: noise-adaptive pulse
/// extraction per window plus still-anchored peak tracking.
pub fn estimate_session(trace: &SessionTrace, cfg: &PipelineConfig) -> Result<HrSeries> {
    track_hr(&estimate_windows(trace, cfg)?, &cfg.spectral)
}

/// Adaptive pulse extraction with plain per-window argmax (no tracking).
pub fn estimate_session_argmax(trace: &SessionTrace, cfg: &PipelineConfig) -> Result<HrSeries> {
    Ok(argmax_series(&estimate_windows(trace, cfg)?))
}
