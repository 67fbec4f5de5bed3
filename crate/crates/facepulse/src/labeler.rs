//! Per-frame noise-type labeling from landmark kinematics.
//!
//! Two scores are computed for every frame from a short centered window of
//! landmark displacements, both normalized by a reference face width so
//! the thresholds are resolution-independent:
//!
//! * rigid score — mean frame-to-frame nose displacement; whole-head
//!   (rigid) motion moves the nose.
//! * non-rigid score — mean frame-to-frame displacement of the lip points
//!   relative to the nose; facial expressions deform the mouth region
//!   while leaving the nose in place.
//!
//! A frame is `Still` when both scores sit below their thresholds;
//! otherwise the score that exceeds its threshold by the larger factor
//! names the label, with ties going to `Motion`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::SessionTrace;

/// Dominant noise type of a frame (or of an analysis window).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameLabel {
    Still,
    Motion,
    Expression,
}

impl FrameLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameLabel::Still => "still",
            FrameLabel::Motion => "motion",
            FrameLabel::Expression => "expression",
        }
    }
}

impl fmt::Display for FrameLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "still" => Ok(FrameLabel::Still),
            "motion" => Ok(FrameLabel::Motion),
            "expression" => Ok(FrameLabel::Expression),
            other => Err(Error::ConfigInvalid(format!("unknown label {other:?}"))),
        }
    }
}

/// Tuning for the frame labeler.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelerConfig {
    /// Frames in the centered displacement window (odd; clipped at the
    /// trace edges).
    pub score_window: usize,
    /// Rigid-score threshold, in face-widths per frame.
    pub theta_motion: f64,
    /// Non-rigid-score threshold, in face-widths per frame.
    pub theta_expression: f64,
    /// Face width used to normalize pixel displacements. The session
    /// pipeline overwrites this with the derived face-box width unless an
    /// explicit value is configured.
    pub roi_width_ref: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            score_window: 13,
            theta_motion: 0.005,
            theta_expression: 0.003,
            roi_width_ref: 100.0,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.score_window == 0 || self.score_window.is_multiple_of(2) {
            return Err(Error::ConfigInvalid(format!(
                "score_window must be odd and >= 1, got {}",
                self.score_window
            )));
        }
        for (name, v) in [
            ("theta_motion", self.theta_motion),
            ("theta_expression", self.theta_expression),
            ("roi_width_ref", self.roi_width_ref),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::ConfigInvalid(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Labels plus the scores they were derived from, one entry per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    pub labels: Vec<FrameLabel>,
    pub rigid_scores: Vec<f64>,
    pub nonrigid_scores: Vec<f64>,
}

impl LabelTrack {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Frame-to-frame nose displacement magnitudes; 0 for the first frame.
fn nose_steps(trace: &SessionTrace) -> Vec<f64> {
    trace
        .frames
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            if t == 0 {
                0.0
            } else {
                frame.nose.distance(trace.frames[t - 1].nose)
            }
        })
        .collect()
}

/// Frame-to-frame displacement of the lips relative to the nose, averaged
/// over lip points; 0 for the first frame and for lipless traces.
fn lip_rel_steps(trace: &SessionTrace) -> Vec<f64> {
    trace
        .frames
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            if t == 0 || frame.lips.is_empty() {
                return 0.0;
            }
            let prev = &trace.frames[t - 1];
            let sum: f64 = frame
                .lips
                .iter()
                .zip(&prev.lips)
                .map(|(lip, lip_prev)| {
                    let rel = *lip - frame.nose;
                    let rel_prev = *lip_prev - prev.nose;
                    (rel - rel_prev).norm()
                })
                .sum();
            sum / frame.lips.len() as f64
        })
        .collect()
}

/// Mean of `series` over a window of `window` frames centered on `t`,
/// clipped at the series edges.
fn windowed_mean(series: &[f64], t: usize, window: usize) -> f64 {
    let half = window / 2;
    let lo = t.saturating_sub(half);
    let hi = (t + half).min(series.len() - 1);
    let slice = &series[lo..=hi];
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// Rigid-motion score of frame `t`: windowed mean nose displacement in
/// face-widths per frame.
pub fn rigid_score(trace: &SessionTrace, t: usize, cfg: &LabelerConfig) -> f64 {
    assert!(t < trace.frames.len(), "frame index out of range");
    windowed_mean(&nose_steps(trace), t, cfg.score_window) / cfg.roi_width_ref
}

/// Non-rigid (expression) score of frame `t`: windowed mean lip-vs-nose
/// relative displacement in face-widths per frame.
pub fn nonrigid_score(trace: &SessionTrace, t: usize, cfg: &LabelerConfig) -> f64 {
    assert!(t < trace.frames.len(), "frame index out of range");
    windowed_mean(&lip_rel_steps(trace), t, cfg.score_window) / cfg.roi_width_ref
}

/// Label decision for one frame given its two scores.
fn decide_label(rigid: f64, nonrigid: f64, cfg: &LabelerConfig) -> FrameLabel {
    if rigid < cfg.theta_motion && nonrigid < cfg.theta_expression {
        FrameLabel::Still
    } else if rigid / cfg.theta_motion >= nonrigid / cfg.theta_expression {
        FrameLabel::Motion
    } else {
        FrameLabel::Expression
    }
}

/// Labels every frame of the trace.
pub fn label_frames(trace: &SessionTrace, cfg: &LabelerConfig) -> Result<LabelTrack> {
    cfg.validate()?;
    let nose = nose_steps(trace);
    let lips = lip_rel_steps(trace);
    let n = trace.frames.len();
    let mut labels = Vec::with_capacity(n);
    let mut rigid_scores = Vec::with_capacity(n);
    let mut nonrigid_scores = Vec::with_capacity(n);
    for t in 0..n {
        let rigid = windowed_mean(&nose, t, cfg.score_window) / cfg.roi_width_ref;
        let nonrigid = windowed_mean(&lips, t, cfg.score_window) / cfg.roi_width_ref;
        labels.push(decide_label(rigid, nonrigid, cfg));
        rigid_scores.push(rigid);
        nonrigid_scores.push(nonrigid);
    }
    Ok(LabelTrack {
        labels,
        rigid_scores,
        nonrigid_scores,
    })
}

/// Collapses the frame labels of one analysis window to a single label:
/// `Still` when at least 80% of frames are still, otherwise the majority
/// non-still label with ties going to `Motion`.
pub fn window_label(labels: &[FrameLabel]) -> FrameLabel {
    assert!(!labels.is_empty(), "window_label needs at least one frame");
    let still = labels.iter().filter(|&&l| l == FrameLabel::Still).count();
    // still / len >= 0.8 without float rounding: 5 * still >= 4 * len.
    if 5 * still >= 4 * labels.len() {
        return FrameLabel::Still;
    }
    let motion = labels.iter().filter(|&&l| l == FrameLabel::Motion).count();
    let expression = labels
        .iter()
        .filter(|&&l| l == FrameLabel::Expression)
        .count();
    if motion >= expression {
        FrameLabel::Motion
    } else {
        FrameLabel::Expression
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FrameRecord, Point};
    use approx::assert_relative_eq;

    /// Trace whose nose and lips follow the given per-frame positions.
    fn trace_from_positions(noses: Vec<Point>, lips: Vec<Vec<Point>>) -> SessionTrace {
        let n_lips = lips[0].len();
        SessionTrace {
            fps: 25.0,
            n_subrois: 1,
            n_lips,
            frames: noses
                .into_iter()
                .zip(lips)
                .enumerate()
                .map(|(i, (nose, lips))| FrameRecord {
                    frame_index: i,
                    t_sec: i as f64 / 25.0,
                    nose,
                    lips,
                    greens: vec![128.0],
                })
                .collect(),
        }
    }

    fn static_lips() -> Vec<Point> {
        vec![Point::new(90.0, 130.0), Point::new(110.0, 130.0)]
    }

    #[test]
    fn static_trace_is_all_still_with_zero_scores() {
        let n = 30;
        let trace = trace_from_positions(vec![Point::new(100.0, 100.0); n], vec![static_lips(); n]);
        let track = label_frames(&trace, &LabelerConfig::default()).unwrap();
        assert!(track.labels.iter().all(|&l| l == FrameLabel::Still));
        assert!(track.rigid_scores.iter().all(|&s| s == 0.0));
        assert!(track.nonrigid_scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn steady_nose_displacement_gives_expected_score() {
        // Nose moves 0.8 px/frame (dx=0.48, dy=0.64); with a 100 px
        // reference width the steady-state rigid score is 0.008.
        let n = 40;
        let noses: Vec<Point> = (0..n)
            .map(|t| Point::new(100.0 + 0.48 * t as f64, 100.0 + 0.64 * t as f64))
            .collect();
        let lips: Vec<Vec<Point>> = noses
            .iter()
            .map(|nose| {
                vec![
                    Point::new(nose.x - 10.0, nose.y + 30.0),
                    Point::new(nose.x + 10.0, nose.y + 30.0),
                ]
            })
            .collect();
        let trace = trace_from_positions(noses, lips);
        let cfg = LabelerConfig::default();
        assert_relative_eq!(rigid_score(&trace, 20, &cfg), 0.008, max_relative = 1e-12);
        // Lips ride along with the nose: no relative motion.
        assert!(nonrigid_score(&trace, 20, &cfg) < 1e-15);
        let track = label_frames(&trace, &cfg).unwrap();
        assert_eq!(track.labels[20], FrameLabel::Motion);
    }

    #[test]
    fn edge_window_is_clipped_not_padded() {
        // Steps: 0 at frame 0, then 1 px/frame. At t=0 the centered
        // 13-frame window clips to frames 0..=6, whose mean step is 6/7.
        let n = 30;
        let noses: Vec<Point> = (0..n).map(|t| Point::new(t as f64, 0.0)).collect();
        let lips: Vec<Vec<Point>> = noses
            .iter()
            .map(|nose| {
                vec![
                    Point::new(nose.x, nose.y + 20.0),
                    Point::new(nose.x + 5.0, nose.y + 20.0),
                ]
            })
            .collect();
        let trace = trace_from_positions(noses, lips);
        let cfg = LabelerConfig::default();
        assert_relative_eq!(
            rigid_score(&trace, 0, &cfg),
            (6.0 / 7.0) / 100.0,
            max_relative = 1e-12
        );
        // Interior frames see thirteen 1 px steps.
        assert_relative_eq!(rigid_score(&trace, 15, &cfg), 0.01, max_relative = 1e-12);
    }

    #[test]
    fn lip_only_motion_is_expression() {
        // Nose fixed; lips drift apart 0.4 px/frame relative to the nose.
        let n = 40;
        let noses = vec![Point::new(100.0, 100.0); n];
        let lips: Vec<Vec<Point>> = (0..n)
            .map(|t| {
                vec![
                    Point::new(90.0 - 0.4 * t as f64, 130.0),
                    Point::new(110.0 + 0.4 * t as f64, 130.0),
                ]
            })
            .collect();
        let trace = trace_from_positions(noses, lips);
        let cfg = LabelerConfig::default();
        assert_relative_eq!(
            nonrigid_score(&trace, 20, &cfg),
            0.004,
            max_relative = 1e-12
        );
        assert!(rigid_score(&trace, 20, &cfg) < 1e-15);
        let track = label_frames(&trace, &cfg).unwrap();
        assert_eq!(track.labels[20], FrameLabel::Expression);
    }

    #[test]
    fn threshold_ratio_tie_goes_to_motion() {
        let cfg = LabelerConfig::default();
        // Both scores at exactly twice their thresholds.
        assert_eq!(decide_label(0.010, 0.006, &cfg), FrameLabel::Motion);
        // Expression wins only when its ratio is strictly larger.
        assert_eq!(decide_label(0.010, 0.0061, &cfg), FrameLabel::Expression);
        assert_eq!(decide_label(0.011, 0.006, &cfg), FrameLabel::Motion);
        // Below both thresholds: still, regardless of ratios.
        assert_eq!(decide_label(0.0049, 0.0029, &cfg), FrameLabel::Still);
    }

    #[test]
    fn window_label_boundaries() {
        use FrameLabel::{Expression, Motion, Still};
        let mut labels = vec![Still; 80];
        labels.extend(vec![Motion; 20]);
        // Exactly 80% still is still.
        assert_eq!(window_label(&labels), Still);
        labels[0] = Motion;
        // 79% still: majority non-still label wins.
        assert_eq!(window_label(&labels), Motion);
        let mut mixed = vec![Still; 10];
        mixed.extend(vec![Motion; 45]);
        mixed.extend(vec![Expression; 45]);
        // Non-still tie resolves to motion.
        assert_eq!(window_label(&mixed), Motion);
        mixed[10] = Expression;
        assert_eq!(window_label(&mixed), Expression);
        assert_eq!(window_label(&[Expression]), Expression);
    }

    #[test]
    fn config_validation_rejects_even_window_and_bad_thresholds() {
        let mut cfg = LabelerConfig {
            score_window: 12,
            ..LabelerConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.score_window = 13;
        cfg.theta_motion = 0.0;
        assert!(cfg.validate().is_err());
        cfg.theta_motion = 0.005;
        cfg.roi_width_ref = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn label_strings_roundtrip() {
        for label in [
            FrameLabel::Still,
            FrameLabel::Motion,
            FrameLabel::Expression,
        ] {
            assert_eq!(label.as_str().parse::<FrameLabel>().unwrap(), label);
        }
        assert!("blink".parse::<FrameLabel>().is_err());
    }
}
