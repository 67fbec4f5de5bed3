//! Label-dependent pulse extraction: collapses the per-sub-ROI green
//! traces of one analysis window into a single pulse signal.
//!
//! All three combination rules share the same shape — a weighted sum over
//! sub-ROIs of mean-removed green traces — and differ in how they defend
//! against the window's dominant noise type:
//!
//! * still: inverse-variance weights, so noisy cells contribute little;
//! * motion: each cell is first orthogonalized against the head-motion
//!   signal (the nose trajectory projected on its dominant axis), removing
//!   the intensity component that covaries with head movement;
//! * expression: each cell is divided by its peak landmark movement, and
//!   inverse-amplitude weights drive deforming cells toward zero.
//!
//! Weights are always positive and normalized to sum to 1, so the output
//! amplitude is comparable across rules.

use crate::error::{Error, Result};
use crate::ingest::{FrameRecord, SessionTrace};
use crate::labeler::{window_label, FrameLabel, LabelTrack};
use crate::roi_grid::{movement_series, LandmarkAssignment};

/// Stabilizer added to variance / amplitude denominators so that perfectly
/// clean cells cannot produce infinite weights.
pub const WEIGHT_EPS: f64 = 1e-8;

/// Floor (px/frame) for the per-cell movement divisor in the expression
/// rule; cells that never move are left unscaled rather than amplified.
pub const MOVEMENT_FLOOR_PX: f64 = 0.1;

/// Below this energy the head-motion signal is treated as absent and the
/// motion rule degrades to the still rule.
const H_ENERGY_FLOOR: f64 = 1e-12;

/// Green traces of one analysis window, one row per sub-ROI, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SubRoiMatrix {
    n_subrois: usize,
    window_len: usize,
    data: Vec<f64>,
}

impl SubRoiMatrix {
    /// Builds a matrix from per-sub-ROI rows, which must all share one
    /// length.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let window_len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != window_len) {
            return Err(Error::DimensionMismatch {
                detail: "sub-ROI rows differ in length".to_string(),
            });
        }
        Ok(Self {
            n_subrois: rows.len(),
            window_len,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Copies window `start..start+len` of the trace's green channels.
    pub fn from_trace_window(trace: &SessionTrace, start: usize, len: usize) -> Result<Self> {
        if start + len > trace.frames.len() {
            return Err(Error::DimensionMismatch {
                detail: format!(
                    "window {start}..{} exceeds trace of {} frames",
                    start + len,
                    trace.frames.len()
                ),
            });
        }
        let mut data = Vec::with_capacity(trace.n_subrois * len);
        for r in 0..trace.n_subrois {
            data.extend(trace.frames[start..start + len].iter().map(|f| f.greens[r]));
        }
        Ok(Self {
            n_subrois: trace.n_subrois,
            window_len: len,
            data,
        })
    }

    pub fn n_subrois(&self) -> usize {
        self.n_subrois
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.window_len..(r + 1) * self.window_len]
    }

    /// Removes each row's mean, centering every sub-ROI trace on zero.
    pub fn remove_row_means(&mut self) {
        for r in 0..self.n_subrois {
            let row = &mut self.data[r * self.window_len..(r + 1) * self.window_len];
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            for v in row.iter_mut() {
                *v -= mean;
            }
        }
    }
}

fn population_variance(row: &[f64]) -> f64 {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64
}

fn normalize(mut weights: Vec<f64>) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    weights
}

/// Inverse-variance weights, positive and summing to 1.
pub fn variance_weights(m: &SubRoiMatrix) -> Vec<f64> {
    normalize(
        (0..m.n_subrois)
            .map(|r| 1.0 / (population_variance(m.row(r)) + WEIGHT_EPS))
            .collect(),
    )
}

/// Inverse peak-amplitude weights, positive and summing to 1.
pub fn amplitude_weights(m: &SubRoiMatrix) -> Vec<f64> {
    normalize(
        (0..m.n_subrois)
            .map(|r| {
                let peak = m.row(r).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                1.0 / (peak + WEIGHT_EPS)
            })
            .collect(),
    )
}

/// Head-motion signal of a window: nose positions projected onto their
/// dominant axis (largest-eigenvalue direction of the 2x2 position
/// covariance), mean-removed. All zeros when the nose does not move.
pub fn head_motion_signal(frames: &[FrameRecord]) -> Vec<f64> {
    let t_len = frames.len();
    if t_len == 0 {
        return Vec::new();
    }
    let mx = frames.iter().map(|f| f.nose.x).sum::<f64>() / t_len as f64;
    let my = frames.iter().map(|f| f.nose.y).sum::<f64>() / t_len as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for f in frames {
        let dx = f.nose.x - mx;
        let dy = f.nose.y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    sxx /= t_len as f64;
    sxy /= t_len as f64;
    syy /= t_len as f64;
    let lambda = 0.5 * (sxx + syy) + (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    if lambda < H_ENERGY_FLOOR {
        return vec![0.0; t_len];
    }
    // Eigenvector for lambda; of the two algebraic forms, the longer one
    // is numerically safest. Sign is fixed so results are deterministic.
    let (mut vx, mut vy) = {
        let a = (lambda - syy, sxy);
        let b = (sxy, lambda - sxx);
        if a.0 * a.0 + a.1 * a.1 >= b.0 * b.0 + b.1 * b.1 {
            a
        } else {
            b
        }
    };
    let norm = vx.hypot(vy);
    vx /= norm;
    vy /= norm;
    if vx < 0.0 || (vx == 0.0 && vy < 0.0) {
        vx = -vx;
        vy = -vy;
    }
    let mut h: Vec<f64> = frames
        .iter()
        .map(|f| (f.nose.x - mx) * vx + (f.nose.y - my) * vy)
        .collect();
    let hm = h.iter().sum::<f64>() / t_len as f64;
    for v in &mut h {
        *v -= hm;
    }
    h
}

/// Least-squares coefficient of `h` in `g` (minimizes `|g - alpha*h|^2`);
/// 0 when `h` carries no energy.
pub fn fit_alpha(g: &[f64], h: &[f64]) -> f64 {
    debug_assert_eq!(g.len(), h.len());
    let hh: f64 = h.iter().map(|v| v * v).sum();
    if hh < H_ENERGY_FLOOR {
        return 0.0;
    }
    let gh: f64 = g.iter().zip(h).map(|(a, b)| a * b).sum();
    gh / hh
}

fn check_weights(m: &SubRoiMatrix, weights: &[f64]) -> Result<()> {
    if weights.len() != m.n_subrois {
        return Err(Error::DimensionMismatch {
            detail: format!("{} weights for {} sub-ROIs", weights.len(), m.n_subrois),
        });
    }
    Ok(())
}

/// Still rule: plain weighted sum of the (mean-removed) rows.
pub fn combine_still(m: &SubRoiMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    check_weights(m, weights)?;
    let mut out = vec![0.0; m.window_len];
    for (r, &wr) in weights.iter().enumerate() {
        let row = m.row(r);
        for (o, v) in out.iter_mut().zip(row) {
            *o += wr * v;
        }
    }
    Ok(out)
}

/// Motion rule: weighted sum of rows orthogonalized against the
/// head-motion signal (`row - alpha_r * h`). With `h == 0` and
/// `alphas == 0` this reduces exactly to the still rule.
pub fn combine_motion(
    m: &SubRoiMatrix,
    weights: &[f64],
    h: &[f64],
    alphas: &[f64],
) -> Result<Vec<f64>> {
    check_weights(m, weights)?;
    if h.len() != m.window_len || alphas.len() != m.n_subrois {
        return Err(Error::DimensionMismatch {
            detail: "head-motion signal or alphas do not match the window".to_string(),
        });
    }
    let mut out = vec![0.0; m.window_len];
    for r in 0..m.n_subrois {
        let row = m.row(r);
        for t in 0..m.window_len {
            out[t] += weights[r] * (row[t] - alphas[r] * h[t]);
        }
    }
    Ok(out)
}

/// Expression rule: rows are divided by their peak landmark movement
/// (floored at [`MOVEMENT_FLOOR_PX`]) before the weighted sum, so cells on
/// deforming regions are attenuated in proportion to how much they moved.
pub fn combine_expression(
    m: &SubRoiMatrix,
    weights: &[f64],
    movement_peaks: &[f64],
) -> Result<Vec<f64>> {
    check_weights(m, weights)?;
    if movement_peaks.len() != m.n_subrois {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "{} movement peaks for {} sub-ROIs",
                movement_peaks.len(),
                m.n_subrois
            ),
        });
    }
    let mut out = vec![0.0; m.window_len];
    for r in 0..m.n_subrois {
        let scale = weights[r] / movement_peaks[r].max(MOVEMENT_FLOOR_PX);
        let row = m.row(r);
        for (o, v) in out.iter_mut().zip(row) {
            *o += scale * v;
        }
    }
    Ok(out)
}

/// Pulse signal of one analysis window, tagged with the label that chose
/// the combination rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseWindow {
    pub window_index: usize,
    pub label: FrameLabel,
    pub samples: Vec<f64>,
}

/// Extracts the pulse signal of window `window_index` (windows are
/// consecutive, non-overlapping runs of `window_len` frames).
///
/// The window's frame labels are collapsed to one window label, which
/// selects the combination rule applied to the mean-removed green matrix.
pub fn extract_pulse(
    trace: &SessionTrace,
    labels: &LabelTrack,
    assignment: &LandmarkAssignment,
    window_index: usize,
    window_len: usize,
) -> Result<PulseWindow> {
    if labels.len() != trace.frames.len() {
        return Err(Error::DimensionMismatch {
            detail: format!("{} labels for {} frames", labels.len(), trace.frames.len()),
        });
    }
    if assignment.owner.len() != trace.n_subrois {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "{} assigned sub-ROIs, trace has {}",
                assignment.owner.len(),
                trace.n_subrois
            ),
        });
    }
    let available = trace.frames.len() / window_len.max(1);
    if window_len == 0 || window_index >= available {
        return Err(Error::WindowOutOfRange {
            index: window_index,
            available,
        });
    }
    let start = window_index * window_len;
    let frames = &trace.frames[start..start + window_len];
    let mut m = SubRoiMatrix::from_trace_window(trace, start, window_len)?;
    m.remove_row_means();
    let label = window_label(&labels.labels[start..start + window_len]);
    let samples = match label {
        FrameLabel::Still => combine_still(&m, &variance_weights(&m))?,
        FrameLabel::Motion => {
            let h = head_motion_signal(frames);
            let alphas: Vec<f64> = (0..m.n_subrois())
                .map(|r| fit_alpha(m.row(r), &h))
                .collect();
            combine_motion(&m, &variance_weights(&m), &h, &alphas)?
        }
        FrameLabel::Expression => {
            let peaks: Vec<f64> = (0..m.n_subrois())
                .map(|r| {
                    movement_series(frames, assignment, r)
                        .into_iter()
                        .fold(0.0f64, f64::max)
                })
                .collect();
            combine_expression(&m, &amplitude_weights(&m), &peaks)?
        }
    };
    Ok(PulseWindow {
        window_index,
        label,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Point;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn matrix(rows: Vec<Vec<f64>>) -> SubRoiMatrix {
        SubRoiMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn variance_weights_match_hand_computation() {
        // Row variances are exactly 1 and 4 (zero-mean square waves).
        let m = matrix(vec![vec![1.0, -1.0, 1.0, -1.0], vec![2.0, -2.0, 2.0, -2.0]]);
        let w = variance_weights(&m);
        let raw = [1.0 / (1.0 + WEIGHT_EPS), 1.0 / (4.0 + WEIGHT_EPS)];
        let sum = raw[0] + raw[1];
        assert_eq!(w, vec![raw[0] / sum, raw[1] / sum]);
    }

    #[test]
    fn amplitude_weights_match_hand_computation() {
        let m = matrix(vec![vec![0.5, -1.0, 0.25], vec![3.0, -0.5, 0.0]]);
        let w = amplitude_weights(&m);
        let raw = [1.0 / (1.0 + WEIGHT_EPS), 1.0 / (3.0 + WEIGHT_EPS)];
        let sum = raw[0] + raw[1];
        assert_eq!(w, vec![raw[0] / sum, raw[1] / sum]);
    }

    #[test]
    fn variance_weights_collapse_onto_the_quiet_row() {
        // Row variances 1e-4 and 100: the weight ratio is their inverse
        // ratio, about 1e6, so the noisy row is effectively muted.
        let m = matrix(vec![
            vec![0.01, -0.01, 0.01, -0.01],
            vec![10.0, -10.0, 10.0, -10.0],
        ]);
        let w = variance_weights(&m);
        let want_ratio = (100.0 + WEIGHT_EPS) / (1e-4 + WEIGHT_EPS);
        assert_relative_eq!(w[0] / w[1], want_ratio, max_relative = 1e-12);
        assert!(w[0] > 0.99999);
    }

    #[test]
    fn equal_rows_get_uniform_weights() {
        let m = matrix(vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0]]);
        for w in [variance_weights(&m), amplitude_weights(&m)] {
            for v in w {
                assert_relative_eq!(v, 1.0 / 3.0, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn fit_alpha_recovers_exact_coefficient() {
        // g = 3h + c with c orthogonal to h, so least squares gives 3.
        let h = vec![1.0, -1.0, 1.0, -1.0];
        let g: Vec<f64> = h.iter().map(|v| 3.0 * v + 1.0).collect();
        assert_relative_eq!(fit_alpha(&g, &h), 3.0, max_relative = 1e-14);
    }

    #[test]
    fn fit_alpha_of_silent_motion_is_zero() {
        assert_eq!(fit_alpha(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn motion_rule_with_zero_h_equals_still_rule() {
        let mut m = matrix(vec![
            vec![128.5, 127.25, 129.0, 128.0],
            vec![100.0, 101.5, 99.75, 100.5],
            vec![80.0, 80.125, 79.875, 80.0],
        ]);
        m.remove_row_means();
        let w = variance_weights(&m);
        let h = vec![0.0; 4];
        let alphas = vec![0.0; 3];
        let still = combine_still(&m, &w).unwrap();
        let motion = combine_motion(&m, &w, &h, &alphas).unwrap();
        assert_eq!(still, motion); // bitwise: x - 0*0 is exactly x
    }

    #[test]
    fn motion_rule_removes_head_motion_component() {
        // One sub-ROI whose trace is a*h + b*p with p orthogonal to h; the
        // residual must be exactly b*p, i.e. orthogonal to h.
        let h: Vec<f64> = (0..8)
            .map(|t| if t % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let p: Vec<f64> = (0..8)
            .map(|t| if (t / 2) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert_eq!(h.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>(), 0.0);
        let row: Vec<f64> = h.iter().zip(&p).map(|(a, b)| 2.5 * a + 0.75 * b).collect();
        let m = matrix(vec![row]);
        let alpha = fit_alpha(m.row(0), &h);
        assert_relative_eq!(alpha, 2.5, max_relative = 1e-14);
        let out = combine_motion(&m, &[1.0], &h, &[alpha]).unwrap();
        let resid_dot_h: f64 = out.iter().zip(&h).map(|(a, b)| a * b).sum();
        assert!(resid_dot_h.abs() < 1e-12);
        for (o, want) in out.iter().zip(p.iter().map(|v| 0.75 * v)) {
            assert_relative_eq!(*o, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn head_motion_signal_recovers_projection() {
        // Nose slides along direction (0.6, 0.8); the dominant axis is that
        // direction, so h equals the mean-removed slide amplitude.
        let amp: Vec<f64> = (0..16).map(|t| (t as f64 * 0.7).sin() * 3.0).collect();
        let frames: Vec<FrameRecord> = amp
            .iter()
            .enumerate()
            .map(|(t, &s)| FrameRecord {
                frame_index: t,
                t_sec: t as f64,
                nose: Point::new(100.0 + 0.6 * s, 50.0 + 0.8 * s),
                lips: Vec::new(),
                greens: Vec::new(),
            })
            .collect();
        let h = head_motion_signal(&frames);
        let mean = amp.iter().sum::<f64>() / amp.len() as f64;
        for (got, s) in h.iter().zip(&amp) {
            assert_relative_eq!(*got, s - mean, epsilon = 1e-9);
        }
        let hm: f64 = h.iter().sum::<f64>() / h.len() as f64;
        assert!(hm.abs() <= 1e-9 * h.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }

    #[test]
    fn head_motion_signal_of_static_nose_is_zero() {
        let frames: Vec<FrameRecord> = (0..5)
            .map(|t| FrameRecord {
                frame_index: t,
                t_sec: t as f64,
                nose: Point::new(320.0, 220.0),
                lips: Vec::new(),
                greens: Vec::new(),
            })
            .collect();
        assert_eq!(head_motion_signal(&frames), vec![0.0; 5]);
    }

    #[test]
    fn expression_rule_applies_movement_floor() {
        let mut m = matrix(vec![vec![2.0, -2.0], vec![4.0, -4.0]]);
        m.remove_row_means();
        // First cell never moves (floored divisor 0.1); second moved 2 px.
        let out = combine_expression(&m, &[0.5, 0.5], &[0.0, 2.0]).unwrap();
        // 0.5 * (2/-2)/0.1 + 0.5 * (4/-4)/2 = (10 + 1) * (1/-1)
        assert_relative_eq!(out[0], 11.0, max_relative = 1e-12);
        assert_relative_eq!(out[1], -11.0, max_relative = 1e-12);
    }

    #[test]
    fn motion_rule_beats_still_rule_under_rank_one_coupling() {
        use std::f64::consts::PI;

        // Every row is pulse + c_r * h with the coupling several times the
        // pulse amplitude. The still rule keeps a weighted average of the
        // coupling; the motion rule regresses it away row by row.
        let len = 100;
        let pulse: Vec<f64> = (0..len)
            .map(|t| 0.5 * (2.0 * PI * 1.2 * t as f64 / 25.0).sin())
            .collect();
        let mut h: Vec<f64> = (0..len)
            .map(|t| {
                let s = t as f64 / 25.0;
                2.0 * (2.0 * PI * 0.9 * s).sin() + (2.0 * PI * 1.6 * s + 0.7).cos()
            })
            .collect();
        let hm = h.iter().sum::<f64>() / len as f64;
        for v in &mut h {
            *v -= hm;
        }

        let couplings = [0.5, 0.625, 0.75, 0.875, 1.0, 1.125, 1.25, 1.375];
        let mut m = matrix(
            couplings
                .iter()
                .map(|c| pulse.iter().zip(&h).map(|(p, hv)| p + c * hv).collect())
                .collect(),
        );
        m.remove_row_means();

        let w = variance_weights(&m);
        let still = combine_still(&m, &w).unwrap();
        let alphas: Vec<f64> = (0..couplings.len())
            .map(|r| fit_alpha(m.row(r), &h))
            .collect();
        let motion = combine_motion(&m, &w, &h, &alphas).unwrap();

        // RMS deviation from the (mean-removed) pulse everyone shares.
        let pm = pulse.iter().sum::<f64>() / len as f64;
        let rms_err = |out: &[f64]| {
            (out.iter()
                .zip(&pulse)
                .map(|(o, p)| (o - (p - pm)).powi(2))
                .sum::<f64>()
                / len as f64)
                .sqrt()
        };
        let (e_still, e_motion) = (rms_err(&still), rms_err(&motion));
        assert!(e_still > 1.0, "coupling too weak to matter: {e_still}");
        assert!(
            e_motion < 0.2 * e_still,
            "motion rule {e_motion} vs still rule {e_still}"
        );
    }

    #[test]
    fn amplitude_weights_mute_bursty_rows_for_the_expression_rule() {
        use std::f64::consts::PI;

        // Nine calm rows carry the pulse; one adds an 80x burst from a
        // moving landmark cell. Amplitude weighting and the movement
        // divisor both act on that row, so the expression output stays
        // pulse-shaped while a uniform average follows the burst.
        let len = 100;
        let pulse: Vec<f64> = (0..len)
            .map(|t| 0.5 * (2.0 * PI * 1.2 * t as f64 / 25.0).sin())
            .collect();
        let mut rows: Vec<Vec<f64>> = vec![pulse.clone(); 9];
        rows.push(
            pulse
                .iter()
                .enumerate()
                .map(|(t, p)| {
                    let burst = if (30..45).contains(&t) {
                        40.0 * (2.0 * PI * 3.0 * t as f64 / 25.0).sin()
                    } else {
                        0.0
                    };
                    p + burst
                })
                .collect(),
        );
        let mut m = matrix(rows);
        m.remove_row_means();

        let mut peaks = vec![0.0; 10];
        peaks[9] = 5.0;
        let expr = combine_expression(&m, &amplitude_weights(&m), &peaks).unwrap();
        let uniform = combine_still(&m, &[0.1; 10]).unwrap();

        let pm = pulse.iter().sum::<f64>() / len as f64;
        let shape: Vec<f64> = pulse.iter().map(|p| p - pm).collect();
        let corr = |out: &[f64]| {
            let dot: f64 = out.iter().zip(&shape).map(|(a, b)| a * b).sum();
            let na = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = shape.iter().map(|v| v * v).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        assert!(corr(&expr) > 0.999, "expression corr {}", corr(&expr));
        assert!(corr(&uniform) < 0.5, "uniform corr {}", corr(&uniform));
    }

    #[test]
    fn weight_helpers_reject_wrong_arity() {
        let m = matrix(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(matches!(
            combine_still(&m, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            combine_motion(&m, &[0.5, 0.5], &[0.0], &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            combine_expression(&m, &[0.5, 0.5], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn still_trace(n_frames: usize) -> (SessionTrace, LabelTrack, LandmarkAssignment) {
        let frames: Vec<FrameRecord> = (0..n_frames)
            .map(|t| FrameRecord {
                frame_index: t,
                t_sec: t as f64 / 25.0,
                nose: Point::new(100.0, 100.0),
                lips: vec![Point::new(90.0, 130.0), Point::new(110.0, 130.0)],
                greens: vec![
                    128.0 + (t as f64 * 0.3).sin(),
                    127.0 + (t as f64 * 0.3).cos() * 0.5,
                ],
            })
            .collect();
        let trace = SessionTrace {
            fps: 25.0,
            n_subrois: 2,
            n_lips: 2,
            frames,
        };
        let labels = crate::labeler::label_frames(&trace, &Default::default()).unwrap();
        let assignment = LandmarkAssignment { owner: vec![0, 1] };
        (trace, labels, assignment)
    }

    #[test]
    fn still_window_dispatch_matches_manual_path_bitwise() {
        let (trace, labels, assignment) = still_trace(20);
        let pw = extract_pulse(&trace, &labels, &assignment, 1, 10).unwrap();
        assert_eq!(pw.label, FrameLabel::Still);
        let mut m = SubRoiMatrix::from_trace_window(&trace, 10, 10).unwrap();
        m.remove_row_means();
        let manual = combine_still(&m, &variance_weights(&m)).unwrap();
        assert_eq!(pw.samples, manual);
    }

    #[test]
    fn window_past_end_is_rejected() {
        let (trace, labels, assignment) = still_trace(20);
        match extract_pulse(&trace, &labels, &assignment, 2, 10) {
            Err(Error::WindowOutOfRange {
                index: 2,
                available: 2,
            }) => {}
            other => panic!("expected WindowOutOfRange, got {other:?}"),
        }
    }

    proptest! {
        // Weights are positive, sum to 1, and order inversely with their
        // statistic for any input matrix.
        #[test]
        fn prop_weights_are_normalized_and_ordered(
            rows in proptest::collection::vec(
                proptest::collection::vec(-50.0f64..50.0, 6),
                1..6,
            )
        ) {
            let m = matrix(rows);
            for weights in [variance_weights(&m), amplitude_weights(&m)] {
                prop_assert!(weights.iter().all(|&w| w > 0.0));
                let sum: f64 = weights.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
            let w = variance_weights(&m);
            let vars: Vec<f64> = (0..m.n_subrois()).map(|r| population_variance(m.row(r))).collect();
            for i in 0..vars.len() {
                for j in 0..vars.len() {
                    if vars[i] < vars[j] {
                        prop_assert!(w[i] >= w[j]);
                    }
                }
            }
        }

        // The motion-rule residual of a single cell is orthogonal to h.
        #[test]
        fn prop_motion_residual_orthogonal(
            row in proptest::collection::vec(-10.0f64..10.0, 16),
            hseed in proptest::collection::vec(-5.0f64..5.0, 16),
        ) {
            let hmean = hseed.iter().sum::<f64>() / hseed.len() as f64;
            let h: Vec<f64> = hseed.iter().map(|v| v - hmean).collect();
            let hh: f64 = h.iter().map(|v| v * v).sum();
            // Below the energy floor alpha is pinned to 0 and nothing is
            // removed, so orthogonality only holds for live signals.
            prop_assume!(hh > 1e-6);
            let m = matrix(vec![row]);
            let alpha = fit_alpha(m.row(0), &h);
            let out = combine_motion(&m, &[1.0], &h, &[alpha]).unwrap();
            let dot: f64 = out.iter().zip(&h).map(|(a, b)| a * b).sum();
            let gg: f64 = m.row(0).iter().map(|v| v * v).sum();
            prop_assert!(dot.abs() <= 1e-9 * (hh * gg).sqrt().max(1e-9));
        }
    }
}
