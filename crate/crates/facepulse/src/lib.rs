//! Adaptive heart-rate estimation from facial-video pulse traces.
//!
//! The input is a session trace: per video frame, the mean green intensity
//! of `N` face sub-regions plus a handful of tracked landmarks (nose and
//! lips). Heart rate is estimated per 4-second window in four stages:
//!
//! 1. **Labeling** ([`labeler`]): each frame is classified as still,
//!    rigid head motion, or facial expression, from landmark kinematics.
//! 2. **Pulse extraction** ([`pulse`]): the window's sub-ROI signals are
//!    combined into one pulse signal with a rule chosen by the window's
//!    label — inverse-variance weighting when still, per-region
//!    head-motion regression when moving, and amplitude/movement
//!    down-weighting under expressions.
//! 3. **Spectral estimation** ([`spectral`]): windowed, zero-padded FFT;
//!    the rate is read off in-band peaks with parabolic refinement.
//! 4. **Tracking** ([`spectral`]): still windows anchor the plausible
//!    rate; noisy windows pick the nearby candidate peak instead of the
//!    globally strongest one.
//!
//! [`roi_grid`] derives the face box and sub-ROI grid from landmarks and
//! turns raw frames into traces; [`ingest`] reads and writes all on-disk
//! formats; [`synth`] generates seeded sessions with known ground truth
//! and controllable noise; [`bench`] compares methods over such corpora.

pub mod bench;
pub mod config;
pub mod error;
pub mod ingest;
pub mod labeler;
pub mod pulse;
pub mod roi_grid;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
