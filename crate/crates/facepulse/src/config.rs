//! Pipeline configuration and the flat `key=value` config-file format.
//!
//! Config files hold one `key=value` pair per line; blank lines and lines
//! starting with `#` are ignored, and a trailing `# comment` after the
//! value is stripped. Keys may repeat only where documented (the synthetic
//! generator's `segment` key); command-line flags are applied after the
//! file and override it.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labeler::LabelerConfig;
use crate::roi_grid::{Rect, DEFAULT_ROI_MARGIN};
use crate::spectral::SpectralConfig;

/// Frames per analysis window (4 s at 25 fps).
pub const DEFAULT_WINDOW_LEN: usize = 100;

/// Settings for the full per-session estimation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Frames per non-overlapping analysis window.
    pub window_len: usize,
    /// Margin (fraction of the landmark x-span) around the face box.
    pub roi_margin: f64,
    /// Explicit face box override; skips landmark-based derivation.
    pub roi_rect: Option<Rect>,
    /// When true, the labeler's reference width is replaced by the width
    /// of the face box actually used for the session.
    pub derive_roi_width: bool,
    pub labeler: LabelerConfig,
    pub spectral: SpectralConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_len: DEFAULT_WINDOW_LEN,
            roi_margin: DEFAULT_ROI_MARGIN,
            roi_rect: None,
            derive_roi_width: true,
            labeler: LabelerConfig::default(),
            spectral: SpectralConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::ConfigInvalid(format!(
                "window_len must be >= 2, got {}",
                self.window_len
            )));
        }
        if !self.roi_margin.is_finite() || self.roi_margin < 0.0 {
            return Err(Error::ConfigInvalid(format!(
                "roi_margin must be finite and >= 0, got {}",
                self.roi_margin
            )));
        }
        if let Some(rect) = &self.roi_rect {
            if rect.w == 0 || rect.h == 0 {
                return Err(Error::ConfigInvalid(
                    "roi_rect must have positive width and height".to_string(),
                ));
            }
        }
        self.labeler.validate()?;
        self.spectral.validate()?;
        if self.spectral.pad_len < self.window_len {
            return Err(Error::ConfigInvalid(format!(
                "pad_len {} shorter than window_len {}",
                self.spectral.pad_len, self.window_len
            )));
        }
        Ok(())
    }

    /// Labeler settings for a session whose face box is `rect`: the
    /// reference width follows the box unless explicitly configured.
    pub fn resolved_labeler(&self, rect: &Rect) -> LabelerConfig {
        let mut cfg = self.labeler.clone();
        if self.derive_roi_width {
            cfg.roi_width_ref = f64::from(rect.w);
        }
        cfg
    }

    /// Applies one config key. Returns `Ok(false)` for unknown keys so
    /// callers can layer their own keys on top.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "window_len" => self.window_len = parse_usize(key, value)?,
            "roi_margin" => self.roi_margin = parse_f64(key, value)?,
            "roi_rect" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 4 {
                    return Err(Error::ConfigInvalid(format!(
                        "roi_rect wants x0,y0,w,h, got {value:?}"
                    )));
                }
                self.roi_rect = Some(Rect::new(
                    parse_i64("roi_rect.x0", parts[0])?,
                    parse_i64("roi_rect.y0", parts[1])?,
                    parse_u32("roi_rect.w", parts[2])?,
                    parse_u32("roi_rect.h", parts[3])?,
                ));
            }
            "roi_width_ref" => {
                self.labeler.roi_width_ref = parse_f64(key, value)?;
                self.derive_roi_width = false;
            }
            "score_window" => self.labeler.score_window = parse_usize(key, value)?,
            "theta_motion" => self.labeler.theta_motion = parse_f64(key, value)?,
            "theta_expression" => self.labeler.theta_expression = parse_f64(key, value)?,
            "band_low_hz" => self.spectral.band_low_hz = parse_f64(key, value)?,
            "band_high_hz" => self.spectral.band_high_hz = parse_f64(key, value)?,
            "pad_len" => self.spectral.pad_len = parse_usize(key, value)?,
            "top_k" => self.spectral.top_k = parse_usize(key, value)?,
            "mag_floor_ratio" => self.spectral.mag_floor_ratio = parse_f64(key, value)?,
            "track_radius_bpm" => self.spectral.track_radius_bpm = parse_f64(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Loads a config file; every key must be recognized.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        for (key, value) in read_kv_file(path)? {
            if !self.apply_kv(&key, &value)? {
                return Err(Error::ConfigInvalid(format!("unknown config key {key:?}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::ConfigInvalid(format!("{key} value {value:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::ConfigInvalid(format!(
            "{key} value {value:?} is not finite"
        )));
    }
    Ok(v)
}

pub(crate) fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.trim().parse().map_err(|_| {
        Error::ConfigInvalid(format!(
            "{key} value {value:?} is not a non-negative integer"
        ))
    })
}

pub(crate) fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value.trim().parse().map_err(|_| {
        Error::ConfigInvalid(format!(
            "{key} value {value:?} is not a non-negative integer"
        ))
    })
}

pub(crate) fn parse_i64(key: &str, value: &str) -> Result<i64> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::ConfigInvalid(format!("{key} value {value:?} is not an integer")))
}

pub(crate) fn parse_u32(key: &str, value: &str) -> Result<u32> {
    value.trim().parse().map_err(|_| {
        Error::ConfigInvalid(format!(
            "{key} value {value:?} is not a non-negative integer"
        ))
    })
}

/// Reads a flat key=value file, preserving order and repeated keys.
pub fn read_kv_file(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::IoFailure {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut pairs = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::ConfigInvalid(format!("line {} is not key=value: {raw:?}", i + 1))
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_file_layers_over_defaults() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pipeline.cfg");
        fs::write(
            &path,
            "# estimation settings\n\
             window_len = 80\n\
             theta_motion=0.004  # tighter\n\
             roi_rect=10,-5,120,160\n\
             track_radius_bpm=12\n",
        )
        .unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.window_len, 80);
        assert_eq!(cfg.labeler.theta_motion, 0.004);
        assert_eq!(cfg.roi_rect, Some(Rect::new(10, -5, 120, 160)));
        assert_eq!(cfg.spectral.track_radius_bpm, 12.0);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.spectral.pad_len, 2048);
        cfg.validate().unwrap();
    }

    #[test]
    fn explicit_roi_width_disables_derivation() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.derive_roi_width);
        assert_eq!(
            cfg.resolved_labeler(&Rect::new(0, 0, 200, 240))
                .roi_width_ref,
            200.0
        );
        cfg.apply_kv("roi_width_ref", "150").unwrap();
        assert!(!cfg.derive_roi_width);
        assert_eq!(
            cfg.resolved_labeler(&Rect::new(0, 0, 200, 240))
                .roi_width_ref,
            150.0
        );
    }

    #[test]
    fn unknown_key_and_bad_values_are_config_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        fs::write(&path, "widnow_len=80\n").unwrap();
        let mut cfg = PipelineConfig::default();
        assert!(matches!(
            cfg.apply_file(&path),
            Err(Error::ConfigInvalid(_))
        ));
        assert!(cfg.apply_kv("window_len", "eighty").is_err());
        assert!(cfg.apply_kv("roi_margin", "inf").is_err());
        assert!(cfg.apply_kv("roi_rect", "1,2,3").is_err());
        fs::write(&path, "just a line\n").unwrap();
        assert!(matches!(read_kv_file(&path), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn validation_rejects_pad_shorter_than_window() {
        let cfg = PipelineConfig {
            window_len: 4000,
            ..PipelineConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::ConfigInvalid(_))));
    }
}
