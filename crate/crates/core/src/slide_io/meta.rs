use std::path::{Path, PathBuf};

use super::{SlideError, DEFAULT_OBJECTIVE_POWER};
use crate::props::Properties;

/// Magnification metadata from a `{stem}.meta` sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideMeta {
    pub objective_power: f64,
    pub mpp_x: Option<f64>,
    pub mpp_y: Option<f64>,
}

impl Default for SlideMeta {
    fn default() -> Self {
        SlideMeta {
            objective_power: DEFAULT_OBJECTIVE_POWER,
            mpp_x: None,
            mpp_y: None,
        }
    }
}

impl SlideMeta {
    pub fn sidecar_path(slide: &Path) -> PathBuf {
        slide.with_extension("meta")
    }

    pub fn parse(text: &str) -> Result<Self, SlideError> {
        let props = Properties::parse(text).map_err(|e| SlideError::Sidecar(e.to_string()))?;
        let positive = |key: &str| -> Result<Option<f64>, SlideError> {
            let v = props
                .parse_opt::<f64>(key)
                .map_err(|e| SlideError::Sidecar(e.to_string()))?;
            match v {
                Some(v) if !(v > 0.0 && v.is_finite()) => {
                    Err(SlideError::Sidecar(format!("{key} must be positive, got {v}")))
                }
                other => Ok(other),
            }
        };
        Ok(SlideMeta {
            objective_power: positive("objective_power")?.unwrap_or(DEFAULT_OBJECTIVE_POWER),
            mpp_x: positive("mpp_x")?,
            mpp_y: positive("mpp_y")?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("objective_power={}\n", self.objective_power);
        if let Some(x) = self.mpp_x {
            s.push_str(&format!("mpp_x={x}\n"));
        }
        if let Some(y) = self.mpp_y {
            s.push_str(&format!("mpp_y={y}\n"));
        }
        s
    }

    /// Load the sidecar next to `slide`. Returns the defaults and a warning
    /// when the sidecar does not exist.
    pub fn load_for(slide: &Path) -> Result<(Self, Option<String>), SlideError> {
        let path = Self::sidecar_path(slide);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok((Self::parse(&text)?, None)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok((
                SlideMeta::default(),
                Some(format!(
                    "no sidecar {}; assuming objective_power={DEFAULT_OBJECTIVE_POWER}",
                    path.display()
                )),
            )),
            Err(e) => Err(e.into()),
        }
    }
}
