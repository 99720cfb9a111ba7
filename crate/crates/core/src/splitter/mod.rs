//! Splitting a slide into fixed-size analysis tiles.
//!
//! For a slide `S12.wtif` split into `out/`, the result is
//!
//! ```text
//! out/S12/A1.tif, A2.tif, ..., B1.tif, ...   kept tiles
//! out/S12/empty_tiles/*.tif                  tiles judged empty (kept for review)
//! out/S12/log.txt                            one line per tile with the measurements
//! ```
//!
//! Rows are lettered and columns numbered, so the first row is A1, A2, A3...

mod classify;
mod grid;
mod split;
pub mod tiff_out;

use std::path::{Path, PathBuf};

pub use classify::{
    classify, classify_compression, classify_intensity, compression_score, intensity_score, verdict_for, Algorithm,
    EmptinessPolicy, PolicyError, Score, Verdict,
};
pub use grid::{parse_tile_name, plan_level, tile_name, GridCell, TileGrid};
pub use split::{parse_log, split_slide, split_slide_with, LogEntry, SplitOutcome, LOG_HEADER};

use crate::props::{Properties, PropsError};
use crate::slide_io::{Region, SlideError, SlideSource};

pub const EMPTY_DIR: &str = "empty_tiles";
pub const LOG_FILE: &str = "log.txt";
pub const MIN_TILE_SIDE: u32 = 16;

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("invalid split request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Slide(#[from] SlideError),
    #[error("tile encode failed: {0}")]
    Encode(#[from] crate::codec::CodecError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SplitError + '_ {
    move |source| SplitError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct SplitRequest<'a> {
    pub source: &'a SlideSource,
    pub tile_width: u32,
    pub tile_height: u32,
    pub magnification: f64,
    pub policy: EmptinessPolicy,
    pub output_dir: PathBuf,
}

impl SplitRequest<'_> {
    pub fn validate(&self) -> Result<(), SplitError> {
        if self.tile_width < MIN_TILE_SIDE || self.tile_height < MIN_TILE_SIDE {
            return Err(SplitError::InvalidRequest(format!(
                "tile size {}x{} below the {MIN_TILE_SIDE}px minimum",
                self.tile_width, self.tile_height
            )));
        }
        self.policy.validate()?;
        self.source.dimensions_at(self.magnification)?;
        Ok(())
    }
}

/// The grid a request will produce, covering the slide at the requested
/// magnification.
pub fn plan_grid(request: &SplitRequest<'_>) -> Result<TileGrid, SplitError> {
    let (w, h) = request.source.dimensions_at(request.magnification)?;
    Ok(plan_level(w, h, request.tile_width, request.tile_height, request.magnification))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub name: String,
    pub region: Region,
    pub verdict: Verdict,
    pub score: Score,
    pub output_path: PathBuf,
}

/// Splitter defaults, as read from an `NDPIsplitter.properties`-style file.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub tile_width: u32,
    pub tile_height: u32,
    /// `None` means the slide's objective power.
    pub magnification: Option<f64>,
    pub policy: EmptinessPolicy,
    pub output_dir: PathBuf,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            tile_width: 512,
            tile_height: 512,
            magnification: None,
            policy: EmptinessPolicy::default(),
            output_dir: PathBuf::from("tiles"),
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "tile_width",
    "tile_height",
    "magnification",
    "empty_filter",
    "dark_threshold",
    "signal_threshold",
    "min_signal_fraction",
    "jpeg_quality",
    "ratio_threshold",
    "output_dir",
];

impl SplitConfig {
    pub fn from_properties(props: &Properties, base_dir: &Path) -> Result<Self, PropsError> {
        props.reject_unknown(CONFIG_KEYS)?;
        let d = SplitConfig::default();
        let dp = d.policy;
        let policy = EmptinessPolicy {
            algorithm: props.parse_opt("empty_filter")?.unwrap_or(dp.algorithm),
            dark_threshold: props.parse_opt("dark_threshold")?.unwrap_or(dp.dark_threshold),
            signal_threshold: props.parse_opt("signal_threshold")?.unwrap_or(dp.signal_threshold),
            min_signal_fraction: props.parse_opt("min_signal_fraction")?.unwrap_or(dp.min_signal_fraction),
            jpeg_quality: props.parse_opt("jpeg_quality")?.unwrap_or(dp.jpeg_quality),
            ratio_threshold: props.parse_opt("ratio_threshold")?.unwrap_or(dp.ratio_threshold),
        };
        policy
            .validate()
            .map_err(|e| props.invalid("empty_filter", e.to_string()))?;
        let tile_width = props.parse_opt("tile_width")?.unwrap_or(d.tile_width);
        let tile_height = props.parse_opt("tile_height")?.unwrap_or(d.tile_height);
        if tile_width < MIN_TILE_SIDE {
            return Err(props.invalid("tile_width", format!("must be at least {MIN_TILE_SIDE}")));
        }
        if tile_height < MIN_TILE_SIDE {
            return Err(props.invalid("tile_height", format!("must be at least {MIN_TILE_SIDE}")));
        }
        let magnification: Option<f64> = props.parse_opt("magnification")?;
        if matches!(magnification, Some(m) if !(m > 0.0)) {
            return Err(props.invalid("magnification", "must be positive"));
        }
        let output_dir = props
            .get("output_dir")
            .map(|p| base_dir.join(p))
            .unwrap_or_else(|| base_dir.join(&d.output_dir));
        Ok(SplitConfig {
            tile_width,
            tile_height,
            magnification,
            policy,
            output_dir,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PropsError> {
        let props = Properties::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_properties(&props, base)
    }

    pub fn request<'a>(&self, source: &'a SlideSource) -> SplitRequest<'a> {
        SplitRequest {
            source,
            tile_width: self.tile_width,
            tile_height: self.tile_height,
            magnification: self.magnification.unwrap_or(source.objective_power()),
            policy: self.policy,
            output_dir: self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let props = Properties::parse("tile_width=256\nempty_filter=compression\nratio_threshold=0.05\noutput_dir=out\n").unwrap();
        let c = SplitConfig::from_properties(&props, Path::new("/data")).unwrap();
        assert_eq!(c.tile_width, 256);
        assert_eq!(c.tile_height, 512);
        assert_eq!(c.policy.algorithm, Algorithm::Compression);
        assert_eq!(c.policy.ratio_threshold, 0.05);
        assert_eq!(c.policy.dark_threshold, 20);
        assert_eq!(c.output_dir, PathBuf::from("/data/out"));
    }

    #[test]
    fn config_rejects_bad_values() {
        for text in [
            "empty_filter=magic\n",
            "tile_width=8\n",
            "dark_threshold=70\n",
            "colour=red\n",
            "magnification=0\n",
        ] {
            let props = Properties::parse(text).unwrap();
            assert!(SplitConfig::from_properties(&props, Path::new(".")).is_err(), "{text}");
        }
    }
}
