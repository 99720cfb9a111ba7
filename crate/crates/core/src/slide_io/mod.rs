//! Reading large tiled pyramidal slides.
//!
//! Two inputs are understood:
//!
//! * `.wtif` — a little-endian classic TIFF restricted to RGB 8-bit tiled
//!   images, one IFD per pyramid level (finest first), uncompressed or
//!   JPEG-compressed tiles. Magnification metadata comes from a sidecar
//!   `{stem}.meta` file.
//! * `.synth` — a text description of deterministic synthetic content that
//!   is rendered on demand, used for fixtures and demos.
//!
//! Regions are addressed at an arbitrary magnification. A read picks the
//! coarsest available level that is still at least as fine as requested and
//! area-averages down from there. Each output pixel depends only on its own
//! coordinate, so reads over any partition of a rectangle stitch together
//! exactly.

mod meta;
mod source;
pub mod synth;
pub mod wtif;

use std::path::PathBuf;

pub use meta::SlideMeta;
pub use source::{open_slide, open_slide_bytes, SlideSource};
pub use synth::{generate_synthetic, GroundTruth, Pattern, Rect, SyntheticSpec};
pub use wtif::{encode_wtif, write_wtif, StorageCompression, WtifOptions};

/// Objective power assumed when a slide has no sidecar metadata.
pub const DEFAULT_OBJECTIVE_POWER: f64 = 40.0;

#[derive(Debug, thiserror::Error)]
pub enum SlideError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("bad sidecar metadata: {0}")]
    Sidecar(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("region {region:?} out of bounds for level {level_width}x{level_height}")]
    RegionOutOfBounds {
        region: Region,
        level_width: u32,
        level_height: u32,
    },
    #[error("magnification {requested} outside (0, {max}]")]
    MagnificationOutOfRange { requested: f64, max: f64 },
    #[error("tile decode failed: {0}")]
    DecodeError(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// One level as stored in (or synthesized for) a slide.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredLevel {
    pub index: usize,
    pub width: u32,
    pub height: u32,
    pub tile_width: u32,
    pub tile_height: u32,
    /// Ratio of base dimensions to this level's dimensions (≥ 1).
    pub downsample: f64,
}

/// A rectangle addressed in the pixel grid of a given magnification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub magnification: f64,
}

impl Region {
    pub fn new(x: u32, y: u32, width: u32, height: u32, magnification: f64) -> Self {
        Region {
            x,
            y,
            width,
            height,
            magnification,
        }
    }
}

/// `ceil(len * magnification / objective_power)`, never below one pixel.
pub fn scaled_len(len: u32, magnification: f64, objective_power: f64) -> u32 {
    let exact = len as f64 * magnification / objective_power;
    // Absorb float noise so exact divisions do not round up.
    let v = (exact - 1e-9).ceil();
    (v.max(1.0)) as u32
}
