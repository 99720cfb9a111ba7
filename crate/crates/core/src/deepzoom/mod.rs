//! Deep Zoom (DZI) pyramids.
//!
//! A pyramid named `S1` is written as
//!
//! ```text
//! S1.dzi                       XML descriptor
//! S1_files/{level}/{col}_{row}.jpg
//! ```
//!
//! Level `max_level` is the full image; each level below halves the one
//! above with a 2×2 area average (odd edges rounded up), down to a 1×1
//! level 0.

mod build;
mod descriptor;
mod plan;
mod validate;

use std::path::PathBuf;

pub use build::{build_pyramid, build_pyramid_from_slide, BuildOptions, PyramidPaths, JPEG_TILE_ERROR_BUDGET};
pub use descriptor::{descriptor_xml, parse_descriptor, write_descriptor, DZI_NAMESPACE};
pub use plan::{plan_pyramid, DziPyramid, LevelSpec, PyramidLayout, TileFormat, TileRect};
pub use validate::{validate_named, validate_pyramid, ValidationReport, Violation, JPEG_TOLERANCE};

use crate::codec::CodecError;
use crate::slide_io::SlideError;

pub const DEFAULT_TILE_SIZE: u32 = 254;
pub const DEFAULT_OVERLAP: u32 = 1;
pub const DEFAULT_JPEG_QUALITY: u8 = 90;

#[derive(Debug, thiserror::Error)]
pub enum DziError {
    #[error("invalid pyramid parameters: {0}")]
    InvalidParameters(String),
    #[error("malformed descriptor: {0}")]
    Descriptor(String),
    #[error("not a pyramid: {0}")]
    NotAPyramid(String),
    #[error(transparent)]
    Encode(#[from] CodecError),
    #[error(transparent)]
    Slide(#[from] SlideError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> DziError + '_ {
    move |source| DziError::Io {
        path: path.to_path_buf(),
        source,
    }
}
