//! Core library for slidepress: reading tiled pyramidal slide images,
//! splitting them into analysis tiles with empty-tile filtering, producing
//! watermarked web snapshots, publishing Deep Zoom pyramids, and linking
//! published images to a specimen catalog through a folder-driven batch
//! pipeline.

pub mod catalog;
pub mod codec;
pub mod deepzoom;
pub mod exec;
pub mod pipeline;
pub mod props;
pub mod raster;
pub mod slide_io;
pub mod snapshot;
pub mod splitter;

pub use exec::Exec;
pub use raster::RasterTile;
pub use slide_io::{open_slide, Region, SlideSource};
