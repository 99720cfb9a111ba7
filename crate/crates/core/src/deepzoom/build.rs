use std::path::{Path, PathBuf};

use super::descriptor::write_descriptor;
use super::plan::{DziPyramid, PyramidLayout, TileFormat};
use super::{io_err, DziError, DEFAULT_JPEG_QUALITY};
use crate::codec;
use crate::exec::Exec;
use crate::raster::RasterTile;
use crate::slide_io::{Region, SlideSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub jpeg_quality: u8,
    pub exec: Exec,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            jpeg_quality: DEFAULT_JPEG_QUALITY,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidPaths {
    pub descriptor: PathBuf,
    pub tiles_dir: PathBuf,
}

impl PyramidPaths {
    pub fn new(out_dir: &Path, name: &str) -> Self {
        PyramidPaths {
            descriptor: out_dir.join(format!("{name}.dzi")),
            tiles_dir: out_dir.join(format!("{name}_files")),
        }
    }
}

/// Largest mean absolute error a JPEG tile may carry against its exact
/// pixels. Two adjacent levels within this budget, plus at most one unit of
/// rounding in the 2x2 average, stay inside the validator's tolerance of 3.
pub const JPEG_TILE_ERROR_BUDGET: f64 = 1.0;

/// Qualities tried, with full chroma, when the configured encoding is over
/// budget.
const FALLBACK_QUALITIES: [u8; 3] = [95, 98, 100];

fn encode(tile: &RasterTile, format: TileFormat, quality: u8) -> Result<Vec<u8>, DziError> {
    if format == TileFormat::Png {
        return Ok(codec::encode_png(tile)?);
    }
    let mut bytes = codec::encode_jpeg(tile, quality)?;
    for q in FALLBACK_QUALITIES {
        let error = codec::decode_jpeg(&bytes)?.mean_abs_diff(tile).unwrap_or(0.0);
        if error <= JPEG_TILE_ERROR_BUDGET {
            break;
        }
        bytes = codec::encode_jpeg_full_chroma(tile, q)?;
    }
    Ok(bytes)
}

/// Write `{name}.dzi` and `{name}_files/` into `out_dir`. Any existing tile
/// tree of the same name is removed first. Levels are produced finest
/// first, each from the one above; tiles within a level are encoded with
/// `opts.exec`.
pub fn build_pyramid(
    image: &RasterTile,
    out_dir: &Path,
    name: &str,
    pyramid: &DziPyramid,
    opts: &BuildOptions,
) -> Result<PyramidPaths, DziError> {
    if image.dimensions() != (pyramid.image_width, pyramid.image_height) {
        return Err(DziError::InvalidParameters(format!(
            "image is {}x{} but the pyramid plan is {}x{}",
            image.width(),
            image.height(),
            pyramid.image_width,
            pyramid.image_height
        )));
    }
    codec::JpegSettings::new(opts.jpeg_quality)?;
    let paths = PyramidPaths::new(out_dir, name);
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if paths.tiles_dir.exists() {
        std::fs::remove_dir_all(&paths.tiles_dir).map_err(io_err(&paths.tiles_dir))?;
    }

    let mut current = image.clone();
    for level in (0..=pyramid.max_level()).rev() {
        if level != pyramid.max_level() {
            current = current.downsample_2x2();
        }
        let spec = pyramid.level(level).expect("level within plan");
        debug_assert_eq!(current.dimensions(), (spec.width, spec.height));
        let dir = paths.tiles_dir.join(level.to_string());
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let coords: Vec<(u32, u32)> = (0..spec.rows)
            .flat_map(|r| (0..spec.columns).map(move |c| (c, r)))
            .collect();
        let level_raster = &current;
        opts.exec.try_map(&coords, |&(col, row)| -> Result<(), DziError> {
            let rect = pyramid.tile_rect(level, col, row).expect("tile within plan");
            let tile = level_raster.crop(rect.x, rect.y, rect.width, rect.height);
            let bytes = encode(&tile, pyramid.format, opts.jpeg_quality)?;
            let path = dir.join(pyramid.tile_file_name(col, row));
            std::fs::write(&path, bytes).map_err(io_err(&path))
        })?;
    }
    write_descriptor(pyramid, &paths.descriptor)?;
    Ok(paths)
}

/// Build a pyramid of the whole slide at `magnification`. The level is read
/// into memory in one piece before tiling.
pub fn build_pyramid_from_slide(
    src: &SlideSource,
    magnification: f64,
    layout: &PyramidLayout,
    out_dir: &Path,
    name: &str,
    opts: &BuildOptions,
) -> Result<(DziPyramid, PyramidPaths), DziError> {
    let (w, h) = src.dimensions_at(magnification)?;
    let pyramid = layout.plan(w, h)?;
    let image = src.read_region_with(&Region::new(0, 0, w, h, magnification), opts.exec)?;
    let paths = build_pyramid(&image, out_dir, name, &pyramid, opts)?;
    Ok((pyramid, paths))
}
