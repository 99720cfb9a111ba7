//! Web snapshots: the centered region of a slide covering a fixed fraction
//! of its area, optionally watermarked, encoded as JPEG.

use std::path::{Path, PathBuf};

use image::{imageops, RgbaImage};

use crate::codec::{self, CodecError};
use crate::raster::RasterTile;
use crate::slide_io::{Region, SlideError, SlideSource};

/// Smallest snapshot (in pixels) worth publishing as a zoomable image.
pub const PUBLISH_MIN_PIXELS: u64 = 45_000_000;
pub const DEFAULT_FRACTION: f64 = 0.25;
pub const DEFAULT_QUALITY: u8 = 85;
pub const WATERMARK_HEIGHT_FRACTION: f64 = 0.08;
pub const WATERMARK_MARGIN_FRACTION: f64 = 0.02;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Slide(#[from] SlideError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("fraction {0} outside (0, 1]")]
    Fraction(f64),
    #[error("watermark {logo_width}x{logo_height} scaled for a {image_width}x{image_height} image does not fit")]
    LogoTooLarge {
        logo_width: u32,
        logo_height: u32,
        image_width: u32,
        image_height: u32,
    },
    #[error("cannot load watermark {path}: {reason}")]
    Watermark { path: PathBuf, reason: String },
    #[error("{0} is not a decodable JPEG")]
    InvalidImage(PathBuf),
    #[error("cannot derive a specimen id from {0}")]
    UnknownNamePattern(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotConfig {
    /// `None` picks [`default_magnification`].
    pub magnification: Option<f64>,
    pub jpeg_quality: u8,
    pub watermark_path: Option<PathBuf>,
    pub fraction: f64,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        SnapshotConfig {
            magnification: None,
            jpeg_quality: DEFAULT_QUALITY,
            watermark_path: None,
            fraction: DEFAULT_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotResult {
    pub region: Region,
    pub jpeg_path: PathBuf,
    pub width: u32,
    pub height: u32,
}

/// Centered rectangle with the aspect ratio of the slide and `fraction` of
/// its area: each side is scaled by `sqrt(fraction)`.
pub fn compute_center_region(width: u32, height: u32, fraction: f64) -> Result<(u32, u32, u32, u32), SnapshotError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SnapshotError::Fraction(fraction));
    }
    let side = fraction.sqrt();
    let w = ((width as f64 * side).round() as u32).clamp(1, width);
    let h = ((height as f64 * side).round() as u32).clamp(1, height);
    Ok(((width - w) / 2, (height - h) / 2, w, h))
}

/// Lowest power-of-two step below objective power at which the centered
/// snapshot still reaches [`PUBLISH_MIN_PIXELS`]; objective power itself
/// when even that is smaller.
pub fn default_magnification(src: &SlideSource, fraction: f64) -> f64 {
    let power = src.objective_power();
    let mut best = power;
    let mut m = power;
    for _ in 0..16 {
        let Ok((w, h)) = src.dimensions_at(m) else { break };
        let Ok((_, _, sw, sh)) = compute_center_region(w, h, fraction) else { break };
        if (sw as u64) * (sh as u64) < PUBLISH_MIN_PIXELS {
            break;
        }
        best = m;
        m /= 2.0;
    }
    best
}

pub fn snapshot_region(src: &SlideSource, config: &SnapshotConfig) -> Result<Region, SnapshotError> {
    let magnification = config
        .magnification
        .unwrap_or_else(|| default_magnification(src, config.fraction));
    let (w, h) = src.dimensions_at(magnification)?;
    let (x, y, rw, rh) = compute_center_region(w, h, config.fraction)?;
    Ok(Region::new(x, y, rw, rh, magnification))
}

/// Extract, watermark and encode the snapshot; returns the JPEG bytes.
pub fn render_snapshot(src: &SlideSource, config: &SnapshotConfig) -> Result<(Region, Vec<u8>), SnapshotError> {
    let region = snapshot_region(src, config)?;
    let mut image = src.read_region(&region)?;
    if let Some(path) = &config.watermark_path {
        let logo = load_logo(path)?;
        image = apply_watermark(&image, &logo)?;
    }
    let bytes = codec::encode_jpeg(&image, config.jpeg_quality)?;
    Ok((region, bytes))
}

/// Write `{out_dir}/{slide_stem}.jpg`.
pub fn create_snapshot(src: &SlideSource, config: &SnapshotConfig, out_dir: &Path) -> Result<SnapshotResult, SnapshotError> {
    let (region, bytes) = render_snapshot(src, config)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let jpeg_path = out_dir.join(format!("{}.jpg", src.stem()));
    std::fs::write(&jpeg_path, bytes).map_err(io_err(&jpeg_path))?;
    Ok(SnapshotResult {
        region,
        jpeg_path,
        width: region.width,
        height: region.height,
    })
}

pub fn load_logo(path: &Path) -> Result<RgbaImage, SnapshotError> {
    image::open(path)
        .map(|i| i.into_rgba8())
        .map_err(|e| SnapshotError::Watermark {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Where a logo lands on an image: (x, y, width, height) after scaling.
/// A logo taller than the image, or one too wide once scaled, is refused.
pub fn watermark_placement(image_w: u32, image_h: u32, logo_w: u32, logo_h: u32) -> Result<(u32, u32, u32, u32), SnapshotError> {
    let target_h = ((image_h as f64 * WATERMARK_HEIGHT_FRACTION).round() as u32).max(1);
    let target_w = ((logo_w as f64 * target_h as f64 / logo_h.max(1) as f64).round() as u32).max(1);
    let margin = (image_h as f64 * WATERMARK_MARGIN_FRACTION).round() as u32;
    if logo_w == 0 || logo_h == 0 || logo_h > image_h || target_w > image_w || target_h + margin > image_h {
        return Err(SnapshotError::LogoTooLarge {
            logo_width: target_w,
            logo_height: target_h,
            image_width: image_w,
            image_height: image_h,
        });
    }
    Ok(((image_w - target_w) / 2, image_h - margin - target_h, target_w, target_h))
}

/// Source-over composite of `logo`, scaled to 8% of the image height,
/// centered horizontally with a bottom margin of 2% of the image height.
pub fn apply_watermark(image: &RasterTile, logo: &RgbaImage) -> Result<RasterTile, SnapshotError> {
    let (x0, y0, lw, lh) = watermark_placement(image.width(), image.height(), logo.width(), logo.height())?;
    let scaled = if (lw, lh) == logo.dimensions() {
        logo.clone()
    } else {
        imageops::resize(logo, lw, lh, imageops::FilterType::Triangle)
    };
    let mut out = image.clone();
    for (lx, ly, px) in scaled.enumerate_pixels() {
        let a = px[3] as u32;
        if a == 0 {
            continue;
        }
        let (x, y) = (x0 + lx, y0 + ly);
        let under = out.pixel(x, y);
        let blended = [0, 1, 2].map(|c| ((px[c] as u32 * a + under[c] as u32 * (255 - a) + 127) / 255) as u8);
        out.set_pixel(x, y, blended);
    }
    Ok(out)
}

/// Specimen identifier for a manually staged snapshot: the file stem of a
/// `.jpg` file.
pub fn specimen_id_from_jpeg(path: &Path) -> Result<String, SnapshotError> {
    let ext_ok = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("jpg"))
        .unwrap_or(false);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    if !ext_ok || stem.is_empty() || stem.starts_with('.') {
        return Err(SnapshotError::UnknownNamePattern(path.to_path_buf()));
    }
    Ok(stem.to_string())
}

/// Stage a manually taken snapshot for the next pipeline run. It replaces
/// any snapshot already waiting for the same specimen.
pub fn review_override(manual_jpeg: &Path, processing_dir: &Path) -> Result<PathBuf, SnapshotError> {
    let id = specimen_id_from_jpeg(manual_jpeg)?;
    let bytes = std::fs::read(manual_jpeg).map_err(io_err(manual_jpeg))?;
    if !codec::is_decodable_jpeg(&bytes) {
        return Err(SnapshotError::InvalidImage(manual_jpeg.to_path_buf()));
    }
    std::fs::create_dir_all(processing_dir).map_err(io_err(processing_dir))?;
    let target = processing_dir.join(format!("{id}.jpg"));
    let tmp = processing_dir.join(format!(".{id}.jpg.staging"));
    std::fs::write(&tmp, &bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, &target).map_err(io_err(&target))?;
    Ok(target)
}
