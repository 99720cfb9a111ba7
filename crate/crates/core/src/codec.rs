//! Image codecs with pinned settings.
//!
//! Every JPEG this crate writes is baseline, uses the standard (libjpeg /
//! Annex K) quantization tables scaled by quality and the standard Huffman
//! tables. [`encode_jpeg`] adds 4:2:0 chroma subsampling;
//! [`encode_jpeg_full_chroma`] keeps chroma at full resolution. Compression
//! ratios used for empty-tile classification and pyramid bytes are therefore
//! reproducible across runs and machines.

use std::io::Cursor;

use jpeg_encoder::{ColorType, Encoder, QuantizationTableType, SamplingFactor};

use crate::raster::RasterTile;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("JPEG encode failed: {0}")]
    Encode(String),
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("JPEG quality {0} outside 1..=100")]
    Quality(u8),
    #[error("image {width}x{height} too large for JPEG (max 65535 per side)")]
    TooLarge { width: u32, height: u32 },
}

/// Encoder settings that must not drift. Only quality is configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JpegSettings {
    pub quality: u8,
}

impl JpegSettings {
    pub const SAMPLING: SamplingFactor = SamplingFactor::R_4_2_0;

    pub fn new(quality: u8) -> Result<Self, CodecError> {
        if !(1..=100).contains(&quality) {
            return Err(CodecError::Quality(quality));
        }
        Ok(JpegSettings { quality })
    }
}

pub fn encode_jpeg(tile: &RasterTile, quality: u8) -> Result<Vec<u8>, CodecError> {
    encode_with_sampling(tile, quality, JpegSettings::SAMPLING)
}

/// As [`encode_jpeg`] but with 4:4:4 sampling.
pub fn encode_jpeg_full_chroma(tile: &RasterTile, quality: u8) -> Result<Vec<u8>, CodecError> {
    encode_with_sampling(tile, quality, SamplingFactor::R_4_4_4)
}

fn encode_with_sampling(tile: &RasterTile, quality: u8, sampling: SamplingFactor) -> Result<Vec<u8>, CodecError> {
    let settings = JpegSettings::new(quality)?;
    let (w, h) = tile.dimensions();
    if w > u16::MAX as u32 || h > u16::MAX as u32 {
        return Err(CodecError::TooLarge {
            width: w,
            height: h,
        });
    }
    let mut out = Vec::new();
    let mut encoder = Encoder::new(&mut out, settings.quality);
    encoder.set_sampling_factor(sampling);
    encoder.set_quantization_tables(QuantizationTableType::Default, QuantizationTableType::Default);
    encoder.set_progressive(false);
    encoder.set_optimized_huffman_tables(false);
    encoder
        .encode(tile.as_bytes(), w as u16, h as u16, ColorType::Rgb)
        .map_err(|e| CodecError::Encode(e.to_string()))?;
    Ok(out)
}

pub fn decode_jpeg(bytes: &[u8]) -> Result<RasterTile, CodecError> {
    decode_with(bytes, image::ImageFormat::Jpeg)
}

pub fn decode_png(bytes: &[u8]) -> Result<RasterTile, CodecError> {
    decode_with(bytes, image::ImageFormat::Png)
}

/// Decode any supported format, detected from the content.
pub fn decode_any(bytes: &[u8]) -> Result<RasterTile, CodecError> {
    let format = image::guess_format(bytes).map_err(|e| CodecError::Decode(e.to_string()))?;
    decode_with(bytes, format)
}

fn decode_with(bytes: &[u8], format: image::ImageFormat) -> Result<RasterTile, CodecError> {
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| CodecError::Decode(e.to_string()))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    RasterTile::from_raw(w, h, img.into_raw()).map_err(|e| CodecError::Decode(e.to_string()))
}

pub fn encode_png(tile: &RasterTile) -> Result<Vec<u8>, CodecError> {
    use image::ImageEncoder;
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(
            tile.as_bytes(),
            tile.width(),
            tile.height(),
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| CodecError::Encode(e.to_string()))?;
    Ok(out)
}

/// True when `bytes` begins with a JPEG SOI marker and decodes.
pub fn is_decodable_jpeg(bytes: &[u8]) -> bool {
    bytes.starts_with(&[0xFF, 0xD8]) && decode_jpeg(bytes).is_ok()
}
