use std::fmt;
use std::str::FromStr;

use super::{DziError, DEFAULT_OVERLAP, DEFAULT_TILE_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TileFormat {
    Jpg,
    /// Lossless tiles, used where pyramid consistency must hold exactly.
    Png,
}

impl TileFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TileFormat::Jpg => "jpg",
            TileFormat::Png => "png",
        }
    }
}

impl fmt::Display for TileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for TileFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jpg" | "jpeg" => Ok(TileFormat::Jpg),
            "png" => Ok(TileFormat::Png),
            other => Err(format!("unknown tile format {other:?} (expected jpg or png)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DziPyramid {
    pub image_width: u32,
    pub image_height: u32,
    pub tile_size: u32,
    pub overlap: u32,
    pub format: TileFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelSpec {
    pub level: u32,
    pub width: u32,
    pub height: u32,
    pub columns: u32,
    pub rows: u32,
}

impl LevelSpec {
    pub fn tile_count(&self) -> u64 {
        self.columns as u64 * self.rows as u64
    }
}

/// Pixel extent of one tile within its level, overlap included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Tile geometry and encoding shared by every pyramid built with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PyramidLayout {
    pub tile_size: u32,
    pub overlap: u32,
    pub format: TileFormat,
}

impl Default for PyramidLayout {
    fn default() -> Self {
        PyramidLayout {
            tile_size: DEFAULT_TILE_SIZE,
            overlap: DEFAULT_OVERLAP,
            format: TileFormat::Jpg,
        }
    }
}

impl PyramidLayout {
    pub fn plan(&self, width: u32, height: u32) -> Result<DziPyramid, DziError> {
        DziPyramid::new(width, height, self.tile_size, self.overlap, self.format)
    }
}

/// Pyramid plan with the default tile format (JPEG).
pub fn plan_pyramid(width: u32, height: u32, tile_size: u32, overlap: u32) -> Result<DziPyramid, DziError> {
    DziPyramid::new(width, height, tile_size, overlap, TileFormat::Jpg)
}

impl DziPyramid {
    pub fn new(width: u32, height: u32, tile_size: u32, overlap: u32, format: TileFormat) -> Result<Self, DziError> {
        if width == 0 || height == 0 {
            return Err(DziError::InvalidParameters(format!("image {width}x{height} is empty")));
        }
        if tile_size == 0 {
            return Err(DziError::InvalidParameters("tile size must be at least 1".into()));
        }
        if overlap >= tile_size {
            return Err(DziError::InvalidParameters(format!(
                "overlap {overlap} must be smaller than tile size {tile_size}"
            )));
        }
        Ok(DziPyramid {
            image_width: width,
            image_height: height,
            tile_size,
            overlap,
            format,
        })
    }

    pub fn with_defaults(width: u32, height: u32) -> Result<Self, DziError> {
        plan_pyramid(width, height, DEFAULT_TILE_SIZE, DEFAULT_OVERLAP)
    }

    pub fn layout(&self) -> PyramidLayout {
        PyramidLayout {
            tile_size: self.tile_size,
            overlap: self.overlap,
            format: self.format,
        }
    }

    pub fn with_format(mut self, format: TileFormat) -> Self {
        self.format = format;
        self
    }

    /// ceil(log2(max(w, h))): the smallest k with 2^k ≥ the longer side.
    pub fn max_level(&self) -> u32 {
        let longest = self.image_width.max(self.image_height);
        32 - (longest - 1).leading_zeros()
    }

    pub fn level_count(&self) -> u32 {
        self.max_level() + 1
    }

    pub fn level(&self, level: u32) -> Option<LevelSpec> {
        let max = self.max_level();
        if level > max {
            return None;
        }
        let shift = max - level;
        let div = |len: u32| (((len as u64) + (1u64 << shift) - 1) >> shift) as u32;
        let (width, height) = (div(self.image_width), div(self.image_height));
        Some(LevelSpec {
            level,
            width,
            height,
            columns: width.div_ceil(self.tile_size),
            rows: height.div_ceil(self.tile_size),
        })
    }

    pub fn levels(&self) -> Vec<LevelSpec> {
        (0..=self.max_level()).filter_map(|l| self.level(l)).collect()
    }

    pub fn tile_count(&self) -> u64 {
        self.levels().iter().map(LevelSpec::tile_count).sum()
    }

    /// Extent of tile (col, row) at `level`, or `None` outside the plan.
    pub fn tile_rect(&self, level: u32, col: u32, row: u32) -> Option<TileRect> {
        let spec = self.level(level)?;
        if col >= spec.columns || row >= spec.rows {
            return None;
        }
        let span = |i: u32, len: u32| {
            let start = (i as u64 * self.tile_size as u64).saturating_sub(self.overlap as u64);
            let end = ((i as u64 + 1) * self.tile_size as u64 + self.overlap as u64).min(len as u64);
            (start as u32, (end - start) as u32)
        };
        let (x, width) = span(col, spec.width);
        let (y, height) = span(row, spec.height);
        Some(TileRect { x, y, width, height })
    }

    pub fn tile_file_name(&self, col: u32, row: u32) -> String {
        format!("{col}_{row}.{}", self.format.extension())
    }
}
