//! In-memory RGB rasters and the area-average resampling shared by slide
//! reads, snapshot extraction and pyramid construction.

use std::fmt;

/// An 8-bit RGB raster stored row-major, three bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterTile {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for RasterTile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RasterTile")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("raster payload of {actual} bytes does not match {width}x{height}x3")]
pub struct PayloadSizeError {
    pub width: u32,
    pub height: u32,
    pub actual: usize,
}

impl RasterTile {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        RasterTile {
            width,
            height,
            data,
        }
    }

    pub fn black(width: u32, height: u32) -> Self {
        RasterTile {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, PayloadSizeError> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(PayloadSizeError {
                width,
                height,
                actual: data.len(),
            });
        }
        Ok(RasterTile {
            width,
            height,
            data,
        })
    }

    /// Build a raster by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RasterTile {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let start = self.offset(0, y);
        &self.data[start..start + self.width as usize * 3]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Copy of the `width`×`height` window at (`x`, `y`). Panics if the
    /// window is not inside the raster.
    pub fn crop(&self, x: u32, y: u32, width: u32, height: u32) -> RasterTile {
        assert!(
            x + width <= self.width && y + height <= self.height,
            "crop {}x{}+{}+{} outside {}x{}",
            width,
            height,
            x,
            y,
            self.width,
            self.height
        );
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for row in y..y + height {
            let start = self.offset(x, row);
            data.extend_from_slice(&self.data[start..start + width as usize * 3]);
        }
        RasterTile {
            width,
            height,
            data,
        }
    }

    /// Paste `src` with its top-left corner at (`x`, `y`), clipping at the
    /// right and bottom edges.
    pub fn blit(&mut self, src: &RasterTile, x: u32, y: u32) {
        if x >= self.width || y >= self.height {
            return;
        }
        let w = src.width.min(self.width - x) as usize;
        let h = src.height.min(self.height - y);
        for row in 0..h {
            let d = self.offset(x, y + row);
            let s = src.offset(0, row);
            self.data[d..d + w * 3].copy_from_slice(&src.data[s..s + w * 3]);
        }
    }

    /// Paste the `w`×`h` window of `src` at (`sx`, `sy`) into this raster at
    /// (`dx`, `dy`). Both windows must be in bounds.
    pub fn blit_window(&mut self, src: &RasterTile, sx: u32, sy: u32, w: u32, h: u32, dx: u32, dy: u32) {
        let w = w as usize;
        for row in 0..h {
            let d = self.offset(dx, dy + row);
            let s = src.offset(sx, sy + row);
            self.data[d..d + w * 3].copy_from_slice(&src.data[s..s + w * 3]);
        }
    }

    /// Halve both dimensions with a 2×2 area average. Odd trailing rows and
    /// columns average over the pixels that exist, so the result is
    /// `ceil(w/2)`×`ceil(h/2)`. Each output channel is the rounded mean
    /// `(sum + n/2) / n`.
    pub fn downsample_2x2(&self) -> RasterTile {
        let ow = self.width.div_ceil(2).max(1);
        let oh = self.height.div_ceil(2).max(1);
        let mut out = vec![0u8; ow as usize * oh as usize * 3];
        for oy in 0..oh {
            let y0 = oy * 2;
            let y1 = (y0 + 1).min(self.height - 1);
            let rows = if y1 != y0 { 2 } else { 1 };
            for ox in 0..ow {
                let x0 = ox * 2;
                let x1 = (x0 + 1).min(self.width - 1);
                let cols = if x1 != x0 { 2 } else { 1 };
                let n = rows * cols;
                let o = (oy as usize * ow as usize + ox as usize) * 3;
                for c in 0..3 {
                    let mut sum = self.data[self.offset(x0, y0) + c] as u32;
                    if cols == 2 {
                        sum += self.data[self.offset(x1, y0) + c] as u32;
                    }
                    if rows == 2 {
                        sum += self.data[self.offset(x0, y1) + c] as u32;
                        if cols == 2 {
                            sum += self.data[self.offset(x1, y1) + c] as u32;
                        }
                    }
                    out[o + c] = ((sum + n / 2) / n) as u8;
                }
            }
        }
        RasterTile {
            width: ow,
            height: oh,
            data: out,
        }
    }

    /// Mean absolute per-channel difference against a raster of the same size.
    pub fn mean_abs_diff(&self, other: &RasterTile) -> Option<f64> {
        if self.dimensions() != other.dimensions() {
            return None;
        }
        if self.data.is_empty() {
            return Some(0.0);
        }
        let total: u64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as i32 - *b as i32).unsigned_abs() as u64)
            .sum();
        Some(total as f64 / self.data.len() as f64)
    }
}

/// BT.601 luma rounded half-up to an integer, computed exactly in integer
/// arithmetic.
#[inline]
pub fn luminance(rgb: [u8; 3]) -> u8 {
    let scaled = 299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32;
    ((scaled + 500) / 1000) as u8
}

/// Per-axis contributions for an area-average resample: the source interval
/// `[i*scale, (i+1)*scale)` clipped to `[0, src_len)`, expressed as
/// `(source index, coverage weight)` pairs.
pub(crate) fn area_weights(out_index: u32, scale: f64, src_len: u32) -> Vec<(u32, f64)> {
    let start = out_index as f64 * scale;
    let end = ((out_index + 1) as f64 * scale).min(src_len as f64);
    let first = start.floor() as u32;
    let mut last = end.ceil() as u32;
    last = last.min(src_len).max(first + 1);
    let mut weights = Vec::with_capacity((last - first) as usize);
    for s in first..last {
        let lo = (s as f64).max(start);
        let hi = ((s + 1) as f64).min(end);
        let w = hi - lo;
        if w > 1e-12 {
            weights.push((s, w));
        }
    }
    if weights.is_empty() {
        weights.push((first.min(src_len - 1), 1.0));
    }
    weights
}

/// Area-average resample of a window of a larger image.
///
/// `src` holds the source pixels starting at source coordinate
/// (`src_x0`, `src_y0`); the full source image is `src_full_w`×`src_full_h`.
/// Output pixel (`out_x + i`, `out_y + j`) covers the source rectangle
/// `[(out_x+i)*scale, (out_x+i+1)*scale)` (same vertically), clipped to the
/// full source. The value depends only on the output coordinate, so
/// resampling any partition of an output rectangle gives the same pixels as
/// resampling the whole.
#[allow(clippy::too_many_arguments)]
pub(crate) fn area_resample(
    src: &RasterTile,
    src_x0: u32,
    src_y0: u32,
    src_full_w: u32,
    src_full_h: u32,
    scale: f64,
    out_x: u32,
    out_y: u32,
    out_w: u32,
    out_h: u32,
) -> RasterTile {
    let xw: Vec<Vec<(u32, f64)>> = (0..out_w)
        .map(|i| area_weights(out_x + i, scale, src_full_w))
        .collect();
    let yw: Vec<Vec<(u32, f64)>> = (0..out_h)
        .map(|j| area_weights(out_y + j, scale, src_full_h))
        .collect();
    let mut out = Vec::with_capacity(out_w as usize * out_h as usize * 3);
    for ys in &yw {
        for xs in &xw {
            let mut acc = [0f64; 3];
            let mut total = 0f64;
            for &(sy, wy) in ys {
                for &(sx, wx) in xs {
                    let w = wx * wy;
                    let p = src.pixel(sx - src_x0, sy - src_y0);
                    acc[0] += p[0] as f64 * w;
                    acc[1] += p[1] as f64 * w;
                    acc[2] += p[2] as f64 * w;
                    total += w;
                }
            }
            for a in acc {
                out.push((a / total + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterTile {
        width: out_w,
        height: out_h,
        data: out,
    }
}

/// Source-coordinate span `[first, last)` that [`area_resample`] touches for
/// output indices `[out_start, out_start + out_len)`.
pub(crate) fn source_span(out_start: u32, out_len: u32, scale: f64, src_len: u32) -> (u32, u32) {
    let first = area_weights(out_start, scale, src_len)[0].0;
    let last_w = area_weights(out_start + out_len - 1, scale, src_len);
    let last = last_w.last().map(|(s, _)| s + 1).unwrap_or(first + 1);
    (first, last.max(first + 1))
}
