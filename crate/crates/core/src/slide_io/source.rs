use std::fs::File;
use std::path::{Path, PathBuf};

use super::meta::SlideMeta;
use super::synth::{Scene, SyntheticSpec};
use super::wtif::{self, ByteSource, LevelLayout};
use super::{scaled_len, Region, SlideError, StoredLevel};
use crate::exec::Exec;
use crate::raster::{area_resample, source_span, RasterTile};

#[derive(Debug)]
enum Backend {
    Container { bytes: ByteSource, layouts: Vec<LevelLayout> },
    Synthetic(Box<Scene>),
}

/// An opened slide. Cheap to share between threads; reads never mutate it.
#[derive(Debug)]
pub struct SlideSource {
    path: PathBuf,
    base_width: u32,
    base_height: u32,
    meta: SlideMeta,
    levels: Vec<StoredLevel>,
    warnings: Vec<String>,
    backend: Backend,
}

/// A level that a read can be served from: either stored, or derived from
/// the base by `k` rounds of 2×2 averaging.
#[derive(Debug, Clone, Copy, PartialEq)]
enum LevelRef {
    Stored(usize),
    Derived(u32),
}

pub fn open_slide(path: &Path) -> Result<SlideSource, SlideError> {
    if !path.is_file() {
        return Err(SlideError::MissingFile(path.to_path_buf()));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("wtif") => {
            let file = File::open(path)?;
            let len = file.metadata()?.len();
            let (meta, warning) = SlideMeta::load_for(path)?;
            let mut src = SlideSource::from_container(ByteSource::File { file, len }, meta, path)?;
            src.warnings.extend(warning);
            for w in &src.warnings {
                tracing::warn!("{}: {w}", path.display());
            }
            Ok(src)
        }
        Some("synth") => {
            let text = std::fs::read_to_string(path)?;
            let spec = SyntheticSpec::parse(&text)?;
            SlideSource::from_synthetic(&spec, path)
        }
        other => Err(SlideError::UnsupportedFeature(format!(
            "file extension {:?}; expected .wtif or .synth",
            other.unwrap_or("")
        ))),
    }
}

/// Open an in-memory `.wtif` image with default magnification metadata.
pub fn open_slide_bytes(bytes: Vec<u8>) -> Result<SlideSource, SlideError> {
    SlideSource::from_container(
        ByteSource::Memory(bytes.into()),
        SlideMeta::default(),
        Path::new("<memory>"),
    )
}

impl SlideSource {
    fn from_container(bytes: ByteSource, meta: SlideMeta, path: &Path) -> Result<Self, SlideError> {
        let layouts = wtif::parse(&bytes)?;
        let (bw, bh) = (layouts[0].width, layouts[0].height);
        let levels = layouts
            .iter()
            .enumerate()
            .map(|(index, l)| StoredLevel {
                index,
                width: l.width,
                height: l.height,
                tile_width: l.tile_width,
                tile_height: l.tile_height,
                downsample: level_downsample(bw, bh, l.width, l.height),
            })
            .collect();
        Ok(SlideSource {
            path: path.to_path_buf(),
            base_width: bw,
            base_height: bh,
            meta,
            levels,
            warnings: Vec::new(),
            backend: Backend::Container { bytes, layouts },
        })
    }

    pub fn from_synthetic(spec: &SyntheticSpec, path: &Path) -> Result<Self, SlideError> {
        let scene = spec.scene()?;
        Ok(SlideSource {
            path: path.to_path_buf(),
            base_width: spec.width,
            base_height: spec.height,
            meta: SlideMeta {
                objective_power: spec.objective_power,
                mpp_x: spec.mpp,
                mpp_y: spec.mpp,
            },
            levels: vec![StoredLevel {
                index: 0,
                width: spec.width,
                height: spec.height,
                tile_width: spec.tile_size,
                tile_height: spec.tile_size,
                downsample: 1.0,
            }],
            warnings: Vec::new(),
            backend: Backend::Synthetic(Box::new(scene)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// File stem, used as the specimen identifier and output directory name.
    pub fn stem(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "slide".to_string())
    }

    pub fn base_width(&self) -> u32 {
        self.base_width
    }

    pub fn base_height(&self) -> u32 {
        self.base_height
    }

    pub fn objective_power(&self) -> f64 {
        self.meta.objective_power
    }

    pub fn mpp(&self) -> (Option<f64>, Option<f64>) {
        (self.meta.mpp_x, self.meta.mpp_y)
    }

    pub fn levels(&self) -> &[StoredLevel] {
        &self.levels
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn check_magnification(&self, magnification: f64) -> Result<(), SlideError> {
        let max = self.objective_power();
        if !(magnification > 0.0) || magnification > max * (1.0 + 1e-9) {
            return Err(SlideError::MagnificationOutOfRange {
                requested: magnification,
                max,
            });
        }
        Ok(())
    }

    /// Pixel dimensions of the whole slide at `magnification`.
    pub fn dimensions_at(&self, magnification: f64) -> Result<(u32, u32), SlideError> {
        self.check_magnification(magnification)?;
        let p = self.objective_power();
        Ok((
            scaled_len(self.base_width, magnification, p),
            scaled_len(self.base_height, magnification, p),
        ))
    }

    fn candidate_levels(&self) -> Vec<(f64, LevelRef)> {
        let mut out: Vec<(f64, LevelRef)> = self
            .levels
            .iter()
            .map(|l| (l.downsample, LevelRef::Stored(l.index)))
            .collect();
        if self.levels.len() == 1 {
            let mut k = 1;
            while k < 31 {
                let f = 1u32 << k;
                out.push((f as f64, LevelRef::Derived(k)));
                if self.base_width.div_ceil(f) == 1 && self.base_height.div_ceil(f) == 1 {
                    break;
                }
                k += 1;
            }
        }
        out
    }

    fn level_dims(&self, level: LevelRef) -> (u32, u32) {
        match level {
            LevelRef::Stored(i) => (self.levels[i].width, self.levels[i].height),
            LevelRef::Derived(k) => {
                let f = 1u32 << k;
                (self.base_width.div_ceil(f), self.base_height.div_ceil(f))
            }
        }
    }

    /// Read `region`, resampled to exactly `region.width`×`region.height`.
    pub fn read_region(&self, region: &Region) -> Result<RasterTile, SlideError> {
        self.read_region_with(region, Exec::default())
    }

    pub fn read_region_with(&self, region: &Region, exec: Exec) -> Result<RasterTile, SlideError> {
        let (lw, lh) = self.dimensions_at(region.magnification)?;
        if region.width == 0
            || region.height == 0
            || region.x as u64 + region.width as u64 > lw as u64
            || region.y as u64 + region.height as u64 > lh as u64
        {
            return Err(SlideError::RegionOutOfBounds {
                region: *region,
                level_width: lw,
                level_height: lh,
            });
        }
        let wanted = self.objective_power() / region.magnification;
        let (level_ds, level) = self
            .candidate_levels()
            .into_iter()
            .filter(|(d, _)| *d <= wanted * (1.0 + 1e-9))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .expect("base level always qualifies");
        let (sw, sh) = self.level_dims(level);
        let scale = wanted / level_ds;
        if (scale - 1.0).abs() < 1e-9 && (sw, sh) == (lw, lh) {
            return self.read_level_rect(level, region.x, region.y, region.width, region.height, exec);
        }
        let (sx0, sx1) = source_span(region.x, region.width, scale, sw);
        let (sy0, sy1) = source_span(region.y, region.height, scale, sh);
        let src = self.read_level_rect(level, sx0, sy0, sx1 - sx0, sy1 - sy0, exec)?;
        Ok(area_resample(
            &src,
            sx0,
            sy0,
            sw,
            sh,
            scale,
            region.x,
            region.y,
            region.width,
            region.height,
        ))
    }

    fn read_level_rect(&self, level: LevelRef, x: u32, y: u32, w: u32, h: u32, exec: Exec) -> Result<RasterTile, SlideError> {
        match level {
            LevelRef::Stored(i) => self.read_stored(i, x, y, w, h, exec),
            LevelRef::Derived(k) => {
                let f = 1u32 << k;
                let bx0 = x * f;
                let by0 = y * f;
                let bx1 = ((x + w) as u64 * f as u64).min(self.base_width as u64) as u32;
                let by1 = ((y + h) as u64 * f as u64).min(self.base_height as u64) as u32;
                let mut img = self.read_stored(0, bx0, by0, bx1 - bx0, by1 - by0, exec)?;
                for _ in 0..k {
                    img = img.downsample_2x2();
                }
                debug_assert_eq!(img.dimensions(), (w, h));
                Ok(img)
            }
        }
    }

    fn read_stored(&self, index: usize, x: u32, y: u32, w: u32, h: u32, exec: Exec) -> Result<RasterTile, SlideError> {
        match &self.backend {
            Backend::Synthetic(scene) => Ok(scene.render_region(x, y, w, h)),
            Backend::Container { bytes, layouts } => {
                let layout = &layouts[index];
                let (tw, th) = (layout.tile_width, layout.tile_height);
                let cols = x / tw..(x + w).div_ceil(tw);
                let rows = y / th..(y + h).div_ceil(th);
                let cells: Vec<(u32, u32)> = rows
                    .flat_map(|r| cols.clone().map(move |c| (c, r)))
                    .collect();
                let exec = if cells.len() >= 4 { exec } else { Exec::Sequential };
                let tiles = exec.try_map(&cells, |&(c, r)| layout.decode_tile(bytes, c, r))?;
                let mut out = RasterTile::black(w, h);
                for (&(c, r), tile) in cells.iter().zip(&tiles) {
                    let tx0 = c * tw;
                    let ty0 = r * th;
                    let ix0 = x.max(tx0);
                    let iy0 = y.max(ty0);
                    let ix1 = (x + w).min(tx0 + tw);
                    let iy1 = (y + h).min(ty0 + th);
                    out.blit_window(tile, ix0 - tx0, iy0 - ty0, ix1 - ix0, iy1 - iy0, ix0 - x, iy0 - y);
                }
                Ok(out)
            }
        }
    }
}

/// A power of two when the level has exactly ceil-halved dimensions,
/// otherwise the width ratio.
fn level_downsample(bw: u32, bh: u32, w: u32, h: u32) -> f64 {
    for k in 0..31 {
        let f = 1u32 << k;
        if bw.div_ceil(f) == w && bh.div_ceil(f) == h {
            return f as f64;
        }
        if bw.div_ceil(f) < w {
            break;
        }
    }
    bw as f64 / w as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slide_io::synth::Pattern;
    use crate::slide_io::wtif::{encode_wtif, WtifOptions};

    fn gradient(w: u32, h: u32) -> RasterTile {
        RasterTile::from_fn(w, h, |x, y| [(x * 3) as u8, (y * 5) as u8, (x * y) as u8])
    }

    fn mem_slide(levels: &[RasterTile], tile: u32) -> SlideSource {
        let bytes = encode_wtif(levels, &WtifOptions { tile_width: tile, tile_height: tile, ..Default::default() }).unwrap();
        open_slide_bytes(bytes).unwrap()
    }

    #[test]
    fn dimensions_at_examples() {
        let src = mem_slide(&[RasterTile::black(4096, 3072)], 256);
        assert_eq!(src.dimensions_at(40.0).unwrap(), (4096, 3072));
        assert_eq!(src.dimensions_at(10.0).unwrap(), (1024, 768));
        assert!(matches!(src.dimensions_at(41.0), Err(SlideError::MagnificationOutOfRange { .. })));
        assert!(matches!(src.dimensions_at(0.0), Err(SlideError::MagnificationOutOfRange { .. })));
        let odd = mem_slide(&[RasterTile::black(4097, 3072)], 256);
        assert_eq!(odd.dimensions_at(20.0).unwrap(), (2049, 1536));
    }

    #[test]
    fn base_read_crosses_tile_boundaries() {
        let base = gradient(100, 60);
        let src = mem_slide(&[base.clone()], 16);
        let got = src.read_region(&Region::new(13, 7, 50, 40, 40.0)).unwrap();
        assert_eq!(got, base.crop(13, 7, 50, 40));
    }

    #[test]
    fn half_magnification_uses_derived_level() {
        let base = gradient(64, 48);
        let src = mem_slide(&[base.clone()], 16);
        let got = src.read_region(&Region::new(0, 0, 32, 24, 20.0)).unwrap();
        assert_eq!(got, base.downsample_2x2());
    }

    #[test]
    fn stored_lower_level_is_used() {
        let base = gradient(64, 48);
        // A deliberately different level 1 proves it is read, not derived.
        let l1 = RasterTile::filled(32, 24, [9, 9, 9]);
        let src = mem_slide(&[base, l1.clone()], 16);
        assert_eq!(src.levels().len(), 2);
        assert_eq!(src.levels()[1].downsample, 2.0);
        let got = src.read_region(&Region::new(0, 0, 32, 24, 20.0)).unwrap();
        assert_eq!(got, l1);
    }

    #[test]
    fn out_of_bounds_region() {
        let src = mem_slide(&[gradient(32, 32)], 16);
        assert!(matches!(
            src.read_region(&Region::new(20, 0, 13, 1, 40.0)),
            Err(SlideError::RegionOutOfBounds { .. })
        ));
        assert!(matches!(
            src.read_region(&Region::new(0, 0, 0, 1, 40.0)),
            Err(SlideError::RegionOutOfBounds { .. })
        ));
    }

    #[test]
    fn synthetic_backend_reads() {
        let spec = SyntheticSpec::new(90, 70, Pattern::Noise).with_seed(3);
        let src = SlideSource::from_synthetic(&spec, Path::new("x.synth")).unwrap();
        let full = spec.render().unwrap();
        assert_eq!(src.read_region(&Region::new(5, 6, 30, 20, 40.0)).unwrap(), full.crop(5, 6, 30, 20));
    }

    #[test]
    fn level_downsample_detection() {
        assert_eq!(level_downsample(4097, 3072, 2049, 1536), 2.0);
        assert_eq!(level_downsample(100, 100, 25, 25), 4.0);
        assert_eq!(level_downsample(100, 100, 30, 30), 100.0 / 30.0);
    }
}
