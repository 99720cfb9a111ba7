//! Deterministic synthetic slides.
//!
//! A [`SyntheticSpec`] describes content that can be rendered for any
//! rectangle independently: every pixel is a pure function of its position
//! and the spec. That makes `.synth` files usable as lazily rendered slides
//! and lets [`generate_synthetic`] write `.wtif` fixtures whose decoded
//! pixels are known exactly.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::meta::SlideMeta;
use super::wtif::{write_wtif, StorageCompression, WtifOptions};
use super::{open_slide, SlideError, SlideSource};
use crate::props::Properties;
use crate::raster::RasterTile;

/// Luminance above which a pixel counts as signal in [`GroundTruth`].
pub const TRUTH_SIGNAL_LUMINANCE: u8 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Rect { x, y, width, height }
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    Solid([u8; 3]),
    Checkerboard { cell: u32, a: [u8; 3], b: [u8; 3] },
    /// Top-left, top-right, bottom-left, bottom-right.
    Quadrants([[u8; 3]; 4]),
    /// Gaussian bright spots on black, like a fluorescence scan. Spots are
    /// placed so their whole footprint lies inside `region` (default: the
    /// whole slide).
    Spots { count: u32, sigma: f64, peak: u8, region: Option<Rect> },
    /// Textured stained ellipses on white, like a brightfield scan.
    Tissue { blobs: u32, region: Option<Rect> },
    /// Independent uniform noise per pixel.
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub width: u32,
    pub height: u32,
    pub objective_power: f64,
    pub mpp: Option<f64>,
    pub pattern: Pattern,
    pub seed: u64,
    /// Storage tile size used when written as `.wtif`.
    pub tile_size: u32,
    /// Number of pyramid levels written to `.wtif` (1 = base only).
    pub levels: u32,
    pub compression: StorageCompression,
}

impl SyntheticSpec {
    pub fn new(width: u32, height: u32, pattern: Pattern) -> Self {
        SyntheticSpec {
            width,
            height,
            objective_power: 40.0,
            mpp: Some(0.25),
            pattern,
            seed: 0,
            tile_size: 256,
            levels: 1,
            compression: StorageCompression::None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_levels(mut self, levels: u32) -> Self {
        self.levels = levels;
        self
    }

    pub fn with_power(mut self, power: f64) -> Self {
        self.objective_power = power;
        self
    }

    pub fn with_tile_size(mut self, tile: u32) -> Self {
        self.tile_size = tile;
        self
    }

    pub fn validate(&self) -> Result<(), SlideError> {
        let bad = |m: String| Err(SlideError::InvalidSpec(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("dimensions {}x{} must be positive", self.width, self.height));
        }
        if !(self.objective_power > 0.0 && self.objective_power.is_finite()) {
            return bad(format!("objective_power {} must be positive", self.objective_power));
        }
        if let Some(mpp) = self.mpp {
            if !(mpp > 0.0) {
                return bad(format!("mpp {mpp} must be positive"));
            }
        }
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.tile_size < 16 || self.tile_size % 16 != 0 {
            return bad(format!("tile_size {} must be a multiple of 16", self.tile_size));
        }
        let full = Rect::new(0, 0, self.width, self.height);
        match &self.pattern {
            Pattern::Checkerboard { cell, .. } if *cell == 0 => bad("checker cell must be positive".into()),
            Pattern::Spots { sigma, region, .. } => {
                if !(*sigma > 0.0) {
                    return bad(format!("spot sigma {sigma} must be positive"));
                }
                let r = region.unwrap_or(full);
                check_region(&r, self)?;
                let reach = spot_reach(*sigma);
                if r.width <= 2 * reach || r.height <= 2 * reach {
                    return bad(format!("spot region {r:?} too small for sigma {sigma}"));
                }
                Ok(())
            }
            Pattern::Tissue { region, .. } => {
                let r = region.unwrap_or(full);
                check_region(&r, self)?;
                if r.width < 8 || r.height < 8 {
                    return bad(format!("tissue region {r:?} too small"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Build the renderable scene (spot and blob placements drawn from the
    /// seed).
    pub fn scene(&self) -> Result<Scene, SlideError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let full = Rect::new(0, 0, self.width, self.height);
        let mut spots = Vec::new();
        let mut blobs = Vec::new();
        match &self.pattern {
            Pattern::Spots { count, sigma, peak, region } => {
                let r = region.unwrap_or(full);
                let reach = spot_reach(*sigma);
                for _ in 0..*count {
                    let cx = rng.random_range(r.x + reach..r.x + r.width - reach);
                    let cy = rng.random_range(r.y + reach..r.y + r.height - reach);
                    spots.push(Spot {
                        cx,
                        cy,
                        sigma: *sigma,
                        peak: *peak,
                        reach,
                    });
                }
            }
            Pattern::Tissue { blobs: n, region } => {
                let r = region.unwrap_or(full);
                let short = r.width.min(r.height) as f64;
                for _ in 0..*n {
                    let rx = rng.random_range(short / 16.0..short / 5.0).max(2.0);
                    let ry = rng.random_range(short / 16.0..short / 5.0).max(2.0);
                    let reach = rx.max(ry).ceil() as u32;
                    // Keep the bounding circle inside the region when possible.
                    let (lo_x, hi_x) = span_inside(r.x, r.width, reach);
                    let (lo_y, hi_y) = span_inside(r.y, r.height, reach);
                    let cx = rng.random_range(lo_x..=hi_x);
                    let cy = rng.random_range(lo_y..=hi_y);
                    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    let palette = [[196u8, 110, 170], [150, 80, 160], [220, 140, 180], [120, 60, 140]];
                    let color = palette[rng.random_range(0..palette.len())];
                    blobs.push(Blob {
                        cx,
                        cy,
                        rx,
                        ry,
                        cos: angle.cos(),
                        sin: angle.sin(),
                        color,
                        bounds: Rect::new(
                            cx.saturating_sub(reach),
                            cy.saturating_sub(reach),
                            2 * reach + 1,
                            2 * reach + 1,
                        ),
                        clip: r,
                    });
                }
            }
            _ => {}
        }
        Ok(Scene {
            spec: self.clone(),
            spots,
            blobs,
        })
    }

    /// Render the whole base level in memory.
    pub fn render(&self) -> Result<RasterTile, SlideError> {
        let scene = self.scene()?;
        Ok(scene.render_region(0, 0, self.width, self.height))
    }

    /// Parse the `.synth` text format (`key=value`).
    pub fn parse(text: &str) -> Result<Self, SlideError> {
        let props = Properties::parse(text).map_err(|e| SlideError::InvalidSpec(e.to_string()))?;
        let err = |e: crate::props::PropsError| SlideError::InvalidSpec(e.to_string());
        props
            .reject_unknown(&[
                "width", "height", "objective_power", "mpp", "pattern", "color", "color2", "cell", "colors",
                "spot_count", "spot_sigma", "spot_peak", "region", "blob_count", "seed", "tile_size", "levels",
                "compression", "jpeg_quality",
            ])
            .map_err(err)?;
        let width: u32 = props.parse_opt("width").map_err(err)?.ok_or_else(|| SlideError::InvalidSpec("missing width".into()))?;
        let height: u32 = props.parse_opt("height").map_err(err)?.ok_or_else(|| SlideError::InvalidSpec("missing height".into()))?;
        let color = |key: &str, default: [u8; 3]| -> Result<[u8; 3], SlideError> {
            props.get(key).map(parse_rgb).unwrap_or(Ok(default))
        };
        let region = props.get("region").map(parse_rect).transpose()?;
        let pattern = match props.get("pattern").unwrap_or("solid") {
            "solid" => Pattern::Solid(color("color", [255, 255, 255])?),
            "checker" => Pattern::Checkerboard {
                cell: props.parse_opt("cell").map_err(err)?.unwrap_or(64),
                a: color("color", [0, 0, 0])?,
                b: color("color2", [255, 255, 255])?,
            },
            "quadrants" => {
                let text = props.get("colors").unwrap_or("255,0,0;0,255,0;0,0,255;255,255,0");
                let cols: Vec<[u8; 3]> = text.split(';').map(parse_rgb).collect::<Result<_, _>>()?;
                let arr: [[u8; 3]; 4] = cols
                    .try_into()
                    .map_err(|_| SlideError::InvalidSpec("quadrants needs exactly 4 colors".into()))?;
                Pattern::Quadrants(arr)
            }
            "spots" => Pattern::Spots {
                count: props.parse_opt("spot_count").map_err(err)?.unwrap_or(50),
                sigma: props.parse_opt("spot_sigma").map_err(err)?.unwrap_or(4.0),
                peak: props.parse_opt("spot_peak").map_err(err)?.unwrap_or(255),
                region,
            },
            "tissue" => Pattern::Tissue {
                blobs: props.parse_opt("blob_count").map_err(err)?.unwrap_or(12),
                region,
            },
            "noise" => Pattern::Noise,
            other => return Err(SlideError::InvalidSpec(format!("unknown pattern {other:?}"))),
        };
        let compression = match props.get("compression").unwrap_or("none") {
            "none" => StorageCompression::None,
            "jpeg" => StorageCompression::Jpeg {
                quality: props.parse_opt("jpeg_quality").map_err(err)?.unwrap_or(90),
            },
            other => return Err(SlideError::InvalidSpec(format!("unknown compression {other:?}"))),
        };
        let spec = SyntheticSpec {
            width,
            height,
            objective_power: props.parse_opt("objective_power").map_err(err)?.unwrap_or(40.0),
            mpp: props.parse_opt("mpp").map_err(err)?,
            pattern,
            seed: props.parse_opt("seed").map_err(err)?.unwrap_or(0),
            tile_size: props.parse_opt("tile_size").map_err(err)?.unwrap_or(256),
            levels: props.parse_opt("levels").map_err(err)?.unwrap_or(1),
            compression,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn check_region(r: &Rect, spec: &SyntheticSpec) -> Result<(), SlideError> {
    if r.width == 0 || r.height == 0 || r.x + r.width > spec.width || r.y + r.height > spec.height {
        return Err(SlideError::InvalidSpec(format!(
            "region {r:?} not inside {}x{}",
            spec.width, spec.height
        )));
    }
    Ok(())
}

fn span_inside(start: u32, len: u32, reach: u32) -> (u32, u32) {
    if len > 2 * reach {
        (start + reach, start + len - reach - 1)
    } else {
        let mid = start + len / 2;
        (mid, mid)
    }
}

fn parse_rgb(s: &str) -> Result<[u8; 3], SlideError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(SlideError::InvalidSpec(format!("expected r,g,b, got {s:?}")));
    }
    let mut out = [0u8; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| SlideError::InvalidSpec(format!("bad color component {p:?}")))?;
    }
    Ok(out)
}

fn parse_rect(s: &str) -> Result<Rect, SlideError> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| SlideError::InvalidSpec(format!("bad region {s:?}")))?;
    match parts.as_slice() {
        [x, y, w, h] => Ok(Rect::new(*x, *y, *w, *h)),
        _ => Err(SlideError::InvalidSpec(format!("region needs x,y,w,h, got {s:?}"))),
    }
}

/// Pixel radius beyond which a spot contributes nothing.
fn spot_reach(sigma: f64) -> u32 {
    (3.0 * sigma).ceil() as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spot {
    pub cx: u32,
    pub cy: u32,
    pub sigma: f64,
    pub peak: u8,
    pub reach: u32,
}

impl Spot {
    pub fn bounds(&self) -> Rect {
        Rect::new(self.cx - self.reach, self.cy - self.reach, 2 * self.reach + 1, 2 * self.reach + 1)
    }

    #[inline]
    fn value_at(&self, x: u32, y: u32) -> u8 {
        let dx = x as f64 - self.cx as f64;
        let dy = y as f64 - self.cy as f64;
        let d2 = dx * dx + dy * dy;
        let r = self.reach as f64;
        if d2 > r * r {
            return 0;
        }
        (self.peak as f64 * (-d2 / (2.0 * self.sigma * self.sigma)).exp()).round() as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub cx: u32,
    pub cy: u32,
    pub rx: f64,
    pub ry: f64,
    cos: f64,
    sin: f64,
    pub color: [u8; 3],
    pub bounds: Rect,
    clip: Rect,
}

impl Blob {
    fn covers(&self, x: u32, y: u32) -> bool {
        if x < self.clip.x || y < self.clip.y || x >= self.clip.x + self.clip.width || y >= self.clip.y + self.clip.height {
            return false;
        }
        let dx = x as f64 - self.cx as f64;
        let dy = y as f64 - self.cy as f64;
        let u = (dx * self.cos + dy * self.sin) / self.rx;
        let v = (-dx * self.sin + dy * self.cos) / self.ry;
        u * u + v * v <= 1.0
    }
}

#[inline]
fn mix(x: u32, y: u32, seed: u64) -> u64 {
    let mut z = seed ^ ((x as u64) << 32 | y as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A prepared synthetic scene.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SyntheticSpec,
    spots: Vec<Spot>,
    blobs: Vec<Blob>,
}

/// What the generator knows about its own output.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Pixels whose luminance exceeds [`TRUTH_SIGNAL_LUMINANCE`].
    pub signal_pixels: u64,
    pub spots: Vec<Spot>,
    pub blob_bounds: Vec<Rect>,
}

impl Scene {
    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn spots(&self) -> &[Spot] {
        &self.spots
    }

    /// Render an arbitrary base-level rectangle.
    pub fn render_region(&self, x0: u32, y0: u32, w: u32, h: u32) -> RasterTile {
        let spec = &self.spec;
        let area = Rect::new(x0, y0, w, h);
        match &spec.pattern {
            Pattern::Solid(c) => RasterTile::filled(w, h, *c),
            Pattern::Checkerboard { cell, a, b } => RasterTile::from_fn(w, h, |x, y| {
                if ((x0 + x) / cell + (y0 + y) / cell) % 2 == 0 {
                    *a
                } else {
                    *b
                }
            }),
            Pattern::Quadrants(c) => {
                let (hx, hy) = (spec.width / 2, spec.height / 2);
                RasterTile::from_fn(w, h, |x, y| {
                    let right = (x0 + x) >= hx;
                    let bottom = (y0 + y) >= hy;
                    c[(bottom as usize) * 2 + right as usize]
                })
            }
            Pattern::Noise => RasterTile::from_fn(w, h, |x, y| {
                let v = mix(x0 + x, y0 + y, spec.seed);
                [v as u8, (v >> 8) as u8, (v >> 16) as u8]
            }),
            Pattern::Spots { .. } => {
                let mut out = RasterTile::black(w, h);
                for s in self.spots.iter().filter(|s| s.bounds().intersects(&area)) {
                    let b = s.bounds();
                    let xs = b.x.max(x0)..(b.x + b.width).min(x0 + w);
                    let ys = b.y.max(y0)..(b.y + b.height).min(y0 + h);
                    for y in ys {
                        for x in xs.clone() {
                            let v = s.value_at(x, y);
                            let cur = out.pixel(x - x0, y - y0)[0];
                            if v > cur {
                                out.set_pixel(x - x0, y - y0, [v, v, v]);
                            }
                        }
                    }
                }
                out
            }
            Pattern::Tissue { .. } => {
                let relevant: Vec<&Blob> = self.blobs.iter().filter(|b| b.bounds.intersects(&area)).collect();
                RasterTile::from_fn(w, h, |x, y| {
                    let (gx, gy) = (x0 + x, y0 + y);
                    for b in &relevant {
                        if b.covers(gx, gy) {
                            let n = mix(gx, gy, spec.seed ^ 0xA5A5);
                            let jitter = |c: u8, k: u32| -> u8 {
                                let d = ((n >> (k * 8)) & 0x3F) as i32 - 32;
                                (c as i32 + d).clamp(0, 255) as u8
                            };
                            return [jitter(b.color[0], 0), jitter(b.color[1], 1), jitter(b.color[2], 2)];
                        }
                    }
                    [255, 255, 255]
                })
            }
        }
    }

    /// Count signal pixels by rendering in row bands.
    pub fn ground_truth(&self) -> GroundTruth {
        let (w, h) = (self.spec.width, self.spec.height);
        let band = (4_000_000 / w.max(1)).clamp(1, h);
        let mut signal = 0u64;
        let mut y = 0;
        while y < h {
            let bh = band.min(h - y);
            let tile = self.render_region(0, y, w, bh);
            signal += tile
                .pixels()
                .filter(|p| crate::raster::luminance(*p) > TRUTH_SIGNAL_LUMINANCE)
                .count() as u64;
            y += bh;
        }
        GroundTruth {
            signal_pixels: signal,
            spots: self.spots.clone(),
            blob_bounds: self.blobs.iter().map(|b| b.bounds).collect(),
        }
    }
}

/// Render `spec`, write it to `out` as a `.wtif` with a `.meta` sidecar, and
/// reopen it.
pub fn generate_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<SlideSource, SlideError> {
    spec.validate()?;
    let base = spec.render()?;
    let mut levels = vec![base];
    while levels.len() < spec.levels as usize {
        let last = levels.last().expect("non-empty");
        if last.width() == 1 && last.height() == 1 {
            break;
        }
        levels.push(last.downsample_2x2());
    }
    write_wtif(
        out,
        &levels,
        &WtifOptions {
            tile_width: spec.tile_size,
            tile_height: spec.tile_size,
            compression: spec.compression,
        },
    )?;
    let meta = SlideMeta {
        objective_power: spec.objective_power,
        mpp_x: spec.mpp,
        mpp_y: spec.mpp,
    };
    std::fs::write(SlideMeta::sidecar_path(out), meta.to_text())?;
    open_slide(out)
}
