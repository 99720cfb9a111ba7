use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use super::descriptor::parse_descriptor;
use super::plan::{DziPyramid, TileFormat};
use super::{io_err, DziError};
use crate::codec;
use crate::raster::RasterTile;

/// Largest mean absolute channel difference accepted between a JPEG level
/// downsampled by two and the JPEG level below it.
pub const JPEG_TOLERANCE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MalformedDescriptor(String),
    MissingTile {
        level: u32,
        col: u32,
        row: u32,
    },
    ExtraTile(String),
    DimensionMismatch {
        level: u32,
        col: u32,
        row: u32,
        expected: (u32, u32),
        actual: (u32, u32),
    },
    UndecodableTile {
        level: u32,
        col: u32,
        row: u32,
        reason: String,
    },
    /// Level `level` differs from level `level + 1` halved.
    DownsampleMismatch {
        level: u32,
        mean_abs_diff: f64,
        tolerance: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MalformedDescriptor(why) => write!(f, "malformed descriptor: {why}"),
            Violation::MissingTile { level, col, row } => write!(f, "missing tile {level}/{col}_{row}"),
            Violation::ExtraTile(path) => write!(f, "extra tile {path}"),
            Violation::DimensionMismatch {
                level,
                col,
                row,
                expected,
                actual,
            } => write!(
                f,
                "dimension mismatch {level}/{col}_{row}: expected {}x{}, found {}x{}",
                expected.0, expected.1, actual.0, actual.1
            ),
            Violation::UndecodableTile { level, col, row, reason } => {
                write!(f, "undecodable tile {level}/{col}_{row}: {reason}")
            }
            Violation::DownsampleMismatch {
                level,
                mean_abs_diff,
                tolerance,
            } => write!(
                f,
                "level {level} differs from level {} halved by {mean_abs_diff:.3} (tolerance {tolerance})",
                level + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub descriptor: PathBuf,
    pub pyramid: Option<DziPyramid>,
    pub tiles_checked: u64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Validate the single pyramid (`*.dzi` plus `*_files/`) in `dir`.
pub fn validate_pyramid(dir: &Path) -> Result<ValidationReport, DziError> {
    let entries = std::fs::read_dir(dir).map_err(|e| DziError::NotAPyramid(format!("{}: {e}", dir.display())))?;
    let mut names = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "dzi") && path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    match names.as_slice() {
        [name] => validate_named(dir, name),
        [] => Err(DziError::NotAPyramid(format!("no .dzi descriptor in {}", dir.display()))),
        _ => Err(DziError::NotAPyramid(format!(
            "{} descriptors in {}; expected one",
            names.len(),
            dir.display()
        ))),
    }
}

/// Validate `{dir}/{name}.dzi` against `{dir}/{name}_files/`.
pub fn validate_named(dir: &Path, name: &str) -> Result<ValidationReport, DziError> {
    let descriptor = dir.join(format!("{name}.dzi"));
    let tiles_dir = dir.join(format!("{name}_files"));
    if !descriptor.is_file() {
        return Err(DziError::NotAPyramid(format!("{} missing", descriptor.display())));
    }
    if !tiles_dir.is_dir() {
        return Err(DziError::NotAPyramid(format!("{} missing", tiles_dir.display())));
    }
    let mut report = ValidationReport {
        descriptor: descriptor.clone(),
        pyramid: None,
        tiles_checked: 0,
        violations: Vec::new(),
    };
    let text = match std::fs::read(&descriptor).map_err(io_err(&descriptor)).map(String::from_utf8) {
        Ok(Ok(t)) => t,
        Ok(Err(_)) => {
            report.violations.push(Violation::MalformedDescriptor("not UTF-8".into()));
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    let pyramid = match parse_descriptor(&text) {
        Ok(p) => p,
        Err(e) => {
            report.violations.push(Violation::MalformedDescriptor(e.to_string()));
            return Ok(report);
        }
    };
    report.pyramid = Some(pyramid);

    report.violations.extend(extra_entries(&tiles_dir, &pyramid)?);

    // Assembled levels, finest first; `None` when a tile problem prevents it.
    let mut previous: Option<RasterTile> = None;
    for level in (0..=pyramid.max_level()).rev() {
        let assembled = check_level(&tiles_dir, &pyramid, level, &mut report)?;
        if let (Some(finer), Some(this)) = (&previous, &assembled) {
            let halved = finer.downsample_2x2();
            if let Some(diff) = halved.mean_abs_diff(this) {
                let tolerance = match pyramid.format {
                    TileFormat::Png => 0.0,
                    TileFormat::Jpg => JPEG_TOLERANCE,
                };
                if diff > tolerance {
                    report.violations.push(Violation::DownsampleMismatch {
                        level,
                        mean_abs_diff: diff,
                        tolerance,
                    });
                }
            }
        }
        previous = assembled;
    }
    Ok(report)
}

/// Check every planned tile of `level` and stitch the non-overlap parts
/// into the full level raster.
fn check_level(
    tiles_dir: &Path,
    pyramid: &DziPyramid,
    level: u32,
    report: &mut ValidationReport,
) -> Result<Option<RasterTile>, DziError> {
    let spec = pyramid.level(level).expect("level within plan");
    let dir = tiles_dir.join(level.to_string());
    let mut canvas = RasterTile::black(spec.width, spec.height);
    let mut complete = true;
    let ts = pyramid.tile_size;
    for row in 0..spec.rows {
        for col in 0..spec.columns {
            let rect = pyramid.tile_rect(level, col, row).expect("tile within plan");
            let path = dir.join(pyramid.tile_file_name(col, row));
            let bytes = match std::fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    report.violations.push(Violation::MissingTile { level, col, row });
                    complete = false;
                    continue;
                }
                Err(e) => return Err(io_err(&path)(e)),
            };
            report.tiles_checked += 1;
            let tile = match codec::decode_any(&bytes) {
                Ok(t) => t,
                Err(e) => {
                    report.violations.push(Violation::UndecodableTile {
                        level,
                        col,
                        row,
                        reason: e.to_string(),
                    });
                    complete = false;
                    continue;
                }
            };
            if tile.dimensions() != (rect.width, rect.height) {
                report.violations.push(Violation::DimensionMismatch {
                    level,
                    col,
                    row,
                    expected: (rect.width, rect.height),
                    actual: tile.dimensions(),
                });
                complete = false;
                continue;
            }
            let (cx, cy) = (col * ts, row * ts);
            let cw = ts.min(spec.width - cx);
            let ch = ts.min(spec.height - cy);
            canvas.blit_window(&tile, cx - rect.x, cy - rect.y, cw, ch, cx, cy);
        }
    }
    Ok(complete.then_some(canvas))
}

fn extra_entries(tiles_dir: &Path, pyramid: &DziPyramid) -> Result<Vec<Violation>, DziError> {
    let mut out = Vec::new();
    let mut levels = BTreeSet::new();
    for entry in std::fs::read_dir(tiles_dir).map_err(io_err(tiles_dir))? {
        let entry = entry.map_err(io_err(tiles_dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        match name.parse::<u32>() {
            Ok(level) if level <= pyramid.max_level() && entry.path().is_dir() && name == level.to_string() => {
                levels.insert(level);
            }
            _ => out.push(Violation::ExtraTile(name)),
        }
    }
    for level in levels {
        let spec = pyramid.level(level).expect("level within plan");
        let dir = tiles_dir.join(level.to_string());
        for entry in std::fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry.map_err(io_err(&dir))?.file_name().to_string_lossy().into_owned();
            let planned = parse_tile_file(&name, pyramid.format)
                .is_some_and(|(c, r)| c < spec.columns && r < spec.rows && name == pyramid.tile_file_name(c, r));
            if !planned {
                out.push(Violation::ExtraTile(format!("{level}/{name}")));
            }
        }
    }
    Ok(out)
}

fn parse_tile_file(name: &str, format: TileFormat) -> Option<(u32, u32)> {
    let stem = name.strip_suffix(format.extension())?.strip_suffix('.')?;
    let (c, r) = stem.split_once('_')?;
    Some((c.parse().ok()?, r.parse().ok()?))
}
