use std::fmt::Write as _;
use std::path::PathBuf;

use super::classify::{classify, Algorithm, Score, Verdict};
use super::tiff_out::write_rgb_tiff;
use super::{io_err, plan_grid, SplitError, SplitRequest, TileRecord, EMPTY_DIR, LOG_FILE};
use crate::exec::Exec;
use crate::slide_io::Region;

pub const LOG_HEADER: &str = "name,x,y,w,h,algorithm,measurements,verdict";

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub directory: PathBuf,
    pub log_path: PathBuf,
    pub records: Vec<TileRecord>,
}

impl SplitOutcome {
    pub fn kept(&self) -> usize {
        self.records.iter().filter(|r| r.verdict == Verdict::Kept).count()
    }

    pub fn empty(&self) -> usize {
        self.records.len() - self.kept()
    }
}

pub fn split_slide(request: &SplitRequest<'_>) -> Result<SplitOutcome, SplitError> {
    split_slide_with(request, Exec::default())
}

/// Split, classify and write every tile. Output is assembled in a hidden
/// staging directory and renamed into place, so a failure leaves no partial
/// `{stem}/` directory behind. An existing `{stem}/` is replaced.
pub fn split_slide_with(request: &SplitRequest<'_>, exec: Exec) -> Result<SplitOutcome, SplitError> {
    request.validate()?;
    let grid = plan_grid(request)?;
    let stem = request.source.stem();
    let final_dir = request.output_dir.join(&stem);
    std::fs::create_dir_all(&request.output_dir).map_err(io_err(&request.output_dir))?;
    let staging = request.output_dir.join(format!(
        ".{stem}.partial-{}-{}",
        std::process::id(),
        chrono::Utc::now().timestamp_nanos_opt().unwrap_or_default()
    ));
    std::fs::create_dir(&staging).map_err(io_err(&staging))?;

    let result = (|| {
        let results = exec.try_map(&grid.cells, |cell| -> Result<(Verdict, Score), SplitError> {
            let tile = request.source.read_region(&cell.region)?;
            let (verdict, score) = classify(&tile, &request.policy)?;
            let dir = match verdict {
                Verdict::Kept => staging.clone(),
                Verdict::Empty => {
                    let d = staging.join(EMPTY_DIR);
                    std::fs::create_dir_all(&d).map_err(io_err(&d))?;
                    d
                }
            };
            let path = dir.join(format!("{}.tif", cell.label()));
            write_rgb_tiff(&path, &tile).map_err(io_err(&path))?;
            Ok((verdict, score))
        })?;
        let records: Vec<TileRecord> = grid
            .cells
            .iter()
            .zip(results)
            .map(|(cell, (verdict, score))| {
                let name = cell.label();
                let file = format!("{name}.tif");
                let output_path = match verdict {
                    Verdict::Kept => final_dir.join(file),
                    Verdict::Empty => final_dir.join(EMPTY_DIR).join(file),
                };
                TileRecord {
                    name,
                    region: cell.region,
                    verdict,
                    score,
                    output_path,
                }
            })
            .collect();
        let log_text = render_log(&records, request.policy.algorithm);
        let staged_log = staging.join(LOG_FILE);
        std::fs::write(&staged_log, log_text).map_err(io_err(&staged_log))?;
        Ok(records)
    })();

    let records = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    if final_dir.exists() {
        std::fs::remove_dir_all(&final_dir).map_err(io_err(&final_dir))?;
    }
    if let Err(e) = std::fs::rename(&staging, &final_dir) {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(io_err(&final_dir)(e));
    }
    tracing::info!(
        slide = %request.source.path().display(),
        tiles = records.len(),
        "split complete"
    );
    Ok(SplitOutcome {
        log_path: final_dir.join(LOG_FILE),
        directory: final_dir,
        records,
    })
}

fn render_log(records: &[TileRecord], algorithm: Algorithm) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(LOG_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.name,
            r.region.x,
            r.region.y,
            r.region.width,
            r.region.height,
            algorithm,
            r.score.to_log_field(),
            r.verdict
        );
    }
    s
}

/// One parsed `log.txt` row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub name: String,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub algorithm: Algorithm,
    pub score: Score,
    pub verdict: Verdict,
}

impl LogEntry {
    pub fn region(&self, magnification: f64) -> Region {
        Region::new(self.x, self.y, self.width, self.height, magnification)
    }
}

pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == LOG_HEADER => {}
        other => return Err(format!("unexpected log header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(format!("line {}: expected 8 fields, got {}", i + 2, f.len()));
            }
            let num = |s: &str| s.parse::<u32>().map_err(|e| format!("line {}: {e}", i + 2));
            let algorithm: Algorithm = f[5].parse()?;
            Ok(LogEntry {
                name: f[0].to_string(),
                x: num(f[1])?,
                y: num(f[2])?,
                width: num(f[3])?,
                height: num(f[4])?,
                algorithm,
                score: Score::parse_log_field(algorithm, f[6])?,
                verdict: f[7].parse()?,
            })
        })
        .collect()
}
