use std::path::{Path, PathBuf};
use std::time::Duration;

use super::PipelineError;
use crate::deepzoom::{PyramidLayout, TileFormat, DEFAULT_JPEG_QUALITY, DEFAULT_OVERLAP, DEFAULT_TILE_SIZE};
use crate::props::{Properties, PropsError};
use crate::snapshot::{SnapshotConfig, DEFAULT_FRACTION, DEFAULT_QUALITY};

pub const DIRECTORY_KEYS: [&str; 7] = [
    "ndpi_new_dir",
    "ndpi_processed_dir",
    "ndpi_failed_dir",
    "jpeg_processing_dir",
    "jpeg_processed_dir",
    "jpeg_failed_dir",
    "publish_dir",
];

pub const CONFIG_KEYS: &[&str] = &[
    "ndpi_new_dir",
    "ndpi_processed_dir",
    "ndpi_failed_dir",
    "jpeg_processing_dir",
    "jpeg_processed_dir",
    "jpeg_failed_dir",
    "publish_dir",
    "catalog_path",
    "snapshot_magnification",
    "snapshot_quality",
    "watermark_path",
    "dzi_tile_size",
    "dzi_overlap",
    "dzi_quality",
    "notify_mode",
    "notify_target",
    "notify_from",
    "notify_to",
    "watch_interval_secs",
];

pub const DEFAULT_FAILURE_REPORT: &str = "failures.jsonl";
pub const DEFAULT_WATCH_INTERVAL: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NotifySettings {
    /// Append one JSON object per failure to this file.
    File(PathBuf),
    Smtp { server: String, from: String, to: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub ndpi_new_dir: PathBuf,
    pub ndpi_processed_dir: PathBuf,
    pub ndpi_failed_dir: PathBuf,
    pub jpeg_processing_dir: PathBuf,
    pub jpeg_processed_dir: PathBuf,
    pub jpeg_failed_dir: PathBuf,
    pub publish_dir: PathBuf,
    pub catalog_path: PathBuf,
    pub snapshot: SnapshotConfig,
    pub dzi_layout: PyramidLayout,
    pub dzi_quality: u8,
    pub notify: NotifySettings,
    pub watch_interval: Duration,
}

impl PipelineConfig {
    /// Config rooted at `root` with the conventional folder names and
    /// documented defaults for everything else.
    pub fn with_root(root: &Path) -> Self {
        PipelineConfig {
            ndpi_new_dir: root.join("NDPI-New"),
            ndpi_processed_dir: root.join("NDPI-Processed"),
            ndpi_failed_dir: root.join("NDPI-Failed"),
            jpeg_processing_dir: root.join("JPEG-Processing"),
            jpeg_processed_dir: root.join("JPEG-Processed"),
            jpeg_failed_dir: root.join("JPEG-Failed"),
            publish_dir: root.join("publish"),
            catalog_path: root.join("catalog.sqlite"),
            snapshot: SnapshotConfig::default(),
            dzi_layout: PyramidLayout::default(),
            dzi_quality: DEFAULT_JPEG_QUALITY,
            notify: NotifySettings::File(root.join(DEFAULT_FAILURE_REPORT)),
            watch_interval: DEFAULT_WATCH_INTERVAL,
        }
    }

    pub fn directories(&self) -> [(&'static str, &Path); 7] {
        [
            ("ndpi_new_dir", &self.ndpi_new_dir),
            ("ndpi_processed_dir", &self.ndpi_processed_dir),
            ("ndpi_failed_dir", &self.ndpi_failed_dir),
            ("jpeg_processing_dir", &self.jpeg_processing_dir),
            ("jpeg_processed_dir", &self.jpeg_processed_dir),
            ("jpeg_failed_dir", &self.jpeg_failed_dir),
            ("publish_dir", &self.publish_dir),
        ]
    }

    /// Parse a `snapshot-creator.properties` file. Relative paths resolve
    /// against `base_dir`.
    pub fn from_properties(props: &Properties, base_dir: &Path) -> Result<Self, PropsError> {
        props.reject_unknown(CONFIG_KEYS)?;
        let path = |key: &str| -> Result<PathBuf, PropsError> {
            let v = props.require(key)?;
            if v.is_empty() {
                return Err(props.invalid(key, "path is empty"));
            }
            Ok(base_dir.join(v))
        };
        let mut dirs = Vec::with_capacity(7);
        for key in DIRECTORY_KEYS {
            dirs.push(path(key)?);
        }
        let catalog_path = path("catalog_path")?;

        let magnification: Option<f64> = props.parse_opt("snapshot_magnification")?;
        if matches!(magnification, Some(m) if !(m > 0.0 && m.is_finite())) {
            return Err(props.invalid("snapshot_magnification", "must be positive"));
        }
        let jpeg_quality: u8 = props.parse_opt("snapshot_quality")?.unwrap_or(DEFAULT_QUALITY);
        if !(1..=100).contains(&jpeg_quality) {
            return Err(props.invalid("snapshot_quality", "must be within 1..=100"));
        }
        let watermark_path = props.get("watermark_path").filter(|v| !v.is_empty()).map(|v| base_dir.join(v));
        let snapshot = SnapshotConfig {
            magnification,
            jpeg_quality,
            watermark_path,
            fraction: DEFAULT_FRACTION,
        };

        let tile_size: u32 = props.parse_opt("dzi_tile_size")?.unwrap_or(DEFAULT_TILE_SIZE);
        let overlap: u32 = props.parse_opt("dzi_overlap")?.unwrap_or(DEFAULT_OVERLAP);
        if tile_size == 0 {
            return Err(props.invalid("dzi_tile_size", "must be at least 1"));
        }
        if overlap >= tile_size {
            return Err(props.invalid("dzi_overlap", "must be smaller than dzi_tile_size"));
        }
        let dzi_quality: u8 = props.parse_opt("dzi_quality")?.unwrap_or(DEFAULT_JPEG_QUALITY);
        if !(1..=100).contains(&dzi_quality) {
            return Err(props.invalid("dzi_quality", "must be within 1..=100"));
        }

        let notify = match props.get("notify_mode").unwrap_or("file") {
            "file" => NotifySettings::File(base_dir.join(props.get("notify_target").unwrap_or(DEFAULT_FAILURE_REPORT))),
            "smtp" => {
                let server = props.require("notify_target")?.to_string();
                if !server.contains(':') {
                    return Err(props.invalid("notify_target", "SMTP target must be host:port"));
                }
                NotifySettings::Smtp {
                    server,
                    from: props.get("notify_from").unwrap_or("slidepress@localhost").to_string(),
                    to: props.get("notify_to").unwrap_or("admin@localhost").to_string(),
                }
            }
            _ => return Err(props.invalid("notify_mode", "expected file or smtp")),
        };
        let watch_secs: u64 = props
            .parse_opt("watch_interval_secs")?
            .unwrap_or(DEFAULT_WATCH_INTERVAL.as_secs());
        if watch_secs == 0 {
            return Err(props.invalid("watch_interval_secs", "must be at least 1"));
        }

        let mut it = dirs.into_iter();
        let mut next = || it.next().expect("seven directories");
        Ok(PipelineConfig {
            ndpi_new_dir: next(),
            ndpi_processed_dir: next(),
            ndpi_failed_dir: next(),
            jpeg_processing_dir: next(),
            jpeg_processed_dir: next(),
            jpeg_failed_dir: next(),
            publish_dir: next(),
            catalog_path,
            snapshot,
            dzi_layout: PyramidLayout {
                tile_size,
                overlap,
                format: TileFormat::Jpg,
            },
            dzi_quality,
            notify,
            watch_interval: Duration::from_secs(watch_secs),
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let props = Properties::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let config = Self::from_properties(&props, base)?;
        config.validate()?;
        Ok(config)
    }

    /// The seven folders must be distinct and none may contain another.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let dirs = self.directories();
        for (i, (ka, a)) in dirs.iter().enumerate() {
            for (kb, b) in &dirs[i + 1..] {
                if a == b || a.starts_with(b) || b.starts_with(a) {
                    return Err(PipelineError::InvalidConfig(format!(
                        "{ka} ({}) and {kb} ({}) must be separate folders",
                        a.display(),
                        b.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn ensure_directories(&self) -> Result<(), PipelineError> {
        for (_, dir) in self.directories() {
            std::fs::create_dir_all(dir).map_err(super::io_err(dir))?;
        }
        Ok(())
    }

    /// Lock file guarding against concurrent batches.
    pub fn lock_path(&self) -> PathBuf {
        let parent = self
            .ndpi_new_dir
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        parent.join(".slidepress-pipeline.lock")
    }
}
