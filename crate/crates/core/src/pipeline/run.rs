use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::config::PipelineConfig;
use super::fsops::{list_files, move_file, move_into};
use super::lock::BatchLock;
use super::notify::{notifier_for, FailureNotice, Notifier};
use super::{io_err, now, JobKind, JobState, PipelineError, RunReport, SlideJob, Stage};
use crate::catalog::{Catalog, CatalogError};
use crate::codec;
use crate::deepzoom::{build_pyramid, validate_named, BuildOptions};
use crate::slide_io::open_slide;
use crate::snapshot::{render_snapshot, specimen_id_from_jpeg};

/// Where a published specimen lives under `publish_dir`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishedPaths {
    pub dir: PathBuf,
    pub descriptor: PathBuf,
    pub tiles_dir: PathBuf,
    pub snapshot: PathBuf,
}

pub fn publish_layout(publish_dir: &Path, specimen_id: &str) -> PublishedPaths {
    let dir = publish_dir.join(specimen_id);
    PublishedPaths {
        descriptor: dir.join(format!("{specimen_id}.dzi")),
        tiles_dir: dir.join(format!("{specimen_id}_files")),
        snapshot: dir.join(format!("{specimen_id}.jpg")),
        dir,
    }
}

/// Run one batch with the catalog and notifier named in `config`.
pub fn run_batch(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let catalog = Catalog::open(&config.catalog_path)?;
    let notifier = notifier_for(&config.notify);
    run_batch_with(config, &catalog, notifier.as_ref())
}

/// Process every slide in the inbox (in name order), then every snapshot
/// still waiting in the processing folder. Per-job failures are recorded
/// and never abort the batch.
pub fn run_batch_with(config: &PipelineConfig, catalog: &Catalog, notifier: &dyn Notifier) -> Result<RunReport, PipelineError> {
    config.validate()?;
    config.ensure_directories()?;
    let _lock = BatchLock::acquire(&config.lock_path())?;
    let mut batch = Batch {
        config,
        catalog,
        notifier,
        report: RunReport::default(),
    };

    let waiting: BTreeSet<PathBuf> = list_files(&config.jpeg_processing_dir)?.into_iter().collect();
    let mut consumed: BTreeSet<PathBuf> = BTreeSet::new();

    let inbox = list_files(&config.ndpi_new_dir)?;
    let (sidecars, slides): (Vec<PathBuf>, Vec<PathBuf>) = inbox
        .into_iter()
        .partition(|p| p.extension().is_some_and(|e| e == "meta"));
    let slide_stems: BTreeSet<String> = slides.iter().map(|p| stem(p)).collect();
    let mut jobs: Vec<(PathBuf, Option<PathBuf>)> = slides
        .iter()
        .map(|s| {
            let meta = s.with_extension("meta");
            (s.clone(), sidecars.contains(&meta).then_some(meta))
        })
        .collect();
    // Sidecars without a slide are inputs too; they fail on open.
    jobs.extend(
        sidecars
            .iter()
            .filter(|m| !slide_stems.contains(&stem(m)))
            .map(|m| (m.clone(), None)),
    );
    jobs.sort();

    for (slide, sidecar) in jobs {
        let override_jpeg = config.jpeg_processing_dir.join(format!("{}.jpg", stem(&slide)));
        let has_override = waiting.contains(&override_jpeg) && !consumed.contains(&override_jpeg);
        let used = batch.slide_job(&slide, sidecar.as_deref(), has_override.then_some(override_jpeg.as_path()));
        if used {
            consumed.insert(override_jpeg);
        }
    }
    for jpeg in waiting.difference(&consumed) {
        if jpeg.exists() {
            batch.snapshot_job(jpeg);
        }
    }

    let report = batch.report;
    tracing::info!(
        published = report.published,
        failed = report.failed,
        "batch complete"
    );
    Ok(report)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

struct Batch<'a> {
    config: &'a PipelineConfig,
    catalog: &'a Catalog,
    notifier: &'a dyn Notifier,
    report: RunReport,
}

struct Failure {
    stage: Stage,
    reason: String,
}

fn failure(stage: Stage) -> impl FnOnce(String) -> Failure {
    move |reason| Failure { stage, reason }
}

impl Batch<'_> {
    /// Returns whether the manual override snapshot was used.
    fn slide_job(&mut self, slide: &Path, sidecar: Option<&Path>, override_jpeg: Option<&Path>) -> bool {
        let c = self.config;
        let id = stem(slide);
        let mut job = SlideJob::new(id.clone(), JobKind::Slide, slide.to_path_buf());
        let move_slide = |dest: &Path| -> Result<(), PipelineError> {
            move_into(slide, dest)?;
            if let Some(meta) = sidecar {
                move_into(meta, dest)?;
            }
            Ok(())
        };

        let source = match open_slide(slide) {
            Ok(s) => s,
            Err(e) => {
                job.fail(Stage::Open, e.to_string());
                if let Err(e) = move_slide(&c.ndpi_failed_dir) {
                    tracing::error!(slide = %slide.display(), error = %e, "cannot move failed slide");
                }
                self.finish(job);
                return false;
            }
        };
        for w in source.warnings() {
            tracing::warn!(slide = %slide.display(), "{w}");
        }

        let jpeg = match override_jpeg {
            Some(p) => p.to_path_buf(),
            None => match self.stage_snapshot(&source, &id) {
                Ok(p) => p,
                Err(f) => {
                    job.fail(f.stage, f.reason);
                    if let Err(e) = move_slide(&c.ndpi_failed_dir) {
                        tracing::error!(slide = %slide.display(), error = %e, "cannot move failed slide");
                    }
                    self.finish(job);
                    return false;
                }
            },
        };
        job.advance(JobState::SnapshotDone);

        match self.publish(&mut job, &jpeg) {
            Ok(()) => {
                let moved = move_into(&jpeg, &c.jpeg_processed_dir).and_then(|_| move_slide(&c.ndpi_processed_dir));
                match moved {
                    Ok(()) => job.advance(JobState::Published),
                    Err(e) => job.fail(Stage::Move, e.to_string()),
                }
            }
            Err(f) => {
                // A naming problem does not make the slide itself bad.
                let slide_dest = if f.stage == Stage::Link {
                    &c.ndpi_processed_dir
                } else {
                    &c.ndpi_failed_dir
                };
                job.fail(f.stage, f.reason);
                if let Err(e) = move_into(&jpeg, &c.jpeg_failed_dir).and_then(|_| move_slide(slide_dest)) {
                    tracing::error!(slide = %slide.display(), error = %e, "cannot move failed job files");
                }
            }
        }
        self.finish(job);
        override_jpeg.is_some()
    }

    fn snapshot_job(&mut self, jpeg: &Path) {
        let c = self.config;
        let id = match specimen_id_from_jpeg(jpeg) {
            Ok(id) => id,
            Err(e) => {
                let mut job = SlideJob::new(stem(jpeg), JobKind::Snapshot, jpeg.to_path_buf());
                job.fail(Stage::Open, e.to_string());
                if let Err(e) = move_into(jpeg, &c.jpeg_failed_dir) {
                    tracing::error!(jpeg = %jpeg.display(), error = %e, "cannot move failed snapshot");
                }
                self.finish(job);
                return;
            }
        };
        let mut job = SlideJob::new(id, JobKind::Snapshot, jpeg.to_path_buf());
        job.advance(JobState::SnapshotDone);
        match self.publish(&mut job, jpeg) {
            Ok(()) => match move_into(jpeg, &c.jpeg_processed_dir) {
                Ok(_) => job.advance(JobState::Published),
                Err(e) => job.fail(Stage::Move, e.to_string()),
            },
            Err(f) => {
                job.fail(f.stage, f.reason);
                if let Err(e) = move_into(jpeg, &c.jpeg_failed_dir) {
                    tracing::error!(jpeg = %jpeg.display(), error = %e, "cannot move failed snapshot");
                }
            }
        }
        self.finish(job);
    }

    fn stage_snapshot(&self, source: &crate::SlideSource, id: &str) -> Result<PathBuf, Failure> {
        let dir = &self.config.jpeg_processing_dir;
        let (_, bytes) = render_snapshot(source, &self.config.snapshot).map_err(|e| failure(Stage::Snapshot)(e.to_string()))?;
        let target = dir.join(format!("{id}.jpg"));
        let tmp = dir.join(format!(".{id}.jpg.partial"));
        std::fs::write(&tmp, &bytes)
            .and_then(|_| std::fs::rename(&tmp, &target))
            .map_err(|e| {
                let _ = std::fs::remove_file(&tmp);
                failure(Stage::Snapshot)(format!("{}: {e}", target.display()))
            })?;
        Ok(target)
    }

    /// Build and validate the pyramid in a staging folder, link the
    /// specimen, then swap the staging folder into place. The pyramid is
    /// never visible under its final name unless the link succeeded.
    fn publish(&self, job: &mut SlideJob, jpeg: &Path) -> Result<(), Failure> {
        let c = self.config;
        let id = job.specimen_id.clone();
        match self.catalog.exists(&id) {
            Ok(true) => {}
            Ok(false) => return Err(failure(Stage::Link)(CatalogError::SpecimenNotFound(id).to_string())),
            Err(e) => return Err(failure(Stage::Link)(e.to_string())),
        }
        let bytes = std::fs::read(jpeg).map_err(|e| failure(Stage::Publish)(format!("{}: {e}", jpeg.display())))?;
        let image = codec::decode_jpeg(&bytes).map_err(|e| failure(Stage::Publish)(e.to_string()))?;

        let staging = c.publish_dir.join(format!(
            ".{id}.staging-{}-{}",
            std::process::id(),
            chrono::Utc::now().timestamp_nanos_opt().unwrap_or_default()
        ));
        let cleanup = |r: Failure| {
            let _ = std::fs::remove_dir_all(&staging);
            r
        };
        let staged = (|| -> Result<(), Failure> {
            let pyramid = c
                .dzi_layout
                .plan(image.width(), image.height())
                .map_err(|e| failure(Stage::Publish)(e.to_string()))?;
            let opts = BuildOptions {
                jpeg_quality: c.dzi_quality,
                ..Default::default()
            };
            build_pyramid(&image, &staging, &id, &pyramid, &opts).map_err(|e| failure(Stage::Publish)(e.to_string()))?;
            let snap = staging.join(format!("{id}.jpg"));
            std::fs::write(&snap, &bytes).map_err(|e| failure(Stage::Publish)(format!("{}: {e}", snap.display())))?;
            let report = validate_named(&staging, &id).map_err(|e| failure(Stage::Publish)(e.to_string()))?;
            if !report.is_valid() {
                let list: Vec<String> = report.violations.iter().take(5).map(ToString::to_string).collect();
                return Err(failure(Stage::Publish)(format!("pyramid failed validation: {}", list.join("; "))));
            }
            Ok(())
        })();
        staged.map_err(cleanup)?;

        let final_paths = publish_layout(&c.publish_dir, &id);
        let previous = self.catalog.get(&id).ok().flatten();
        self.catalog
            .link(&id, Some(&final_paths.snapshot), &final_paths.descriptor)
            .map_err(|e| cleanup(failure(Stage::Link)(e.to_string())))?;
        job.advance(JobState::Linked);

        if let Err(e) = swap_into_place(&staging, &final_paths.dir) {
            let _ = std::fs::remove_dir_all(&staging);
            // Restore the catalog to what matches the folder on disk.
            let restored = match previous.filter(|p| p.matched && final_paths.descriptor.exists()) {
                Some(p) => self.catalog.upsert(&p),
                None => self.catalog.unlink(&id),
            };
            if let Err(re) = restored {
                tracing::error!(specimen = %id, error = %re, "cannot roll back catalog link");
            }
            return Err(failure(Stage::Publish)(e.to_string()));
        }
        Ok(())
    }

    fn finish(&mut self, job: SlideJob) {
        match job.state {
            JobState::Published => self.report.published += 1,
            JobState::Failed => {
                self.report.failed += 1;
                let notice = FailureNotice {
                    specimen_id: job.specimen_id.clone(),
                    stage: job.failure_stage.unwrap_or(Stage::Open),
                    reason: job.failure_reason.clone().unwrap_or_default(),
                    timestamp: now(),
                };
                tracing::warn!(specimen = %notice.specimen_id, stage = %notice.stage, reason = %notice.reason, "job failed");
                match self.notifier.notify(&notice) {
                    Ok(()) => self.report.notifications_sent += 1,
                    Err(e) => {
                        tracing::error!(specimen = %notice.specimen_id, error = %e, "notification failed");
                        self.report
                            .notification_failures
                            .push(format!("{}: {e}", notice.specimen_id));
                    }
                }
            }
            other => unreachable!("job finished in state {other:?}"),
        }
        self.report.jobs.push(job);
    }
}

/// Replace `target` with `staging` using renames only.
fn swap_into_place(staging: &Path, target: &Path) -> Result<(), PipelineError> {
    if !target.exists() {
        return std::fs::rename(staging, target).map_err(io_err(target));
    }
    let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let old = target.with_file_name(format!(".{name}.old-{}", std::process::id()));
    if old.exists() {
        std::fs::remove_dir_all(&old).map_err(io_err(&old))?;
    }
    std::fs::rename(target, &old).map_err(io_err(target))?;
    if let Err(e) = std::fs::rename(staging, target) {
        let _ = std::fs::rename(&old, target);
        return Err(io_err(target)(e));
    }
    if let Err(e) = std::fs::remove_dir_all(&old) {
        tracing::warn!(path = %old.display(), error = %e, "cannot remove replaced pyramid");
    }
    Ok(())
}

/// Put a corrected snapshot back in line for the next batch:
/// `jpeg_failed_dir/{old}` becomes `jpeg_processing_dir/{corrected_name}.jpg`.
pub fn requeue_corrected(old_path: &Path, corrected_name: &str, config: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    let src = if old_path.components().count() == 1 {
        config.jpeg_failed_dir.join(old_path)
    } else {
        old_path.to_path_buf()
    };
    if !src.is_file() {
        return Err(PipelineError::MissingFile(src));
    }
    let in_failed = match (src.parent().map(std::fs::canonicalize), std::fs::canonicalize(&config.jpeg_failed_dir)) {
        (Some(Ok(a)), Ok(b)) => a == b,
        _ => false,
    };
    if !in_failed {
        let name = src.file_name().unwrap_or_default();
        return Err(PipelineError::MissingFile(config.jpeg_failed_dir.join(name)));
    }
    let name = corrected_name.strip_suffix(".jpg").unwrap_or(corrected_name);
    if name.is_empty() || name.starts_with('.') || name.contains(['/', '\\', '\0']) {
        return Err(PipelineError::InvalidName(corrected_name.to_string()));
    }
    std::fs::create_dir_all(&config.jpeg_processing_dir).map_err(io_err(&config.jpeg_processing_dir))?;
    let target = config.jpeg_processing_dir.join(format!("{name}.jpg"));
    if target.exists() {
        return Err(PipelineError::NameCollision(target));
    }
    move_file(&src, &target)?;
    Ok(target)
}

/// Run batches forever (or `iterations` times), sleeping
/// `config.watch_interval` between them. A batch that finds the lock held
/// is skipped.
pub fn watch(
    config: &PipelineConfig,
    iterations: Option<usize>,
    mut on_report: impl FnMut(&RunReport),
) -> Result<(), PipelineError> {
    let mut done = 0usize;
    loop {
        match run_batch(config) {
            Ok(report) => on_report(&report),
            Err(PipelineError::Locked { pid, .. }) => {
                tracing::info!(pid, "batch already running; skipping this round")
            }
            Err(e) => return Err(e),
        }
        done += 1;
        if iterations.is_some_and(|n| done >= n) {
            return Ok(());
        }
        std::thread::sleep(config.watch_interval);
    }
}
