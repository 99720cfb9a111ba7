//! Folder-driven batch pipeline.
//!
//! ```text
//! NDPI-New/S1.wtif ──open──snapshot──> JPEG-Processing/S1.jpg
//!                                          │ build + validate pyramid (staged)
//!                                          │ link S1 in the catalog
//!                                          │ publish/S1/{S1.dzi, S1_files/, S1.jpg}
//!                                          ▼
//! NDPI-Processed/S1.wtif              JPEG-Processed/S1.jpg
//! ```
//!
//! Anything that fails goes to the matching Failed folder and a failure
//! notice is emitted. Snapshots dropped into JPEG-Processing by hand are
//! published the same way and take precedence over the automatic one.

mod config;
mod fsops;
mod lock;
mod notify;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{NotifySettings, PipelineConfig, CONFIG_KEYS, DEFAULT_FAILURE_REPORT, DIRECTORY_KEYS};
pub use lock::BatchLock;
pub use notify::{notifier_for, read_failure_report, FailureNotice, FileNotifier, Notifier, SmtpNotifier};
pub use run::{publish_layout, requeue_corrected, run_batch, run_batch_with, watch, PublishedPaths};

use crate::catalog::CatalogError;
use crate::props::PropsError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] PropsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("another batch holds {path} (pid {pid})")]
    Locked { path: PathBuf, pid: u32 },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("{0} does not exist")]
    MissingFile(PathBuf),
    #[error("{0} already exists")]
    NameCollision(PathBuf),
    #[error("invalid specimen id {0:?}")]
    InvalidName(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where in the job a failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Open,
    Snapshot,
    Publish,
    Link,
    Move,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Open => "open",
            Stage::Snapshot => "snapshot",
            Stage::Publish => "publish",
            Stage::Link => "link",
            Stage::Move => "move",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    New,
    SnapshotDone,
    Linked,
    Published,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    /// A slide from the inbox.
    Slide,
    /// A JPEG already waiting in the processing folder.
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideJob {
    pub specimen_id: String,
    pub kind: JobKind,
    pub input_path: PathBuf,
    pub state: JobState,
    pub failure_stage: Option<Stage>,
    pub failure_reason: Option<String>,
    pub transitions: Vec<(JobState, String)>,
}

impl SlideJob {
    pub(crate) fn new(specimen_id: String, kind: JobKind, input_path: PathBuf) -> Self {
        let mut job = SlideJob {
            specimen_id,
            kind,
            input_path,
            state: JobState::New,
            failure_stage: None,
            failure_reason: None,
            transitions: Vec::new(),
        };
        job.transitions.push((JobState::New, now()));
        job
    }

    /// Move to `next`. Only forward moves along
    /// New → SnapshotDone → Linked → Published are accepted.
    pub(crate) fn advance(&mut self, next: JobState) {
        let ok = matches!(
            (self.state, next),
            (JobState::New, JobState::SnapshotDone)
                | (JobState::SnapshotDone, JobState::Linked)
                | (JobState::Linked, JobState::Published)
        );
        assert!(ok, "illegal job transition {:?} -> {next:?}", self.state);
        self.state = next;
        self.transitions.push((next, now()));
    }

    pub(crate) fn fail(&mut self, stage: Stage, reason: impl Into<String>) {
        assert!(self.state != JobState::Published && self.state != JobState::Failed);
        self.state = JobState::Failed;
        self.failure_stage = Some(stage);
        self.failure_reason = Some(reason.into());
        self.transitions.push((JobState::Failed, now()));
    }
}

pub(crate) fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub published: usize,
    pub failed: usize,
    pub jobs: Vec<SlideJob>,
    pub notifications_sent: usize,
    /// Notifications that could not be delivered; never fatal.
    pub notification_failures: Vec<String>,
}

impl RunReport {
    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn job(&self, specimen_id: &str) -> Option<&SlideJob> {
        self.jobs.iter().find(|j| j.specimen_id == specimen_id)
    }
}
