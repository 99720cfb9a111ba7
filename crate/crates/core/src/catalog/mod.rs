//! Embedded specimen catalog (SQLite).
//!
//! Schema:
//!
//! ```sql
//! specimens(specimen_id TEXT PRIMARY KEY, cancer_type TEXT, stain TEXT,
//!           matched INTEGER, snapshot_path TEXT, dzi_path TEXT, notes TEXT)
//! biomarkers(specimen_id TEXT, marker TEXT, status TEXT,
//!            PRIMARY KEY (specimen_id, marker, status))
//! ```

mod record;
mod store;

pub use record::{parse_biomarkers, Biomarker, SearchPage, SearchQuery, SpecimenRecord, DEFAULT_PAGE, MAX_PAGE};
pub use store::{Catalog, CSV_COLUMNS};

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("specimen {0:?} not found")]
    SpecimenNotFound(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("catalog unavailable: {0}")]
    Unavailable(String),
    #[error("CSV import failed at line {line}: {reason}")]
    Csv { line: u64, reason: String },
}

impl From<rusqlite::Error> for CatalogError {
    fn from(e: rusqlite::Error) -> Self {
        CatalogError::Unavailable(e.to_string())
    }
}
