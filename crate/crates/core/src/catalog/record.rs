use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CatalogError;

pub const MAX_PAGE: u32 = 500;
pub const DEFAULT_PAGE: u32 = 50;

/// One `marker=status` pair, e.g. `ER=positive`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Biomarker {
    pub marker: String,
    pub status: String,
}

impl Biomarker {
    pub fn new(marker: impl Into<String>, status: impl Into<String>) -> Result<Self, CatalogError> {
        let b = Biomarker {
            marker: marker.into(),
            status: status.into(),
        };
        let bad = |s: &str| s.is_empty() || s.contains(['=', ';', ',']) || s.trim() != s;
        if bad(&b.marker) || bad(&b.status) {
            return Err(CatalogError::InvalidRecord(format!("invalid biomarker {b}")));
        }
        Ok(b)
    }
}

impl fmt::Display for Biomarker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.marker, self.status)
    }
}

impl FromStr for Biomarker {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, st) = s
            .split_once('=')
            .ok_or_else(|| CatalogError::InvalidRecord(format!("biomarker {s:?} is not marker=status")))?;
        Biomarker::new(m.trim(), st.trim())
    }
}

impl From<Biomarker> for String {
    fn from(b: Biomarker) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for Biomarker {
    type Error = CatalogError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Parse a `;`-separated biomarker list; blank entries are ignored.
pub fn parse_biomarkers(list: &str) -> Result<BTreeSet<Biomarker>, CatalogError> {
    list.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecimenRecord {
    pub specimen_id: String,
    #[serde(default)]
    pub cancer_type: String,
    #[serde(default)]
    pub biomarkers: BTreeSet<Biomarker>,
    #[serde(default)]
    pub stain: String,
    #[serde(default)]
    pub matched: bool,
    #[serde(default)]
    pub snapshot_path: Option<PathBuf>,
    #[serde(default)]
    pub dzi_path: Option<PathBuf>,
    #[serde(default)]
    pub notes: String,
}

impl SpecimenRecord {
    pub fn new(specimen_id: impl Into<String>) -> Self {
        SpecimenRecord {
            specimen_id: specimen_id.into(),
            ..Default::default()
        }
    }

    pub fn with_cancer_type(mut self, cancer_type: impl Into<String>) -> Self {
        self.cancer_type = cancer_type.into();
        self
    }

    pub fn with_stain(mut self, stain: impl Into<String>) -> Self {
        self.stain = stain.into();
        self
    }

    pub fn with_biomarker(mut self, marker: &str, status: &str) -> Self {
        self.biomarkers
            .insert(Biomarker::new(marker, status).expect("valid biomarker"));
        self
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.specimen_id.trim().is_empty() {
            return Err(CatalogError::InvalidRecord("specimen_id is empty".into()));
        }
        if self.matched && self.dzi_path.is_none() {
            return Err(CatalogError::InvalidRecord(format!(
                "{} is matched but has no dzi_path",
                self.specimen_id
            )));
        }
        for b in &self.biomarkers {
            Biomarker::new(b.marker.clone(), b.status.clone())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub cancer_type: Option<String>,
    pub biomarkers: Vec<Biomarker>,
    pub stain: Option<String>,
    pub matched_only: bool,
    pub offset: u32,
    pub limit: u32,
}

impl Default for SearchQuery {
    fn default() -> Self {
        SearchQuery {
            cancer_type: None,
            biomarkers: Vec::new(),
            stain: None,
            matched_only: false,
            offset: 0,
            limit: DEFAULT_PAGE,
        }
    }
}

impl SearchQuery {
    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.limit > MAX_PAGE {
            return Err(CatalogError::InvalidQuery(format!("limit {} exceeds {MAX_PAGE}", self.limit)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPage {
    pub total: u64,
    pub offset: u32,
    pub limit: u32,
    pub items: Vec<SpecimenRecord>,
}
