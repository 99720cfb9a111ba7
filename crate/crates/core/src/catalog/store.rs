use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use rusqlite::types::Value;
use rusqlite::{params, params_from_iter, Connection, OptionalExtension};

use super::record::{parse_biomarkers, Biomarker, SearchPage, SearchQuery, SpecimenRecord};
use super::CatalogError;

/// Header of the import CSV, in order.
pub const CSV_COLUMNS: [&str; 5] = ["specimen_id", "cancer_type", "stain", "biomarkers", "notes"];

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS specimens (
    specimen_id   TEXT PRIMARY KEY NOT NULL CHECK (length(specimen_id) > 0),
    cancer_type   TEXT NOT NULL DEFAULT '',
    stain         TEXT NOT NULL DEFAULT '',
    matched       INTEGER NOT NULL DEFAULT 0,
    snapshot_path TEXT,
    dzi_path      TEXT,
    notes         TEXT NOT NULL DEFAULT '',
    CHECK (matched = 0 OR dzi_path IS NOT NULL)
);
CREATE TABLE IF NOT EXISTS biomarkers (
    specimen_id TEXT NOT NULL REFERENCES specimens(specimen_id) ON DELETE CASCADE,
    marker      TEXT NOT NULL,
    status      TEXT NOT NULL,
    PRIMARY KEY (specimen_id, marker, status)
);
CREATE INDEX IF NOT EXISTS biomarkers_by_marker ON biomarkers(marker, status);
CREATE INDEX IF NOT EXISTS specimens_by_cancer ON specimens(cancer_type);
";

/// Specimen store. Writes are serialized through one connection.
pub struct Catalog {
    conn: Mutex<Connection>,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Catalog").field("path", &self.path).finish()
    }
}

fn path_text(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.to_string_lossy().into_owned())
}

impl Catalog {
    pub fn open(path: &Path) -> Result<Self, CatalogError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| CatalogError::Unavailable(format!("{}: {e}", parent.display())))?;
        }
        let conn = Connection::open(path)?;
        Self::init(conn, Some(path.to_path_buf()))
    }

    pub fn open_in_memory() -> Result<Self, CatalogError> {
        Self::init(Connection::open_in_memory()?, None)
    }

    fn init(conn: Connection, path: Option<PathBuf>) -> Result<Self, CatalogError> {
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Catalog {
            conn: Mutex::new(conn),
            path,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn lock(&self) -> Result<MutexGuard<'_, Connection>, CatalogError> {
        self.conn
            .lock()
            .map_err(|_| CatalogError::Unavailable("store lock poisoned".into()))
    }

    /// Insert or replace the record with this id.
    pub fn upsert(&self, record: &SpecimenRecord) -> Result<(), CatalogError> {
        record.validate()?;
        let mut conn = self.lock()?;
        let tx = conn.transaction()?;
        write_record(&tx, record)?;
        tx.commit()?;
        Ok(())
    }

    pub fn upsert_many(&self, records: &[SpecimenRecord]) -> Result<(), CatalogError> {
        for r in records {
            r.validate()?;
        }
        let mut conn = self.lock()?;
        let tx = conn.transaction()?;
        for r in records {
            write_record(&tx, r)?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn get(&self, specimen_id: &str) -> Result<Option<SpecimenRecord>, CatalogError> {
        let conn = self.lock()?;
        let row = conn
            .query_row(
                "SELECT specimen_id, cancer_type, stain, matched, snapshot_path, dzi_path, notes
                 FROM specimens WHERE specimen_id = ?1",
                [specimen_id],
                row_to_record,
            )
            .optional()?;
        match row {
            Some(mut r) => {
                r.biomarkers = load_biomarkers(&conn, specimen_id)?;
                Ok(Some(r))
            }
            None => Ok(None),
        }
    }

    pub fn exists(&self, specimen_id: &str) -> Result<bool, CatalogError> {
        let conn = self.lock()?;
        let n: i64 = conn.query_row(
            "SELECT COUNT(*) FROM specimens WHERE specimen_id = ?1",
            [specimen_id],
            |r| r.get(0),
        )?;
        Ok(n > 0)
    }

    pub fn count(&self) -> Result<u64, CatalogError> {
        let conn = self.lock()?;
        let n: i64 = conn.query_row("SELECT COUNT(*) FROM specimens", [], |r| r.get(0))?;
        Ok(n as u64)
    }

    /// Records satisfying every constraint in `query`, ordered by id.
    pub fn search(&self, query: &SearchQuery) -> Result<SearchPage, CatalogError> {
        query.validate()?;
        let mut clauses: Vec<String> = Vec::new();
        let mut args: Vec<Value> = Vec::new();
        if let Some(c) = &query.cancer_type {
            args.push(Value::Text(c.clone()));
            clauses.push(format!("s.cancer_type = ?{}", args.len()));
        }
        if let Some(st) = &query.stain {
            args.push(Value::Text(st.clone()));
            clauses.push(format!("s.stain = ?{}", args.len()));
        }
        if query.matched_only {
            clauses.push("s.matched = 1".into());
        }
        for b in &query.biomarkers {
            args.push(Value::Text(b.marker.clone()));
            args.push(Value::Text(b.status.clone()));
            clauses.push(format!(
                "EXISTS (SELECT 1 FROM biomarkers b WHERE b.specimen_id = s.specimen_id AND b.marker = ?{} AND b.status = ?{})",
                args.len() - 1,
                args.len()
            ));
        }
        let filter = if clauses.is_empty() {
            String::new()
        } else {
            format!("WHERE {}", clauses.join(" AND "))
        };
        let conn = self.lock()?;
        let total: i64 = conn.query_row(
            &format!("SELECT COUNT(*) FROM specimens s {filter}"),
            params_from_iter(args.iter()),
            |r| r.get(0),
        )?;
        let mut page_args = args.clone();
        page_args.push(Value::Integer(query.limit as i64));
        page_args.push(Value::Integer(query.offset as i64));
        let sql = format!(
            "SELECT s.specimen_id, s.cancer_type, s.stain, s.matched, s.snapshot_path, s.dzi_path, s.notes
             FROM specimens s {filter} ORDER BY s.specimen_id LIMIT ?{} OFFSET ?{}",
            page_args.len() - 1,
            page_args.len()
        );
        let mut stmt = conn.prepare(&sql)?;
        let mut items = stmt
            .query_map(params_from_iter(page_args.iter()), row_to_record)?
            .collect::<Result<Vec<_>, _>>()?;
        for item in &mut items {
            item.biomarkers = load_biomarkers(&conn, &item.specimen_id)?;
        }
        Ok(SearchPage {
            total: total as u64,
            offset: query.offset,
            limit: query.limit,
            items,
        })
    }

    /// Mark a specimen as matched and record where its assets live.
    /// Repeating the call with the same paths changes nothing.
    pub fn link(&self, specimen_id: &str, snapshot_path: Option<&Path>, dzi_path: &Path) -> Result<(), CatalogError> {
        let conn = self.lock()?;
        let n = conn.execute(
            "UPDATE specimens SET matched = 1, snapshot_path = ?2, dzi_path = ?3 WHERE specimen_id = ?1",
            params![
                specimen_id,
                snapshot_path.map(|p| p.to_string_lossy().into_owned()),
                dzi_path.to_string_lossy()
            ],
        )?;
        if n == 0 {
            return Err(CatalogError::SpecimenNotFound(specimen_id.to_string()));
        }
        Ok(())
    }

    pub fn unlink(&self, specimen_id: &str) -> Result<(), CatalogError> {
        let conn = self.lock()?;
        let n = conn.execute(
            "UPDATE specimens SET matched = 0, dzi_path = NULL, snapshot_path = NULL WHERE specimen_id = ?1",
            [specimen_id],
        )?;
        if n == 0 {
            return Err(CatalogError::SpecimenNotFound(specimen_id.to_string()));
        }
        Ok(())
    }

    pub fn matched_ids(&self) -> Result<Vec<String>, CatalogError> {
        let conn = self.lock()?;
        let mut stmt = conn.prepare("SELECT specimen_id FROM specimens WHERE matched = 1 ORDER BY specimen_id")?;
        let ids = stmt
            .query_map([], |r| r.get(0))?
            .collect::<Result<Vec<String>, _>>()?;
        Ok(ids)
    }

    /// Import specimens from CSV with the header [`CSV_COLUMNS`].
    /// Clinical fields are replaced; the matched flag and asset paths of
    /// specimens already in the store are kept. Returns the row count.
    pub fn import_csv(&self, reader: impl Read) -> Result<usize, CatalogError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CatalogError::Csv {
                line: 1,
                reason: e.to_string(),
            })?
            .clone();
        if headers.iter().collect::<Vec<_>>() != CSV_COLUMNS {
            return Err(CatalogError::Csv {
                line: 1,
                reason: format!("expected header {}", CSV_COLUMNS.join(",")),
            });
        }
        let mut rows = Vec::new();
        for result in rdr.records() {
            let rec = result.map_err(|e| CatalogError::Csv {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                reason: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let wrap = |e: CatalogError| CatalogError::Csv {
                line,
                reason: e.to_string(),
            };
            let record = SpecimenRecord {
                specimen_id: rec[0].to_string(),
                cancer_type: rec[1].to_string(),
                stain: rec[2].to_string(),
                biomarkers: parse_biomarkers(&rec[3]).map_err(wrap)?,
                notes: rec[4].to_string(),
                ..Default::default()
            };
            record.validate().map_err(wrap)?;
            rows.push(record);
        }
        let mut conn = self.lock()?;
        let tx = conn.transaction()?;
        for r in &rows {
            tx.execute(
                "INSERT INTO specimens (specimen_id, cancer_type, stain, notes) VALUES (?1, ?2, ?3, ?4)
                 ON CONFLICT(specimen_id) DO UPDATE SET
                    cancer_type = excluded.cancer_type, stain = excluded.stain, notes = excluded.notes",
                params![r.specimen_id, r.cancer_type, r.stain, r.notes],
            )?;
            write_biomarkers(&tx, &r.specimen_id, &r.biomarkers)?;
        }
        tx.commit()?;
        Ok(rows.len())
    }
}

fn write_record(conn: &Connection, r: &SpecimenRecord) -> Result<(), CatalogError> {
    conn.execute(
        "INSERT INTO specimens (specimen_id, cancer_type, stain, matched, snapshot_path, dzi_path, notes)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)
         ON CONFLICT(specimen_id) DO UPDATE SET
            cancer_type = excluded.cancer_type, stain = excluded.stain, matched = excluded.matched,
            snapshot_path = excluded.snapshot_path, dzi_path = excluded.dzi_path, notes = excluded.notes",
        params![
            r.specimen_id,
            r.cancer_type,
            r.stain,
            r.matched as i64,
            path_text(&r.snapshot_path),
            path_text(&r.dzi_path),
            r.notes
        ],
    )?;
    write_biomarkers(conn, &r.specimen_id, &r.biomarkers)
}

fn write_biomarkers(conn: &Connection, id: &str, markers: &BTreeSet<Biomarker>) -> Result<(), CatalogError> {
    conn.execute("DELETE FROM biomarkers WHERE specimen_id = ?1", [id])?;
    let mut stmt = conn.prepare_cached("INSERT INTO biomarkers (specimen_id, marker, status) VALUES (?1, ?2, ?3)")?;
    for b in markers {
        stmt.execute(params![id, b.marker, b.status])?;
    }
    Ok(())
}

fn load_biomarkers(conn: &Connection, id: &str) -> Result<BTreeSet<Biomarker>, CatalogError> {
    let mut stmt = conn.prepare_cached("SELECT marker, status FROM biomarkers WHERE specimen_id = ?1")?;
    let rows = stmt
        .query_map([id], |r| {
            Ok(Biomarker {
                marker: r.get(0)?,
                status: r.get(1)?,
            })
        })?
        .collect::<Result<BTreeSet<_>, _>>()?;
    Ok(rows)
}

fn row_to_record(r: &rusqlite::Row<'_>) -> rusqlite::Result<SpecimenRecord> {
    Ok(SpecimenRecord {
        specimen_id: r.get(0)?,
        cancer_type: r.get(1)?,
        stain: r.get(2)?,
        matched: r.get::<_, i64>(3)? != 0,
        snapshot_path: r.get::<_, Option<String>>(4)?.map(PathBuf::from),
        dzi_path: r.get::<_, Option<String>>(5)?.map(PathBuf::from),
        notes: r.get(6)?,
        biomarkers: BTreeSet::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Catalog {
        let c = Catalog::open_in_memory().unwrap();
        c.upsert(&SpecimenRecord::new("S1").with_cancer_type("breast").with_biomarker("ER", "positive"))
            .unwrap();
        c.upsert(&SpecimenRecord::new("S2").with_cancer_type("breast").with_biomarker("ER", "negative"))
            .unwrap();
        c.upsert(&SpecimenRecord::new("S3").with_cancer_type("colon")).unwrap();
        c
    }

    fn ids(page: &SearchPage) -> Vec<&str> {
        page.items.iter().map(|r| r.specimen_id.as_str()).collect()
    }

    #[test]
    fn search_examples() {
        let c = sample();
        let q = SearchQuery {
            cancer_type: Some("breast".into()),
            biomarkers: vec!["ER=positive".parse().unwrap()],
            ..Default::default()
        };
        assert_eq!(ids(&c.search(&q).unwrap()), ["S1"]);
        let all = c.search(&SearchQuery::default()).unwrap();
        assert_eq!((all.total, ids(&all)), (3, vec!["S1", "S2", "S3"]));
        let none = c
            .search(&SearchQuery {
                cancer_type: Some("lung".into()),
                ..Default::default()
            })
            .unwrap();
        assert_eq!((none.total, none.items.len()), (0, 0));
        let paged = c
            .search(&SearchQuery {
                offset: 1,
                limit: 1,
                ..Default::default()
            })
            .unwrap();
        assert_eq!((paged.total, ids(&paged)), (3, vec!["S2"]));
        assert!(c
            .search(&SearchQuery {
                limit: 501,
                ..Default::default()
            })
            .is_err());
    }

    #[test]
    fn round_trip_and_upsert_replaces() {
        let c = Catalog::open_in_memory().unwrap();
        let mut r = SpecimenRecord::new("S1")
            .with_cancer_type("breast")
            .with_stain("H&E")
            .with_biomarker("ER", "positive")
            .with_biomarker("HER2", "negative");
        r.notes = "left, core biopsy".into();
        c.upsert(&r).unwrap();
        assert_eq!(c.get("S1").unwrap().unwrap(), r);
        r.biomarkers.clear();
        r.cancer_type = "ovarian".into();
        c.upsert(&r).unwrap();
        assert_eq!(c.get("S1").unwrap().unwrap(), r);
        assert_eq!(c.count().unwrap(), 1);
        assert!(c.upsert(&SpecimenRecord::new("")).is_err());
        assert!(c.get("nope").unwrap().is_none());
    }

    #[test]
    fn link_is_idempotent_and_requires_specimen() {
        let c = sample();
        let dzi = Path::new("/pub/S1/S1.dzi");
        c.link("S1", Some(Path::new("/jpg/S1.jpg")), dzi).unwrap();
        c.link("S1", Some(Path::new("/jpg/S1.jpg")), dzi).unwrap();
        let r = c.get("S1").unwrap().unwrap();
        assert!(r.matched);
        assert_eq!(r.dzi_path.as_deref(), Some(dzi));
        assert_eq!(c.count().unwrap(), 3);
        assert!(matches!(c.link("S9", None, dzi), Err(CatalogError::SpecimenNotFound(_))));
        c.unlink("S1").unwrap();
        assert!(!c.get("S1").unwrap().unwrap().matched);
    }

    #[test]
    fn csv_import_keeps_links() {
        let c = sample();
        c.link("S1", None, Path::new("/pub/S1/S1.dzi")).unwrap();
        let csv = "specimen_id,cancer_type,stain,biomarkers,notes\n\
                   S1,breast,H&E,ER=positive;PR=negative,updated\n\
                   S4,lung,IHC,,\"a, b\"\n";
        assert_eq!(c.import_csv(csv.as_bytes()).unwrap(), 2);
        let s1 = c.get("S1").unwrap().unwrap();
        assert!(s1.matched);
        assert_eq!(s1.notes, "updated");
        assert_eq!(s1.biomarkers.len(), 2);
        assert_eq!(c.get("S4").unwrap().unwrap().notes, "a, b");
        assert!(c.import_csv("id,x\n1,2\n".as_bytes()).is_err());
        assert!(c
            .import_csv("specimen_id,cancer_type,stain,biomarkers,notes\nS5,a,b,ER,\n".as_bytes())
            .is_err());
    }

    #[test]
    fn durable_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.sqlite");
        Catalog::open(&path)
            .unwrap()
            .upsert(&SpecimenRecord::new("S1").with_biomarker("ER", "positive"))
            .unwrap();
        let again = Catalog::open(&path).unwrap();
        assert_eq!(again.get("S1").unwrap().unwrap().biomarkers.len(), 1);
    }
}
