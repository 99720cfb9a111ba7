use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slidepress_core::catalog::{
    parse_biomarkers, Biomarker, Catalog, CatalogError, SearchQuery, SpecimenRecord, MAX_PAGE,
};

const CANCERS: [&str; 4] = ["breast", "prostate", "colon", "lung"];
const STAINS: [&str; 3] = ["H&E", "PAS", "IHC"];
const MARKERS: [&str; 4] = ["ER", "PR", "HER2", "Ki67"];
const STATUSES: [&str; 3] = ["positive", "negative", "low"];

fn random_records(n: usize, seed: u64) -> Vec<SpecimenRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut r = SpecimenRecord::new(format!("S{:05}", rng.random_range(0..100_000u32) * 10 + (i as u32 % 10)))
                .with_cancer_type(CANCERS[rng.random_range(0..CANCERS.len())])
                .with_stain(STAINS[rng.random_range(0..STAINS.len())]);
            for m in MARKERS {
                if rng.random_bool(0.5) {
                    r = r.with_biomarker(m, STATUSES[rng.random_range(0..STATUSES.len())]);
                }
            }
            if rng.random_bool(0.4) {
                r.matched = true;
                r.dzi_path = Some(format!("/pub/{0}/{0}.dzi", r.specimen_id).into());
            }
            r
        })
        .collect()
}

fn random_query(rng: &mut ChaCha8Rng) -> SearchQuery {
    let mut q = SearchQuery::default();
    if rng.random_bool(0.5) {
        q.cancer_type = Some(CANCERS[rng.random_range(0..CANCERS.len())].to_string());
    }
    if rng.random_bool(0.3) {
        q.stain = Some(STAINS[rng.random_range(0..STAINS.len())].to_string());
    }
    for _ in 0..rng.random_range(0..3) {
        q.biomarkers.push(
            Biomarker::new(
                MARKERS[rng.random_range(0..MARKERS.len())],
                STATUSES[rng.random_range(0..STATUSES.len())],
            )
            .unwrap(),
        );
    }
    q.matched_only = rng.random_bool(0.3);
    q.offset = rng.random_range(0..40);
    q.limit = rng.random_range(0..=60);
    q
}

/// Linear scan over the full record list.
fn brute_force(all: &[SpecimenRecord], q: &SearchQuery) -> (u64, Vec<SpecimenRecord>) {
    let mut hits: Vec<SpecimenRecord> = all
        .iter()
        .filter(|r| q.cancer_type.as_ref().is_none_or(|c| &r.cancer_type == c))
        .filter(|r| q.stain.as_ref().is_none_or(|s| &r.stain == s))
        .filter(|r| !q.matched_only || r.matched)
        .filter(|r| q.biomarkers.iter().all(|b| r.biomarkers.contains(b)))
        .cloned()
        .collect();
    hits.sort_by(|a, b| a.specimen_id.cmp(&b.specimen_id));
    let total = hits.len() as u64;
    let page = hits.into_iter().skip(q.offset as usize).take(q.limit as usize).collect();
    (total, page)
}

fn dedup_last(records: Vec<SpecimenRecord>) -> Vec<SpecimenRecord> {
    let mut map = std::collections::BTreeMap::new();
    for r in records {
        map.insert(r.specimen_id.clone(), r);
    }
    map.into_values().collect()
}

#[test]
fn search_examples() {
    let cat = Catalog::open_in_memory().unwrap();
    cat.upsert_many(&[
        SpecimenRecord::new("S1").with_cancer_type("breast").with_biomarker("ER", "positive"),
        SpecimenRecord::new("S2").with_cancer_type("breast").with_biomarker("ER", "negative"),
        SpecimenRecord::new("S3").with_cancer_type("prostate"),
    ])
    .unwrap();
    let q = SearchQuery {
        cancer_type: Some("breast".into()),
        biomarkers: vec!["ER=positive".parse().unwrap()],
        ..Default::default()
    };
    let page = cat.search(&q).unwrap();
    assert_eq!(page.total, 1);
    assert_eq!(page.items[0].specimen_id, "S1");
    let page = cat.search(&SearchQuery::default()).unwrap();
    assert_eq!(page.items.iter().map(|r| r.specimen_id.as_str()).collect::<Vec<_>>(), ["S1", "S2", "S3"]);
    let q = SearchQuery {
        limit: MAX_PAGE + 1,
        ..Default::default()
    };
    assert!(matches!(cat.search(&q), Err(CatalogError::InvalidQuery(_))));
}

#[test]
fn search_equals_linear_scan_on_random_catalog() {
    let records = dedup_last(random_records(1000, 42));
    let cat = Catalog::open_in_memory().unwrap();
    cat.upsert_many(&records).unwrap();
    assert_eq!(cat.count().unwrap(), records.len() as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let q = random_query(&mut rng);
        let page = cat.search(&q).unwrap();
        let (total, items) = brute_force(&records, &q);
        assert_eq!(page.total, total, "{q:?}");
        assert_eq!(page.items, items, "{q:?}");
    }
}

#[test]
fn link_is_idempotent_and_requires_existing_id() {
    let cat = Catalog::open_in_memory().unwrap();
    cat.upsert(&SpecimenRecord::new("S9")).unwrap();
    let dzi = Path::new("/pub/S9/S9.dzi");
    let snap = Path::new("/pub/S9/S9.jpg");
    cat.link("S9", Some(snap), dzi).unwrap();
    let once = cat.get("S9").unwrap().unwrap();
    cat.link("S9", Some(snap), dzi).unwrap();
    assert_eq!(cat.get("S9").unwrap().unwrap(), once);
    assert!(once.matched);
    assert_eq!(once.dzi_path.as_deref(), Some(dzi));
    assert_eq!(cat.matched_ids().unwrap(), ["S9"]);
    assert!(matches!(cat.link("S10", None, dzi), Err(CatalogError::SpecimenNotFound(_))));
    cat.unlink("S9").unwrap();
    assert!(!cat.get("S9").unwrap().unwrap().matched);
}

#[test]
fn invalid_records_are_rejected() {
    let cat = Catalog::open_in_memory().unwrap();
    assert!(cat.upsert(&SpecimenRecord::new("  ")).is_err());
    let mut r = SpecimenRecord::new("S1");
    r.matched = true;
    assert!(cat.upsert(&r).is_err());
    assert!(Biomarker::new("ER", "").is_err());
    assert!(Biomarker::new("E=R", "pos").is_err());
    assert!("ER".parse::<Biomarker>().is_err());
    assert_eq!(parse_biomarkers("ER=positive; PR=negative").unwrap().len(), 2);
}

#[test]
fn json_round_trip_and_unknown_fields() {
    let r = SpecimenRecord::new("S1").with_cancer_type("breast").with_biomarker("ER", "positive");
    let text = serde_json::to_string(&r).unwrap();
    assert!(text.contains("\"ER=positive\""));
    assert_eq!(serde_json::from_str::<SpecimenRecord>(&text).unwrap(), r);
    assert!(serde_json::from_str::<SpecimenRecord>(r#"{"specimen_id":"S1","colour":"red"}"#).is_err());
}

#[test]
fn csv_import_keeps_link_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.sqlite");
    let cat = Catalog::open(&path).unwrap();
    cat.upsert(&SpecimenRecord::new("S1").with_cancer_type("old")).unwrap();
    cat.link("S1", None, Path::new("/p/S1.dzi")).unwrap();
    let csv = "specimen_id,cancer_type,stain,biomarkers,notes\nS1,breast,H&E,ER=positive;PR=negative,\nS2,colon,PAS,,\"note, with comma\"\n";
    assert_eq!(cat.import_csv(csv.as_bytes()).unwrap(), 2);
    let s1 = cat.get("S1").unwrap().unwrap();
    assert!(s1.matched);
    assert_eq!(s1.cancer_type, "breast");
    assert_eq!(s1.biomarkers.len(), 2);
    assert_eq!(cat.get("S2").unwrap().unwrap().notes, "note, with comma");
    let bad = "specimen_id,cancer_type\nS3,lung\n";
    assert!(matches!(cat.import_csv(bad.as_bytes()), Err(CatalogError::Csv { line: 1, .. })));
    let bad_row = "specimen_id,cancer_type,stain,biomarkers,notes\nS4,lung,H&E,ER,\n";
    assert!(matches!(cat.import_csv(bad_row.as_bytes()), Err(CatalogError::Csv { line: 2, .. })));
    assert!(cat.get("S4").unwrap().is_none());
    drop(cat);
    let reopened = Catalog::open(&path).unwrap();
    assert_eq!(reopened.count().unwrap(), 2);
    assert_eq!(reopened.matched_ids().unwrap(), ["S1"]);
}

#[test]
fn unopenable_store_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), b"").unwrap();
    let err = Catalog::open(&dir.path().join("blocker/c.sqlite")).unwrap_err();
    assert!(matches!(err, CatalogError::Unavailable(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn search_matches_scan(seed in any::<u64>(), n in 0usize..120, qseed in any::<u64>()) {
        let records = dedup_last(random_records(n, seed));
        let cat = Catalog::open_in_memory().unwrap();
        cat.upsert_many(&records).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(qseed);
        for _ in 0..10 {
            let q = random_query(&mut rng);
            let page = cat.search(&q).unwrap();
            let (total, items) = brute_force(&records, &q);
            prop_assert_eq!(page.total, total);
            prop_assert_eq!(page.items, items);
        }
    }

    #[test]
    fn pages_tile_the_result(seed in any::<u64>(), limit in 1u32..30) {
        let records = dedup_last(random_records(80, seed));
        let cat = Catalog::open_in_memory().unwrap();
        cat.upsert_many(&records).unwrap();
        let mut seen = Vec::new();
        let mut offset = 0;
        loop {
            let page = cat.search(&SearchQuery { offset, limit, ..Default::default() }).unwrap();
            if page.items.is_empty() { break; }
            seen.extend(page.items.into_iter().map(|r| r.specimen_id));
            offset += limit;
        }
        prop_assert_eq!(seen, records.iter().map(|r| r.specimen_id.clone()).collect::<Vec<_>>());
    }
}
