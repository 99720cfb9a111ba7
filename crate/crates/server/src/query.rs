use slidepress_core::catalog::{Biomarker, SearchQuery, DEFAULT_PAGE, MAX_PAGE};

/// Parse the search query string. `biomarker` may repeat and may hold a
/// comma-separated list; unknown parameters are rejected.
pub fn parse_search_query(raw: &str) -> Result<SearchQuery, String> {
    let mut q = SearchQuery {
        limit: DEFAULT_PAGE,
        ..Default::default()
    };
    let mut seen = std::collections::BTreeSet::new();
    for (key, value) in form_urlencoded::parse(raw.as_bytes()) {
        let value = value.trim().to_string();
        if key != "biomarker" && !seen.insert(key.to_string()) {
            return Err(format!("parameter {key:?} given more than once"));
        }
        match key.as_ref() {
            "cancer_type" => q.cancer_type = Some(value),
            "stain" => q.stain = Some(value),
            "biomarker" | "biomarkers" => {
                for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let b: Biomarker = part.parse().map_err(|e| format!("{e}"))?;
                    q.biomarkers.push(b);
                }
            }
            "matched" => {
                q.matched_only = match value.as_str() {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(format!("matched={value:?} is not a boolean")),
                }
            }
            "offset" => q.offset = value.parse().map_err(|_| format!("offset={value:?} is not a non-negative integer"))?,
            "limit" => {
                q.limit = value.parse().map_err(|_| format!("limit={value:?} is not a non-negative integer"))?;
                if q.limit > MAX_PAGE {
                    return Err(format!("limit {} exceeds {MAX_PAGE}", q.limit));
                }
            }
            other => return Err(format!("unknown parameter {other:?}")),
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_fields() {
        let q = parse_search_query("cancer_type=breast&stain=H%26E&biomarker=ER%3Dpositive&biomarker=PR=negative,HER2=low&matched=true&offset=5&limit=10").unwrap();
        assert_eq!(q.cancer_type.as_deref(), Some("breast"));
        assert_eq!(q.stain.as_deref(), Some("H&E"));
        assert_eq!(q.biomarkers.len(), 3);
        assert!(q.matched_only);
        assert_eq!((q.offset, q.limit), (5, 10));
    }

    #[test]
    fn empty_is_default_page() {
        let q = parse_search_query("").unwrap();
        assert_eq!(q, SearchQuery::default());
    }

    #[test]
    fn rejects_bad_input() {
        for raw in ["limit=501", "limit=-1", "offset=x", "matched=maybe", "colour=red", "biomarker=ER", "stain=a&stain=b"] {
            assert!(parse_search_query(raw).is_err(), "{raw}");
        }
    }
}
