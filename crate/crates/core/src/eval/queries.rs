//! Benchmark queries: the JSON-lines triplet schema and converters from the
//! native CIRR, CIRCO and FashionIQ annotation files.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("dataset contains no queries")]
    EmptyDataset,
    #[error("{0}")]
    Native(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One composed-retrieval query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTriplet {
    pub query_id: String,
    pub reference_id: String,
    pub modification_text: String,
    pub ground_truth_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_ids: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    query_id: String,
    reference_id: String,
    #[serde(default)]
    modification_text: Option<String>,
    #[serde(default)]
    captions: Option<Vec<String>>,
    ground_truth_ids: Vec<String>,
    #[serde(default)]
    subset_ids: Option<Vec<String>>,
}

/// Joins several relative captions into one modification text.
pub fn join_captions<S: AsRef<str>>(captions: &[S]) -> String {
    captions
        .iter()
        .map(|c| c.as_ref().trim().trim_end_matches('.'))
        .filter(|c| !c.is_empty())
        .collect::<Vec<_>>()
        .join(" and ")
}

impl QueryTriplet {
    /// Checks the per-query invariants, returning a description of the first
    /// violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.query_id.is_empty() {
            return Err("query_id is empty".into());
        }
        if self.reference_id.is_empty() {
            return Err("reference_id is empty".into());
        }
        if self.modification_text.trim().is_empty() {
            return Err("modification_text is empty".into());
        }
        if self.ground_truth_ids.is_empty() {
            return Err("ground_truth_ids is empty".into());
        }
        if let Some(d) = first_duplicate(&self.ground_truth_ids) {
            return Err(format!("duplicate ground truth id {d:?}"));
        }
        if let Some(subset) = &self.subset_ids {
            if subset.is_empty() {
                return Err("subset_ids is present but empty".into());
            }
            if let Some(d) = first_duplicate(subset) {
                return Err(format!("duplicate subset id {d:?}"));
            }
            if subset.contains(&self.reference_id) {
                return Err("subset_ids contains the reference image".into());
            }
        }
        Ok(())
    }
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::new();
    ids.iter().find(|id| !seen.insert(id.as_str())).map(String::as_str)
}

/// Parses and validates JSON-lines queries. Blank lines are skipped.
pub fn parse_queries(text: &str) -> Result<Vec<QueryTriplet>, QueryError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| QueryError::Schema { line: line_no, message };
        let raw: RawQuery = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        let modification_text = match (raw.modification_text, raw.captions) {
            (Some(t), None) => t,
            (None, Some(c)) => join_captions(&c),
            (Some(_), Some(_)) => return Err(schema("give either modification_text or captions, not both".into())),
            (None, None) => return Err(schema("missing field `modification_text`".into())),
        };
        let q = QueryTriplet {
            query_id: raw.query_id,
            reference_id: raw.reference_id,
            modification_text,
            ground_truth_ids: raw.ground_truth_ids,
            subset_ids: raw.subset_ids,
        };
        q.validate().map_err(schema)?;
        if !ids.insert(q.query_id.clone()) {
            return Err(schema(format!("duplicate query_id {:?}", q.query_id)));
        }
        out.push(q);
    }
    if out.is_empty() {
        return Err(QueryError::EmptyDataset);
    }
    Ok(out)
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<QueryTriplet>, QueryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| QueryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_queries(&text)
}

/// Serializes queries as JSON lines.
pub fn to_json_lines(queries: &[QueryTriplet]) -> String {
    let mut out = String::new();
    for q in queries {
        out.push_str(&serde_json::to_string(q).expect("queries serialize"));
        out.push('\n');
    }
    out
}

/// Native benchmark annotation layouts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NativeFormat {
    /// `cap.rc2.<split>.json`: pairid, reference, target_hard, caption, img_set.members
    Cirr,
    /// `annotations/<split>.json`: id, reference_img_id, relative_caption, gt_img_ids
    Circo,
    /// `captions/cap.<category>.<split>.json`: candidate, target, captions
    FashionIq { category: Option<String> },
}

/// Converts a native annotation file into validated triplets.
pub fn convert_native(text: &str, format: &NativeFormat) -> Result<Vec<QueryTriplet>, QueryError> {
    let root: Value = serde_json::from_str(text).map_err(|e| QueryError::Native(format!("not JSON: {e}")))?;
    let items = root
        .as_array()
        .ok_or_else(|| QueryError::Native("expected a top-level JSON array".into()))?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let q = match format {
            NativeFormat::Cirr => cirr_item(item),
            NativeFormat::Circo => circo_item(item),
            NativeFormat::FashionIq { category } => fashioniq_item(item, i, category.as_deref()),
        }
        .map_err(|m| QueryError::Native(format!("entry {i}: {m}")))?;
        q.validate()
            .map_err(|m| QueryError::Native(format!("entry {i}: {m}")))?;
        out.push(q);
    }
    if let Some(d) = first_duplicate(&out.iter().map(|q| q.query_id.clone()).collect::<Vec<_>>()) {
        return Err(QueryError::Native(format!("duplicate query id {d:?}")));
    }
    if out.is_empty() {
        return Err(QueryError::EmptyDataset);
    }
    Ok(out)
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn field<'a>(item: &'a Value, key: &str) -> Result<&'a Value, String> {
    item.get(key).ok_or_else(|| format!("missing {key:?}"))
}

fn str_field(item: &Value, key: &str) -> Result<String, String> {
    field(item, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| format!("{key:?} is not a string"))
}

fn id_field(item: &Value, key: &str) -> Result<String, String> {
    id_string(field(item, key)?).ok_or_else(|| format!("{key:?} is not an id"))
}

fn cirr_item(item: &Value) -> Result<QueryTriplet, String> {
    let reference_id = str_field(item, "reference")?;
    let target = match item.get("target_hard") {
        Some(v) => id_string(v).ok_or("\"target_hard\" is not an id")?,
        None => return Err("no \"target_hard\" (hidden test split?)".into()),
    };
    let subset_ids = match item.get("img_set").and_then(|s| s.get("members")) {
        Some(Value::Array(m)) => {
            let mut ids: Vec<String> = m.iter().filter_map(id_string).collect();
            ids.retain(|id| id != &reference_id);
            let mut seen = HashSet::new();
            ids.retain(|id| seen.insert(id.clone()));
            Some(ids).filter(|ids| !ids.is_empty())
        }
        _ => None,
    };
    Ok(QueryTriplet {
        query_id: id_field(item, "pairid")?,
        reference_id,
        modification_text: str_field(item, "caption")?,
        ground_truth_ids: vec![target],
        subset_ids,
    })
}

fn circo_item(item: &Value) -> Result<QueryTriplet, String> {
    let mut gt: Vec<String> = match item.get("gt_img_ids") {
        Some(Value::Array(ids)) => ids.iter().filter_map(id_string).collect(),
        _ => Vec::new(),
    };
    if gt.is_empty() {
        if let Some(t) = item.get("target_img_id").and_then(id_string) {
            gt.push(t);
        }
    }
    if gt.is_empty() {
        return Err("no ground truth (hidden test split?)".into());
    }
    let mut seen = HashSet::new();
    gt.retain(|id| seen.insert(id.clone()));
    Ok(QueryTriplet {
        query_id: id_field(item, "id")?,
        reference_id: id_field(item, "reference_img_id")?,
        modification_text: str_field(item, "relative_caption")?,
        ground_truth_ids: gt,
        subset_ids: None,
    })
}

fn fashioniq_item(item: &Value, index: usize, category: Option<&str>) -> Result<QueryTriplet, String> {
    let captions: Vec<String> = match field(item, "captions")? {
        Value::Array(c) => c.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
        _ => return Err("\"captions\" is not a list".into()),
    };
    let query_id = match category {
        Some(c) => format!("{c}-{index}"),
        None => index.to_string(),
    };
    Ok(QueryTriplet {
        query_id,
        reference_id: str_field(item, "candidate")?,
        modification_text: join_captions(&captions),
        ground_truth_ids: vec![str_field(item, "target")?],
        subset_ids: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_line_fixture() {
        let qs = parse_queries(
            r#"{"query_id":"q1","reference_id":"r1","modification_text":"make it red","ground_truth_ids":["t1"]}"#,
        )
        .unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].modification_text, "make it red");
        assert_eq!(qs[0].subset_ids, None);
    }

    #[test]
    fn missing_ground_truth_reports_line() {
        let text = "\n{\"query_id\":\"q1\",\"reference_id\":\"r1\",\"modification_text\":\"x\",\"ground_truth_ids\":[\"t\"]}\n{\"query_id\":\"q2\",\"reference_id\":\"r1\",\"modification_text\":\"x\"}\n";
        match parse_queries(text) {
            Err(QueryError::Schema { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("ground_truth_ids"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn captions_are_joined() {
        let qs = parse_queries(
            r#"{"query_id":"q1","reference_id":"r1","captions":["is red","has long sleeves"],"ground_truth_ids":["t1"]}"#,
        )
        .unwrap();
        assert_eq!(qs[0].modification_text, "is red and has long sleeves");
    }

    #[test]
    fn invariant_violations() {
        let bad = [
            r#"{"query_id":"q","reference_id":"r","modification_text":"x","ground_truth_ids":[]}"#,
            r#"{"query_id":"q","reference_id":"r","modification_text":"x","ground_truth_ids":["a","a"]}"#,
            r#"{"query_id":"q","reference_id":"r","modification_text":"x","ground_truth_ids":["a"],"subset_ids":["r","a"]}"#,
            r#"{"query_id":"q","reference_id":"r","modification_text":"x","ground_truth_ids":["a"],"subset_ids":["a","a"]}"#,
            r#"{"query_id":"q","reference_id":"r","modification_text":" ","ground_truth_ids":["a"]}"#,
            r#"{"query_id":"q","reference_id":"r","modification_text":"x","ground_truth_ids":["a"],"extra":1}"#,
        ];
        for line in bad {
            assert!(
                matches!(parse_queries(line), Err(QueryError::Schema { line: 1, .. })),
                "{line}"
            );
        }
    }

    #[test]
    fn duplicate_query_ids_rejected() {
        let l = r#"{"query_id":"q","reference_id":"r","modification_text":"x","ground_truth_ids":["a"]}"#;
        assert!(matches!(
            parse_queries(&format!("{l}\n{l}\n")),
            Err(QueryError::Schema { line: 2, .. })
        ));
    }

    #[test]
    fn empty_dataset() {
        assert!(matches!(parse_queries("\n\n"), Err(QueryError::EmptyDataset)));
    }

    #[test]
    fn convert_cirr() {
        let native = r#"[{"pairid": 12063, "reference": "dev-147-1-img0", "target_hard": "dev-846-2-img0",
            "caption": "remove all but one dog", "img_set": {"id": 164,
            "members": ["dev-147-1-img0", "dev-846-2-img0", "dev-1-1-img1"]},
            "target_soft": {"dev-846-2-img0": 1.0}}]"#;
        let qs = convert_native(native, &NativeFormat::Cirr).unwrap();
        assert_eq!(qs[0].query_id, "12063");
        assert_eq!(qs[0].ground_truth_ids, ["dev-846-2-img0"]);
        assert_eq!(
            qs[0].subset_ids.as_deref().unwrap(),
            ["dev-846-2-img0".to_string(), "dev-1-1-img1".to_string()]
        );
        let hidden = r#"[{"pairid": 1, "reference": "a", "caption": "x", "img_set": {"members": ["b"]}}]"#;
        assert!(convert_native(hidden, &NativeFormat::Cirr).is_err());
    }

    #[test]
    fn convert_circo() {
        let native = r#"[{"id": 0, "reference_img_id": 495, "target_img_id": 7, "relative_caption": "is outdoors",
            "shared_concept": "dog", "gt_img_ids": [7, 99, 7]}]"#;
        let qs = convert_native(native, &NativeFormat::Circo).unwrap();
        assert_eq!(qs[0].reference_id, "495");
        assert_eq!(qs[0].ground_truth_ids, ["7", "99"]);
    }

    #[test]
    fn convert_fashioniq() {
        let native = r#"[{"target": "B008BHCT58", "candidate": "B003FGW7MK",
            "captions": ["is solid black with no sleeves", "is black with straps."]}]"#;
        let qs = convert_native(
            native,
            &NativeFormat::FashionIq {
                category: Some("dress".into()),
            },
        )
        .unwrap();
        assert_eq!(qs[0].query_id, "dress-0");
        assert_eq!(qs[0].reference_id, "B003FGW7MK");
        assert_eq!(
            qs[0].modification_text,
            "is solid black with no sleeves and is black with straps"
        );
        let back = parse_queries(&to_json_lines(&qs)).unwrap();
        assert_eq!(back, qs);
    }
}
