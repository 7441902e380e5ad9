//! Parsers for the part and dense stage answers.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::hand_model::{DenseGridPrediction, PartSegmentation};
use crate::prompt_engine::{GridManifest, Violation};

/// Stage-1 result: predicted contact parts in first-mention order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartPrediction {
    pub part_names: Vec<String>,
}

impl PartPrediction {
    pub fn count(&self) -> usize {
        self.part_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.part_names.is_empty()
    }
}

/// Byte range of the first balanced `{...}` in `text`, ignoring braces
/// inside JSON strings.
pub fn first_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in text[start..].char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_object(text: &str) -> Result<serde_json::Map<String, Value>, Violation> {
    if text.trim().is_empty() {
        return Err(Violation::EmptyResponse);
    }
    let raw = first_json_object(text)
        .ok_or_else(|| Violation::NotJson { detail: "no balanced JSON object in the answer".into() })?;
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => unreachable!("a balanced object parses to an object"),
        Err(e) => Err(Violation::NotJson { detail: e.to_string() }),
    }
}

/// Parses `{"contact_parts": [...]}`. Duplicate names are dropped silently,
/// keeping the first occurrence.
pub fn parse_part_response(text: &str, seg: &PartSegmentation) -> Result<PartPrediction, Vec<Violation>> {
    let map = parse_object(text).map_err(|v| vec![v])?;
    let Some(value) = map.get("contact_parts") else {
        return Err(vec![Violation::MissingKey { key: "contact_parts".into() }]);
    };
    let Value::Array(entries) = value else {
        return Err(vec![Violation::WrongType {
            key: "contact_parts".into(),
            expected: "a list of part names".into(),
            got: value.to_string(),
        }]);
    };
    let mut violations = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (position, entry) in entries.iter().enumerate() {
        match entry {
            Value::String(name) => {
                if seg.part_index(name).is_none() {
                    violations.push(Violation::UnknownPart { name: name.clone() });
                } else if !names.contains(name) {
                    names.push(name.clone());
                }
            }
            other => violations.push(Violation::NonTextEntry { position, got: other.to_string() }),
        }
    }
    if violations.is_empty() {
        Ok(PartPrediction { part_names: names })
    } else {
        Err(violations)
    }
}

/// Dense answer checked part by part: the well-formed grids plus every
/// violation found.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DenseInspection {
    pub valid: DenseGridPrediction,
    pub violations: Vec<Violation>,
}

/// Checks every manifest part and collects all violations.
pub fn inspect_dense_response(text: &str, manifest: &GridManifest) -> DenseInspection {
    let mut out = DenseInspection::default();
    let map = match parse_object(text) {
        Ok(m) => m,
        Err(v) => {
            out.violations.push(v);
            return out;
        }
    };
    for entry in &manifest.entries {
        let part = &entry.part_name;
        let Some(value) = map.get(part) else {
            out.violations.push(Violation::MissingPart { part: part.clone() });
            continue;
        };
        let before = out.violations.len();
        let mut push = |v: Violation| out.violations.push(v);
        let Value::Array(rows) = value else {
            push(Violation::MalformedGrid { part: part.clone(), detail: format!("grid must be a list of rows, got {value}") });
            continue;
        };
        if rows.len() != entry.num_rows {
            push(Violation::RowCountMismatch { part: part.clone(), expected: entry.num_rows, got: rows.len() });
        }
        let mut grid = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            let Value::Array(cells) = row else {
                push(Violation::MalformedGrid { part: part.clone(), detail: format!("row {r} must be a list, got {row}") });
                continue;
            };
            if let Some(&expected) = entry.row_lengths.get(r) {
                if cells.len() != expected {
                    push(Violation::RowLengthMismatch { part: part.clone(), row: r, expected, got: cells.len() });
                }
            }
            let mut values = Vec::with_capacity(cells.len());
            for (c, cell) in cells.iter().enumerate() {
                match cell.as_u64() {
                    Some(b @ (0 | 1)) => values.push(b as u8),
                    _ => push(Violation::NonBinaryValue { part: part.clone(), row: r, col: c, got: cell.to_string() }),
                }
            }
            grid.push(values);
        }
        if out.violations.len() == before {
            out.valid.insert(part.clone(), grid);
        }
    }
    for key in map.keys() {
        if manifest.entry(key).is_none() {
            out.violations.push(Violation::ExtraPart { part: key.clone() });
        }
    }
    out
}

/// Strict form of [`inspect_dense_response`]: any violation rejects the answer.
pub fn parse_dense_response(text: &str, manifest: &GridManifest) -> Result<DenseGridPrediction, Vec<Violation>> {
    let inspection = inspect_dense_response(text, manifest);
    if inspection.violations.is_empty() {
        Ok(inspection.valid)
    } else {
        Err(inspection.violations)
    }
}
