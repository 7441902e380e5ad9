use serde::{Deserialize, Serialize};

/// A structural problem found in a model response.
///
/// Rows and columns are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyResponse,
    NotJson { detail: String },
    MissingKey { key: String },
    WrongType { key: String, expected: String, got: String },
    UnknownPart { name: String },
    NonTextEntry { position: usize, got: String },
    MissingPart { part: String },
    ExtraPart { part: String },
    MalformedGrid { part: String, detail: String },
    RowCountMismatch { part: String, expected: usize, got: usize },
    RowLengthMismatch { part: String, row: usize, expected: usize, got: usize },
    NonBinaryValue { part: String, row: usize, col: usize, got: String },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::EmptyResponse => "empty_response",
            Violation::NotJson { .. } => "not_json",
            Violation::MissingKey { .. } => "missing_key",
            Violation::WrongType { .. } => "wrong_type",
            Violation::UnknownPart { .. } => "unknown_part",
            Violation::NonTextEntry { .. } => "non_text_entry",
            Violation::MissingPart { .. } => "missing_part",
            Violation::ExtraPart { .. } => "extra_part",
            Violation::MalformedGrid { .. } => "malformed_grid",
            Violation::RowCountMismatch { .. } => "row_count_mismatch",
            Violation::RowLengthMismatch { .. } => "row_length_mismatch",
            Violation::NonBinaryValue { .. } => "non_binary_value",
        }
    }

    /// One machine-stable line naming the violation and all of its fields.
    pub fn describe(&self) -> String {
        let q = |s: &str| serde_json::to_string(s).expect("string serializes");
        match self {
            Violation::EmptyResponse => "empty response: the answer contained no text".to_string(),
            Violation::NotJson { detail } => {
                format!("not valid JSON: no parseable JSON object was found ({detail})")
            }
            Violation::MissingKey { key } => format!("missing key: the JSON object must contain {}", q(key)),
            Violation::WrongType { key, expected, got } => {
                format!("wrong type: {} must be {expected}, got {got}", q(key))
            }
            Violation::UnknownPart { name } => {
                format!("unknown part name: {} is not one of the provided part names", q(name))
            }
            Violation::NonTextEntry { position, got } => {
                format!("non-text entry: contact_parts[{position}] must be a part name string, got {got}")
            }
            Violation::MissingPart { part } => {
                format!("missing part: no grid was given for selected part {}", q(part))
            }
            Violation::ExtraPart { part } => {
                format!("extra part: {} is not one of the selected parts", q(part))
            }
            Violation::MalformedGrid { part, detail } => {
                format!("malformed grid for part {}: {detail}", q(part))
            }
            Violation::RowCountMismatch { part, expected, got } => {
                format!("row count mismatch for part {}: expected {expected} rows, got {got}", q(part))
            }
            Violation::RowLengthMismatch { part, row, expected, got } => format!(
                "row length mismatch for part {} at row {row}: expected {expected} values, got {got}",
                q(part)
            ),
            Violation::NonBinaryValue { part, row, col, got } => format!(
                "non-binary value for part {} at row {row}, column {col}: got {got}, expected 0 or 1",
                q(part)
            ),
        }
    }
}

/// Header of the feedback section appended to a retry prompt.
pub const FEEDBACK_HEADER: &str =
    "Your previous answer violated the required output structure. Fix every problem listed below and answer again (rows and columns are counted from 0):";

/// Feedback text for a retry: a header plus one line per violation, in input order.
pub fn build_error_feedback(violations: &[Violation]) -> String {
    let mut out = String::from(FEEDBACK_HEADER);
    for v in violations {
        out.push_str("\n- ");
        out.push_str(&v.describe());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds() -> Vec<Violation> {
        vec![
            Violation::EmptyResponse,
            Violation::NotJson { detail: "expected value at line 1 column 1".into() },
            Violation::MissingKey { key: "contact_parts".into() },
            Violation::WrongType { key: "contact_parts".into(), expected: "a list".into(), got: "\"palm\"".into() },
            Violation::UnknownPart { name: "thumbb".into() },
            Violation::NonTextEntry { position: 2, got: "17".into() },
            Violation::MissingPart { part: "palm_middle_palmar".into() },
            Violation::ExtraPart { part: "wrist_end".into() },
            Violation::MalformedGrid { part: "index_fingertip".into(), detail: "grid must be a list of rows".into() },
            Violation::RowCountMismatch { part: "index_fingertip".into(), expected: 2, got: 1 },
            Violation::RowLengthMismatch { part: "index_fingertip".into(), row: 2, expected: 4, got: 3 },
            Violation::NonBinaryValue { part: "index_fingertip".into(), row: 0, col: 3, got: "2".into() },
        ]
    }

    #[test]
    fn row_length_line_names_all_facts() {
        let v = Violation::RowLengthMismatch { part: "index_fingertip".into(), row: 2, expected: 4, got: 3 };
        let text = build_error_feedback(&[v]);
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), 1);
        let line = lines[0];
        assert!(line.contains("\"index_fingertip\""));
        assert!(line.contains("row 2"));
        assert!(line.contains("expected 4"));
        assert!(line.contains("got 3"));
    }

    #[test]
    fn unknown_part_phrase() {
        let text = build_error_feedback(&[Violation::UnknownPart { name: "thumbb".into() }]);
        assert!(text.lines().nth(1).unwrap().starts_with("- unknown part name: \"thumbb\""));
    }

    #[test]
    fn order_is_preserved() {
        let vs = vec![
            Violation::MissingPart { part: "a".into() },
            Violation::ExtraPart { part: "b".into() },
            Violation::NotJson { detail: "x".into() },
        ];
        let text = build_error_feedback(&vs);
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), 3);
        for (line, v) in lines.iter().zip(&vs) {
            assert_eq!(*line, format!("- {}", v.describe()));
        }
    }

    #[test]
    fn feedback_is_lossless() {
        for v in all_kinds() {
            let line = v.describe();
            let value = serde_json::to_value(&v).unwrap();
            for (key, field) in value.as_object().unwrap() {
                if key == "kind" {
                    continue;
                }
                let needle = match field {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                assert!(line.contains(&needle), "{key}={needle} missing from {line:?}");
            }
            assert!(!line.contains('\n'));
        }
    }

    #[test]
    fn kinds_are_distinct() {
        let kinds: std::collections::BTreeSet<_> = all_kinds().iter().map(Violation::kind).collect();
        assert_eq!(kinds.len(), all_kinds().len());
    }
}
