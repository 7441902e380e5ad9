use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, CONTACT_THRESHOLD};
use crate::hand_model::ContactVector;
use crate::pipeline::InputSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandSide {
    Right,
    Left,
}

/// One manifest line as written on disk.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    id: String,
    image_path: PathBuf,
    gt_contact: Vec<f64>,
    #[serde(default = "right")]
    hand: HandSide,
}

fn right() -> HandSide {
    HandSide::Right
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub id: String,
    /// Resolved against the manifest's directory.
    pub image_path: PathBuf,
    pub gt_contact: ContactVector,
    pub hand: HandSide,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub samples: Vec<DatasetSample>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Decodes every image into a pipeline input.
    pub fn load_samples(&self) -> Result<Vec<InputSample>, EvalError> {
        self.samples
            .iter()
            .map(|s| {
                let image = image::open(&s.image_path)
                    .map_err(|e| EvalError::Parse(format!("sample {}: {}: {e}", s.id, s.image_path.display())))?
                    .to_rgb8();
                Ok(InputSample { id: s.id.clone(), image, gt: Some(s.gt_contact.clone()) })
            })
            .collect()
    }
}

/// Loads a JSON-lines manifest `{id, image_path, gt_contact, hand}`.
/// `gt_contact` may hold soft values in [0, 1]; they are binarized at the
/// contact threshold. Left hands are accepted as-is, without index remapping.
pub fn load_dataset(path: impl AsRef<Path>, vertex_count: usize) -> Result<DatasetManifest, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| EvalError::Parse(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let raw: ManifestLine =
            serde_json::from_str(line).map_err(|e| EvalError::Parse(format!("line {line_no}: {e}")))?;
        if !seen.insert(raw.id.clone()) {
            return Err(EvalError::Parse(format!("line {line_no}: duplicate sample id {:?}", raw.id)));
        }
        if raw.gt_contact.len() != vertex_count {
            return Err(EvalError::Parse(format!(
                "sample {:?}: gt_contact has {} values, expected {vertex_count}",
                raw.id,
                raw.gt_contact.len()
            )));
        }
        if let Some(bad) = raw.gt_contact.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(EvalError::Parse(format!("sample {:?}: gt_contact value {bad} outside [0, 1]", raw.id)));
        }
        if raw.hand == HandSide::Left {
            log::warn!("sample {}: left hand used without mirroring", raw.id);
        }
        samples.push(DatasetSample {
            image_path: base.join(&raw.image_path),
            gt_contact: ContactVector::from_scores(&raw.gt_contact, CONTACT_THRESHOLD),
            id: raw.id,
            hand: raw.hand,
        });
    }
    let missing: Vec<String> = samples.iter().filter(|s| !s.image_path.is_file()).map(|s| s.id.clone()).collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingImage(missing));
    }
    Ok(DatasetManifest { samples })
}
