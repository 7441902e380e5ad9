//! Stage text prompts, the grid-spec manifest and retry feedback.
//!
//! Templates are plain text with `{z}`, `{part_list}`, `{grid_manifest}` and
//! `{error_feedback}` placeholders. Any other brace sequence (for example the
//! literal JSON in the output-format rules) is left untouched.

mod violation;

pub use violation::{build_error_feedback, Violation, FEEDBACK_HEADER};

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hand_model::PartSegmentation;

/// One of the three reasoning stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Freeform,
    Part,
    Dense,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Freeform, Stage::Part, Stage::Dense];

    pub fn number(self) -> u8 {
        match self {
            Stage::Freeform => 0,
            Stage::Part => 1,
            Stage::Dense => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Stage> {
        Stage::ALL.get(n as usize).copied()
    }

    /// Maximum attempts, initial request included.
    pub fn max_attempts(self) -> u32 {
        match self {
            Stage::Freeform => 2,
            Stage::Part => 3,
            Stage::Dense => 5,
        }
    }

    fn marker(self) -> &'static str {
        match self {
            Stage::Freeform => "Output free-form text only.",
            Stage::Part => "output exactly one JSON object",
            Stage::Dense => "each grid must exactly match the provided num_rows and row_lengths",
        }
    }

    fn required(self) -> &'static [Placeholder] {
        match self {
            Stage::Freeform => &[],
            Stage::Part => &[Placeholder::Z, Placeholder::PartList],
            Stage::Dense => &[Placeholder::Z, Placeholder::PartList, Placeholder::GridManifest],
        }
    }

    fn file_name(self) -> String {
        format!("stage{}.txt", self.number())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placeholder {
    Z,
    PartList,
    GridManifest,
    ErrorFeedback,
}

impl Placeholder {
    const ALL: [Placeholder; 4] =
        [Placeholder::Z, Placeholder::PartList, Placeholder::GridManifest, Placeholder::ErrorFeedback];

    fn name(self) -> &'static str {
        match self {
            Placeholder::Z => "z",
            Placeholder::PartList => "part_list",
            Placeholder::GridManifest => "grid_manifest",
            Placeholder::ErrorFeedback => "error_feedback",
        }
    }

    fn token(self) -> String {
        format!("{{{}}}", self.name())
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("missing prompt context: {0}")]
    MissingContext(&'static str),
    #[error("unknown part {0:?}")]
    UnknownPart(String),
    #[error("{stage} template is missing the required instruction {marker:?}")]
    InvalidTemplate { stage: Stage, marker: &'static str },
    #[error("template io error: {0}")]
    Io(String),
}

const DEFAULT_STAGE0: &str = include_str!("../../templates/stage0.txt");
const DEFAULT_STAGE1: &str = include_str!("../../templates/stage1.txt");
const DEFAULT_STAGE2: &str = include_str!("../../templates/stage2.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    stage: Stage,
    body: String,
}

impl PromptTemplate {
    /// Checks that the body keeps the stage's output-contract instruction.
    pub fn new(stage: Stage, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        if !body.contains(stage.marker()) {
            return Err(PromptError::InvalidTemplate { stage, marker: stage.marker() });
        }
        Ok(Self { stage, body })
    }

    pub fn default_for(stage: Stage) -> Self {
        let body = match stage {
            Stage::Freeform => DEFAULT_STAGE0,
            Stage::Part => DEFAULT_STAGE1,
            Stage::Dense => DEFAULT_STAGE2,
        };
        Self { stage, body: body.to_string() }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Hex SHA-256 of the body.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }
}

/// The three stage templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub stage0: PromptTemplate,
    pub stage1: PromptTemplate,
    pub stage2: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            stage0: PromptTemplate::default_for(Stage::Freeform),
            stage1: PromptTemplate::default_for(Stage::Part),
            stage2: PromptTemplate::default_for(Stage::Dense),
        }
    }
}

impl TemplateSet {
    /// Reads `stage0.txt`, `stage1.txt`, `stage2.txt` from `dir`; missing
    /// files fall back to the bundled defaults.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(PromptError::Io(format!("{} is not a directory", dir.display())));
        }
        let load = |stage: Stage| -> Result<PromptTemplate, PromptError> {
            let path = dir.join(stage.file_name());
            if !path.exists() {
                return Ok(PromptTemplate::default_for(stage));
            }
            let body = fs::read_to_string(&path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
            PromptTemplate::new(stage, body)
        };
        Ok(Self { stage0: load(Stage::Freeform)?, stage1: load(Stage::Part)?, stage2: load(Stage::Dense)? })
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        match stage {
            Stage::Freeform => &self.stage0,
            Stage::Part => &self.stage1,
            Stage::Dense => &self.stage2,
        }
    }

    /// `[stage0, stage1, stage2]` hashes.
    pub fn hashes(&self) -> [String; 3] {
        [self.stage0.hash(), self.stage1.hash(), self.stage2.hash()]
    }
}

/// Values substituted into a template.
#[derive(Debug, Clone, Default)]
pub struct PromptContext {
    pub z: Option<String>,
    pub part_list: Option<String>,
    pub grid_manifest: Option<String>,
    pub feedback: Option<String>,
}

impl PromptContext {
    fn value(&self, p: Placeholder) -> Option<&str> {
        match p {
            Placeholder::Z => self.z.as_deref(),
            Placeholder::PartList => self.part_list.as_deref(),
            Placeholder::GridManifest => self.grid_manifest.as_deref(),
            Placeholder::ErrorFeedback => self.feedback.as_deref(),
        }
    }
}

/// Substitutes the context into the template in a single left-to-right pass,
/// so substituted text is never re-scanned for placeholders.
///
/// Feedback goes into `{error_feedback}` when the template has one, otherwise
/// it is appended as a final section. Without feedback, `{error_feedback}`
/// becomes empty.
pub fn render_prompt(template: &PromptTemplate, ctx: &PromptContext) -> Result<String, PromptError> {
    for &p in template.stage.required() {
        if ctx.value(p).is_none() {
            return Err(PromptError::MissingContext(p.name()));
        }
    }
    let body = template.body();
    let mut out = String::with_capacity(body.len() + 256);
    let mut feedback_inlined = false;
    let mut rest = body;
    'scan: while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        for p in Placeholder::ALL {
            let token = p.token();
            if tail.starts_with(&token) {
                if p == Placeholder::ErrorFeedback {
                    feedback_inlined = true;
                }
                out.push_str(ctx.value(p).unwrap_or(""));
                rest = &tail[token.len()..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    if let (Some(feedback), false) = (ctx.feedback.as_deref(), feedback_inlined) {
        if !out.ends_with('\n') {
            out.push('\n');
        }
        out.push('\n');
        out.push_str(feedback);
        out.push('\n');
    }
    Ok(out)
}

/// One manifest entry. No vertex ids are exposed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub part_name: String,
    pub part_index: usize,
    pub num_rows: usize,
    pub row_lengths: Vec<usize>,
    pub total_vertices: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridManifest {
    pub entries: Vec<ManifestEntry>,
}

impl GridManifest {
    pub fn total_vertices(&self) -> usize {
        self.entries.iter().map(|e| e.total_vertices).sum()
    }

    pub fn entry(&self, part_name: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.part_name == part_name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("manifest serializes")
    }

    /// `index: name` lines in manifest order.
    pub fn part_list(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}: {}", e.part_index, e.part_name))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Manifest for the named parts, ordered by part index. Duplicate names
/// collapse to one entry.
pub fn emit_grid_manifest<'a>(
    seg: &PartSegmentation,
    part_names: impl IntoIterator<Item = &'a str>,
) -> Result<GridManifest, PromptError> {
    let mut indices = Vec::new();
    for name in part_names {
        let idx = seg.part_index(name).ok_or_else(|| PromptError::UnknownPart(name.to_string()))?;
        indices.push(idx);
    }
    indices.sort_unstable();
    indices.dedup();
    let entries = indices
        .into_iter()
        .map(|i| {
            let grid = seg.grid(i);
            ManifestEntry {
                part_name: seg.part(i).name.clone(),
                part_index: i,
                num_rows: grid.num_rows(),
                row_lengths: grid.row_lengths(),
                total_vertices: grid.total_vertices(),
            }
        })
        .collect();
    Ok(GridManifest { entries })
}

/// `index: name` lines for every part of the segmentation.
pub fn full_part_list(seg: &PartSegmentation) -> String {
    seg.parts()
        .iter()
        .map(|p| format!("{}: {}", p.index, p.name))
        .collect::<Vec<_>>()
        .join("\n")
}
