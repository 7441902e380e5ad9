use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::{Backend, ClientError, MllmRequest, MllmResponse, Usage};
use crate::hand_model::{grid_values, ContactVector, PartSegmentation};
use crate::prompt_engine::Stage;

/// Flat per-image input-token estimate used by the oracle.
pub const IMAGE_TOKEN_ESTIMATE: u64 = 765;

/// Rough token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Structural fault the oracle can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    EmptyResponse,
    NotJson,
    MissingKey,
    UnknownPart,
    NonTextEntry,
    MissingPart,
    ExtraPart,
    MalformedGrid,
    RowCountMismatch,
    RowLengthMismatch,
    NonBinaryValue,
}

impl InjectionKind {
    fn valid_for(self, stage: Stage) -> bool {
        use InjectionKind::*;
        match stage {
            Stage::Freeform => matches!(self, EmptyResponse),
            Stage::Part => matches!(self, EmptyResponse | NotJson | MissingKey | UnknownPart | NonTextEntry),
            Stage::Dense => matches!(
                self,
                EmptyResponse
                    | NotJson
                    | MissingPart
                    | ExtraPart
                    | MalformedGrid
                    | RowCountMismatch
                    | RowLengthMismatch
                    | NonBinaryValue
            ),
        }
    }
}

/// Fail attempts `1..=fail_attempts` of `stage` with `kind`. For per-part
/// dense faults the first `spare_parts` requested parts stay well-formed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub stage: Stage,
    pub fail_attempts: u32,
    pub kind: InjectionKind,
    #[serde(default)]
    pub spare_parts: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Corruption {
    /// Probability of flipping each returned dense cell.
    pub flip_probability: f64,
    /// Probability of dropping each true contact part from the part answer.
    pub part_omission_probability: f64,
    pub injections: Vec<Injection>,
}

impl Corruption {
    pub fn validate(&self) -> Result<(), ClientError> {
        for (name, p) in [("flip_probability", self.flip_probability), ("part_omission_probability", self.part_omission_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ClientError::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for inj in &self.injections {
            if !inj.kind.valid_for(inj.stage) {
                return Err(ClientError::Config(format!("injection {:?} does not apply to {}", inj.kind, inj.stage)));
            }
        }
        Ok(())
    }

    pub fn is_clean(&self) -> bool {
        self.flip_probability == 0.0 && self.part_omission_probability == 0.0 && self.injections.is_empty()
    }

    fn injection(&self, stage: Stage, attempt: u32) -> Option<&Injection> {
        self.injections.iter().find(|i| i.stage == stage && attempt <= i.fail_attempts)
    }
}

/// Answers every stage from ground truth, optionally corrupted.
pub struct OracleBackend {
    seg: Arc<PartSegmentation>,
    truth: HashMap<String, ContactVector>,
    corruption: Corruption,
    seed: u64,
}

impl OracleBackend {
    pub fn new(
        seg: Arc<PartSegmentation>,
        truth: HashMap<String, ContactVector>,
        corruption: Corruption,
        seed: u64,
    ) -> Result<Self, ClientError> {
        corruption.validate()?;
        for (id, gt) in &truth {
            if gt.len() != seg.vertex_count() {
                return Err(ClientError::Config(format!("ground truth for {id} has length {}", gt.len())));
            }
        }
        Ok(Self { seg, truth, corruption, seed })
    }

    fn rng(&self, sample: &str, stage: Stage, attempt: u32) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(sample.as_bytes());
        h.update([0, stage.number()]);
        h.update(attempt.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// Parts with at least one contact vertex, in index order.
    fn contact_parts(&self, gt: &ContactVector) -> Vec<&str> {
        self.seg
            .parts()
            .iter()
            .filter(|p| p.vertex_ids.iter().any(|&v| gt.get(v)))
            .map(|p| p.name.as_str())
            .collect()
    }

    fn freeform(&self, gt: &ContactVector) -> String {
        let parts = self.contact_parts(gt);
        if parts.is_empty() {
            "The right hand is not touching the object.".to_string()
        } else {
            format!("The right hand touches the object with: {}.", parts.join(", "))
        }
    }

    fn part_answer(&self, gt: &ContactVector, rng: &mut ChaCha8Rng, fault: Option<InjectionKind>) -> String {
        let mut parts: Vec<Value> = self
            .contact_parts(gt)
            .into_iter()
            .filter(|_| {
                let p = self.corruption.part_omission_probability;
                !(p > 0.0 && rng.random_bool(p))
            })
            .map(|n| json!(n))
            .collect();
        match fault {
            None => json!({ "contact_parts": parts }).to_string(),
            Some(InjectionKind::EmptyResponse) => String::new(),
            Some(InjectionKind::NotJson) => "The contact parts are the fingertip and the palm.".to_string(),
            Some(InjectionKind::MissingKey) => json!({ "parts": parts }).to_string(),
            Some(InjectionKind::UnknownPart) => {
                parts.push(json!("not_a_part"));
                json!({ "contact_parts": parts }).to_string()
            }
            Some(InjectionKind::NonTextEntry) => {
                parts.push(json!(17));
                json!({ "contact_parts": parts }).to_string()
            }
            Some(other) => unreachable!("{other:?} rejected by validate"),
        }
    }

    fn dense_answer(
        &self,
        gt: &ContactVector,
        requested: &[String],
        rng: &mut ChaCha8Rng,
        fault: Option<&Injection>,
    ) -> Result<String, ClientError> {
        let kind = fault.map(|f| f.kind);
        match kind {
            Some(InjectionKind::EmptyResponse) => return Ok(String::new()),
            Some(InjectionKind::NotJson) => return Ok("Here are the grids you asked for.".to_string()),
            _ => {}
        }
        let spare = fault.map_or(usize::MAX, |f| f.spare_parts);
        let mut out = Map::new();
        for (i, name) in requested.iter().enumerate() {
            let index = self
                .seg
                .part_index(name)
                .ok_or_else(|| ClientError::BackendFormat(format!("oracle does not know part {name:?}")))?;
            let mut grid = grid_values(self.seg.grid(index), gt);
            let p = self.corruption.flip_probability;
            if p > 0.0 {
                for cell in grid.iter_mut().flatten() {
                    if rng.random_bool(p) {
                        *cell ^= 1;
                    }
                }
            }
            let corrupt = i >= spare;
            let value = match kind {
                Some(InjectionKind::MissingPart) if corrupt => continue,
                Some(InjectionKind::MalformedGrid) if corrupt => json!("see image"),
                Some(InjectionKind::RowCountMismatch) if corrupt => {
                    if grid.len() > 1 {
                        grid.pop();
                    } else {
                        grid.push(grid[0].clone());
                    }
                    json!(grid)
                }
                Some(InjectionKind::RowLengthMismatch) if corrupt => {
                    let last = grid.last_mut().expect("grids have at least one row");
                    if last.len() > 1 {
                        last.pop();
                    } else {
                        last.push(0);
                    }
                    json!(grid)
                }
                Some(InjectionKind::NonBinaryValue) if corrupt => {
                    let mut v = json!(grid);
                    v[0][0] = json!(2);
                    v
                }
                _ => json!(grid),
            };
            out.insert(name.clone(), value);
        }
        if kind == Some(InjectionKind::ExtraPart) {
            let extra = self
                .seg
                .parts()
                .iter()
                .map(|p| p.name.as_str())
                .find(|n| !requested.iter().any(|r| r == n))
                .unwrap_or("not_a_part");
            out.insert(extra.to_string(), json!([[0]]));
        }
        Ok(Value::Object(out).to_string())
    }
}

impl Backend for OracleBackend {
    fn send(&self, request: &MllmRequest) -> Result<MllmResponse, ClientError> {
        let tag = &request.tag;
        let gt = self
            .truth
            .get(&tag.sample_id)
            .ok_or_else(|| ClientError::BackendFormat(format!("oracle has no ground truth for {}", tag.sample_id)))?;
        let mut rng = self.rng(&tag.sample_id, tag.stage, tag.attempt);
        let fault = self.corruption.injection(tag.stage, tag.attempt);
        let text = match tag.stage {
            Stage::Freeform => match fault {
                Some(_) => String::new(),
                None => self.freeform(gt),
            },
            Stage::Part => self.part_answer(gt, &mut rng, fault.map(|f| f.kind)),
            Stage::Dense => self.dense_answer(gt, &tag.parts, &mut rng, fault)?,
        };
        let usage = Usage {
            input_tokens: estimate_tokens(&request.text()) + IMAGE_TOKEN_ESTIMATE * request.images.len() as u64,
            output_tokens: estimate_tokens(&text),
        };
        Ok(MllmResponse { text, usage, latency_ms: 0 })
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}
