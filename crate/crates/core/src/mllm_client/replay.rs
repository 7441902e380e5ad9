use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, ClientError, MllmRequest, MllmResponse, Usage};
use crate::prompt_engine::Stage;

/// One request/response exchange, as written to `requests.jsonl` and read
/// back by the replay backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub sample_id: String,
    pub stage: Stage,
    pub attempt: u32,
    pub model: String,
    pub prompt_sha256: String,
    pub images: usize,
    pub response: String,
    pub usage: Usage,
    pub latency_ms: u64,
}

impl TranscriptRecord {
    pub fn new(request: &MllmRequest, response: &MllmResponse) -> Self {
        Self {
            sample_id: request.tag.sample_id.clone(),
            stage: request.tag.stage,
            attempt: request.tag.attempt,
            model: request.model.clone(),
            prompt_sha256: hex::encode(Sha256::digest(request.text().as_bytes())),
            images: request.images.len(),
            response: response.text.clone(),
            usage: response.usage,
            latency_ms: response.latency_ms,
        }
    }
}

type Key = (String, Stage, u32);

/// Answers from a recorded transcript keyed by (sample, stage, attempt).
pub struct ReplayBackend {
    records: HashMap<Key, TranscriptRecord>,
}

impl ReplayBackend {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Result<Self, ClientError> {
        let mut map = HashMap::new();
        for r in records {
            let key = (r.sample_id.clone(), r.stage, r.attempt);
            if map.contains_key(&key) {
                return Err(ClientError::Config(format!(
                    "duplicate transcript record for {} {} attempt {}",
                    r.sample_id, r.stage, r.attempt
                )));
            }
            map.insert(key, r);
        }
        Ok(Self { records: map })
    }

    pub fn parse(text: &str) -> Result<Self, ClientError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: TranscriptRecord = serde_json::from_str(line)
                .map_err(|e| ClientError::Config(format!("transcript line {}: {e}", i + 1)))?;
            records.push(r);
        }
        Self::from_records(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClientError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn send(&self, request: &MllmRequest) -> Result<MllmResponse, ClientError> {
        let tag = &request.tag;
        let r = self.records.get(&(tag.sample_id.clone(), tag.stage, tag.attempt)).ok_or_else(|| {
            ClientError::BackendFormat(format!(
                "no recorded response for {} {} attempt {}",
                tag.sample_id, tag.stage, tag.attempt
            ))
        })?;
        Ok(MllmResponse { text: r.response.clone(), usage: r.usage, latency_ms: r.latency_ms })
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mllm_client::{Message, RequestTag, Role};

    fn request(sample: &str, attempt: u32) -> MllmRequest {
        MllmRequest {
            model: "m".into(),
            messages: vec![Message { role: Role::User, text: "prompt".into() }],
            images: vec![],
            max_output_tokens: 10,
            temperature: 0.0,
            tag: RequestTag { sample_id: sample.into(), stage: Stage::Part, attempt, parts: vec![] },
        }
    }

    #[test]
    fn replays_recorded_text_and_usage() {
        let resp = MllmResponse {
            text: "{\"contact_parts\":[]}".into(),
            usage: Usage { input_tokens: 5, output_tokens: 7 },
            latency_ms: 12,
        };
        let rec = TranscriptRecord::new(&request("a", 1), &resp);
        let jsonl = format!("{}\n", serde_json::to_string(&rec).unwrap());
        let replay = ReplayBackend::parse(&jsonl).unwrap();
        assert_eq!(replay.send(&request("a", 1)).unwrap(), resp);
        assert!(matches!(replay.send(&request("a", 2)), Err(ClientError::BackendFormat(_))));
        let dup = format!("{jsonl}{jsonl}");
        assert!(ReplayBackend::parse(&dup).is_err());
    }
}
