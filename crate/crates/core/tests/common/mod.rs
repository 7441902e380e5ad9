#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use handcontact::fixtures::{fixture_mesh, fixture_segmentation, synthetic_samples};
use handcontact::hand_model::{ContactVector, HandMesh, PartSegmentation};
use handcontact::mllm_client::{Backend, Corruption, MllmClient, OracleBackend, PricingTable};
use handcontact::pipeline::{Ablation, InputSample, PipelineContext};
use handcontact::prompt_engine::TemplateSet;
use handcontact::visual_prompt::ViewConfig;

pub fn assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

/// In-memory fixture mesh, segmentation and synthetic samples.
pub struct World {
    pub mesh: HandMesh,
    pub seg: PartSegmentation,
    pub samples: Vec<InputSample>,
}

impl World {
    pub fn new(count: usize, seed: u64) -> Self {
        let mesh = fixture_mesh();
        let samples = synthetic_samples(&mesh, count, seed)
            .into_iter()
            .map(|s| InputSample { id: s.id, image: s.image, gt: Some(s.gt) })
            .collect();
        Self { mesh, seg: fixture_segmentation(), samples }
    }

    pub fn truth(&self) -> HashMap<String, ContactVector> {
        self.samples.iter().map(|s| (s.id.clone(), s.gt.clone().unwrap())).collect()
    }

    pub fn gt(&self, id: &str) -> &ContactVector {
        self.samples.iter().find(|s| s.id == id).and_then(|s| s.gt.as_ref()).unwrap()
    }

    /// Small views keep rendering cheap in tests.
    pub fn view() -> ViewConfig {
        ViewConfig { view_width: 96, view_height: 96, margin: 4.0, ..ViewConfig::default() }
    }

    pub fn context_with(&self, backend: Box<dyn Backend>, ablation: Ablation) -> PipelineContext {
        let client = Arc::new(MllmClient::new(backend, "gpt-5.5", PricingTable::default()));
        PipelineContext::prepare(&self.mesh, &self.seg, ablation, TemplateSet::default(), client, &Self::view()).unwrap()
    }

    pub fn oracle_context(&self, ablation: Ablation, corruption: Corruption, seed: u64) -> PipelineContext {
        let seg = if ablation.flatten_grids { self.seg.flattened() } else { self.seg.clone() };
        let oracle = OracleBackend::new(Arc::new(seg), self.truth(), corruption, seed).unwrap();
        self.context_with(Box::new(oracle), ablation)
    }
}

/// Every scalar in a JSON value, rendered the way it appears in text.
pub fn scalar_strings(v: &serde_json::Value) -> Vec<String> {
    match v {
        serde_json::Value::Object(m) => m.values().flat_map(scalar_strings).collect(),
        serde_json::Value::Array(a) => a.iter().flat_map(scalar_strings).collect(),
        serde_json::Value::String(s) => vec![s.clone()],
        other => vec![other.to_string()],
    }
}
