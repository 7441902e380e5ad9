//! Wiring of assets, backend and ablation settings into pipeline runs.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval_harness::{evaluate, DatasetManifest, EvalError, EvalReport};
use crate::hand_model::{HandMesh, PartSegmentation};
use crate::mllm_client::{build_client, BackendConfig, ClientError, OracleSource};
use crate::pipeline::{
    run_dataset, Ablation, InputSample, PipelineContext, PipelineError, RunManifest, RunOutput, SegmentationMode,
    Variant, RESULTS_FORMAT_VERSION,
};
use crate::prompt_engine::TemplateSet;
use crate::visual_prompt::ViewConfig;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("coarse segmentation requested but none was supplied")]
    MissingCoarseSegmentation,
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub struct Assets {
    pub mesh: HandMesh,
    pub detailed: PartSegmentation,
    pub coarse: Option<PartSegmentation>,
}

impl Assets {
    pub fn segmentation(&self, mode: SegmentationMode) -> Result<&PartSegmentation, ExperimentError> {
        match mode {
            SegmentationMode::Detailed => Ok(&self.detailed),
            SegmentationMode::Coarse => self.coarse.as_ref().ok_or(ExperimentError::MissingCoarseSegmentation),
        }
    }
}

/// Run settings other than the data.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub backend: BackendConfig,
    pub templates: TemplateSet,
    pub view: ViewConfig,
    pub workers: usize,
    pub seed: u64,
}

impl RunSettings {
    pub fn oracle() -> Self {
        Self {
            backend: BackendConfig::oracle(),
            templates: TemplateSet::default(),
            view: ViewConfig::default(),
            workers: 1,
            seed: 0,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    backend: &'a BackendConfig,
    ablation: &'a Ablation,
    view: &'a ViewConfig,
    seed: u64,
}

/// Runs one configuration over the samples.
pub fn run_experiment(
    assets: &Assets,
    dataset: &DatasetManifest,
    samples: &[InputSample],
    ablation: &Ablation,
    settings: &RunSettings,
) -> Result<RunOutput, ExperimentError> {
    let seg = assets.segmentation(ablation.segmentation)?;
    let effective = if ablation.flatten_grids { seg.flattened() } else { seg.clone() };
    let oracle = OracleSource {
        seg: Arc::new(effective.clone()),
        truth: dataset.samples.iter().map(|s| (s.id.clone(), s.gt_contact.clone())).collect::<HashMap<_, _>>(),
        seed: settings.seed,
    };
    let client = Arc::new(build_client(&settings.backend, Some(oracle))?);
    let ctx = PipelineContext::prepare(
        &assets.mesh,
        seg,
        ablation.clone(),
        settings.templates.clone(),
        client.clone(),
        &settings.view,
    )?;
    let transcripts = run_dataset(&ctx, samples, settings.workers);
    let config = HashedConfig { backend: &settings.backend, ablation, view: &settings.view, seed: settings.seed };
    let manifest = RunManifest {
        format_version: RESULTS_FORMAT_VERSION,
        config_hash: sha256_hex(&serde_json::to_vec(&config).expect("config serializes")),
        template_hashes: settings.templates.hashes(),
        segmentation_hash: sha256_hex(effective.to_json().as_bytes()),
        backend: client.backend_name().to_string(),
        model: client.model.clone(),
        seed: settings.seed,
        ablation: ablation.clone(),
        samples: samples.iter().map(|s| s.id.clone()).collect(),
    };
    Ok(RunOutput { manifest, transcripts })
}

pub struct VariantResult {
    pub variant: Variant,
    pub output: RunOutput,
    pub report: EvalReport,
}

/// Runs and evaluates every variant.
pub fn run_ablation(
    assets: &Assets,
    dataset: &DatasetManifest,
    samples: &[InputSample],
    variants: &[Variant],
    settings: &RunSettings,
) -> Result<Vec<VariantResult>, ExperimentError> {
    variants
        .iter()
        .map(|v| {
            let output = run_experiment(assets, dataset, samples, &v.ablation, settings)?;
            let report = evaluate(dataset, &output.transcripts, &settings.backend.model, &settings.backend.pricing)?;
            Ok(VariantResult { variant: v.clone(), output, report })
        })
        .collect()
}
