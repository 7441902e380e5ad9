//! Three-stage contact reasoning per sample: free-form description, contact
//! parts, dense part grids. Each stage validates the model's answer and
//! re-asks with violation feedback within a fixed attempt budget.

mod parse;
mod run;

pub use parse::{
    first_json_object, inspect_dense_response, parse_dense_response, parse_part_response, DenseInspection,
    PartPrediction,
};
pub use run::{read_results, run_dataset, write_results, RunManifest, RunOutput, RESULTS_FORMAT_VERSION};

use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand_model::{
    grids_to_contact, vertices_of_parts, ContactVector, DenseGridPrediction, HandMesh, PartSegmentation,
};
use crate::mllm_client::{encode_image, ClientError, ImagePayload, MllmClient, RequestTag, TranscriptRecord, Usage};
use crate::prompt_engine::{
    build_error_feedback, emit_grid_manifest, full_part_list, render_prompt, PromptContext, Stage, TemplateSet,
    Violation,
};
use crate::visual_prompt::{render_prompts, RenderError, ViewConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentationMode {
    #[default]
    Detailed,
    Coarse,
}

/// Which parts of the method are switched on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub freeform: bool,
    pub part_stage: bool,
    pub conditioning: bool,
    pub flatten_grids: bool,
    pub segmentation: SegmentationMode,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { freeform: true, part_stage: true, conditioning: true, flatten_grids: false, segmentation: SegmentationMode::Detailed }
    }
}

/// A named ablation configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    #[serde(flatten)]
    pub ablation: Ablation,
}

/// The comparison rows: segmentation granularity, grid vs flattened rows,
/// the four stage subsets, and part conditioning on/off.
pub fn ablation_matrix() -> Vec<Variant> {
    let full = Ablation::default();
    let v = |name: &str, ablation: Ablation| Variant { name: name.to_string(), ablation };
    vec![
        v("full", full.clone()),
        v("coarse_segmentation", Ablation { segmentation: SegmentationMode::Coarse, ..full.clone() }),
        v("flatten_grids", Ablation { flatten_grids: true, ..full.clone() }),
        v("dense_only", Ablation { freeform: false, part_stage: false, ..full.clone() }),
        v("part_dense", Ablation { freeform: false, ..full.clone() }),
        v("freeform_dense", Ablation { part_stage: false, ..full.clone() }),
        v("no_conditioning", Ablation { conditioning: false, ..full }),
    ]
}

/// One pipeline input.
#[derive(Debug, Clone)]
pub struct InputSample {
    pub id: String,
    pub image: RgbImage,
    pub gt: Option<ContactVector>,
}

/// Everything shared by the samples of one run.
pub struct PipelineContext {
    /// The segmentation actually prompted with (flattened when that ablation is on).
    pub seg: Arc<PartSegmentation>,
    pub templates: TemplateSet,
    pub client: Arc<MllmClient>,
    /// Encoded part-label and full visual prompts.
    pub part_prompt: ImagePayload,
    pub full_prompt: ImagePayload,
    pub ablation: Ablation,
}

impl PipelineContext {
    /// Flattens the grids when the ablation asks for it, then renders and
    /// encodes both visual prompts once for the whole run.
    pub fn prepare(
        mesh: &HandMesh,
        seg: &PartSegmentation,
        ablation: Ablation,
        templates: TemplateSet,
        client: Arc<MllmClient>,
        view: &ViewConfig,
    ) -> Result<Self, PipelineError> {
        let seg = if ablation.flatten_grids { seg.flattened() } else { seg.clone() };
        let (part, full) = render_prompts(mesh, &seg, view)?;
        Ok(Self {
            seg: Arc::new(seg),
            templates,
            client,
            part_prompt: encode_image(&part.image)?,
            full_prompt: encode_image(&full.image)?,
            ablation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub prompt: String,
    /// Feedback section included in this attempt's prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    pub response: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub skipped: bool,
    pub attempts: Vec<AttemptRecord>,
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
    pub usage: Usage,
    /// Images sent with each attempt.
    pub images: usize,
}

impl StageRecord {
    fn new(stage: Stage, images: usize) -> Self {
        Self { stage, skipped: false, attempts: Vec::new(), degraded: false, fallback: None, usage: Usage::default(), images }
    }

    fn skipped(stage: Stage, reason: &str) -> Self {
        Self { skipped: true, fallback: Some(reason.to_string()), ..Self::new(stage, 0) }
    }

    pub fn output_tokens(&self) -> u64 {
        self.usage.output_tokens
    }

    fn push(&mut self, a: AttemptRecord) {
        self.usage = self.usage + a.usage;
        self.attempts.push(a);
    }
}

/// Full per-sample record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTranscript {
    pub sample_id: String,
    pub ablation: Ablation,
    pub stages: Vec<StageRecord>,
    pub z: String,
    pub predicted_parts: Vec<String>,
    /// Parts whose grids were requested in the dense stage.
    pub dense_parts: Vec<String>,
    /// Σ total_vertices over the dense manifest.
    pub dense_manifest_vertices: usize,
    pub active_vertices: usize,
    pub contact: ContactVector,
    pub degraded: bool,
    pub fallbacks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub usage: Usage,
}

impl StageTranscript {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn output_tokens(&self) -> u64 {
        self.usage.output_tokens
    }

    /// One replayable record per request, in stage then attempt order.
    pub fn request_records(&self, model: &str) -> Vec<TranscriptRecord> {
        use sha2::{Digest, Sha256};
        self.stages
            .iter()
            .flat_map(|s| {
                s.attempts.iter().map(move |a| TranscriptRecord {
                    sample_id: self.sample_id.clone(),
                    stage: s.stage,
                    attempt: a.attempt,
                    model: model.to_string(),
                    prompt_sha256: hex::encode(Sha256::digest(a.prompt.as_bytes())),
                    images: s.images,
                    response: a.response.clone(),
                    usage: a.usage,
                    latency_ms: a.latency_ms,
                })
            })
            .collect()
    }
}

struct StageCall<'a> {
    ctx: &'a PipelineContext,
    sample_id: &'a str,
    images: Vec<ImagePayload>,
    parts: Vec<String>,
}

impl StageCall<'_> {
    fn send(&self, stage: Stage, attempt: u32, prompt: String, feedback: Option<String>) -> Result<AttemptRecord, ClientError> {
        let tag = RequestTag { sample_id: self.sample_id.to_string(), stage, attempt, parts: self.parts.clone() };
        let request = self.ctx.client.request(tag, prompt, self.images.clone());
        let response = self.ctx.client.send(&request)?;
        let prompt = request.messages.into_iter().next().map(|m| m.text).unwrap_or_default();
        Ok(AttemptRecord {
            attempt,
            prompt,
            feedback,
            response: response.text,
            usage: response.usage,
            latency_ms: response.latency_ms,
            violations: Vec::new(),
        })
    }
}

fn render(ctx: &PipelineContext, stage: Stage, pc: &PromptContext) -> String {
    render_prompt(ctx.templates.get(stage), pc).expect("pipeline always supplies the required context")
}

/// Free-form stage: z is the raw answer. An empty answer is re-sent once,
/// then z falls back to "".
pub fn run_stage0(ctx: &PipelineContext, sample_id: &str, image: &ImagePayload) -> Result<(String, StageRecord), ClientError> {
    if !ctx.ablation.freeform {
        return Ok((String::new(), StageRecord::skipped(Stage::Freeform, "free-form stage disabled")));
    }
    let call = StageCall { ctx, sample_id, images: vec![image.clone()], parts: vec![] };
    let mut record = StageRecord::new(Stage::Freeform, 1);
    let prompt = render(ctx, Stage::Freeform, &PromptContext::default());
    for attempt in 1..=Stage::Freeform.max_attempts() {
        let mut a = call.send(Stage::Freeform, attempt, prompt.clone(), None)?;
        if a.response.trim().is_empty() {
            a.violations.push(Violation::EmptyResponse);
            record.push(a);
            continue;
        }
        let z = a.response.clone();
        record.push(a);
        return Ok((z, record));
    }
    record.degraded = true;
    record.fallback = Some("empty description after re-send; continuing with empty z".into());
    Ok((String::new(), record))
}

/// Part stage with up to 3 attempts; exhaustion predicts no contact parts.
pub fn run_stage1(
    ctx: &PipelineContext,
    sample_id: &str,
    image: &ImagePayload,
    z: &str,
) -> Result<(PartPrediction, StageRecord), ClientError> {
    if !ctx.ablation.part_stage {
        let all = PartPrediction { part_names: ctx.seg.part_names().map(str::to_string).collect() };
        return Ok((all, StageRecord::skipped(Stage::Part, "part stage disabled; all parts selected")));
    }
    let call = StageCall { ctx, sample_id, images: vec![image.clone(), ctx.part_prompt.clone()], parts: vec![] };
    let mut record = StageRecord::new(Stage::Part, 2);
    let part_list = full_part_list(&ctx.seg);
    let mut feedback: Option<String> = None;
    for attempt in 1..=Stage::Part.max_attempts() {
        let pc = PromptContext { z: Some(z.to_string()), part_list: Some(part_list.clone()), grid_manifest: None, feedback: feedback.clone() };
        let mut a = call.send(Stage::Part, attempt, render(ctx, Stage::Part, &pc), feedback.take())?;
        match parse_part_response(&a.response, &ctx.seg) {
            Ok(prediction) => {
                record.push(a);
                return Ok((prediction, record));
            }
            Err(violations) => {
                feedback = Some(build_error_feedback(&violations));
                a.violations = violations;
                record.push(a);
            }
        }
    }
    record.degraded = true;
    record.fallback = Some("part stage retries exhausted; no contact parts".into());
    Ok((PartPrediction::default(), record))
}

/// Dense stage with up to 5 attempts over the selected parts. Skipped for an
/// empty selection. On exhaustion, parts that were well-formed in the last
/// attempt keep their grid and the rest are filled with ones.
pub fn run_stage2(
    ctx: &PipelineContext,
    sample_id: &str,
    image: &ImagePayload,
    z: &str,
    parts: &[String],
) -> Result<(DenseGridPrediction, StageRecord), ClientError> {
    if parts.is_empty() {
        return Ok((DenseGridPrediction::default(), StageRecord::skipped(Stage::Dense, "no contact parts selected")));
    }
    let manifest = emit_grid_manifest(&ctx.seg, parts.iter().map(String::as_str))
        .expect("selected parts come from the segmentation");
    let names: Vec<String> = manifest.entries.iter().map(|e| e.part_name.clone()).collect();
    let call = StageCall { ctx, sample_id, images: vec![image.clone(), ctx.full_prompt.clone()], parts: names.clone() };
    let mut record = StageRecord::new(Stage::Dense, 2);
    let (part_list, manifest_json) = (manifest.part_list(), manifest.to_json());
    let mut feedback: Option<String> = None;
    let mut last = None;
    for attempt in 1..=Stage::Dense.max_attempts() {
        let pc = PromptContext {
            z: Some(z.to_string()),
            part_list: Some(part_list.clone()),
            grid_manifest: Some(manifest_json.clone()),
            feedback: feedback.clone(),
        };
        let mut a = call.send(Stage::Dense, attempt, render(ctx, Stage::Dense, &pc), feedback.take())?;
        let inspection = inspect_dense_response(&a.response, &manifest);
        if inspection.violations.is_empty() {
            record.push(a);
            return Ok((inspection.valid, record));
        }
        feedback = Some(build_error_feedback(&inspection.violations));
        a.violations = inspection.violations.clone();
        record.push(a);
        last = Some(inspection);
    }
    let kept = last.map(|i| i.valid).unwrap_or_default();
    let mut grids = DenseGridPrediction::default();
    let mut filled = Vec::new();
    for entry in &manifest.entries {
        match kept.get(&entry.part_name) {
            Some(g) => grids.insert(entry.part_name.clone(), g.clone()),
            None => {
                grids.insert(entry.part_name.clone(), entry.row_lengths.iter().map(|&n| vec![1u8; n]).collect());
                filled.push(entry.part_name.clone());
            }
        }
    }
    record.degraded = true;
    record.fallback = Some(format!(
        "dense stage retries exhausted; kept {} valid part(s), filled with ones: {}",
        kept.len(),
        filled.join(", ")
    ));
    Ok((grids, record))
}

/// Runs the three stages for one sample. Never fails: transport and other
/// errors are recorded and the contact stays all-zero.
pub fn run_sample(ctx: &PipelineContext, sample: &InputSample) -> StageTranscript {
    let mut t = StageTranscript {
        sample_id: sample.id.clone(),
        ablation: ctx.ablation.clone(),
        stages: Vec::new(),
        z: String::new(),
        predicted_parts: Vec::new(),
        dense_parts: Vec::new(),
        dense_manifest_vertices: 0,
        active_vertices: 0,
        contact: ContactVector::zeros(ctx.seg.vertex_count()),
        degraded: false,
        fallbacks: Vec::new(),
        error: None,
        usage: Usage::default(),
    };
    if let Err(e) = run_stages(ctx, sample, &mut t) {
        t.error = Some(e);
        t.degraded = true;
        t.contact = ContactVector::zeros(ctx.seg.vertex_count());
    }
    t.usage = t.stages.iter().map(|s| s.usage).sum();
    for s in &t.stages {
        if s.degraded {
            t.degraded = true;
            if let Some(f) = &s.fallback {
                t.fallbacks.push(format!("{}: {f}", s.stage));
            }
        }
    }
    t
}

fn run_stages(ctx: &PipelineContext, sample: &InputSample, t: &mut StageTranscript) -> Result<(), String> {
    let image = encode_image(&sample.image).map_err(|e| e.to_string())?;
    let (z, r0) = run_stage0(ctx, &sample.id, &image).map_err(|e| format!("{}: {e}", Stage::Freeform))?;
    t.stages.push(r0);
    t.z = z;
    let (parts, r1) = run_stage1(ctx, &sample.id, &image, &t.z).map_err(|e| format!("{}: {e}", Stage::Part))?;
    t.stages.push(r1);
    t.predicted_parts = parts.part_names;
    t.dense_parts = if ctx.ablation.conditioning {
        t.predicted_parts.clone()
    } else {
        ctx.seg.part_names().map(str::to_string).collect()
    };
    let mut by_index: Vec<(usize, String)> = t
        .dense_parts
        .iter()
        .map(|n| (ctx.seg.part_index(n).expect("known part"), n.clone()))
        .collect();
    by_index.sort();
    t.dense_parts = by_index.into_iter().map(|(_, n)| n).collect();
    t.dense_manifest_vertices =
        t.dense_parts.iter().map(|n| ctx.seg.grid(ctx.seg.part_index(n).expect("known part")).total_vertices()).sum();
    let (grids, r2) =
        run_stage2(ctx, &sample.id, &image, &t.z, &t.dense_parts).map_err(|e| format!("{}: {e}", Stage::Dense))?;
    t.stages.push(r2);
    let active = vertices_of_parts(&ctx.seg, t.dense_parts.iter().map(String::as_str)).map_err(|e| e.to_string())?;
    t.active_vertices = active.len();
    t.contact = grids_to_contact(&ctx.seg, &grids, &active).map_err(|e| e.to_string())?;
    Ok(())
}
