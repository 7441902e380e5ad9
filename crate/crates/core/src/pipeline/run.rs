use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_sample, Ablation, InputSample, PipelineContext, StageTranscript};

pub const RESULTS_FORMAT_VERSION: u32 = 1;

/// Identifies what produced a results directory. Contains nothing
/// time-dependent, so reruns of the same config are byte-identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub template_hashes: [String; 3],
    pub segmentation_hash: String,
    pub backend: String,
    pub model: String,
    pub seed: u64,
    pub ablation: Ablation,
    pub samples: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub transcripts: Vec<StageTranscript>,
}

/// Runs every sample on a pool of `workers` threads. Output order follows
/// the input order.
pub fn run_dataset(ctx: &PipelineContext, samples: &[InputSample], workers: usize) -> Vec<StageTranscript> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool builds");
    pool.install(|| {
        samples
            .par_iter()
            .map(|s| {
                let t = run_sample(ctx, s);
                log::info!("{}: {} output tokens{}", t.sample_id, t.output_tokens(), if t.degraded { " (degraded)" } else { "" });
                t
            })
            .collect()
    })
}

/// Writes `run_manifest.json`, `transcripts/<id>.json` and `requests.jsonl`
/// (sorted by sample, stage, attempt).
pub fn write_results(dir: &Path, out: &RunOutput) -> io::Result<()> {
    let tdir = dir.join("transcripts");
    fs::create_dir_all(&tdir)?;
    fs::write(dir.join("run_manifest.json"), pretty(&out.manifest)? + "\n")?;
    let mut records = Vec::new();
    for t in &out.transcripts {
        fs::write(tdir.join(format!("{}.json", t.sample_id)), pretty(t)? + "\n")?;
        records.extend(t.request_records(&out.manifest.model));
    }
    records.sort_by(|a, b| (&a.sample_id, a.stage, a.attempt).cmp(&(&b.sample_id, b.stage, b.attempt)));
    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r).map_err(io::Error::other)?);
        jsonl.push('\n');
    }
    fs::write(dir.join("requests.jsonl"), jsonl)
}

fn pretty<T: Serialize>(v: &T) -> io::Result<String> {
    serde_json::to_string_pretty(v).map_err(io::Error::other)
}

/// Reads back a results directory written by [`write_results`].
pub fn read_results(dir: &Path) -> io::Result<RunOutput> {
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(dir.join("run_manifest.json"))?)
        .map_err(io::Error::other)?;
    let mut transcripts = Vec::with_capacity(manifest.samples.len());
    for id in &manifest.samples {
        let path = dir.join("transcripts").join(format!("{id}.json"));
        let t: StageTranscript = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| io::Error::other(format!("{}: {e}", path.display())))?;
        transcripts.push(t);
    }
    Ok(RunOutput { manifest, transcripts })
}
