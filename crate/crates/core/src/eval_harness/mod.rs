//! Dataset loading, vertex-level metrics, token/cost accounting and reports.

mod dataset;
mod metrics;

pub use dataset::{load_dataset, DatasetManifest, DatasetSample, HandSide};
pub use metrics::{
    aggregate_metrics, sample_metrics, sample_metrics_scores, AggregateMetrics, SampleMetrics, CONTACT_THRESHOLD,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mllm_client::{compute_cost, format_usd, ClientError, PricingTable};
use crate::pipeline::StageTranscript;
use crate::prompt_engine::Stage;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction has {pred} values but ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("cannot aggregate an empty dataset")]
    EmptyDataset,
    #[error("dataset parse error: {0}")]
    Parse(String),
    #[error("missing image files for samples {0:?}")]
    MissingImage(Vec<String>),
    #[error("no prediction for sample {0:?}")]
    MissingPrediction(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Output tokens of one sample, per stage and attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleUsage {
    pub sample_id: String,
    /// `[freeform, part, dense]`.
    pub stage_output_tokens: [u64; 3],
    /// Per stage, one entry per attempt.
    pub attempt_output_tokens: [Vec<u64>; 3],
    pub output_tokens: u64,
    pub input_tokens: u64,
    pub cost_usd: f64,
    pub dense_manifest_vertices: usize,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub model: String,
    pub samples: Vec<SampleUsage>,
    pub total_output_tokens: u64,
    pub total_input_tokens: u64,
    pub total_cost_usd: f64,
    pub mean_output_tokens: f64,
    pub mean_cost_usd: f64,
    pub mean_dense_manifest_vertices: f64,
    pub degraded_samples: usize,
}

/// Sums output tokens over stages and attempts and prices them.
pub fn usage_report(transcripts: &[StageTranscript], model: &str, pricing: &PricingTable) -> Result<UsageLedger, EvalError> {
    pricing.rate(model)?;
    let mut samples = Vec::with_capacity(transcripts.len());
    for t in transcripts {
        let mut stage_tokens = [0u64; 3];
        let mut attempts: [Vec<u64>; 3] = Default::default();
        for s in &t.stages {
            let k = s.stage.number() as usize;
            attempts[k] = s.attempts.iter().map(|a| a.usage.output_tokens).collect();
            stage_tokens[k] = attempts[k].iter().sum();
        }
        let output_tokens: u64 = stage_tokens.iter().sum();
        let usage = crate::mllm_client::Usage { input_tokens: t.usage.input_tokens, output_tokens };
        samples.push(SampleUsage {
            sample_id: t.sample_id.clone(),
            stage_output_tokens: stage_tokens,
            attempt_output_tokens: attempts,
            output_tokens,
            input_tokens: t.usage.input_tokens,
            cost_usd: compute_cost(usage, model, pricing)?,
            dense_manifest_vertices: t.dense_manifest_vertices,
            degraded: t.degraded,
        });
    }
    let n = samples.len().max(1) as f64;
    let total_output_tokens = samples.iter().map(|s| s.output_tokens).sum::<u64>();
    let total_cost_usd = samples.iter().map(|s| s.cost_usd).sum::<f64>();
    Ok(UsageLedger {
        model: model.to_string(),
        total_output_tokens,
        total_input_tokens: samples.iter().map(|s| s.input_tokens).sum(),
        total_cost_usd,
        mean_output_tokens: total_output_tokens as f64 / n,
        mean_cost_usd: total_cost_usd / n,
        mean_dense_manifest_vertices: samples.iter().map(|s| s.dense_manifest_vertices as f64).sum::<f64>() / n,
        degraded_samples: samples.iter().filter(|s| s.degraded).count(),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub sample_id: String,
    pub metrics: SampleMetrics,
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: AggregateMetrics,
    pub usage: UsageLedger,
    pub per_sample: Vec<SampleReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table_row(&self, name: &str) -> TableRow {
        TableRow {
            name: name.to_string(),
            precision: self.metrics.precision,
            recall: self.metrics.recall,
            f1: self.metrics.f1,
            output_tokens: self.usage.mean_output_tokens,
            cost_usd: self.usage.mean_cost_usd,
            dense_vertices: self.usage.mean_dense_manifest_vertices,
        }
    }
}

/// Scores every dataset sample against its transcript.
pub fn evaluate(
    dataset: &DatasetManifest,
    transcripts: &[StageTranscript],
    model: &str,
    pricing: &PricingTable,
) -> Result<EvalReport, EvalError> {
    let mut per_sample = Vec::with_capacity(dataset.len());
    let mut ordered = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        let t = transcripts
            .iter()
            .find(|t| t.sample_id == s.id)
            .ok_or_else(|| EvalError::MissingPrediction(s.id.clone()))?;
        per_sample.push(SampleReport {
            sample_id: s.id.clone(),
            metrics: sample_metrics(&t.contact, &s.gt_contact)?,
            degraded: t.degraded,
            error: t.error.clone(),
        });
        ordered.push(t.clone());
    }
    let metrics = aggregate_metrics(&per_sample.iter().map(|r| r.metrics).collect::<Vec<_>>())?;
    Ok(EvalReport { metrics, usage: usage_report(&ordered, model, pricing)?, per_sample })
}

/// One line of the comparison table (per-sample means).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub output_tokens: f64,
    pub cost_usd: f64,
    pub dense_vertices: f64,
}

/// `3588.4` -> `3,588`.
pub fn format_tokens(tokens: f64) -> String {
    let n = tokens.round() as u64;
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Plain-text table: Method, Precision, Recall, F1-Score, # of output
/// tokens, Cost, Dense vertices.
pub fn format_table(rows: &[TableRow]) -> String {
    let header = ["Method", "Precision", "Recall", "F1-Score", "# of output tokens", "Cost", "Dense vertices"];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                format!("{:.3}", r.precision),
                format!("{:.3}", r.recall),
                format!("{:.3}", r.f1),
                format_tokens(r.output_tokens),
                format_usd(r.cost_usd),
                format!("{:.1}", r.dense_vertices),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
    for row in &body {
        out.push('\n');
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out.push('\n');
    out
}

/// Output tokens a transcript spent in `stage`.
pub fn stage_output_tokens(t: &StageTranscript, stage: Stage) -> u64 {
    t.stage(stage).map_or(0, |s| s.output_tokens())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_separator() {
        assert_eq!(format_tokens(3588.0), "3,588");
        assert_eq!(format_tokens(999.4), "999");
        assert_eq!(format_tokens(1234567.0), "1,234,567");
        assert_eq!(format_tokens(0.0), "0");
    }

    #[test]
    fn table_has_the_report_columns() {
        let t = format_table(&[TableRow {
            name: "full".into(),
            precision: 1.0,
            recall: 0.5,
            f1: 2.0 / 3.0,
            output_tokens: 3588.0,
            cost_usd: 0.10764,
            dense_vertices: 120.0,
        }]);
        assert!(t.starts_with("Method"));
        assert!(t.contains("Precision") && t.contains("F1-Score") && t.contains("# of output tokens"));
        assert!(t.contains("0.667") && t.contains("3,588") && t.contains("$0.108"));
    }
}
