use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::hand_model::ContactVector;

/// Contact threshold applied to soft scores.
pub const CONTACT_THRESHOLD: f64 = 0.5;

/// Vertex-level confusion counts and scores for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Ratio with the empty-set convention: when both the predicted and the
/// actual positive sets are empty the score is 1, any other zero
/// denominator gives 0.
fn ratio(num: usize, den: usize, both_empty: bool) -> f64 {
    if den > 0 {
        num as f64 / den as f64
    } else if both_empty {
        1.0
    } else {
        0.0
    }
}

impl SampleMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let both_empty = tp + fp == 0 && tp + fn_ == 0;
        let precision = ratio(tp, tp + fp, both_empty);
        let recall = ratio(tp, tp + fn_, both_empty);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { tp, fp, fn_, tn, precision, recall, f1 }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Metrics of a binary prediction against binary ground truth.
pub fn sample_metrics(pred: &ContactVector, gt: &ContactVector) -> Result<SampleMetrics, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(SampleMetrics::from_counts(tp, fp, fn_, tn))
}

/// Metrics of soft scores, both sides binarized at `threshold` (inclusive).
pub fn sample_metrics_scores(pred: &[f64], gt: &[f64], threshold: f64) -> Result<SampleMetrics, EvalError> {
    sample_metrics(&ContactVector::from_scores(pred, threshold), &ContactVector::from_scores(gt, threshold))
}

/// Dataset-level metrics. Macro scores are unweighted per-sample means;
/// micro scores pool the confusion counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub samples: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub micro: SampleMetrics,
}

pub fn aggregate_metrics(samples: &[SampleMetrics]) -> Result<AggregateMetrics, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let n = samples.len() as f64;
    let mean = |f: fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n;
    let sum = |f: fn(&SampleMetrics) -> usize| samples.iter().map(f).sum::<usize>();
    Ok(AggregateMetrics {
        samples: samples.len(),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        micro: SampleMetrics::from_counts(sum(|m| m.tp), sum(|m| m.fp), sum(|m| m.fn_), sum(|m| m.tn)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_empty_scores_one() {
        let z = ContactVector::zeros(10);
        let m = sample_metrics(&z, &z).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn one_side_empty_scores_zero() {
        let z = ContactVector::zeros(4);
        let one = ContactVector::from_vertex_ids(4, [2]);
        let m = sample_metrics(&z, &one).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = sample_metrics(&one, &z).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            sample_metrics(&ContactVector::zeros(3), &ContactVector::zeros(4)),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn soft_labels_binarize_inclusively() {
        let m = sample_metrics_scores(&[0.5, 0.2], &[0.7, 0.49], CONTACT_THRESHOLD).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (1, 0, 0, 1));
    }

    #[test]
    fn empty_aggregate() {
        assert!(matches!(aggregate_metrics(&[]), Err(EvalError::EmptyDataset)));
    }

    #[test]
    fn fn_serializes_as_fn() {
        let json = serde_json::to_string(&SampleMetrics::from_counts(1, 0, 0, 0)).unwrap();
        assert!(json.contains("\"fn\":0"));
    }
}
