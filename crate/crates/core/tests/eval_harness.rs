mod common;

use std::collections::BTreeSet;
use std::fs;

use common::World;
use handcontact::eval_harness::{
    aggregate_metrics, evaluate, format_table, load_dataset, sample_metrics, sample_metrics_scores, usage_report,
    EvalError, HandSide, SampleMetrics,
};
use handcontact::hand_model::ContactVector;
use handcontact::mllm_client::{Corruption, PricingTable};
use handcontact::pipeline::{run_dataset, Ablation};
use handcontact::prompt_engine::Stage;
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

/// Set-based precision/recall/F1 with the empty-set convention.
fn brute_force(pred: &[bool], gt: &[bool]) -> (f64, f64, f64) {
    let p: BTreeSet<usize> = pred.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i).collect();
    let g: BTreeSet<usize> = gt.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i).collect();
    if p.is_empty() && g.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let hit = p.intersection(&g).count() as f64;
    let precision = if p.is_empty() { 0.0 } else { hit / p.len() as f64 };
    let recall = if g.is_empty() { 0.0 } else { hit / g.len() as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (precision, recall, f1)
}

fn ids(n: usize, ones: &[u32]) -> ContactVector {
    ContactVector::from_vertex_ids(n, ones.iter().copied())
}

#[test]
fn two_two_two_example() {
    let m = sample_metrics(&ids(10, &[0, 1, 2, 3]), &ids(10, &[0, 1, 4, 5])).unwrap();
    assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 2, 2, 4));
    assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    assert_eq!(m.total(), 10);
}

#[test]
fn macro_average_is_a_plain_mean() {
    let a = SampleMetrics::from_counts(2, 3, 3, 0);
    let b = SampleMetrics::from_counts(3, 2, 2, 0);
    assert!(close(a.f1, 0.4) && close(b.f1, 0.6));
    let agg = aggregate_metrics(&[a, b]).unwrap();
    assert!(close(agg.f1, 0.5));
    assert_eq!(agg.samples, 2);
}

#[test]
fn mean_of_f1_differs_from_f1_of_means() {
    let a = SampleMetrics::from_counts(1, 0, 9, 0);
    let b = SampleMetrics::from_counts(1, 1, 0, 0);
    let agg = aggregate_metrics(&[a, b]).unwrap();
    let (p, r) = ((1.0 + 0.5) / 2.0, (0.1 + 1.0) / 2.0);
    let f1_of_means = 2.0 * p * r / (p + r);
    let mean_of_f1 = (2.0 * 0.1 / 1.1 + 2.0 * 0.5 / 1.5) / 2.0;
    assert!(close(agg.precision, p) && close(agg.recall, r));
    assert!(close(agg.f1, mean_of_f1));
    assert!((agg.f1 - f1_of_means).abs() > 0.1);
    assert_eq!((agg.micro.tp, agg.micro.fp, agg.micro.fn_), (2, 1, 9));
    assert!(matches!(aggregate_metrics(&[]), Err(EvalError::EmptyDataset)));
}

#[test]
fn soft_scores_binarize_at_one_half() {
    let m = sample_metrics_scores(&[0.5, 0.49, 0.9, 0.0], &[1.0, 1.0, 0.5, 0.2], 0.5).unwrap();
    assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 0, 1, 1));
    assert!(matches!(
        sample_metrics(&ContactVector::zeros(778), &ContactVector::zeros(777)),
        Err(EvalError::LengthMismatch { pred: 778, gt: 777 })
    ));
}

fn line(id: &str, image: &str, gt: &[f64], hand: Option<&str>) -> String {
    let mut v = serde_json::json!({"id": id, "image_path": image, "gt_contact": gt});
    if let Some(h) = hand {
        v["hand"] = serde_json::json!(h);
    }
    v.to_string()
}

#[test]
fn dataset_loading_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("img")).unwrap();
    image::RgbImage::new(4, 4).save(dir.path().join("img/a.png")).unwrap();
    let soft: Vec<f64> = (0..778).map(|i| if i < 3 { 0.5 } else if i < 6 { 0.3 } else { 0.0 }).collect();
    let write = |name: &str, lines: &[String]| {
        let p = dir.path().join(name);
        fs::write(&p, lines.join("\n") + "\n").unwrap();
        p
    };

    let ok = write("ok.jsonl", &[line("a", "img/a.png", &soft, None), String::new(), line("b", "img/a.png", &soft, Some("left"))]);
    let ds = load_dataset(&ok, 778).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.samples[0].image_path, dir.path().join("img/a.png"));
    assert_eq!(ds.samples[0].gt_contact.ones().collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!((ds.samples[0].hand, ds.samples[1].hand), (HandSide::Right, HandSide::Left));
    assert_eq!(ds.samples[1].gt_contact, ds.samples[0].gt_contact);
    assert_eq!(ds.load_samples().unwrap()[0].image.dimensions(), (4, 4));

    let short = write("short.jsonl", &[line("a", "img/a.png", &soft[..777], None)]);
    let dup = write("dup.jsonl", &[line("a", "img/a.png", &soft, None), line("a", "img/a.png", &soft, None)]);
    let range = write("range.jsonl", &[line("a", "img/a.png", &[1.5; 778], None)]);
    let extra = write("extra.jsonl", &[line("a", "img/a.png", &soft, None).replace("}", ",\"x\":1}")]);
    for (path, needle) in [(&short, "777"), (&dup, "duplicate"), (&range, "outside"), (&extra, "unknown field")] {
        match load_dataset(path, 778) {
            Err(EvalError::Parse(msg)) => assert!(msg.contains(needle), "{msg}"),
            other => panic!("{}: {other:?}", path.display()),
        }
    }
    let missing = write("missing.jsonl", &[line("a", "img/a.png", &soft, None), line("z", "img/nope.png", &soft, None)]);
    assert!(matches!(load_dataset(&missing, 778), Err(EvalError::MissingImage(v)) if v == vec!["z".to_string()]));
}

#[test]
fn bundled_dataset_loads() {
    let ds = load_dataset(common::assets_dir().join("synthetic/manifest.jsonl"), 778).unwrap();
    assert_eq!(ds.len(), 20);
    let world = World::new(20, 7);
    for s in &world.samples {
        assert_eq!(&ds.get(&s.id).unwrap().gt_contact, s.gt.as_ref().unwrap(), "{}", s.id);
    }
}

#[test]
fn ledger_is_additive_and_skips_cost_nothing() {
    let world = World::new(20, 7);
    let ctx = world.oracle_context(Ablation::default(), Corruption::default(), 0);
    let transcripts = run_dataset(&ctx, &world.samples, 4);
    let pricing = PricingTable::default();
    let ledger = usage_report(&transcripts, "gpt-5.5", &pricing).unwrap();

    assert_eq!(ledger.samples.len(), 20);
    assert_eq!(ledger.total_output_tokens, ledger.samples.iter().map(|s| s.output_tokens).sum::<u64>());
    assert!(close(ledger.total_cost_usd, ledger.samples.iter().map(|s| s.cost_usd).sum()));
    assert!(close(ledger.mean_output_tokens, ledger.total_output_tokens as f64 / 20.0));
    for (s, t) in ledger.samples.iter().zip(&transcripts) {
        assert_eq!(s.output_tokens, s.stage_output_tokens.iter().sum::<u64>());
        for stage in Stage::ALL {
            let k = stage.number() as usize;
            assert_eq!(s.attempt_output_tokens[k].iter().sum::<u64>(), s.stage_output_tokens[k]);
        }
        assert_eq!(s.output_tokens, t.output_tokens());
        assert!(close(s.cost_usd, s.output_tokens as f64 * 30.0 / 1e6));
        if t.stage(Stage::Dense).unwrap().skipped {
            assert_eq!(s.stage_output_tokens[2], 0);
            assert!(s.attempt_output_tokens[2].is_empty());
        }
    }
    assert!(transcripts.iter().any(|t| t.stage(Stage::Dense).unwrap().skipped));
    assert!(usage_report(&transcripts, "unpriced-model", &pricing).is_err());
}

#[test]
fn evaluation_of_a_perfect_run() {
    let world = World::new(6, 12);
    let ctx = world.oracle_context(Ablation::default(), Corruption::default(), 0);
    let transcripts = run_dataset(&ctx, &world.samples, 2);
    let dir = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    for s in &world.samples {
        s.image.save(dir.path().join(format!("{}.png", s.id))).unwrap();
        let gt: Vec<f64> = s.gt.as_ref().unwrap().as_slice().iter().map(|&b| b as u8 as f64).collect();
        lines.push(line(&s.id, &format!("{}.png", s.id), &gt, None));
    }
    fs::write(dir.path().join("m.jsonl"), lines.join("\n")).unwrap();
    let ds = load_dataset(dir.path().join("m.jsonl"), 778).unwrap();

    let report = evaluate(&ds, &transcripts, "gpt-5.5", &PricingTable::default()).unwrap();
    assert_eq!((report.metrics.precision, report.metrics.recall, report.metrics.f1), (1.0, 1.0, 1.0));
    assert_eq!(report.per_sample.len(), 6);
    let row = report.table_row("full");
    assert!(close(row.cost_usd, report.usage.mean_cost_usd));
    let table = format_table(&[row]);
    let header = table.lines().next().unwrap();
    for col in ["Method", "Precision", "Recall", "F1-Score", "# of output tokens", "Cost", "Dense vertices"] {
        assert!(header.contains(col));
    }
    assert!(table.lines().nth(2).unwrap().contains("1.000"));

    assert!(matches!(
        evaluate(&ds, &transcripts[1..], "gpt-5.5", &PricingTable::default()),
        Err(EvalError::MissingPrediction(id)) if id == transcripts[0].sample_id
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn metrics_match_the_set_definition(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..200)) {
        let (pred, gt): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let m = sample_metrics(&ContactVector::from_bools(pred.clone()), &ContactVector::from_bools(gt.clone())).unwrap();
        let (p, r, f) = brute_force(&pred, &gt);
        prop_assert!(close(m.precision, p) && close(m.recall, r) && close(m.f1, f));
        prop_assert!((0.0..=1.0).contains(&m.f1));
        prop_assert_eq!(m.total(), pred.len());
        let same = sample_metrics(&ContactVector::from_bools(gt.clone()), &ContactVector::from_bools(gt)).unwrap();
        prop_assert_eq!(same.f1, 1.0);
    }
}
