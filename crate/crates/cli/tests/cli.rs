use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn assets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn asset(name: &str) -> String {
    assets().join(name).display().to_string()
}

fn handcontact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handcontact")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn small_views(dir: &Path) -> String {
    let p = dir.join("views.json");
    fs::write(&p, r#"{"view_width": 96, "view_height": 96, "margin": 4.0}"#).unwrap();
    p.display().to_string()
}

/// A four-sample dataset cut from the bundled one.
fn small_dataset(dir: &Path) -> String {
    let text = fs::read_to_string(assets().join("synthetic/manifest.jsonl")).unwrap();
    let synth = assets().join("synthetic");
    let lines: Vec<String> = text
        .lines()
        .take(4)
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            let rel = v["image_path"].as_str().unwrap().to_string();
            v["image_path"] = serde_json::json!(synth.join(rel).display().to_string());
            v.to_string()
        })
        .collect();
    let p = dir.join("dataset.jsonl");
    fs::write(&p, lines.join("\n")).unwrap();
    p.display().to_string()
}

#[test]
fn validate_reports_zero_errors() {
    let out = stdout(&handcontact(&[
        "validate",
        "--mesh",
        &asset("hand.obj"),
        "--seg",
        &asset("segmentation_detailed.json"),
        "--coarse-seg",
        &asset("segmentation_coarse.json"),
    ]));
    assert!(out.contains("778 vertices, 0 errors"), "{out}");
    assert!(out.contains("34 parts, 0 errors"), "{out}");
    assert!(out.contains("6 parts, 0 errors"), "{out}");
}

#[test]
fn errors_are_reported_as_json() {
    let out = handcontact(&["validate", "--mesh", "/no/such/hand.obj", "--seg", &asset("segmentation_detailed.json")]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["status"], "error");
    assert_eq!(err["command"], "validate");
    assert!(err.to_string().contains("/no/such/hand.obj"));
}

#[test]
fn build_grids_reproduces_the_bundled_segmentation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seg.json");
    stdout(&handcontact(&[
        "build-grids",
        "--mesh",
        &asset("hand.obj"),
        "--labeling",
        &asset("labeling_detailed.json"),
        "--hints",
        &asset("hints_detailed.json"),
        "--out",
        &out.display().to_string(),
    ]));
    let built: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let bundled: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(assets().join("segmentation_detailed.json")).unwrap()).unwrap();
    assert_eq!(built, bundled);
}

#[test]
fn render_prompts_writes_images_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let views = small_views(dir.path());
    let out = dir.path().join("prompts");
    stdout(&handcontact(&[
        "render-prompts",
        "--mesh",
        &asset("hand.obj"),
        "--seg",
        &asset("segmentation_detailed.json"),
        "--out",
        &out.display().to_string(),
        "--views",
        &views,
    ]));
    for name in ["part.jpg", "full.jpg", "part.png", "full.png", "part.json", "full.json"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let png = fs::read(out.join("full.png")).unwrap();
    let be = |at: usize| u32::from_be_bytes(png[at..at + 4].try_into().unwrap());
    assert_eq!((be(16), be(20)), (4 * 96, 2 * 96));
}

#[test]
fn run_then_eval_scores_a_perfect_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (views, dataset) = (small_views(dir.path()), small_dataset(dir.path()));
    let results = dir.path().join("results");
    stdout(&handcontact(&[
        "run",
        "--mesh",
        &asset("hand.obj"),
        "--seg",
        &asset("segmentation_detailed.json"),
        "--dataset",
        &dataset,
        "--out",
        &results.display().to_string(),
        "--workers",
        "2",
        "--views",
        &views,
    ]));
    assert!(results.join("run_manifest.json").is_file());
    assert_eq!(fs::read_dir(results.join("transcripts")).unwrap().count(), 4);

    let out = stdout(&handcontact(&["eval", "--results", &results.display().to_string(), "--dataset", &dataset]));
    assert!(out.contains("F1=1.000"), "{out}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(results.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"]["f1"], 1.0);
    assert!(results.join("report.txt").is_file());
}

#[test]
fn ablate_compares_the_given_variants() {
    let dir = tempfile::tempdir().unwrap();
    let (views, dataset) = (small_views(dir.path()), small_dataset(dir.path()));
    let variants = dir.path().join("variants.json");
    fs::write(&variants, r#"[{"name": "with_parts"}, {"name": "all_parts", "conditioning": false}]"#).unwrap();
    let out = dir.path().join("ablate");
    stdout(&handcontact(&[
        "ablate",
        "--mesh",
        &asset("hand.obj"),
        "--seg",
        &asset("segmentation_detailed.json"),
        "--dataset",
        &dataset,
        "--out",
        &out.display().to_string(),
        "--ablation",
        &variants.display().to_string(),
        "--views",
        &views,
    ]));
    let table = fs::read_to_string(out.join("comparison.txt")).unwrap();
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 2, "{table}");
    assert!(rows[0].starts_with("with_parts") && rows[1].starts_with("all_parts"));
    let cmp: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    let rows = cmp.as_array().unwrap();
    assert!(rows[0]["dense_vertices"].as_f64().unwrap() < rows[1]["dense_vertices"].as_f64().unwrap());
    assert_eq!(rows[1]["dense_vertices"], 778.0);
}

#[test]
fn fixtures_regenerates_the_bundled_assets() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&handcontact(&["fixtures", "--out", &dir.path().display().to_string(), "--samples", "3"]));
    for name in ["hand.obj", "segmentation_detailed.json", "segmentation_coarse.json", "hints_detailed.json"] {
        assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(assets().join(name)).unwrap(), "{name}");
    }
    let manifest = fs::read_to_string(dir.path().join("synthetic/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 3);
}
