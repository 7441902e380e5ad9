use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use handcontact::eval_harness::{evaluate, format_table, load_dataset, DatasetManifest, EvalReport};
use handcontact::experiment::{run_ablation, run_experiment, Assets, RunSettings};
use handcontact::fixtures::write_fixture_assets;
use handcontact::grid_builder::{build_segmentation, load_hints, validate_segmentation};
use handcontact::hand_model::{load_labeling, load_mesh, load_segmentation, HandMesh, PartSegmentation};
use handcontact::mllm_client::{BackendConfig, PricingTable};
use handcontact::pipeline::{ablation_matrix, read_results, write_results, Ablation, Variant};
use handcontact::prompt_engine::TemplateSet;
use handcontact::visual_prompt::{render_prompts, ViewConfig};

#[derive(Parser)]
#[command(name = "handcontact", version, about = "Dense hand contact estimation with a multimodal LLM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a mesh and segmentation; prints the error count.
    Validate {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        seg: PathBuf,
        #[arg(long)]
        coarse_seg: Option<PathBuf>,
    },
    /// Build part grids from a labeling and orientation hints.
    BuildGrids {
        #[arg(long)]
        mesh: PathBuf,
        /// Segmentation file without grids.
        #[arg(long)]
        labeling: PathBuf,
        #[arg(long)]
        hints: PathBuf,
        /// Output segmentation file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write part.jpg, full.jpg, PNG copies and projection sidecars.
    RenderPrompts {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        seg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON view configuration.
        #[arg(long)]
        views: Option<PathBuf>,
    },
    /// Run the pipeline over a dataset and write transcripts.
    Run(RunArgs),
    /// Score a results directory against its dataset.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Backend config supplying the pricing table.
        #[arg(long)]
        backend: Option<String>,
        /// Report directory (defaults to the results directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every variant of an ablation matrix and compare them.
    Ablate(RunArgs),
    /// Write the bundled synthetic fixture assets.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    seg: PathBuf,
    /// Coarse segmentation for the coarse-segmentation variant.
    #[arg(long)]
    coarse_seg: Option<PathBuf>,
    #[arg(long)]
    templates_dir: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Backend config file, or `oracle` for the clean oracle.
    #[arg(long, default_value = "oracle")]
    backend: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `run`: one ablation object. `ablate`: a list of named variants.
    #[arg(long)]
    ablation: Option<PathBuf>,
    #[arg(long)]
    views: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let summary = json!({
                "status": "error",
                "command": name,
                "error": err.to_string(),
                "causes": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{summary}");
            ExitCode::FAILURE
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::BuildGrids { .. } => "build-grids",
        Command::RenderPrompts { .. } => "render-prompts",
        Command::Run(_) => "run",
        Command::Eval { .. } => "eval",
        Command::Ablate(_) => "ablate",
        Command::Fixtures { .. } => "fixtures",
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate { mesh, seg, coarse_seg } => validate(&mesh, &seg, coarse_seg.as_deref()),
        Command::BuildGrids { mesh, labeling, hints, out } => {
            let mesh = read_mesh(&mesh)?;
            let labeling = load_labeling(&labeling, &mesh).with_context(|| format!("--labeling {}", labeling.display()))?;
            let hints = load_hints(&hints).with_context(|| format!("--hints {}", hints.display()))?;
            let (seg, warnings) = build_segmentation(&mesh, &labeling, &hints)?;
            write(&out, seg.to_json())?;
            println!("build-grids: {} parts, {} row warnings -> {}", seg.part_count(), warnings.len(), out.display());
            Ok(())
        }
        Command::RenderPrompts { mesh, seg, out, views } => {
            let mesh = read_mesh(&mesh)?;
            let seg = read_seg(&seg, &mesh, "--seg")?;
            let view = read_views(views.as_deref())?;
            let (part, full) = render_prompts(&mesh, &seg, &view)?;
            fs::create_dir_all(&out)?;
            write(&out.join("part.jpg"), part.to_jpeg()?)?;
            write(&out.join("full.jpg"), full.to_jpeg()?)?;
            write(&out.join("part.png"), part.to_png()?)?;
            write(&out.join("full.png"), full.to_png()?)?;
            write(&out.join("part.json"), part.sidecar_json())?;
            write(&out.join("full.json"), full.sidecar_json())?;
            println!("render-prompts: {}x{} and {}x{} -> {}", part.width, part.height, full.width, full.height, out.display());
            Ok(())
        }
        Command::Run(args) => run(args),
        Command::Eval { results, dataset, backend, out } => {
            let output = read_results(&results).with_context(|| format!("--results {}", results.display()))?;
            let pricing = match backend {
                Some(b) => read_backend(&b)?.pricing,
                None => PricingTable::default(),
            };
            let vertex_count = output.transcripts.first().map_or(778, |t| t.contact.len());
            let dataset = read_dataset(&dataset, vertex_count)?;
            let report = evaluate(&dataset, &output.transcripts, &output.manifest.model, &pricing)?;
            let out = out.unwrap_or(results);
            write_report(&out, "report", &report, &[report.table_row("run")])?;
            print_summary(&report);
            Ok(())
        }
        Command::Ablate(args) => ablate(args),
        Command::Fixtures { out, samples, seed } => {
            write_fixture_assets(&out, samples, seed).with_context(|| format!("--out {}", out.display()))?;
            println!("fixtures: {samples} samples -> {}", out.display());
            Ok(())
        }
    }
}

fn validate(mesh: &Path, seg: &Path, coarse: Option<&Path>) -> Result<()> {
    let mesh = read_mesh(mesh)?;
    mesh.require_standard()?;
    let mut errors = 0;
    for (flag, path) in [("--seg", Some(seg)), ("--coarse-seg", coarse)] {
        let Some(path) = path else { continue };
        let s = read_seg(path, &mesh, flag)?;
        let report = validate_segmentation(&s, &mesh);
        errors += report.error_count();
        for p in report.parts.iter().filter(|p| !p.bijection_ok || !p.monotone) {
            println!("{flag}: part {}: bijection_ok={} monotone={}", p.part, p.bijection_ok, p.monotone);
        }
        println!(
            "{flag}: {} parts, {} errors, {} warnings",
            s.part_count(),
            report.error_count(),
            report.warning_count()
        );
    }
    println!("validate: {} vertices, {errors} errors", mesh.vertex_count());
    if errors > 0 {
        bail!("{errors} grid errors");
    }
    Ok(())
}

struct Loaded {
    assets: Assets,
    dataset: DatasetManifest,
    samples: Vec<handcontact::pipeline::InputSample>,
    settings: RunSettings,
}

fn load_run(args: &RunArgs) -> Result<Loaded> {
    let mesh = read_mesh(&args.mesh)?;
    let detailed = read_seg(&args.seg, &mesh, "--seg")?;
    let coarse = args.coarse_seg.as_deref().map(|p| read_seg(p, &mesh, "--coarse-seg")).transpose()?;
    let dataset = read_dataset(&args.dataset, mesh.vertex_count())?;
    let samples = dataset.load_samples()?;
    let templates = match &args.templates_dir {
        Some(dir) => TemplateSet::load_dir(dir).with_context(|| format!("--templates-dir {}", dir.display()))?,
        None => TemplateSet::default(),
    };
    let settings = RunSettings {
        backend: read_backend(&args.backend)?,
        templates,
        view: read_views(args.views.as_deref())?,
        workers: args.workers,
        seed: args.seed,
    };
    Ok(Loaded { assets: Assets { mesh, detailed, coarse }, dataset, samples, settings })
}

fn run(args: RunArgs) -> Result<()> {
    let ablation: Ablation = match &args.ablation {
        Some(p) => read_json(p, "--ablation")?,
        None => Ablation::default(),
    };
    let l = load_run(&args)?;
    let started = Instant::now();
    let output = run_experiment(&l.assets, &l.dataset, &l.samples, &ablation, &l.settings)?;
    write_results(&args.out, &output).with_context(|| format!("--out {}", args.out.display()))?;
    let failed: Vec<&str> =
        output.transcripts.iter().filter(|t| t.error.is_some()).map(|t| t.sample_id.as_str()).collect();
    let degraded = output.transcripts.iter().filter(|t| t.degraded).count();
    println!(
        "run: {} samples, {degraded} degraded, {} failed, {:.2}s -> {}",
        output.transcripts.len(),
        failed.len(),
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    for id in failed {
        println!("run: sample {id} failed, see its transcript");
    }
    Ok(())
}

fn ablate(args: RunArgs) -> Result<()> {
    let variants: Vec<Variant> = match &args.ablation {
        Some(p) => read_json(p, "--ablation")?,
        None => ablation_matrix(),
    };
    if variants.is_empty() {
        bail!("--ablation: the variant list is empty");
    }
    let l = load_run(&args)?;
    let results = run_ablation(&l.assets, &l.dataset, &l.samples, &variants, &l.settings)?;
    let mut rows = Vec::new();
    for r in &results {
        let dir = args.out.join(&r.variant.name);
        write_results(&dir, &r.output)?;
        write_report(&dir, "report", &r.report, &[r.report.table_row(&r.variant.name)])?;
        rows.push(r.report.table_row(&r.variant.name));
    }
    let table = format_table(&rows);
    write(&args.out.join("comparison.txt"), &table)?;
    write(&args.out.join("comparison.json"), serde_json::to_string_pretty(&rows)? + "\n")?;
    print!("{table}");
    Ok(())
}

fn write_report(dir: &Path, stem: &str, report: &EvalReport, rows: &[handcontact::eval_harness::TableRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(&dir.join(format!("{stem}.json")), report.to_json() + "\n")?;
    write(&dir.join(format!("{stem}.txt")), format_table(rows))
}

fn print_summary(report: &EvalReport) {
    let m = &report.metrics;
    println!(
        "eval: {} samples, P={:.3} R={:.3} F1={:.3} (micro F1={:.3}), mean output tokens {:.1}, mean cost ${:.3}, {} degraded",
        m.samples, m.precision, m.recall, m.f1, m.micro.f1, report.usage.mean_output_tokens, report.usage.mean_cost_usd,
        report.usage.degraded_samples
    );
}

fn read_mesh(path: &Path) -> Result<HandMesh> {
    load_mesh(path).with_context(|| format!("--mesh {}", path.display()))
}

fn read_seg(path: &Path, mesh: &HandMesh, flag: &str) -> Result<PartSegmentation> {
    load_segmentation(path, mesh).with_context(|| format!("{flag} {}", path.display()))
}

fn read_dataset(path: &Path, vertex_count: usize) -> Result<DatasetManifest> {
    load_dataset(path, vertex_count).with_context(|| format!("--dataset {}", path.display()))
}

fn read_backend(spec: &str) -> Result<BackendConfig> {
    if spec == "oracle" {
        return Ok(BackendConfig::oracle());
    }
    BackendConfig::load(spec).with_context(|| format!("--backend {spec}"))
}

fn read_views(path: Option<&Path>) -> Result<ViewConfig> {
    match path {
        Some(p) => read_json(p, "--views"),
        None => Ok(ViewConfig::default()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, flag: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("{flag} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{flag} {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
