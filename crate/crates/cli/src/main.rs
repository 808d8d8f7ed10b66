//! `anonbench`: anonymize frames, evaluate detectors, merge attribute reviews
//! and render comparison tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anonbench::dataset::{merge_reviews, Category, DetectionSet, GroundTruthSet, ReviewSet};
use anonbench::evaluation::{evaluate, EvaluationConfig, EvaluationReport};
use anonbench::pipeline::{self, AnonymizeOptions, DetectionSource, PipelineConfig};
use anonbench::reporting::{self, format_metric, Stream, SystemReport, TableFormat};
use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand};

const EXIT_FATAL: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "anonbench", version, about = "Region-blur anonymization and detector evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Blur detected faces and license plates in every frame of a directory.
    Anonymize(AnonymizeArgs),
    /// Match detections to ground truth and report AP, AR and bucketed recall.
    Evaluate(EvaluateArgs),
    /// Merge per-annotator attribute reviews into ground truth by majority vote.
    MergeAnnotations(MergeArgs),
    /// Render overall and per-bucket comparison tables from evaluation reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["detections", "detector_cmd"])))]
struct AnonymizeArgs {
    /// Directory scanned recursively for .ppm, .pgm, .pnm and .png frames.
    #[arg(long)]
    input_dir: PathBuf,
    /// Where anonymized frames and run_manifest.json are written.
    #[arg(long)]
    output_dir: PathBuf,
    /// Detections file covering the input frames.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Detector command speaking the line protocol; consumes the remaining arguments.
    #[arg(long, num_args = 1.., allow_hyphen_values = true, value_name = "ARGV")]
    detector_cmd: Option<Vec<String>>,
    /// Fractional growth of each box before blurring.
    #[arg(long, default_value_t = pipeline::DEFAULT_MARGIN)]
    margin: f64,
    /// Blur sigma as a fraction of the longer side of the expanded box.
    #[arg(long, default_value_t = anonbench::imaging::DEFAULT_SIGMA_SCALE)]
    sigma_scale: f64,
    /// Detections scoring below this are ignored.
    #[arg(long, default_value_t = pipeline::DEFAULT_SCORE_THRESHOLD)]
    score_threshold: f64,
    /// Categories to blur.
    #[arg(long, value_delimiter = ',', default_values_t = Category::ALL)]
    classes: Vec<Category>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, env = "ANONBENCH_WORKERS")]
    workers: Option<usize>,
    /// Record failing frames in the manifest and continue.
    #[arg(long)]
    skip_failed: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Minimum IoU for a detection to count as a true positive.
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, default_value_t = Category::Face)]
    category: Category,
    /// Attribute keys to report recall per label for.
    #[arg(long, value_delimiter = ',', value_name = "KEY")]
    buckets: Vec<String>,
    /// Keep only the highest-scoring N detections per frame.
    #[arg(long, value_name = "N")]
    max_dets: Option<usize>,
    /// Evaluation report JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MergeArgs {
    #[arg(long)]
    ground_truth: PathBuf,
    /// One or more review files, one per annotator or batch.
    #[arg(long, num_args = 1.., required = true)]
    reviews: Vec<PathBuf>,
    /// Merged ground truth.
    #[arg(long)]
    output: PathBuf,
    /// Conflict report JSON.
    #[arg(long)]
    conflicts: Option<PathBuf>,
    /// Reviews a box needs before it is considered fully covered.
    #[arg(long, default_value_t = 3)]
    quorum: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Evaluation reports as NAME=PATH, one per system.
    #[arg(long, num_args = 1.., required = true, value_name = "NAME=PATH")]
    metrics: Vec<String>,
    /// Read a `:grayscale` or `:rgb` suffix on NAME as the stream.
    #[arg(long)]
    stream_suffixes: bool,
    /// Also emit per-label recall for this attribute.
    #[arg(long)]
    bucket_key: Option<String>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: TableFormat,
    /// Write tables here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<TableFormat, String> {
    s.parse()
}

/// A failure plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn fatal(message: impl ToString) -> Self {
        Self { code: EXIT_FATAL, message: message.to_string() }
    }

    fn usage(message: impl ToString) -> Self {
        Self { code: EXIT_USAGE, message: message.to_string() }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::fatal(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::fatal(format!("{}: {e}", path.display())))
}

fn cmd_anonymize(args: AnonymizeArgs) -> Result<u8, Failure> {
    let source = match (args.detections, args.detector_cmd) {
        (Some(path), None) => DetectionSource::File(path),
        (None, Some(argv)) => DetectionSource::Command(argv),
        _ => return Err(Failure::usage("exactly one of --detections or --detector-cmd is required")),
    };
    let mut cfg = PipelineConfig::new(args.input_dir, args.output_dir, source);
    cfg.anonymize = AnonymizeOptions {
        margin: args.margin,
        sigma_scale: args.sigma_scale,
        categories: args.classes.into_iter().collect(),
    };
    cfg.score_threshold = args.score_threshold;
    cfg.workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cfg.skip_failed = args.skip_failed;
    if let Err(e) = cfg.validate() {
        return Err(Failure::usage(e));
    }

    let manifest = pipeline::run(&cfg).map_err(Failure::fatal)?;
    let t = &manifest.totals;
    let regions: usize = t.regions.values().sum();
    println!(
        "{} frames: {} ok, {} failed; {regions} regions blurred; manifest at {}",
        t.frames,
        t.succeeded,
        t.failed,
        cfg.output_dir.join(pipeline::MANIFEST_FILE).display()
    );
    Ok(if manifest.has_failures() { EXIT_PARTIAL } else { 0 })
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<u8, Failure> {
    let cfg = EvaluationConfig::new(args.iou, args.max_dets, args.category).map_err(Failure::usage)?;
    let gts = GroundTruthSet::load(&args.ground_truth).map_err(Failure::fatal)?;
    let dets = DetectionSet::load(&args.detections).map_err(Failure::fatal)?;
    let (_, report) = evaluate(&dets.detections, &gts, &cfg, &args.buckets);
    if let Some(path) = &args.output {
        write_file(path, &report.to_json_string())?;
    }
    println!("AP={} AR={}", format_metric(report.ap), format_metric(report.ar));
    Ok(0)
}

fn cmd_merge(args: MergeArgs) -> Result<u8, Failure> {
    if args.quorum == 0 {
        return Err(Failure::usage("--quorum must be at least 1"));
    }
    let gts = GroundTruthSet::load(&args.ground_truth).map_err(Failure::fatal)?;
    let mut reviews = ReviewSet::default();
    for path in &args.reviews {
        reviews.extend(ReviewSet::load(path).map_err(Failure::fatal)?);
    }
    let (merged, conflicts) = merge_reviews(&gts, &reviews, args.quorum).map_err(Failure::fatal)?;
    write_file(&args.output, &merged.to_json_string())?;
    if let Some(path) = &args.conflicts {
        write_file(path, &conflicts.to_json_string())?;
    }
    println!(
        "{} boxes merged from {} reviews; {} conflicts, {} boxes under quorum {}",
        merged.boxes.len(),
        reviews.reviews.len(),
        conflicts.conflicts.len(),
        conflicts.under_quorum.len(),
        args.quorum
    );
    Ok(0)
}

fn parse_metric_spec(spec: &str, stream_suffixes: bool) -> Result<(String, Option<Stream>, PathBuf), Failure> {
    let (name, path) = spec
        .split_once('=')
        .filter(|(n, p)| !n.is_empty() && !p.is_empty())
        .ok_or_else(|| Failure::usage(format!("--metrics expects NAME=PATH, got {spec:?}")))?;
    if !stream_suffixes {
        return Ok((name.to_string(), None, PathBuf::from(path)));
    }
    match name.rsplit_once(':') {
        Some((system, stream)) if !system.is_empty() => {
            let stream = stream.parse().map_err(Failure::usage)?;
            Ok((system.to_string(), Some(stream), PathBuf::from(path)))
        }
        _ => Err(Failure::usage(format!("{name:?} has no :grayscale or :rgb suffix"))),
    }
}

fn cmd_report(args: ReportArgs) -> Result<u8, Failure> {
    let mut reports = Vec::with_capacity(args.metrics.len());
    for spec in &args.metrics {
        let (system_name, stream, path) = parse_metric_spec(spec, args.stream_suffixes)?;
        let text = fs::read_to_string(&path).map_err(|e| Failure::fatal(format!("{}: {e}", path.display())))?;
        let report = EvaluationReport::from_json_str(&text)
            .map_err(|e| Failure::fatal(format!("{}: {e}", path.display())))?;
        reports.push(SystemReport { system_name, stream, report });
    }

    let mut out = reporting::render(&reporting::overall_table(&reports).map_err(Failure::fatal)?, args.format);
    if let Some(key) = &args.bucket_key {
        let table = reporting::bucket_table(&reports, key).map_err(Failure::fatal)?;
        out.push('\n');
        out.push_str(&reporting::render(&table, args.format));
    }
    match &args.output {
        Some(path) => write_file(path, &out)?,
        None => print!("{out}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match cli.command {
        Command::Anonymize(a) => cmd_anonymize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::MergeAnnotations(a) => cmd_merge(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("anonbench: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
