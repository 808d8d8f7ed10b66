//! Batch anonymization: discover frames, acquire detections from a file or a
//! detector subprocess, blur every admitted region, write the outputs and a
//! run manifest.
//!
//! # Detector protocol
//!
//! A detector is any executable speaking newline-delimited JSON on
//! stdin/stdout. For each frame the pipeline writes one request line
//!
//! ```text
//! {"frame_id": "...", "path": "/abs/path.ppm", "width": W, "height": H}
//! ```
//!
//! and reads back exactly one response line
//!
//! ```text
//! {"frame_id": "...", "detections": [{"category": "face", "bbox": [x, y, w, h], "score": s}]}
//! ```
//!
//! The child must flush after every line. Unknown response fields are
//! ignored. Each worker thread owns its own detector process.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{parse_detection_values, Category, DatasetError, Detection, DetectionSet};
use crate::geometry::BoundingBox;
use crate::imaging::{self, GaussianKernel, ImageBuffer, ImagingError, RasterFormat};

pub const DEFAULT_MARGIN: f64 = 0.10;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.1;
pub const DEFAULT_DETECTOR_TIMEOUT: Duration = Duration::from_secs(30);
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("no supported frames (.ppm, .pgm, .pnm, .png) under {0}")]
    EmptyInput(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("detector: {0}")]
    Detector(String),
    #[error("detector protocol error on response line {line}: {message}")]
    Protocol { line: usize, message: String },
    #[error("frame {frame_id:?}: {source}")]
    Frame {
        frame_id: String,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionSource {
    /// Detections file in the dataset format.
    File(PathBuf),
    /// Detector executable and its arguments.
    Command(Vec<String>),
}

/// Region preparation and blur strength, shared by every frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnonymizeOptions {
    pub margin: f64,
    pub sigma_scale: f64,
    pub categories: BTreeSet<Category>,
}

impl Default for AnonymizeOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            sigma_scale: imaging::DEFAULT_SIGMA_SCALE,
            categories: Category::ALL.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub detection_source: DetectionSource,
    pub anonymize: AnonymizeOptions,
    pub score_threshold: f64,
    pub workers: usize,
    /// Keep going past failed frames instead of aborting the run.
    pub skip_failed: bool,
    pub detector_timeout: Duration,
}

impl PipelineConfig {
    pub fn new(input_dir: PathBuf, output_dir: PathBuf, detection_source: DetectionSource) -> Self {
        Self {
            input_dir,
            output_dir,
            detection_source,
            anonymize: AnonymizeOptions::default(),
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            workers: 1,
            skip_failed: false,
            detector_timeout: DEFAULT_DETECTOR_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let a = &self.anonymize;
        if !(a.margin >= 0.0 && a.margin.is_finite()) {
            return Err(PipelineError::Config(format!("margin must be >= 0, got {}", a.margin)));
        }
        if !(a.sigma_scale > 0.0 && a.sigma_scale.is_finite()) {
            return Err(PipelineError::Config(format!(
                "sigma scale must be > 0, got {}",
                a.sigma_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(PipelineError::Config(format!(
                "score threshold must lie in [0, 1], got {}",
                self.score_threshold
            )));
        }
        if a.categories.is_empty() {
            return Err(PipelineError::Config("no categories selected".into()));
        }
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be positive".into()));
        }
        if let DetectionSource::Command(argv) = &self.detection_source {
            if argv.is_empty() {
                return Err(PipelineError::Config("empty detector command".into()));
            }
        }
        Ok(())
    }
}

/// One input raster found under the input directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameEntry {
    /// Relative path with the extension stripped, `/`-separated.
    pub frame_id: String,
    pub path: PathBuf,
    pub relative: PathBuf,
}

/// Supported rasters under `input_dir`, recursively, sorted by relative path.
pub fn discover_frames(input_dir: &Path) -> Result<Vec<FrameEntry>, PipelineError> {
    discover_frames_excluding(input_dir, None)
}

fn discover_frames_excluding(
    input_dir: &Path,
    exclude: Option<&Path>,
) -> Result<Vec<FrameEntry>, PipelineError> {
    if !input_dir.is_dir() {
        return Err(PipelineError::io(input_dir, "not a readable directory"));
    }
    let mut frames = Vec::new();
    let walker = walkdir::WalkDir::new(input_dir)
        .follow_links(true)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| exclude.is_none_or(|x| e.path() != x));
    for entry in walker {
        let entry = entry.map_err(|e| PipelineError::io(input_dir, e))?;
        if !entry.file_type().is_file() || RasterFormat::from_path(entry.path()).is_none() {
            continue;
        }
        let relative = entry
            .path()
            .strip_prefix(input_dir)
            .expect("walkdir yields paths under its root")
            .to_path_buf();
        let frame_id = relative
            .with_extension("")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        frames.push(FrameEntry {
            frame_id,
            path: entry.path().to_path_buf(),
            relative,
        });
    }
    if frames.is_empty() {
        return Err(PipelineError::EmptyInput(input_dir.display().to_string()));
    }
    frames.sort_by(|a, b| a.relative.cmp(&b.relative));
    Ok(frames)
}

/// Per-frame request sent to a detector.
#[derive(Debug, Clone, Serialize)]
pub struct FrameRequest<'a> {
    pub frame_id: &'a str,
    pub path: &'a Path,
    pub width: usize,
    pub height: usize,
}

pub trait Detector {
    fn detect(&mut self, request: &FrameRequest<'_>) -> Result<Vec<Detection>, PipelineError>;
}

/// Replays detections loaded from a file.
#[derive(Debug, Clone, Default)]
pub struct FileDetector {
    by_frame: Arc<HashMap<String, Vec<Detection>>>,
}

impl FileDetector {
    pub fn new(set: DetectionSet) -> Self {
        let mut by_frame: HashMap<String, Vec<Detection>> = HashMap::new();
        for d in set.detections {
            by_frame.entry(d.frame_id.clone()).or_default().push(d);
        }
        Self {
            by_frame: Arc::new(by_frame),
        }
    }
}

impl Detector for FileDetector {
    fn detect(&mut self, request: &FrameRequest<'_>) -> Result<Vec<Detection>, PipelineError> {
        Ok(self
            .by_frame
            .get(request.frame_id)
            .cloned()
            .unwrap_or_default())
    }
}

struct RunningChild {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// Detector subprocess speaking the newline-delimited JSON protocol.
///
/// The child is started lazily and restarted after a failure.
pub struct SubprocessDetector {
    argv: Vec<String>,
    timeout: Duration,
    running: Option<RunningChild>,
    responses_read: usize,
}

impl SubprocessDetector {
    pub fn new(argv: Vec<String>, timeout: Duration) -> Self {
        Self {
            argv,
            timeout,
            running: None,
            responses_read: 0,
        }
    }

    fn spawn(&self) -> Result<RunningChild, PipelineError> {
        let (program, args) = self
            .argv
            .split_first()
            .ok_or_else(|| PipelineError::Config("empty detector command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PipelineError::Detector(format!("cannot start {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(RunningChild {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exit_description(child: &mut Child) -> String {
        match child.try_wait() {
            Ok(Some(status)) => format!("detector exited ({status})"),
            _ => "detector closed its output".into(),
        }
    }

    fn round_trip(&mut self, request: &FrameRequest<'_>) -> Result<Vec<Detection>, PipelineError> {
        if self.running.is_none() {
            self.running = Some(self.spawn()?);
        }
        let running = self.running.as_mut().expect("just spawned");
        let line = serde_json::to_string(&json!({
            "frame_id": request.frame_id,
            "path": request.path,
            "width": request.width,
            "height": request.height,
        }))
        .expect("request serializes");
        if let Err(e) = writeln!(running.stdin, "{line}").and_then(|_| running.stdin.flush()) {
            let why = Self::exit_description(&mut running.child);
            return Err(PipelineError::Detector(format!("cannot send request: {e}; {why}")));
        }
        let response = match running.lines.recv_timeout(self.timeout) {
            Ok(Ok(text)) => text,
            Ok(Err(e)) => return Err(PipelineError::Detector(format!("reading response: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(PipelineError::Detector(format!(
                    "no response within {:.1} s",
                    self.timeout.as_secs_f64()
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                std::thread::sleep(Duration::from_millis(10));
                return Err(PipelineError::Detector(Self::exit_description(&mut running.child)));
            }
        };
        self.responses_read += 1;
        parse_response(&response, request.frame_id).map_err(|message| PipelineError::Protocol {
            line: self.responses_read,
            message,
        })
    }

    fn shutdown(&mut self) {
        if let Some(mut running) = self.running.take() {
            drop(running.stdin);
            // give a well-behaved child a moment to exit on EOF
            let deadline = Instant::now() + Duration::from_millis(200);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = running.child.try_wait() {
                    return;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            let _ = running.child.kill();
            let _ = running.child.wait();
        }
    }
}

impl Detector for SubprocessDetector {
    fn detect(&mut self, request: &FrameRequest<'_>) -> Result<Vec<Detection>, PipelineError> {
        let result = self.round_trip(request);
        if result.is_err() {
            // state of the stream is unknown after a failure
            self.shutdown();
        }
        result
    }
}

impl Drop for SubprocessDetector {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Parses one detector response line for `frame_id`.
pub fn parse_response(line: &str, frame_id: &str) -> Result<Vec<Detection>, String> {
    let shown: String = line.chars().take(120).collect();
    let value: Value =
        serde_json::from_str(line).map_err(|e| format!("invalid JSON ({e}): {shown}"))?;
    let Value::Object(mut obj) = value else {
        return Err(format!("expected a JSON object: {shown}"));
    };
    match obj.remove("frame_id") {
        Some(Value::String(f)) if f == frame_id => {}
        Some(Value::String(f)) => {
            return Err(format!("response for frame {f:?} but {frame_id:?} was requested"))
        }
        Some(_) => return Err("field \"frame_id\" must be a string".into()),
        None => return Err("missing field \"frame_id\"".into()),
    }
    let items = match obj.remove("detections") {
        Some(Value::Array(items)) => items,
        Some(_) => return Err("field \"detections\" must be an array".into()),
        None => return Err("missing field \"detections\"".into()),
    };
    parse_detection_values("response detection", frame_id, items).map_err(|e| e.to_string())
}

/// Detections for one frame from `detector`, minus those scoring below
/// `score_threshold`.
pub fn acquire_detections(
    detector: &mut dyn Detector,
    request: &FrameRequest<'_>,
    score_threshold: f64,
) -> Result<Vec<Detection>, PipelineError> {
    let mut dets = detector.detect(request)?;
    dets.retain(|d| d.score >= score_threshold);
    Ok(dets)
}

/// Result of anonymizing one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnonymizedFrame {
    pub image: ImageBuffer,
    /// Blurred regions (expanded and clipped), in the order they were applied.
    pub regions: Vec<(Category, BoundingBox)>,
    /// Admitted detections whose expanded box fell entirely outside the image.
    pub outside_image: usize,
}

impl AnonymizedFrame {
    pub fn counts(&self) -> BTreeMap<Category, usize> {
        let mut out = BTreeMap::new();
        for (c, _) in &self.regions {
            *out.entry(*c).or_default() += 1;
        }
        out
    }
}

/// Expanded, clipped regions to blur for the configured categories, sorted in
/// `(y, x, w, h)` order, plus the count that fell outside the image.
pub fn plan_regions(
    width: usize,
    height: usize,
    detections: &[Detection],
    opts: &AnonymizeOptions,
) -> (Vec<(Category, BoundingBox)>, usize) {
    let mut outside = 0;
    let mut regions: Vec<(Category, BoundingBox)> = detections
        .iter()
        .filter(|d| opts.categories.contains(&d.category))
        .filter_map(|d| {
            let clipped = d.bbox.expand(opts.margin).clip(width as f64, height as f64);
            if clipped.is_none() {
                outside += 1;
            }
            clipped.map(|b| (d.category, b))
        })
        .collect();
    regions.sort_by(|a, b| a.1.raster_cmp(&b.1).then(a.0.cmp(&b.0)));
    (regions, outside)
}

/// Blurs every admitted detection of a configured category.
///
/// Each detection is expanded by the margin, clipped to the image, and
/// blurred with a sigma proportional to its expanded size. Regions are applied
/// one after another in `(y, x, w, h)` order, each reading the current buffer.
pub fn anonymize_frame(
    img: &ImageBuffer,
    detections: &[Detection],
    opts: &AnonymizeOptions,
) -> Result<AnonymizedFrame, ImagingError> {
    let (regions, outside_image) = plan_regions(img.width(), img.height(), detections, opts);
    let mut image = img.clone();
    for (_, region) in &regions {
        let kernel = GaussianKernel::new(imaging::sigma_for_box(region, opts.sigma_scale))?;
        imaging::blur_region_in_place(&mut image, region, &kernel)?;
    }
    Ok(AnonymizedFrame {
        image,
        regions,
        outside_image,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FrameStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub input_path: String,
    pub output_path: String,
    #[serde(flatten)]
    pub status: FrameStatus,
    /// Detections above the score threshold in configured categories.
    pub detections_admitted: usize,
    /// Regions blurred, per category.
    pub regions: BTreeMap<Category, usize>,
    pub regions_outside_image: usize,
    pub detector_latency_ms: f64,
    /// `sha256:<hex>` of the written output file.
    pub digest: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunTotals {
    pub frames: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub detections_admitted: usize,
    pub regions: BTreeMap<Category, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub input_dir: String,
    pub output_dir: String,
    pub detection_source: DetectionSource,
    pub margin: f64,
    pub sigma_scale: f64,
    pub score_threshold: f64,
    pub categories: BTreeSet<Category>,
    pub workers: usize,
    pub skip_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: ConfigEcho,
    pub frames: Vec<FrameRecord>,
    pub totals: RunTotals,
}

impl RunManifest {
    pub fn has_failures(&self) -> bool {
        self.totals.failed > 0
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

fn path_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn process_frame(
    frame: &FrameEntry,
    detector: &mut dyn Detector,
    cfg: &PipelineConfig,
) -> (FrameRecord, Option<PipelineError>) {
    let mut record = FrameRecord {
        frame_id: frame.frame_id.clone(),
        input_path: path_string(&frame.relative),
        output_path: path_string(&frame.relative),
        status: FrameStatus::Ok,
        detections_admitted: 0,
        regions: BTreeMap::new(),
        regions_outside_image: 0,
        detector_latency_ms: 0.0,
        digest: None,
    };
    match run_frame(frame, detector, cfg, &mut record) {
        Ok(()) => (record, None),
        Err(e) => {
            record.status = FrameStatus::Failed {
                error: e.to_string(),
            };
            (record, Some(e))
        }
    }
}

fn run_frame(
    frame: &FrameEntry,
    detector: &mut dyn Detector,
    cfg: &PipelineConfig,
    record: &mut FrameRecord,
) -> Result<(), PipelineError> {
    let img = imaging::read_image(&frame.path)?;
    let abs = std::fs::canonicalize(&frame.path).unwrap_or_else(|_| frame.path.clone());
    let request = FrameRequest {
        frame_id: &frame.frame_id,
        path: &abs,
        width: img.width(),
        height: img.height(),
    };
    let started = Instant::now();
    let dets = acquire_detections(detector, &request, cfg.score_threshold)?;
    record.detector_latency_ms = started.elapsed().as_secs_f64() * 1e3;
    record.detections_admitted = dets
        .iter()
        .filter(|d| cfg.anonymize.categories.contains(&d.category))
        .count();

    let out = anonymize_frame(&img, &dets, &cfg.anonymize)?;
    record.regions = out.counts();
    record.regions_outside_image = out.outside_image;

    let out_path = cfg.output_dir.join(&frame.relative);
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    let bytes = imaging::write_image(&out_path, &out.image)?;
    record.digest = Some(sha256_hex(&bytes));
    debug!(
        "{}: {} regions in {:.1} ms",
        frame.frame_id,
        out.regions.len(),
        record.detector_latency_ms
    );
    Ok(())
}

fn make_detector(
    source: &DetectionSource,
    file: &Option<FileDetector>,
    timeout: Duration,
) -> Box<dyn Detector> {
    match source {
        DetectionSource::File(_) => Box::new(file.clone().expect("loaded up front")),
        DetectionSource::Command(argv) => Box::new(SubprocessDetector::new(argv.clone(), timeout)),
    }
}

/// Runs the whole pipeline and writes `run_manifest.json` into the output
/// directory.
///
/// Frames are spread over `cfg.workers` threads; outputs and the manifest do
/// not depend on the worker count. Without `skip_failed` the first failing
/// frame aborts the run with an error; with it, failures are recorded in the
/// manifest and no output is written for those frames.
pub fn run(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| PipelineError::io(&cfg.output_dir, e))?;
    let exclude = match (
        std::fs::canonicalize(&cfg.input_dir),
        std::fs::canonicalize(&cfg.output_dir),
    ) {
        (Ok(i), Ok(o)) if o.starts_with(&i) && o != i => {
            Some(cfg.input_dir.join(o.strip_prefix(&i).expect("prefix checked")))
        }
        _ => None,
    };
    let frames = discover_frames_excluding(&cfg.input_dir, exclude.as_deref())?;

    let file_detector = match &cfg.detection_source {
        DetectionSource::File(path) => Some(FileDetector::new(DetectionSet::load(path)?)),
        DetectionSource::Command(_) => None,
    };

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = cfg.workers.min(frames.len()).max(1);
    let mut results: Vec<(usize, FrameRecord, Option<PipelineError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut detector =
                        make_detector(&cfg.detection_source, &file_detector, cfg.detector_timeout);
                    let mut done = Vec::new();
                    loop {
                        if abort.load(Ordering::SeqCst) {
                            break;
                        }
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        let Some(frame) = frames.get(i) else { break };
                        let (record, err) = process_frame(frame, detector.as_mut(), cfg);
                        if err.is_some() && !cfg.skip_failed {
                            abort.store(true, Ordering::SeqCst);
                        }
                        done.push((i, record, err));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _, _)| *i);

    let mut records = Vec::with_capacity(results.len());
    for (_, record, err) in results {
        if let (Some(e), false) = (err, cfg.skip_failed) {
            return Err(PipelineError::Frame {
                frame_id: record.frame_id,
                source: Box::new(e),
            });
        }
        records.push(record);
    }

    let mut totals = RunTotals {
        frames: records.len(),
        ..Default::default()
    };
    for r in &records {
        match r.status {
            FrameStatus::Ok => totals.succeeded += 1,
            FrameStatus::Failed { ref error } => {
                totals.failed += 1;
                warn!("frame {:?} failed: {error}", r.frame_id);
            }
        }
        totals.detections_admitted += r.detections_admitted;
        for (c, n) in &r.regions {
            *totals.regions.entry(*c).or_default() += n;
        }
    }
    let manifest = RunManifest {
        config: ConfigEcho {
            input_dir: cfg.input_dir.display().to_string(),
            output_dir: cfg.output_dir.display().to_string(),
            detection_source: cfg.detection_source.clone(),
            margin: cfg.anonymize.margin,
            sigma_scale: cfg.anonymize.sigma_scale,
            score_threshold: cfg.score_threshold,
            categories: cfg.anonymize.categories.clone(),
            workers: cfg.workers,
            skip_failed: cfg.skip_failed,
        },
        frames: records,
        totals,
    };
    let path = cfg.output_dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_json_string()).map_err(|e| PipelineError::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: &str, cat: Category, b: (f64, f64, f64, f64), score: f64) -> Detection {
        Detection {
            frame_id: frame.into(),
            category: cat,
            bbox: BoundingBox::new(b.0, b.1, b.2, b.3).unwrap(),
            score,
        }
    }

    fn gradient(w: usize, h: usize) -> ImageBuffer {
        let data = (0..w * h * 3).map(|i| ((i * 7) % 251) as u8).collect();
        ImageBuffer::new(w, h, 3, data).unwrap()
    }

    #[test]
    fn no_detections_is_identity() {
        let img = gradient(40, 30);
        let out = anonymize_frame(&img, &[], &AnonymizeOptions::default()).unwrap();
        assert_eq!(out.image, img);
        assert!(out.regions.is_empty());
    }

    #[test]
    fn non_configured_category_is_ignored() {
        let img = gradient(40, 30);
        let opts = AnonymizeOptions {
            categories: [Category::Face].into_iter().collect(),
            ..Default::default()
        };
        let dets = [det("f", Category::LicensePlate, (5.0, 5.0, 10.0, 5.0), 0.9)];
        let out = anonymize_frame(&img, &dets, &opts).unwrap();
        assert_eq!(out.image, img);
    }

    #[test]
    fn regions_sorted_and_clipped() {
        let dets = [
            det("f", Category::Face, (30.0, 20.0, 10.0, 10.0), 0.9),
            det("f", Category::Face, (-4.0, 2.0, 10.0, 10.0), 0.9),
            det("f", Category::Face, (500.0, 500.0, 10.0, 10.0), 0.9),
        ];
        let (regions, outside) = plan_regions(64, 48, &dets, &AnonymizeOptions::default());
        assert_eq!(outside, 1);
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].1, BoundingBox::new(0.0, 1.0, 7.0, 12.0).unwrap());
        assert!(regions[0].1.raster_cmp(&regions[1].1).is_lt());
    }

    #[test]
    fn parse_response_errors() {
        let ok = r#"{"frame_id": "a", "detections": [{"category": "face", "bbox": [1, 2, 3, 4], "score": 0.5}], "model": "x"}"#;
        assert_eq!(parse_response(ok, "a").unwrap().len(), 1);
        let missing = r#"{"frame_id": "a", "detections": [{"category": "face", "bbox": [1, 2, 3, 4]}]}"#;
        assert!(parse_response(missing, "a").unwrap_err().contains("\"score\""));
        assert!(parse_response(ok, "b").unwrap_err().contains("requested"));
        assert!(parse_response("not json", "a").unwrap_err().contains("invalid JSON"));
        assert!(parse_response(r#"{"frame_id": "a"}"#, "a").unwrap_err().contains("detections"));
    }

    #[test]
    fn threshold_filter() {
        let mut fd = FileDetector::new(DetectionSet {
            detections: vec![
                det("a", Category::Face, (0.0, 0.0, 4.0, 4.0), 0.9),
                det("a", Category::Face, (0.0, 0.0, 4.0, 4.0), 0.05),
                det("a", Category::LicensePlate, (0.0, 0.0, 4.0, 4.0), 0.5),
                det("b", Category::Face, (0.0, 0.0, 4.0, 4.0), 0.9),
            ],
        });
        let req = FrameRequest {
            frame_id: "a",
            path: Path::new("/x"),
            width: 8,
            height: 8,
        };
        assert_eq!(acquire_detections(&mut fd, &req, 0.1).unwrap().len(), 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::new("in".into(), "out".into(), DetectionSource::Command(vec![]));
        assert!(cfg.validate().is_err());
        cfg.detection_source = DetectionSource::File("d.json".into());
        assert!(cfg.validate().is_ok());
        cfg.score_threshold = 1.5;
        assert!(cfg.validate().is_err());
        cfg.score_threshold = 0.1;
        cfg.anonymize.sigma_scale = 0.0;
        assert!(cfg.validate().is_err());
    }
}
