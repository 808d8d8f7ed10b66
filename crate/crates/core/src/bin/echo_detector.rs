//! Reference detector for the line protocol: replays a detections file.
//!
//! ```text
//! echo-detector --detections dets.json [--sleep-ms N]
//! ```
//!
//! Reads one request per stdin line and answers with the stored detections of
//! the requested frame, in file order.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anonbench::dataset::DetectionSet;
use serde_json::{json, Value};

fn usage() -> ExitCode {
    eprintln!("usage: echo-detector --detections <file> [--sleep-ms <n>]");
    ExitCode::from(64)
}

fn main() -> ExitCode {
    let mut detections: Option<PathBuf> = None;
    let mut sleep = Duration::ZERO;
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--detections" => detections = args.next().map(PathBuf::from),
            "--sleep-ms" => match args.next().and_then(|v| v.parse().ok()) {
                Some(ms) => sleep = Duration::from_millis(ms),
                None => return usage(),
            },
            _ => return usage(),
        }
    }
    let Some(path) = detections else {
        return usage();
    };
    let set = match DetectionSet::load(&path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("echo-detector: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut by_frame: HashMap<&str, Vec<Value>> = HashMap::new();
    for d in &set.detections {
        by_frame.entry(d.frame_id.as_str()).or_default().push(json!({
            "category": d.category,
            "bbox": d.bbox,
            "score": d.score,
        }));
    }

    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let request: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("echo-detector: bad request: {e}");
                return ExitCode::FAILURE;
            }
        };
        let frame_id = request["frame_id"].as_str().unwrap_or_default();
        if !sleep.is_zero() {
            std::thread::sleep(sleep);
        }
        let dets = by_frame.get(frame_id).cloned().unwrap_or_default();
        let response = json!({"frame_id": frame_id, "detections": dets});
        if writeln!(stdout, "{response}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
