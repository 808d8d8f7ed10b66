//! Detection evaluation at a single IoU threshold.
//!
//! Matching is greedy in descending score order per frame, the way the COCO
//! tooling does it. AP uses 101-point interpolation of the global
//! precision/recall curve; AR is plain recall at the configured threshold.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::warn;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Category, Detection, GroundTruthBox, GroundTruthSet, UNRESOLVED};
use crate::geometry::BoundingBox;

/// Number of recall levels AP is interpolated at (0.00, 0.01, …, 1.00).
pub const RECALL_LEVELS: usize = 101;

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("IoU threshold must lie strictly between 0 and 1, got {0}")]
    InvalidThreshold(f64),
    #[error("max detections per frame must be positive")]
    ZeroMaxDetections,
    #[error("cannot merge match results: frame {0:?} appears in both")]
    OverlappingFrames(String),
    #[error("cannot merge match results computed at IoU {0} and {1}")]
    ThresholdMismatch(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub iou_threshold: f64,
    /// `None` keeps every detection.
    pub max_detections_per_frame: Option<usize>,
    pub category: Category,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            max_detections_per_frame: None,
            category: Category::Face,
        }
    }
}

impl EvaluationConfig {
    pub fn new(
        iou_threshold: f64,
        max_detections_per_frame: Option<usize>,
        category: Category,
    ) -> Result<Self, EvaluationError> {
        if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
            return Err(EvaluationError::InvalidThreshold(iou_threshold));
        }
        if max_detections_per_frame == Some(0) {
            return Err(EvaluationError::ZeroMaxDetections);
        }
        Ok(Self {
            iou_threshold,
            max_detections_per_frame,
            category,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GtMatch {
    pub box_id: String,
    pub iou: f64,
}

/// What happened to one detection during matching.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionOutcome {
    /// Position of the detection in the slice passed to [`greedy_match`].
    pub detection_index: usize,
    pub score: f64,
    /// `None` for a false positive.
    pub matched: Option<GtMatch>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FrameMatch {
    /// Evaluated detections in visiting order (score descending).
    pub detections: Vec<DetectionOutcome>,
    /// Every ground-truth box of the frame, in file order.
    pub gt_box_ids: Vec<String>,
    /// Ground-truth boxes no detection claimed.
    pub unmatched_gt: Vec<String>,
}

impl FrameMatch {
    pub fn true_positives(&self) -> usize {
        self.detections.iter().filter(|d| d.matched.is_some()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.detections.len() - self.true_positives()
    }
}

/// Per-frame TP/FP/FN decomposition at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub iou_threshold: f64,
    pub frames: BTreeMap<String, FrameMatch>,
}

impl MatchResult {
    pub fn total_gt(&self) -> usize {
        self.frames.values().map(|f| f.gt_box_ids.len()).sum()
    }

    pub fn total_matched(&self) -> usize {
        self.frames.values().map(FrameMatch::true_positives).sum()
    }

    pub fn total_false_positives(&self) -> usize {
        self.frames.values().map(FrameMatch::false_positives).sum()
    }

    /// Union of two results over disjoint frame sets.
    pub fn merge(mut self, other: MatchResult) -> Result<MatchResult, EvaluationError> {
        if self.iou_threshold != other.iou_threshold {
            return Err(EvaluationError::ThresholdMismatch(
                self.iou_threshold,
                other.iou_threshold,
            ));
        }
        for (frame, m) in other.frames {
            if self.frames.contains_key(&frame) {
                return Err(EvaluationError::OverlappingFrames(frame));
            }
            self.frames.insert(frame, m);
        }
        Ok(self)
    }

    /// Detection outcomes in global rank order: score descending, then
    /// frame id, then input index.
    pub fn ranked(&self) -> Vec<(&str, &DetectionOutcome)> {
        let mut all: Vec<(&str, &DetectionOutcome)> = self
            .frames
            .iter()
            .flat_map(|(f, m)| m.detections.iter().map(move |d| (f.as_str(), d)))
            .collect();
        all.sort_by(|a, b| {
            b.1.score
                .total_cmp(&a.1.score)
                .then_with(|| a.0.cmp(b.0))
                .then(a.1.detection_index.cmp(&b.1.detection_index))
        });
        all
    }
}

/// Greedy assignment within one frame.
///
/// `dets` holds `(detection_index, box, score)`. Detections are visited by
/// descending score, ties by ascending index; each takes the unmatched ground
/// truth with the highest IoU at or above `threshold` (ties go to the earlier
/// ground-truth box), otherwise it is a false positive.
pub fn match_frame(
    dets: &[(usize, BoundingBox, f64)],
    gts: &[(&str, BoundingBox)],
    threshold: f64,
    max_detections: Option<usize>,
) -> FrameMatch {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].2.total_cmp(&dets[a].2).then(dets[a].0.cmp(&dets[b].0)));
    if let Some(k) = max_detections {
        order.truncate(k);
    }

    let mut taken = vec![false; gts.len()];
    let mut outcomes = Vec::with_capacity(order.len());
    for i in order {
        let (index, bbox, score) = dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, (_, gbox)) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = bbox.iou(gbox);
            if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        let matched = best.map(|(g, iou)| {
            taken[g] = true;
            GtMatch {
                box_id: gts[g].0.to_string(),
                iou,
            }
        });
        outcomes.push(DetectionOutcome {
            detection_index: index,
            score,
            matched,
        });
    }

    FrameMatch {
        detections: outcomes,
        gt_box_ids: gts.iter().map(|(id, _)| id.to_string()).collect(),
        unmatched_gt: gts
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|((id, _), _)| id.to_string())
            .collect(),
    }
}

/// Matches detections to ground truth of `cfg.category`, frame by frame.
///
/// Other categories are ignored on both sides. Detections in frames without
/// ground truth become false positives.
pub fn greedy_match(
    detections: &[Detection],
    gts: &GroundTruthSet,
    cfg: &EvaluationConfig,
) -> MatchResult {
    type FrameInput<'a> = (Vec<(usize, BoundingBox, f64)>, Vec<(&'a str, BoundingBox)>);
    let mut frames: BTreeMap<&str, FrameInput> = BTreeMap::new();
    for (frame, boxes) in gts.by_frame(cfg.category) {
        frames.entry(frame).or_default().1 = boxes
            .into_iter()
            .map(|b| (b.box_id.as_str(), b.bbox))
            .collect();
    }
    for (i, d) in detections.iter().enumerate() {
        if d.category == cfg.category {
            frames
                .entry(d.frame_id.as_str())
                .or_default()
                .0
                .push((i, d.bbox, d.score));
        }
    }

    let inputs: Vec<(&str, FrameInput)> = frames.into_iter().collect();
    #[cfg(feature = "parallel")]
    let iter = inputs.par_iter();
    #[cfg(not(feature = "parallel"))]
    let iter = inputs.iter();
    let matched: Vec<(String, FrameMatch)> = iter
        .map(|(frame, (dets, gts))| {
            (
                frame.to_string(),
                match_frame(dets, gts, cfg.iou_threshold, cfg.max_detections_per_frame),
            )
        })
        .collect();
    MatchResult {
        iou_threshold: cfg.iou_threshold,
        frames: matched.into_iter().collect(),
    }
}

/// One point of the precision/recall sweep, after admitting every detection
/// down to `score`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision/recall after each detection of the rank-ordered list.
pub fn precision_recall_curve(ranked: &[(f64, bool)], total_gt: usize) -> Vec<PrPoint> {
    let mut tp = 0usize;
    ranked
        .iter()
        .enumerate()
        .map(|(k, &(score, is_tp))| {
            tp += is_tp as usize;
            PrPoint {
                score,
                recall: if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 },
                precision: tp as f64 / (k + 1) as f64,
            }
        })
        .collect()
}

/// 101-point interpolated AP of a rank-ordered TP/FP sequence.
///
/// For each recall level r the interpolated precision is the maximum
/// precision over all cutoffs whose recall is at least r (0 when none is).
pub fn interpolated_ap(is_tp: &[bool], total_gt: usize) -> f64 {
    if total_gt == 0 || is_tp.is_empty() {
        return 0.0;
    }
    let mut tp_cum = Vec::with_capacity(is_tp.len());
    let mut precision = Vec::with_capacity(is_tp.len());
    let mut tp = 0usize;
    for (k, &hit) in is_tp.iter().enumerate() {
        tp += hit as usize;
        tp_cum.push(tp);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // precision envelope: best precision at this cutoff or any later one
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }

    let mut sum = 0.0;
    let mut k = 0;
    for level in 0..RECALL_LEVELS {
        // recall ≥ level/100, compared in integers to avoid rounding drift
        while k < tp_cum.len() && tp_cum[k] * 100 < level * total_gt {
            k += 1;
        }
        if k == tp_cum.len() {
            break;
        }
        sum += precision[k];
    }
    sum / RECALL_LEVELS as f64
}

/// AP over all frames of `result`, with detections ranked globally.
pub fn average_precision(result: &MatchResult) -> f64 {
    let is_tp: Vec<bool> = result
        .ranked()
        .into_iter()
        .map(|(_, d)| d.matched.is_some())
        .collect();
    interpolated_ap(&is_tp, result.total_gt())
}

/// Matched ground truth over all ground truth. With no ground truth at all,
/// recall is vacuously 1.
pub fn average_recall(result: &MatchResult) -> f64 {
    let total = result.total_gt();
    if total == 0 {
        warn!("no ground-truth boxes; average recall is vacuously 1.0");
        return 1.0;
    }
    result.total_matched() as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRecall {
    pub key: String,
    pub label: String,
    pub gt_count: usize,
    pub matched_count: usize,
    pub recall: f64,
}

/// Recall restricted to the ground truth carrying each label of each key.
///
/// Boxes labeled [`UNRESOLVED`] for a key, or lacking the key, are left out of
/// that key's buckets. Output is grouped by `keys` order, labels sorted.
pub fn bucketed_recall(
    result: &MatchResult,
    gts: &GroundTruthSet,
    keys: &[String],
) -> Vec<BucketRecall> {
    let lookup: HashMap<(&str, &str), &GroundTruthBox> = gts
        .boxes
        .iter()
        .map(|b| ((b.frame_id.as_str(), b.box_id.as_str()), b))
        .collect();

    let mut evaluated: Vec<(&GroundTruthBox, bool)> = Vec::new();
    for (frame, m) in &result.frames {
        let unmatched: HashSet<&str> = m.unmatched_gt.iter().map(String::as_str).collect();
        for id in &m.gt_box_ids {
            if let Some(b) = lookup.get(&(frame.as_str(), id.as_str())) {
                evaluated.push((b, !unmatched.contains(id.as_str())));
            }
        }
    }

    let mut out = Vec::new();
    for key in keys {
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (b, matched) in &evaluated {
            match b.attributes.get(key).map(String::as_str) {
                None | Some(UNRESOLVED) => {}
                Some(label) => {
                    let c = counts.entry(label).or_default();
                    c.0 += 1;
                    c.1 += *matched as usize;
                }
            }
        }
        if counts.is_empty() {
            warn!("attribute {key:?} is not present on any evaluated ground-truth box");
        }
        out.extend(counts.into_iter().map(|(label, (gt_count, matched_count))| BucketRecall {
            key: key.clone(),
            label: label.to_string(),
            gt_count,
            matched_count,
            recall: matched_count as f64 / gt_count as f64,
        }));
    }
    out
}

/// Metrics for one system on one dataset, as written to report JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ap: f64,
    pub ar: f64,
    #[serde(default)]
    pub buckets: Vec<BucketRecall>,
}

impl EvaluationReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Matching, AP, AR and bucketed recall in one call.
pub fn evaluate(
    detections: &[Detection],
    gts: &GroundTruthSet,
    cfg: &EvaluationConfig,
    bucket_keys: &[String],
) -> (MatchResult, EvaluationReport) {
    let result = greedy_match(detections, gts, cfg);
    let report = EvaluationReport {
        ap: average_precision(&result),
        ar: average_recall(&result),
        buckets: bucketed_recall(&result, gts, bucket_keys),
    };
    (result, report)
}
