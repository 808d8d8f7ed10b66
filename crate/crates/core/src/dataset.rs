//! Ground truth, detections and attribute reviews: loading, validation,
//! serialization and majority-vote merging.
//!
//! File layouts (UTF-8 JSON, unknown fields are ignored with a warning):
//!
//! ```text
//! ground truth  {"frames":[{"frame_id","width","height"}],
//!                "boxes":[{"box_id","frame_id","category","bbox":[x,y,w,h],"attributes":{..}}]}
//! detections    {"detections":[{"frame_id","category","bbox":[x,y,w,h],"score"}]}
//! reviews       {"reviews":[{"box_id","annotator_id","attributes":{..}}]}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::BoundingBox;

/// Attribute label assigned when annotators reach no strict majority.
pub const UNRESOLVED: &str = "unresolved";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid JSON document: {0}")]
    Json(String),
    #[error("{kind} record {index}: {message}")]
    Record {
        kind: &'static str,
        index: usize,
        message: String,
    },
    #[error("duplicate box_id {box_id:?} in frame {frame_id:?}")]
    DuplicateBox { frame_id: String, box_id: String },
    #[error("review record {index} references unknown box_id {box_id:?}")]
    UnknownBox { index: usize, box_id: String },
    #[error("review record {index}: box_id {box_id:?} exists in several frames")]
    AmbiguousBox { index: usize, box_id: String },
    #[error("review record {index}: annotator {annotator_id:?} already reviewed box {box_id:?}")]
    DuplicateReview {
        index: usize,
        box_id: String,
        annotator_id: String,
    },
}

impl DatasetError {
    fn record(kind: &'static str, index: usize, message: impl fmt::Display) -> Self {
        DatasetError::Record {
            kind,
            index,
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Face,
    LicensePlate,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Face, Category::LicensePlate];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Face => "face",
            Category::LicensePlate => "license_plate",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "face" => Ok(Category::Face),
            "license_plate" => Ok(Category::LicensePlate),
            other => Err(format!(
                "unknown category {other:?} (expected \"face\" or \"license_plate\")"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInfo {
    pub frame_id: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruthBox {
    pub box_id: String,
    pub frame_id: String,
    pub category: Category,
    pub bbox: BoundingBox,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub frame_id: String,
    pub category: Category,
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GroundTruthSet {
    pub frames: Vec<FrameInfo>,
    pub boxes: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Review {
    pub box_id: String,
    pub annotator_id: String,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReviewSet {
    pub reviews: Vec<Review>,
}

/// Box counts per category and per attribute bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub total: usize,
    pub per_category: BTreeMap<Category, usize>,
    /// attribute key → label → box count
    pub buckets: BTreeMap<String, BTreeMap<String, usize>>,
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| DatasetError::Json(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Top-level object with the named array fields pulled out as raw values.
fn split_document(
    text: &str,
    arrays: &[&'static str],
    required: &'static str,
) -> Result<Vec<Vec<Value>>, DatasetError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| DatasetError::Json(e.to_string()))?;
    let Value::Object(mut obj) = doc else {
        return Err(DatasetError::Json("top-level value must be an object".into()));
    };
    if !obj.contains_key(required) {
        return Err(DatasetError::Json(format!("missing top-level field {required:?}")));
    }
    let mut out = Vec::with_capacity(arrays.len());
    for &name in arrays {
        match obj.remove(name) {
            None => out.push(Vec::new()),
            Some(Value::Array(items)) => out.push(items),
            Some(_) => {
                return Err(DatasetError::Json(format!("top-level field {name:?} must be an array")))
            }
        }
    }
    for key in obj.keys() {
        warn!("ignoring unknown top-level field {key:?}");
    }
    Ok(out)
}

/// Record object with known fields checked off; leftovers produce a warning.
struct RecordFields {
    kind: &'static str,
    index: usize,
    obj: serde_json::Map<String, Value>,
}

impl RecordFields {
    fn new(kind: &'static str, index: usize, value: Value) -> Result<Self, DatasetError> {
        match value {
            Value::Object(obj) => Ok(Self { kind, index, obj }),
            _ => Err(DatasetError::record(kind, index, "expected a JSON object")),
        }
    }

    fn err(&self, message: impl fmt::Display) -> DatasetError {
        DatasetError::record(self.kind, self.index, message)
    }

    fn take(&mut self, field: &str) -> Result<Value, DatasetError> {
        self.obj
            .remove(field)
            .ok_or_else(|| self.err(format!("missing field {field:?}")))
    }

    fn id(&mut self, field: &str) -> Result<String, DatasetError> {
        let id = match self.take(field)? {
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            _ => return Err(self.err(format!("field {field:?} must be a string or integer"))),
        };
        if id.is_empty() {
            return Err(self.err(format!("field {field:?} is empty")));
        }
        Ok(id)
    }

    fn category(&mut self) -> Result<Category, DatasetError> {
        match self.take("category")? {
            Value::String(s) => s.parse().map_err(|e: String| self.err(e)),
            _ => Err(self.err("field \"category\" must be a string")),
        }
    }

    fn bbox(&mut self) -> Result<BoundingBox, DatasetError> {
        let v = self.take("bbox")?;
        let coords: Vec<f64> = match v {
            Value::Array(items) if items.len() == 4 => items.iter().filter_map(Value::as_f64).collect(),
            _ => Vec::new(),
        };
        if coords.len() != 4 {
            return Err(self.err("field \"bbox\" must be [x, y, w, h] numbers"));
        }
        BoundingBox::new(coords[0], coords[1], coords[2], coords[3]).map_err(|e| self.err(e))
    }

    fn number(&mut self, field: &str) -> Result<f64, DatasetError> {
        self.take(field)?
            .as_f64()
            .ok_or_else(|| self.err(format!("field {field:?} must be a number")))
    }

    fn attributes(&mut self, required: bool) -> Result<BTreeMap<String, String>, DatasetError> {
        let v = match self.obj.remove("attributes") {
            None if !required => return Ok(BTreeMap::new()),
            None => return Err(self.err("missing field \"attributes\"")),
            Some(Value::Null) => return Ok(BTreeMap::new()),
            Some(v) => v,
        };
        let Value::Object(map) = v else {
            return Err(self.err("field \"attributes\" must be an object"));
        };
        let mut out = BTreeMap::new();
        for (key, value) in map {
            if !is_snake_case(&key) {
                return Err(self.err(format!("attribute key {key:?} is not lowercase snake_case")));
            }
            let label = match value {
                Value::String(s) => s,
                Value::Bool(b) => b.to_string(),
                Value::Number(n) => n.to_string(),
                // absent attribute, not an error
                Value::Null => continue,
                _ => return Err(self.err(format!("attribute {key:?} must be a scalar label"))),
            };
            out.insert(key, label);
        }
        Ok(out)
    }

    fn finish(self) {
        for key in self.obj.keys() {
            warn!("{} record {}: ignoring unknown field {key:?}", self.kind, self.index);
        }
    }
}

fn is_snake_case(key: &str) -> bool {
    let mut chars = key.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl GroundTruthSet {
    pub fn from_json_str(text: &str) -> Result<Self, DatasetError> {
        let mut parts = split_document(text, &["frames", "boxes"], "boxes")?;
        let raw_boxes = parts.pop().unwrap_or_default();
        let raw_frames = parts.pop().unwrap_or_default();

        let mut frames = Vec::with_capacity(raw_frames.len());
        let mut frame_ids = HashSet::new();
        for (index, v) in raw_frames.into_iter().enumerate() {
            let mut rec = RecordFields::new("frame", index, v)?;
            let frame_id = rec.id("frame_id")?;
            let width = rec.number("width")?;
            let height = rec.number("height")?;
            if width < 1.0 || height < 1.0 || width.fract() != 0.0 || height.fract() != 0.0 || width > u32::MAX as f64 || height > u32::MAX as f64 {
                return Err(rec.err(format!("invalid frame size {width}x{height}")));
            }
            if !frame_ids.insert(frame_id.clone()) {
                return Err(rec.err(format!("duplicate frame_id {frame_id:?}")));
            }
            rec.finish();
            frames.push(FrameInfo {
                frame_id,
                width: width as u32,
                height: height as u32,
            });
        }

        let mut boxes = Vec::with_capacity(raw_boxes.len());
        let mut seen = HashSet::new();
        for (index, v) in raw_boxes.into_iter().enumerate() {
            let mut rec = RecordFields::new("box", index, v)?;
            let box_id = rec.id("box_id")?;
            let frame_id = rec.id("frame_id")?;
            let category = rec.category()?;
            let bbox = rec.bbox()?;
            let attributes = rec.attributes(false)?;
            if !frames.is_empty() && !frame_ids.contains(&frame_id) {
                return Err(rec.err(format!("frame_id {frame_id:?} is not listed in \"frames\"")));
            }
            rec.finish();
            if !seen.insert((frame_id.clone(), box_id.clone())) {
                return Err(DatasetError::DuplicateBox { frame_id, box_id });
            }
            boxes.push(GroundTruthBox {
                box_id,
                frame_id,
                category,
                bbox,
                attributes,
            });
        }
        Ok(Self { frames, boxes })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::from_json_str(&read_text(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        write_json(path, self)
    }

    pub fn summary(&self) -> DatasetSummary {
        let mut s = DatasetSummary {
            total: self.boxes.len(),
            ..Default::default()
        };
        for b in &self.boxes {
            *s.per_category.entry(b.category).or_default() += 1;
            for (k, v) in &b.attributes {
                *s.buckets.entry(k.clone()).or_default().entry(v.clone()).or_default() += 1;
            }
        }
        s
    }

    /// Boxes of `category` grouped by frame, keeping file order within a frame.
    pub fn by_frame(&self, category: Category) -> BTreeMap<&str, Vec<&GroundTruthBox>> {
        let mut out: BTreeMap<&str, Vec<&GroundTruthBox>> = BTreeMap::new();
        for f in &self.frames {
            out.entry(f.frame_id.as_str()).or_default();
        }
        for b in self.boxes.iter().filter(|b| b.category == category) {
            out.entry(b.frame_id.as_str()).or_default().push(b);
        }
        out
    }
}

impl DetectionSet {
    pub fn from_json_str(text: &str) -> Result<Self, DatasetError> {
        let raw = split_document(text, &["detections"], "detections")?
            .pop()
            .unwrap_or_default();
        let mut detections = Vec::with_capacity(raw.len());
        for (index, v) in raw.into_iter().enumerate() {
            let mut rec = RecordFields::new("detection", index, v)?;
            let det = parse_detection(&mut rec, None)?;
            rec.finish();
            detections.push(det);
        }
        Ok(Self { detections })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::from_json_str(&read_text(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("detections serialize") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        write_json(path, self)
    }

    /// Detections grouped by frame, file order preserved within each frame.
    pub fn by_frame(&self) -> BTreeMap<&str, Vec<&Detection>> {
        let mut out: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
        for d in &self.detections {
            out.entry(d.frame_id.as_str()).or_default().push(d);
        }
        out
    }
}

/// Parses one detection record. With `frame_id` given, the record carries no
/// `frame_id` field of its own (detector protocol responses).
fn parse_detection(
    rec: &mut RecordFields,
    frame_id: Option<&str>,
) -> Result<Detection, DatasetError> {
    let frame_id = match frame_id {
        Some(f) => f.to_string(),
        None => rec.id("frame_id")?,
    };
    let category = rec.category()?;
    let bbox = rec.bbox()?;
    let score = rec.number("score")?;
    if !(0.0..=1.0).contains(&score) {
        return Err(rec.err(format!("score {score} outside [0, 1]")));
    }
    Ok(Detection {
        frame_id,
        category,
        bbox,
        score,
    })
}

/// Parses a detection list embedded in another document (e.g. a detector
/// response line); `kind` names the record type in errors.
pub(crate) fn parse_detection_values(
    kind: &'static str,
    frame_id: &str,
    values: Vec<Value>,
) -> Result<Vec<Detection>, DatasetError> {
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            let mut rec = RecordFields::new(kind, index, v)?;
            let det = parse_detection(&mut rec, Some(frame_id))?;
            rec.finish();
            Ok(det)
        })
        .collect()
}

impl ReviewSet {
    pub fn from_json_str(text: &str) -> Result<Self, DatasetError> {
        let raw = split_document(text, &["reviews"], "reviews")?
            .pop()
            .unwrap_or_default();
        let mut reviews = Vec::with_capacity(raw.len());
        for (index, v) in raw.into_iter().enumerate() {
            let mut rec = RecordFields::new("review", index, v)?;
            let box_id = rec.id("box_id")?;
            let annotator_id = rec.id("annotator_id")?;
            let attributes = rec.attributes(true)?;
            rec.finish();
            reviews.push(Review {
                box_id,
                annotator_id,
                attributes,
            });
        }
        Ok(Self { reviews })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::from_json_str(&read_text(path)?)
    }

    pub fn extend(&mut self, other: ReviewSet) {
        self.reviews.extend(other.reviews);
    }
}

/// A box/attribute pair on which the annotators did not reach a strict majority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeConflict {
    pub frame_id: String,
    pub box_id: String,
    pub key: String,
    /// label → number of annotators who chose it
    pub votes: BTreeMap<String, usize>,
}

/// A box that received fewer reviews than the quorum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuorumShortfall {
    pub frame_id: String,
    pub box_id: String,
    pub reviews: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConflictReport {
    pub quorum: usize,
    pub conflicts: Vec<AttributeConflict>,
    pub under_quorum: Vec<QuorumShortfall>,
}

impl ConflictReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("conflict report serializes") + "\n"
    }
}

/// Label held by a strict majority of `labels`, if any.
pub fn majority_label<'a, I>(labels: I) -> Option<&'a str>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut n = 0;
    for l in labels {
        *counts.entry(l).or_default() += 1;
        n += 1;
    }
    counts.into_iter().find(|&(_, c)| 2 * c > n).map(|(l, _)| l)
}

/// Resolves each reviewed attribute by strict majority among the annotators
/// who supplied it. Ties become [`UNRESOLVED`] and are listed in the report.
///
/// Attributes no reviewer mentioned keep their ground-truth value. The result
/// does not depend on the order of reviews.
pub fn merge_reviews(
    gt: &GroundTruthSet,
    reviews: &ReviewSet,
    quorum: usize,
) -> Result<(GroundTruthSet, ConflictReport), DatasetError> {
    let mut index_by_id: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, b) in gt.boxes.iter().enumerate() {
        index_by_id.entry(b.box_id.as_str()).or_default().push(i);
    }

    let mut per_box: BTreeMap<usize, Vec<&Review>> = BTreeMap::new();
    let mut seen: HashSet<(usize, &str)> = HashSet::new();
    for (index, r) in reviews.reviews.iter().enumerate() {
        let target = match index_by_id.get(r.box_id.as_str()).map(Vec::as_slice) {
            None | Some([]) => {
                return Err(DatasetError::UnknownBox {
                    index,
                    box_id: r.box_id.clone(),
                })
            }
            Some([one]) => *one,
            Some(_) => {
                return Err(DatasetError::AmbiguousBox {
                    index,
                    box_id: r.box_id.clone(),
                })
            }
        };
        if !seen.insert((target, r.annotator_id.as_str())) {
            return Err(DatasetError::DuplicateReview {
                index,
                box_id: r.box_id.clone(),
                annotator_id: r.annotator_id.clone(),
            });
        }
        per_box.entry(target).or_default().push(r);
    }

    let mut merged = gt.clone();
    let mut report = ConflictReport {
        quorum,
        ..Default::default()
    };
    for (i, b) in merged.boxes.iter_mut().enumerate() {
        let box_reviews = per_box.get(&i).map(Vec::as_slice).unwrap_or(&[]);
        if box_reviews.len() < quorum {
            report.under_quorum.push(QuorumShortfall {
                frame_id: b.frame_id.clone(),
                box_id: b.box_id.clone(),
                reviews: box_reviews.len(),
            });
        }
        let keys: BTreeSet<&str> = box_reviews
            .iter()
            .flat_map(|r| r.attributes.keys().map(String::as_str))
            .collect();
        for key in keys {
            let labels = box_reviews
                .iter()
                .filter_map(|r| r.attributes.get(key).map(String::as_str));
            match majority_label(labels.clone()) {
                Some(label) => {
                    b.attributes.insert(key.to_string(), label.to_string());
                }
                None => {
                    b.attributes.insert(key.to_string(), UNRESOLVED.to_string());
                    let mut votes = BTreeMap::new();
                    for l in labels {
                        *votes.entry(l.to_string()).or_default() += 1;
                    }
                    report.conflicts.push(AttributeConflict {
                        frame_id: b.frame_id.clone(),
                        box_id: b.box_id.clone(),
                        key: key.to_string(),
                        votes,
                    });
                }
            }
        }
    }
    report
        .conflicts
        .sort_by(|a, b| (&a.frame_id, &a.box_id, &a.key).cmp(&(&b.frame_id, &b.box_id, &b.key)));
    report
        .under_quorum
        .sort_by(|a, b| (&a.frame_id, &a.box_id).cmp(&(&b.frame_id, &b.box_id)));
    Ok((merged, report))
}
