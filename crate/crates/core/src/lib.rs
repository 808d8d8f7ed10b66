//! Batch anonymization of face and license-plate regions with Gaussian blur,
//! plus the detection-evaluation harness used to benchmark the detectors that
//! feed it: greedy IoU matching, 101-point AP, single-threshold AR,
//! attribute-bucketed recall and majority-vote merging of attribute reviews.

pub mod dataset;
pub mod evaluation;
pub mod geometry;
pub mod imaging;
pub mod pipeline;
pub mod reporting;

pub use dataset::{Category, Detection, DetectionSet, GroundTruthBox, GroundTruthSet};
pub use evaluation::{EvaluationConfig, EvaluationReport, MatchResult};
pub use geometry::BoundingBox;
pub use imaging::{GaussianKernel, ImageBuffer};
