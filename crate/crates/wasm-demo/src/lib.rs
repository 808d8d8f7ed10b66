//! Browser bindings for the anonbench demo page.
//!
//! Three operations are exported: blurring a dragged rectangle on an RGBA
//! canvas buffer, the 1D Gaussian kernel used for a given sigma, and the
//! precision/recall curve of a synthetic detector. The `*_json` functions hold
//! the logic and are plain Rust so they can be tested on the host.

use std::collections::BTreeMap;

use anonbench::dataset::{Category, Detection, GroundTruthBox, GroundTruthSet};
use anonbench::evaluation::{
    average_precision, average_recall, greedy_match, precision_recall_curve, EvaluationConfig,
};
use anonbench::imaging::{sigma_for_box, GaussianKernel, ImageBuffer};
use anonbench::pipeline::{anonymize_frame, plan_regions, AnonymizeOptions};
use anonbench::BoundingBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Blurs one detection box on an RGBA buffer in place; alpha is left alone.
/// Returns the blurred region and its sigma as JSON.
pub fn blur_rgba_json(
    pixels: &mut [u8],
    width: usize,
    height: usize,
    bbox: [f64; 4],
    margin: f64,
    sigma_scale: f64,
) -> Result<String, String> {
    if pixels.len() != width * height * 4 {
        return Err(format!("expected {} RGBA bytes, got {}", width * height * 4, pixels.len()));
    }
    let bbox = BoundingBox::try_from(bbox).map_err(|e| e.to_string())?;
    let rgb: Vec<u8> = pixels.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
    let img = ImageBuffer::new(width, height, 3, rgb).map_err(|e| e.to_string())?;
    let opts = AnonymizeOptions {
        margin,
        sigma_scale,
        ..AnonymizeOptions::default()
    };
    let det = Detection {
        frame_id: "canvas".into(),
        category: Category::Face,
        bbox,
        score: 1.0,
    };
    let (regions, _) = plan_regions(width, height, std::slice::from_ref(&det), &opts);
    let out = anonymize_frame(&img, &[det], &opts).map_err(|e| e.to_string())?;
    for (dst, src) in pixels.chunks_exact_mut(4).zip(out.image.data().chunks_exact(3)) {
        dst[..3].copy_from_slice(src);
    }
    let region = regions.first().map(|(_, b)| {
        json!({"bbox": b, "sigma": sigma_for_box(b, sigma_scale)})
    });
    Ok(json!({ "region": region }).to_string())
}

/// Normalized kernel weights for `sigma`, center in the middle.
pub fn kernel_weights(sigma: f64) -> Result<Vec<f64>, String> {
    GaussianKernel::new(sigma).map(|k| k.weights().to_vec()).map_err(|e| e.to_string())
}

/// A detector that finds most faces with some localization noise and a few
/// spurious boxes. Scores grow with localization quality.
fn synthetic_scene(seed: u64, frames: usize, noise: f64) -> (GroundTruthSet, Vec<Detection>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gts = GroundTruthSet::default();
    let mut dets = Vec::new();
    for f in 0..frames {
        let frame_id = format!("frame{f:03}");
        for i in 0..rng.gen_range(1..=4) {
            let size = rng.gen_range(20.0..120.0);
            let gt = BoundingBox::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..300.0), size, size * 1.2)
                .expect("positive size");
            gts.boxes.push(GroundTruthBox {
                box_id: format!("{f}-{i}"),
                frame_id: frame_id.clone(),
                category: Category::Face,
                bbox: gt,
                attributes: BTreeMap::new(),
            });
            if rng.gen_bool(0.9) {
                let shift = |rng: &mut ChaCha8Rng| rng.gen_range(-1.0..=1.0) * noise * size;
                let bbox = BoundingBox::new(
                    gt.x + shift(&mut rng),
                    gt.y + shift(&mut rng),
                    (gt.w + shift(&mut rng)).max(2.0),
                    (gt.h + shift(&mut rng)).max(2.0),
                )
                .expect("positive size");
                let quality = bbox.iou(&gt);
                dets.push(Detection {
                    frame_id: frame_id.clone(),
                    category: Category::Face,
                    bbox,
                    score: (0.35 * quality + 0.65 * rng.gen::<f64>()).clamp(0.0, 1.0),
                });
            }
        }
        for _ in 0..rng.gen_range(0..=2) {
            dets.push(Detection {
                frame_id: frame_id.clone(),
                category: Category::Face,
                bbox: BoundingBox::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..300.0), 30.0, 36.0)
                    .expect("positive size"),
                score: rng.gen_range(0.0..0.7),
            });
        }
    }
    (gts, dets)
}

/// AP, AR and the PR curve of the synthetic detector at `iou_threshold`.
pub fn pr_curve_json(seed: u64, frames: usize, noise: f64, iou_threshold: f64) -> Result<String, String> {
    let cfg = EvaluationConfig::new(iou_threshold, None, Category::Face).map_err(|e| e.to_string())?;
    let (gts, dets) = synthetic_scene(seed, frames, noise);
    let result = greedy_match(&dets, &gts, &cfg);
    let ranked: Vec<(f64, bool)> = result
        .ranked()
        .into_iter()
        .map(|(_, d)| (d.score, d.matched.is_some()))
        .collect();
    let curve = precision_recall_curve(&ranked, result.total_gt());
    Ok(json!({
        "ap": average_precision(&result),
        "ar": average_recall(&result),
        "total_gt": result.total_gt(),
        "detections": dets.len(),
        "points": curve,
    })
    .to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn blur_rgba(
    pixels: &mut [u8],
    width: u32,
    height: u32,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    margin: f64,
    sigma_scale: f64,
) -> Result<String, JsError> {
    blur_rgba_json(pixels, width as usize, height as usize, [x, y, w, h], margin, sigma_scale)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn kernel_profile(sigma: f64) -> Result<Vec<f64>, JsError> {
    kernel_weights(sigma).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn pr_curve(seed: u32, frames: u32, noise: f64, iou_threshold: f64) -> Result<String, JsError> {
    pr_curve_json(seed as u64, frames as usize, noise, iou_threshold).map_err(|e| JsError::new(&e))
}
