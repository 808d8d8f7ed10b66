#![allow(dead_code)]

use std::path::Path;

use anonbench::dataset::{Category, Detection, DetectionSet};
use anonbench::imaging::{write_image, ImageBuffer};
use anonbench::BoundingBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth background with a few textured patches standing in for faces and
/// plates. Returns the image and one detection per patch.
pub fn synthetic_frame(
    rng: &mut ChaCha8Rng,
    frame_id: &str,
    width: usize,
    height: usize,
    channels: usize,
    patches: usize,
) -> (ImageBuffer, Vec<Detection>) {
    let mut data = Vec::with_capacity(width * height * channels);
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                data.push(((x * 3 + y * 2 + c * 40) % 200) as u8 + 20);
            }
        }
    }
    let mut img = ImageBuffer::new(width, height, channels, data).unwrap();
    let mut dets = Vec::new();
    for i in 0..patches {
        let pw = rng.gen_range(6..(width / 3).max(7));
        let ph = rng.gen_range(6..(height / 3).max(7));
        // allow patches hanging over the border
        let x = rng.gen_range(-(pw as i64) / 2..(width as i64 - pw as i64 / 2));
        let y = rng.gen_range(-(ph as i64) / 2..(height as i64 - ph as i64 / 2));
        for yy in y.max(0)..(y + ph as i64).min(height as i64) {
            for xx in x.max(0)..(x + pw as i64).min(width as i64) {
                for c in 0..channels {
                    img.set(xx as usize, yy as usize, c, rng.gen());
                }
            }
        }
        let category = if i % 3 == 2 { Category::LicensePlate } else { Category::Face };
        dets.push(Detection {
            frame_id: frame_id.to_string(),
            category,
            bbox: BoundingBox::new(x as f64 + 0.25, y as f64 - 0.5, pw as f64, ph as f64).unwrap(),
            score: rng.gen_range(0.2..1.0),
        });
    }
    (img, dets)
}

/// Writes `n` synthetic frames under `dir` (some nested, mixed formats) and
/// returns all their detections.
pub fn write_synthetic_set(dir: &Path, n: usize, seed: u64) -> DetectionSet {
    let mut r = rng(seed);
    let mut all = Vec::new();
    for i in 0..n {
        let (rel, channels) = match i % 4 {
            0 => (format!("cam_a/frame_{i:03}.ppm"), 3),
            1 => (format!("cam_b/frame_{i:03}.pgm"), 1),
            2 => (format!("frame_{i:03}.png"), 3),
            _ => (format!("cam_a/night/frame_{i:03}.png"), 1),
        };
        let frame_id = rel.rsplit_once('.').unwrap().0.to_string();
        let (w, h) = (r.gen_range(48..96), r.gen_range(40..80));
        let patches = r.gen_range(0..5);
        let (img, dets) = synthetic_frame(&mut r, &frame_id, w, h, channels, patches);
        let path = dir.join(&rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        write_image(&path, &img).unwrap();
        all.extend(dets);
    }
    DetectionSet { detections: all }
}
