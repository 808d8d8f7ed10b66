use super::{ImageBuffer, ImagingError};
use crate::geometry::{BoundingBox, PixelRect};

/// Smallest admissible blur sigma, in pixels.
pub const SIGMA_MIN: f64 = 1.0;

/// Default ratio between blur sigma and the longer side of the region.
pub const DEFAULT_SIGMA_SCALE: f64 = 0.125;

/// Normalized 1D Gaussian taps, `2·radius + 1` of them, radius `ceil(3σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self, ImagingError> {
        if !sigma.is_finite() || sigma < SIGMA_MIN {
            return Err(ImagingError::SigmaTooSmall {
                sigma,
                min: SIGMA_MIN,
            });
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let denom = 2.0 * sigma * sigma;
        let mut weights: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / denom).exp()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        // exp is not guaranteed symmetric to the last bit for ±d; mirror it
        for i in 0..radius {
            weights[2 * radius - i] = weights[i];
        }
        Ok(Self {
            sigma,
            radius,
            weights,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Blur strength for a region: `max(SIGMA_MIN, sigma_scale · max(w, h))`.
pub fn sigma_for_box(b: &BoundingBox, sigma_scale: f64) -> f64 {
    (sigma_scale * b.w.max(b.h)).max(SIGMA_MIN)
}

fn region_rect(img: &ImageBuffer, region: &BoundingBox) -> Result<PixelRect, ImagingError> {
    let (w, h) = (img.width(), img.height());
    let rect = region.pixel_span(w, h);
    if !region.is_within(w as f64, h as f64) || rect.is_empty() {
        return Err(ImagingError::RegionOutOfBounds {
            x: region.x,
            y: region.y,
            w: region.w,
            h: region.h,
            width: w,
            height: h,
        });
    }
    Ok(rect)
}

/// Unquantized separable Gaussian convolution over the pixels of `region`.
///
/// Returns `rect.width() · rect.height() · channels` values laid out like an
/// image of the region, together with the pixel rectangle they cover. Source
/// samples come from the whole image, clamped to the nearest edge pixel.
pub fn separable_blur_values(
    img: &ImageBuffer,
    region: &BoundingBox,
    kernel: &GaussianKernel,
) -> Result<(PixelRect, Vec<f64>), ImagingError> {
    let rect = region_rect(img, region)?;
    Ok((rect, convolve(img, rect, kernel)))
}

fn convolve(img: &ImageBuffer, rect: PixelRect, kernel: &GaussianKernel) -> Vec<f64> {
    let (width, height, ch) = (img.width(), img.height(), img.channels());
    let r = kernel.radius();
    let taps = kernel.weights();
    let data = img.data();
    let rw = rect.width();

    // Horizontal pass over every row the vertical pass will read.
    let row_lo = rect.y0.saturating_sub(r);
    let row_hi = (rect.y1 + r).min(height);
    let mut horiz = vec![0.0f64; (row_hi - row_lo) * rw * ch];
    let mut acc = vec![0.0f64; ch];
    for y in row_lo..row_hi {
        let row = &data[y * width * ch..(y + 1) * width * ch];
        let out_row = &mut horiz[(y - row_lo) * rw * ch..(y - row_lo + 1) * rw * ch];
        for x in rect.x0..rect.x1 {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, &wt) in taps.iter().enumerate() {
                let sx = (x + k).saturating_sub(r).min(width - 1);
                let src = &row[sx * ch..sx * ch + ch];
                for c in 0..ch {
                    acc[c] += wt * src[c] as f64;
                }
            }
            let o = (x - rect.x0) * ch;
            out_row[o..o + ch].copy_from_slice(&acc);
        }
    }

    // Vertical pass.
    let rh = rect.height();
    let mut out = vec![0.0f64; rh * rw * ch];
    let row_len = rw * ch;
    for y in rect.y0..rect.y1 {
        let dst = &mut out[(y - rect.y0) * row_len..(y - rect.y0 + 1) * row_len];
        for (k, &wt) in taps.iter().enumerate() {
            let sy = (y + k).saturating_sub(r).min(height - 1);
            let src = &horiz[(sy - row_lo) * row_len..(sy - row_lo + 1) * row_len];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    out
}

#[inline]
fn quantize(v: f64) -> u8 {
    // f64::round rounds half away from zero
    v.round().clamp(0.0, 255.0) as u8
}

/// Blurs `region` of `img` in place. Pixels outside the region are untouched.
pub fn blur_region_in_place(
    img: &mut ImageBuffer,
    region: &BoundingBox,
    kernel: &GaussianKernel,
) -> Result<PixelRect, ImagingError> {
    let (rect, values) = separable_blur_values(img, region, kernel)?;
    let ch = img.channels();
    let rw = rect.width();
    for y in rect.y0..rect.y1 {
        let src = &values[(y - rect.y0) * rw * ch..(y - rect.y0 + 1) * rw * ch];
        let start = img.index(rect.x0, y, 0);
        let dst = &mut img.data[start..start + rw * ch];
        for (d, s) in dst.iter_mut().zip(src) {
            *d = quantize(*s);
        }
    }
    Ok(rect)
}

/// Returns a copy of `img` with `region` replaced by its Gaussian blur.
///
/// The region must already be clipped to the image. Every pixel the region
/// touches is rewritten from the original image, sampled with clamp-to-edge
/// at the borders, and rounded half away from zero.
pub fn blur_region(
    img: &ImageBuffer,
    region: &BoundingBox,
    kernel: &GaussianKernel,
) -> Result<ImageBuffer, ImagingError> {
    let mut out = img.clone();
    blur_region_in_place(&mut out, region, kernel)?;
    Ok(out)
}
