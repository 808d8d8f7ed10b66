//! Pixel buffers, the Gaussian-blur obfuscation operator, and raster codecs.

mod blur;
mod codec;

use thiserror::Error;

pub use blur::{
    blur_region, blur_region_in_place, separable_blur_values, sigma_for_box, GaussianKernel,
    DEFAULT_SIGMA_SCALE, SIGMA_MIN,
};
pub use codec::{decode_frame, encode_frame, read_image, write_image, RasterFormat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("sample buffer has {actual} bytes, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("sigma {sigma} is below the minimum {min}")]
    SigmaTooSmall { sigma: f64, min: f64 },
    #[error("region ({x}, {y}, {w}, {h}) is not inside the {width}x{height} image; clip it first")]
    RegionOutOfBounds {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        width: usize,
        height: usize,
    },
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("truncated pixel payload at byte {offset}: expected {expected} payload bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported raster at byte {offset}: {reason}")]
    Unsupported { offset: usize, reason: String },
    #[error("png error: {0}")]
    Png(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Owned 8-bit raster, row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidDimensions { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(ImagingError::UnsupportedChannels(channels));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(ImagingError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image filled with `value` in every sample.
    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: u8,
    ) -> Result<Self, ImagingError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    /// The samples of pixel `(x, y)`.
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels]
    }
}
