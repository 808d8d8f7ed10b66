//! Raster file I/O: binary PNM (P5 gray, P6 RGB, maxval 255) and 8-bit PNG.
//!
//! The PNM writer is canonical (`P6\n<w> <h>\n255\n` followed by samples), so
//! `encode_frame(decode_frame(bytes))` reproduces any file it wrote.

use std::path::Path;

use super::{ImageBuffer, ImagingError};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];
// offsets of the IHDR bit-depth and color-type bytes
const PNG_BIT_DEPTH_OFFSET: usize = 24;
const PNG_COLOR_TYPE_OFFSET: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    /// P5 for one channel, P6 for three.
    Pnm,
    Png,
}

impl RasterFormat {
    /// Format implied by a file extension (case-insensitive).
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "ppm" | "pgm" | "pnm" => Some(Self::Pnm),
            "png" => Some(Self::Png),
            _ => None,
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .and_then(Self::from_extension)
    }
}

/// Decodes a PNM or PNG byte stream, sniffing the format from its magic bytes.
pub fn decode_frame(bytes: &[u8]) -> Result<ImageBuffer, ImagingError> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.first() == Some(&b'P') {
        decode_pnm(bytes)
    } else {
        Err(ImagingError::MalformedHeader {
            offset: 0,
            reason: "unrecognized magic bytes".into(),
        })
    }
}

pub fn encode_frame(img: &ImageBuffer, format: RasterFormat) -> Result<Vec<u8>, ImagingError> {
    match format {
        RasterFormat::Pnm => Ok(encode_pnm(img)),
        RasterFormat::Png => encode_png(img),
    }
}

pub fn read_image(path: &Path) -> Result<ImageBuffer, ImagingError> {
    let bytes = std::fs::read(path).map_err(|e| ImagingError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode_frame(&bytes)
}

/// Writes `img` in the format implied by the extension of `path`.
pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<Vec<u8>, ImagingError> {
    let format = RasterFormat::from_path(path).ok_or_else(|| ImagingError::Io {
        path: path.display().to_string(),
        message: "unsupported output extension".into(),
    })?;
    let bytes = encode_frame(img, format)?;
    std::fs::write(path, &bytes).map_err(|e| ImagingError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(bytes)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn malformed(&self, reason: impl Into<String>) -> ImagingError {
        ImagingError::MalformedHeader {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<usize, ImagingError> {
        let had_separator = self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#');
        if !had_separator {
            return Err(self.malformed(format!("expected whitespace before {what}")));
        }
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.malformed(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImagingError::MalformedHeader {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer, ImagingError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some([b'P', d]) if d.is_ascii_digit() => {
            return Err(ImagingError::Unsupported {
                offset: 0,
                reason: format!("PNM variant P{} (only binary P5/P6)", *d as char),
            })
        }
        _ => {
            return Err(ImagingError::MalformedHeader {
                offset: 0,
                reason: "expected P5 or P6".into(),
            })
        }
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.read_uint("width")?;
    let height = cur.read_uint("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.read_uint("maxval")?;
    if maxval != 255 {
        return Err(ImagingError::Unsupported {
            offset: maxval_at,
            reason: format!("maxval {maxval} (only 255)"),
        });
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.malformed("expected single whitespace after maxval")),
    }
    if width == 0 || height == 0 {
        return Err(ImagingError::MalformedHeader {
            offset: 2,
            reason: format!("zero dimension {width}x{height}"),
        });
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| ImagingError::MalformedHeader {
            offset: 2,
            reason: "dimensions overflow".into(),
        })?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(ImagingError::Truncated {
            offset: bytes.len(),
            expected,
            found: payload.len(),
        });
    }
    ImageBuffer::new(width, height, channels, payload[..expected].to_vec())
}

fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.data());
    out
}

fn decode_png(bytes: &[u8]) -> Result<ImageBuffer, ImagingError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImagingError::Png(e.to_string()))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImagingError::Unsupported {
            offset: PNG_BIT_DEPTH_OFFSET,
            reason: format!("PNG bit depth {:?} (only 8)", info.bit_depth),
        });
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(ImagingError::Unsupported {
                offset: PNG_COLOR_TYPE_OFFSET,
                reason: format!("PNG color type {other:?} (only gray and RGB)"),
            })
        }
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImagingError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| ImagingError::Png(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    ImageBuffer::new(width, height, channels, buf)
}

fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>, ImagingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| ImagingError::Png(e.to_string()))?;
        writer
            .write_image_data(img.data())
            .map_err(|e| ImagingError::Png(e.to_string()))?;
    }
    Ok(out)
}
