//! Binary PPM (P6, maxval 255) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 8-bit interleaved RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height * 3 {
            return Err(Error::Contract(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// `H×W×3` tensor with every byte scaled by `1/255`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.pixels.iter().map(|&b| T::of(b as f64 / 255.0)).collect();
        Tensor::new(vec![self.height, self.width, 3], data).expect("dimensions checked at construction")
    }

    /// Quantizes an `H×W×3` tensor in `[0,1]` with `round(v·255)`, clamped.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        let [h, w, 3] = *t.shape() else {
            return Err(Error::Contract(format!("expected H×W×3 image, got {:?}", t.shape())));
        };
        let pixels = t
            .data()
            .iter()
            .map(|v| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        Self::new(w, h, pixels)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Ppm {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse().map_err(|_| Error::Ppm {
            offset: start,
            msg: format!("{what} out of range"),
        })
    }
}

pub fn parse_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let mut c = Cursor { bytes, pos: 0 };
    if bytes.get(..2) != Some(b"P6".as_slice()) {
        return Err(c.err("missing P6 magic"));
    }
    c.pos = 2;
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(c.err("expected whitespace after magic"));
    }
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval_at = c.pos;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Ppm {
            offset: maxval_at,
            msg: format!("degenerate size {width}x{height}"),
        });
    }
    if maxval != 255 {
        return Err(Error::Ppm {
            offset: maxval_at,
            msg: format!("unsupported maxval {maxval}"),
        });
    }
    if !bytes.get(c.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(c.err("expected single whitespace before pixel data"));
    }
    c.pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| c.err("image size overflows"))?;
    let payload = &bytes[c.pos..];
    if payload.len() < need {
        return Err(Error::Ppm {
            offset: bytes.len(),
            msg: format!("truncated payload: {} of {need} bytes", payload.len()),
        });
    }
    if payload.len() > need {
        return Err(Error::Ppm {
            offset: c.pos + need,
            msg: format!("{} trailing bytes after pixel data", payload.len() - need),
        });
    }
    RgbImage::new(width, height, payload.to_vec())
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Reads a P6 file as an `H×W×3` tensor in `[0,1]`.
pub fn load_image<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = parse_ppm(&bytes).map_err(|e| match e {
        Error::Ppm { offset, msg } => Error::Ppm {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })?;
    Ok(img.to_tensor())
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}
