//! Binary PGM (P5) and PPM (P6) images with maxval 255.

use std::path::Path;

use retromem_core::Tensor;

use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Netpbm {
    /// 1 for P5, 3 for P6.
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    /// Interleaved samples in file order.
    pub pixels: Vec<u8>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Header<'_> {
    fn fail<T>(&self, offset: usize, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            path: self.path.to_path_buf(),
            offset,
            reason: reason.into(),
        })
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.fail(start, format!("expected {what}"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        match text.parse::<usize>() {
            Ok(v) => Ok((v, start)),
            Err(_) => self.fail(start, format!("{what} out of range")),
        }
    }
}

impl Netpbm {
    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut h = Header {
            bytes,
            pos: 0,
            path,
        };
        let channels = match bytes.get(..2) {
            Some(b"P5") => 1,
            Some(b"P6") => 3,
            _ => return h.fail(0, "expected magic P5 or P6"),
        };
        h.pos = 2;
        let (width, at) = h.number("width")?;
        if width == 0 {
            return h.fail(at, "width must be positive");
        }
        let (height, at) = h.number("height")?;
        if height == 0 {
            return h.fail(at, "height must be positive");
        }
        let (maxval, at) = h.number("maxval")?;
        if maxval != 255 {
            return h.fail(
                at,
                format!("unsupported maxval {maxval}, only 255 is accepted"),
            );
        }
        match bytes.get(h.pos) {
            Some(b) if b.is_ascii_whitespace() => h.pos += 1,
            Some(_) => return h.fail(h.pos, "expected whitespace after maxval"),
            None => return h.fail(h.pos, "truncated header"),
        }
        let need = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                offset: at,
                reason: "image too large".into(),
            })?;
        let payload = &bytes[h.pos..];
        if payload.len() < need {
            return h.fail(
                bytes.len(),
                format!(
                    "truncated payload: expected {need} bytes, found {}",
                    payload.len()
                ),
            );
        }
        if payload.len() > need {
            return h.fail(h.pos + need, "trailing bytes after payload");
        }
        Ok(Self {
            channels,
            width,
            height,
            pixels: payload.to_vec(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// `[C, H, W]` tensor with samples scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let (c, hw) = (self.channels, self.width * self.height);
        let mut data = vec![0.0f32; c * hw];
        for (i, &v) in self.pixels.iter().enumerate() {
            data[(i % c) * hw + i / c] = v as f32 / 255.0;
        }
        Tensor::new(&[c, self.height, self.width], data).expect("sized by construction")
    }

    /// Quantize a `[C, H, W]` or `[H, W]` tensor with `C ∈ {1, 3}`;
    /// values are clamped to `[0, 1]` and rounded to the nearest level.
    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        let (c, h, w) = match *t.shape() {
            [h, w] => (1, h, w),
            [c, h, w] if c == 1 || c == 3 => (c, h, w),
            ref s => {
                return Err(Error::Usage(format!(
                    "cannot store a tensor of shape {s:?} as an image"
                )))
            }
        };
        let hw = h * w;
        let src = t.data();
        let pixels = (0..c * hw)
            .map(|i| {
                let v = src[(i % c) * hw + i / c];
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            })
            .collect();
        Ok(Self {
            channels: c,
            width: w,
            height: h,
            pixels,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fsutil::read(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::atomic_write(path, &self.encode())
    }
}

pub fn read_netpbm(path: &Path) -> Result<Tensor<f32>> {
    Ok(Netpbm::read(path)?.to_tensor())
}

pub fn write_netpbm(t: &Tensor<f32>, path: &Path) -> Result<()> {
    Netpbm::from_tensor(t)?.write(path)
}
