//! Binary netpbm: P5 (gray) and P6 (RGB, read as luma), 8 or 16 bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorgrad::Tensor;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Sample width of written gray images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u16 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format { kind: "netpbm", msg: msg.into() }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(bad("missing magic number"));
    }
    let magic = [bytes[0], bytes[1]];
    if &magic != b"P5" && &magic != b"P6" {
        return Err(bad(format!("unsupported magic {:?}", String::from_utf8_lossy(&magic))));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("header ends early")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad(format!("expected a number at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing separator after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(bad(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad(format!("maxval {maxval} outside 1..=65535")));
    }
    Ok(Header { magic, width: width as usize, height: height as usize, maxval, data_start: pos })
}

/// Decodes a P5/P6 image into `[H, W, 1]` values in `[0, 1]`.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor<f32>> {
    let hd = parse_header(bytes)?;
    let channels = if &hd.magic == b"P6" { 3 } else { 1 };
    let wide = hd.maxval > 255;
    let bps = if wide { 2 } else { 1 };
    let n = hd.width * hd.height;
    let payload = &bytes[hd.data_start..];
    if payload.len() < n * channels * bps {
        return Err(bad(format!(
            "payload has {} bytes, {}x{} image needs {}",
            payload.len(),
            hd.width,
            hd.height,
            n * channels * bps
        )));
    }
    let max = f64::from(hd.maxval);
    let sample = |i: usize| -> f64 {
        let v = if wide {
            u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]])
        } else {
            u16::from(payload[i])
        };
        f64::from(v) / max
    };
    let data = (0..n)
        .map(|p| {
            let v = if channels == 1 {
                sample(p)
            } else {
                (0..3).map(|c| LUMA[c] * sample(3 * p + c)).sum()
            };
            v.clamp(0.0, 1.0) as f32
        })
        .collect();
    Tensor::new(&[hd.height, hd.width, 1], data)
}

/// Encodes a single-channel image as P5; values are clamped to `[0, 1]`
/// and rounded to the nearest level.
pub fn encode_pgm(image: &Tensor<f32>, depth: BitDepth) -> Result<Vec<u8>> {
    let (h, w, c) = image.dims3()?;
    if c != 1 {
        return Err(Error::dim(format!("PGM needs one channel, got {c}")));
    }
    let max = depth.maxval();
    let mut out = format!("P5\n{w} {h}\n{max}\n").into_bytes();
    for &v in image.data() {
        let q = (f64::from(v).clamp(0.0, 1.0) * f64::from(max)).round() as u16;
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend_from_slice(&q.to_be_bytes()),
        }
    }
    Ok(out)
}

/// Encodes interleaved 8-bit RGB as P6.
pub fn encode_ppm(height: usize, width: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    if rgb.len() != height * width * 3 {
        return Err(Error::dim(format!("{} RGB bytes for a {height}x{width} image", rgb.len())));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    Ok(out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Format { kind, msg } => Error::Format { kind, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

pub fn write_image(path: impl AsRef<Path>, image: &Tensor<f32>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(image, depth)?).map_err(|e| Error::io(path, e))
}
