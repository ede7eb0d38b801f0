//! 8-bit RGB image files.
//!
//! Binary PPM (`P6`, maxval 255) is handled here and is bit-exact: a value
//! `v` in [0, 1] is stored as `round(v·255)` with halves rounded up, and a byte
//! `b` reads back as `b/255`. PNG goes through the `image` crate with the same
//! quantization.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `round(v·255)` with ties rounded up, after clamping to [0, 1].
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn dequantize(b: u8) -> f64 {
    b as f64 / 255.0
}

fn check_rgb(img: &Tensor) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::shape("image codec", 3, img.channels()));
    }
    Ok(())
}

/// Interleaved RGB bytes of a 3-channel tensor.
pub fn to_rgb8(img: &Tensor) -> Result<Vec<u8>> {
    check_rgb(img)?;
    let n = img.plane_len();
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            out.push(quantize(img.channel(c)[i]));
        }
    }
    Ok(out)
}

pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() != 3 * width * height {
        return Err(Error::Truncated(format!(
            "expected {} RGB bytes, found {}",
            3 * width * height,
            bytes.len()
        )));
    }
    Ok(Tensor::from_fn(3, height, width, |c, y, x| {
        dequantize(bytes[3 * (y * width + x) + c])
    }))
}

pub fn encode_ppm(img: &Tensor) -> Result<Vec<u8>> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(to_rgb8(img)?);
    Ok(out)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed(format!("PPM header: bad {what}")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::BadMagic("not a binary PPM (expected P6)".into()));
    }
    let mut r = HeaderReader { bytes, pos: 2 };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Malformed("PPM header: zero dimension".into()));
    }
    if maxval != 255 {
        return Err(Error::Malformed(format!("PPM maxval {maxval} unsupported (need 255)")));
    }
    match bytes.get(r.pos) {
        Some(b) if b.is_ascii_whitespace() => r.pos += 1,
        _ => return Err(Error::Truncated("PPM header".into())),
    }
    let need = 3 * width * height;
    let payload = &bytes[r.pos..];
    if payload.len() < need {
        return Err(Error::Truncated(format!(
            "PPM payload: expected {need} bytes, found {}",
            payload.len()
        )));
    }
    from_rgb8(width, height, &payload[..need])
}

fn is_ppm(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("ppm" | "pnm")
    )
}

/// Reads an RGB image; `.ppm`/`.pnm` natively, anything else via `image`.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_ppm(path) || bytes.starts_with(b"P6") {
        return decode_ppm(&bytes);
    }
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?
        .to_rgb8();
    from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
}

pub fn write_image(path: &Path, img: &Tensor) -> Result<()> {
    let bytes = if is_ppm(path) {
        encode_ppm(img)?
    } else {
        let raw = to_rgb8(img)?;
        let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
            .expect("buffer length matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
        out.into_inner()
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Single-channel mask: the mean of the RGB channels of an image file.
pub fn read_mask(path: &Path) -> Result<Tensor> {
    let img = read_image(path)?;
    let n = img.plane_len();
    let data = (0..n)
        .map(|i| (img.channel(0)[i] + img.channel(1)[i] + img.channel(2)[i]) / 3.0)
        .collect();
    Tensor::from_vec(1, img.height(), img.width(), data)
}

/// Maps a soft mask to {0, 1} with ties going to 1.
pub fn binarize(mask: &Tensor) -> Tensor {
    mask.map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
}
