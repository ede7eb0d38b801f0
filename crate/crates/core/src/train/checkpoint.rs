//! Versioned binary container for models and extractors.
//!
//! Layout (all integers u32 little-endian):
//!
//! ```text
//! "UNRL" version tag
//! MODL: c1 c2 c3 c4 kernel n_styles
//!       f32 weights: forward convs (kernel, bias) by depth,
//!                    backward convs (kernel, bias) by level,
//!                    then H[t][ℓ] for each style
//!       metadata length, key=value lines (UTF-8)
//!       per style: gram count, then per gram: side, side² f64 values
//! FEXT: level count, per level: conv count, per conv: in out kernel relu,
//!       f32 weights (kernel, bias), then style and content layer lists
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{UnrolledModel, LEVELS};
use crate::ops::ConvLayer;
use crate::perceptual::FeatureExtractor;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"UNRL";
pub const VERSION: u32 = 1;
pub const MODEL_TAG: &[u8; 4] = b"MODL";
pub const EXTRACTOR_TAG: &[u8; 4] = b"FEXT";
pub const MODEL_HEADER_LEN: usize = 36;

/// Free-form run metadata plus the style Grams needed to evaluate losses
/// without the original style images.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointMeta {
    entries: Vec<(String, String)>,
    pub style_grams: Vec<Vec<Tensor>>,
}

impl CheckpointMeta {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend((v as u32).to_le_bytes());
    }

    fn f32s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.0.extend((v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(self.what.to_string()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f32s(&mut self, out: &mut [f64]) -> Result<()> {
        let b = self.take(4 * out.len())?;
        for (o, c) in out.iter_mut().zip(b.chunks_exact(4)) {
            *o = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        }
        Ok(())
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn header(&mut self, tag: &[u8; 4]) -> Result<()> {
        if self.bytes.len() < 4 || &self.bytes[..4] != MAGIC {
            return Err(Error::BadMagic(self.what.to_string()));
        }
        self.pos = 4;
        let version = self.u32()? as u32;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if self.take(4)? != tag {
            return Err(Error::BadMagic(format!(
                "{}: expected section {}",
                self.what,
                String::from_utf8_lossy(tag)
            )));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Malformed(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn sane(n: usize, limit: usize, what: &str) -> Result<usize> {
    if n == 0 || n > limit {
        return Err(Error::Malformed(format!("{what} = {n} out of range")));
    }
    Ok(n)
}

pub fn encode_model(model: &UnrolledModel, meta: &CheckpointMeta) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend(MAGIC);
    w.u32(VERSION as usize);
    w.0.extend(MODEL_TAG);
    for c in model.schedule() {
        w.u32(c);
    }
    w.u32(model.forward[0].ksize);
    w.u32(model.n_styles());
    for g in model.groups() {
        w.f32s(g);
    }
    let mut text = String::new();
    for (k, v) in meta.entries() {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    w.u32(text.len());
    w.0.extend(text.as_bytes());
    w.u32(meta.style_grams.len());
    for grams in &meta.style_grams {
        w.u32(grams.len());
        for g in grams {
            w.u32(g.height());
            for v in g.data() {
                w.0.extend(v.to_le_bytes());
            }
        }
    }
    w.0
}

pub fn decode_model(bytes: &[u8]) -> Result<(UnrolledModel, CheckpointMeta)> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "model checkpoint",
    };
    r.header(MODEL_TAG)?;
    let mut schedule = [0; LEVELS];
    for c in schedule.iter_mut() {
        *c = sane(r.u32()?, 1 << 16, "channel count")?;
    }
    let k = r.u32()?;
    if k != crate::net::KERNEL {
        return Err(Error::Malformed(format!("kernel size {k} unsupported")));
    }
    let n_styles = sane(r.u32()?, 1 << 16, "style count")?;
    let mut model = UnrolledModel::zeros(schedule, n_styles);
    for g in model.groups_mut() {
        r.f32s(g)?;
    }
    let len = r.u32()?;
    let text = std::str::from_utf8(r.take(len)?)
        .map_err(|_| Error::Malformed("metadata is not UTF-8".into()))?;
    let mut meta = CheckpointMeta::default();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Malformed(format!("metadata line {line:?}")))?;
        meta.set(k, v);
    }
    let n = r.u32()?;
    if n > n_styles {
        return Err(Error::Malformed(format!("{n} gram sets for {n_styles} styles")));
    }
    for _ in 0..n {
        let count = sane(r.u32()?, 64, "gram count")?;
        let mut grams = Vec::with_capacity(count);
        for _ in 0..count {
            let side = sane(r.u32()?, 4096, "gram side")?;
            let data = (0..side * side).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            grams.push(Tensor::from_vec(1, side, side, data)?);
        }
        meta.style_grams.push(grams);
    }
    r.finish()?;
    Ok((model, meta))
}

pub fn save_checkpoint(model: &UnrolledModel, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(UnrolledModel, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Rounds every weight through `f32`, as storing does.
pub fn quantize_model(model: &mut UnrolledModel) {
    for g in model.groups_mut() {
        for v in g {
            *v = *v as f32 as f64;
        }
    }
}

pub fn encode_extractor(fe: &FeatureExtractor) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend(MAGIC);
    w.u32(VERSION as usize);
    w.0.extend(EXTRACTOR_TAG);
    w.u32(fe.levels().len());
    for level in fe.levels() {
        w.u32(level.len());
        for c in level {
            w.u32(c.in_ch);
            w.u32(c.out_ch);
            w.u32(c.ksize);
            w.u32(c.relu as usize);
        }
    }
    for c in fe.levels().iter().flatten() {
        w.f32s(&c.weight);
        w.f32s(&c.bias);
    }
    for layers in [fe.style_layers(), fe.content_layers()] {
        w.u32(layers.len());
        for &l in layers {
            w.u32(l);
        }
    }
    w.0
}

pub fn decode_extractor(bytes: &[u8]) -> Result<FeatureExtractor> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "extractor file",
    };
    r.header(EXTRACTOR_TAG)?;
    let n_levels = sane(r.u32()?, 64, "level count")?;
    let mut levels = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        let n = sane(r.u32()?, 64, "conv count")?;
        let mut convs = Vec::with_capacity(n);
        for _ in 0..n {
            let in_ch = sane(r.u32()?, 1 << 16, "input channels")?;
            let out_ch = sane(r.u32()?, 1 << 16, "output channels")?;
            let k = r.u32()?;
            if k % 2 == 0 || k > 15 {
                return Err(Error::Malformed(format!("kernel size {k}")));
            }
            let relu = r.u32()? != 0;
            convs.push(ConvLayer::zeros(in_ch, out_ch, k, relu));
        }
        levels.push(convs);
    }
    for c in levels.iter_mut().flatten() {
        r.f32s(&mut c.weight)?;
        r.f32s(&mut c.bias)?;
    }
    let mut lists = Vec::new();
    for _ in 0..2 {
        let n = sane(r.u32()?, 64, "layer list length")?;
        lists.push((0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?);
    }
    r.finish()?;
    let content = lists.pop().expect("two lists");
    let style = lists.pop().expect("two lists");
    FeatureExtractor::from_levels(levels, style, content, 0)
}

pub fn save_extractor(fe: &FeatureExtractor, path: &Path) -> Result<()> {
    fs::write(path, encode_extractor(fe)).map_err(|e| Error::io(path, e))
}

pub fn load_extractor(path: &Path) -> Result<FeatureExtractor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_extractor(&bytes)
}
