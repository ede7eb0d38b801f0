//! Binary semantic masks and their propagation down a resolution pyramid.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Diagonal 0/1 weighting over the pixels of one feature level.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMask {
    height: usize,
    width: usize,
    level: usize,
    weights: Vec<f64>,
    trace: usize,
}

impl LayerMask {
    pub fn ones(height: usize, width: usize, level: usize) -> Self {
        LayerMask {
            height,
            width,
            level,
            weights: vec![1.0; height * width],
            trace: height * width,
        }
    }

    pub fn from_weights(height: usize, width: usize, weights: Vec<f64>, level: usize) -> Result<Self> {
        if weights.len() != height * width {
            return Err(Error::shape("LayerMask", height * width, weights.len()));
        }
        if weights.iter().any(|&w| w != 0.0 && w != 1.0) {
            return Err(Error::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        let trace = weights.iter().filter(|&&w| w == 1.0).count();
        Ok(LayerMask {
            height,
            width,
            level,
            weights,
            trace,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of active pixels.
    pub fn trace(&self) -> usize {
        self.trace
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// One [`LayerMask`] per pyramid level, level 0 at full resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPyramid {
    levels: Vec<LayerMask>,
}

impl MaskPyramid {
    pub fn levels(&self) -> &[LayerMask] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> Option<&LayerMask> {
        self.levels.get(l)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Average-pools a full-resolution binary mask to each of `depth` levels
/// (halving per level) and thresholds at 0.5, ties going to 1.
pub fn propagate_mask(mask: &Tensor, depth: usize) -> Result<MaskPyramid> {
    if mask.channels() != 1 {
        return Err(Error::shape("propagate_mask", "1 channel", mask.channels()));
    }
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("mask entries must be 0 or 1".into()));
    }
    let block = 1usize << depth.saturating_sub(1);
    for dim in [mask.height(), mask.width()] {
        if dim % block != 0 {
            return Err(Error::Indivisible {
                op: "propagate_mask",
                dim,
                divisor: block,
            });
        }
    }
    let mut levels = Vec::with_capacity(depth);
    for level in 0..depth {
        let s = 1usize << level;
        let (h, w) = (mask.height() / s, mask.width() / s);
        let area = (s * s) as f64;
        let mut weights = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0.0;
                for dy in 0..s {
                    for dx in 0..s {
                        sum += mask.get(0, y * s + dy, x * s + dx);
                    }
                }
                weights.push(if sum / area >= 0.5 { 1.0 } else { 0.0 });
            }
        }
        let m = LayerMask::from_weights(h, w, weights, level)?;
        if m.trace() == 0 {
            return Err(Error::EmptyMask { level });
        }
        levels.push(m);
    }
    Ok(MaskPyramid { levels })
}
