//! Scalar loss reductions and their gradients.

use super::gram::{gram, gram_backward};
use crate::error::{Error, Result};
use crate::perceptual::mask::LayerMask;
use crate::tensor::Tensor;

/// `‖F − C‖²_F / (n·c)` for one layer.
pub fn content_term(f: &Tensor, target: &Tensor) -> Result<f64> {
    if !f.same_shape(target) {
        return Err(Error::shape("content_term", target.shape(), f.shape()));
    }
    let s: f64 = f
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / f.len() as f64)
}

pub fn content_term_backward(f: &Tensor, target: &Tensor, dout: f64) -> Tensor {
    let k = 2.0 * dout / f.len() as f64;
    f.lin_comb(k, target, -k).expect("shape checked in forward")
}

fn check_target(f: &Tensor, target: &Tensor) -> Result<usize> {
    let c = f.channels();
    if target.channels() != 1 || target.height() != c || target.width() != c {
        return Err(Error::shape(
            "style_term",
            format!("(1, {c}, {c})"),
            target.shape(),
        ));
    }
    Ok(c)
}

/// `‖gram_M(F) − G‖²_F / c²` for one layer.
pub fn style_term(f: &Tensor, target: &Tensor, mask: Option<&LayerMask>) -> Result<f64> {
    let c = check_target(f, target)?;
    let g = gram(f, mask)?;
    let s: f64 = g
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / (c * c) as f64)
}

pub fn style_term_backward(
    f: &Tensor,
    target: &Tensor,
    mask: Option<&LayerMask>,
    dout: f64,
) -> Result<Tensor> {
    let c = check_target(f, target)?;
    let g = gram(f, mask)?;
    let k = 2.0 * dout / (c * c) as f64;
    let dg = g.lin_comb(k, target, -k)?;
    gram_backward(f, mask, &dg)
}

/// Squared anisotropic total variation summed over channels and pixels.
pub fn tv(x: &Tensor) -> f64 {
    let (h, w) = (x.height(), x.width());
    let mut s = 0.0;
    for c in 0..x.channels() {
        let p = x.channel(c);
        for y in 0..h {
            for xx in 0..w {
                let v = p[y * w + xx];
                if xx + 1 < w {
                    let d = p[y * w + xx + 1] - v;
                    s += d * d;
                }
                if y + 1 < h {
                    let d = p[(y + 1) * w + xx] - v;
                    s += d * d;
                }
            }
        }
    }
    s
}

pub fn tv_backward(x: &Tensor, dout: f64) -> Tensor {
    let (h, w) = (x.height(), x.width());
    let mut g = Tensor::zeros_like(x);
    for c in 0..x.channels() {
        let p = x.channel(c).to_vec();
        let d = g.channel_mut(c);
        for y in 0..h {
            for xx in 0..w {
                let i = y * w + xx;
                if xx + 1 < w {
                    let diff = 2.0 * dout * (p[i + 1] - p[i]);
                    d[i + 1] += diff;
                    d[i] -= diff;
                }
                if y + 1 < h {
                    let diff = 2.0 * dout * (p[i + w] - p[i]);
                    d[i + w] += diff;
                    d[i] -= diff;
                }
            }
        }
    }
    g
}
