//! Gram matrices and the instance-dependent 1×1 style-correction filter.
//!
//! A feature map of shape `(c, h, w)` is read as an `n × c` matrix `F` with
//! `n = h·w`. With a binary diagonal mask `M` of trace `T`, the normalized
//! Gram is `(1/T)·(MF)ᵀ(MF)`; without a mask `M = I` and `T = n`.

use crate::error::{Error, Result};
use crate::perceptual::mask::LayerMask;
use crate::tensor::Tensor;

fn check_mask(op: &'static str, f: &Tensor, mask: Option<&LayerMask>) -> Result<f64> {
    match mask {
        None => Ok(f.plane_len() as f64),
        Some(m) => {
            if m.len() != f.plane_len() {
                return Err(Error::shape(op, f.plane_len(), m.len()));
            }
            if m.trace() == 0 {
                return Err(Error::EmptyMask { level: m.level() });
            }
            Ok(m.trace() as f64)
        }
    }
}

fn masked_channels(f: &Tensor, mask: Option<&LayerMask>) -> Vec<Vec<f64>> {
    (0..f.channels())
        .map(|a| match mask {
            None => f.channel(a).to_vec(),
            Some(m) => f
                .channel(a)
                .iter()
                .zip(m.weights())
                .map(|(v, w)| v * w)
                .collect(),
        })
        .collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalized (optionally masked) Gram matrix, returned as a `(1, c, c)` tensor.
pub fn gram(f: &Tensor, mask: Option<&LayerMask>) -> Result<Tensor> {
    let trace = check_mask("gram", f, mask)?;
    let c = f.channels();
    let mf = masked_channels(f, mask);
    let mut g = vec![0.0; c * c];
    for a in 0..c {
        for b in a..c {
            let v = dot(&mf[a], &mf[b]) / trace;
            g[a * c + b] = v;
            g[b * c + a] = v;
        }
    }
    Tensor::matrix(c, c, g)
}

/// `dF` for a scalar with gradient `dg` w.r.t. `gram(f, mask)`.
pub fn gram_backward(f: &Tensor, mask: Option<&LayerMask>, dg: &Tensor) -> Result<Tensor> {
    let trace = check_mask("gram_backward", f, mask)?;
    let c = f.channels();
    let n = f.plane_len();
    let mut out = Tensor::zeros_like(f);
    for col in 0..c {
        let dst = out.channel_mut(col);
        for b in 0..c {
            let s = (dg.data()[b * c + col] + dg.data()[col * c + b]) / trace;
            if s == 0.0 {
                continue;
            }
            for (d, v) in dst.iter_mut().zip(f.channel(b)) {
                *d += s * v;
            }
        }
        if let Some(m) = mask {
            for (d, w) in dst.iter_mut().zip(m.weights()) {
                *d *= w;
            }
        }
        debug_assert_eq!(dst.len(), n);
    }
    Ok(out)
}

fn check_h(op: &'static str, f: &Tensor, h: &Tensor) -> Result<usize> {
    let c = f.channels();
    if h.channels() != 1 || h.height() != c || h.width() != c {
        return Err(Error::shape(op, format!("(1, {c}, {c})"), h.shape()));
    }
    Ok(c)
}

/// `F·[gram_M(F) − H]`: the left factor is never masked.
pub fn style_correction(feat: &Tensor, h: &Tensor, mask: Option<&LayerMask>) -> Result<Tensor> {
    let c = check_h("style_correction", feat, h)?;
    let g = gram(feat, mask)?;
    let a: Vec<f64> = g.data().iter().zip(h.data()).map(|(g, h)| g - h).collect();
    Ok(right_multiply(feat, &a, c))
}

/// `out[:, col] = Σ_b F[:, b]·A[b, col]`.
fn right_multiply(feat: &Tensor, a: &[f64], c: usize) -> Tensor {
    let mut out = Tensor::zeros_like(feat);
    for col in 0..c {
        let dst = out.channel_mut(col);
        for b in 0..c {
            let s = a[b * c + col];
            if s == 0.0 {
                continue;
            }
            for (d, v) in dst.iter_mut().zip(feat.channel(b)) {
                *d += s * v;
            }
        }
    }
    out
}

/// Returns `(dfeat, dH)`.
pub fn style_correction_backward(
    feat: &Tensor,
    h: &Tensor,
    mask: Option<&LayerMask>,
    dy: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let c = check_h("style_correction_backward", feat, h)?;
    let g = gram(feat, mask)?;
    let a: Vec<f64> = g.data().iter().zip(h.data()).map(|(g, h)| g - h).collect();
    // dF = dY·Aᵀ, so dF[:, b] = Σ_col A[b, col]·dY[:, col].
    let mut at = vec![0.0; c * c];
    for r in 0..c {
        for s in 0..c {
            at[s * c + r] = a[r * c + s];
        }
    }
    let mut dfeat = right_multiply(dy, &at, c);
    let mut da = vec![0.0; c * c];
    for b in 0..c {
        for col in 0..c {
            da[b * c + col] = dot(feat.channel(b), dy.channel(col));
        }
    }
    let da = Tensor::matrix(c, c, da)?;
    dfeat.add_assign(&gram_backward(feat, mask, &da)?);
    Ok((dfeat, da.scale(-1.0)))
}
