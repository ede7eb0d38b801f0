//! Color-guided edge-preserving smoothing.
//!
//! The output is locally an affine function of the 3-channel guide, fitted by
//! ridge regression in every `(2r+1)²` window. Box means use integral images
//! over windows clamped to the image, so cost is linear in the pixel count.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_GF_RADIUS: usize = 8;
pub const DEFAULT_GF_EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidedFilterParams {
    pub radius: usize,
    pub eps: f64,
}

impl Default for GuidedFilterParams {
    fn default() -> Self {
        GuidedFilterParams {
            radius: DEFAULT_GF_RADIUS,
            eps: DEFAULT_GF_EPS,
        }
    }
}

impl GuidedFilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 || !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "guided filter needs radius ≥ 1 and eps > 0 (got {}, {})",
                self.radius, self.eps
            )));
        }
        Ok(())
    }
}

/// Mean over the clamped window around every pixel, with the number of
/// additions performed.
fn box_mean(src: &[f64], h: usize, w: usize, r: usize) -> (Vec<f64>, usize) {
    let stride = w + 1;
    let mut integral = vec![0.0; (h + 1) * stride];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += src[y * w + x];
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let s = integral[y1 * stride + x1] - integral[y0 * stride + x1] - integral[y1 * stride + x0]
                + integral[y0 * stride + x0];
            out[y * w + x] = s / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    (out, 2 * h * w + 3 * h * w)
}

/// Filters every channel of `p` guided by `guide`.
pub fn guided_filter(p: &Tensor, guide: &Tensor, params: &GuidedFilterParams) -> Result<Tensor> {
    guided_filter_counted(p, guide, params).map(|(t, _)| t)
}

/// Like [`guided_filter`], also returning the number of box-sum additions.
pub fn guided_filter_counted(
    p: &Tensor,
    guide: &Tensor,
    params: &GuidedFilterParams,
) -> Result<(Tensor, usize)> {
    params.validate()?;
    if guide.channels() != 3 {
        return Err(Error::shape("guided_filter", 3, guide.channels()));
    }
    if (p.height(), p.width()) != (guide.height(), guide.width()) {
        return Err(Error::shape(
            "guided_filter",
            format!("{}×{}", guide.height(), guide.width()),
            format!("{}×{}", p.height(), p.width()),
        ));
    }
    let (h, w, r) = (p.height(), p.width(), params.radius);
    let n = h * w;
    let mut ops = 0;
    let mut mean = |v: &[f64]| {
        let (m, k) = box_mean(v, h, w, r);
        ops += k;
        m
    };

    let gi: Vec<&[f64]> = (0..3).map(|c| guide.channel(c)).collect();
    let mu: Vec<Vec<f64>> = gi.iter().map(|g| mean(g)).collect();
    // Guide covariance, upper triangle in (0,0) (0,1) (0,2) (1,1) (1,2) (2,2) order.
    let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    let sigma: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(a, b)| {
            let prod: Vec<f64> = gi[a].iter().zip(gi[b]).map(|(x, y)| x * y).collect();
            let m = mean(&prod);
            (0..n).map(|i| m[i] - mu[a][i] * mu[b][i]).collect()
        })
        .collect();
    let inv: Vec<Matrix3<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = |k: usize| sigma[k][i];
            let m = Matrix3::new(
                s(0) + params.eps, s(1), s(2),
                s(1), s(3) + params.eps, s(4),
                s(2), s(4), s(5) + params.eps,
            );
            m.try_inverse().unwrap_or_else(Matrix3::zeros)
        })
        .collect();

    let mut out = Tensor::zeros(p.channels(), h, w);
    for c in 0..p.channels() {
        let pc = p.channel(c);
        let mp = mean(pc);
        let cov: Vec<Vec<f64>> = (0..3)
            .map(|a| {
                let prod: Vec<f64> = gi[a].iter().zip(pc).map(|(x, y)| x * y).collect();
                let m = mean(&prod);
                (0..n).map(|i| m[i] - mu[a][i] * mp[i]).collect()
            })
            .collect();
        let mut a = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut b = vec![0.0; n];
        for i in 0..n {
            let ak = inv[i] * Vector3::new(cov[0][i], cov[1][i], cov[2][i]);
            for k in 0..3 {
                a[k][i] = ak[k];
            }
            b[i] = mp[i] - ak[0] * mu[0][i] - ak[1] * mu[1][i] - ak[2] * mu[2][i];
        }
        let ma: Vec<Vec<f64>> = a.iter().map(|v| mean(v)).collect();
        let mb = mean(&b);
        let dst = out.channel_mut(c);
        for i in 0..n {
            dst[i] = ma[0][i] * gi[0][i] + ma[1][i] * gi[1][i] + ma[2][i] * gi[2][i] + mb[i];
        }
    }
    if !out.all_finite() {
        return Err(Error::NonFinite("guided_filter".into()));
    }
    Ok((out, ops))
}
