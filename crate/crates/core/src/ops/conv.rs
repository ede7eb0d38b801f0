//! 2-D convolution with reflection padding, plus its vector-Jacobian product.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{reflect_index, Tensor};

/// A convolution with `out_ch × in_ch × k × k` weights, per-channel bias and
/// an optional trailing ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub ksize: usize,
    /// `(out, in, ky, kx)` row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

impl ConvLayer {
    pub fn zeros(in_ch: usize, out_ch: usize, ksize: usize, relu: bool) -> Self {
        assert!(ksize % 2 == 1, "kernel size must be odd");
        ConvLayer {
            in_ch,
            out_ch,
            ksize,
            weight: vec![0.0; out_ch * in_ch * ksize * ksize],
            bias: vec![0.0; out_ch],
            relu,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn weight_tensor(&self) -> Tensor {
        Tensor::from_vec(
            self.out_ch * self.in_ch,
            self.ksize,
            self.ksize,
            self.weight.clone(),
        )
        .expect("consistent conv weight shape")
    }

    pub fn bias_tensor(&self) -> Tensor {
        Tensor::from_vec(self.out_ch, 1, 1, self.bias.clone()).expect("consistent bias shape")
    }

    /// Xavier fan convention: fan = channels × kernel area.
    pub fn fans(&self) -> (usize, usize) {
        let area = self.ksize * self.ksize;
        (self.in_ch * area, self.out_ch * area)
    }
}

/// Convolution followed by the layer's activation.
pub fn conv2d_reflect(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    if input.channels() != layer.in_ch {
        return Err(Error::shape(
            "conv2d_reflect",
            format!("{} input channels", layer.in_ch),
            input.channels(),
        ));
    }
    let out = conv2d_forward(input, &layer.weight_tensor(), &layer.bias_tensor())?;
    Ok(if layer.relu {
        super::pointwise::relu(&out)
    } else {
        out
    })
}

fn kernel_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let out_ch = b.channels();
    let in_ch = x.channels();
    let k = w.height();
    if w.width() != k || k.is_multiple_of(2) {
        return Err(Error::shape("conv2d", "odd square kernel", w.shape()));
    }
    if w.channels() != out_ch * in_ch || b.height() != 1 || b.width() != 1 {
        return Err(Error::shape(
            "conv2d",
            format!("{}×{} kernel for {} inputs", out_ch, in_ch, in_ch),
            format!("weight {} bias {}", w.shape(), b.shape()),
        ));
    }
    Ok((in_ch, out_ch, k))
}

/// `y[o] = b[o] + Σ_c w[o,c] ⋆ reflect_pad(x[c])`.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (in_ch, out_ch, k) = kernel_dims(x, w, b)?;
    let pad = k / 2;
    let (h, wd) = (x.height(), x.width());
    let padded = x.reflect_pad(pad, pad, pad, pad);
    let pw = wd + 2 * pad;
    let plane = h * wd;
    let mut out = Tensor::zeros(out_ch, h, wd);
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(o, dst)| {
            dst.fill(b.data()[o]);
            for c in 0..in_ch {
                let src = padded.channel(c);
                let kern = &w.data()[(o * in_ch + c) * k * k..(o * in_ch + c + 1) * k * k];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = kern[ky * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for y in 0..h {
                            let row = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + wd];
                            let drow = &mut dst[y * wd..(y + 1) * wd];
                            for (d, s) in drow.iter_mut().zip(row) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Gradients `(dx, dw, db)` of `conv2d_forward` given the upstream gradient.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (in_ch, out_ch, k) = kernel_dims(x, w, b)?;
    let pad = k / 2;
    let (h, wd) = (x.height(), x.width());
    if dy.channels() != out_ch || dy.height() != h || dy.width() != wd {
        return Err(Error::shape(
            "conv2d_backward",
            format!("({out_ch}, {h}, {wd})"),
            dy.shape(),
        ));
    }
    let padded = x.reflect_pad(pad, pad, pad, pad);
    let (ph, pw) = (h + 2 * pad, wd + 2 * pad);

    let mut dw = Tensor::zeros(out_ch * in_ch, k, k);
    dw.data_mut()
        .par_chunks_mut(in_ch * k * k)
        .enumerate()
        .for_each(|(o, dst)| {
            let g = dy.channel(o);
            for c in 0..in_ch {
                let src = padded.channel(c);
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = 0.0;
                        for y in 0..h {
                            let row = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + wd];
                            let grow = &g[y * wd..(y + 1) * wd];
                            acc += row.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                        }
                        dst[(c * k + ky) * k + kx] = acc;
                    }
                }
            }
        });

    let db_data: Vec<f64> = (0..out_ch).map(|o| dy.channel(o).iter().sum()).collect();
    let db = Tensor::from_vec(out_ch, 1, 1, db_data)?;

    let mut dx = Tensor::zeros(in_ch, h, wd);
    dx.data_mut()
        .par_chunks_mut(h * wd)
        .enumerate()
        .for_each(|(c, dst)| {
            let mut dp = vec![0.0; ph * pw];
            for o in 0..out_ch {
                let g = dy.channel(o);
                let kern = &w.data()[(o * in_ch + c) * k * k..(o * in_ch + c + 1) * k * k];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = kern[ky * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for y in 0..h {
                            let prow = &mut dp[(y + ky) * pw + kx..(y + ky) * pw + kx + wd];
                            let grow = &g[y * wd..(y + 1) * wd];
                            for (d, s) in prow.iter_mut().zip(grow) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
            // Fold the padded border back onto the pixels it mirrors.
            for py in 0..ph {
                let sy = reflect_index(py as isize - pad as isize, h);
                for px in 0..pw {
                    let sx = reflect_index(px as isize - pad as isize, wd);
                    dst[sy * wd + sx] += dp[py * pw + px];
                }
            }
        });
    Ok((dx, dw, db))
}
