//! 2×2 average pooling and 2× bilinear upsampling (half-pixel centers).

use crate::error::{Error, Result};
use crate::tensor::{lerp_taps, Tensor};

pub fn avg_pool2(input: &Tensor) -> Result<Tensor> {
    let (h, w) = (input.height(), input.width());
    if h % 2 != 0 {
        return Err(Error::Indivisible {
            op: "avg_pool2",
            dim: h,
            divisor: 2,
        });
    }
    if w % 2 != 0 {
        return Err(Error::Indivisible {
            op: "avg_pool2",
            dim: w,
            divisor: 2,
        });
    }
    Ok(Tensor::from_fn(input.channels(), h / 2, w / 2, |c, y, x| {
        0.25 * (input.get(c, 2 * y, 2 * x)
            + input.get(c, 2 * y, 2 * x + 1)
            + input.get(c, 2 * y + 1, 2 * x)
            + input.get(c, 2 * y + 1, 2 * x + 1))
    }))
}

pub fn avg_pool2_backward(dy: &Tensor) -> Tensor {
    Tensor::from_fn(dy.channels(), dy.height() * 2, dy.width() * 2, |c, y, x| {
        0.25 * dy.get(c, y / 2, x / 2)
    })
}

pub fn bilinear_up2(input: &Tensor) -> Tensor {
    let (h, w) = (input.height(), input.width());
    let ys: Vec<_> = (0..2 * h).map(|i| lerp_taps(i, 0.5, h)).collect();
    let xs: Vec<_> = (0..2 * w).map(|j| lerp_taps(j, 0.5, w)).collect();
    Tensor::from_fn(input.channels(), 2 * h, 2 * w, |c, i, j| {
        let (y0, y1, fy) = ys[i];
        let (x0, x1, fx) = xs[j];
        let top = input.get(c, y0, x0) * (1.0 - fx) + input.get(c, y0, x1) * fx;
        let bot = input.get(c, y1, x0) * (1.0 - fx) + input.get(c, y1, x1) * fx;
        top * (1.0 - fy) + bot * fy
    })
}

/// Adjoint of [`bilinear_up2`]: scatters each output gradient onto its four taps.
pub fn bilinear_up2_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.height() / 2, dy.width() / 2);
    let ys: Vec<_> = (0..2 * h).map(|i| lerp_taps(i, 0.5, h)).collect();
    let xs: Vec<_> = (0..2 * w).map(|j| lerp_taps(j, 0.5, w)).collect();
    let mut dx = Tensor::zeros(dy.channels(), h, w);
    for c in 0..dy.channels() {
        let g = dy.channel(c);
        let d = dx.channel_mut(c);
        for (i, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (j, &(x0, x1, fx)) in xs.iter().enumerate() {
                let v = g[i * 2 * w + j];
                d[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                d[y0 * w + x1] += v * (1.0 - fy) * fx;
                d[y1 * w + x0] += v * fy * (1.0 - fx);
                d[y1 * w + x1] += v * fy * fx;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::testing::random_tensor;

    #[test]
    fn pool_block_mean() {
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avg_pool2(&x).unwrap().data(), &[2.5]);
    }

    #[test]
    fn pool_preserves_constants() {
        let x = Tensor::filled(2, 4, 6, 0.7);
        let y = avg_pool2(&x).unwrap();
        assert_eq!(y.shape(), crate::Shape::new(2, 2, 3));
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn pool_matches_blockwise_oracle() {
        let x = random_tensor(2, 6, 6, 9);
        let y = avg_pool2(&x).unwrap();
        for c in 0..2 {
            for by in 0..3 {
                for bx in 0..3 {
                    let mut s = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            s += x.get(c, 2 * by + dy, 2 * bx + dx);
                        }
                    }
                    assert!((y.get(c, by, bx) - s / 4.0).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn pool_rejects_odd() {
        assert!(avg_pool2(&Tensor::zeros(1, 3, 4)).is_err());
        assert!(avg_pool2(&Tensor::zeros(1, 4, 5)).is_err());
    }

    #[test]
    fn upsample_constant_and_degenerate() {
        let x = Tensor::filled(3, 3, 5, 0.25);
        assert!(bilinear_up2(&x).data().iter().all(|&v| v == 0.25));
        let one = Tensor::filled(1, 1, 1, 4.5);
        assert_eq!(bilinear_up2(&one).data(), &[4.5; 4]);
    }

    #[test]
    fn upsample_half_pixel_mapping() {
        let x = Tensor::from_vec(1, 1, 2, vec![0.0, 1.0]).unwrap();
        let y = bilinear_up2(&x);
        assert_eq!(y.shape(), crate::Shape::new(1, 2, 4));
        let row: Vec<f64> = (0..4).map(|j| y.get(0, 0, j)).collect();
        assert_eq!(row, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn upsample_backward_is_adjoint() {
        let x = random_tensor(2, 3, 4, 3);
        let g = random_tensor(2, 6, 8, 4);
        let lhs: f64 = bilinear_up2(&x).data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(bilinear_up2_backward(&g).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
