//! Deterministic inputs shared by the benchmarks.

use unrolled_style::net::CANONICAL_SCHEDULE;
use unrolled_style::{Tensor, UnrolledModel};

/// Smooth RGB test image with values in [0.1, 0.9].
pub fn test_image(height: usize, width: usize) -> Tensor {
    Tensor::from_fn(3, height, width, |c, y, x| {
        let (u, v) = (x as f64 / width as f64, y as f64 / height as f64);
        0.5 + 0.4 * ((c + 1) as f64 * 7.0 * u + 5.0 * v).sin() * (3.0 * v - c as f64).cos()
    })
}

/// Canonical network with Xavier weights and small nonzero style matrices,
/// so every stage does real work.
pub fn test_model() -> UnrolledModel {
    let mut m = UnrolledModel::xavier(CANONICAL_SCHEDULE, 1, 1);
    for (k, h) in m.styles[0].h.iter_mut().flatten().enumerate() {
        let c = h.height();
        *h = Tensor::from_fn(1, c, c, |_, i, j| 0.01 * (((i * 31 + j * 17 + k) % 13) as f64 / 13.0 - 0.5));
    }
    m
}
