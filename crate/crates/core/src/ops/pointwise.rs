use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn clip_unit(input: &Tensor) -> Tensor {
    input.map(|v| v.clamp(0.0, 1.0))
}

/// Passes `dy` where the input was strictly positive.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    gate(x, dy, |v| v > 0.0)
}

/// Passes `dy` where the input was strictly inside (0, 1).
pub fn clip_unit_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    gate(x, dy, |v| v > 0.0 && v < 1.0)
}

fn gate(x: &Tensor, dy: &Tensor, open: impl Fn(f64) -> bool) -> Tensor {
    let mut out = dy.clone();
    for (g, &v) in out.data_mut().iter_mut().zip(x.data()) {
        if !open(v) {
            *g = 0.0;
        }
    }
    out
}
