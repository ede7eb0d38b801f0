#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unrolled_style::{GradTape, Ops, Tensor, Var};

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(c: usize, h: usize, w: usize, lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let data = (0..c * h * w).map(|_| r.gen_range(lo..hi)).collect();
    Tensor::from_vec(c, h, w, data).unwrap()
}

/// Pixels in [0.1, 0.9], away from the clipping kinks.
pub fn image(h: usize, w: usize, seed: u64) -> Tensor {
    uniform(3, h, w, 0.1, 0.9, seed)
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares tape gradients of a scalar function of `inputs` with central
/// differences on every coordinate; returns the worst relative error.
pub fn check_all<F>(inputs: &[Tensor], f: F, floor: f64) -> f64
where
    F: Fn(&mut GradTape, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor]| {
        let mut t = GradTape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.param(x.clone())).collect();
        let out = f(&mut t, &vs);
        t.scalar(&out)
    };
    let mut tape = GradTape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let g = grads.wrt_or_zeros(*v, &inputs[k]);
        for i in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_STEP;
            let num = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(g.data()[i], num, floor));
        }
    }
    worst
}
