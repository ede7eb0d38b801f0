use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `√(6/(fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fills `w` with draws from `U[−b, b]`, `b = xavier_bound(fan_in, fan_out)`.
pub fn xavier_fill(w: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    let b = xavier_bound(fan_in, fan_out);
    for v in w {
        *v = rng.gen_range(-b..=b);
    }
}

/// Xavier-uniform conv weights of shape `(out, in, k, k)`.
///
/// Fans follow the channels × kernel-area convention:
/// `fan_in = in·k²`, `fan_out = out·k²`.
pub fn xavier_init(out_ch: usize, in_ch: usize, ksize: usize, seed: u64) -> Vec<f64> {
    let mut w = vec![0.0; out_ch * in_ch * ksize * ksize];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_fill(&mut w, in_ch * ksize * ksize, out_ch * ksize * ksize, &mut rng);
    w
}
