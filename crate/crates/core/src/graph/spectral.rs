//! Spectral tools on a [`SparseLaplacian`]: largest-eigenvalue estimation,
//! Jackson-damped Chebyshev low-pass filters, and the dense exact projector
//! used as an oracle on small graphs.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::laplacian::SparseLaplacian;
use super::ChannelFilter;
use crate::error::{Error, Result};

pub const DEFAULT_CHEB_ORDER: usize = 5;
pub const DEFAULT_LAMBDA_STAR_FRACTION: f64 = 0.2;
pub const POWER_ITERATION_SEED: u64 = 0x5eed_1a4b;
const POWER_MAX_ITERS: usize = 200;
const POWER_REL_TOL: f64 = 1e-4;
const SAFETY: f64 = 1.01;

/// Oracle scale limit for dense eigendecompositions.
pub const EXACT_PROJECTOR_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaMax {
    /// Rayleigh-quotient estimate inflated by 1%.
    pub value: f64,
    pub iterations: usize,
    /// Set when the matrix annihilated the iterate (zero matrix).
    pub degenerate: bool,
}

/// Power iteration from a fixed-seed start vector.
pub fn estimate_lambda_max(l: &SparseLaplacian) -> LambdaMax {
    let n = l.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut rq = 0.0;
    for it in 1..=POWER_MAX_ITERS {
        l.matvec_into(&v, &mut w);
        rq = dot(&v, &w);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return LambdaMax {
                value: 0.0,
                iterations: it,
                degenerate: true,
            };
        }
        if (rq - prev).abs() <= POWER_REL_TOL * rq.abs() {
            return LambdaMax {
                value: rq * SAFETY,
                iterations: it,
                degenerate: false,
            };
        }
        prev = rq;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    LambdaMax {
        value: rq * SAFETY,
        iterations: POWER_MAX_ITERS,
        degenerate: false,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Chebyshev coefficients of the step `1{λ̃ ≤ b}` on `[−1, 1]`.
pub fn step_coefficients(order: usize, b: f64) -> Vec<f64> {
    let theta = b.clamp(-1.0, 1.0).acos();
    (0..=order)
        .map(|j| {
            if j == 0 {
                (PI - theta) / PI
            } else {
                -2.0 / (PI * j as f64) * (j as f64 * theta).sin()
            }
        })
        .collect()
}

/// Jackson damping factors `g_0..g_p` (with `g_0 = 1`).
pub fn jackson_factors(order: usize) -> Vec<f64> {
    let p2 = (order + 2) as f64;
    let a = PI / p2;
    (0..=order)
        .map(|j| {
            let jf = j as f64;
            ((1.0 - jf / p2) * a.sin() * (jf * a).cos() + (1.0 / p2) * a.cos() * (jf * a).sin())
                / a.sin()
        })
        .collect()
}

/// Damped Chebyshev approximation of the ideal low-pass `1{λ ≤ λ*}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebFilter {
    order: usize,
    lambda_star: f64,
    lambda_max: f64,
    coeffs: Vec<f64>,
}

impl ChebFilter {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Damped coefficients `d_j = g_j·c_j`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// The polynomial response `r(λ) = Σ_j d_j T_j(2λ/λ_max − 1)`.
    pub fn response(&self, lambda: f64) -> f64 {
        let t = 2.0 * lambda / self.lambda_max - 1.0;
        let (mut prev, mut cur) = (1.0, t);
        let mut r = self.coeffs[0];
        if self.order >= 1 {
            r += self.coeffs[1] * t;
        }
        for d in &self.coeffs[2.min(self.coeffs.len())..] {
            let next = 2.0 * t * cur - prev;
            prev = cur;
            cur = next;
            r += d * cur;
        }
        r
    }

    /// True when the filter passes every eigenvalue up to `λ_max` unchanged.
    pub fn is_identity(&self) -> bool {
        self.coeffs[0] == 1.0 && self.coeffs[1..].iter().all(|&d| d == 0.0)
    }
}

pub fn jackson_cheb_coeffs(order: usize, lambda_star: f64, lambda_max: f64) -> Result<ChebFilter> {
    if order < 1 {
        return Err(Error::InvalidArgument("Chebyshev order must be at least 1".into()));
    }
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidArgument("λ_max must be positive".into()));
    }
    if !(lambda_star > 0.0) || lambda_star > lambda_max {
        return Err(Error::InvalidArgument(format!(
            "λ* = {lambda_star} must lie in (0, λ_max = {lambda_max}]"
        )));
    }
    let b = 2.0 * lambda_star / lambda_max - 1.0;
    let c = step_coefficients(order, b);
    let g = jackson_factors(order);
    let coeffs = c.iter().zip(&g).map(|(c, g)| c * g).collect();
    Ok(ChebFilter {
        order,
        lambda_star,
        lambda_max,
        coeffs,
    })
}

/// `Σ_j d_j T_j(L̃)·signal` via the three-term recurrence; exactly `order`
/// sparse products.
pub fn apply_poly_filter(l: &SparseLaplacian, f: &ChebFilter, signal: &[f64]) -> Result<Vec<f64>> {
    let n = l.dim();
    if signal.len() != n {
        return Err(Error::shape("apply_poly_filter", n, signal.len()));
    }
    let scale = 2.0 / f.lambda_max;
    let d = &f.coeffs;
    let mut out: Vec<f64> = signal.iter().map(|v| d[0] * v).collect();
    let mut prev = signal.to_vec();
    let mut cur = vec![0.0; n];
    l.matvec_into(&prev, &mut cur);
    for (c, x) in cur.iter_mut().zip(&prev) {
        *c = scale * *c - x;
    }
    for (o, c) in out.iter_mut().zip(&cur) {
        *o += d[1] * c;
    }
    let mut tmp = vec![0.0; n];
    for &dj in &d[2..] {
        l.matvec_into(&cur, &mut tmp);
        for i in 0..n {
            tmp[i] = 2.0 * (scale * tmp[i] - cur[i]) - prev[i];
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut tmp);
        for (o, c) in out.iter_mut().zip(&cur) {
            *o += dj * c;
        }
    }
    Ok(out)
}

/// A Chebyshev filter bound to its Laplacian.
#[derive(Clone, Debug)]
pub struct PolyGraphFilter {
    laplacian: Arc<SparseLaplacian>,
    cheb: ChebFilter,
}

impl PolyGraphFilter {
    pub fn new(laplacian: Arc<SparseLaplacian>, cheb: ChebFilter) -> Self {
        PolyGraphFilter { laplacian, cheb }
    }

    /// Estimates `λ_max` and builds the order-`order` filter at `λ* = frac·λ_max`.
    pub fn low_pass(laplacian: Arc<SparseLaplacian>, frac: f64, order: usize) -> Result<Self> {
        let est = estimate_lambda_max(&laplacian);
        if est.degenerate {
            return Err(Error::InvalidArgument("Laplacian is the zero matrix".into()));
        }
        let cheb = jackson_cheb_coeffs(order, frac * est.value, est.value)?;
        Ok(PolyGraphFilter { laplacian, cheb })
    }

    pub fn laplacian(&self) -> &Arc<SparseLaplacian> {
        &self.laplacian
    }

    pub fn cheb(&self) -> &ChebFilter {
        &self.cheb
    }
}

impl ChannelFilter for PolyGraphFilter {
    fn len(&self) -> usize {
        self.laplacian.dim()
    }

    fn apply(&self, signal: &[f64]) -> Vec<f64> {
        apply_poly_filter(&self.laplacian, &self.cheb, signal).expect("length checked by caller")
    }
}

/// Orthogonal projector onto the eigenvectors with eigenvalue `≤ λ*`.
#[derive(Clone, Debug)]
pub struct ExactProjector {
    n: usize,
    k: usize,
    eigenvalues: Vec<f64>,
    /// `n × k` column-major basis; `None` when `k = n`.
    basis: Option<nalgebra::DMatrix<f64>>,
}

impl ExactProjector {
    pub fn new(l: &SparseLaplacian, lambda_star: f64) -> Result<Self> {
        let n = l.dim();
        if n > EXACT_PROJECTOR_LIMIT {
            return Err(Error::TooLarge {
                n,
                limit: EXACT_PROJECTOR_LIMIT,
            });
        }
        let eig = nalgebra::SymmetricEigen::new(l.to_dense());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let k = eigenvalues.iter().filter(|&&v| v <= lambda_star).count();
        let basis = (k < n).then(|| {
            nalgebra::DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])])
        });
        Ok(ExactProjector {
            n,
            k,
            eigenvalues,
            basis,
        })
    }

    /// Number of retained eigenvectors.
    pub fn rank(&self) -> usize {
        self.k
    }

    /// Ascending spectrum of the Laplacian.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.basis {
            None => x.to_vec(),
            Some(u) => {
                let v = nalgebra::DVector::from_column_slice(x);
                let coef = u.tr_mul(&v);
                (u * coef).as_slice().to_vec()
            }
        }
    }

    /// `‖x − P·x‖²`.
    pub fn high_band_energy(&self, x: &[f64]) -> f64 {
        let p = self.project(x);
        x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        match &self.basis {
            None => nalgebra::DMatrix::identity(self.n, self.n),
            Some(u) => u * u.transpose(),
        }
    }
}

impl ChannelFilter for ExactProjector {
    fn len(&self) -> usize {
        self.n
    }

    fn apply(&self, signal: &[f64]) -> Vec<f64> {
        self.project(signal)
    }
}
