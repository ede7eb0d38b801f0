//! Sparse matting Laplacian in compressed-row layout.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_MATTING_EPS: f64 = 1e-5;

/// Pixels within ±2 rows/columns can share a 3×3 window.
const REACH: usize = 2;
const SLOTS: usize = (2 * REACH + 1) * (2 * REACH + 1);

pub struct SparseLaplacian {
    height: usize,
    width: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    matvecs: AtomicUsize,
}

impl Clone for SparseLaplacian {
    fn clone(&self) -> Self {
        SparseLaplacian {
            height: self.height,
            width: self.width,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self.vals.clone(),
            matvecs: AtomicUsize::new(0),
        }
    }
}

impl std::fmt::Debug for SparseLaplacian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLaplacian")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("nnz", &self.vals.len())
            .finish()
    }
}

impl SparseLaplacian {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    /// `height × width` must equal the dimension.
    pub fn from_triplets(
        height: usize,
        width: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let n = height * width;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({i}, {j}) outside dimension {n}"
                )));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|&(j, _)| j);
            for (j, v) in r {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(SparseLaplacian {
            height,
            width,
            row_ptr,
            cols,
            vals,
            matvecs: AtomicUsize::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.vals.iter().all(|&v| v == 0.0)
    }

    /// `out = L·x`. Each call is counted.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.matvecs.fetch_add(1, Ordering::Relaxed);
        for (i, o) in out.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *o = self.cols[r.clone()]
                .iter()
                .zip(&self.vals[r])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.matvec_into(x, &mut out);
        out
    }

    /// Number of sparse matrix-vector products performed so far.
    pub fn matvec_count(&self) -> usize {
        self.matvecs.load(Ordering::Relaxed)
    }

    pub fn reset_matvec_count(&self) {
        self.matvecs.store(0, Ordering::Relaxed);
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Text export, one `i j value` line per stored entry, 0-indexed.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                writeln!(out, "{i} {j} {v:e}")?;
            }
        }
        Ok(())
    }
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let inv_det = 1.0 / det;
    let c11 = m[0][0] * m[2][2] - m[0][2] * m[2][0];
    let c12 = m[0][1] * m[2][0] - m[0][0] * m[2][1];
    let c22 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let c10 = m[0][2] * m[2][1] - m[0][1] * m[2][2];
    let c20 = m[0][1] * m[1][2] - m[0][2] * m[1][1];
    let c21 = m[0][2] * m[1][0] - m[0][0] * m[1][2];
    // Symmetric input: average mirrored cofactors so the inverse is exactly symmetric.
    let s01 = 0.5 * (c01 + c10);
    let s02 = 0.5 * (c02 + c20);
    let s12 = 0.5 * (c12 + c21);
    [
        [c00 * inv_det, s01 * inv_det, s02 * inv_det],
        [s01 * inv_det, c11 * inv_det, s12 * inv_det],
        [s02 * inv_det, s12 * inv_det, c22 * inv_det],
    ]
}

/// Closed-form matting Laplacian over all 3×3 windows fully inside the image.
///
/// `L_ij = Σ_k [δ_ij − (1 + (I_i − μ_k)ᵀ(Σ_k + ε/9·I)⁻¹(I_j − μ_k))/9]`.
pub fn matting_laplacian(image: &Tensor, epsilon: f64) -> Result<SparseLaplacian> {
    if image.channels() != 3 {
        return Err(Error::shape("matting_laplacian", "3 channels", image.channels()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("matting epsilon must be positive".into()));
    }
    let (h, w) = (image.height(), image.width());
    for dim in [h, w] {
        if dim < 3 {
            return Err(Error::DimensionTooSmall {
                op: "matting_laplacian",
                dim,
                min: 3,
            });
        }
    }
    let n = h * w;
    let mut acc = vec![0.0; n * SLOTS];
    let mut touched = vec![false; n * SLOTS];
    let slot = |dy: isize, dx: isize| -> usize {
        ((dy + REACH as isize) as usize) * (2 * REACH + 1) + (dx + REACH as isize) as usize
    };
    let pix = |y: usize, x: usize| -> [f64; 3] {
        [image.get(0, y, x), image.get(1, y, x), image.get(2, y, x)]
    };

    for cy in 1..h - 1 {
        for cx in 1..w - 1 {
            let mut coords = [(0usize, 0usize); 9];
            let mut colors = [[0.0; 3]; 9];
            let mut mu = [0.0; 3];
            for (k, (dy, dx)) in (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).enumerate() {
                let (y, x) = (cy + dy - 1, cx + dx - 1);
                coords[k] = (y, x);
                colors[k] = pix(y, x);
                for c in 0..3 {
                    mu[c] += colors[k][c] / 9.0;
                }
            }
            let mut cov = [[0.0; 3]; 3];
            for col in &colors {
                for a in 0..3 {
                    for b in 0..3 {
                        cov[a][b] += (col[a] - mu[a]) * (col[b] - mu[b]) / 9.0;
                    }
                }
            }
            for (a, row) in cov.iter_mut().enumerate() {
                row[a] += epsilon / 9.0;
            }
            let inv = invert3(cov);
            let centered: Vec<[f64; 3]> = colors
                .iter()
                .map(|c| [c[0] - mu[0], c[1] - mu[1], c[2] - mu[2]])
                .collect();
            for a in 0..9 {
                let ia = centered[a];
                let t = [
                    inv[0][0] * ia[0] + inv[0][1] * ia[1] + inv[0][2] * ia[2],
                    inv[1][0] * ia[0] + inv[1][1] * ia[1] + inv[1][2] * ia[2],
                    inv[2][0] * ia[0] + inv[2][1] * ia[1] + inv[2][2] * ia[2],
                ];
                for b in a..9 {
                    let ib = centered[b];
                    let q = t[0] * ib[0] + t[1] * ib[1] + t[2] * ib[2];
                    let delta = if a == b { 1.0 } else { 0.0 };
                    let v = delta - (1.0 + q) / 9.0;
                    let (ya, xa) = coords[a];
                    let (yb, xb) = coords[b];
                    let pa = ya * w + xa;
                    let pb = yb * w + xb;
                    let dy = yb as isize - ya as isize;
                    let dx = xb as isize - xa as isize;
                    let s_ab = pa * SLOTS + slot(dy, dx);
                    acc[s_ab] += v;
                    touched[s_ab] = true;
                    if a != b {
                        let s_ba = pb * SLOTS + slot(-dy, -dx);
                        acc[s_ba] += v;
                        touched[s_ba] = true;
                    }
                }
            }
        }
    }

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(n * 9);
    let mut vals = Vec::with_capacity(n * 9);
    row_ptr.push(0);
    for p in 0..n {
        let (y, x) = ((p / w) as isize, (p % w) as isize);
        for dy in -(REACH as isize)..=REACH as isize {
            for dx in -(REACH as isize)..=REACH as isize {
                let s = p * SLOTS + slot(dy, dx);
                if touched[s] {
                    let q = ((y + dy) as usize) * w + (x + dx) as usize;
                    cols.push(q);
                    vals.push(acc[s]);
                }
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseLaplacian {
        height: h,
        width: w,
        row_ptr,
        cols,
        vals,
        matvecs: AtomicUsize::new(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::testing::random_tensor;

    fn rand_image(seed: u64, h: usize, w: usize) -> Tensor {
        random_tensor(3, h, w, seed).map(|v| 0.5 + 0.5 * v)
    }

    #[test]
    fn constant_three_by_three() {
        let l = matting_laplacian(&Tensor::filled(3, 3, 3, 0.4), 1e-5).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let want = if i == j { 1.0 } else { 0.0 } - 1.0 / 9.0;
                assert!((l.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rows_sum_to_zero() {
        let l = matting_laplacian(&rand_image(3, 6, 7), 1e-5).unwrap();
        let ones = vec![1.0; l.dim()];
        let r = l.matvec(&ones);
        assert!(r.iter().all(|v| v.abs() < 1e-8));
        assert_eq!(l.matvec_count(), 1);
    }

    #[test]
    fn symmetric_and_banded() {
        let l = matting_laplacian(&rand_image(4, 6, 5), 1e-5).unwrap();
        for i in 0..l.dim() {
            assert!(l.row_nnz(i) <= 25);
            for (j, v) in l.row(i) {
                assert_eq!(v, l.get(j, i));
            }
        }
    }

    #[test]
    fn rejects_tiny_images() {
        assert!(matting_laplacian(&Tensor::zeros(3, 2, 5), 1e-5).is_err());
    }

    #[test]
    fn triplet_export_round_trip() {
        let l = matting_laplacian(&rand_image(5, 4, 4), 1e-5).unwrap();
        let mut buf = Vec::new();
        l.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let trip: Vec<(usize, usize, f64)> = text
            .lines()
            .map(|line| {
                let mut it = line.split_whitespace();
                (
                    it.next().unwrap().parse().unwrap(),
                    it.next().unwrap().parse().unwrap(),
                    it.next().unwrap().parse().unwrap(),
                )
            })
            .collect();
        let back = SparseLaplacian::from_triplets(4, 4, &trip).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(back.get(i, j), l.get(i, j));
            }
        }
    }
}
