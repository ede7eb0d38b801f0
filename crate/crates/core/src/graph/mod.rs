//! Spectral graph filtering on matting Laplacians.
//!
//! Smoothness on the pixel graph of the content image is enforced by
//! low-pass filtering signals with a polynomial in the Laplacian, which only
//! needs sparse matrix-vector products.

pub mod laplacian;
pub mod pyramid;
pub mod spectral;

pub use laplacian::{matting_laplacian, SparseLaplacian, DEFAULT_MATTING_EPS};
pub use pyramid::{build_pyramid, FilterPyramid, LaplacianPyramid};
pub use spectral::{
    apply_poly_filter, estimate_lambda_max, jackson_cheb_coeffs, ChebFilter, ExactProjector,
    LambdaMax, PolyGraphFilter, DEFAULT_CHEB_ORDER, DEFAULT_LAMBDA_STAR_FRACTION, EXACT_PROJECTOR_LIMIT,
};

/// A linear, self-adjoint filter over the pixels of one image plane.
///
/// Self-adjointness lets the same `apply` serve as its own transpose when
/// differentiating through it.
pub trait ChannelFilter: Send + Sync + std::fmt::Debug {
    /// Signal length (pixel count).
    fn len(&self) -> usize;
    fn apply(&self, signal: &[f64]) -> Vec<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IdentityFilter {
    pub len: usize,
}

impl ChannelFilter for IdentityFilter {
    fn len(&self) -> usize {
        self.len
    }

    fn apply(&self, signal: &[f64]) -> Vec<f64> {
        signal.to_vec()
    }
}
