//! Forward kernels and vector-Jacobian products for the closed primitive set.
//!
//! These are plain functions on [`Tensor`](crate::Tensor)s. Composition and
//! differentiation go through [`crate::autodiff`].

pub mod conv;
pub mod gram;
pub mod loss;
pub mod pointwise;
pub mod sampling;

pub use conv::{conv2d_reflect, ConvLayer};
pub use gram::{gram, style_correction};
pub use loss::{content_term, style_term, tv};
pub use pointwise::{clip_unit, relu};
pub use sampling::{avg_pool2, bilinear_up2};
