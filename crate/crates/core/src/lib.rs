//! Fast style transfer by unrolling four steps of gradient descent into a
//! trainable network.
//!
//! The network replaces the style gradient of the classical objective with
//! learned per-level corrections. At inference time it can be restructured
//! without retraining: channelwise spectral filters on matting Laplacians make
//! the output photorealistic, binary masks restrict style statistics to
//! semantic regions, and a scalar intensity scales every step.
//!
//! ```
//! use unrolled_style::{stylize, InferenceOptions, Tensor, UnrolledModel};
//!
//! let model = UnrolledModel::canonical(1);
//! let content = Tensor::filled(3, 16, 16, 0.5);
//! let out = stylize(&content, &model, &InferenceOptions::default()).unwrap();
//! assert_eq!(out, content);
//! assert_eq!(model.param_count().total, 281_795);
//! ```

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod codec;
pub mod error;
pub mod graph;
pub mod guided;
pub mod net;
pub mod ops;
pub mod perceptual;
pub mod solver;
pub mod tensor;
pub mod train;

pub use autodiff::{Eager, GradTape, Gradients, Ops, Var};
pub use error::{Error, Result};
pub use graph::{
    build_pyramid, estimate_lambda_max, jackson_cheb_coeffs, matting_laplacian, ChannelFilter,
    ChebFilter, ExactProjector, FilterPyramid, LaplacianPyramid, SparseLaplacian,
};
pub use guided::{guided_filter, GuidedFilterParams};
pub use net::{
    stylize, FilterSource, InferenceOptions, ParamCount, PhotorealParams, UnrolledModel,
};
pub use ops::ConvLayer;
pub use perceptual::{
    propagate_mask, FeatureExtractor, LossBreakdown, LossWeights, MaskPyramid, Objective,
    StyleTarget,
};
pub use solver::{grad_descent_stylize, projected_grad_descent, DescentConfig, InitMode, Solution};
pub use tensor::{Shape, Tensor};
pub use train::{
    load_checkpoint, save_checkpoint, train, CheckpointMeta, StyleSpec, TrainConfig, TrainError,
    TrainOutcome,
};
