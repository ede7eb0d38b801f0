//! Feature extraction and every term of the style-transfer objective.

pub mod extractor;
pub mod loss;
pub mod mask;

pub use extractor::FeatureExtractor;
pub use loss::{
    content_loss, style_loss, style_weight_auto, total_loss, tv_loss, LossBreakdown, LossWeights,
    DEFAULT_CONTENT_WEIGHT, DEFAULT_TV_WEIGHT,
    Objective, StyleTarget,
};
pub use mask::{propagate_mask, LayerMask, MaskPyramid};
