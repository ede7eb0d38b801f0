//! Content, style and total-variation terms and the full training objective.
//!
//! The objective evaluated on an image `X` is
//! `λ_c·L_c(clip(X)) + λ_s·L_s(clip(X)) + λ_TV·TV(clip(X))`.

use crate::autodiff::{Eager, Ops};
use crate::error::{Error, Result};
use crate::ops::gram;
use crate::perceptual::extractor::FeatureExtractor;
use crate::perceptual::mask::MaskPyramid;
use crate::tensor::Tensor;

pub const DEFAULT_CONTENT_WEIGHT: f64 = 0.025;
pub const DEFAULT_TV_WEIGHT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub content: f64,
    pub tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            content: DEFAULT_CONTENT_WEIGHT,
            tv: DEFAULT_TV_WEIGHT,
        }
    }
}

/// Masked, normalized Gram matrices of a style image on every style layer.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleTarget {
    grams: Vec<Tensor>,
    lambda_s: f64,
}

impl StyleTarget {
    pub fn new(style: &Tensor, style_mask: Option<&MaskPyramid>, fe: &FeatureExtractor) -> Result<Self> {
        let feats = fe.extract_features(style)?;
        Self::from_features(&feats, style_mask, fe)
    }

    pub fn from_features(
        feats: &[Tensor],
        style_mask: Option<&MaskPyramid>,
        fe: &FeatureExtractor,
    ) -> Result<Self> {
        let grams = fe
            .style_layers()
            .iter()
            .map(|&l| gram(&feats[l], style_mask.and_then(|m| m.level(l))))
            .collect::<Result<Vec<_>>>()?;
        let lambda_s = lambda_from_grams(&grams)?;
        Ok(StyleTarget { grams, lambda_s })
    }

    /// Rebuilds a target from stored Grams, recomputing `λ_s`.
    pub fn from_grams(grams: Vec<Tensor>) -> Result<Self> {
        let lambda_s = lambda_from_grams(&grams)?;
        Ok(StyleTarget { grams, lambda_s })
    }

    pub fn grams(&self) -> &[Tensor] {
        &self.grams
    }

    pub fn lambda_s(&self) -> f64 {
        self.lambda_s
    }

    /// Replaces the automatic style weight.
    pub fn with_lambda_s(mut self, lambda_s: f64) -> Result<Self> {
        if !(lambda_s >= 0.0) || !lambda_s.is_finite() {
            return Err(Error::InvalidArgument(format!("style weight {lambda_s} must be ≥ 0")));
        }
        self.lambda_s = lambda_s;
        Ok(self)
    }
}

fn lambda_from_grams(grams: &[Tensor]) -> Result<f64> {
    let mean: f64 = grams
        .iter()
        .map(|g| g.norm_sq() / (g.height() * g.height()) as f64)
        .sum::<f64>()
        / grams.len() as f64;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::DegenerateStyle);
    }
    Ok(1.0 / mean)
}

/// `λ_s = [ |I_s|⁻¹ Σ_ℓ c_ℓ⁻² ‖G_ℓ‖²_F ]⁻¹` for the (masked) style Grams.
pub fn style_weight_auto(
    style: &Tensor,
    style_mask: Option<&MaskPyramid>,
    fe: &FeatureExtractor,
) -> Result<f64> {
    Ok(StyleTarget::new(style, style_mask, fe)?.lambda_s())
}

/// Unweighted loss terms plus the weights that combine them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub content: f64,
    pub style: f64,
    pub tv: f64,
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_tv: f64,
}

impl LossBreakdown {
    pub fn weighted_content(&self) -> f64 {
        self.lambda_c * self.content
    }

    pub fn weighted_style(&self) -> f64 {
        self.lambda_s * self.style
    }

    pub fn weighted_tv(&self) -> f64 {
        self.lambda_tv * self.tv
    }

    pub fn total(&self) -> f64 {
        self.weighted_content() + self.weighted_style() + self.weighted_tv()
    }
}

pub fn content_loss<O: Ops>(
    ops: &mut O,
    x_feats: &[O::Var],
    c_feats: &[Tensor],
    fe: &FeatureExtractor,
) -> Result<O::Var> {
    let layers = fe.content_layers();
    let mut terms = Vec::with_capacity(layers.len());
    for &l in layers {
        terms.push((1.0 / layers.len() as f64, ops.content_term(&x_feats[l], &c_feats[l])?));
    }
    ops.weighted_sum(&terms)
}

pub fn style_loss<O: Ops>(
    ops: &mut O,
    x_feats: &[O::Var],
    target: &StyleTarget,
    content_mask: Option<&MaskPyramid>,
    fe: &FeatureExtractor,
) -> Result<O::Var> {
    let layers = fe.style_layers();
    let mut terms = Vec::with_capacity(layers.len());
    for (i, &l) in layers.iter().enumerate() {
        let mask = content_mask.and_then(|m| m.level(l));
        let t = ops.style_term(&x_feats[l], &target.grams[i], mask)?;
        terms.push((1.0 / layers.len() as f64, t));
    }
    ops.weighted_sum(&terms)
}

pub fn tv_loss<O: Ops>(ops: &mut O, x: &O::Var) -> Result<O::Var> {
    ops.tv(x)
}

/// Handles to the scalar terms recorded by [`Objective::record`].
pub struct LossVars<V> {
    pub total: V,
    pub content: V,
    pub style: V,
    pub tv: V,
}

/// The full objective for one content image and one style.
#[derive(Clone, Debug)]
pub struct Objective<'a> {
    fe: &'a FeatureExtractor,
    content_feats: Vec<Tensor>,
    target: &'a StyleTarget,
    weights: LossWeights,
    content_mask: Option<MaskPyramid>,
}

impl<'a> Objective<'a> {
    pub fn new(
        fe: &'a FeatureExtractor,
        content: &Tensor,
        target: &'a StyleTarget,
        weights: LossWeights,
        content_mask: Option<MaskPyramid>,
    ) -> Result<Self> {
        if target.grams.len() != fe.style_layers().len() {
            return Err(Error::shape(
                "Objective",
                fe.style_layers().len(),
                target.grams.len(),
            ));
        }
        Ok(Objective {
            fe,
            content_feats: fe.extract_features(content)?,
            target,
            weights,
            content_mask,
        })
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    pub fn target(&self) -> &StyleTarget {
        self.target
    }

    /// Records the objective on `x` (clipped to [0, 1] first).
    pub fn record<O: Ops>(&self, ops: &mut O, x: &O::Var) -> Result<LossVars<O::Var>> {
        let clipped = ops.clip_unit(x)?;
        let feats = self.fe.features_with(ops, &clipped)?;
        let content = content_loss(ops, &feats, &self.content_feats, self.fe)?;
        let style = style_loss(ops, &feats, self.target, self.content_mask.as_ref(), self.fe)?;
        let tv = tv_loss(ops, &clipped)?;
        let total = ops.weighted_sum(&[
            (self.weights.content, content.clone()),
            (self.target.lambda_s, style.clone()),
            (self.weights.tv, tv.clone()),
        ])?;
        Ok(LossVars {
            total,
            content,
            style,
            tv,
        })
    }

    pub fn evaluate(&self, x: &Tensor) -> Result<LossBreakdown> {
        let mut ops = Eager;
        let v = self.record(&mut ops, x)?;
        Ok(LossBreakdown {
            content: v.content.item(),
            style: v.style.item(),
            tv: v.tv.item(),
            lambda_c: self.weights.content,
            lambda_s: self.target.lambda_s,
            lambda_tv: self.weights.tv,
        })
    }
}

/// One-shot evaluation of the objective on `x4`.
pub fn total_loss(
    x4: &Tensor,
    content: &Tensor,
    target: &StyleTarget,
    fe: &FeatureExtractor,
    weights: LossWeights,
    content_mask: Option<&MaskPyramid>,
) -> Result<LossBreakdown> {
    Objective::new(fe, content, target, weights, content_mask.cloned())?.evaluate(x4)
}
