//! The four-step unrolled descent network and its runtime options.
//!
//! Each step computes features with the shared forward stack, replaces the
//! style gradient by a learned 1×1 correction per level, and maps the
//! corrections back to image space with the shared backward stack.

pub mod model;

use crate::autodiff::{Eager, Ops};
use crate::error::{Error, Result};
use crate::graph::{build_pyramid, FilterPyramid, DEFAULT_CHEB_ORDER, DEFAULT_LAMBDA_STAR_FRACTION, DEFAULT_MATTING_EPS};
use crate::guided::{guided_filter, GuidedFilterParams};
use crate::perceptual::mask::{propagate_mask, MaskPyramid};
use crate::tensor::Tensor;

pub use model::{
    BoundConv, BoundModel, ParamCount, StyleMatrices, UnrolledModel, CANONICAL_SCHEDULE,
    ITERATIONS, KERNEL, LEVELS,
};

/// Spatial sides must be multiples of this for the forward pyramid.
pub const SIZE_MULTIPLE: usize = 1 << (LEVELS - 1);
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_PHOTOREAL_ALPHA: f64 = 1.2;

fn conv<O: Ops>(ops: &mut O, x: &O::Var, c: &BoundConv<O::Var>) -> Result<O::Var> {
    ops.conv2d(x, &c.weight, &c.bias)
}

/// Forward features `h^f_1..h^f_4` of `x`.
pub fn forward_maps<O: Ops>(ops: &mut O, x: &O::Var, m: &BoundModel<O::Var>) -> Result<Vec<O::Var>> {
    let (h, w) = {
        let v = ops.value(x);
        (v.height(), v.width())
    };
    for dim in [h, w] {
        if dim % SIZE_MULTIPLE != 0 {
            return Err(Error::Indivisible {
                op: "forward_maps",
                dim,
                divisor: SIZE_MULTIPLE,
            });
        }
    }
    let mut feats = Vec::with_capacity(m.forward.len());
    let mut cur = x.clone();
    for (l, layer) in m.forward.iter().enumerate() {
        if l > 0 {
            cur = ops.avg_pool2(&cur)?;
        }
        cur = conv(ops, &cur, layer)?;
        if layer.relu {
            cur = ops.relu(&cur)?;
        }
        feats.push(cur.clone());
    }
    Ok(feats)
}

fn hook<O: Ops>(ops: &mut O, x: O::Var, hooks: Option<&FilterPyramid>, level: usize) -> Result<O::Var> {
    match hooks {
        None => Ok(x),
        Some(p) => {
            let (h, w) = {
                let v = ops.value(&x);
                (v.height(), v.width())
            };
            p.check(level, h, w)?;
            ops.filter_channels(&x, p.level(level))
        }
    }
}

/// Maps per-level corrections back to a 3-channel descent direction.
///
/// Deeper signals are upsampled and added to the next level's correction.
/// With `hooks`, every correction and every backward convolution output
/// (before its ReLU) is filtered channelwise at its own resolution.
pub fn backward_map<O: Ops>(
    ops: &mut O,
    corrections: &[O::Var],
    m: &BoundModel<O::Var>,
    hooks: Option<&FilterPyramid>,
) -> Result<O::Var> {
    if corrections.len() != m.backward.len() {
        return Err(Error::shape("backward_map", m.backward.len(), corrections.len()));
    }
    let mut deeper: Option<O::Var> = None;
    for l in (0..m.backward.len()).rev() {
        let c = hook(ops, corrections[l].clone(), hooks, l)?;
        let input = match deeper.take() {
            None => c,
            Some(d) => {
                let up = ops.bilinear_up2(&d)?;
                ops.lin_comb(1.0, &c, 1.0, &up)?
            }
        };
        let layer = &m.backward[l];
        let mut out = conv(ops, &input, layer)?;
        out = hook(ops, out, hooks, l)?;
        if layer.relu {
            out = ops.relu(&out)?;
        }
        deeper = Some(out);
    }
    Ok(deeper.expect("at least one level"))
}

/// Per-level corrections `F_ℓ·[Gram_M(F_ℓ) − H_{ℓ,t}]`.
pub fn corrections<O: Ops>(
    ops: &mut O,
    feats: &[O::Var],
    h: &[O::Var],
    masks: Option<&MaskPyramid>,
) -> Result<Vec<O::Var>> {
    feats
        .iter()
        .zip(h)
        .enumerate()
        .map(|(l, (f, h))| ops.style_correction(f, h, masks.and_then(|m| m.level(l))))
        .collect()
}

/// Network-side settings resolved for one padded image.
#[derive(Clone, Debug, Default)]
pub struct StepContext {
    pub alpha: f64,
    pub masks: Option<MaskPyramid>,
    pub hooks: Option<FilterPyramid>,
}

/// `X^(t+1) = X^(t) − α·g_t(X^(t))`.
pub fn descent_step<O: Ops>(
    ops: &mut O,
    x: &O::Var,
    t: usize,
    m: &BoundModel<O::Var>,
    ctx: &StepContext,
) -> Result<O::Var> {
    let h = m.h.get(t).ok_or_else(|| {
        Error::InvalidArgument(format!("iteration index {t} out of range 0..{ITERATIONS}"))
    })?;
    let feats = forward_maps(ops, x, m)?;
    let corr = corrections(ops, &feats, h, ctx.masks.as_ref())?;
    let g = backward_map(ops, &corr, m, ctx.hooks.as_ref())?;
    ops.lin_comb(1.0, x, -ctx.alpha, &g)
}

/// All iterates `X^(0)..X^(4)`, unclipped.
pub fn unroll<O: Ops>(ops: &mut O, x0: &O::Var, m: &BoundModel<O::Var>, ctx: &StepContext) -> Result<Vec<O::Var>> {
    let mut xs = vec![x0.clone()];
    for t in 0..ITERATIONS {
        let next = descent_step(ops, xs.last().expect("non-empty"), t, m, ctx)?;
        xs.push(next);
    }
    Ok(xs)
}

/// Settings for the photorealistic filter pyramid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotorealParams {
    pub lambda_star_frac: f64,
    pub order: usize,
    pub matting_eps: f64,
}

impl Default for PhotorealParams {
    fn default() -> Self {
        PhotorealParams {
            lambda_star_frac: DEFAULT_LAMBDA_STAR_FRACTION,
            order: DEFAULT_CHEB_ORDER,
            matting_eps: DEFAULT_MATTING_EPS,
        }
    }
}

/// Where the backward-map filters come from.
#[derive(Clone, Debug)]
pub enum FilterSource {
    /// Build Jackson–Chebyshev filters from the (padded) content image.
    Photoreal(PhotorealParams),
    /// Use filters supplied by the caller; they must match the padded size.
    Prebuilt(FilterPyramid),
}

#[derive(Clone, Debug, Default)]
pub struct InferenceOptions {
    pub style: usize,
    /// Intensity; `None` picks 1.0, or 1.2 when filters are active.
    pub alpha: Option<f64>,
    /// Full-resolution binary content mask for masked style corrections.
    pub content_mask: Option<Tensor>,
    pub filters: Option<FilterSource>,
    pub guided: Option<GuidedFilterParams>,
    /// Soft per-pixel weight of the stylized result against the content.
    pub blend_mask: Option<Tensor>,
}

impl InferenceOptions {
    pub fn effective_alpha(&self) -> f64 {
        self.alpha.unwrap_or(if self.filters.is_some() {
            DEFAULT_PHOTOREAL_ALPHA
        } else {
            DEFAULT_ALPHA
        })
    }

    fn validate(&self, h: usize, w: usize) -> Result<()> {
        let alpha = self.effective_alpha();
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("intensity {alpha} must be finite and ≥ 0")));
        }
        for (name, m) in [("content mask", &self.content_mask), ("blend mask", &self.blend_mask)] {
            if let Some(m) = m {
                if (m.channels(), m.height(), m.width()) != (1, h, w) {
                    return Err(Error::shape(
                        "stylize",
                        format!("{name} of shape (1, {h}, {w})"),
                        m.shape(),
                    ));
                }
            }
        }
        if let Some(b) = &self.blend_mask {
            if b.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidArgument("blend mask values must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Bottom/right reflection padding up to the next multiple of `m`.
pub fn pad_to_multiple(x: &Tensor, m: usize) -> Tensor {
    let ph = (m - x.height() % m) % m;
    let pw = (m - x.width() % m) % m;
    if ph == 0 && pw == 0 {
        x.clone()
    } else {
        x.reflect_pad(0, ph, 0, pw)
    }
}

/// Resolves options against the padded content.
pub fn step_context(content_padded: &Tensor, opts: &InferenceOptions) -> Result<StepContext> {
    let (h, w) = (content_padded.height(), content_padded.width());
    let masks = match &opts.content_mask {
        Some(m) => Some(propagate_mask(&pad_to_multiple(m, SIZE_MULTIPLE), LEVELS)?),
        None => None,
    };
    let hooks = match &opts.filters {
        None => None,
        Some(FilterSource::Prebuilt(p)) => {
            p.check(0, h, w)?;
            Some(p.clone())
        }
        Some(FilterSource::Photoreal(pp)) => {
            let pyr = build_pyramid(content_padded, pp.matting_eps, pp.lambda_star_frac, pp.order)?;
            Some(pyr.filters())
        }
    };
    Ok(StepContext {
        alpha: opts.effective_alpha(),
        masks,
        hooks,
    })
}

/// Unclipped iterates at padded resolution, for inspection and tests.
pub fn iterates(content: &Tensor, model: &UnrolledModel, opts: &InferenceOptions) -> Result<Vec<Tensor>> {
    let padded = pad_to_multiple(content, SIZE_MULTIPLE);
    let ctx = step_context(&padded, opts)?;
    let mut ops = Eager;
    let bound = model.bind(&mut ops, opts.style, false)?;
    unroll(&mut ops, &padded, &bound, &ctx)
}

/// Stylizes `content` (3×h×w, values in [0,1]) with four learned steps.
pub fn stylize(content: &Tensor, model: &UnrolledModel, opts: &InferenceOptions) -> Result<Tensor> {
    if content.channels() != 3 {
        return Err(Error::shape("stylize", 3, content.channels()));
    }
    let (h, w) = (content.height(), content.width());
    opts.validate(h, w)?;
    let xs = iterates(content, model, opts)?;
    let x4 = crate::ops::clip_unit(xs.last().expect("five iterates"));
    let mut out = x4.crop(0, 0, h, w)?;
    // Smoothing precedes blending so unselected regions stay exactly the content.
    if let Some(gp) = &opts.guided {
        out = crate::ops::clip_unit(&guided_filter(&out, content, gp)?);
    }
    if let Some(b) = &opts.blend_mask {
        let mw = b.data();
        for c in 0..3 {
            let src = content.channel(c);
            for ((v, &m), &s) in out.channel_mut(c).iter_mut().zip(mw).zip(src) {
                *v = m * *v + (1.0 - m) * s;
            }
        }
    }
    Ok(out)
}
