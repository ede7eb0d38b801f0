//! Composition of primitives, with and without reverse-mode recording.
//!
//! Model code is written once against [`Ops`]. [`Eager`] evaluates directly
//! and keeps nothing; [`GradTape`] records every primitive with the inputs
//! its vector-Jacobian product needs, so [`GradTape::backward`] can replay it.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::ChannelFilter;
use crate::ops::{self, conv, gram, loss, pointwise, sampling};
use crate::perceptual::mask::LayerMask;
use crate::tensor::Tensor;

pub trait Ops {
    type Var: Clone;

    /// Wraps a tensor that is not differentiated.
    fn constant(&mut self, t: Tensor) -> Self::Var;
    /// Wraps a tensor whose gradient is wanted. Same as `constant` for [`Eager`].
    fn param(&mut self, t: Tensor) -> Self::Var;
    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Tensor;

    fn conv2d(&mut self, x: &Self::Var, w: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn avg_pool2(&mut self, x: &Self::Var) -> Result<Self::Var>;
    fn bilinear_up2(&mut self, x: &Self::Var) -> Result<Self::Var>;
    fn relu(&mut self, x: &Self::Var) -> Result<Self::Var>;
    fn clip_unit(&mut self, x: &Self::Var) -> Result<Self::Var>;
    /// `a·x + b·y`.
    fn lin_comb(&mut self, a: f64, x: &Self::Var, b: f64, y: &Self::Var) -> Result<Self::Var>;
    fn style_correction(
        &mut self,
        f: &Self::Var,
        h: &Self::Var,
        mask: Option<&LayerMask>,
    ) -> Result<Self::Var>;
    /// Applies a self-adjoint spatial filter to every channel independently.
    fn filter_channels(
        &mut self,
        x: &Self::Var,
        filter: &Arc<dyn ChannelFilter>,
    ) -> Result<Self::Var>;
    fn content_term(&mut self, f: &Self::Var, target: &Tensor) -> Result<Self::Var>;
    fn style_term(
        &mut self,
        f: &Self::Var,
        target: &Tensor,
        mask: Option<&LayerMask>,
    ) -> Result<Self::Var>;
    fn tv(&mut self, x: &Self::Var) -> Result<Self::Var>;
    /// `Σ wᵢ·sᵢ` over scalar terms.
    fn weighted_sum(&mut self, terms: &[(f64, Self::Var)]) -> Result<Self::Var>;

    fn scalar(&self, v: &Self::Var) -> f64 {
        self.value(v).item()
    }
}

fn finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    if t.all_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(op.to_string()))
    }
}

fn filter_all(x: &Tensor, filter: &dyn ChannelFilter) -> Result<Tensor> {
    use rayon::prelude::*;
    if filter.len() != x.plane_len() {
        return Err(Error::shape("filter_channels", filter.len(), x.plane_len()));
    }
    let n = x.plane_len();
    let mut out = Tensor::zeros_like(x);
    out.data_mut()
        .par_chunks_mut(n)
        .zip(x.data().par_chunks(n))
        .for_each(|(dst, src)| dst.copy_from_slice(&filter.apply(src)));
    Ok(out)
}

fn sum_terms(terms: &[(f64, &Tensor)]) -> Result<Tensor> {
    let mut s = 0.0;
    for (w, t) in terms {
        if !t.is_scalar() {
            return Err(Error::NotScalar(t.shape().to_string()));
        }
        s += w * t.item();
    }
    Ok(Tensor::scalar(s))
}

/// Direct evaluation with no bookkeeping.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Ops for Eager {
    type Var = Tensor;

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn param(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn value<'a>(&'a self, v: &'a Tensor) -> &'a Tensor {
        v
    }

    fn conv2d(&mut self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
        finite("conv2d", conv::conv2d_forward(x, w, b)?)
    }

    fn avg_pool2(&mut self, x: &Tensor) -> Result<Tensor> {
        sampling::avg_pool2(x)
    }

    fn bilinear_up2(&mut self, x: &Tensor) -> Result<Tensor> {
        Ok(sampling::bilinear_up2(x))
    }

    fn relu(&mut self, x: &Tensor) -> Result<Tensor> {
        Ok(pointwise::relu(x))
    }

    fn clip_unit(&mut self, x: &Tensor) -> Result<Tensor> {
        Ok(pointwise::clip_unit(x))
    }

    fn lin_comb(&mut self, a: f64, x: &Tensor, b: f64, y: &Tensor) -> Result<Tensor> {
        finite("lin_comb", x.lin_comb(a, y, b)?)
    }

    fn style_correction(&mut self, f: &Tensor, h: &Tensor, mask: Option<&LayerMask>) -> Result<Tensor> {
        finite("style_correction", gram::style_correction(f, h, mask)?)
    }

    fn filter_channels(&mut self, x: &Tensor, filter: &Arc<dyn ChannelFilter>) -> Result<Tensor> {
        finite("filter_channels", filter_all(x, filter.as_ref())?)
    }

    fn content_term(&mut self, f: &Tensor, target: &Tensor) -> Result<Tensor> {
        finite("content_term", Tensor::scalar(loss::content_term(f, target)?))
    }

    fn style_term(&mut self, f: &Tensor, target: &Tensor, mask: Option<&LayerMask>) -> Result<Tensor> {
        finite("style_term", Tensor::scalar(loss::style_term(f, target, mask)?))
    }

    fn tv(&mut self, x: &Tensor) -> Result<Tensor> {
        finite("tv", Tensor::scalar(loss::tv(x)))
    }

    fn weighted_sum(&mut self, terms: &[(f64, Tensor)]) -> Result<Tensor> {
        let refs: Vec<_> = terms.iter().map(|(w, t)| (*w, t)).collect();
        finite("weighted_sum", sum_terms(&refs)?)
    }
}

/// Handle to a value recorded on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Var },
    Pool { x: Var },
    Up { x: Var },
    Relu { x: Var },
    Clip { x: Var },
    LinComb { a: f64, x: Var, b: f64, y: Var },
    Correction { f: Var, h: Var, mask: Option<LayerMask> },
    Filter { x: Var, filter: Arc<dyn ChannelFilter> },
    Content { f: Var, target: Tensor },
    Style { f: Var, target: Tensor, mask: Option<LayerMask> },
    Tv { x: Var },
    Sum { terms: Vec<(f64, Var)> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Single-writer record of a computation for reverse-mode differentiation.
#[derive(Default)]
pub struct GradTape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar w.r.t. every recorded value that needed one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient or zeros shaped like `like` when `v` did not influence the output.
    pub fn wrt_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros_like(like))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        let value = finite(name, value)?;
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let out = self.val(output);
        if !out.is_scalar() {
            return Err(Error::NotScalar(out.shape().to_string()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let mut acc = |v: Var, g: Tensor| {
                if !self.needs(v) {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(dy);
                }
                Op::Conv { x, w, b } => {
                    let (dx, dw, db) =
                        conv::conv2d_backward(self.val(*x), self.val(*w), self.val(*b), &dy)?;
                    acc(*x, dx);
                    acc(*w, dw);
                    acc(*b, db);
                }
                Op::Pool { x } => acc(*x, sampling::avg_pool2_backward(&dy)),
                Op::Up { x } => acc(*x, sampling::bilinear_up2_backward(&dy)),
                Op::Relu { x } => acc(*x, pointwise::relu_backward(self.val(*x), &dy)),
                Op::Clip { x } => acc(*x, pointwise::clip_unit_backward(self.val(*x), &dy)),
                Op::LinComb { a, x, b, y } => {
                    if x == y {
                        acc(*x, dy.scale(a + b));
                    } else {
                        acc(*x, dy.scale(*a));
                        acc(*y, dy.scale(*b));
                    }
                }
                Op::Correction { f, h, mask } => {
                    let (df, dh) = gram::style_correction_backward(
                        self.val(*f),
                        self.val(*h),
                        mask.as_ref(),
                        &dy,
                    )?;
                    acc(*f, df);
                    acc(*h, dh);
                }
                Op::Filter { x, filter } => acc(*x, filter_all(&dy, filter.as_ref())?),
                Op::Content { f, target } => {
                    acc(*f, loss::content_term_backward(self.val(*f), target, dy.item()))
                }
                Op::Style { f, target, mask } => acc(
                    *f,
                    loss::style_term_backward(self.val(*f), target, mask.as_ref(), dy.item())?,
                ),
                Op::Tv { x } => acc(*x, loss::tv_backward(self.val(*x), dy.item())),
                Op::Sum { terms } => {
                    for (w, v) in terms {
                        acc(*v, Tensor::scalar(w * dy.item()));
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl Ops for GradTape {
    type Var = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.val(*v)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let y = conv::conv2d_forward(self.val(*x), self.val(*w), self.val(*b))?;
        self.push("conv2d", y, Op::Conv { x: *x, w: *w, b: *b }, &[*x, *w, *b])
    }

    fn avg_pool2(&mut self, x: &Var) -> Result<Var> {
        let y = sampling::avg_pool2(self.val(*x))?;
        self.push("avg_pool2", y, Op::Pool { x: *x }, &[*x])
    }

    fn bilinear_up2(&mut self, x: &Var) -> Result<Var> {
        let y = sampling::bilinear_up2(self.val(*x));
        self.push("bilinear_up2", y, Op::Up { x: *x }, &[*x])
    }

    fn relu(&mut self, x: &Var) -> Result<Var> {
        let y = ops::relu(self.val(*x));
        self.push("relu", y, Op::Relu { x: *x }, &[*x])
    }

    fn clip_unit(&mut self, x: &Var) -> Result<Var> {
        let y = ops::clip_unit(self.val(*x));
        self.push("clip_unit", y, Op::Clip { x: *x }, &[*x])
    }

    fn lin_comb(&mut self, a: f64, x: &Var, b: f64, y: &Var) -> Result<Var> {
        let v = self.val(*x).lin_comb(a, self.val(*y), b)?;
        self.push("lin_comb", v, Op::LinComb { a, x: *x, b, y: *y }, &[*x, *y])
    }

    fn style_correction(&mut self, f: &Var, h: &Var, mask: Option<&LayerMask>) -> Result<Var> {
        let y = gram::style_correction(self.val(*f), self.val(*h), mask)?;
        let op = Op::Correction {
            f: *f,
            h: *h,
            mask: mask.cloned(),
        };
        self.push("style_correction", y, op, &[*f, *h])
    }

    fn filter_channels(&mut self, x: &Var, filter: &Arc<dyn ChannelFilter>) -> Result<Var> {
        let y = filter_all(self.val(*x), filter.as_ref())?;
        let op = Op::Filter {
            x: *x,
            filter: Arc::clone(filter),
        };
        self.push("filter_channels", y, op, &[*x])
    }

    fn content_term(&mut self, f: &Var, target: &Tensor) -> Result<Var> {
        let y = Tensor::scalar(loss::content_term(self.val(*f), target)?);
        let op = Op::Content {
            f: *f,
            target: target.clone(),
        };
        self.push("content_term", y, op, &[*f])
    }

    fn style_term(&mut self, f: &Var, target: &Tensor, mask: Option<&LayerMask>) -> Result<Var> {
        let y = Tensor::scalar(loss::style_term(self.val(*f), target, mask)?);
        let op = Op::Style {
            f: *f,
            target: target.clone(),
            mask: mask.cloned(),
        };
        self.push("style_term", y, op, &[*f])
    }

    fn tv(&mut self, x: &Var) -> Result<Var> {
        let y = Tensor::scalar(loss::tv(self.val(*x)));
        self.push("tv", y, Op::Tv { x: *x }, &[*x])
    }

    fn weighted_sum(&mut self, terms: &[(f64, Var)]) -> Result<Var> {
        let refs: Vec<_> = terms.iter().map(|(w, v)| (*w, self.val(*v))).collect();
        let y = sum_terms(&refs)?;
        let inputs: Vec<Var> = terms.iter().map(|(_, v)| *v).collect();
        self.push("weighted_sum", y, Op::Sum { terms: terms.to_vec() }, &inputs)
    }
}
