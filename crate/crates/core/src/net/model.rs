//! Weights of the unrolled descent network.
//!
//! The forward stack `h^f` and backward stack `h^b` are shared by all four
//! iterations and all styles. Each style owns one `c_ℓ × c_ℓ` matrix per
//! level and iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Ops;
use crate::error::{Error, Result};
use crate::ops::ConvLayer;
use crate::tensor::Tensor;
use crate::train::init::xavier_fill;

pub const ITERATIONS: usize = 4;
pub const LEVELS: usize = 4;
pub const CANONICAL_SCHEDULE: [usize; LEVELS] = [16, 32, 64, 128];
pub const KERNEL: usize = 3;

/// `H_{ℓ,t}` for one style, indexed `[t][ℓ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleMatrices {
    pub h: Vec<Vec<Tensor>>,
}

impl StyleMatrices {
    pub fn zeros(schedule: &[usize; LEVELS]) -> Self {
        StyleMatrices {
            h: (0..ITERATIONS)
                .map(|_| schedule.iter().map(|&c| Tensor::zeros(1, c, c)).collect())
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.h.iter().flatten().map(Tensor::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledModel {
    schedule: [usize; LEVELS],
    /// Levels 1..4: conv(3→c1), conv(c1→c2), conv(c2→c3), conv(c3→c4), all with ReLU.
    pub forward: Vec<ConvLayer>,
    /// Indexed by level: `backward[0]` is conv(c1→3) without ReLU,
    /// `backward[ℓ]` is conv(c_{ℓ+1}→c_ℓ) with ReLU.
    pub backward: Vec<ConvLayer>,
    pub styles: Vec<StyleMatrices>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub forward_backward: usize,
    pub per_iter_style: usize,
    pub total: usize,
}

impl std::fmt::Display for ParamCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} / {} / {}",
            self.forward_backward, self.per_iter_style, self.total
        )
    }
}

impl UnrolledModel {
    /// All-zero weights for `n_styles` styles.
    pub fn zeros(schedule: [usize; LEVELS], n_styles: usize) -> Self {
        let mut forward = Vec::with_capacity(LEVELS);
        let mut backward = Vec::with_capacity(LEVELS);
        let mut prev = 3;
        for (l, &c) in schedule.iter().enumerate() {
            forward.push(ConvLayer::zeros(prev, c, KERNEL, true));
            backward.push(ConvLayer::zeros(c, prev, KERNEL, l > 0));
            prev = c;
        }
        UnrolledModel {
            schedule,
            forward,
            backward,
            styles: (0..n_styles).map(|_| StyleMatrices::zeros(&schedule)).collect(),
        }
    }

    pub fn canonical(n_styles: usize) -> Self {
        Self::zeros(CANONICAL_SCHEDULE, n_styles)
    }

    /// Xavier-uniform convolutions, zero biases, zero style matrices.
    pub fn xavier(schedule: [usize; LEVELS], n_styles: usize, seed: u64) -> Self {
        let mut m = Self::zeros(schedule, n_styles);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for conv in m.forward.iter_mut().chain(m.backward.iter_mut()) {
            let (fi, fo) = conv.fans();
            xavier_fill(&mut conv.weight, fi, fo, &mut rng);
        }
        m
    }

    /// [`xavier`](Self::xavier) with the output convolution zeroed, so the
    /// network starts as the identity map and no output pixel saturates
    /// before the first update.
    pub fn identity_start(schedule: [usize; LEVELS], n_styles: usize, seed: u64) -> Self {
        let mut m = Self::xavier(schedule, n_styles, seed);
        m.backward[0].weight.iter_mut().for_each(|w| *w = 0.0);
        m
    }

    pub fn schedule(&self) -> [usize; LEVELS] {
        self.schedule
    }

    pub fn n_styles(&self) -> usize {
        self.styles.len()
    }

    pub fn param_count(&self) -> ParamCount {
        let forward_backward = self
            .forward
            .iter()
            .chain(&self.backward)
            .map(ConvLayer::param_count)
            .sum();
        let per_iter_style = self.schedule.iter().map(|c| c * c).sum();
        let total = forward_backward
            + self
                .styles
                .iter()
                .map(StyleMatrices::param_count)
                .sum::<usize>();
        ParamCount {
            forward_backward,
            per_iter_style,
            total,
        }
    }

    pub fn style(&self, id: usize) -> Result<&StyleMatrices> {
        self.styles.get(id).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "style id {id} out of range (model has {} styles)",
                self.styles.len()
            ))
        })
    }

    /// Parameter groups in storage order: forward convs (weight, bias),
    /// backward convs (weight, bias), then each style's `H` in `(t, ℓ)` order.
    pub fn groups(&self) -> Vec<&[f64]> {
        let mut g: Vec<&[f64]> = Vec::new();
        for conv in self.forward.iter().chain(&self.backward) {
            g.push(&conv.weight);
            g.push(&conv.bias);
        }
        for s in &self.styles {
            for h in s.h.iter().flatten() {
                g.push(h.data());
            }
        }
        g
    }

    pub fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut g: Vec<&mut [f64]> = Vec::new();
        for conv in self.forward.iter_mut().chain(self.backward.iter_mut()) {
            g.push(&mut conv.weight);
            g.push(&mut conv.bias);
        }
        for s in self.styles.iter_mut() {
            for h in s.h.iter_mut().flatten() {
                g.push(h.data_mut());
            }
        }
        g
    }

    /// Wraps the shared stacks and one style's matrices as graph values.
    /// With `trainable` they are recorded as differentiable parameters.
    pub fn bind<O: Ops>(&self, ops: &mut O, style: usize, trainable: bool) -> Result<BoundModel<O::Var>> {
        let s = self.style(style)?;
        let mut wrap = |t: Tensor| if trainable { ops.param(t) } else { ops.constant(t) };
        let mut conv = |c: &ConvLayer| BoundConv {
            weight: wrap(c.weight_tensor()),
            bias: wrap(c.bias_tensor()),
            relu: c.relu,
        };
        let forward = self.forward.iter().map(&mut conv).collect();
        let backward = self.backward.iter().map(&mut conv).collect();
        let h = s
            .h
            .iter()
            .map(|row| row.iter().map(|t| wrap(t.clone())).collect())
            .collect();
        Ok(BoundModel {
            forward,
            backward,
            h,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BoundConv<V> {
    pub weight: V,
    pub bias: V,
    pub relu: bool,
}

/// Model weights living on an [`Ops`] backend.
#[derive(Clone, Debug)]
pub struct BoundModel<V> {
    pub forward: Vec<BoundConv<V>>,
    pub backward: Vec<BoundConv<V>>,
    /// `[t][ℓ]`.
    pub h: Vec<Vec<V>>,
}

impl<V: Clone> BoundModel<V> {
    /// All parameter handles in [`UnrolledModel::groups`] order for the bound style.
    pub fn handles(&self) -> Vec<V> {
        let mut out = Vec::new();
        for c in self.forward.iter().chain(&self.backward) {
            out.push(c.weight.clone());
            out.push(c.bias.clone());
        }
        out.extend(self.h.iter().flatten().cloned());
        out
    }
}
