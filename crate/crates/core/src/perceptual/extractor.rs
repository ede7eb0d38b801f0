//! Fixed-weight feature extractor standing in for the pretrained loss network.
//!
//! Each level is a stack of convolutions with ReLU; levels after the first
//! are preceded by 2×2 average pooling. The tapped feature of a level is the
//! output of its last convolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Eager, Ops};
use crate::error::{Error, Result};
use crate::ops::ConvLayer;
use crate::tensor::Tensor;
use crate::train::init::xavier_fill;

pub const MINI_CHANNELS: [usize; 5] = [8, 16, 32, 64, 64];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    levels: Vec<Vec<ConvLayer>>,
    style_layers: Vec<usize>,
    content_layers: Vec<usize>,
    seed: u64,
}

impl FeatureExtractor {
    /// Five levels with channels (8, 16, 32, 64, 64); style on every level,
    /// content on level index 3.
    pub fn mini(seed: u64) -> Self {
        Self::seeded(&MINI_CHANNELS, seed, (0..5).collect(), vec![3])
            .expect("valid default layout")
    }

    /// One 3×3 conv + ReLU per level with seeded Xavier weights and zero biases.
    pub fn seeded(
        channels: &[usize],
        seed: u64,
        style_layers: Vec<usize>,
        content_layers: Vec<usize>,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_ch = 3;
        let mut levels = Vec::with_capacity(channels.len());
        for &out in channels {
            let mut conv = ConvLayer::zeros(in_ch, out, 3, true);
            let (fi, fo) = conv.fans();
            xavier_fill(&mut conv.weight, fi, fo, &mut rng);
            levels.push(vec![conv]);
            in_ch = out;
        }
        Self::from_levels(levels, style_layers, content_layers, seed)
    }

    pub fn from_levels(
        levels: Vec<Vec<ConvLayer>>,
        style_layers: Vec<usize>,
        content_layers: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("extractor needs non-empty levels".into()));
        }
        if style_layers.is_empty() || content_layers.is_empty() {
            return Err(Error::InvalidArgument(
                "extractor needs at least one style and one content layer".into(),
            ));
        }
        if style_layers
            .iter()
            .chain(&content_layers)
            .any(|&l| l >= levels.len())
        {
            return Err(Error::InvalidArgument("layer index out of range".into()));
        }
        let mut in_ch = 3;
        for conv in levels.iter().flatten() {
            if conv.in_ch != in_ch {
                return Err(Error::shape("FeatureExtractor", in_ch, conv.in_ch));
            }
            in_ch = conv.out_ch;
        }
        Ok(FeatureExtractor {
            levels,
            style_layers,
            content_layers,
            seed,
        })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Vec<ConvLayer>] {
        &self.levels
    }

    pub fn style_layers(&self) -> &[usize] {
        &self.style_layers
    }

    pub fn content_layers(&self) -> &[usize] {
        &self.content_layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Channel count `c_ℓ` of each level's feature.
    pub fn level_channels(&self) -> Vec<usize> {
        self.levels
            .iter()
            .map(|l| l.last().expect("non-empty").out_ch)
            .collect()
    }

    /// Required divisor of the input's spatial sides.
    pub fn size_multiple(&self) -> usize {
        1 << (self.depth() - 1)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != 3 {
            return Err(Error::shape("extract_features", "3 channels", x.channels()));
        }
        let m = self.size_multiple();
        for dim in [x.height(), x.width()] {
            if dim % m != 0 {
                return Err(Error::Indivisible {
                    op: "extract_features",
                    dim,
                    divisor: m,
                });
            }
        }
        Ok(())
    }

    /// Features for every level, recorded on `ops`.
    pub fn features_with<O: Ops>(&self, ops: &mut O, x: &O::Var) -> Result<Vec<O::Var>> {
        self.check_input(ops.value(x))?;
        let mut feats = Vec::with_capacity(self.depth());
        let mut cur = x.clone();
        for (l, level) in self.levels.iter().enumerate() {
            if l > 0 {
                cur = ops.avg_pool2(&cur)?;
            }
            for conv in level {
                let w = ops.constant(conv.weight_tensor());
                let b = ops.constant(conv.bias_tensor());
                cur = ops.conv2d(&cur, &w, &b)?;
                if conv.relu {
                    cur = ops.relu(&cur)?;
                }
            }
            feats.push(cur.clone());
        }
        Ok(feats)
    }

    pub fn extract_features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.features_with(&mut Eager, x)
    }
}
