//! Unsupervised training of the unrolled network on the style objective.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod init;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{GradTape, Ops};
use crate::error::{Error, Result};
use crate::net::{unroll, StepContext, UnrolledModel, CANONICAL_SCHEDULE, LEVELS, SIZE_MULTIPLE};
use crate::perceptual::{
    propagate_mask, FeatureExtractor, LossBreakdown, LossWeights, Objective, StyleTarget,
};
use crate::solver::add_uniform_noise;
use crate::tensor::Tensor;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use data::{load_content_set, square_resize};
pub use init::{xavier_bound, xavier_fill, xavier_init};

pub const REFERENCE_EPOCHS: usize = 17;
pub const REFERENCE_SIDE: usize = 320;
pub const DEFAULT_EPOCHS: usize = 2;
pub const DEFAULT_SIDE: usize = 64;
pub const DEFAULT_LR: f64 = 1e-5;
pub const DEFAULT_NOISE_BOUND: f64 = 0.1;
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub side: usize,
    pub weights: LossWeights,
    pub lr: f64,
    pub noise_bound: f64,
    pub seed: u64,
    pub schedule: [usize; LEVELS],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            side: DEFAULT_SIDE,
            weights: LossWeights::default(),
            lr: DEFAULT_LR,
            noise_bound: DEFAULT_NOISE_BOUND,
            seed: 0,
            schedule: CANONICAL_SCHEDULE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, fe: &FeatureExtractor) -> Result<()> {
        let mult = SIZE_MULTIPLE.max(fe.size_multiple());
        if self.side == 0 || !self.side.is_multiple_of(mult) {
            return Err(Error::InvalidArgument(format!(
                "training side {} must be a positive multiple of {mult}",
                self.side
            )));
        }
        if !(self.lr >= 0.0) || !(self.noise_bound >= 0.0) {
            return Err(Error::InvalidArgument("learning rate and noise bound must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// A style image with an optional binary region mask, both at training side.
#[derive(Clone, Debug)]
pub struct StyleSpec {
    pub image: Tensor,
    pub mask: Option<Tensor>,
}

impl StyleSpec {
    pub fn target(&self, side: usize, fe: &FeatureExtractor) -> Result<StyleTarget> {
        let img = square_resize(&self.image, side);
        let mask = match &self.mask {
            Some(m) => {
                let m = square_resize(m, side).map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
                Some(propagate_mask(&m, fe.depth())?)
            }
            None => None,
        };
        StyleTarget::new(&img, mask.as_ref(), fe)
    }
}

/// Mean validation loss terms after an epoch (epoch 0 is before training).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub content: f64,
    pub style: f64,
    pub tv: f64,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,val_total,val_content,val_style,val_tv";

pub fn train_log_csv(log: &[EpochLog]) -> String {
    let mut s = format!("{TRAIN_LOG_HEADER}\n");
    for e in log {
        s.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}\n",
            e.epoch, e.total, e.content, e.style, e.tv
        ));
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: UnrolledModel,
    pub targets: Vec<StyleTarget>,
    pub log: Vec<EpochLog>,
}

/// Training stopped early; `last_good` is the model before the failing step.
#[derive(Debug, thiserror::Error)]
#[error("training failed: {source}")]
pub struct TrainError {
    #[source]
    pub source: Error,
    pub last_good: Option<Box<UnrolledModel>>,
    pub log: Vec<EpochLog>,
}

impl From<Error> for TrainError {
    fn from(source: Error) -> Self {
        TrainError {
            source,
            last_good: None,
            log: Vec::new(),
        }
    }
}

/// Holds out the last `max(1, round(10%))` images; if nothing would remain
/// for training the whole set is used for both.
pub fn split_validation(n: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let n_val = ((n as f64 * VALIDATION_FRACTION).round() as usize).max(1).min(n);
    if n_val >= n {
        (0..n, 0..n)
    } else {
        (0..n - n_val, n - n_val..n)
    }
}

/// Loss of the network's output on one clean content image.
pub fn network_loss(
    model: &UnrolledModel,
    style: usize,
    content: &Tensor,
    target: &StyleTarget,
    fe: &FeatureExtractor,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    let mut ops = crate::autodiff::Eager;
    let bound = model.bind(&mut ops, style, false)?;
    let ctx = StepContext {
        alpha: 1.0,
        ..Default::default()
    };
    let xs = unroll(&mut ops, content, &bound, &ctx)?;
    Objective::new(fe, content, target, weights, None)?.evaluate(xs.last().expect("iterates"))
}

fn validate_epoch(
    epoch: usize,
    model: &UnrolledModel,
    val: &[&Tensor],
    targets: &[StyleTarget],
    fe: &FeatureExtractor,
    weights: LossWeights,
) -> Result<EpochLog> {
    let mut acc = EpochLog {
        epoch,
        total: 0.0,
        content: 0.0,
        style: 0.0,
        tv: 0.0,
    };
    let count = (val.len() * targets.len()) as f64;
    for (s, t) in targets.iter().enumerate() {
        for img in val {
            let b = network_loss(model, s, img, t, fe, weights)?;
            acc.total += b.total() / count;
            acc.content += b.weighted_content() / count;
            acc.style += b.weighted_style() / count;
            acc.tv += b.weighted_tv() / count;
        }
    }
    Ok(acc)
}

/// Loss and gradients for one sample; gradients follow the bound style's
/// [`crate::net::BoundModel::handles`] order.
pub fn sample_gradients(
    model: &UnrolledModel,
    style: usize,
    x0: &Tensor,
    objective: &Objective,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = GradTape::new();
    let bound = model.bind(&mut tape, style, true)?;
    let x = tape.constant(x0.clone());
    let ctx = StepContext {
        alpha: 1.0,
        ..Default::default()
    };
    let xs = unroll(&mut tape, &x, &bound, &ctx)?;
    let vars = objective.record(&mut tape, xs.last().expect("iterates"))?;
    let loss = tape.scalar(&vars.total);
    let mut grads = tape.backward(vars.total)?;
    let out = bound
        .handles()
        .into_iter()
        .map(|h| {
            let like = tape.value(&h).clone();
            grads.take(h).unwrap_or_else(|| Tensor::zeros_like(&like))
        })
        .collect();
    Ok((loss, out))
}

/// Trains `model` in place of a copy; styles rotate round-robin across samples.
pub fn train(
    model: &UnrolledModel,
    styles: &[StyleSpec],
    contents: &[Tensor],
    fe: &FeatureExtractor,
    cfg: &TrainConfig,
) -> std::result::Result<TrainOutcome, TrainError> {
    cfg.validate(fe)?;
    if styles.is_empty() {
        return Err(Error::InvalidArgument("at least one style is required".into()).into());
    }
    if styles.len() != model.n_styles() {
        return Err(Error::shape("train", model.n_styles(), styles.len()).into());
    }
    if contents.is_empty() {
        return Err(Error::InvalidArgument("no content images".into()).into());
    }
    for c in contents {
        if (c.channels(), c.height(), c.width()) != (3, cfg.side, cfg.side) {
            return Err(Error::shape("train", format!("(3, {0}, {0})", cfg.side), c.shape()).into());
        }
    }
    let targets = styles
        .iter()
        .map(|s| s.target(cfg.side, fe))
        .collect::<Result<Vec<_>>>()?;
    let (train_idx, val_idx) = split_validation(contents.len());
    let val: Vec<&Tensor> = contents[val_idx].iter().collect();
    let train_set: Vec<&Tensor> = contents[train_idx].iter().collect();

    let mut model = model.clone();
    let shared_groups = 4 * LEVELS;
    let lens: Vec<usize> = model.groups().iter().map(|g| g.len()).collect();
    let mut shared = AdamState::new(&lens[..shared_groups]);
    let per_style = (shared_groups..lens.len()).step_by(LEVELS * LEVELS).count();
    let mut style_states: Vec<AdamState> = (0..per_style)
        .map(|s| {
            let start = shared_groups + s * LEVELS * LEVELS;
            AdamState::new(&lens[start..start + LEVELS * LEVELS])
        })
        .collect();

    let mut log = vec![validate_epoch(0, &model, &val, &targets, fe, cfg.weights)?];
    log::info!("epoch 0: validation loss {:.6e}", log[0].total);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample = 0usize;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for &i in &order {
            let s = sample % styles.len();
            sample += 1;
            let content = train_set[i];
            let a = rng.gen_range(0.0..=cfg.noise_bound);
            let x0 = add_uniform_noise(content, a, &mut rng);
            let fail = |source: Error, model: &UnrolledModel, log: &[EpochLog]| TrainError {
                source,
                last_good: Some(Box::new(model.clone())),
                log: log.to_vec(),
            };
            let obj = Objective::new(fe, content, &targets[s], cfg.weights, None)
                .map_err(|e| fail(e, &model, &log))?;
            let (loss, grads) =
                sample_gradients(&model, s, &x0, &obj).map_err(|e| fail(e, &model, &log))?;
            if !loss.is_finite() {
                return Err(fail(
                    Error::NonFinite(format!("training loss at epoch {epoch}, sample {sample}")),
                    &model,
                    &log,
                ));
            }
            let before = model.clone();
            let grad_slices: Vec<&[f64]> = grads.iter().map(Tensor::data).collect();
            let mut groups = model.groups_mut();
            let (shared_p, rest) = groups.split_at_mut(shared_groups);
            let start = s * LEVELS * LEVELS;
            let style_p = &mut rest[start..start + LEVELS * LEVELS];
            shared
                .step(shared_p, &grad_slices[..shared_groups], cfg.lr)
                .and_then(|_| style_states[s].step(style_p, &grad_slices[shared_groups..], cfg.lr))
                .map_err(|e| fail(e, &before, &log))?;
        }
        let entry = validate_epoch(epoch, &model, &val, &targets, fe, cfg.weights)?;
        log::info!("epoch {epoch}: validation loss {:.6e}", entry.total);
        if !entry.total.is_finite() {
            return Err(TrainError {
                source: Error::NonFinite(format!("validation loss after epoch {epoch}")),
                last_good: None,
                log,
            });
        }
        log.push(entry);
    }
    Ok(TrainOutcome { model, targets, log })
}
