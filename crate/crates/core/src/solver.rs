//! Direct pixel-space optimization of the style objective.
//!
//! Plain (optionally projected) gradient descent is the procedure the network
//! unrolls; its loss trajectory is the yardstick for the network's output.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{GradTape, Ops};
use crate::error::{Error, Result};
use crate::graph::ChannelFilter;
use crate::perceptual::{FeatureExtractor, LossBreakdown, LossWeights, MaskPyramid, Objective, StyleTarget};
use crate::tensor::Tensor;
use crate::train::adam::AdamState;

/// Upper bound of the noise amplitude draw.
pub const NOISE_AMPLITUDE_BOUND: f64 = 0.1;
/// Largest-pixel-step sizes tried when no stepsize is given.
pub const MU_GRID: [f64; 5] = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
const MU_PROBE_ITERS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    Content,
    /// Content plus zero-mean uniform noise of random amplitude.
    ContentNoise,
    /// Uniform noise in [0, 1].
    Noise,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "content" => Ok(InitMode::Content),
            "content-noise" => Ok(InitMode::ContentNoise),
            "noise" => Ok(InitMode::Noise),
            _ => Err(Error::InvalidArgument(format!("unknown init mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for InitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitMode::Content => "content",
            InitMode::ContentNoise => "content-noise",
            InitMode::Noise => "noise",
        })
    }
}

#[derive(Clone, Debug)]
pub struct DescentConfig {
    /// Stepsize; `None` runs a grid search first.
    pub mu: Option<f64>,
    pub iters: usize,
    pub weights: LossWeights,
    /// Overrides the target's automatic style weight.
    pub style_weight: Option<f64>,
    pub init: InitMode,
    pub seed: u64,
    /// Per-channel projection applied after every update and to the initialization.
    pub projector: Option<Arc<dyn ChannelFilter>>,
    /// Adam on pixels instead of plain steps, with `mu` as the learning rate.
    pub adam: bool,
    pub keep_iterates: bool,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            mu: None,
            iters: 40,
            weights: LossWeights::default(),
            style_weight: None,
            init: InitMode::Content,
            seed: 0,
            projector: None,
            adam: false,
            keep_iterates: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub image: Tensor,
    /// Loss at `X^(0)..X^(T)`.
    pub trajectory: Vec<LossBreakdown>,
    pub mu: f64,
    /// Filled when `keep_iterates` is set.
    pub iterates: Vec<Tensor>,
}

pub fn initial_image(content: &Tensor, mode: InitMode, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        InitMode::Content => content.clone(),
        InitMode::ContentNoise => {
            let a = rng.gen_range(0.0..=NOISE_AMPLITUDE_BOUND);
            add_uniform_noise(content, a, &mut rng)
        }
        InitMode::Noise => {
            let data = (0..content.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            Tensor::from_vec(content.channels(), content.height(), content.width(), data)
                .expect("length matches")
        }
    }
}

/// `x + U[−a, a]` per pixel (no noise when `a = 0`).
pub fn add_uniform_noise(x: &Tensor, a: f64, rng: &mut impl Rng) -> Tensor {
    if a == 0.0 {
        return x.clone();
    }
    let mut out = x.clone();
    for v in out.data_mut() {
        *v += rng.gen_range(-a..=a);
    }
    out
}

pub fn project(x: &Tensor, p: &dyn ChannelFilter) -> Result<Tensor> {
    if p.len() != x.plane_len() {
        return Err(Error::shape("projection", p.len(), x.plane_len()));
    }
    let mut out = x.clone();
    for c in 0..x.channels() {
        let y = p.apply(x.channel(c));
        out.channel_mut(c).copy_from_slice(&y);
    }
    Ok(out)
}

fn loss_and_grad(obj: &Objective, x: &Tensor) -> Result<(LossBreakdown, Tensor)> {
    let mut tape = GradTape::new();
    let xv = tape.param(x.clone());
    let vars = obj.record(&mut tape, &xv)?;
    let b = LossBreakdown {
        content: tape.scalar(&vars.content),
        style: tape.scalar(&vars.style),
        tv: tape.scalar(&vars.tv),
        lambda_c: obj.weights().content,
        lambda_s: obj.target().lambda_s(),
        lambda_tv: obj.weights().tv,
    };
    let mut grads = tape.backward(vars.total)?;
    let g = grads.take(xv).unwrap_or_else(|| Tensor::zeros_like(x));
    Ok((b, g))
}

fn run(obj: &Objective, x0: Tensor, mu: f64, cfg: &DescentConfig) -> Result<Solution> {
    let mut x = match &cfg.projector {
        Some(p) => project(&x0, p.as_ref())?,
        None => x0,
    };
    let mut adam = cfg.adam.then(|| AdamState::new(&[x.len()]));
    let mut trajectory = Vec::with_capacity(cfg.iters + 1);
    let mut iterates = Vec::new();
    for t in 0..=cfg.iters {
        let (loss, g) = loss_and_grad(obj, &x)?;
        if !loss.total().is_finite() {
            return Err(Error::NonFinite(format!("descent diverged at iteration {t} (μ = {mu})")));
        }
        trajectory.push(loss);
        if cfg.keep_iterates {
            iterates.push(x.clone());
        }
        if t == cfg.iters {
            break;
        }
        let mut next = x.clone();
        match adam.as_mut() {
            Some(state) => state.step(&mut [next.data_mut()], &[g.data()], mu)?,
            None => next = next.lin_comb(1.0, &g, -mu)?,
        }
        if let Some(p) = &cfg.projector {
            next = project(&next, p.as_ref())?;
        }
        x = next;
    }
    Ok(Solution {
        image: x,
        trajectory,
        mu,
        iterates,
    })
}

fn objective<'a>(
    content: &Tensor,
    target: &'a StyleTarget,
    fe: &'a FeatureExtractor,
    cfg: &DescentConfig,
    mask: Option<&MaskPyramid>,
) -> Result<Objective<'a>> {
    Objective::new(fe, content, target, cfg.weights, mask.cloned())
}

/// Picks the stepsize whose short probe run ends lowest. Grid points are
/// expressed as the largest per-pixel change of the first step.
pub fn select_mu(obj: &Objective, x0: &Tensor, cfg: &DescentConfig) -> Result<f64> {
    let (_, g) = loss_and_grad(obj, x0)?;
    let gmax = g.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gmax == 0.0 {
        return Ok(MU_GRID[MU_GRID.len() / 2]);
    }
    let probe = DescentConfig {
        iters: MU_PROBE_ITERS,
        keep_iterates: false,
        ..cfg.clone()
    };
    let mut best = (f64::INFINITY, MU_GRID[0] / gmax);
    for s in MU_GRID {
        let mu = if cfg.adam { s } else { s / gmax };
        if let Ok(sol) = run(obj, x0.clone(), mu, &probe) {
            let last = sol.trajectory.last().map(LossBreakdown::total).unwrap_or(f64::INFINITY);
            if last < best.0 {
                best = (last, mu);
            }
        }
    }
    Ok(best.1)
}

fn solve(
    content: &Tensor,
    target: &StyleTarget,
    fe: &FeatureExtractor,
    cfg: &DescentConfig,
    mask: Option<&MaskPyramid>,
) -> Result<Solution> {
    if let Some(mu) = cfg.mu {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!("stepsize {mu} must be positive")));
        }
    }
    let owned;
    let target = match cfg.style_weight {
        Some(w) => {
            owned = target.clone().with_lambda_s(w)?;
            &owned
        }
        None => target,
    };
    let obj = objective(content, target, fe, cfg, mask)?;
    let x0 = initial_image(content, cfg.init, cfg.seed);
    let mu = match cfg.mu {
        Some(mu) => mu,
        None => select_mu(&obj, &x0, cfg)?,
    };
    run(&obj, x0, mu, cfg)
}

/// Gradient descent on the objective; `cfg.projector` is ignored.
pub fn grad_descent_stylize(
    content: &Tensor,
    target: &StyleTarget,
    fe: &FeatureExtractor,
    cfg: &DescentConfig,
    content_mask: Option<&MaskPyramid>,
) -> Result<Solution> {
    let plain = DescentConfig {
        projector: None,
        ..cfg.clone()
    };
    solve(content, target, fe, &plain, content_mask)
}

/// Gradient descent with every iterate projected by `cfg.projector`.
pub fn projected_grad_descent(
    content: &Tensor,
    target: &StyleTarget,
    fe: &FeatureExtractor,
    cfg: &DescentConfig,
    content_mask: Option<&MaskPyramid>,
) -> Result<Solution> {
    if cfg.projector.is_none() {
        return Err(Error::InvalidArgument("projected descent needs a projector".into()));
    }
    solve(content, target, fe, cfg, content_mask)
}

pub const TRAJECTORY_HEADER: &str = "iter,total,content,style,tv";

/// One CSV row per iterate; the last three columns are the weighted summands
/// of `total`.
pub fn trajectory_csv(trajectory: &[LossBreakdown]) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for (i, b) in trajectory.iter().enumerate() {
        writeln!(s, "{}", csv_fields(i, b)).expect("write to string");
    }
    s
}

/// `iter,total,content,style,tv` values of one row, with shortest
/// round-tripping float formatting.
pub fn csv_fields(iter: usize, b: &LossBreakdown) -> String {
    format!(
        "{iter},{:e},{:e},{:e},{:e}",
        b.total(),
        b.weighted_content(),
        b.weighted_style(),
        b.weighted_tv()
    )
}
