//! Command surface of the `ustyle` binary.
//!
//! Every command that writes a file also writes a `key=value` manifest next
//! to it (`<file>.manifest`) holding the resolved configuration. Commands are
//! deterministic given their flags and input files.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use unrolled_style::codec::{binarize, read_image, read_mask, write_image};
use unrolled_style::graph::{DEFAULT_CHEB_ORDER, DEFAULT_LAMBDA_STAR_FRACTION, DEFAULT_MATTING_EPS};
use unrolled_style::net::{iterates, pad_to_multiple, SIZE_MULTIPLE};
use unrolled_style::perceptual::{DEFAULT_CONTENT_WEIGHT, DEFAULT_TV_WEIGHT};
use unrolled_style::solver::{csv_fields, initial_image};
use unrolled_style::train::{load_content_set, train_log_csv, DEFAULT_EPOCHS, DEFAULT_LR, DEFAULT_SIDE};
use unrolled_style::{
    build_pyramid, grad_descent_stylize, load_checkpoint, save_checkpoint, stylize, train,
    CheckpointMeta, DescentConfig, Error, FeatureExtractor, FilterSource, GuidedFilterParams,
    InferenceOptions, InitMode, LossWeights, Objective, StyleSpec, StyleTarget, Tensor,
    TrainConfig, TrainError, UnrolledModel,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

pub const COMPARE_HEADER: &str = "series,iter,total,content,style,tv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Usage(_) => return EXIT_USAGE,
            CliError::Core(e) => e,
            CliError::Train(e) => &e.source,
        };
        if core.is_io() {
            EXIT_IO
        } else if core.is_numeric() {
            EXIT_DIVERGED
        } else {
            EXIT_USAGE
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ustyle", version, about = "Fast style transfer with an unrolled descent network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a directory of content images.
    Train(TrainArgs),
    /// Apply a trained model to one image.
    Stylize(StylizeArgs),
    /// Compare the network against plain gradient descent on the same loss.
    Compare(CompareArgs),
    /// Print parameter counts of a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub contents: PathBuf,
    /// Style image; repeat for a multi-style checkpoint.
    #[arg(long, required = true)]
    pub style: Vec<PathBuf>,
    /// Binary region mask for the style image at the same position.
    #[arg(long)]
    pub style_mask: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = DEFAULT_SIDE)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_LR)]
    pub lr: f64,
    /// Seed of the fixed random feature extractor.
    #[arg(long, default_value_t = 0)]
    pub extractor_seed: u64,
}

#[derive(Debug, Args)]
pub struct StylizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub style_id: usize,
    /// Step intensity; defaults to 1.0, or 1.2 with `--photoreal`.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub photoreal: bool,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_STAR_FRACTION)]
    pub lambda_star_frac: f64,
    #[arg(long, default_value_t = DEFAULT_CHEB_ORDER)]
    pub cheb_order: usize,
    #[arg(long, default_value_t = DEFAULT_MATTING_EPS)]
    pub matting_eps: f64,
    #[arg(long)]
    pub content_mask: Option<PathBuf>,
    #[arg(long)]
    pub blend_mask: Option<PathBuf>,
    #[arg(long)]
    pub guided_filter: bool,
    #[arg(long, default_value_t = GuidedFilterParams::default().radius)]
    pub gf_radius: usize,
    #[arg(long, default_value_t = GuidedFilterParams::default().eps)]
    pub gf_eps: f64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub style_id: usize,
    #[arg(long)]
    pub iters: usize,
    /// Fixed stepsize; a short grid search picks one otherwise.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, default_value = "content")]
    pub init: InitMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
pub struct InspectSource {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Report the freshly initialized single-style model instead.
    #[arg(long)]
    pub canonical: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub source: InspectSource,
}

/// Parses `args` (including the program name) and runs the command,
/// writing reports to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn std::io::Write) -> CliResult<()> {
    match cmd {
        Command::Train(a) => cmd_train(&a),
        Command::Stylize(a) => cmd_stylize(&a),
        Command::Compare(a) => {
            let csv = cmd_compare(&a)?;
            if a.output.is_none() {
                out.write_all(csv.as_bytes()).map_err(|e| io_err("standard output", e))?;
            }
            Ok(())
        }
        Command::Inspect(a) => {
            let report = cmd_inspect(&a)?;
            out.write_all(report.as_bytes()).map_err(|e| io_err("standard output", e))
        }
    }
}

fn io_err(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.into(),
        source,
    })
}

/// Ordered `key=value` lines echoed beside every written artifact.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest::default();
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k}={v}");
            s
        })
    }

    pub fn parse(text: &str) -> Self {
        Manifest {
            entries: text
                .lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn write_beside(&self, artifact: &Path) -> CliResult<()> {
        let path = sidecar(artifact, "manifest");
        fs::write(&path, self.render()).map_err(|e| io_err(path, e))
    }
}

/// `<file>.<ext>` next to `file`.
pub fn sidecar(file: &Path, ext: &str) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn extractor_of(meta: &CheckpointMeta) -> CliResult<FeatureExtractor> {
    let seed = meta_value(meta, "extractor_seed", 0u64)?;
    Ok(FeatureExtractor::mini(seed))
}

fn meta_value<T: std::str::FromStr>(meta: &CheckpointMeta, key: &str, default: T) -> CliResult<T> {
    match meta.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Malformed(format!("checkpoint metadata {key}={v}")).into()),
    }
}

fn weights_of(meta: &CheckpointMeta) -> CliResult<LossWeights> {
    Ok(LossWeights {
        content: meta_value(meta, "content_weight", DEFAULT_CONTENT_WEIGHT)?,
        tv: meta_value(meta, "tv_weight", DEFAULT_TV_WEIGHT)?,
    })
}

fn check_style_id(model: &UnrolledModel, id: usize) -> CliResult<()> {
    if id >= model.n_styles() {
        return Err(CliError::Usage(format!(
            "style id {id} out of range (checkpoint has {} styles)",
            model.n_styles()
        )));
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    if !a.style_mask.is_empty() && a.style_mask.len() != a.style.len() {
        return Err(CliError::Usage(format!(
            "{} style masks given for {} styles",
            a.style_mask.len(),
            a.style.len()
        )));
    }
    let fe = FeatureExtractor::mini(a.extractor_seed);
    let cfg = TrainConfig {
        epochs: a.epochs,
        side: a.size,
        lr: a.lr,
        seed: a.seed,
        ..Default::default()
    };
    cfg.validate(&fe)?;
    let contents = load_content_set(&a.contents, a.size)?;
    let styles = a
        .style
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(StyleSpec {
                image: read_image(p)?,
                mask: a.style_mask.get(i).map(|m| read_mask(m)).transpose()?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let init = UnrolledModel::identity_start(cfg.schedule, styles.len(), cfg.seed);
    let images: Vec<Tensor> = contents.iter().map(|(_, t)| t.clone()).collect();
    let outcome = match train(&init, &styles, &images, &fe, &cfg) {
        Ok(o) => o,
        Err(e) => {
            if !e.log.is_empty() {
                let log = sidecar(&a.out, "log.csv");
                let _ = fs::write(log, train_log_csv(&e.log));
            }
            return Err(e.into());
        }
    };

    let mut meta = CheckpointMeta::default();
    meta.set("extractor_seed", a.extractor_seed);
    meta.set("content_weight", cfg.weights.content);
    meta.set("tv_weight", cfg.weights.tv);
    meta.set("side", cfg.side);
    meta.set("epochs", cfg.epochs);
    meta.set("seed", cfg.seed);
    meta.set("lr", cfg.lr);
    for (i, t) in outcome.targets.iter().enumerate() {
        meta.set(format!("lambda_s.{i}"), t.lambda_s());
    }
    meta.style_grams = outcome.targets.iter().map(|t| t.grams().to_vec()).collect();
    save_checkpoint(&outcome.model, &meta, &a.out)?;
    let log_path = sidecar(&a.out, "log.csv");
    fs::write(&log_path, train_log_csv(&outcome.log)).map_err(|e| io_err(&log_path, e))?;

    let mut m = Manifest::new("train");
    m.set("contents", a.contents.display());
    m.set("content_count", contents.len());
    for (p, _) in &contents {
        m.set("content_file", p.display());
    }
    for (i, s) in a.style.iter().enumerate() {
        m.set(&format!("style.{i}"), s.display());
        if let Some(mask) = a.style_mask.get(i) {
            m.set(&format!("style_mask.{i}"), mask.display());
        }
        m.set(&format!("lambda_s.{i}"), outcome.targets[i].lambda_s());
    }
    m.set("out", a.out.display());
    m.set("log", log_path.display());
    m.set("epochs", cfg.epochs);
    m.set("size", cfg.side);
    m.set("seed", cfg.seed);
    m.set("lr", cfg.lr);
    m.set("noise_bound", cfg.noise_bound);
    m.set("content_weight", cfg.weights.content);
    m.set("tv_weight", cfg.weights.tv);
    m.set("extractor_seed", a.extractor_seed);
    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        m.set("val_total_initial", first.total);
        m.set("val_total_final", last.total);
    }
    m.write_beside(&a.out)
}

pub fn cmd_stylize(a: &StylizeArgs) -> CliResult<()> {
    let (model, _) = load_checkpoint(&a.model)?;
    check_style_id(&model, a.style_id)?;
    let content = read_image(&a.input)?;
    let content_mask = a.content_mask.as_deref().map(read_mask).transpose()?.map(|m| binarize(&m));
    let blend_mask = a.blend_mask.as_deref().map(read_mask).transpose()?;
    let guided = a.guided_filter.then_some(GuidedFilterParams {
        radius: a.gf_radius,
        eps: a.gf_eps,
    });
    if let Some(g) = &guided {
        g.validate()?;
    }

    let mut m = Manifest::new("stylize");
    m.set("model", a.model.display());
    m.set("input", a.input.display());
    m.set("output", a.output.display());
    m.set("style_id", a.style_id);
    m.set("photoreal", a.photoreal);

    // The pyramid is built here rather than inside `stylize` so its
    // mat-vec usage can be reported.
    let pyramid = if a.photoreal {
        let padded = pad_to_multiple(&content, SIZE_MULTIPLE);
        let pyr = build_pyramid(&padded, a.matting_eps, a.lambda_star_frac, a.cheb_order)?;
        m.set("lambda_star_frac", a.lambda_star_frac);
        m.set("cheb_order", a.cheb_order);
        m.set("matting_eps", a.matting_eps);
        for (l, f) in pyr.levels().iter().enumerate() {
            m.set(&format!("lambda_max.{l}"), f.cheb().lambda_max());
        }
        pyr.reset_matvec_count();
        Some(pyr)
    } else {
        None
    };
    let opts = InferenceOptions {
        style: a.style_id,
        alpha: a.alpha,
        content_mask,
        filters: pyramid.as_ref().map(|p| FilterSource::Prebuilt(p.filters())),
        guided,
        blend_mask,
    };
    m.set("alpha", opts.effective_alpha());
    let out = stylize(&content, &model, &opts)?;
    if let Some(p) = &pyramid {
        m.set("filtered_channels", filtered_channels(&model));
        m.set("matvecs", p.matvec_count());
    }
    if let Some(path) = &a.content_mask {
        m.set("content_mask", path.display());
    }
    if let Some(path) = &a.blend_mask {
        m.set("blend_mask", path.display());
    }
    if let Some(g) = guided {
        m.set("gf_radius", g.radius);
        m.set("gf_eps", g.eps);
    }
    write_image(&a.output, &out)?;
    m.write_beside(&a.output)
}

/// Channels passed through a filter hook in one full forward pass: every
/// correction and backward map at every level, for each of the four steps.
pub fn filtered_channels(model: &UnrolledModel) -> usize {
    let s = model.schedule();
    let corrections: usize = s.iter().sum();
    let backward: usize = s[..s.len() - 1].iter().sum::<usize>() + 3;
    4 * (corrections + backward)
}

/// Runs the comparison and returns the CSV text, also writing it (and a
/// manifest) when `--output` is set.
pub fn cmd_compare(a: &CompareArgs) -> CliResult<String> {
    let (model, meta) = load_checkpoint(&a.model)?;
    check_style_id(&model, a.style_id)?;
    let grams = meta.style_grams.get(a.style_id).cloned().ok_or_else(|| {
        Error::Malformed(format!("checkpoint has no stored Grams for style {}", a.style_id))
    })?;
    let target = StyleTarget::from_grams(grams)?;
    let fe = extractor_of(&meta)?;
    let weights = weights_of(&meta)?;
    let raw = read_image(&a.input)?;
    let content = pad_to_multiple(&raw, SIZE_MULTIPLE.max(fe.size_multiple()));

    let cfg = DescentConfig {
        mu: a.mu,
        iters: a.iters,
        weights,
        init: a.init,
        seed: a.seed,
        ..Default::default()
    };
    let gd = grad_descent_stylize(&content, &target, &fe, &cfg, None)?;

    // The network always starts from the clean content, as at inference.
    let obj = Objective::new(&fe, &content, &target, weights, None)?;
    let opts = InferenceOptions {
        style: a.style_id,
        alpha: Some(1.0),
        ..Default::default()
    };
    let xs = iterates(&content, &model, &opts)?;
    let net = obj.evaluate(xs.last().expect("five iterates"))?;
    if !net.total().is_finite() {
        return Err(Error::NonFinite("network loss".into()).into());
    }

    let mut csv = format!("{COMPARE_HEADER}\n");
    for (i, b) in gd.trajectory.iter().enumerate() {
        let _ = writeln!(csv, "gd,{}", csv_fields(i, b));
    }
    let _ = writeln!(csv, "network,{}", csv_fields(4, &net));

    if let Some(path) = &a.output {
        fs::write(path, &csv).map_err(|e| io_err(path, e))?;
        let mut m = Manifest::new("compare");
        m.set("model", a.model.display());
        m.set("input", a.input.display());
        m.set("output", path.display());
        m.set("style_id", a.style_id);
        m.set("iters", a.iters);
        m.set("init", a.init);
        m.set("seed", a.seed);
        m.set("mu", gd.mu);
        m.set("mu_selected", a.mu.is_none());
        m.set("lambda_s", target.lambda_s());
        m.set("content_weight", weights.content);
        m.set("tv_weight", weights.tv);
        m.set("extractor_seed", fe.seed());
        let x0 = initial_image(&content, a.init, a.seed);
        m.set("init_checksum", checksum(&x0));
        m.write_beside(path)?;
    }
    Ok(csv)
}

/// FNV-1a over the bit patterns of every value.
pub fn checksum(t: &Tensor) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in t.data() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

pub fn cmd_inspect(a: &InspectArgs) -> CliResult<String> {
    let model = match &a.source.model {
        Some(p) => load_checkpoint(p)?.0,
        None => UnrolledModel::canonical(1),
    };
    let mut s = format!("{}\n", model.param_count());
    let sched = model.schedule();
    for (id, st) in model.styles.iter().enumerate() {
        let _ = write!(s, "style {id}:");
        for (t, row) in st.h.iter().enumerate() {
            for (l, h) in row.iter().enumerate() {
                let _ = write!(s, " H[{t}][{l}]={0}x{0}", h.height());
                debug_assert_eq!(h.height(), sched[l]);
            }
        }
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let mut m = Manifest::new("stylize");
        m.set("alpha", 1.2);
        m.set("path", "a=b.ppm");
        let back = Manifest::parse(&m.render());
        assert_eq!(back, m);
        assert_eq!(back.get("path"), Some("a=b.ppm"));
    }

    #[test]
    fn sidecar_appends_extension() {
        assert_eq!(sidecar(Path::new("out/x.ckpt"), "log.csv"), PathBuf::from("out/x.ckpt.log.csv"));
    }

    #[test]
    fn canonical_filtered_channel_count() {
        assert_eq!(filtered_channels(&UnrolledModel::canonical(1)), 4 * (240 + 112 + 3));
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Core(Error::Truncated("f".into())).exit_code(), EXIT_IO);
        assert_eq!(CliError::Core(Error::NonFinite("loss".into())).exit_code(), EXIT_DIVERGED);
        assert_eq!(CliError::Core(Error::InvalidArgument("a".into())).exit_code(), EXIT_USAGE);
        let t: TrainError = Error::NonFinite("g".into()).into();
        assert_eq!(CliError::Train(t).exit_code(), EXIT_DIVERGED);
    }

    #[test]
    fn flag_defaults() {
        let cli = Cli::try_parse_from(["ustyle", "stylize", "--model", "m", "--input", "i", "--output", "o"]).unwrap();
        let Command::Stylize(a) = cli.command else { panic!("wrong command") };
        assert_eq!((a.lambda_star_frac, a.cheb_order, a.matting_eps), (0.2, 5, 1e-5));
        assert_eq!((a.gf_radius, a.gf_eps), (8, 1e-4));
        assert_eq!(a.alpha, None);
        let cli = Cli::try_parse_from(["ustyle", "train", "--contents", "d", "--style", "s", "--out", "o"]).unwrap();
        let Command::Train(t) = cli.command else { panic!("wrong command") };
        assert_eq!((t.epochs, t.size, t.lr), (2, 64, 1e-5));
        assert!(Cli::try_parse_from(["ustyle", "inspect"]).is_err());
        assert!(Cli::try_parse_from(["ustyle", "compare", "--model", "m", "--input", "i", "--iters", "1", "--init", "bogus"]).is_err());
    }

    #[test]
    fn inspect_canonical_report() {
        let a = InspectArgs {
            source: InspectSource {
                model: None,
                canonical: true,
            },
        };
        let r = cmd_inspect(&a).unwrap();
        let mut lines = r.lines();
        assert_eq!(lines.next(), Some("194755 / 21760 / 281795"));
        let inv = lines.next().unwrap();
        assert!(inv.starts_with("style 0: H[0][0]=16x16"));
        assert!(inv.ends_with("H[3][3]=128x128"));
    }
}
