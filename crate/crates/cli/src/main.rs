//! `t2t`: generate paired tactile corpora, train translators, evaluate them
//! and convert between taxel arrays and tactile images.
//!
//! Exit codes: 0 ok, 2 config, 3 I/O or file format, 4 numeric failure,
//! 5 shape mismatch between a model and its inputs.

mod eval;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use t2t_core::dataset::{self, Corpus, CorpusKind, DatasetConfig, Split};
use t2t_core::formats;
use t2t_core::geometry::{build_default_layout, PixelGrid, TaxelLayout};
use t2t_core::interp::{phi, phi_inv, ArraySample, TactileImage};
use t2t_core::metrics::rmse;
use t2t_core::translate::{self, TrainConfig, TranslatorKind};
use t2t_core::Error;

#[derive(Parser)]
#[command(name = "t2t", version, about = "Touch-to-touch translation toolkit")]
struct Cli {
    /// Worker threads, 0 for all cores [env: T2T_THREADS]
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired corpus directory
    Gen(GenArgs),
    /// Train a translator on a primitive corpus
    Train(TrainArgs),
    /// Score models on a corpus and write a report
    Eval(eval::EvalArgs),
    /// Convert between a taxel array (.txl) and a tactile image (.pfm)
    Interp(InterpArgs),
    /// Write a grayscale preview of a .txl or .pfm file
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusArg {
    Primitives,
    Objects,
}

impl From<CorpusArg> for CorpusKind {
    fn from(c: CorpusArg) -> Self {
        match c {
            CorpusArg::Primitives => CorpusKind::Primitives,
            CorpusArg::Objects => CorpusKind::Objects,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Dataset config (JSON, same schema as a manifest's `config`)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    corpus: Option<CorpusArg>,
    /// [env: T2T_SEED]
    #[arg(long)]
    seed: Option<u64>,
    /// Camera resolution as COLSxROWS
    #[arg(long, value_parser = parse_dims)]
    camera: Option<(usize, usize)>,
    /// Sampling-grid points per side
    #[arg(long)]
    grid_points: Option<usize>,
    /// Number of orientations spread over [0, 7π/4]
    #[arg(long)]
    orientations: Option<usize>,
    /// Disable sensor noise
    #[arg(long)]
    no_noise: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Image,
    Array,
    Linear,
}

impl From<ModelArg> for TranslatorKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Image => TranslatorKind::ImageSpace,
            ModelArg::Array => TranslatorKind::ArraySpace,
            ModelArg::Linear => TranslatorKind::LinearBaseline,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Primitive corpus directory (needs train and val samples)
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// Training config (JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    /// [env: T2T_SEED]
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    downsample: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Training-curve log; defaults to the model path with `.log`
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpTo {
    Image,
    Array,
}

#[derive(Args)]
struct InterpArgs {
    #[arg(long, value_enum)]
    to: InterpTo,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Taxel layout JSON; the default 20-taxel layout otherwise
    #[arg(long)]
    layout: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    layout: Option<PathBuf>,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (c, r) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected COLSxROWS, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(c)?, parse(r)?))
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Io { .. } | Error::Format { .. } | Error::ChecksumMismatch { .. } | Error::Json(_) => 3,
        Error::Diverged { .. }
        | Error::SingularSystem(_)
        | Error::ForceUnreachable { .. }
        | Error::DegenerateInput(_)
        | Error::NonDifferentiableKind(_) => 4,
        Error::ShapeMismatch(_) | Error::GridMismatch(_) | Error::LengthMismatch { .. } | Error::OutOfBounds { .. } => {
            5
        }
        _ => 2,
    }
}

fn category(code: u8) -> &'static str {
    match code {
        2 => "config",
        3 => "io",
        4 => "numeric",
        5 => "shape",
        _ => "other",
    }
}

pub(crate) fn env_u64(name: &str) -> Result<Option<u64>, Error> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("{name}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Reads a JSON config; every failure is a configuration error.
fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    write_bytes(path, serde_json::to_string_pretty(value)?.as_bytes())
}

fn load_layout(path: Option<&Path>) -> Result<TaxelLayout, Error> {
    match path {
        Some(p) => TaxelLayout::load(p),
        None => Ok(build_default_layout()),
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(p) => read_config::<DatasetConfig>(p)?,
        None => DatasetConfig::for_corpus(args.corpus.map(Into::into).unwrap_or(CorpusKind::Primitives)),
    };
    if let Some(c) = args.corpus {
        let kind: CorpusKind = c.into();
        if args.config.is_some() && kind != cfg.corpus {
            return Err(Error::InvalidConfig(format!(
                "--corpus {kind} contradicts config corpus {}",
                cfg.corpus
            )));
        }
    }
    if let Some(seed) = args.seed.or(env_u64("T2T_SEED")?) {
        cfg.seed = seed;
    }
    if let Some((cols, rows)) = args.camera {
        cfg.camera.cols = cols;
        cfg.camera.rows = rows;
    }
    if let Some(n) = args.grid_points {
        cfg.grid_points_per_side = n;
    }
    if let Some(n) = args.orientations {
        cfg.orientations = dataset::orientations(n);
    }
    if args.no_noise {
        cfg.noise = false;
    }
    eprintln!(
        "gen: {} corpus, seed {}, camera {}x{} -> {}",
        cfg.corpus,
        cfg.seed,
        cfg.camera.cols,
        cfg.camera.rows,
        args.out.display()
    );
    let manifest = dataset::generate_corpus(&cfg, &args.out)?;
    let c = &manifest.counts;
    eprintln!(
        "gen: {} samples ({} train, {} val, {} test; {} per feature)",
        c.total, c.train, c.val, c.test, c.per_feature
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainRun<'a> {
    command: &'static str,
    model_kind: TranslatorKind,
    config: &'a TrainConfig,
    corpus: String,
    corpus_manifest_sha256: &'a str,
    model_sha256: String,
    train_samples: usize,
    val_samples: usize,
    best_epoch: u32,
    epochs_run: u32,
    best_val_l3: f64,
    val_rmse: f64,
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let kind: TranslatorKind = args.model.into();
    let mut cfg = match &args.config {
        Some(p) => read_config::<TrainConfig>(p)?,
        None => TrainConfig::for_kind(kind),
    };
    if let Some(seed) = args.seed.or(env_u64("T2T_SEED")?) {
        cfg.seed = seed;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.patience {
        cfg.patience = v;
    }
    if let Some(v) = args.downsample {
        cfg.downsample = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    cfg.validate()?;

    let corpus = Corpus::open(&args.corpus)?;
    let layout = corpus.layout()?;
    let camera_grid = corpus.manifest.camera_grid;
    if (camera_grid.rows % cfg.downsample != 0) || (camera_grid.cols % cfg.downsample != 0) {
        return Err(Error::InvalidConfig(format!(
            "downsample {} does not divide the {}x{} camera grid",
            cfg.downsample, camera_grid.cols, camera_grid.rows
        )));
    }
    let ds = cfg.downsample;
    let load = |split| corpus.load_split(split, |s| Ok((s.x.downsample(ds)?, s.y)));
    let train_set = load(Split::Train)?;
    let val_set = load(Split::Val)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} has {} train and {} val samples; both splits are required",
            args.corpus.display(),
            train_set.len(),
            val_set.len()
        )));
    }
    eprintln!(
        "train: {kind} model on {} train / {} val samples, seed {}",
        train_set.len(),
        val_set.len(),
        cfg.seed
    );
    let (model, history) = translate::train_logged(kind, &cfg, &layout, &camera_grid, &train_set, &val_set)?;

    let mut log = String::from("epoch train_l3 val_l3\n");
    for r in &history {
        log.push_str(&format!("{} {} {}\n", r.epoch, r.train_l3, r.val_l3));
    }
    let log_path = args.log.clone().unwrap_or_else(|| args.out.with_extension("log"));
    write_bytes(&log_path, log.as_bytes())?;

    let bytes = translate::encode_model(&model);
    write_bytes(&args.out, &bytes)?;

    let val_rmse = val_set
        .iter()
        .map(|(x, y)| rmse(y, &model.predict(x)?))
        .collect::<Result<Vec<f64>, Error>>()?
        .iter()
        .sum::<f64>()
        / val_set.len() as f64;
    let run = TrainRun {
        command: "train",
        model_kind: kind,
        config: &cfg,
        corpus: args.corpus.display().to_string(),
        corpus_manifest_sha256: &corpus.manifest_sha256,
        model_sha256: dataset::sha256_hex(&bytes),
        train_samples: train_set.len(),
        val_samples: val_set.len(),
        best_epoch: model.meta.best_epoch,
        epochs_run: model.meta.epochs_run,
        best_val_l3: model.meta.best_val_l3,
        val_rmse,
    };
    write_json(&args.out.with_extension("run.json"), &run)?;
    eprintln!(
        "train: best epoch {} of {}, val L3 {:.1}, val rmse {:.1} counts -> {}",
        model.meta.best_epoch,
        model.meta.epochs_run,
        model.meta.best_val_l3,
        val_rmse,
        args.out.display()
    );
    Ok(())
}

fn has_ext(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn cmd_interp(args: InterpArgs) -> Result<(), Error> {
    let layout = load_layout(args.layout.as_deref())?;
    let grid = PixelGrid::tactile(&layout)?;
    match args.to {
        InterpTo::Image => {
            let y = formats::read_array(&args.input)?;
            let img = phi(&y, &layout, &grid)?;
            formats::write_pfm(&args.output, &img)?;
        }
        InterpTo::Array => {
            let img = formats::read_pfm(&args.input, &grid)?;
            let y = phi_inv(&img, &layout)?;
            formats::write_txl(&args.output, y.values())?;
        }
    }
    eprintln!("interp: {} -> {}", args.input.display(), args.output.display());
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), Error> {
    let img = if has_ext(&args.input, "pfm") {
        let bytes = std::fs::read(&args.input).map_err(|e| Error::Io {
            path: args.input.clone(),
            source: e,
        })?;
        let (rows, cols, data) = formats::decode_pfm(&bytes)?;
        TactileImage::new(PixelGrid::new(rows, cols, [0.0, 0.0], [1.0, 1.0])?, data)?
    } else {
        let layout = load_layout(args.layout.as_deref())?;
        let y: ArraySample = formats::read_array(&args.input)?;
        phi(&y, &layout, &PixelGrid::tactile(&layout)?)?
    };
    let (pixels, (lo, hi)) = formats::to_gray(&img);
    write_bytes(&args.output, &formats::encode_pgm(img.cols(), img.rows(), &pixels))?;
    eprintln!(
        "render: {} -> {} ({}x{}, scale [{lo}, {hi}])",
        args.input.display(),
        args.output.display(),
        img.cols(),
        img.rows()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let threads = match cli.threads {
        Some(n) => Some(n as u64),
        None => env_u64("T2T_THREADS")?,
    };
    if let Some(n) = threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => eval::cmd_eval(a),
        Command::Interp(a) => cmd_interp(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("t2t: error[{}]: {msg}", category(code));
            ExitCode::from(code)
        }
    }
}
