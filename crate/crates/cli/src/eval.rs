use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use t2t_core::dataset::{self, Corpus, ManifestEntry, Split};
use t2t_core::formats;
use t2t_core::interp::{Rasterizer, TactileImage};
use t2t_core::metrics::{EvalReport, SampleScore};
use t2t_core::translate::{self, TranslatorKind, TranslatorModel};
use t2t_core::Error;

const GUTTER: usize = 4;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

impl SplitArg {
    fn matches(self, s: Split) -> bool {
        match self {
            SplitArg::All => true,
            SplitArg::Train => s == Split::Train,
            SplitArg::Val => s == Split::Val,
            SplitArg::Test => s == Split::Test,
        }
    }
}

#[derive(Args)]
pub struct EvalArgs {
    /// Corpus directory
    #[arg(long)]
    corpus: PathBuf,
    /// Model file; repeat to compare several
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Also score the ground truth against itself
    #[arg(long)]
    oracle: bool,
    #[arg(long, value_enum, default_value = "all")]
    split: SplitArg,
    /// JSON report path
    #[arg(long)]
    out: PathBuf,
    /// Text table path; defaults to the report path with `.txt`
    #[arg(long)]
    table: Option<PathBuf>,
    /// Directory for X | Î | φ(Ŷ) | I preview strips
    #[arg(long)]
    render: Option<PathBuf>,
    /// Strips written per model
    #[arg(long, default_value_t = 16)]
    render_limit: usize,
    /// Contact threshold as a fraction of each image's maximum
    #[arg(long, default_value_t = 0.25)]
    iou_threshold: f64,
    /// Evaluate only the first N selected samples
    #[arg(long)]
    limit: Option<usize>,
}

struct Entrant {
    name: String,
    model: Option<TranslatorModel>,
    sha256: Option<String>,
}

fn unique_name(stem: &str, taken: &[Entrant]) -> String {
    let mut name = stem.to_string();
    let mut i = 2;
    while taken.iter().any(|e| e.name == name) {
        name = format!("{stem}-{i}");
        i += 1;
    }
    name
}

fn load_entrants(args: &EvalArgs, corpus: &Corpus) -> Result<Vec<Entrant>, Error> {
    let mut out = Vec::new();
    if args.oracle {
        out.push(Entrant {
            name: "oracle".into(),
            model: None,
            sha256: None,
        });
    }
    let layout = corpus.layout()?;
    let cam = corpus.manifest.camera_grid;
    for path in &args.models {
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let model = translate::decode_model(&bytes)?;
        if model.camera_grid().rows != cam.rows || model.camera_grid().cols != cam.cols {
            return Err(Error::ShapeMismatch(format!(
                "{} expects a {}x{} camera, corpus has {}x{}",
                path.display(),
                model.camera_grid().cols,
                model.camera_grid().rows,
                cam.cols,
                cam.rows
            )));
        }
        if model.layout() != &layout {
            return Err(Error::ShapeMismatch(format!(
                "{} was trained for a different taxel layout",
                path.display()
            )));
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        out.push(Entrant {
            name: unique_name(stem, &out),
            model: Some(model),
            sha256: Some(dataset::sha256_hex(&bytes)),
        });
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig(
            "nothing to evaluate: pass --model or --oracle".into(),
        ));
    }
    Ok(out)
}

fn strip(panels: &[Option<&TactileImage>], rows: usize, cols: usize) -> Vec<u8> {
    let width = panels.len() * cols + (panels.len() - 1) * GUTTER;
    let mut out = vec![255u8; width * rows];
    for (k, panel) in panels.iter().enumerate() {
        let x0 = k * (cols + GUTTER);
        let pixels = match panel {
            Some(img) => formats::to_gray(img).0,
            None => vec![0u8; rows * cols],
        };
        for r in 0..rows {
            out[r * width + x0..r * width + x0 + cols].copy_from_slice(&pixels[r * cols..(r + 1) * cols]);
        }
    }
    out
}

fn score_sample(
    corpus: &Corpus,
    entry: &ManifestEntry,
    entrants: &[Entrant],
    raster: &Rasterizer,
    args: &EvalArgs,
    render_this: bool,
) -> Result<Vec<SampleScore>, Error> {
    let sample = corpus.load(entry)?;
    let truth = raster.apply(&sample.y)?;
    let split = sample.split.to_string();
    let mut scores = Vec::with_capacity(entrants.len());
    for ent in entrants {
        let (y_hat, image) = match &ent.model {
            Some(m) => m.predict_with_image(&sample.x, Some(raster))?,
            None => (sample.y.clone(), truth.clone()),
        };
        scores.push(SampleScore::compute(
            &sample.id,
            &ent.name,
            &split,
            &sample.y,
            &y_hat,
            &truth,
            &image,
            args.iou_threshold,
        )?);
        if let (true, Some(dir)) = (render_this, &args.render) {
            let grid = raster.grid();
            let x = sample.x.resample(grid, 0.0);
            let is_image = ent
                .model
                .as_ref()
                .is_some_and(|m| m.kind() == TranslatorKind::ImageSpace);
            let i_hat = if is_image { Some(&image) } else { None };
            let phi_hat = if is_image { raster.apply(&y_hat)? } else { image.clone() };
            let pixels = strip(&[Some(&x), i_hat, Some(&phi_hat), Some(&truth)], grid.rows, grid.cols);
            let width = 4 * grid.cols + 3 * GUTTER;
            let path = dir.join(format!("{}_{}.pgm", ent.name, sample.id));
            formats::write_pgm(&path, width, grid.rows, &pixels)?;
        }
    }
    Ok(scores)
}

pub fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    if !(args.iou_threshold > 0.0 && args.iou_threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "--iou-threshold must lie in (0, 1), got {}",
            args.iou_threshold
        )));
    }
    let corpus = Corpus::open(&args.corpus)?;
    let entrants = load_entrants(&args, &corpus)?;
    let layout = corpus.layout()?;
    let raster = Rasterizer::new(&layout, &corpus.manifest.tactile_grid)?;
    let mut entries: Vec<&ManifestEntry> = corpus
        .manifest
        .samples
        .iter()
        .filter(|e| args.split.matches(e.split))
        .collect();
    if let Some(n) = args.limit {
        entries.truncate(n);
    }
    if entries.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} has no samples in the selected split",
            args.corpus.display()
        )));
    }
    if let Some(dir) = &args.render {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
    }
    eprintln!("eval: {} samples, {} entrants", entries.len(), entrants.len());

    let per_sample: Vec<Vec<SampleScore>> = entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| score_sample(&corpus, e, &entrants, &raster, &args, i < args.render_limit))
        .collect::<Result<_, _>>()?;
    let ordered = (0..entrants.len())
        .flat_map(|m| per_sample.iter().map(move |s| s[m].clone()))
        .collect();

    let mut report = EvalReport::new(ordered);
    report.provenance = json!({
        "corpus": args.corpus.display().to_string(),
        "corpus_manifest_sha256": corpus.manifest_sha256,
        "iou_threshold": args.iou_threshold,
        "models": entrants.iter().map(|e| json!({"name": e.name, "sha256": e.sha256})).collect::<Vec<_>>(),
    });
    crate::write_json(&args.out, &report)?;
    let table = report.table();
    let table_path = args.table.clone().unwrap_or_else(|| args.out.with_extension("txt"));
    crate::write_bytes(&table_path, table.as_bytes())?;
    print!("{table}");
    Ok(())
}
