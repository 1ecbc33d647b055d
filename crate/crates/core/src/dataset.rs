//! Paired corpus generation, storage and splitting.
//!
//! A corpus directory holds `manifest.json` and one directory per sample
//! under `samples/`, each with `x.pfm` (camera image), `y.txl` (taxel array)
//! and `scene.json` (the contact that produced both).

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contact::{
    self, CameraModel, ContactScene, ElasticLayer, Indenter, ObjectShape, Primitive, TaxelIntegrator,
};
use crate::error::{Error, Result};
use crate::formats;
use crate::geometry::{self, PixelGrid, Point, TaxelLayout};
use crate::interp::{ArraySample, TactileImage};

pub const MANIFEST: &str = "manifest.json";
pub const SAMPLES_DIR: &str = "samples";
const CORPUS_FORMAT: &str = "t2t-corpus";
const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Primitives,
    Objects,
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusKind::Primitives => "primitives",
            CorpusKind::Objects => "objects",
        })
    }
}

impl std::str::FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primitives" => Ok(CorpusKind::Primitives),
            "objects" => Ok(CorpusKind::Objects),
            other => Err(Error::InvalidConfig(format!("unknown corpus {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Taxel layout as stored in configs and manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub pitch_mm: f64,
    pub sensing_radius_mm: f64,
    pub positions_mm: Vec<Point>,
}

impl LayoutConfig {
    pub fn from_layout(layout: &TaxelLayout) -> Self {
        Self {
            pitch_mm: layout.pitch(),
            sensing_radius_mm: layout.sensing_radius(),
            positions_mm: layout.positions().to_vec(),
        }
    }

    pub fn build(&self) -> Result<TaxelLayout> {
        TaxelLayout::new(self.positions_mm.clone(), self.pitch_mm, self.sensing_radius_mm)
    }
}

/// Camera rendering settings; the grid is derived from the tactile grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub cols: usize,
    pub rows: usize,
    pub blur_sigma_mm: f64,
    pub depth_scale_mm: f64,
    pub noise_std: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            cols: geometry::CAMERA_COLS,
            rows: geometry::CAMERA_ROWS,
            blur_sigma_mm: 1.0,
            depth_scale_mm: 0.5,
            noise_std: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub corpus: CorpusKind,
    pub grid_points_per_side: usize,
    /// Fixed sampling-grid resolution, mm; `None` scales it per feature as
    /// `grid_span_factor × footprint side / (points − 1)`.
    pub grid_resolution_mm: Option<f64>,
    pub grid_span_factor: f64,
    /// Orientations about the contact normal, radians.
    pub orientations: Vec<f64>,
    pub force_n: f64,
    pub seed: u64,
    /// Adds seeded sensor noise to both modalities.
    pub noise: bool,
    pub layout: LayoutConfig,
    pub layer: ElasticLayer,
    pub camera: CameraConfig,
    /// Pixel pitch of the contact simulation grid, mm.
    pub sim_spacing_mm: f64,
}

/// `n` orientations equally spaced over `[0, 7π/4]`, end points included.
pub fn orientations(n: usize) -> Vec<f64> {
    let top = 7.0 * PI / 4.0;
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect(),
    }
}

impl DatasetConfig {
    /// 7×7 feature-scaled grid, 12 orientations, 8 N.
    pub fn primitives() -> Self {
        Self {
            corpus: CorpusKind::Primitives,
            grid_points_per_side: 7,
            grid_resolution_mm: None,
            grid_span_factor: 1.1,
            orientations: orientations(12),
            force_n: 8.0,
            seed: 0,
            noise: true,
            layout: LayoutConfig::from_layout(&geometry::build_default_layout()),
            layer: ElasticLayer::default(),
            camera: CameraConfig::default(),
            sim_spacing_mm: 0.2,
        }
    }

    /// 3×3 grid at 1.5 mm around each keypoint, 7 orientations, 8 N.
    pub fn objects() -> Self {
        Self {
            corpus: CorpusKind::Objects,
            grid_points_per_side: 3,
            grid_resolution_mm: Some(1.5),
            orientations: orientations(7),
            ..Self::primitives()
        }
    }

    pub fn for_corpus(corpus: CorpusKind) -> Self {
        match corpus {
            CorpusKind::Primitives => Self::primitives(),
            CorpusKind::Objects => Self::objects(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points_per_side == 0 {
            return Err(Error::InvalidConfig("grid_points_per_side must be at least 1".into()));
        }
        if self.orientations.is_empty() {
            return Err(Error::InvalidConfig("orientations must be non-empty".into()));
        }
        if let Some(o) = self.orientations.iter().find(|o| !(0.0..2.0 * PI).contains(*o)) {
            return Err(Error::InvalidConfig(format!("orientation {o} outside [0, 2π)")));
        }
        if !(self.force_n > 0.0) {
            return Err(Error::InvalidConfig("force must be positive".into()));
        }
        if let Some(r) = self.grid_resolution_mm {
            if !(r >= 0.0) {
                return Err(Error::InvalidConfig("grid resolution must be non-negative".into()));
            }
        }
        if !(self.grid_span_factor > 0.0) || !(self.sim_spacing_mm > 0.0) {
            return Err(Error::InvalidConfig(
                "span factor and sim spacing must be positive".into(),
            ));
        }
        if self.camera.cols == 0 || self.camera.rows == 0 {
            return Err(Error::InvalidConfig("camera grid must be non-empty".into()));
        }
        self.layer.validate()?;
        self.layout.build()?;
        Ok(())
    }

    /// Sampling-grid resolution for a primitive.
    pub fn resolution_for(&self, prim: &Primitive) -> f64 {
        match self.grid_resolution_mm {
            Some(r) => r,
            None if self.grid_points_per_side > 1 => {
                self.grid_span_factor * prim.shape.footprint_side() / (self.grid_points_per_side - 1) as f64
            }
            None => 0.0,
        }
    }

    pub fn samples_per_feature(&self) -> usize {
        self.grid_points_per_side * self.grid_points_per_side * self.orientations.len()
    }
}

/// What a sample was taken on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    /// Primitive kind or object name.
    pub feature: String,
    /// Primitive scale version (1..=4); `None` for objects.
    pub version: Option<u8>,
    /// Object keypoint index; `None` for primitives.
    pub keypoint: Option<usize>,
}

/// A scene to render, before any sensing.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub index: usize,
    pub id: String,
    pub split: Split,
    pub meta: SampleMeta,
    pub scene: ContactScene,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: String,
    pub split: Split,
    pub meta: SampleMeta,
    pub scene: ContactScene,
    /// Camera image.
    pub x: TactileImage,
    /// Taxel array.
    pub y: ArraySample,
}

pub trait HasMeta {
    fn meta(&self) -> &SampleMeta;
    fn set_split(&mut self, split: Split);
}

impl HasMeta for SamplePlan {
    fn meta(&self) -> &SampleMeta {
        &self.meta
    }
    fn set_split(&mut self, split: Split) {
        self.split = split;
    }
}

impl HasMeta for PairedSample {
    fn meta(&self) -> &SampleMeta {
        &self.meta
    }
    fn set_split(&mut self, split: Split) {
        self.split = split;
    }
}

/// Places the sensor centre over feature point `target` at `orientation`.
fn pose_over(target: Point, orientation: f64) -> Point {
    let (s, c) = orientation.sin_cos();
    [-(c * target[0] - s * target[1]), -(s * target[0] + c * target[1])]
}

fn grid_offsets(n: usize, resolution: f64) -> Vec<(usize, usize, Point)> {
    let half = (n as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(n * n);
    for gy in 0..n {
        for gx in 0..n {
            out.push((
                gy,
                gx,
                [(gx as f64 - half) * resolution, (gy as f64 - half) * resolution],
            ));
        }
    }
    out
}

/// Enumerates every scene of the corpus described by `cfg`, in a fixed order.
pub fn plan(cfg: &DatasetConfig) -> Result<Vec<SamplePlan>> {
    cfg.validate()?;
    let mut out = Vec::new();
    let n = cfg.grid_points_per_side;
    match cfg.corpus {
        CorpusKind::Primitives => {
            for prim in Primitive::all() {
                let res = cfg.resolution_for(&prim);
                for (gy, gx, offset) in grid_offsets(n, res) {
                    for (oi, &theta) in cfg.orientations.iter().enumerate() {
                        let kind = prim.kind().name();
                        out.push(SamplePlan {
                            index: out.len(),
                            id: format!("{kind}_v{}_r{gy}c{gx}_o{oi:02}", prim.version),
                            split: if prim.version == 4 { Split::Val } else { Split::Train },
                            meta: SampleMeta {
                                feature: kind.to_string(),
                                version: Some(prim.version),
                                keypoint: None,
                            },
                            scene: ContactScene {
                                indenter: Indenter::Primitive(prim),
                                position: pose_over(offset, theta),
                                orientation: theta,
                                force: cfg.force_n,
                            },
                        });
                    }
                }
            }
        }
        CorpusKind::Objects => {
            let res = cfg.grid_resolution_mm.unwrap_or(1.5);
            for object in ObjectShape::all() {
                for (ki, key) in object.keypoints.iter().enumerate() {
                    for (gy, gx, offset) in grid_offsets(n, res) {
                        for (oi, &theta) in cfg.orientations.iter().enumerate() {
                            let name = object.name.name();
                            let target = [key[0] + offset[0], key[1] + offset[1]];
                            out.push(SamplePlan {
                                index: out.len(),
                                id: format!("{name}_k{ki}_r{gy}c{gx}_o{oi:02}"),
                                split: Split::Test,
                                meta: SampleMeta {
                                    feature: name.to_string(),
                                    version: None,
                                    keypoint: Some(ki),
                                },
                                scene: ContactScene::centred_on_object(object.name, target, theta, cfg.force_n),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Versions 1–3 of every kind go to training, version 4 to validation.
pub fn split_by_version<T: HasMeta>(corpus: Vec<T>) -> Result<(Vec<T>, Vec<T>)> {
    let mut seen: std::collections::BTreeMap<String, [bool; 4]> = Default::default();
    for item in &corpus {
        let meta = item.meta();
        let v = meta
            .version
            .ok_or_else(|| Error::InvalidConfig(format!("sample of {} carries no version label", meta.feature)))?;
        if !(1..=4).contains(&v) {
            return Err(Error::InvalidConfig(format!("version {v} outside 1..=4")));
        }
        seen.entry(meta.feature.clone()).or_default()[(v - 1) as usize] = true;
    }
    for (kind, versions) in &seen {
        if let Some(missing) = versions.iter().position(|present| !present) {
            return Err(Error::MissingVersion {
                kind: kind.clone(),
                version: missing as u8 + 1,
            });
        }
    }
    let (mut train, mut val): (Vec<T>, Vec<T>) = corpus.into_iter().partition(|item| item.meta().version != Some(4));
    train.iter_mut().for_each(|t| t.set_split(Split::Train));
    val.iter_mut().for_each(|t| t.set_split(Split::Val));
    Ok((train, val))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sample noise seed for one sensor stream.
pub fn sample_seed(global: u64, index: usize, stream: u64) -> u64 {
    splitmix64(splitmix64(global ^ splitmix64(index as u64)) ^ stream)
}

/// Sensor geometry and precomputed tables shared by every sample.
#[derive(Debug, Clone)]
pub struct Generator {
    pub cfg: DatasetConfig,
    pub layout: TaxelLayout,
    pub tactile_grid: PixelGrid,
    pub sim_grid: PixelGrid,
    pub camera: CameraModel,
    integrator: TaxelIntegrator,
}

impl Generator {
    pub fn new(cfg: DatasetConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = cfg.layout.build()?;
        let tactile_grid = PixelGrid::tactile(&layout)?;
        let camera_grid = PixelGrid::covering(&tactile_grid, cfg.camera.rows, cfg.camera.cols)?;
        let (lo, hi) = camera_grid.extent();
        let margin = 3.0 * cfg.camera.blur_sigma_mm;
        let s = cfg.sim_spacing_mm;
        let cols = ((hi[0] - lo[0] + 2.0 * margin) / s).ceil() as usize;
        let rows = ((hi[1] - lo[1] + 2.0 * margin) / s).ceil() as usize;
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let sim_grid = PixelGrid::centered(rows, cols, center, s)?;
        let integrator = TaxelIntegrator::new(&layout, &sim_grid)?;
        let camera = CameraModel {
            grid: camera_grid,
            blur_sigma_mm: cfg.camera.blur_sigma_mm,
            depth_scale_mm: cfg.camera.depth_scale_mm,
            noise_std: cfg.camera.noise_std,
        };
        Ok(Self {
            cfg,
            layout,
            tactile_grid,
            sim_grid,
            camera,
            integrator,
        })
    }

    /// Taxel array for a scene; identical to what [`Generator::render`] pairs
    /// with the camera image.
    pub fn sense_array(&self, scene: &ContactScene, index: usize) -> Result<ArraySample> {
        let pressure = contact::pressure_field(scene, &self.cfg.layer, &self.sim_grid)?;
        let seed = self.cfg.noise.then(|| sample_seed(self.cfg.seed, index, 0));
        self.integrator.sense(&pressure, &self.cfg.layer, seed)
    }

    pub fn render(&self, plan: &SamplePlan) -> Result<PairedSample> {
        let wrap = |e: Error| Error::Sample {
            id: plan.id.clone(),
            source: Box::new(e),
        };
        let pressure = contact::pressure_field(&plan.scene, &self.cfg.layer, &self.sim_grid).map_err(wrap)?;
        let noise = self.cfg.noise;
        let y = self
            .integrator
            .sense(
                &pressure,
                &self.cfg.layer,
                noise.then(|| sample_seed(self.cfg.seed, plan.index, 0)),
            )
            .map_err(wrap)?;
        let x = contact::sense_camera(
            &pressure,
            &self.cfg.layer,
            &self.camera,
            noise.then(|| sample_seed(self.cfg.seed, plan.index, 1)),
        )
        .map_err(wrap)?;
        Ok(PairedSample {
            id: plan.id.clone(),
            split: plan.split,
            meta: plan.meta.clone(),
            scene: plan.scene,
            x,
            y,
        })
    }

    /// Renders a list of plans in parallel, preserving order.
    pub fn render_all(&self, plans: &[SamplePlan]) -> Result<Vec<PairedSample>> {
        plans.par_iter().map(|p| self.render(p)).collect()
    }
}

/// Per-sample metadata stored as `scene.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub id: String,
    pub index: usize,
    pub split: Split,
    pub meta: SampleMeta,
    pub scene: ContactScene,
    pub camera_grid: PixelGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub path: String,
    pub x_sha256: String,
    pub y_sha256: String,
    pub scene_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub per_feature: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub corpus: CorpusKind,
    pub seed: u64,
    pub config: DatasetConfig,
    pub counts: Counts,
    pub tactile_grid: PixelGrid,
    pub camera_grid: PixelGrid,
    pub samples: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(bytes))
}

/// Writes one sample directory; returns the content hashes of
/// `(x.pfm, y.txl, scene.json)`.
pub fn save_sample(dir: &Path, sample: &PairedSample, index: usize) -> Result<(String, String, String)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scene = SceneFile {
        id: sample.id.clone(),
        index,
        split: sample.split,
        meta: sample.meta.clone(),
        scene: sample.scene,
        camera_grid: *sample.x.grid(),
    };
    let x = write_file(&dir.join("x.pfm"), &formats::encode_pfm(&sample.x))?;
    let y = write_file(&dir.join("y.txl"), &formats::encode_txl(sample.y.values()))?;
    let s = write_file(
        &dir.join("scene.json"),
        serde_json::to_string_pretty(&scene)?.as_bytes(),
    )?;
    Ok((x, y, s))
}

/// Reads one sample directory.
pub fn load_sample(dir: &Path) -> Result<PairedSample> {
    load_sample_checked(dir, None)
}

fn read_checked(path: &Path, expected: Option<&str>) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if let Some(expected) = expected {
        let found = sha256_hex(&bytes);
        if found != expected {
            return Err(Error::ChecksumMismatch {
                path: path.to_path_buf(),
                expected: expected.to_string(),
                found,
            });
        }
    }
    Ok(bytes)
}

fn load_sample_checked(dir: &Path, entry: Option<&ManifestEntry>) -> Result<PairedSample> {
    let scene_path = dir.join("scene.json");
    let scene_bytes = read_checked(&scene_path, entry.map(|e| e.scene_sha256.as_str()))?;
    let scene: SceneFile = serde_json::from_slice(&scene_bytes)?;
    let x_path = dir.join("x.pfm");
    let (rows, cols, data) = formats::decode_pfm(&read_checked(&x_path, entry.map(|e| e.x_sha256.as_str()))?)?;
    if rows != scene.camera_grid.rows || cols != scene.camera_grid.cols {
        return Err(Error::ShapeMismatch(format!(
            "{}: {cols}x{rows} image but scene declares {}x{}",
            x_path.display(),
            scene.camera_grid.cols,
            scene.camera_grid.rows
        )));
    }
    let y_path = dir.join("y.txl");
    let y = formats::decode_txl(&read_checked(&y_path, entry.map(|e| e.y_sha256.as_str()))?, &y_path)?;
    Ok(PairedSample {
        id: scene.id,
        split: scene.split,
        meta: scene.meta,
        scene: scene.scene,
        x: TactileImage::new(scene.camera_grid, data)?,
        y: ArraySample::new(y)?,
    })
}

/// Generates the corpus into `out`, writing the manifest last.
pub fn generate_corpus(cfg: &DatasetConfig, out: &Path) -> Result<Manifest> {
    let generator = Generator::new(cfg.clone())?;
    let plans = plan(cfg)?;
    let samples_dir = out.join(SAMPLES_DIR);
    std::fs::create_dir_all(&samples_dir).map_err(|e| Error::io(&samples_dir, e))?;
    let entries: Vec<ManifestEntry> = plans
        .par_iter()
        .map(|p| {
            let sample = generator.render(p)?;
            let rel = format!("{SAMPLES_DIR}/{}", p.id);
            let (x, y, s) = save_sample(&out.join(&rel), &sample, p.index)?;
            Ok(ManifestEntry {
                id: p.id.clone(),
                split: p.split,
                path: rel,
                x_sha256: x,
                y_sha256: y,
                scene_sha256: s,
            })
        })
        .collect::<Result<_>>()?;
    let count = |s: Split| entries.iter().filter(|e| e.split == s).count();
    let manifest = Manifest {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
        corpus: cfg.corpus,
        seed: cfg.seed,
        config: cfg.clone(),
        counts: Counts {
            total: entries.len(),
            train: count(Split::Train),
            val: count(Split::Val),
            test: count(Split::Test),
            per_feature: cfg.samples_per_feature(),
        },
        tactile_grid: generator.tactile_grid,
        camera_grid: generator.camera.grid,
        samples: entries,
    };
    let path = out.join(MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// An on-disk corpus opened through its manifest.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub manifest_sha256: String,
}

impl Corpus {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_slice(&bytes)?;
        if manifest.format != CORPUS_FORMAT || manifest.version != CORPUS_VERSION {
            return Err(Error::format(
                0,
                format!(
                    "{}: unsupported corpus format {} v{}",
                    path.display(),
                    manifest.format,
                    manifest.version
                ),
            ));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest_sha256: sha256_hex(&bytes),
            manifest,
        })
    }

    pub fn layout(&self) -> Result<TaxelLayout> {
        self.manifest.config.layout.build()
    }

    pub fn load(&self, entry: &ManifestEntry) -> Result<PairedSample> {
        load_sample_checked(&self.root.join(&entry.path), Some(entry)).map_err(|e| Error::Sample {
            id: entry.id.clone(),
            source: Box::new(e),
        })
    }

    /// Loads every sample, verifying content hashes.
    pub fn load_all(&self) -> Result<Vec<PairedSample>> {
        self.manifest.samples.par_iter().map(|e| self.load(e)).collect()
    }

    /// Loads the samples of one split, applying `f` to each as it is read so
    /// full-resolution images need not be held at once.
    pub fn load_split<T: Send>(&self, split: Split, f: impl Fn(PairedSample) -> Result<T> + Sync) -> Result<Vec<T>> {
        self.manifest
            .samples
            .par_iter()
            .filter(|e| e.split == split)
            .map(|e| f(self.load(e)?))
            .collect()
    }
}
