//! Camera-to-taxel translators: an image-space encoder–decoder whose output
//! is read back through `phi_inv`, an array-space convolutional regressor,
//! and a closed-form ridge baseline.

mod io;
mod linear;
pub mod nn;
mod train;

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{PixelGrid, Point, TaxelLayout};
use crate::interp::{self, bilinear_weights, ArraySample, Rasterizer, TactileImage};
use crate::FULLSCALE;

pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use linear::{fit_linear_baseline, fit_ridge, RidgeProblem};
pub use train::{train, train_logged, EpochRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorKind {
    ImageSpace,
    ArraySpace,
    LinearBaseline,
}

impl TranslatorKind {
    pub const ALL: [TranslatorKind; 3] = [
        TranslatorKind::ImageSpace,
        TranslatorKind::ArraySpace,
        TranslatorKind::LinearBaseline,
    ];

    /// Short name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            TranslatorKind::ImageSpace => "image",
            TranslatorKind::ArraySpace => "array",
            TranslatorKind::LinearBaseline => "linear",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            TranslatorKind::ImageSpace => 0,
            TranslatorKind::ArraySpace => 1,
            TranslatorKind::LinearBaseline => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn differentiable(self) -> bool {
        self != TranslatorKind::LinearBaseline
    }
}

impl fmt::Display for TranslatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TranslatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" | "image_space" => Ok(TranslatorKind::ImageSpace),
            "array" | "array_space" => Ok(TranslatorKind::ArraySpace),
            "linear" | "linear_baseline" => Ok(TranslatorKind::LinearBaseline),
            other => Err(Error::InvalidConfig(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Network sizes. `channels` lists per-level widths of the encoder–decoder
/// or per-block widths of the regressor; `pool` is the regressor's pooled
/// grid (rows, cols).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub channels: Vec<usize>,
    pub pool: [usize; 2],
}

impl Architecture {
    pub fn default_for(kind: TranslatorKind) -> Self {
        match kind {
            TranslatorKind::ImageSpace => Self {
                channels: vec![8, 16, 16, 16],
                pool: [0, 0],
            },
            TranslatorKind::ArraySpace => Self {
                channels: vec![16, 16, 16],
                pool: [4, 5],
            },
            TranslatorKind::LinearBaseline => Self {
                channels: Vec::new(),
                pool: [0, 0],
            },
        }
    }

    fn validate(&self, kind: TranslatorKind) -> Result<()> {
        let ok = match kind {
            TranslatorKind::ImageSpace => !self.channels.is_empty(),
            TranslatorKind::ArraySpace => !self.channels.is_empty() && self.pool[0] > 0 && self.pool[1] > 0,
            TranslatorKind::LinearBaseline => self.channels.is_empty(),
        };
        if !ok || self.channels.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "architecture {self:?} is invalid for {kind}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Block-average factor applied to the camera image.
    pub downsample: usize,
    /// Weight of the pixelwise reconstruction term of the image-space loss.
    #[serde(default = "default_recon_weight")]
    pub recon_weight: f64,
    #[serde(default)]
    pub architecture: Option<Architecture>,
    /// Ridge strength of the linear baseline; `None` picks the best of
    /// `ridge_grid` on the validation split.
    #[serde(default)]
    pub ridge: Option<f64>,
    #[serde(default = "default_ridge_grid")]
    pub ridge_grid: Vec<f64>,
}

fn default_recon_weight() -> f64 {
    20.0
}

fn default_ridge_grid() -> Vec<f64> {
    vec![1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
}

impl TrainConfig {
    pub fn for_kind(kind: TranslatorKind) -> Self {
        Self {
            learning_rate: 2e-3,
            batch_size: if kind == TranslatorKind::ImageSpace { 16 } else { 8 },
            max_epochs: if kind == TranslatorKind::ImageSpace { 30 } else { 60 },
            patience: if kind == TranslatorKind::ImageSpace { 8 } else { 10 },
            seed: 0,
            downsample: 4,
            recon_weight: default_recon_weight(),
            architecture: None,
            ridge: None,
            ridge_grid: default_ridge_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.patience == 0 || self.downsample == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, patience and downsample must be at least 1".into(),
            ));
        }
        if !(self.recon_weight >= 0.0) {
            return Err(Error::InvalidConfig("recon_weight must be non-negative".into()));
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0) {
                return Err(Error::InvalidConfig("ridge must be non-negative".into()));
            }
        }
        if self.ridge.is_none() && (self.ridge_grid.is_empty() || self.ridge_grid.iter().any(|r| !(*r >= 0.0))) {
            return Err(Error::InvalidConfig("ridge_grid must hold non-negative values".into()));
        }
        Ok(())
    }

    pub fn architecture_for(&self, kind: TranslatorKind) -> Architecture {
        self.architecture
            .clone()
            .unwrap_or_else(|| Architecture::default_for(kind))
    }

    /// First eight bytes (little-endian) of the SHA-256 of the JSON form.
    pub fn config_hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: u32,
    /// 1-based epoch whose parameters were kept; 0 for closed-form fits.
    pub best_epoch: u32,
    /// Mean validation L3 (raw counts²) of the kept parameters.
    pub best_val_l3: f64,
    pub seed: u64,
    pub config_hash: u64,
}

/// Output of [`TranslatorModel::forward`].
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Generated tactile image on the 396×240 grid, in counts.
    Image(TactileImage),
    Array(ArraySample),
}

/// Σᵢ (yᵢ − ŷᵢ)².
pub fn l3_loss(y: &ArraySample, y_hat: &ArraySample) -> Result<f64> {
    l3_values(y.values(), y_hat.values())
}

pub fn l3_values(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: y_hat.len(),
        });
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Bilinear weights at `p` with the point clamped into the span of pixel
/// centres, so every point of the plane has a value.
pub fn clamped_bilinear(grid: &PixelGrid, p: Point) -> [(usize, f64); 4] {
    let (c, r) = grid.to_pixel(p);
    let c = c.clamp(0.0, grid.cols as f64 - 1.0);
    let r = r.clamp(0.0, grid.rows as f64 - 1.0);
    bilinear_weights(grid, c, r).expect("clamped coordinates lie inside the grid")
}

/// Everything needed to run a model's parameters in double precision.
#[derive(Debug, Clone)]
pub(crate) struct Net {
    pub kind: TranslatorKind,
    pub graph: Option<nn::Graph>,
    pub input_grid: PixelGrid,
    pub n_out: usize,
    /// Image space: for each taxel, weights over native output pixels of the
    /// composed resize-then-`phi_inv` readout.
    pub readout: Vec<Vec<(usize, f64)>>,
    /// Image space: `phi` onto the native output grid, for the
    /// reconstruction target.
    pub recon: Option<Rasterizer>,
    /// Image space: taxel-hull membership of each tactile pixel.
    pub hull: Vec<bool>,
}

impl Net {
    pub fn new(
        kind: TranslatorKind,
        arch: &Architecture,
        input_grid: PixelGrid,
        layout: &TaxelLayout,
        tactile_grid: &PixelGrid,
    ) -> Result<Self> {
        arch.validate(kind)?;
        let n_out = layout.n_taxels();
        let (rows, cols) = (input_grid.rows, input_grid.cols);
        let mut hull = Vec::new();
        let (graph, readout, recon) = match kind {
            TranslatorKind::ImageSpace => {
                let taxel_px = interp::taxel_weights(layout, tactile_grid)?;
                let readout = taxel_px
                    .iter()
                    .map(|w| {
                        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(16);
                        for &(pix, wt) in w {
                            if wt == 0.0 {
                                continue;
                            }
                            let p = tactile_grid.position(pix / tactile_grid.cols, pix % tactile_grid.cols);
                            for (i, v) in clamped_bilinear(&input_grid, p) {
                                match merged.iter_mut().find(|(j, _)| *j == i) {
                                    Some(slot) => slot.1 += wt * v,
                                    None => merged.push((i, wt * v)),
                                }
                            }
                        }
                        merged
                    })
                    .collect();
                let recon = Rasterizer::new(layout, &input_grid)?;
                let tactile = Rasterizer::new(layout, tactile_grid)?;
                hull = (0..tactile_grid.len()).map(|i| tactile.in_hull(i)).collect();
                (Some(nn::unet(rows, cols, &arch.channels)), readout, Some(recon))
            }
            TranslatorKind::ArraySpace => (
                Some(nn::regressor(rows, cols, &arch.channels, arch.pool, n_out)),
                Vec::new(),
                None,
            ),
            TranslatorKind::LinearBaseline => (None, Vec::new(), None),
        };
        Ok(Self {
            kind,
            graph,
            input_grid,
            n_out,
            readout,
            recon,
            hull,
        })
    }

    pub fn n_params(&self) -> usize {
        match &self.graph {
            Some(g) => g.n_params,
            None => self.n_out * self.input_grid.len() + self.n_out,
        }
    }

    fn tensor(&self, x: &TactileImage) -> nn::Tensor {
        nn::Tensor::from_vec(1, x.rows(), x.cols(), x.data().to_vec())
    }

    /// Network output before any readout, fullscale-normalized.
    pub fn activations(&self, params: &[f64], x: &TactileImage) -> Vec<nn::Tensor> {
        self.graph
            .as_ref()
            .expect("differentiable kind")
            .forward(params, self.tensor(x))
    }

    /// Unclamped taxel prediction in raw counts.
    pub fn predict_raw(&self, params: &[f64], x: &TactileImage) -> Vec<f64> {
        match self.kind {
            TranslatorKind::LinearBaseline => {
                let d = self.input_grid.len();
                let xd = x.data();
                (0..self.n_out)
                    .map(|o| {
                        params[self.n_out * d + o]
                            + params[o * d..(o + 1) * d]
                                .iter()
                                .zip(xd)
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                    })
                    .collect()
            }
            TranslatorKind::ArraySpace => {
                let acts = self.activations(params, x);
                acts.last()
                    .expect("output")
                    .data
                    .iter()
                    .map(|v| v * FULLSCALE)
                    .collect()
            }
            TranslatorKind::ImageSpace => {
                let acts = self.activations(params, x);
                let out = &acts.last().expect("output").data;
                self.readout
                    .iter()
                    .map(|w| FULLSCALE * w.iter().map(|&(i, wt)| out[i] * wt).sum::<f64>())
                    .collect()
            }
        }
    }

    /// Normalized L3 (plus the weighted reconstruction term for image space)
    /// for one pair, accumulating its gradient into `grad`. Returns
    /// `(l3, total)`.
    pub fn loss_grad(
        &self,
        params: &[f64],
        x: &TactileImage,
        y: &[f64],
        recon_weight: f64,
        grad: &mut [f64],
    ) -> (f64, f64) {
        let graph = self.graph.as_ref().expect("differentiable kind");
        let acts = self.activations(params, x);
        let out = &acts.last().expect("output").data;
        let target: Vec<f64> = y.iter().map(|v| v / FULLSCALE).collect();
        match self.kind {
            TranslatorKind::ArraySpace => {
                let diff: Vec<f64> = out.iter().zip(&target).map(|(a, b)| a - b).collect();
                let l3 = diff.iter().map(|d| d * d).sum::<f64>();
                graph.backward(params, &acts, diff.iter().map(|d| 2.0 * d).collect(), grad);
                (l3, l3)
            }
            TranslatorKind::ImageSpace => {
                let mut g_out = vec![0.0; out.len()];
                let mut l3 = 0.0;
                for (w, t) in self.readout.iter().zip(&target) {
                    let pred: f64 = w.iter().map(|&(i, wt)| out[i] * wt).sum();
                    let d = pred - t;
                    l3 += d * d;
                    for &(i, wt) in w {
                        g_out[i] += 2.0 * d * wt;
                    }
                }
                let mut total = l3;
                if recon_weight > 0.0 {
                    let rec = self
                        .recon
                        .as_ref()
                        .expect("image kind has a rasterizer")
                        .apply_raw(&target)
                        .expect("target length matches layout");
                    let scale = recon_weight / out.len() as f64;
                    for ((g, o), r) in g_out.iter_mut().zip(out).zip(&rec) {
                        let d = o - r;
                        total += scale * d * d;
                        *g += 2.0 * scale * d;
                    }
                }
                graph.backward(params, &acts, g_out, grad);
                (l3, total)
            }
            TranslatorKind::LinearBaseline => unreachable!("linear models have no gradient"),
        }
    }
}

/// A trained (or zero-initialized) translator with everything needed to
/// apply it: sensor geometry, architecture and parameters.
#[derive(Debug, Clone)]
pub struct TranslatorModel {
    kind: TranslatorKind,
    arch: Architecture,
    camera_grid: PixelGrid,
    downsample: usize,
    layout: TaxelLayout,
    tactile_grid: PixelGrid,
    params: Vec<f32>,
    pub meta: TrainingMeta,
    net: Net,
}

impl PartialEq for TranslatorModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.arch == other.arch
            && self.camera_grid == other.camera_grid
            && self.downsample == other.downsample
            && self.layout == other.layout
            && self
                .params
                .iter()
                .map(|v| v.to_bits())
                .eq(other.params.iter().map(|v| v.to_bits()))
            && self.meta == other.meta
    }
}

impl TranslatorModel {
    pub fn new(
        kind: TranslatorKind,
        arch: Architecture,
        camera_grid: PixelGrid,
        downsample: usize,
        layout: TaxelLayout,
        params: Vec<f32>,
        meta: TrainingMeta,
    ) -> Result<Self> {
        if downsample == 0 {
            return Err(Error::InvalidConfig("downsample must be at least 1".into()));
        }
        let input_grid = camera_grid.downsampled(downsample)?;
        let tactile_grid = PixelGrid::tactile(&layout)?;
        let net = Net::new(kind, &arch, input_grid, &layout, &tactile_grid)?;
        if params.len() != net.n_params() {
            return Err(Error::LengthMismatch {
                expected: net.n_params(),
                actual: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("parameter {i} is not finite")));
        }
        Ok(Self {
            kind,
            arch,
            camera_grid,
            downsample,
            layout,
            tactile_grid,
            params,
            meta,
            net,
        })
    }

    /// A model whose parameters are all zero.
    pub fn zeros(
        kind: TranslatorKind,
        arch: Architecture,
        camera_grid: PixelGrid,
        downsample: usize,
        layout: TaxelLayout,
    ) -> Result<Self> {
        if downsample == 0 {
            return Err(Error::InvalidConfig("downsample must be at least 1".into()));
        }
        let input_grid = camera_grid.downsampled(downsample)?;
        let tactile_grid = PixelGrid::tactile(&layout)?;
        let n = Net::new(kind, &arch, input_grid, &layout, &tactile_grid)?.n_params();
        Self::new(
            kind,
            arch,
            camera_grid,
            downsample,
            layout,
            vec![0.0; n],
            TrainingMeta::default(),
        )
    }

    /// A model with freshly initialized parameters (zeros for the linear
    /// kind), as training would start from with this seed.
    pub fn initialized(
        kind: TranslatorKind,
        arch: Architecture,
        camera_grid: PixelGrid,
        downsample: usize,
        layout: TaxelLayout,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(kind, arch, camera_grid, downsample, layout)?;
        if let Some(graph) = &model.net.graph {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            model.params = graph.init(&mut rng).into_iter().map(|v| v as f32).collect();
        }
        Ok(model)
    }

    pub fn kind(&self) -> TranslatorKind {
        self.kind
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn camera_grid(&self) -> &PixelGrid {
        &self.camera_grid
    }

    pub fn downsample(&self) -> usize {
        self.downsample
    }

    pub fn layout(&self) -> &TaxelLayout {
        &self.layout
    }

    pub fn tactile_grid(&self) -> &PixelGrid {
        &self.tactile_grid
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Network input dimensions (rows, cols) after downsampling.
    pub fn input_shape(&self) -> (usize, usize) {
        (self.net.input_grid.rows, self.net.input_grid.cols)
    }

    /// Parameter tensor shapes in storage order.
    pub fn tensor_dims(&self) -> Vec<Vec<usize>> {
        match &self.net.graph {
            Some(g) => g.params.iter().map(|t| t.dims.clone()).collect(),
            None => vec![vec![self.net.n_out, self.net.input_grid.len()], vec![self.net.n_out]],
        }
    }

    pub(crate) fn net(&self) -> &Net {
        &self.net
    }

    pub(crate) fn params_f64(&self) -> Vec<f64> {
        self.params.iter().map(|&v| v as f64).collect()
    }

    /// Accepts either a full-resolution camera image or one already
    /// downsampled to the network input grid.
    pub fn prepare_input<'a>(&self, x: &'a TactileImage) -> Result<Cow<'a, TactileImage>> {
        let (rows, cols) = (x.rows(), x.cols());
        if (rows, cols) == self.input_shape() {
            return Ok(Cow::Borrowed(x));
        }
        if (rows, cols) == (self.camera_grid.rows, self.camera_grid.cols) {
            return Ok(Cow::Owned(x.downsample(self.downsample)?));
        }
        Err(Error::ShapeMismatch(format!(
            "input is {cols}x{rows}, model expects {}x{} (or {}x{} before downsampling)",
            self.input_shape().1,
            self.input_shape().0,
            self.camera_grid.cols,
            self.camera_grid.rows
        )))
    }

    /// Image space: the generated tactile image Î; other kinds: the clamped
    /// taxel array.
    pub fn forward(&self, x: &TactileImage) -> Result<Prediction> {
        let x = self.prepare_input(x)?;
        let params = self.params_f64();
        match self.kind {
            TranslatorKind::ImageSpace => {
                let acts = self.net.activations(&params, &x);
                let out = &acts.last().expect("output").data;
                let tg = self.tactile_grid;
                let mut data = Vec::with_capacity(tg.len());
                for r in 0..tg.rows {
                    for c in 0..tg.cols {
                        // Outside the taxel hull the tactile image is 0 by
                        // definition; inside it is limited to the sensor range.
                        if !self.net.hull[r * tg.cols + c] {
                            data.push(0.0);
                            continue;
                        }
                        let w = clamped_bilinear(&self.net.input_grid, tg.position(r, c));
                        let v = FULLSCALE * w.iter().map(|&(i, wt)| out[i] * wt).sum::<f64>();
                        data.push(v.clamp(0.0, FULLSCALE));
                    }
                }
                Ok(Prediction::Image(TactileImage::new(tg, data)?))
            }
            _ => Ok(Prediction::Array(ArraySample::clamped(
                self.net.predict_raw(&params, &x),
            ))),
        }
    }

    /// Taxel prediction Ŷ; for image space this is `phi_inv(forward(x))`.
    pub fn predict(&self, x: &TactileImage) -> Result<ArraySample> {
        match self.forward(x)? {
            Prediction::Image(img) => interp::phi_inv(&img, &self.layout),
            Prediction::Array(y) => Ok(y),
        }
    }

    /// Tactile image to score against `phi(Y)`: Î for image space, `phi(Ŷ)`
    /// otherwise.
    pub fn predicted_image(&self, x: &TactileImage) -> Result<TactileImage> {
        Ok(self.predict_with_image(x, None)?.1)
    }

    /// [`TranslatorModel::predict`] and [`TranslatorModel::predicted_image`]
    /// from a single forward pass. A rasterizer for the tactile grid may be
    /// supplied to avoid rebuilding it.
    pub fn predict_with_image(
        &self,
        x: &TactileImage,
        rasterizer: Option<&Rasterizer>,
    ) -> Result<(ArraySample, TactileImage)> {
        match self.forward(x)? {
            Prediction::Image(img) => Ok((interp::phi_inv(&img, &self.layout)?, img)),
            Prediction::Array(y) => {
                let img = match rasterizer {
                    Some(r) => r.apply(&y)?,
                    None => interp::phi(&y, &self.layout, &self.tactile_grid)?,
                };
                Ok((y, img))
            }
        }
    }
}

/// Gradient of the L3 loss (on fullscale-normalized arrays) with respect to
/// the model parameters.
pub fn backward(model: &TranslatorModel, x: &TactileImage, y: &ArraySample) -> Result<Vec<f64>> {
    backward_masked(model, x, y, None)
}

impl TranslatorModel {
    fn check_differentiable(&self, params: &[f64], y: &ArraySample) -> Result<()> {
        if !self.kind.differentiable() {
            return Err(Error::NonDifferentiableKind(self.kind.to_string()));
        }
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        if y.len() != self.net.n_out {
            return Err(Error::LengthMismatch {
                expected: self.net.n_out,
                actual: y.len(),
            });
        }
        Ok(())
    }

    /// Training loss at arbitrary double-precision parameters: normalized L3
    /// of the unclamped prediction plus, for image space, `recon_weight`
    /// times the mean squared difference between the network output and
    /// `phi(Y)` on its own grid. Returns the loss and its gradient.
    pub fn loss_and_gradient(
        &self,
        params: &[f64],
        x: &TactileImage,
        y: &ArraySample,
        recon_weight: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_differentiable(params, y)?;
        let x = self.prepare_input(x)?;
        let mut grad = vec![0.0; params.len()];
        let (_, total) = self.net.loss_grad(params, &x, y.values(), recon_weight, &mut grad);
        Ok((total, grad))
    }

    /// The loss of [`TranslatorModel::loss_and_gradient`] without the
    /// gradient.
    pub fn loss_at(&self, params: &[f64], x: &TactileImage, y: &ArraySample, recon_weight: f64) -> Result<f64> {
        self.check_differentiable(params, y)?;
        let x = self.prepare_input(x)?;
        let target: Vec<f64> = y.values().iter().map(|v| v / FULLSCALE).collect();
        let pred: Vec<f64> = self.net.predict_raw(params, &x).iter().map(|v| v / FULLSCALE).collect();
        let mut loss = l3_values(&target, &pred)?;
        if self.kind == TranslatorKind::ImageSpace && recon_weight > 0.0 {
            let acts = self.net.activations(params, &x);
            let out = &acts.last().expect("output").data;
            let rec = self.net.recon.as_ref().expect("image kind").apply_raw(&target)?;
            let mse = out.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / out.len() as f64;
            loss += recon_weight * mse;
        }
        Ok(loss)
    }
}

/// As [`backward`], with entries whose `frozen` flag is set forced to zero.
pub fn backward_masked(
    model: &TranslatorModel,
    x: &TactileImage,
    y: &ArraySample,
    frozen: Option<&[bool]>,
) -> Result<Vec<f64>> {
    let params = model.params_f64();
    model.check_differentiable(&params, y)?;
    if let Some(mask) = frozen {
        if mask.len() != model.param_count() {
            return Err(Error::LengthMismatch {
                expected: model.param_count(),
                actual: mask.len(),
            });
        }
    }
    let (_, mut grad) = model.loss_and_gradient(&params, x, y, 0.0)?;
    if let Some(mask) = frozen {
        for (g, &f) in grad.iter_mut().zip(mask) {
            if f {
                *g = 0.0;
            }
        }
    }
    Ok(grad)
}
