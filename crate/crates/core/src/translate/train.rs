use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{l3_values, linear, Architecture, Net, TrainConfig, TrainingMeta, TranslatorKind, TranslatorModel};
use crate::error::{Error, Result};
use crate::geometry::{PixelGrid, TaxelLayout};
use crate::interp::{ArraySample, TactileImage};
use crate::FULLSCALE;

/// One line of the training curve; losses are mean per-sample L3 in raw
/// counts².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_l3: f64,
    pub val_l3: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn prepare(model: &TranslatorModel, set: &[(TactileImage, ArraySample)]) -> Result<Vec<(TactileImage, Vec<f64>)>> {
    let n = model.layout().n_taxels();
    set.iter()
        .map(|(x, y)| {
            if y.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: y.len(),
                });
            }
            Ok((model.prepare_input(x)?.into_owned(), y.values().to_vec()))
        })
        .collect()
}

/// Mean L3 of clamped predictions, raw counts².
pub(crate) fn mean_l3(net: &Net, params: &[f64], set: &[(TactileImage, Vec<f64>)]) -> f64 {
    let total: f64 = set
        .iter()
        .map(|(x, y)| {
            let pred: Vec<f64> = net
                .predict_raw(params, x)
                .into_iter()
                .map(|v| v.clamp(0.0, FULLSCALE))
                .collect();
            l3_values(y, &pred).expect("lengths checked")
        })
        .sum();
    total / set.len() as f64
}

fn round_f32(params: &[f64]) -> Vec<f32> {
    params.iter().map(|&v| v as f32).collect()
}

/// Trains a translator and returns the best-validation parameters.
pub fn train(
    kind: TranslatorKind,
    cfg: &TrainConfig,
    layout: &TaxelLayout,
    camera_grid: &PixelGrid,
    train_set: &[(TactileImage, ArraySample)],
    val_set: &[(TactileImage, ArraySample)],
) -> Result<TranslatorModel> {
    Ok(train_logged(kind, cfg, layout, camera_grid, train_set, val_set)?.0)
}

/// As [`train`], also returning the per-epoch curve.
///
/// Inputs may be full camera images or images already downsampled by
/// `cfg.downsample`.
pub fn train_logged(
    kind: TranslatorKind,
    cfg: &TrainConfig,
    layout: &TaxelLayout,
    camera_grid: &PixelGrid,
    train_set: &[(TactileImage, ArraySample)],
    val_set: &[(TactileImage, ArraySample)],
) -> Result<(TranslatorModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidConfig(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let arch: Architecture = cfg.architecture_for(kind);
    let template = TranslatorModel::zeros(kind, arch.clone(), *camera_grid, cfg.downsample, layout.clone())?;
    let train_data = prepare(&template, train_set)?;
    let val_data = prepare(&template, val_set)?;
    let hash = cfg.config_hash();

    if kind == TranslatorKind::LinearBaseline {
        return linear::train_linear(&template, cfg, &train_data, &val_data, hash);
    }

    let net = template.net();
    let graph = net.graph.as_ref().expect("differentiable kind");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = graph.init(&mut rng);
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut grad = vec![0.0; params.len()];
    let mut history = Vec::new();
    let mut best: Option<(Vec<f32>, u32, f64)> = None;
    let mut stale = 0usize;
    let scale2 = FULLSCALE * FULLSCALE;

    for epoch in 1..=cfg.max_epochs as u32 {
        order.shuffle(&mut rng);
        let mut epoch_l3 = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (x, y) = &train_data[i];
                let (l3, total) = net.loss_grad(&params, x, y, cfg.recon_weight, &mut grad);
                epoch_l3 += l3;
                batch_loss += total;
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch: epoch as usize,
                    loss: batch_loss,
                });
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam.step(&mut params, &grad);
        }
        let snapshot = round_f32(&params);
        let snap64: Vec<f64> = snapshot.iter().map(|&v| v as f64).collect();
        let val_l3 = mean_l3(net, &snap64, &val_data);
        if !val_l3.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch as usize,
                loss: val_l3,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_l3: epoch_l3 / train_data.len() as f64 * scale2,
            val_l3,
        });
        if best.as_ref().is_none_or(|(_, _, b)| val_l3 < *b) {
            best = Some((snapshot, epoch, val_l3));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (params, best_epoch, best_val_l3) = match best {
        Some(b) => b,
        None => {
            let snapshot = round_f32(&params);
            let snap64: Vec<f64> = snapshot.iter().map(|&v| v as f64).collect();
            let v = mean_l3(net, &snap64, &val_data);
            (snapshot, 0, v)
        }
    };
    let meta = TrainingMeta {
        epochs_run: history.len() as u32,
        best_epoch,
        best_val_l3,
        seed: cfg.seed,
        config_hash: hash,
    };
    let model = TranslatorModel::new(kind, arch, *camera_grid, cfg.downsample, layout.clone(), params, meta)?;
    Ok((model, history))
}
