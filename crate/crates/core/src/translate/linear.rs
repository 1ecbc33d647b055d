//! Ridge regression from downsampled camera pixels to taxel counts.

use super::train::{mean_l3, EpochRecord};
use super::{TrainConfig, TrainingMeta, TranslatorKind, TranslatorModel};
use crate::error::{Error, Result};
use crate::interp::{ArraySample, TactileImage};

/// Centred normal equations of a multi-output ridge problem, built once so
/// several ridge strengths can be solved cheaply.
///
/// With more features than samples the problem is solved in its dual form
/// (an `n × n` system), which gives the same minimizer for ridge > 0.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    n: usize,
    d: usize,
    k: usize,
    x_mean: Vec<f64>,
    y_mean: Vec<f64>,
    dual: bool,
    /// `d × d` (primal) or `n × n` (dual) Gram matrix.
    gram: Vec<f64>,
    /// Primal: Xcᵀ Yc (`d × k`); dual: Yc (`n × k`).
    rhs: Vec<f64>,
    /// Dual only: centred design, `n × d`.
    xc: Vec<f64>,
}

impl RidgeProblem {
    pub fn new(features: &[&[f64]], targets: &[&[f64]]) -> Result<Self> {
        let n = features.len();
        if n == 0 || n != targets.len() {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: targets.len(),
            });
        }
        let d = features[0].len();
        let k = targets[0].len();
        if let Some(bad) = features.iter().find(|f| f.len() != d) {
            return Err(Error::LengthMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        if let Some(bad) = targets.iter().find(|t| t.len() != k) {
            return Err(Error::LengthMismatch {
                expected: k,
                actual: bad.len(),
            });
        }
        let mean = |rows: &[&[f64]], m: usize| {
            let mut out = vec![0.0; m];
            for r in rows {
                out.iter_mut().zip(*r).for_each(|(a, b)| *a += b);
            }
            out.iter_mut().for_each(|v| *v /= n as f64);
            out
        };
        let x_mean = mean(features, d);
        let y_mean = mean(targets, k);
        let mut xc = Vec::with_capacity(n * d);
        for f in features {
            xc.extend(f.iter().zip(&x_mean).map(|(a, b)| a - b));
        }
        let mut yc = Vec::with_capacity(n * k);
        for t in targets {
            yc.extend(t.iter().zip(&y_mean).map(|(a, b)| a - b));
        }
        let dual = d > n;
        let (gram, rhs) = if dual {
            let mut gram = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = xc[i * d..(i + 1) * d]
                        .iter()
                        .zip(&xc[j * d..(j + 1) * d])
                        .map(|(a, b)| a * b)
                        .sum();
                    gram[i * n + j] = v;
                    gram[j * n + i] = v;
                }
            }
            (gram, yc)
        } else {
            let mut gram = vec![0.0; d * d];
            let mut rhs = vec![0.0; d * k];
            for s in 0..n {
                let row = &xc[s * d..(s + 1) * d];
                for (a, &xa) in row.iter().enumerate() {
                    if xa == 0.0 {
                        continue;
                    }
                    let g = &mut gram[a * d..a * d + a + 1];
                    for (gv, xb) in g.iter_mut().zip(&row[..=a]) {
                        *gv += xa * xb;
                    }
                    for (rv, yv) in rhs[a * k..(a + 1) * k].iter_mut().zip(&yc[s * k..(s + 1) * k]) {
                        *rv += xa * yv;
                    }
                }
            }
            for a in 0..d {
                for b in 0..a {
                    gram[b * d + a] = gram[a * d + b];
                }
            }
            (gram, rhs)
        };
        Ok(Self {
            n,
            d,
            k,
            x_mean,
            y_mean,
            dual,
            gram,
            rhs,
            xc: if dual { xc } else { Vec::new() },
        })
    }

    /// Solves for `(W, b)` with `W` stored row-major as `k × d`.
    pub fn solve(&self, ridge: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(ridge >= 0.0) {
            return Err(Error::InvalidConfig("ridge must be non-negative".into()));
        }
        let (n, d, k) = (self.n, self.d, self.k);
        if self.dual && ridge == 0.0 {
            return Err(Error::SingularSystem(format!(
                "{d} features but only {n} samples; the unregularized system is rank-deficient"
            )));
        }
        let m = if self.dual { n } else { d };
        let mut a = self.gram.clone();
        for i in 0..m {
            a[i * m + i] += ridge;
        }
        let l = cholesky(&mut a, m)?;
        let sol = cho_solve(l, m, &self.rhs, k);
        // `wt` is d × k.
        let wt = if self.dual {
            let mut wt = vec![0.0; d * k];
            for s in 0..n {
                let row = &self.xc[s * d..(s + 1) * d];
                let alpha = &sol[s * k..(s + 1) * k];
                for (f, &xv) in row.iter().enumerate() {
                    for (w, al) in wt[f * k..(f + 1) * k].iter_mut().zip(alpha) {
                        *w += xv * al;
                    }
                }
            }
            wt
        } else {
            sol
        };
        let mut w = vec![0.0; k * d];
        for f in 0..d {
            for o in 0..k {
                w[o * d + f] = wt[f * k + o];
            }
        }
        let b = (0..k)
            .map(|o| {
                self.y_mean[o]
                    - w[o * d..(o + 1) * d]
                        .iter()
                        .zip(&self.x_mean)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        Ok((w, b))
    }
}

/// In-place lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &mut [f64], m: usize) -> Result<&[f64]> {
    let max_diag = (0..m).map(|i| a[i * m + i].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..m {
        let mut diag = a[j * m + j];
        for p in 0..j {
            diag -= a[j * m + p] * a[j * m + p];
        }
        if !(diag > tol) {
            return Err(Error::SingularSystem(format!(
                "pivot {j} of {m} is {diag:.3e}; the design matrix is rank-deficient"
            )));
        }
        let ljj = diag.sqrt();
        a[j * m + j] = ljj;
        for i in j + 1..m {
            let mut v = a[i * m + j];
            for p in 0..j {
                v -= a[i * m + p] * a[j * m + p];
            }
            a[i * m + j] = v / ljj;
        }
    }
    Ok(a)
}

/// Solves `L Lᵀ X = B` for `B` of shape `m × k`.
fn cho_solve(l: &[f64], m: usize, b: &[f64], k: usize) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..m {
        for p in 0..i {
            let lip = l[i * m + p];
            if lip != 0.0 {
                for c in 0..k {
                    x[i * k + c] -= lip * x[p * k + c];
                }
            }
        }
        for c in 0..k {
            x[i * k + c] /= l[i * m + i];
        }
    }
    for i in (0..m).rev() {
        for p in i + 1..m {
            let lpi = l[p * m + i];
            if lpi != 0.0 {
                for c in 0..k {
                    x[i * k + c] -= lpi * x[p * k + c];
                }
            }
        }
        for c in 0..k {
            x[i * k + c] /= l[i * m + i];
        }
    }
    x
}

/// Ridge fit on raw feature and target vectors.
pub fn fit_ridge(features: &[&[f64]], targets: &[&[f64]], ridge: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    RidgeProblem::new(features, targets)?.solve(ridge)
}

fn pack(w: &[f64], b: &[f64]) -> Vec<f32> {
    w.iter().chain(b).map(|&v| v as f32).collect()
}

/// Closed-form linear translator on `template`'s input grid.
pub fn fit_linear_baseline(
    template: &TranslatorModel,
    train: &[(TactileImage, ArraySample)],
    ridge: f64,
) -> Result<TranslatorModel> {
    if template.kind() != TranslatorKind::LinearBaseline {
        return Err(Error::InvalidConfig(format!(
            "template kind {} is not linear",
            template.kind()
        )));
    }
    let n_taxels = template.layout().n_taxels();
    if train.len() < n_taxels {
        return Err(Error::InvalidConfig(format!(
            "need at least {n_taxels} training pairs, got {}",
            train.len()
        )));
    }
    let inputs: Vec<_> = train
        .iter()
        .map(|(x, _)| template.prepare_input(x))
        .collect::<Result<_>>()?;
    let features: Vec<&[f64]> = inputs.iter().map(|x| x.data()).collect();
    let targets: Vec<&[f64]> = train.iter().map(|(_, y)| y.values()).collect();
    let (w, b) = fit_ridge(&features, &targets, ridge)?;
    TranslatorModel::new(
        TranslatorKind::LinearBaseline,
        template.architecture().clone(),
        *template.camera_grid(),
        template.downsample(),
        template.layout().clone(),
        pack(&w, &b),
        TrainingMeta::default(),
    )
}

/// Fits the ridge baseline, picking the strength by validation L3 when the
/// config leaves it open. The returned curve has one record per candidate.
pub(crate) fn train_linear(
    template: &TranslatorModel,
    cfg: &TrainConfig,
    train: &[(TactileImage, Vec<f64>)],
    val: &[(TactileImage, Vec<f64>)],
    config_hash: u64,
) -> Result<(TranslatorModel, Vec<EpochRecord>)> {
    let n_taxels = template.layout().n_taxels();
    if train.len() < n_taxels {
        return Err(Error::InvalidConfig(format!(
            "need at least {n_taxels} training pairs, got {}",
            train.len()
        )));
    }
    let features: Vec<&[f64]> = train.iter().map(|(x, _)| x.data()).collect();
    let targets: Vec<&[f64]> = train.iter().map(|(_, y)| y.as_slice()).collect();
    let problem = RidgeProblem::new(&features, &targets)?;
    let candidates = match cfg.ridge {
        Some(r) => vec![r],
        None => cfg.ridge_grid.clone(),
    };
    let mut best: Option<(Vec<f32>, f64)> = None;
    let mut last_err = None;
    let mut history = Vec::new();
    for ridge in candidates {
        let (w, b) = match problem.solve(ridge) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let params = pack(&w, &b);
        let p64: Vec<f64> = params.iter().map(|&v| v as f64).collect();
        let val_l3 = mean_l3(template.net(), &p64, val);
        history.push(EpochRecord {
            epoch: history.len() as u32 + 1,
            train_l3: mean_l3(template.net(), &p64, train),
            val_l3,
        });
        if best.as_ref().is_none_or(|(_, b)| val_l3 < *b) {
            best = Some((params, val_l3));
        }
    }
    let (params, best_val_l3) = match (best, last_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => return Err(Error::InvalidConfig("no ridge candidates".into())),
    };
    let meta = TrainingMeta {
        epochs_run: 0,
        best_epoch: 0,
        best_val_l3,
        seed: cfg.seed,
        config_hash,
    };
    let model = TranslatorModel::new(
        TranslatorKind::LinearBaseline,
        template.architecture().clone(),
        *template.camera_grid(),
        template.downsample(),
        template.layout().clone(),
        params,
        meta,
    )?;
    Ok((model, history))
}
