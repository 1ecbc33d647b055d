//! Evaluation measures: per-sample RMSE, error as a percentage of fullscale,
//! single-scale SSIM on tactile images, and contact-mask IoU.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{ArraySample, TactileImage};
use crate::FULLSCALE;

/// Side of the SSIM window, pixels.
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the SSIM Gaussian window, pixels.
pub const SSIM_SIGMA: f64 = 1.5;
/// Default mask threshold for [`contact_iou`], as a fraction of each image's max.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.25;

/// Root mean square error over channels.
pub fn rmse(y: &ArraySample, y_hat: &ArraySample) -> Result<f64> {
    rmse_values(y.values(), y_hat.values())
}

pub fn rmse_values(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// RMSE as a percentage of the sensor fullscale.
pub fn percent_fullscale(rmse_value: f64) -> f64 {
    100.0 * rmse_value / FULLSCALE
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Valid-mode separable filtering with the SSIM window.
fn filter_valid(data: &[f64], rows: usize, cols: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let out_cols = cols - SSIM_WINDOW + 1;
    let out_rows = rows - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        for c in 0..out_cols {
            tmp[r * out_cols + c] = w.iter().zip(&row[c..c + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; out_rows * out_cols];
    for r in 0..out_rows {
        for (k, &wk) in w.iter().enumerate() {
            let src = &tmp[(r + k) * out_cols..(r + k + 1) * out_cols];
            let dst = &mut out[r * out_cols..(r + 1) * out_cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wk * s;
            }
        }
    }
    out
}

/// Mean SSIM over all 11×11 window positions, with dynamic range
/// `dynamic_range` (40000 for tactile images, 1 for camera images).
pub fn ssim(a: &TactileImage, b: &TactileImage, dynamic_range: f64) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.cols(),
            a.rows(),
            b.cols(),
            b.rows()
        )));
    }
    let (rows, cols) = (a.rows(), a.cols());
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::ShapeMismatch(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {cols}x{rows}"
        )));
    }
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let w = gaussian_window();
    let (da, db) = (a.data(), b.data());
    let aa: Vec<f64> = da.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = db.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = da.iter().zip(db).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(da, rows, cols, &w);
    let mu_b = filter_valid(db, rows, cols, &w);
    let e_aa = filter_valid(&aa, rows, cols, &w);
    let e_bb = filter_valid(&bb, rows, cols, &w);
    let e_ab = filter_valid(&ab, rows, cols, &w);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// IoU of the masks `v ≥ threshold_fraction · max` of both images.
///
/// Two empty masks give 1; exactly one empty mask gives 0.
pub fn contact_iou(a: &TactileImage, b: &TactileImage, threshold_fraction: f64) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.cols(),
            a.rows(),
            b.cols(),
            b.rows()
        )));
    }
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold fraction {threshold_fraction} not in (0, 1)"
        )));
    }
    let mask = |img: &TactileImage| -> Vec<bool> {
        let m = img.max();
        if m > 0.0 {
            let t = threshold_fraction * m;
            img.data().iter().map(|&v| v >= t).collect()
        } else {
            vec![false; img.data().len()]
        }
    };
    let (ma, mb) = (mask(a), mask(b));
    let inter = ma.iter().zip(&mb).filter(|(x, y)| **x && **y).count();
    let union = ma.iter().zip(&mb).filter(|(x, y)| **x || **y).count();
    let na = ma.iter().filter(|x| **x).count();
    let nb = mb.iter().filter(|x| **x).count();
    Ok(match (na, nb) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => inter as f64 / union as f64,
    })
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub model: String,
    pub split: String,
    pub rmse: f64,
    pub percent_fullscale: f64,
    pub ssim: f64,
    pub contact_iou: f64,
}

impl SampleScore {
    /// Scores a prediction against ground truth given both tactile images.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        id: impl Into<String>,
        model: impl Into<String>,
        split: impl Into<String>,
        y: &ArraySample,
        y_hat: &ArraySample,
        truth_image: &TactileImage,
        predicted_image: &TactileImage,
        iou_threshold: f64,
    ) -> Result<Self> {
        let r = rmse(y, y_hat)?;
        Ok(Self {
            id: id.into(),
            model: model.into(),
            split: split.into(),
            rmse: r,
            percent_fullscale: percent_fullscale(r),
            ssim: ssim(truth_image, predicted_image, FULLSCALE)?,
            contact_iou: contact_iou(truth_image, predicted_image, iou_threshold)?,
        })
    }
}

/// Means of a group of sample scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub split: String,
    pub count: usize,
    pub rmse: f64,
    pub percent_fullscale: f64,
    pub ssim: f64,
    pub contact_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// How aggregates are formed.
    pub header: String,
    pub per_sample: Vec<SampleScore>,
    pub aggregate: Vec<Aggregate>,
    /// Free-form provenance (resolved config, input hashes).
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl EvalReport {
    pub fn new(per_sample: Vec<SampleScore>) -> Self {
        let mut groups: BTreeMap<(String, String), Vec<&SampleScore>> = BTreeMap::new();
        for s in &per_sample {
            groups.entry((s.model.clone(), s.split.clone())).or_default().push(s);
        }
        let aggregate = groups
            .into_iter()
            .map(|((model, split), rows)| {
                let n = rows.len() as f64;
                let mean = |f: fn(&SampleScore) -> f64| rows.iter().map(|s| f(s)).sum::<f64>() / n;
                Aggregate {
                    model,
                    split,
                    count: rows.len(),
                    rmse: mean(|s| s.rmse),
                    percent_fullscale: mean(|s| s.percent_fullscale),
                    ssim: mean(|s| s.ssim),
                    contact_iou: mean(|s| s.contact_iou),
                }
            })
            .collect();
        Self {
            header: "per-sample RMSE over taxels, then arithmetic mean over the split".into(),
            per_sample,
            aggregate,
            provenance: serde_json::Value::Null,
        }
    }

    pub fn find(&self, model: &str, split: &str) -> Option<&Aggregate> {
        self.aggregate.iter().find(|a| a.model == model && a.split == split)
    }

    /// Plain-text table: model, split, √L3, √L3 %, SSIM, contact IoU.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:<6} {:>6} {:>10} {:>8} {:>6} {:>11}",
            "model", "split", "n", "sqrt(L3)", "sqrt(L3)%", "SSIM", "contact-IoU"
        );
        for a in &self.aggregate {
            let _ = writeln!(
                out,
                "{:<12} {:<6} {:>6} {:>10.1} {:>8.2} {:>6.3} {:>11.3}",
                a.model, a.split, a.count, a.rmse, a.percent_fullscale, a.ssim, a.contact_iou
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelGrid;

    fn arr(v: &[f64]) -> ArraySample {
        ArraySample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rmse_basics() {
        let y = arr(&[1.0, 2.0, 3.0]);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        let shifted = arr(&[101.0, 102.0, 103.0]);
        assert!((rmse(&y, &shifted).unwrap() - 100.0).abs() < 1e-12);
        assert!(matches!(
            rmse(&y, &arr(&[1.0])).unwrap_err(),
            Error::LengthMismatch { .. }
        ));
    }

    #[test]
    fn table_one_percentages() {
        assert!((percent_fullscale(6072.0) - 15.18).abs() <= 0.01);
        assert!((percent_fullscale(4867.0) - 12.17).abs() <= 0.01);
        assert!((percent_fullscale(3931.0) - 9.83).abs() <= 0.01);
        assert!((percent_fullscale(2.0 * 1234.5) - 2.0 * percent_fullscale(1234.5)).abs() < 1e-12);
    }

    fn grid(rows: usize, cols: usize) -> PixelGrid {
        PixelGrid::centered(rows, cols, [0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn ssim_constant_closed_form() {
        let g = grid(20, 30);
        let l = 40000.0;
        let (c1v, c2v) = (12000.0, 31000.0);
        let a = TactileImage::filled(g, c1v);
        let b = TactileImage::filled(g, c2v);
        let k1 = (0.01 * l) * (0.01 * l);
        let want = (2.0 * c1v * c2v + k1) / (c1v * c1v + c2v * c2v + k1);
        assert!((ssim(&a, &b, l).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn iou_cases() {
        let g = grid(10, 10);
        let mut a = TactileImage::zeros(g);
        let mut b = TactileImage::zeros(g);
        assert_eq!(contact_iou(&a, &b, 0.25).unwrap(), 1.0);
        for r in 0..4 {
            for c in 0..4 {
                a.set(r, c, 1.0);
                b.set(r, c + 2, 1.0);
            }
        }
        assert!((contact_iou(&a, &b, 0.25).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(contact_iou(&a, &a, 0.25).unwrap(), 1.0);
        let mut c = TactileImage::zeros(g);
        c.set(9, 9, 1.0);
        assert_eq!(contact_iou(&a, &c, 0.25).unwrap(), 0.0);
        assert_eq!(contact_iou(&a, &TactileImage::zeros(g), 0.25).unwrap(), 0.0);
    }

    #[test]
    fn report_aggregates_are_means() {
        let row = |id: &str, r: f64| SampleScore {
            id: id.into(),
            model: "m".into(),
            split: "test".into(),
            rmse: r,
            percent_fullscale: percent_fullscale(r),
            ssim: 0.5,
            contact_iou: r / 1000.0,
        };
        let report = EvalReport::new(vec![row("a", 100.0), row("b", 300.0)]);
        let agg = report.find("m", "test").unwrap();
        assert_eq!(agg.count, 2);
        assert!((agg.rmse - 200.0).abs() < 1e-9);
        assert!((agg.percent_fullscale - 0.5).abs() < 1e-9);
        assert!(report.table().contains("sqrt(L3)"));
    }
}
