//! Conversion between taxel arrays and tactile images.
//!
//! `phi` rasterizes an array by barycentric interpolation over the Delaunay
//! triangulation of the taxels; `phi_inv` reads an image back at the taxel
//! positions by bilinear sampling.

use crate::error::{Error, Result};
use crate::geometry::{delaunay, PixelGrid, Point, TaxelLayout};
use crate::FULLSCALE;

/// Output of the array sensor: one raw count per taxel, in `[0, FULLSCALE]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySample {
    values: Vec<f64>,
}

impl ArraySample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > FULLSCALE)
        {
            return Err(Error::InvalidConfig(format!(
                "taxel {i} value {v} outside [0, {FULLSCALE}]"
            )));
        }
        Ok(Self { values })
    }

    /// Clamps every value into the sensor range; non-finite values become 0.
    pub fn clamped(values: impl IntoIterator<Item = f64>) -> Self {
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(0.0, FULLSCALE) } else { 0.0 })
            .collect();
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A single-channel float image on a physical pixel grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileImage {
    grid: PixelGrid,
    data: Vec<f64>,
}

impl TactileImage {
    pub fn new(grid: PixelGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("image contains non-finite values".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: PixelGrid) -> Self {
        Self {
            data: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn filled(grid: PixelGrid, value: f64) -> Self {
        Self {
            data: vec![value; grid.len()],
            grid,
        }
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.grid.rows
    }

    pub fn cols(&self) -> usize {
        self.grid.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.grid.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let cols = self.grid.cols;
        self.data[row * cols + col] = value;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Bilinear sample at fractional pixel coordinates; `None` outside the
    /// span of pixel centres.
    pub fn sample(&self, col: f64, row: f64) -> Option<f64> {
        let w = bilinear_weights(&self.grid, col, row)?;
        Some(w.iter().map(|&(i, wt)| self.data[i] * wt).sum())
    }

    /// Bilinear sample at a physical point.
    pub fn sample_at(&self, p: Point) -> Option<f64> {
        let (c, r) = self.grid.to_pixel(p);
        self.sample(c, r)
    }

    /// Block-average downsampling by an integer factor.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 1 {
            return Ok(self.clone());
        }
        let grid = self.grid.downsampled(factor)?;
        let norm = 1.0 / (factor * factor) as f64;
        let mut data = vec![0.0; grid.len()];
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let mut acc = 0.0;
                for dr in 0..factor {
                    let row = &self.data[(r * factor + dr) * self.grid.cols..];
                    acc += row[c * factor..(c + 1) * factor].iter().sum::<f64>();
                }
                data[r * grid.cols + c] = acc * norm;
            }
        }
        Ok(Self { grid, data })
    }

    /// Bilinear resampling onto another grid by physical position; pixels
    /// outside this image's span take `fill`.
    pub fn resample(&self, target: &PixelGrid, fill: f64) -> Self {
        let mut data = Vec::with_capacity(target.len());
        for r in 0..target.rows {
            for c in 0..target.cols {
                data.push(self.sample_at(target.position(r, c)).unwrap_or(fill));
            }
        }
        Self { grid: *target, data }
    }
}

/// The (up to four) pixel indices and weights of a bilinear sample. Weights
/// sum to 1. Returns `None` outside `[0, cols-1] × [0, rows-1]` (with a
/// `1e-9` pixel tolerance).
pub fn bilinear_weights(grid: &PixelGrid, col: f64, row: f64) -> Option<[(usize, f64); 4]> {
    const EPS: f64 = 1e-9;
    let max_c = grid.cols as f64 - 1.0;
    let max_r = grid.rows as f64 - 1.0;
    if !(col >= -EPS && row >= -EPS && col <= max_c + EPS && row <= max_r + EPS) {
        return None;
    }
    let col = col.clamp(0.0, max_c);
    let row = row.clamp(0.0, max_r);
    let c0 = (col.floor() as usize).min(grid.cols.saturating_sub(2));
    let r0 = (row.floor() as usize).min(grid.rows.saturating_sub(2));
    let c1 = (c0 + 1).min(grid.cols - 1);
    let r1 = (r0 + 1).min(grid.rows - 1);
    let fc = if c1 == c0 { 0.0 } else { col - c0 as f64 };
    let fr = if r1 == r0 { 0.0 } else { row - r0 as f64 };
    let idx = |r: usize, c: usize| r * grid.cols + c;
    Some([
        (idx(r0, c0), (1.0 - fc) * (1.0 - fr)),
        (idx(r0, c1), fc * (1.0 - fr)),
        (idx(r1, c0), (1.0 - fc) * fr),
        (idx(r1, c1), fc * fr),
    ])
}

/// Precomputed barycentric weights for every pixel of a grid, so that
/// repeated conversions of arrays on the same layout are a gather per pixel.
#[derive(Debug, Clone)]
pub struct Rasterizer {
    grid: PixelGrid,
    n_taxels: usize,
    /// Per pixel: vertex indices and weights, or `None` outside the hull.
    cells: Vec<Option<([usize; 3], [f64; 3])>>,
}

impl Rasterizer {
    pub fn new(layout: &TaxelLayout, grid: &PixelGrid) -> Result<Self> {
        let (glo, ghi) = grid.extent();
        for (i, p) in layout.positions().iter().enumerate() {
            if p[0] < glo[0] || p[0] > ghi[0] || p[1] < glo[1] || p[1] > ghi[1] {
                return Err(Error::GridMismatch(format!(
                    "taxel {i} at ({:.3}, {:.3}) lies outside the grid extent",
                    p[0], p[1]
                )));
            }
        }
        let tri = delaunay(layout)?;
        let pts = layout.positions();
        let mut cells = vec![None; grid.len()];
        const EPS: f64 = 1e-9;
        // Triangles are visited in index order and never overwrite a pixel, so
        // pixels on shared edges belong to the lowest-index triangle.
        for t in &tri.triangles {
            let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
            let lo = [a[0].min(b[0]).min(c[0]), a[1].min(b[1]).min(c[1])];
            let hi = [a[0].max(b[0]).max(c[0]), a[1].max(b[1]).max(c[1])];
            let (c_lo, r_lo) = grid.to_pixel(lo);
            let (c_hi, r_hi) = grid.to_pixel(hi);
            let c_start = (c_lo - 1.0).floor().max(0.0) as usize;
            let r_start = (r_lo - 1.0).floor().max(0.0) as usize;
            let c_end = ((c_hi + 1.0).ceil().max(0.0) as usize).min(grid.cols - 1);
            let r_end = ((r_hi + 1.0).ceil().max(0.0) as usize).min(grid.rows - 1);
            for r in r_start..=r_end {
                for col in c_start..=c_end {
                    let cell = &mut cells[r * grid.cols + col];
                    if cell.is_some() {
                        continue;
                    }
                    let p = grid.position(r, col);
                    if let Some(l) = crate::geometry::barycentric(a, b, c, p) {
                        if l.iter().all(|&v| v >= -EPS) {
                            *cell = Some((*t, l));
                        }
                    }
                }
            }
        }
        Ok(Self {
            grid: *grid,
            n_taxels: layout.n_taxels(),
            cells,
        })
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    /// Whether pixel `index` lies inside the taxel hull.
    pub fn in_hull(&self, index: usize) -> bool {
        self.cells[index].is_some()
    }

    pub fn apply(&self, y: &ArraySample) -> Result<TactileImage> {
        Ok(TactileImage {
            grid: self.grid,
            data: self.apply_raw(y.values())?,
        })
    }

    /// Rasterizes arbitrary per-taxel values (no range check).
    pub fn apply_raw(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.n_taxels {
            return Err(Error::LengthMismatch {
                expected: self.n_taxels,
                actual: values.len(),
            });
        }
        Ok(self
            .cells
            .iter()
            .map(|cell| match cell {
                Some((v, l)) => l[0] * values[v[0]] + l[1] * values[v[1]] + l[2] * values[v[2]],
                None => 0.0,
            })
            .collect())
    }
}

/// Barycentric rasterization of a taxel array onto `grid`; zero outside the
/// taxel hull.
pub fn phi(y: &ArraySample, layout: &TaxelLayout, grid: &PixelGrid) -> Result<TactileImage> {
    Rasterizer::new(layout, grid)?.apply(y)
}

/// Bilinear sampling weights of every taxel on `grid`.
pub fn taxel_weights(layout: &TaxelLayout, grid: &PixelGrid) -> Result<Vec<[(usize, f64); 4]>> {
    layout
        .positions()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (col, row) = grid.to_pixel(p);
            bilinear_weights(grid, col, row).ok_or(Error::OutOfBounds { taxel: i, col, row })
        })
        .collect()
}

/// Samples the image at every taxel position, without clamping.
pub fn phi_inv_raw(img: &TactileImage, layout: &TaxelLayout) -> Result<Vec<f64>> {
    let weights = taxel_weights(layout, img.grid())?;
    Ok(weights
        .iter()
        .map(|w| w.iter().map(|&(i, wt)| img.data()[i] * wt).sum())
        .collect())
}

/// Reads an image back into an array: bilinear sample at each taxel, clamped
/// into the sensor range.
pub fn phi_inv(img: &TactileImage, layout: &TaxelLayout) -> Result<ArraySample> {
    Ok(ArraySample::clamped(phi_inv_raw(img, layout)?))
}
