//! Sensor geometry: the taxel layout of the array sensor, the pixel grids the
//! tactile images live on, and the Delaunay triangulation over the taxels.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the sensor frame, millimetres.
pub type Point = [f64; 2];

/// Taxel spacing of the default array sensor, mm.
pub const DEFAULT_PITCH_MM: f64 = 7.5;
/// Radius of the disc each taxel integrates pressure over, mm.
pub const DEFAULT_SENSING_RADIUS_MM: f64 = 2.5;
/// Taxels per staggered row of the default layout.
pub const DEFAULT_ROWS: [usize; 4] = [4, 5, 6, 5];

/// Default tactile image size (columns × rows) for the array sensor.
pub const TACTILE_COLS: usize = 396;
pub const TACTILE_ROWS: usize = 240;
/// Native camera image size (columns × rows).
pub const CAMERA_COLS: usize = 320;
pub const CAMERA_ROWS: usize = 240;

/// Positions and sensing radius of the taxels of an array sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxelLayout {
    positions: Vec<Point>,
    sensing_radius: f64,
    pitch: f64,
}

/// On-disk layout manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayoutFile {
    n_taxels: usize,
    pitch_mm: f64,
    sensing_radius_mm: f64,
    positions_mm: Vec<Point>,
}

impl TaxelLayout {
    pub fn new(positions: Vec<Point>, pitch: f64, sensing_radius: f64) -> Result<Self> {
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::InvalidLayout(format!("pitch must be positive, got {pitch}")));
        }
        if !(sensing_radius > 0.0) || !sensing_radius.is_finite() {
            return Err(Error::InvalidLayout(format!(
                "sensing radius must be positive, got {sensing_radius}"
            )));
        }
        if positions.len() < 3 {
            return Err(Error::InvalidLayout(format!(
                "at least 3 taxels required, got {}",
                positions.len()
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLayout("non-finite taxel position".into()));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                let d = dist(positions[i], positions[j]);
                if d < 0.5 * pitch {
                    return Err(Error::InvalidLayout(format!(
                        "taxels {i} and {j} are {d:.4} mm apart, below half the pitch"
                    )));
                }
            }
        }
        if all_collinear(&positions) {
            return Err(Error::InvalidLayout("taxel positions are collinear".into()));
        }
        Ok(Self {
            positions,
            sensing_radius,
            pitch,
        })
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn n_taxels(&self) -> usize {
        self.positions.len()
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn sensing_radius(&self) -> f64 {
        self.sensing_radius
    }

    /// Axis-aligned bounds of the taxel centres as `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        bounds(&self.positions)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LayoutFile {
            n_taxels: self.n_taxels(),
            pitch_mm: self.pitch,
            sensing_radius_mm: self.sensing_radius,
            positions_mm: self.positions.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LayoutFile = serde_json::from_str(text)?;
        if file.n_taxels != file.positions_mm.len() {
            return Err(Error::InvalidLayout(format!(
                "n_taxels = {} but {} positions given",
                file.n_taxels,
                file.positions_mm.len()
            )));
        }
        Self::new(file.positions_mm, file.pitch_mm, file.sensing_radius_mm)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

impl Default for TaxelLayout {
    fn default() -> Self {
        build_default_layout()
    }
}

/// The 20-taxel array: a triangular lattice of pitch 7.5 mm in staggered
/// rows of 4, 5, 6 and 5 taxels, centred on the origin.
pub fn build_default_layout() -> TaxelLayout {
    let pitch = DEFAULT_PITCH_MM;
    let row_step = pitch * 3f64.sqrt() / 2.0;
    let mut positions = Vec::with_capacity(DEFAULT_ROWS.iter().sum());
    for (row, &count) in DEFAULT_ROWS.iter().enumerate() {
        let y = row as f64 * row_step;
        for i in 0..count {
            let x = (i as f64 - (count as f64 - 1.0) / 2.0) * pitch;
            positions.push([x, y]);
        }
    }
    let n = positions.len() as f64;
    let cy = positions.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in &mut positions {
        p[1] -= cy;
    }
    TaxelLayout::new(positions, pitch, DEFAULT_SENSING_RADIUS_MM).expect("default layout satisfies its invariants")
}

/// A regular grid of pixel centres in the sensor frame. Row index grows with
/// `y`, column index with `x`; `origin` is the centre of pixel (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub rows: usize,
    pub cols: usize,
    pub origin: Point,
    /// Pixel pitch along x and y, mm/pixel.
    pub spacing: [f64; 2],
}

impl PixelGrid {
    pub fn new(rows: usize, cols: usize, origin: Point, spacing: [f64; 2]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGrid(format!("empty grid {rows}x{cols}")));
        }
        if spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing:?}")));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        Ok(Self {
            rows,
            cols,
            origin,
            spacing,
        })
    }

    /// Square pixels of side `spacing`, centred on `center`.
    pub fn centered(rows: usize, cols: usize, center: Point, spacing: f64) -> Result<Self> {
        let origin = [
            center[0] - (cols as f64 - 1.0) / 2.0 * spacing,
            center[1] - (rows as f64 - 1.0) / 2.0 * spacing,
        ];
        Self::new(rows, cols, origin, [spacing, spacing])
    }

    /// Fits a `rows × cols` grid over the layout hull plus one pitch of margin.
    ///
    /// When the taxel coordinates sit on a regular lattice along an axis the
    /// spacing on that axis is an integer fraction of the lattice step and
    /// every taxel falls exactly on a pixel centre; otherwise the axis spacing
    /// is the smallest one covering the extent.
    pub fn fit_layout(layout: &TaxelLayout, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGrid(format!("empty grid {rows}x{cols}")));
        }
        let (lo, hi) = layout.bounds();
        let margin = layout.pitch();
        let mut origin = [0.0; 2];
        let mut spacing = [0.0; 2];
        for (axis, count) in [(0, cols), (1, rows)] {
            let extent = hi[axis] - lo[axis];
            let min_spacing = (extent + 2.0 * margin) / count as f64;
            let coords: Vec<f64> = layout.positions().iter().map(|p| p[axis]).collect();
            let s = match lattice_step(&coords, lo[axis]) {
                Some(step) if step >= min_spacing => step / (step / min_spacing).floor(),
                _ => min_spacing,
            };
            let span = (extent / s).round();
            let first = ((count as f64 - 1.0 - span) / 2.0).floor();
            origin[axis] = lo[axis] - first * s;
            spacing[axis] = s;
        }
        Self::new(rows, cols, origin, spacing)
    }

    /// The 396 × 240 tactile image grid for `layout`.
    pub fn tactile(layout: &TaxelLayout) -> Result<Self> {
        Self::fit_layout(layout, TACTILE_ROWS, TACTILE_COLS)
    }

    /// A grid with square pixels, centred on the layout, covering the
    /// extent of `cover` with `cols × rows` pixels.
    pub fn covering(cover: &PixelGrid, rows: usize, cols: usize) -> Result<Self> {
        let (lo, hi) = cover.extent();
        let w = hi[0] - lo[0];
        let h = hi[1] - lo[1];
        let spacing = (w / cols as f64).max(h / rows as f64);
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        Self::centered(rows, cols, center, spacing)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_area(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }

    /// Centre of pixel `(row, col)`.
    #[inline]
    pub fn position(&self, row: usize, col: usize) -> Point {
        [
            self.origin[0] + col as f64 * self.spacing[0],
            self.origin[1] + row as f64 * self.spacing[1],
        ]
    }

    /// Fractional `(col, row)` coordinates of a point.
    #[inline]
    pub fn to_pixel(&self, p: Point) -> (f64, f64) {
        (
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
        )
    }

    /// Physical extent covered by the pixel footprints, `(min, max)` corners.
    pub fn extent(&self) -> (Point, Point) {
        let lo = [
            self.origin[0] - 0.5 * self.spacing[0],
            self.origin[1] - 0.5 * self.spacing[1],
        ];
        let hi = [
            lo[0] + self.cols as f64 * self.spacing[0],
            lo[1] + self.rows as f64 * self.spacing[1],
        ];
        (lo, hi)
    }

    /// Whether `p` lies within the span of pixel centres.
    pub fn contains(&self, p: Point) -> bool {
        let (c, r) = self.to_pixel(p);
        let eps = 1e-9;
        c >= -eps && r >= -eps && c <= self.cols as f64 - 1.0 + eps && r <= self.rows as f64 - 1.0 + eps
    }

    /// Downsampled grid: each output pixel averages a `factor × factor` block.
    pub fn downsampled(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidGrid("downsample factor must be at least 1".into()));
        }
        let rows = self.rows / factor;
        let cols = self.cols / factor;
        let offset = (factor as f64 - 1.0) / 2.0;
        let origin = [
            self.origin[0] + offset * self.spacing[0],
            self.origin[1] + offset * self.spacing[1],
        ];
        Self::new(
            rows,
            cols,
            origin,
            [self.spacing[0] * factor as f64, self.spacing[1] * factor as f64],
        )
    }
}

/// Smallest step `b` such that every coordinate is `lo + k·b` for integer `k`.
fn lattice_step(coords: &[f64], lo: f64) -> Option<f64> {
    let mut sorted: Vec<f64> = coords.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tol = 1e-9 * (1.0 + sorted.last()?.abs().max(lo.abs()));
    let step = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > tol)
        .fold(f64::INFINITY, f64::min);
    if !step.is_finite() {
        return None;
    }
    let aligned = coords.iter().all(|c| {
        let k = (c - lo) / step;
        (k - k.round()).abs() * step <= 1e-7
    });
    aligned.then_some(step)
}

/// Triangles over the taxel positions, counter-clockwise, each starting at its
/// lowest vertex index and sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

pub fn delaunay(layout: &TaxelLayout) -> Result<Triangulation> {
    delaunay_points(layout.positions())
}

/// Delaunay triangulation by exhaustive empty-circumcircle search.
///
/// Cocircular vertex sets (four or more points on one empty circle) are
/// triangulated as a fan from their lowest-index vertex.
pub fn delaunay_points(points: &[Point]) -> Result<Triangulation> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!("{n} points cannot be triangulated")));
    }
    let (lo, hi) = bounds(points);
    let scale = dist(lo, hi).max(f64::MIN_POSITIVE);
    let orient_eps = 1e-12 * scale * scale;
    let circle_eps = 1e-10 * scale.powi(4);

    let mut triangles = Vec::new();
    let mut groups: BTreeSet<Vec<usize>> = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let o = orient(points[i], points[j], points[k]);
                if o.abs() <= orient_eps {
                    continue;
                }
                let tri = if o > 0.0 { [i, j, k] } else { [i, k, j] };
                let mut on_circle = Vec::new();
                let mut empty = true;
                for m in 0..n {
                    if m == i || m == j || m == k {
                        continue;
                    }
                    let d = incircle(points[tri[0]], points[tri[1]], points[tri[2]], points[m]);
                    if d > circle_eps {
                        empty = false;
                        break;
                    }
                    if d >= -circle_eps {
                        on_circle.push(m);
                    }
                }
                if !empty {
                    continue;
                }
                if on_circle.is_empty() {
                    triangles.push(tri);
                } else {
                    let mut group = vec![i, j, k];
                    group.extend(on_circle);
                    group.sort_unstable();
                    groups.insert(group);
                }
            }
        }
    }
    for group in groups {
        triangles.extend(fan_triangulate(points, &group));
    }
    if triangles.is_empty() {
        return Err(Error::DegenerateInput("all points are collinear".into()));
    }
    for t in &mut triangles {
        let lowest = (0..3).min_by_key(|&q| t[q]).unwrap_or(0);
        t.rotate_left(lowest);
    }
    triangles.sort_unstable();
    triangles.dedup();
    Ok(Triangulation { triangles })
}

/// Fan triangulation of a convex cocircular polygon from its lowest index.
fn fan_triangulate(points: &[Point], group: &[usize]) -> Vec<[usize; 3]> {
    let m = group.len() as f64;
    let cx = group.iter().map(|&v| points[v][0]).sum::<f64>() / m;
    let cy = group.iter().map(|&v| points[v][1]).sum::<f64>() / m;
    let mut ring = group.to_vec();
    ring.sort_by(|&a, &b| {
        let ta = (points[a][1] - cy).atan2(points[a][0] - cx);
        let tb = (points[b][1] - cy).atan2(points[b][0] - cx);
        ta.total_cmp(&tb)
    });
    let start = ring.iter().position(|&v| v == group[0]).unwrap_or(0);
    ring.rotate_left(start);
    (1..ring.len() - 1).map(|t| [ring[0], ring[t], ring[t + 1]]).collect()
}

/// Barycentric coordinates of `p` in the triangle, or `None` if the triangle
/// is degenerate.
pub fn barycentric(a: Point, b: Point, c: Point, p: Point) -> Option<[f64; 3]> {
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    if det == 0.0 {
        return None;
    }
    let l1 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let l2 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    Some([l1, l2, 1.0 - l1 - l2])
}

/// Triangle containing `p` and the barycentric weights of its vertices.
///
/// Points within `1e-9` of a shared edge go to the lowest-index triangle.
pub fn locate(tri: &Triangulation, layout: &TaxelLayout, p: Point) -> Option<(usize, [f64; 3])> {
    locate_points(tri, layout.positions(), p)
}

pub(crate) fn locate_points(tri: &Triangulation, points: &[Point], p: Point) -> Option<(usize, [f64; 3])> {
    const EPS: f64 = 1e-9;
    tri.triangles.iter().enumerate().find_map(|(idx, t)| {
        let l = barycentric(points[t[0]], points[t[1]], points[t[2]], p)?;
        l.iter().all(|&v| v >= -EPS).then_some((idx, l))
    })
}

/// Twice the signed area of `abc`; positive when counter-clockwise.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `abc`.
#[inline]
pub fn incircle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn bounds(points: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

fn all_collinear(points: &[Point]) -> bool {
    let (lo, hi) = bounds(points);
    let scale = dist(lo, hi);
    let eps = 1e-12 * scale * scale;
    let a = points[0];
    let Some(&b) = points.iter().find(|p| dist(**p, a) > 1e-12 * scale) else {
        return true;
    };
    points.iter().all(|&c| orient(a, b, c).abs() <= eps)
}
