//! Synthetic contact: a rigid indenter pressed with a fixed normal force into
//! an elastic layer modelled as a Winkler foundation, observed by both the
//! taxel array and the camera sensor.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PixelGrid, Point, TaxelLayout};
use crate::interp::{ArraySample, TactileImage};
use crate::FULLSCALE;

/// Height of extruded features (squares, rings, lines) above their base, mm.
pub const FEATURE_HEIGHT_MM: f64 = 3.0;
/// Length of the line features, mm.
pub const LINE_LENGTH_MM: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    LineSmooth,
    Square,
    EmptyCircle,
    Circle,
    Bump,
    EmptySquare,
    Hemisphere,
    LineSharp,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 8] = [
        PrimitiveKind::LineSmooth,
        PrimitiveKind::Square,
        PrimitiveKind::EmptyCircle,
        PrimitiveKind::Circle,
        PrimitiveKind::Bump,
        PrimitiveKind::EmptySquare,
        PrimitiveKind::Hemisphere,
        PrimitiveKind::LineSharp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::LineSmooth => "line_smooth",
            PrimitiveKind::Square => "square",
            PrimitiveKind::EmptyCircle => "empty_circle",
            PrimitiveKind::Circle => "circle",
            PrimitiveKind::Bump => "bump",
            PrimitiveKind::EmptySquare => "empty_square",
            PrimitiveKind::Hemisphere => "hemisphere",
            PrimitiveKind::LineSharp => "line_sharp",
        }
    }
}

/// Dimensions of one primitive, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Ridge of the given width whose top edges are rounded with `edge_radius`.
    LineSmooth {
        width: f64,
        edge_radius: f64,
    },
    Square {
        side: f64,
    },
    /// Ring of outer `radius` and wall `thickness`.
    EmptyCircle {
        radius: f64,
        thickness: f64,
    },
    /// Flat-topped disk.
    Circle {
        radius: f64,
    },
    /// Spherical cap of the given height cut from a sphere of `curvature_radius`.
    Bump {
        height: f64,
        curvature_radius: f64,
    },
    EmptySquare {
        side: f64,
        thickness: f64,
    },
    Hemisphere {
        radius: f64,
    },
    /// Ridge with a rectangular profile.
    LineSharp {
        width: f64,
    },
}

impl Shape {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Shape::LineSmooth { .. } => PrimitiveKind::LineSmooth,
            Shape::Square { .. } => PrimitiveKind::Square,
            Shape::EmptyCircle { .. } => PrimitiveKind::EmptyCircle,
            Shape::Circle { .. } => PrimitiveKind::Circle,
            Shape::Bump { .. } => PrimitiveKind::Bump,
            Shape::EmptySquare { .. } => PrimitiveKind::EmptySquare,
            Shape::Hemisphere { .. } => PrimitiveKind::Hemisphere,
            Shape::LineSharp { .. } => PrimitiveKind::LineSharp,
        }
    }

    fn dims(&self) -> Vec<f64> {
        match *self {
            Shape::LineSmooth { width, edge_radius } => vec![width, edge_radius],
            Shape::Square { side } => vec![side],
            Shape::EmptyCircle { radius, thickness } => vec![radius, thickness],
            Shape::Circle { radius } => vec![radius],
            Shape::Bump {
                height,
                curvature_radius,
            } => vec![height, curvature_radius],
            Shape::EmptySquare { side, thickness } => vec![side, thickness],
            Shape::Hemisphere { radius } => vec![radius],
            Shape::LineSharp { width } => vec![width],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidPrimitive(format!("non-positive dimension in {self:?}")));
        }
        let ok = match *self {
            Shape::LineSmooth { width, edge_radius } => edge_radius <= width / 2.0 && edge_radius < FEATURE_HEIGHT_MM,
            Shape::EmptyCircle { radius, thickness } => thickness < radius,
            Shape::Bump {
                height,
                curvature_radius,
            } => height <= curvature_radius,
            Shape::EmptySquare { side, thickness } => 2.0 * thickness < side,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidPrimitive(format!("inconsistent dimensions in {self:?}")))
        }
    }

    /// Height above the base plane at a point in the shape frame.
    pub fn height(&self, p: Point) -> f64 {
        let [x, y] = p;
        let r = x.hypot(y);
        match *self {
            Shape::LineSmooth { width, edge_radius } => {
                let u = x.abs();
                if u > width / 2.0 || y.abs() > LINE_LENGTH_MM / 2.0 {
                    return 0.0;
                }
                let flat = width / 2.0 - edge_radius;
                if u <= flat {
                    FEATURE_HEIGHT_MM
                } else {
                    let d = u - flat;
                    FEATURE_HEIGHT_MM - edge_radius + (edge_radius * edge_radius - d * d).max(0.0).sqrt()
                }
            }
            Shape::Square { side } => {
                if x.abs() <= side / 2.0 && y.abs() <= side / 2.0 {
                    FEATURE_HEIGHT_MM
                } else {
                    0.0
                }
            }
            Shape::EmptyCircle { radius, thickness } => {
                if r <= radius && r >= radius - thickness {
                    FEATURE_HEIGHT_MM
                } else {
                    0.0
                }
            }
            Shape::Circle { radius } => {
                if r <= radius {
                    FEATURE_HEIGHT_MM
                } else {
                    0.0
                }
            }
            Shape::Bump {
                height,
                curvature_radius,
            } => {
                let h = (curvature_radius * curvature_radius - r * r).max(0.0).sqrt() - (curvature_radius - height);
                h.max(0.0)
            }
            Shape::EmptySquare { side, thickness } => {
                let m = x.abs().max(y.abs());
                if m <= side / 2.0 && m >= side / 2.0 - thickness {
                    FEATURE_HEIGHT_MM
                } else {
                    0.0
                }
            }
            Shape::Hemisphere { radius } => (radius * radius - r * r).max(0.0).sqrt(),
            Shape::LineSharp { width } => {
                if x.abs() <= width / 2.0 && y.abs() <= LINE_LENGTH_MM / 2.0 {
                    FEATURE_HEIGHT_MM
                } else {
                    0.0
                }
            }
        }
    }

    /// Largest side of the footprint's bounding box, mm.
    pub fn footprint_side(&self) -> f64 {
        match *self {
            Shape::LineSmooth { width, .. } => width.max(LINE_LENGTH_MM),
            Shape::LineSharp { width } => width.max(LINE_LENGTH_MM),
            Shape::Square { side } | Shape::EmptySquare { side, .. } => side,
            Shape::EmptyCircle { radius, .. } | Shape::Circle { radius } | Shape::Hemisphere { radius } => 2.0 * radius,
            Shape::Bump {
                height,
                curvature_radius,
            } => 2.0 * (2.0 * curvature_radius * height - height * height).sqrt(),
        }
    }
}

/// One of the 32 printed tactile primitives: a shape and its scale version.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    /// Scale variant, 1..=4.
    pub version: u8,
}

impl Primitive {
    pub fn new(shape: Shape, version: u8) -> Result<Self> {
        shape.validate()?;
        if !(1..=4).contains(&version) {
            return Err(Error::InvalidPrimitive(format!("version {version} not in 1..=4")));
        }
        Ok(Self { shape, version })
    }

    /// The published scale variant `version` (1..=4) of `kind`.
    pub fn catalog(kind: PrimitiveKind, version: u8) -> Result<Self> {
        if !(1..=4).contains(&version) {
            return Err(Error::InvalidPrimitive(format!("version {version} not in 1..=4")));
        }
        let v = (version - 1) as usize;
        let shape = match kind {
            PrimitiveKind::LineSmooth => {
                let w = [2.0, 3.0, 4.0, 5.0][v];
                Shape::LineSmooth {
                    width: w,
                    edge_radius: w / 4.0,
                }
            }
            // Version 2 is sized so that its 7×7 sampling grid has a
            // 1.4 mm resolution.
            PrimitiveKind::Square => Shape::Square {
                side: [5.0, 1.4 * 6.0 / 1.1, 9.0, 11.0][v],
            },
            PrimitiveKind::EmptyCircle => Shape::EmptyCircle {
                radius: [3.0, 4.0, 5.0, 6.0][v],
                thickness: [0.8, 1.0, 1.2, 1.5][v],
            },
            PrimitiveKind::Circle => Shape::Circle {
                radius: [2.0, 3.0, 4.0, 5.0][v],
            },
            PrimitiveKind::Bump => Shape::Bump {
                height: [1.5, 2.0, 2.5, 3.0][v],
                curvature_radius: [4.0, 6.0, 8.0, 10.0][v],
            },
            PrimitiveKind::EmptySquare => Shape::EmptySquare {
                side: [5.0, 7.0, 9.0, 11.0][v],
                thickness: [0.8, 1.0, 1.2, 1.5][v],
            },
            PrimitiveKind::Hemisphere => Shape::Hemisphere {
                radius: [2.0, 3.0, 4.0, 5.0][v],
            },
            PrimitiveKind::LineSharp => Shape::LineSharp {
                width: [1.0, 1.5, 2.0, 3.0][v],
            },
        };
        Self::new(shape, version)
    }

    /// All 32 primitives, kind-major, versions ascending.
    pub fn all() -> Vec<Primitive> {
        PrimitiveKind::ALL
            .iter()
            .flat_map(|&k| (1..=4).map(move |v| Primitive::catalog(k, v).expect("catalog entries are valid")))
            .collect()
    }

    pub fn kind(&self) -> PrimitiveKind {
        self.shape.kind()
    }

    pub fn height(&self, p: Point) -> f64 {
        self.shape.height(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectName {
    Pliers,
    Clamp,
    Scissors,
    AllenKey,
    Wrench,
}

impl ObjectName {
    pub const ALL: [ObjectName; 5] = [
        ObjectName::Pliers,
        ObjectName::Clamp,
        ObjectName::Scissors,
        ObjectName::AllenKey,
        ObjectName::Wrench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectName::Pliers => "pliers",
            ObjectName::Clamp => "clamp",
            ObjectName::Scissors => "scissors",
            ObjectName::AllenKey => "allen_key",
            ObjectName::Wrench => "wrench",
        }
    }
}

/// Solids used to assemble the test objects. Each lies on the base plane,
/// centred on its local origin and aligned with its local x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solid", rename_all = "snake_case")]
pub enum Solid {
    /// Cylinder of `radius` lying flat, `length` between its end-cap centres.
    Capsule {
        length: f64,
        radius: f64,
    },
    Box {
        length: f64,
        width: f64,
        height: f64,
    },
    Ring {
        outer: f64,
        inner: f64,
        height: f64,
    },
    Disk {
        radius: f64,
        height: f64,
    },
}

impl Solid {
    pub fn height(&self, p: Point) -> f64 {
        let [x, y] = p;
        match *self {
            Solid::Capsule { length, radius } => {
                let dx = (x.abs() - length / 2.0).max(0.0);
                let d2 = dx * dx + y * y;
                (radius * radius - d2).max(0.0).sqrt()
            }
            Solid::Box { length, width, height } => {
                if x.abs() <= length / 2.0 && y.abs() <= width / 2.0 {
                    height
                } else {
                    0.0
                }
            }
            Solid::Ring { outer, inner, height } => {
                let r = x.hypot(y);
                if r <= outer && r >= inner {
                    height
                } else {
                    0.0
                }
            }
            Solid::Disk { radius, height } => {
                if x.hypot(y) <= radius {
                    height
                } else {
                    0.0
                }
            }
        }
    }
}

/// A solid placed in the object frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub solid: Solid,
    pub center: Point,
    /// Rotation of the solid's x axis, radians.
    pub angle: f64,
}

impl Part {
    fn new(solid: Solid, center: Point, angle: f64) -> Self {
        Self { solid, center, angle }
    }

    fn height(&self, p: Point) -> f64 {
        self.solid.height(to_local(p, self.center, self.angle))
    }
}

/// A test object approximated as a union of solids, with four keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectShape {
    pub name: ObjectName,
    pub parts: Vec<Part>,
    pub keypoints: [Point; 4],
}

impl ObjectShape {
    pub fn catalog(name: ObjectName) -> Self {
        use Solid::*;
        let (parts, keypoints) = match name {
            ObjectName::Pliers => {
                let handle = |sign: f64| {
                    let (a, b) = ([10.0, 4.0 * sign], [70.0, 12.0 * sign]);
                    Part::new(
                        Capsule {
                            length: (b[0] - a[0]).hypot(b[1] - a[1]),
                            radius: 4.0,
                        },
                        [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0],
                        (b[1] - a[1]).atan2(b[0] - a[0]),
                    )
                };
                let jaw = |sign: f64| {
                    Part::new(
                        Box {
                            length: 22.0,
                            width: 4.5,
                            height: 4.0,
                        },
                        [-18.0, 2.8 * sign],
                        0.0,
                    )
                };
                (
                    vec![
                        handle(1.0),
                        handle(-1.0),
                        Part::new(
                            Disk {
                                radius: 7.0,
                                height: 4.0,
                            },
                            [0.0, 0.0],
                            0.0,
                        ),
                        jaw(1.0),
                        jaw(-1.0),
                    ],
                    [[-24.0, 0.0], [0.0, 0.0], [40.0, 8.0], [66.0, -11.5]],
                )
            }
            ObjectName::Clamp => (
                vec![
                    Part::new(
                        Box {
                            length: 68.0,
                            width: 8.0,
                            height: 3.0,
                        },
                        [0.0, 0.0],
                        PI / 2.0,
                    ),
                    Part::new(
                        Box {
                            length: 34.0,
                            width: 8.0,
                            height: 3.0,
                        },
                        [15.0, 30.0],
                        0.0,
                    ),
                    Part::new(
                        Box {
                            length: 34.0,
                            width: 8.0,
                            height: 3.0,
                        },
                        [15.0, -30.0],
                        0.0,
                    ),
                    Part::new(
                        Capsule {
                            length: 36.0,
                            radius: 3.0,
                        },
                        [25.0, -8.0],
                        PI / 2.0,
                    ),
                    Part::new(
                        Disk {
                            radius: 6.0,
                            height: 3.0,
                        },
                        [25.0, 13.0],
                        0.0,
                    ),
                ],
                [[0.0, 30.0], [25.0, -10.0], [25.0, 13.0], [0.0, 0.0]],
            ),
            ObjectName::Scissors => {
                let ring = |sign: f64| {
                    Part::new(
                        Ring {
                            outer: 10.0,
                            inner: 7.0,
                            height: 4.0,
                        },
                        [45.0, 10.0 * sign],
                        0.0,
                    )
                };
                let blade = |sign: f64| {
                    Part::new(
                        Box {
                            length: 60.0,
                            width: 5.0,
                            height: 3.0,
                        },
                        [-20.0, 1.5 * sign],
                        0.05 * sign,
                    )
                };
                let shank = |sign: f64| {
                    Part::new(
                        Capsule {
                            length: 30.0,
                            radius: 2.5,
                        },
                        [20.0, 5.0 * sign],
                        0.33 * sign,
                    )
                };
                (
                    vec![
                        ring(1.0),
                        ring(-1.0),
                        blade(1.0),
                        blade(-1.0),
                        shank(1.0),
                        shank(-1.0),
                        Part::new(
                            Disk {
                                radius: 4.0,
                                height: 3.0,
                            },
                            [0.0, 0.0],
                            0.0,
                        ),
                    ],
                    [[45.0, 10.0], [0.0, 0.0], [-30.0, 0.0], [-46.0, 3.0]],
                )
            }
            ObjectName::AllenKey => (
                vec![
                    Part::new(
                        Capsule {
                            length: 60.0,
                            radius: 2.5,
                        },
                        [30.0, 0.0],
                        0.0,
                    ),
                    Part::new(
                        Box {
                            length: 22.0,
                            width: 5.0,
                            height: 2.5,
                        },
                        [0.0, 11.0],
                        PI / 2.0,
                    ),
                ],
                [[30.0, 0.0], [0.0, 0.0], [0.0, 18.0], [58.0, 0.0]],
            ),
            ObjectName::Wrench => (
                vec![
                    Part::new(
                        Box {
                            length: 100.0,
                            width: 12.0,
                            height: 4.0,
                        },
                        [0.0, 0.0],
                        0.0,
                    ),
                    Part::new(
                        Ring {
                            outer: 14.0,
                            inner: 8.0,
                            height: 5.0,
                        },
                        [60.0, 0.0],
                        0.0,
                    ),
                    Part::new(
                        Box {
                            length: 16.0,
                            width: 6.0,
                            height: 5.0,
                        },
                        [-60.0, 9.0],
                        0.0,
                    ),
                    Part::new(
                        Box {
                            length: 16.0,
                            width: 6.0,
                            height: 5.0,
                        },
                        [-60.0, -9.0],
                        0.0,
                    ),
                ],
                [[60.0, 0.0], [0.0, 0.0], [-62.0, 9.0], [60.0, 11.0]],
            ),
        };
        Self { name, parts, keypoints }
    }

    pub fn all() -> Vec<ObjectShape> {
        ObjectName::ALL.iter().map(|&n| Self::catalog(n)).collect()
    }

    pub fn height(&self, p: Point) -> f64 {
        self.parts.iter().map(|part| part.height(p)).fold(0.0, f64::max)
    }
}

/// What is pressed into the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Indenter {
    Primitive(Primitive),
    Object { name: ObjectName },
}

/// An indenter, its planar pose in the sensor frame, and the normal force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactScene {
    pub indenter: Indenter,
    /// Sensor-frame position of the indenter's local origin, mm.
    pub position: Point,
    /// Rotation of the indenter about the contact normal, radians in [0, 2π).
    pub orientation: f64,
    /// Commanded normal force, N.
    pub force: f64,
}

impl ContactScene {
    pub fn validate(&self) -> Result<()> {
        if !(self.force > 0.0) || !self.force.is_finite() {
            return Err(Error::InvalidScene(format!(
                "force must be positive, got {}",
                self.force
            )));
        }
        if !(0.0..2.0 * PI).contains(&self.orientation) {
            return Err(Error::InvalidScene(format!(
                "orientation {} outside [0, 2π)",
                self.orientation
            )));
        }
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScene("non-finite position".into()));
        }
        Ok(())
    }

    /// Pose that centres the sensor on object point `target` with the given
    /// orientation.
    pub fn centred_on_object(name: ObjectName, target: Point, orientation: f64, force: f64) -> Self {
        let (s, c) = orientation.sin_cos();
        let position = [-(c * target[0] - s * target[1]), -(s * target[0] + c * target[1])];
        Self {
            indenter: Indenter::Object { name },
            position,
            orientation,
            force,
        }
    }
}

/// Elastic layer and transduction constants of the taxel sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticLayer {
    /// Foundation modulus, N/mm³: pressure per unit indentation.
    pub stiffness: f64,
    /// Layer thickness, mm; bounds the penetration search.
    pub thickness: f64,
    pub saturation_raw: f64,
    /// Raw counts per newton of force integrated over a taxel disc.
    pub counts_per_pressure: f64,
    /// Standard deviation of the additive taxel noise, counts.
    pub noise_std: f64,
}

impl Default for ElasticLayer {
    fn default() -> Self {
        // An 8 N flat disk of radius 3 mm centred on a taxel of radius 2.5 mm
        // puts 8 · 6.25 / 9 N on that taxel; 5040 counts/N maps it to 70% of
        // fullscale.
        Self {
            stiffness: 0.5,
            thickness: 4.0,
            saturation_raw: FULLSCALE,
            counts_per_pressure: 5040.0,
            noise_std: 0.002 * FULLSCALE,
        }
    }
}

impl ElasticLayer {
    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0) || !(self.thickness > 0.0) || !(self.counts_per_pressure > 0.0) {
            return Err(Error::InvalidConfig(
                "stiffness, thickness and gain must be positive".into(),
            ));
        }
        if self.saturation_raw != FULLSCALE {
            return Err(Error::InvalidConfig(format!(
                "saturation must be {FULLSCALE}, got {}",
                self.saturation_raw
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Grayscale camera model: indentation depth → smooth response → blur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub grid: PixelGrid,
    /// Gaussian blur of the soft layer, mm.
    pub blur_sigma_mm: f64,
    /// Depth at which the response reaches 1 − 1/e, mm.
    pub depth_scale_mm: f64,
    /// Standard deviation of additive intensity noise.
    pub noise_std: f64,
}

impl CameraModel {
    pub fn new(grid: PixelGrid) -> Self {
        Self {
            grid,
            blur_sigma_mm: 1.0,
            depth_scale_mm: 0.5,
            noise_std: 0.002,
        }
    }
}

/// Maps a sensor-frame point into a frame at `origin` rotated by `angle`.
#[inline]
fn to_local(q: Point, origin: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    let dx = q[0] - origin[0];
    let dy = q[1] - origin[1];
    [c * dx + s * dy, -s * dx + c * dy]
}

/// Indenter surface height above its base plane at an indenter-frame point.
pub fn height_field(indenter: &Indenter, p: Point) -> f64 {
    match indenter {
        Indenter::Primitive(prim) => prim.height(p),
        Indenter::Object { name } => ObjectShape::catalog(*name).height(p),
    }
}

enum Resolved {
    Primitive(Primitive),
    Object(ObjectShape),
}

impl Resolved {
    fn new(indenter: &Indenter) -> Self {
        match indenter {
            Indenter::Primitive(p) => Resolved::Primitive(*p),
            Indenter::Object { name } => Resolved::Object(ObjectShape::catalog(*name)),
        }
    }

    fn height(&self, p: Point) -> f64 {
        match self {
            Resolved::Primitive(prim) => prim.height(p),
            Resolved::Object(obj) => obj.height(p),
        }
    }
}

/// Gap between the indenter surface and its lowest point of first contact,
/// for every pixel of `grid`.
fn gap_map(scene: &ContactScene, grid: &PixelGrid) -> Result<Vec<f64>> {
    scene.validate()?;
    let shape = Resolved::new(&scene.indenter);
    let mut heights = Vec::with_capacity(grid.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let local = to_local(grid.position(r, c), scene.position, scene.orientation);
            heights.push(shape.height(local));
        }
    }
    let apex = heights.iter().copied().fold(0.0, f64::max);
    if apex <= 0.0 {
        return Err(Error::InvalidScene(
            "indenter does not overlap the simulation grid".into(),
        ));
    }
    Ok(heights.into_iter().map(|h| apex - h).collect())
}

fn contact_force(gaps: &[f64], depth: f64, k_area: f64) -> f64 {
    k_area * gaps.iter().map(|&g| (depth - g).max(0.0)).sum::<f64>()
}

fn penetration_from_gaps(gaps: &[f64], force: f64, layer: &ElasticLayer, grid: &PixelGrid) -> Result<f64> {
    layer.validate()?;
    let k_area = layer.stiffness * grid.pixel_area();
    let near: Vec<f64> = gaps.iter().copied().filter(|&g| g < layer.thickness).collect();
    let max_force = contact_force(&near, layer.thickness, k_area);
    if max_force < force {
        return Err(Error::ForceUnreachable { force, max_force });
    }
    let (mut lo, mut hi) = (0.0, layer.thickness);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if contact_force(&near, mid, k_area) < force {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Penetration depth, measured from first contact, at which the Winkler
/// pressure integrated over `grid` balances the scene force.
pub fn solve_penetration(scene: &ContactScene, layer: &ElasticLayer, grid: &PixelGrid) -> Result<f64> {
    let gaps = gap_map(scene, grid)?;
    penetration_from_gaps(&gaps, scene.force, layer, grid)
}

/// Solved contact: penetration depth and the pressure image (N/mm²).
#[derive(Debug, Clone)]
pub struct Contact {
    pub depth: f64,
    pub pressure: TactileImage,
}

pub fn simulate(scene: &ContactScene, layer: &ElasticLayer, grid: &PixelGrid) -> Result<Contact> {
    let gaps = gap_map(scene, grid)?;
    let depth = penetration_from_gaps(&gaps, scene.force, layer, grid)?;
    let data = gaps.iter().map(|&g| layer.stiffness * (depth - g).max(0.0)).collect();
    Ok(Contact {
        depth,
        pressure: TactileImage::new(*grid, data)?,
    })
}

/// Per-pixel contact pressure, N/mm².
pub fn pressure_field(scene: &ContactScene, layer: &ElasticLayer, grid: &PixelGrid) -> Result<TactileImage> {
    simulate(scene, layer, grid).map(|c| c.pressure)
}

/// Area of the axis-aligned rectangle `[x0, x1] × [y0, y1]` inside the disc of
/// radius `r` centred on the origin.
pub fn rect_disc_overlap(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> f64 {
    // Primitive over the segment of disc in [0, t] of the half-plane y >= 0.
    let p = |t: f64| 0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).clamp(-1.0, 1.0).asin());
    // Area of disc ∩ [0, x] × [0, y] for x, y >= 0.
    let quadrant = |x: f64, y: f64| -> f64 {
        let x = x.min(r);
        let y = y.min(r);
        let t = (r * r - y * y).max(0.0).sqrt();
        if x <= t {
            x * y
        } else {
            t * y + p(x) - p(t)
        }
    };
    let signed = |x: f64, y: f64| x.signum() * y.signum() * quadrant(x.abs(), y.abs());
    signed(x1, y1) - signed(x0, y1) - signed(x1, y0) + signed(x0, y0)
}

/// Sparse overlap weights (pixel index, mm²) of every taxel disc on a grid.
#[derive(Debug, Clone)]
pub struct TaxelIntegrator {
    grid: PixelGrid,
    weights: Vec<Vec<(usize, f64)>>,
}

impl TaxelIntegrator {
    pub fn new(layout: &TaxelLayout, grid: &PixelGrid) -> Result<Self> {
        let r = layout.sensing_radius();
        let (lo, hi) = grid.extent();
        let [sx, sy] = grid.spacing;
        let mut weights = Vec::with_capacity(layout.n_taxels());
        for (i, &p) in layout.positions().iter().enumerate() {
            if p[0] - r < lo[0] || p[0] + r > hi[0] || p[1] - r < lo[1] || p[1] + r > hi[1] {
                let (col, row) = grid.to_pixel(p);
                return Err(Error::OutOfBounds { taxel: i, col, row });
            }
            let (c0, r0) = grid.to_pixel([p[0] - r, p[1] - r]);
            let (c1, r1) = grid.to_pixel([p[0] + r, p[1] + r]);
            let mut w = Vec::new();
            for row in (r0.floor().max(0.0) as usize)..=(r1.ceil() as usize).min(grid.rows - 1) {
                for col in (c0.floor().max(0.0) as usize)..=(c1.ceil() as usize).min(grid.cols - 1) {
                    let q = grid.position(row, col);
                    let x0 = q[0] - 0.5 * sx - p[0];
                    let y0 = q[1] - 0.5 * sy - p[1];
                    let a = rect_disc_overlap(x0, x0 + sx, y0, y0 + sy, r);
                    if a > 0.0 {
                        w.push((row * grid.cols + col, a));
                    }
                }
            }
            weights.push(w);
        }
        Ok(Self { grid: *grid, weights })
    }

    /// Force (N) on each taxel disc.
    pub fn integrate(&self, pressure: &TactileImage) -> Result<Vec<f64>> {
        if pressure.grid() != &self.grid {
            return Err(Error::ShapeMismatch(
                "pressure grid differs from the integrator grid".into(),
            ));
        }
        let data = pressure.data();
        Ok(self
            .weights
            .iter()
            .map(|w| w.iter().map(|&(i, a)| data[i] * a).sum())
            .collect())
    }

    /// Raw counts before noise, rounding and saturation.
    pub fn raw_counts(&self, pressure: &TactileImage, layer: &ElasticLayer) -> Result<Vec<f64>> {
        Ok(self
            .integrate(pressure)?
            .into_iter()
            .map(|f| f * layer.counts_per_pressure)
            .collect())
    }

    pub fn sense(&self, pressure: &TactileImage, layer: &ElasticLayer, noise_seed: Option<u64>) -> Result<ArraySample> {
        let mut counts = self.raw_counts(pressure, layer)?;
        if let Some(seed) = noise_seed {
            if layer.noise_std > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, layer.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                for c in &mut counts {
                    *c += normal.sample(&mut rng);
                }
            }
        }
        Ok(ArraySample::clamped(
            counts.into_iter().map(|c| c.clamp(0.0, layer.saturation_raw).round()),
        ))
    }
}

/// Taxel readout: pressure integrated over each sensing disc, scaled to raw
/// counts, optionally perturbed, then saturated and rounded.
pub fn sense_array(
    pressure: &TactileImage,
    layout: &TaxelLayout,
    layer: &ElasticLayer,
    noise_seed: Option<u64>,
) -> Result<ArraySample> {
    TaxelIntegrator::new(layout, pressure.grid())?.sense(pressure, layer, noise_seed)
}

/// Normalized 1-D Gaussian kernel of standard deviation `sigma` pixels.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable blur; weights are renormalized over in-image taps.
fn blur(data: &[f64], rows: usize, cols: usize, sigma_x: f64, sigma_y: f64) -> Vec<f64> {
    let kx = gaussian_kernel(sigma_x);
    let ky = gaussian_kernel(sigma_y);
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = vec![0.0; data.len()];
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        for c in 0..cols {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (t, &w) in kx.iter().enumerate() {
                let cc = c as isize + t as isize - rx;
                if cc >= 0 && (cc as usize) < cols {
                    acc += w * row[cc as usize];
                    norm += w;
                }
            }
            tmp[r * cols + c] = acc / norm;
        }
    }
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (t, &w) in ky.iter().enumerate() {
                let rr = r as isize + t as isize - ry;
                if rr >= 0 && (rr as usize) < rows {
                    acc += w * tmp[rr as usize * cols + c];
                    norm += w;
                }
            }
            out[r * cols + c] = acc / norm;
        }
    }
    out
}

/// Indentation depth (mm) seen by the camera before the response curve and
/// blur.
pub fn camera_depth_map(pressure: &TactileImage, layer: &ElasticLayer, camera: &CameraModel) -> TactileImage {
    let depth = pressure.resample(&camera.grid, 0.0);
    let data = depth.data().iter().map(|p| p / layer.stiffness).collect();
    TactileImage::new(camera.grid, data).expect("finite depth map")
}

/// Grayscale camera image in [0, 1], quantized to `f32` precision.
pub fn sense_camera(
    pressure: &TactileImage,
    layer: &ElasticLayer,
    camera: &CameraModel,
    noise_seed: Option<u64>,
) -> Result<TactileImage> {
    let depth = camera_depth_map(pressure, layer, camera);
    let response: Vec<f64> = depth
        .data()
        .iter()
        .map(|d| 1.0 - (-d / camera.depth_scale_mm).exp())
        .collect();
    let grid = camera.grid;
    let mut img = blur(
        &response,
        grid.rows,
        grid.cols,
        camera.blur_sigma_mm / grid.spacing[0],
        camera.blur_sigma_mm / grid.spacing[1],
    );
    if let Some(seed) = noise_seed {
        if camera.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, camera.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            for v in &mut img {
                *v += normal.sample(&mut rng);
            }
        }
    }
    for v in &mut img {
        *v = v.clamp(0.0, 1.0) as f32 as f64;
    }
    TactileImage::new(grid, img)
}
