//! Synthetic translating-block phantom and ground-truth rasterization.
//!
//! Images are stored row-major with row 0 at the top: pixel `(r, c)` of an
//! `n × n` grid with pitch `h` has its center at
//! `x = (c - (n-1)/2)·h`, `y = ((n-1)/2 - r)·h`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

pub type Point = [f64; 2];

/// Default attenuation for HDPE parts, arbitrary units.
pub const MU_HDPE: f64 = 1.0;
/// Default attenuation for the polypropene pipe, arbitrary units.
pub const MU_PIPE: f64 = 0.8;
/// Threshold applied to the measured static ground truth.
pub const GROUND_TRUTH_FLOOR: f64 = 1.9e-3;
/// One interleaved stepper step of the sled, mm (`π · 23 / 400`).
pub const INTERLEAVED_STEP_MM: f64 = std::f64::consts::PI * 23.0 / 400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disk { center: Point, radius: f64 },
    Annulus { center: Point, inner: f64, outer: f64 },
    Rectangle { center: Point, width: f64, height: f64, #[serde(default)] rotation: f64 },
    Polygon { vertices: Vec<Point> },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Disk { radius, .. } => *radius > 0.0,
            Shape::Annulus { inner, outer, .. } => *inner > 0.0 && inner < outer,
            Shape::Rectangle { width, height, .. } => *width > 0.0 && *height > 0.0,
            Shape::Polygon { vertices } => vertices.len() >= 3 && polygon_is_simple(vertices),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate primitive {self:?}")))
        }
    }

    /// Reference point that moves with the primitive.
    pub fn center(&self) -> Point {
        match self {
            Shape::Disk { center, .. } | Shape::Annulus { center, .. } | Shape::Rectangle { center, .. } => *center,
            Shape::Polygon { vertices } => {
                let n = vertices.len() as f64;
                let (sx, sy) = vertices.iter().fold((0.0, 0.0), |(sx, sy), v| (sx + v[0], sy + v[1]));
                [sx / n, sy / n]
            }
        }
    }

    pub fn translated(&self, d: Point) -> Shape {
        let mv = |p: &Point| [p[0] + d[0], p[1] + d[1]];
        match self {
            Shape::Disk { center, radius } => Shape::Disk { center: mv(center), radius: *radius },
            Shape::Annulus { center, inner, outer } => Shape::Annulus { center: mv(center), inner: *inner, outer: *outer },
            Shape::Rectangle { center, width, height, rotation } => Shape::Rectangle {
                center: mv(center),
                width: *width,
                height: *height,
                rotation: *rotation,
            },
            Shape::Polygon { vertices } => Shape::Polygon { vertices: vertices.iter().map(mv).collect() },
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        match self {
            Shape::Disk { center: c, radius: r } | Shape::Annulus { center: c, outer: r, .. } => {
                ([c[0] - r, c[1] - r], [c[0] + r, c[1] + r])
            }
            Shape::Rectangle { center, width, height, rotation } => {
                let (s, co) = rotation.sin_cos();
                let hx = 0.5 * (width * co.abs() + height * s.abs());
                let hy = 0.5 * (width * s.abs() + height * co.abs());
                ([center[0] - hx, center[1] - hy], [center[0] + hx, center[1] + hy])
            }
            Shape::Polygon { vertices } => vertices.iter().fold(
                ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
                |(lo, hi), v| ([lo[0].min(v[0]), lo[1].min(v[1])], [hi[0].max(v[0]), hi[1].max(v[1])]),
            ),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            Shape::Disk { center, radius } => dist2(p, *center) <= radius * radius,
            Shape::Annulus { center, inner, outer } => {
                let d = dist2(p, *center);
                d >= inner * inner && d <= outer * outer
            }
            Shape::Rectangle { center, width, height, rotation } => {
                let (s, c) = rotation.sin_cos();
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                u.abs() <= 0.5 * width && v.abs() <= 0.5 * height
            }
            Shape::Polygon { vertices } => point_in_polygon(p, vertices),
        }
    }
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn point_in_polygon(p: Point, vs: &[Point]) -> bool {
    let mut inside = false;
    let mut j = vs.len() - 1;
    for i in 0..vs.len() {
        let (a, b) = (vs[i], vs[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0 {
        return true;
    }
    let on = |a: Point, b: Point, p: Point, d: f64| {
        d == 0.0 && p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// True if no two non-adjacent edges touch.
pub fn polygon_is_simple(vs: &[Point]) -> bool {
    let n = vs.len();
    for i in 0..n {
        let (a1, a2) = (vs[i], vs[(i + 1) % n]);
        if a1 == a2 {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(a1, a2, vs[j], vs[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub shape: Shape,
    pub attenuation: f64,
}

impl Primitive {
    pub fn new(shape: Shape, attenuation: f64) -> Result<Self> {
        shape.validate()?;
        if !(attenuation >= 0.0 && attenuation.is_finite()) {
            return Err(Error::Config(format!("attenuation must be finite and >= 0, got {attenuation}")));
        }
        Ok(Self { shape, attenuation })
    }
}

/// Ordered list of primitives; later entries override earlier ones where
/// they overlap. At most one primitive follows the motion profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomScene {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub moving: Option<usize>,
}

impl PhantomScene {
    pub fn empty() -> Self {
        Self { primitives: vec![], moving: None }
    }

    /// Two-dimensional cut through the phantom: pipe wall, an L-shaped static
    /// detail in the lower half and a 15 mm square block centered at
    /// `block_center`.
    pub fn stempo(mu_hdpe: f64, mu_pipe: f64, block_center: Point) -> Self {
        let pipe = Primitive {
            shape: Shape::Annulus { center: [0.0, 0.0], inner: 36.0, outer: 40.0 },
            attenuation: mu_pipe,
        };
        let detail = Primitive {
            shape: Shape::Polygon { vertices: stempo_static_outline() },
            attenuation: mu_hdpe,
        };
        let block = Primitive {
            shape: Shape::Rectangle { center: block_center, width: 15.0, height: 15.0, rotation: 0.0 },
            attenuation: mu_hdpe,
        };
        Self { primitives: vec![pipe, detail, block], moving: Some(2) }
    }

    /// The same scene with the moving primitive removed.
    pub fn static_part(&self) -> Self {
        let primitives = self
            .primitives
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.moving)
            .map(|(_, p)| p.clone())
            .collect();
        Self { primitives, moving: None }
    }

    /// Only the moving primitive.
    pub fn moving_part(&self) -> Self {
        match self.moving {
            Some(i) => Self { primitives: vec![self.primitives[i].clone()], moving: Some(0) },
            None => Self::empty(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.primitives {
            Primitive::new(p.shape.clone(), p.attenuation)?;
        }
        if let Some(i) = self.moving {
            if i >= self.primitives.len() {
                return Err(Error::Config(format!(
                    "moving primitive index {i} out of range for {} primitives",
                    self.primitives.len()
                )));
            }
        }
        Ok(())
    }

    pub fn block_origin(&self) -> Option<Point> {
        self.moving.map(|i| self.primitives[i].shape.center())
    }

    /// Primitives placed at frame `t`.
    pub fn at_frame(&self, profile: &MotionProfile, t: usize) -> Vec<Primitive> {
        let mut out = self.primitives.clone();
        if let Some(i) = self.moving {
            let origin = self.primitives[i].shape.center();
            let pos = block_position(profile, t, origin);
            let d = [pos[0] - origin[0], pos[1] - origin[1]];
            out[i].shape = out[i].shape.translated(d);
        }
        out
    }
}

/// Outline of the static detail: a 54 × 15 mm bar with a notch cut from its
/// upper right corner.
pub fn stempo_static_outline() -> Vec<Point> {
    vec![[-27.0, -15.0], [27.0, -15.0], [27.0, -7.5], [9.0, -7.5], [9.0, 0.0], [-27.0, 0.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionProfile {
    Static,
    ConstantStep { direction: Point, step_mm: f64 },
    Periodic { direction: Point, amplitude_mm: f64, period_frames: usize },
    Jump { direction: Point, offset_mm: f64, jump_frame: usize },
}

impl MotionProfile {
    pub fn validate(&self) -> Result<()> {
        let unit = |d: &Point| ((d[0] * d[0] + d[1] * d[1]).sqrt() - 1.0).abs() < 1e-9;
        match self {
            MotionProfile::Static => Ok(()),
            MotionProfile::ConstantStep { direction, step_mm } if unit(direction) && step_mm.is_finite() => Ok(()),
            MotionProfile::Periodic { direction, amplitude_mm, period_frames }
                if unit(direction) && amplitude_mm.is_finite() && *period_frames >= 2 =>
            {
                Ok(())
            }
            MotionProfile::Jump { direction, offset_mm, .. } if unit(direction) && offset_mm.is_finite() => Ok(()),
            other => Err(Error::Config(format!(
                "invalid motion profile {other:?}: direction must be a unit vector, period_frames >= 2"
            ))),
        }
    }
}

/// Block position at frame `t` for a block whose position at `t = 0` is
/// `origin`.
pub fn block_position(profile: &MotionProfile, t: usize, origin: Point) -> Point {
    let along = |d: &Point, s: f64| [origin[0] + s * d[0], origin[1] + s * d[1]];
    match profile {
        MotionProfile::Static => origin,
        MotionProfile::ConstantStep { direction, step_mm } => along(direction, t as f64 * step_mm),
        MotionProfile::Periodic { direction, amplitude_mm, period_frames } => {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / *period_frames as f64;
            along(direction, amplitude_mm * phase.sin())
        }
        MotionProfile::Jump { direction, offset_mm, jump_frame } => {
            if t < *jump_frame {
                origin
            } else {
                along(direction, *offset_mm)
            }
        }
    }
}

/// Pixel-center coordinate of row `r`, column `c`.
#[inline]
pub fn pixel_center(n: usize, pixel_size_mm: f64, r: usize, c: usize) -> Point {
    let half = (n as f64 - 1.0) / 2.0;
    [(c as f64 - half) * pixel_size_mm, (half - r as f64) * pixel_size_mm]
}

#[derive(Debug, Clone)]
pub struct RasterFrame<T> {
    pub image: Vec<T>,
    /// Set when part of the moving primitive lies outside the image field.
    pub block_outside_field: bool,
}

/// Rasterize frame `t` on an `n × n` grid by sampling `supersample²` points
/// per pixel and averaging the topmost attenuation at each.
pub fn rasterize_frame<T: Real>(
    scene: &PhantomScene,
    profile: &MotionProfile,
    t: usize,
    n: usize,
    pixel_size_mm: f64,
    supersample: usize,
) -> Result<RasterFrame<T>> {
    if n < 8 {
        return Err(Error::Parameter(format!("image size must be >= 8, got {n}")));
    }
    if !(pixel_size_mm > 0.0) || supersample == 0 {
        return Err(Error::Parameter("pixel size must be > 0 and supersample >= 1".into()));
    }
    let prims = scene.at_frame(profile, t);
    let half_field = 0.5 * n as f64 * pixel_size_mm;
    let block_outside_field = scene.moving.is_some_and(|i| {
        let (lo, hi) = prims[i].shape.bounds();
        lo[0] < -half_field || lo[1] < -half_field || hi[0] > half_field || hi[1] > half_field
    });
    let boxes: Vec<_> = prims.iter().map(|p| p.shape.bounds()).collect();
    let s = supersample;
    let weight = 1.0 / (s * s) as f64;
    let mut image = vec![T::zero(); n * n];
    image.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
        for (c, px) in row.iter_mut().enumerate() {
            let center = pixel_center(n, pixel_size_mm, r, c);
            let mut acc = 0.0;
            for a in 0..s {
                for b in 0..s {
                    let p = [
                        center[0] + ((b as f64 + 0.5) / s as f64 - 0.5) * pixel_size_mm,
                        center[1] - ((a as f64 + 0.5) / s as f64 - 0.5) * pixel_size_mm,
                    ];
                    for (prim, (lo, hi)) in prims.iter().zip(&boxes).rev() {
                        if p[0] < lo[0] || p[0] > hi[0] || p[1] < lo[1] || p[1] > hi[1] {
                            continue;
                        }
                        if prim.shape.contains(p) {
                            acc += prim.attenuation;
                            break;
                        }
                    }
                }
            }
            *px = T::of(acc * weight);
        }
    });
    Ok(RasterFrame { image, block_outside_field })
}

/// Time series of rasterized frames with the block trajectory that produced
/// them. Frames are stored frame-major, each `n × n` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub n: usize,
    pub n_frames: usize,
    pub pixel_size_mm: f64,
    pub frames: Vec<T>,
    pub block_centers_mm: Vec<Point>,
    /// Frames whose block left the image field.
    pub out_of_field: Vec<usize>,
}

impl<T: Real> GroundTruth<T> {
    pub fn frame(&self, t: usize) -> &[T] {
        &self.frames[t * self.n * self.n..(t + 1) * self.n * self.n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [T] {
        let nn = self.n * self.n;
        &mut self.frames[t * nn..(t + 1) * nn]
    }
}

pub fn generate_ground_truth<T: Real>(
    scene: &PhantomScene,
    profile: &MotionProfile,
    n_frames: usize,
    n: usize,
    pixel_size_mm: f64,
    supersample: usize,
) -> Result<GroundTruth<T>> {
    if n_frames == 0 {
        return Err(Error::Parameter("ground truth needs at least one frame".into()));
    }
    scene.validate()?;
    profile.validate()?;
    let rasters = (0..n_frames)
        .into_par_iter()
        .map(|t| rasterize_frame::<T>(scene, profile, t, n, pixel_size_mm, supersample))
        .collect::<Result<Vec<_>>>()?;
    let origin = scene.block_origin().unwrap_or([0.0, 0.0]);
    let block_centers_mm = (0..n_frames).map(|t| block_position(profile, t, origin)).collect();
    let out_of_field = rasters
        .iter()
        .enumerate()
        .filter(|(_, r)| r.block_outside_field)
        .map(|(t, _)| t)
        .collect::<Vec<_>>();
    if !out_of_field.is_empty() {
        log::warn!("moving block leaves the image field in {} frame(s)", out_of_field.len());
    }
    let mut frames = Vec::with_capacity(n * n * n_frames);
    for r in rasters {
        frames.extend(r.image);
    }
    Ok(GroundTruth { n, n_frames, pixel_size_mm, frames, block_centers_mm, out_of_field })
}

/// Zero every value strictly below `floor`.
pub fn threshold_clean<T: Real>(image: &[T], floor: T) -> Result<Vec<T>> {
    if !(floor >= T::zero()) {
        return Err(Error::Parameter(format!("threshold floor must be >= 0, got {floor}")));
    }
    Ok(image.iter().map(|&v| if v < floor { T::zero() } else { v }).collect())
}
