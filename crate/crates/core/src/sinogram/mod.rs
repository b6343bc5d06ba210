//! Sinogram data model and the measurement pipeline: binning, log
//! transform, noise simulation, angular subsampling and frame partitioning.

pub mod container;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_binning, normalize_deg, FanBeamGeometry, SamplingSchedule, FLAT_REGION_UNBINNED};
use crate::num::Real;
use crate::phantom::GroundTruth;
use crate::projector::{FanBeamProjector, LinearOperator};

/// Angles closer than this are treated as the same direction.
pub const ANGLE_TOLERANCE_DEG: f64 = 1e-9;

/// `P × D` attenuation line integrals, one row per projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram<T> {
    pub data: Vec<T>,
    pub geometry: FanBeamGeometry,
    pub schedule: SamplingSchedule,
    pub binning: usize,
    /// Ground-truth frame observed by each projection; `None` means
    /// projection `i` saw frame `i`.
    pub frame_of_projection: Option<Vec<usize>>,
}

impl<T: Real> Sinogram<T> {
    pub fn new(
        data: Vec<T>,
        geometry: FanBeamGeometry,
        schedule: SamplingSchedule,
        binning: usize,
        frame_of_projection: Option<Vec<usize>>,
    ) -> Result<Self> {
        let s = Self { data, geometry, schedule, binning, frame_of_projection };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.schedule.validate()?;
        check_binning(self.binning)?;
        let want = self.n_proj() * self.n_det();
        if self.data.len() != want {
            return Err(Error::Shape(format!(
                "sinogram has {} values, expected {} × {}",
                self.data.len(),
                self.n_proj(),
                self.n_det()
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at projection {}, element {}",
                i / self.n_det(),
                i % self.n_det()
            )));
        }
        if let Some(map) = &self.frame_of_projection {
            if map.len() != self.n_proj() {
                return Err(Error::Shape(format!(
                    "frame map has {} entries for {} projections",
                    map.len(),
                    self.n_proj()
                )));
            }
        }
        Ok(())
    }

    pub fn n_proj(&self) -> usize {
        self.schedule.len()
    }

    pub fn n_det(&self) -> usize {
        self.geometry.detector_count
    }

    pub fn row(&self, i: usize) -> &[T] {
        let d = self.n_det();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn angles_deg(&self) -> Vec<f64> {
        self.schedule.angles_deg()
    }

    pub fn frame_of(&self, i: usize) -> usize {
        self.frame_of_projection.as_ref().map_or(i, |m| m[i])
    }

    /// Rows `rows` (in the given order) as a new sinogram with a custom
    /// schedule.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_proj()) {
            return Err(Error::ScheduleBounds { index: bad, len: self.n_proj() });
        }
        let angles = self.angles_deg();
        let mut data = Vec::with_capacity(rows.len() * self.n_det());
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Sinogram::new(
            data,
            self.geometry.clone(),
            SamplingSchedule::Custom { angles_deg: rows.iter().map(|&r| angles[r]).collect() },
            self.binning,
            Some(rows.iter().map(|&r| self.frame_of(r)).collect()),
        )
    }

    /// Projector matching this sinogram's angles on an `n × n` grid.
    pub fn projector(&self, n: usize, pixel_size_mm: f64) -> Result<FanBeamProjector> {
        FanBeamProjector::new(self.geometry.clone(), self.angles_deg(), n, pixel_size_mm)
    }
}

/// Rectangle `[row_start, row_end) × [col_start, col_end)` on a projection
/// image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Region {
    /// Flat-field area in the top-left corner at the given binning.
    pub fn default_flat(binning: usize) -> Result<Self> {
        check_binning(binning)?;
        Ok(Self {
            row_start: 0,
            row_end: FLAT_REGION_UNBINNED.0 / binning,
            col_start: 0,
            col_end: FLAT_REGION_UNBINNED.1 / binning,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.row_start >= self.row_end || self.col_start >= self.col_end
    }
}

/// Raw detected intensities: `n_proj` images of `rows × cols`, with the
/// detector row that becomes the 2D sinogram and a region outside the
/// object shadow.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityStack<T> {
    pub n_proj: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    pub flat_region: Region,
    pub signal_row: usize,
}

impl<T: Real> IntensityStack<T> {
    pub fn new(
        n_proj: usize,
        rows: usize,
        cols: usize,
        data: Vec<T>,
        flat_region: Region,
        signal_row: usize,
    ) -> Result<Self> {
        let s = Self { n_proj, rows, cols, data, flat_region, signal_row };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.n_proj * self.rows * self.cols {
            return Err(Error::Shape(format!(
                "intensity stack has {} values, expected {}×{}×{}",
                self.data.len(),
                self.n_proj,
                self.rows,
                self.cols
            )));
        }
        let r = &self.flat_region;
        if r.is_empty() || r.row_end > self.rows || r.col_end > self.cols {
            return Err(Error::Shape(format!(
                "flat region {r:?} is empty or outside the {}×{} detector",
                self.rows, self.cols
            )));
        }
        if self.signal_row >= self.rows {
            return Err(Error::Shape(format!("signal row {} outside {} rows", self.signal_row, self.rows)));
        }
        Ok(())
    }

    pub fn image(&self, i: usize) -> &[T] {
        let sz = self.rows * self.cols;
        &self.data[i * sz..(i + 1) * sz]
    }

    /// Mean intensity over the flat region of projection `i`.
    pub fn flat_mean(&self, i: usize) -> T {
        let img = self.image(i);
        let r = &self.flat_region;
        let mut acc = 0.0;
        for row in r.row_start..r.row_end {
            for v in &img[row * self.cols + r.col_start..row * self.cols + r.col_end] {
                acc += v.f64();
            }
        }
        T::of(acc / ((r.row_end - r.row_start) * (r.col_end - r.col_start)) as f64)
    }
}

/// Sum `factor × factor` blocks of detector elements.
pub fn bin_intensities<T: Real>(stack: &IntensityStack<T>, factor: usize) -> Result<IntensityStack<T>> {
    if factor == 0 || stack.rows % factor != 0 || stack.cols % factor != 0 {
        return Err(Error::Shape(format!(
            "binning factor {factor} does not divide the {}×{} detector",
            stack.rows, stack.cols
        )));
    }
    if factor == 1 {
        return Ok(stack.clone());
    }
    let (rows, cols) = (stack.rows / factor, stack.cols / factor);
    let mut data = vec![T::zero(); stack.n_proj * rows * cols];
    data.par_chunks_mut(rows * cols).enumerate().for_each(|(i, out)| {
        let img = stack.image(i);
        for r in 0..stack.rows {
            for c in 0..stack.cols {
                out[(r / factor) * cols + c / factor] += img[r * stack.cols + c];
            }
        }
    });
    let f = &stack.flat_region;
    let flat_region = Region {
        row_start: f.row_start / factor,
        row_end: f.row_end.div_ceil(factor),
        col_start: f.col_start / factor,
        col_end: f.col_end.div_ceil(factor),
    };
    IntensityStack::new(stack.n_proj, rows, cols, data, flat_region, stack.signal_row / factor)
}

/// Log transform: `ln(I₀ᵢ / Iᵢⱼ)` along the signal row, with `I₀ᵢ` the mean
/// of projection `i`'s flat region. Negative results are kept.
pub fn to_sinogram<T: Real>(
    stack: &IntensityStack<T>,
    geometry: &FanBeamGeometry,
    schedule: &SamplingSchedule,
    binning: usize,
) -> Result<Sinogram<T>> {
    stack.validate()?;
    if stack.n_proj != schedule.len() {
        return Err(Error::Shape(format!(
            "{} projections in stack, {} in schedule",
            stack.n_proj,
            schedule.len()
        )));
    }
    if stack.cols != geometry.detector_count {
        return Err(Error::Shape(format!(
            "stack has {} columns, geometry has {} detector elements",
            stack.cols, geometry.detector_count
        )));
    }
    let d = stack.cols;
    let mut data = vec![T::zero(); stack.n_proj * d];
    for (i, out) in data.chunks_mut(d).enumerate() {
        let i0 = stack.flat_mean(i);
        if !(i0 > T::zero()) {
            return Err(Error::Data(format!("flat-region mean of projection {i} is {i0}, must be > 0")));
        }
        let row = &stack.image(i)[stack.signal_row * d..(stack.signal_row + 1) * d];
        for (j, (o, &v)) in out.iter_mut().zip(row).enumerate() {
            if !(v > T::zero()) {
                return Err(Error::NonPositiveIntensity { projection: i, element: j, value: v.f64() });
            }
            *o = (i0 / v).ln();
        }
    }
    Sinogram::new(data, geometry.clone(), schedule.clone(), binning, None)
}

/// Incident photon count per detector element; `Noiseless` skips sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Photons {
    Noiseless,
    Poisson(f64),
}

impl Photons {
    /// `∞` maps to `Noiseless`.
    pub fn from_count(i0: f64) -> Result<Self> {
        if i0 == f64::INFINITY {
            Ok(Photons::Noiseless)
        } else if i0 > 0.0 && i0.is_finite() {
            Ok(Photons::Poisson(i0))
        } else {
            Err(Error::Parameter(format!("photon count must be > 0, got {i0}")))
        }
    }
}

/// Simulated acquisition: clean line integrals from the ground truth, then
/// Poisson counts.
///
/// The returned stack has two detector rows: row 0 is unobstructed beam
/// (the flat region) and row 1 is the object slice. Each projection draws
/// from its own ChaCha stream (`seed`, stream = projection index), so the
/// result does not depend on scheduling. Zero counts are raised to one.
pub fn simulate_measurement<T: Real>(
    gt: &GroundTruth<T>,
    geometry: &FanBeamGeometry,
    schedule: &SamplingSchedule,
    binning: usize,
    photons: Photons,
    seed: u64,
    frame_of_projection: Option<Vec<usize>>,
) -> Result<(IntensityStack<T>, Sinogram<T>)> {
    let clean = clean_sinogram(gt, geometry, schedule, binning, frame_of_projection)?;
    let (p, d) = (clean.n_proj(), clean.n_det());
    let region = Region { row_start: 0, row_end: 1, col_start: 0, col_end: d };
    let mut data = vec![T::zero(); p * 2 * d];
    match photons {
        Photons::Noiseless => {
            data.par_chunks_mut(2 * d).enumerate().for_each(|(i, img)| {
                img[..d].fill(T::one());
                for (o, &s) in img[d..].iter_mut().zip(clean.row(i)) {
                    *o = (-s).exp();
                }
            });
            let stack = IntensityStack::new(p, 2, d, data, region, 1)?;
            Ok((stack, clean))
        }
        Photons::Poisson(i0) => {
            data.par_chunks_mut(2 * d).enumerate().try_for_each(|(i, img)| -> Result<()> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let flat = Poisson::new(i0).map_err(|e| Error::Parameter(e.to_string()))?;
                for o in img[..d].iter_mut() {
                    *o = T::of(flat.sample(&mut rng).max(1.0));
                }
                for (o, &s) in img[d..].iter_mut().zip(clean.row(i)) {
                    let mean = i0 * (-s.f64()).exp();
                    let count = if mean > 0.0 {
                        Poisson::new(mean).map_err(|e| Error::Parameter(e.to_string()))?.sample(&mut rng)
                    } else {
                        0.0
                    };
                    *o = T::of(count.max(1.0));
                }
                Ok(())
            })?;
            let stack = IntensityStack::new(p, 2, d, data, region, 1)?;
            let mut sino = to_sinogram(&stack, geometry, schedule, binning)?;
            sino.frame_of_projection = clean.frame_of_projection;
            Ok((stack, sino))
        }
    }
}

/// Noise-free line integrals: projection `i` sees ground-truth frame
/// `frame_of_projection[i]` (default `i`).
pub fn clean_sinogram<T: Real>(
    gt: &GroundTruth<T>,
    geometry: &FanBeamGeometry,
    schedule: &SamplingSchedule,
    binning: usize,
    frame_of_projection: Option<Vec<usize>>,
) -> Result<Sinogram<T>> {
    schedule.validate()?;
    let p = schedule.len();
    let frames = match frame_of_projection {
        Some(m) => m,
        None => (0..p).collect(),
    };
    if frames.len() != p {
        return Err(Error::Config(format!("frame map has {} entries for {p} projections", frames.len())));
    }
    if let Some(&bad) = frames.iter().find(|&&f| f >= gt.n_frames) {
        return Err(Error::Config(format!(
            "projection needs ground-truth frame {bad} but only {} frames exist",
            gt.n_frames
        )));
    }
    let angles = schedule.angles_deg();
    let d = geometry.detector_count;
    let mut data = vec![T::zero(); p * d];
    data.par_chunks_mut(d).enumerate().try_for_each(|(i, row)| -> Result<()> {
        let proj = FanBeamProjector::new(geometry.clone(), vec![angles[i]], gt.n, gt.pixel_size_mm)?;
        proj.apply_into(gt.frame(frames[i]), row);
        Ok(())
    })?;
    Sinogram::new(data, geometry.clone(), schedule.clone(), binning, Some(frames))
}

fn same_direction(a: f64, b: f64) -> bool {
    let diff = (normalize_deg(a) - normalize_deg(b)).abs();
    diff.min(360.0 - diff) <= ANGLE_TOLERANCE_DEG
}

/// Rows matching `wanted` in the requested order. Repeated directions take
/// successive occurrences in acquisition order.
pub fn subsample<T: Real>(s: &Sinogram<T>, wanted_deg: &[f64]) -> Result<Sinogram<T>> {
    let angles = s.angles_deg();
    let mut used = vec![false; angles.len()];
    let mut rows = Vec::with_capacity(wanted_deg.len());
    for &w in wanted_deg {
        let r = (0..angles.len())
            .find(|&r| !used[r] && same_direction(angles[r], w))
            .ok_or(Error::AngleNotFound { angle_deg: w })?;
        used[r] = true;
        rows.push(r);
    }
    s.select_rows(&rows)
}

/// Rows matching `wanted`, each taken from its `occurrence`-th appearance
/// (0-based) in the schedule. For an eight-rotation sequential scan,
/// `occurrence` selects the rotation.
pub fn subsample_occurrence<T: Real>(s: &Sinogram<T>, wanted_deg: &[f64], occurrence: usize) -> Result<Sinogram<T>> {
    let angles = s.angles_deg();
    let rows = wanted_deg
        .iter()
        .map(|&w| {
            (0..angles.len())
                .filter(|&r| same_direction(angles[r], w))
                .nth(occurrence)
                .ok_or(Error::AngleNotFound { angle_deg: w })
        })
        .collect::<Result<Vec<_>>>()?;
    s.select_rows(&rows)
}

/// Projection rows owned by frame `k`: `[k·stride, k·stride + per_frame)`.
pub fn partition_ranges(
    n_proj: usize,
    n_frames: usize,
    per_frame: usize,
    stride: usize,
) -> Result<Vec<std::ops::Range<usize>>> {
    if n_frames == 0 || per_frame == 0 || stride == 0 {
        return Err(Error::Parameter("frames, per-frame count and stride must all be >= 1".into()));
    }
    let required = (n_frames - 1) * stride + per_frame;
    if required > n_proj {
        return Err(Error::Partition { required, available: n_proj });
    }
    Ok((0..n_frames).map(|k| k * stride..k * stride + per_frame).collect())
}

/// Split into overlapping time frames; each part keeps the original frame
/// indices of its projections.
pub fn partition_frames<T: Real>(
    s: &Sinogram<T>,
    n_frames: usize,
    per_frame: usize,
    stride: usize,
) -> Result<Vec<(Sinogram<T>, usize)>> {
    partition_ranges(s.n_proj(), n_frames, per_frame, stride)?
        .into_iter()
        .enumerate()
        .map(|(k, range)| Ok((s.select_rows(&range.collect::<Vec<_>>())?, k)))
        .collect()
}
