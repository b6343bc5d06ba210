//! Reconstruction: fan-beam FBP, the wavelet-sparse PDFP solver, the
//! low-rank plus sparse solver and evaluation metrics.

pub mod fbp;
pub mod lps;
pub mod metrics;
pub mod pdfp;
pub mod volume;

use std::ops::Range;

pub use fbp::{fbp, FbpFilter};
pub use lps::{fbp_warm_start, lps, lps_from, LpsConfig, LpsResult};
pub use metrics::{evaluate, psnr, relative_l2, resample_truth, sparse_concentration, FrameMetrics, MetricsReport, ResamplePlan, SparseConcentration};
pub use pdfp::{pdfp_wavelet, tune_alpha_sparsity, AlphaMode, PdfpConfig};
pub use volume::{ReconVolume, SolverReport, StopReason};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::projector::{make_temporal_operator, LinearOperator};
use crate::sinogram::Sinogram;

/// A stacked inverse problem `A x = m` over `n_frames` images of `n × n`.
pub struct TemporalProblem<T: Real> {
    pub op: Box<dyn LinearOperator<T>>,
    pub data: Vec<T>,
    pub n: usize,
    pub n_frames: usize,
    pub pixel_size_mm: f64,
    pub frame_rows: Option<Vec<Range<usize>>>,
    pub frame_times: Option<Vec<f64>>,
}

impl<T: Real> TemporalProblem<T> {
    pub fn new(op: Box<dyn LinearOperator<T>>, data: Vec<T>, n: usize, n_frames: usize, pixel_size_mm: f64) -> Result<Self> {
        if op.cols() != n * n * n_frames {
            return Err(Error::Shape(format!(
                "operator has {} columns, expected {n_frames} × {n} × {n}",
                op.cols()
            )));
        }
        if op.rows() != data.len() {
            return Err(Error::Shape(format!("operator has {} rows but data has {}", op.rows(), data.len())));
        }
        Ok(Self { op, data, n, n_frames, pixel_size_mm, frame_rows: None, frame_times: None })
    }

    /// One fan-beam projector per frame sinogram, all on the same grid.
    pub fn from_frames(frames: &[Sinogram<T>], n: usize, pixel_size_mm: f64) -> Result<Self> {
        Self::from_frames_with(frames, n, pixel_size_mm, |s| s.projector(n, pixel_size_mm))
    }

    /// As [`from_frames`](Self::from_frames) with a caller-supplied
    /// projector factory.
    pub fn from_frames_with<F>(frames: &[Sinogram<T>], n: usize, pixel_size_mm: f64, factory: F) -> Result<Self>
    where
        F: Fn(&Sinogram<T>) -> Result<crate::projector::FanBeamProjector>,
    {
        let first = frames.first().ok_or_else(|| Error::Config("no frames to reconstruct".into()))?;
        if frames.iter().any(|f| f.geometry != first.geometry) {
            return Err(Error::Config("all frames must share one geometry".into()));
        }
        let projectors = frames.iter().map(&factory).collect::<Result<Vec<_>>>()?;
        let op = make_temporal_operator::<T>(projectors)?;
        let data: Vec<T> = frames.iter().flat_map(|f| f.data.iter().copied()).collect();
        let mut p = Self::new(Box::new(op), data, n, frames.len(), pixel_size_mm)?;
        p.frame_times = Some(
            frames
                .iter()
                .map(|f| (0..f.n_proj()).map(|i| f.frame_of(i) as f64).sum::<f64>() / f.n_proj() as f64)
                .collect(),
        );
        Ok(p)
    }

    pub(crate) fn volume(&self, frames: Vec<T>) -> Result<ReconVolume<T>> {
        let mut v = ReconVolume::new(self.n, self.n_frames, self.pixel_size_mm, frames)?;
        v.frame_rows = self.frame_rows.clone();
        v.frame_times = self.frame_times.clone();
        Ok(v)
    }
}

/// Relative change `‖a − b‖ / ‖b‖`, zero when nothing moved.
pub(crate) fn rel_change<T: Real>(new: &[T], old: &[T]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(&a, &b)| (a - b).f64().powi(2)).sum();
    if diff == 0.0 {
        return 0.0;
    }
    let base: f64 = old.iter().map(|&b| b.f64().powi(2)).sum();
    if base == 0.0 {
        f64::INFINITY
    } else {
        (diff / base).sqrt()
    }
}

pub(crate) fn half_sq_norm<T: Real>(r: &[T]) -> f64 {
    0.5 * r.iter().map(|&v| v.f64().powi(2)).sum::<f64>()
}

pub(crate) fn l1<T: Real>(c: &[T]) -> f64 {
    c.iter().map(|&v| v.f64().abs()).sum()
}
