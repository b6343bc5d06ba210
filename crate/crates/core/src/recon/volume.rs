use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::sinogram::container::ImageStack;

/// Reconstructed animation, frame-major `T × N × N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconVolume<T> {
    pub n: usize,
    pub n_frames: usize,
    pub pixel_size_mm: f64,
    pub frames: Vec<T>,
    /// Sinogram rows used by each frame.
    pub frame_rows: Option<Vec<Range<usize>>>,
    /// Mean ground-truth time index seen by each frame.
    pub frame_times: Option<Vec<f64>>,
}

impl<T: Real> ReconVolume<T> {
    pub fn new(n: usize, n_frames: usize, pixel_size_mm: f64, frames: Vec<T>) -> Result<Self> {
        if frames.len() != n * n * n_frames {
            return Err(Error::Shape(format!(
                "volume has {} values, expected {n_frames} × {n} × {n}",
                frames.len()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in reconstruction".into()));
        }
        Ok(Self { n, n_frames, pixel_size_mm, frames, frame_rows: None, frame_times: None })
    }

    pub fn frame(&self, t: usize) -> &[T] {
        &self.frames[t * self.n * self.n..(t + 1) * self.n * self.n]
    }

    pub fn to_stack(&self, label: &str) -> ImageStack<T> {
        ImageStack {
            n: self.n,
            n_frames: self.n_frames,
            pixel_size_mm: self.pixel_size_mm,
            frames: self.frames.clone(),
            label: Some(label.into()),
            frame_times: self.frame_times.clone(),
            block_centers_mm: None,
        }
    }

    pub fn from_stack(s: &ImageStack<T>) -> Result<Self> {
        let mut v = Self::new(s.n, s.n_frames, s.pixel_size_mm, s.frames.clone())?;
        v.frame_times = s.frame_times.clone();
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    RelChange,
    Diverged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub algorithm: String,
    pub iterations: usize,
    pub objectives: Vec<f64>,
    pub step: f64,
    pub operator_norm: f64,
    pub stop_reason: StopReason,
    /// Regularization weight in force at the last iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Excluded from equality and from the serialized form so reruns
    /// compare and write identically.
    #[serde(skip_serializing, default)]
    pub wall_time_s: f64,
}

impl PartialEq for SolverReport {
    fn eq(&self, o: &Self) -> bool {
        self.algorithm == o.algorithm
            && self.iterations == o.iterations
            && self.objectives.len() == o.objectives.len()
            && self.objectives.iter().zip(&o.objectives).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.step.to_bits() == o.step.to_bits()
            && self.operator_norm.to_bits() == o.operator_norm.to_bits()
            && self.stop_reason == o.stop_reason
            && self.alpha.map(f64::to_bits) == o.alpha.map(f64::to_bits)
    }
}

impl SolverReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}
