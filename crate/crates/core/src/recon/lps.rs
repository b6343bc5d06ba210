//! Low-rank plus sparse decomposition
//! `min ½‖A(L + S) − m‖² + μ_L‖L‖_* + μ_S‖W̃ S‖₁`, with `W̃` a 2-D wavelet
//! applied frame by frame and `L` viewed as an `N² × T` matrix.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{add, sub, Real};
use crate::projector::operator_norm_estimate;
use crate::recon::fbp::{fbp, FbpFilter};
use crate::recon::pdfp::StackWavelet;
use crate::recon::volume::{ReconVolume, SolverReport, StopReason};
use crate::recon::{half_sq_norm, l1, TemporalProblem};
use crate::sinogram::Sinogram;
use crate::transforms::threshold::shrink;
use crate::transforms::{svt, WaveletFamily, WaveletSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpsConfig {
    pub wavelet: WaveletSpec,
    pub mu_l: f64,
    pub mu_s: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub power_iters: usize,
    pub norm_margin: f64,
    pub seed: u64,
}

impl LpsConfig {
    pub fn new(wavelet: WaveletSpec, mu_l: f64, mu_s: f64) -> Self {
        Self { wavelet, mu_l, mu_s, max_iters: 120, tol: 1e-5, power_iters: 30, norm_margin: 1.01, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.wavelet.validate()?;
        if self.wavelet.dims != 2 {
            return Err(Error::Config(format!("L+S needs a 2-D wavelet, got dims = {}", self.wavelet.dims)));
        }
        if !(self.mu_l >= 0.0 && self.mu_s >= 0.0) {
            return Err(Error::Config("mu_l and mu_s must be >= 0".into()));
        }
        if self.max_iters == 0 || self.power_iters == 0 || !(self.tol >= 0.0) || !(self.norm_margin >= 1.0) {
            return Err(Error::Config("need max_iters, power_iters >= 1, tol >= 0, norm_margin >= 1".into()));
        }
        Ok(())
    }
}

/// Three-level 2-D Daubechies-4 with `μ_L = 100`, `μ_S = 8`.
impl Default for LpsConfig {
    fn default() -> Self {
        Self::new(WaveletSpec { family: WaveletFamily::Daubechies4, levels: 3, dims: 2 }, 100.0, 8.0)
    }
}

#[derive(Debug, Clone)]
pub struct LpsResult<T> {
    pub low_rank: ReconVolume<T>,
    pub sparse: ReconVolume<T>,
    pub report: SolverReport,
    /// Rank of `L` after the last singular value thresholding.
    pub rank: usize,
}

impl<T: Real> LpsResult<T> {
    pub fn combined(&self) -> ReconVolume<T> {
        let mut v = self.low_rank.clone();
        for (a, &b) in v.frames.iter_mut().zip(&self.sparse.frames) {
            *a += b;
        }
        v
    }
}

/// Rank-1 starting point for [`lps_from`]: the FBP of the whole scan,
/// repeated in every frame.
pub fn fbp_warm_start<T: Real>(full_scan: &Sinogram<T>, n: usize, pixel_size_mm: f64, n_frames: usize) -> Result<Vec<T>> {
    let image = fbp(full_scan, n, pixel_size_mm, FbpFilter::RamLak)?;
    Ok((0..n_frames).flat_map(|_| image.iter().copied()).collect())
}

/// Proximal gradient on `(L, S)` from zero with step `1/L²`:
///
/// ```text
/// M  = (L + S) − Aᵀ(A(L + S) − m) / L²
/// L' = svt(M − S, μ_L / L²)
/// S' = W̃⁻¹ shrink(W̃(M − L'), μ_S / L²)
/// ```
///
/// Stops when the joint relative change of `(L, S)` drops below `tol`.
pub fn lps<T: Real>(problem: &TemporalProblem<T>, cfg: &LpsConfig) -> Result<LpsResult<T>> {
    lps_from(problem, cfg, None)
}

/// As [`lps`], with `L` started from `initial_low_rank` instead of zero.
pub fn lps_from<T: Real>(problem: &TemporalProblem<T>, cfg: &LpsConfig, initial_low_rank: Option<Vec<T>>) -> Result<LpsResult<T>> {
    cfg.validate()?;
    if problem.n_frames < 2 {
        return Err(Error::Config(format!("L+S needs at least 2 frames, got {}", problem.n_frames)));
    }
    let start = Instant::now();
    let op = problem.op.as_ref();
    let w = StackWavelet::<T>::new(cfg.wavelet, problem.n, problem.n_frames)?;
    let norm = operator_norm_estimate(op, cfg.power_iters, cfg.seed)?.f64() * cfg.norm_margin;
    if norm == 0.0 {
        return Err(Error::Parameter("operator norm estimate is zero".into()));
    }
    let step = 1.0 / (norm * norm);
    let step_t = T::of(step);
    let (lam_l, lam_s) = (T::of(cfg.mu_l * step), T::of(cfg.mu_s * step));
    let size = op.cols();
    let rows = problem.n * problem.n;

    let mut low = match initial_low_rank {
        Some(l0) if l0.len() == size => l0,
        Some(l0) => return Err(Error::Shape(format!("initial L has {} values, expected {size}", l0.len()))),
        None => vec![T::zero(); size],
    };
    let mut sparse = vec![T::zero(); size];
    let mut resid: Vec<T> = problem.data.iter().map(|&m| -m).collect();
    let initial = half_sq_norm(&resid);
    if low.iter().any(|&v| v != T::zero()) {
        op.apply_into(&low, &mut resid);
        for (r, &d) in resid.iter_mut().zip(&problem.data) {
            *r -= d;
        }
    }
    let mut grad = vec![T::zero(); size];
    let mut objectives = Vec::new();
    let mut stop = StopReason::MaxIters;
    let mut rank = 0;

    for it in 0..cfg.max_iters {
        op.adjoint_into(&resid, &mut grad);
        let m: Vec<T> = (0..size).map(|k| low[k] + sparse[k] - step_t * grad[k]).collect();

        let target = sub(&m, &sparse);
        let out = svt(&target, rows, problem.n_frames, lam_l)?;
        let nuclear: f64 = out.singular_values.iter().map(|&s| (s - lam_l).max(T::zero()).f64()).sum();
        rank = out.rank;
        let next_low = out.matrix;

        let mut coef = sub(&m, &next_low);
        w.forward(&mut coef);
        coef.iter_mut().for_each(|c| *c = shrink(*c, lam_s));
        let sparse_l1 = l1(&coef);
        w.inverse(&mut coef);
        let next_sparse = coef;

        let sum = add(&next_low, &next_sparse);
        op.apply_into(&sum, &mut resid);
        for (r, &d) in resid.iter_mut().zip(&problem.data) {
            *r -= d;
        }
        let obj = half_sq_norm(&resid) + cfg.mu_l * nuclear + cfg.mu_s * sparse_l1;
        objectives.push(obj);
        if !obj.is_finite() || (initial > 0.0 && obj > 10.0 * initial) {
            stop = StopReason::Diverged;
            log::warn!("l+s diverged at iteration {}", it + 1);
            break;
        }
        let diff: f64 = (0..size)
            .map(|k| (next_low[k] - low[k]).f64().powi(2) + (next_sparse[k] - sparse[k]).f64().powi(2))
            .sum();
        let base: f64 = (0..size).map(|k| low[k].f64().powi(2) + sparse[k].f64().powi(2)).sum();
        low = next_low;
        sparse = next_sparse;
        let change = if diff == 0.0 {
            0.0
        } else if base == 0.0 {
            f64::INFINITY
        } else {
            (diff / base).sqrt()
        };
        log::debug!("l+s iter {} objective {obj:.6e} change {change:.3e} rank {rank}", it + 1);
        if change < cfg.tol {
            stop = StopReason::RelChange;
            break;
        }
    }

    let report = SolverReport {
        algorithm: "lps".into(),
        iterations: objectives.len(),
        objectives,
        step,
        operator_norm: norm,
        stop_reason: stop,
        alpha: None,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(LpsResult { low_rank: problem.volume(low)?, sparse: problem.volume(sparse)?, report, rank })
}
