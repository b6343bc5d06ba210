//! Primal-dual fixed point iteration for
//! `min_f ½‖A f − m‖² + α‖W f‖₁` subject to `f ≥ 0`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::projector::operator_norm_estimate;
use crate::recon::volume::{ReconVolume, SolverReport, StopReason};
use crate::recon::{half_sq_norm, l1, rel_change, TemporalProblem};
use crate::transforms::threshold::shrink;
use crate::transforms::{Wavelet, WaveletFamily, WaveletSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum AlphaMode {
    Fixed { alpha: f64 },
    /// Re-pick α every iteration so the dual shrinkage keeps this fraction
    /// of coefficients.
    SparsityTarget { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdfpConfig {
    pub wavelet: WaveletSpec,
    pub alpha: AlphaMode,
    pub max_iters: usize,
    pub tol: f64,
    /// `γ = step_scale / L²`.
    pub step_scale: f64,
    pub lambda_pd: f64,
    pub nonnegative: bool,
    pub power_iters: usize,
    /// Multiplies the power-method estimate of `L`, which approaches the
    /// true norm from below.
    pub norm_margin: f64,
    pub seed: u64,
}

impl PdfpConfig {
    pub fn new(wavelet: WaveletSpec, alpha: AlphaMode) -> Self {
        Self {
            wavelet,
            alpha,
            max_iters: 500,
            tol: 1e-5,
            step_scale: 1.99,
            lambda_pd: 1.0,
            nonnegative: true,
            power_iters: 30,
            norm_margin: 1.01,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.wavelet.validate()?;
        match self.alpha {
            AlphaMode::Fixed { alpha } if !(alpha >= 0.0) => {
                return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")))
            }
            AlphaMode::SparsityTarget { fraction } if !(fraction > 0.0 && fraction < 1.0) => {
                return Err(Error::Config(format!("sparsity fraction must lie in (0, 1), got {fraction}")))
            }
            _ => {}
        }
        if self.max_iters == 0 || self.power_iters == 0 {
            return Err(Error::Config("max_iters and power_iters must be >= 1".into()));
        }
        if !(self.tol >= 0.0) || !(self.step_scale > 0.0 && self.step_scale < 2.0) {
            return Err(Error::Config("tol must be >= 0 and step_scale in (0, 2)".into()));
        }
        if !(self.lambda_pd > 0.0 && self.lambda_pd <= 1.0) || !(self.norm_margin >= 1.0) {
            return Err(Error::Config("lambda_pd must be in (0, 1] and norm_margin >= 1".into()));
        }
        Ok(())
    }
}

/// Two-level 3-D Haar, keeping 10% of the coefficients.
impl Default for PdfpConfig {
    fn default() -> Self {
        Self::new(
            WaveletSpec { family: WaveletFamily::Haar, levels: 2, dims: 3 },
            AlphaMode::SparsityTarget { fraction: 0.1 },
        )
    }
}

/// Threshold leaving exactly `⌈fraction · len⌉` coefficients nonzero after
/// soft thresholding: the `(1 − fraction)`-quantile of `|c|`.
pub fn tune_alpha_sparsity<T: Real>(coefficients: &[T], fraction: f64) -> Result<T> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!("sparsity fraction must lie in (0, 1), got {fraction}")));
    }
    let mut mags: Vec<T> = coefficients.iter().map(|v| v.abs()).collect();
    let len = mags.len();
    let keep = (fraction * len as f64).ceil() as usize;
    if keep >= len {
        return Ok(T::zero());
    }
    let (_, nth, _) = mags.select_nth_unstable_by(len - keep - 1, |a, b| a.partial_cmp(b).unwrap());
    Ok(*nth)
}

/// Analysis/synthesis for the stacked animation: a 3-D transform over
/// `[T, N, N]` or a 2-D transform on each frame.
pub(crate) struct StackWavelet<T: Real> {
    w: Wavelet<T>,
    n: usize,
    n_frames: usize,
}

impl<T: Real> StackWavelet<T> {
    pub(crate) fn new(spec: WaveletSpec, n: usize, n_frames: usize) -> Result<Self> {
        match spec.dims {
            3 => spec.check_shape(&[n_frames, n, n])?,
            2 => spec.check_shape(&[n, n])?,
            d => return Err(Error::Config(format!("stack wavelet needs dims 2 or 3, got {d}"))),
        }
        Ok(Self { w: Wavelet::new(spec)?, n, n_frames })
    }

    pub(crate) fn forward(&self, x: &mut [T]) {
        self.apply(x, false)
    }

    pub(crate) fn inverse(&self, x: &mut [T]) {
        self.apply(x, true)
    }

    fn apply(&self, x: &mut [T], inverse: bool) {
        use rayon::prelude::*;
        let run = |data: &mut [T], shape: &[usize]| {
            if inverse {
                self.w.inverse_in_place(data, shape)
            } else {
                self.w.forward_in_place(data, shape)
            }
            .expect("shape checked at construction")
        };
        if self.w.spec().dims == 3 {
            run(x, &[self.n_frames, self.n, self.n]);
        } else {
            x.par_chunks_mut(self.n * self.n).for_each(|f| run(f, &[self.n, self.n]));
        }
    }
}

fn project<T: Real>(x: &mut [T], nonnegative: bool) {
    if nonnegative {
        x.iter_mut().for_each(|v| *v = v.max(T::zero()));
    }
}

/// Runs PDFP from `f = 0, v = 0`.
///
/// With `γ = step_scale / L²` and `λ = lambda_pd`, each iteration is
///
/// ```text
/// g     = f − γ Aᵀ(A f − m)
/// y     = P₊(g − λ Wᵀ v)
/// v'    = (W y + v) − shrink(W y + v, γα/λ)
/// f'    = P₊(g − λ Wᵀ v')
/// ```
///
/// The objective is recorded after every iteration. A run stops early when
/// `‖f' − f‖/‖f‖ < tol`, or when the objective exceeds ten times its value
/// at `f = 0`, in which case the last finite iterate is returned.
pub fn pdfp_wavelet<T: Real>(problem: &TemporalProblem<T>, cfg: &PdfpConfig) -> Result<(ReconVolume<T>, SolverReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let op = problem.op.as_ref();
    let w = StackWavelet::<T>::new(cfg.wavelet, problem.n, problem.n_frames)?;
    let norm = operator_norm_estimate(op, cfg.power_iters, cfg.seed)?.f64() * cfg.norm_margin;
    if norm == 0.0 {
        return Err(Error::Parameter("operator norm estimate is zero".into()));
    }
    let gamma = cfg.step_scale / (norm * norm);
    let lam = cfg.lambda_pd;
    let (g_t, lam_t) = (T::of(gamma), T::of(lam));
    let size = op.cols();

    let mut f = vec![T::zero(); size];
    let mut v = vec![T::zero(); size];
    let mut resid: Vec<T> = problem.data.iter().map(|&m| -m).collect();
    let initial = half_sq_norm(&resid);
    let mut grad = vec![T::zero(); size];
    let mut base = vec![T::zero(); size];
    let mut tmp = vec![T::zero(); size];
    let mut objectives = Vec::new();
    let mut stop = StopReason::MaxIters;
    let mut alpha = match cfg.alpha {
        AlphaMode::Fixed { alpha } => alpha,
        AlphaMode::SparsityTarget { .. } => 0.0,
    };

    for it in 0..cfg.max_iters {
        op.adjoint_into(&resid, &mut grad);
        for ((b, &fi), &gi) in base.iter_mut().zip(&f).zip(&grad) {
            *b = fi - g_t * gi;
        }
        // y = P₊(base − λ Wᵀ v)
        tmp.copy_from_slice(&v);
        w.inverse(&mut tmp);
        let mut y: Vec<T> = base.iter().zip(&tmp).map(|(&b, &t)| b - lam_t * t).collect();
        project(&mut y, cfg.nonnegative);
        // z = W y + v, v' = z − shrink(z, γα/λ)
        w.forward(&mut y);
        for (yi, &vi) in y.iter_mut().zip(&v) {
            *yi += vi;
        }
        let thresh = match cfg.alpha {
            AlphaMode::Fixed { alpha } => T::of(gamma * alpha / lam),
            AlphaMode::SparsityTarget { fraction } => {
                let t = tune_alpha_sparsity(&y, fraction)?;
                alpha = t.f64() * lam / gamma;
                t
            }
        };
        for (vi, &z) in v.iter_mut().zip(&y) {
            *vi = z - shrink(z, thresh);
        }
        // f' = P₊(base − λ Wᵀ v')
        tmp.copy_from_slice(&v);
        w.inverse(&mut tmp);
        let mut next: Vec<T> = base.iter().zip(&tmp).map(|(&b, &t)| b - lam_t * t).collect();
        project(&mut next, cfg.nonnegative);

        op.apply_into(&next, &mut resid);
        for (r, &m) in resid.iter_mut().zip(&problem.data) {
            *r -= m;
        }
        tmp.copy_from_slice(&next);
        w.forward(&mut tmp);
        let obj = half_sq_norm(&resid) + alpha * l1(&tmp);
        objectives.push(obj);
        if !obj.is_finite() || (initial > 0.0 && obj > 10.0 * initial) {
            stop = StopReason::Diverged;
            log::warn!("pdfp diverged at iteration {}", it + 1);
            break;
        }
        let change = rel_change(&next, &f);
        f = next;
        log::debug!("pdfp iter {} objective {obj:.6e} change {change:.3e}", it + 1);
        if change < cfg.tol {
            stop = StopReason::RelChange;
            break;
        }
    }

    let report = SolverReport {
        algorithm: "pdfp".into(),
        iterations: objectives.len(),
        objectives,
        step: gamma,
        operator_norm: norm,
        stop_reason: stop,
        alpha: Some(alpha),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((problem.volume(f)?, report))
}
