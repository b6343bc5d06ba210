//! Per-frame comparison of a reconstruction against ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::recon::volume::ReconVolume;
use crate::sinogram::container::ImageStack;

/// Dilation radius (pixels) applied to the moving-block support.
pub const MASK_DILATION: usize = 2;

/// `20 log₁₀(max(truth) / RMSE)`; `+∞` when the images agree exactly.
pub fn psnr<T: Real>(recon: &[T], truth: &[T]) -> f64 {
    let mse = recon.iter().zip(truth).map(|(&a, &b)| (a - b).f64().powi(2)).sum::<f64>() / truth.len() as f64;
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let peak = truth.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.f64()));
    20.0 * (peak / mse.sqrt()).log10()
}

/// `‖recon − truth‖ / ‖truth‖`.
pub fn relative_l2<T: Real>(recon: &[T], truth: &[T]) -> f64 {
    let diff: f64 = recon.iter().zip(truth).map(|(&a, &b)| (a - b).f64().powi(2)).sum();
    let base: f64 = truth.iter().map(|&b| b.f64().powi(2)).sum();
    if diff == 0.0 {
        0.0
    } else {
        (diff / base).sqrt()
    }
}

/// Pixelwise median over all frames.
pub fn temporal_median<T: Real>(frames: &[T], nn: usize) -> Vec<f64> {
    let t = frames.len() / nn;
    let mut column = vec![0.0; t];
    (0..nn)
        .map(|k| {
            for (f, c) in column.iter_mut().enumerate() {
                *c = frames[f * nn + k].f64();
            }
            column.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if t % 2 == 1 {
                column[t / 2]
            } else {
                0.5 * (column[t / 2 - 1] + column[t / 2])
            }
        })
        .collect()
}

/// Square dilation of an `n × n` mask.
pub fn dilate(mask: &[bool], n: usize, radius: usize) -> Vec<bool> {
    let mut out = vec![false; n * n];
    for r in 0..n {
        for c in 0..n {
            if mask[r * n + c] {
                for rr in r.saturating_sub(radius)..(r + radius + 1).min(n) {
                    for cc in c.saturating_sub(radius)..(c + radius + 1).min(n) {
                        out[rr * n + cc] = true;
                    }
                }
            }
        }
    }
    out
}

/// Pixels where `frame` departs from the static background `median`.
pub fn block_footprint<T: Real>(frame: &[T], median: &[f64], n: usize, radius: usize) -> Vec<bool> {
    let peak = median.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
    let raw: Vec<bool> = frame.iter().zip(median).map(|(&v, &m)| (v.f64() - m).abs() > 1e-9 * peak).collect();
    dilate(&raw, n, radius)
}

/// Centroid `(row, col)` of `max(image − median, 0)` inside `mask`.
pub fn excess_centroid<T: Real>(image: &[T], median: &[f64], mask: &[bool], n: usize) -> Option<[f64; 2]> {
    let (mut w, mut r_acc, mut c_acc) = (0.0, 0.0, 0.0);
    for k in 0..n * n {
        if mask[k] {
            let e = (image[k].f64() - median[k]).max(0.0);
            w += e;
            r_acc += e * (k / n) as f64;
            c_acc += e * (k % n) as f64;
        }
    }
    (w > 0.0).then(|| [r_acc / w, c_acc / w])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub truth_frame: usize,
    pub psnr_db: f64,
    pub relative_l2: f64,
    /// Absent for static scenes or when either image has no excess over
    /// the background inside the block mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid_error_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub pixel_size_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample: Option<ResamplePlan>,
    pub frames: Vec<FrameMetrics>,
}

impl MetricsReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics serialize")
    }
}

/// Truth frame compared with each reconstructed frame.
fn truth_frames<T: Real>(recon: &ReconVolume<T>, truth_frames: usize) -> Result<Vec<usize>> {
    if let Some(times) = &recon.frame_times {
        let idx: Vec<usize> = times.iter().map(|t| t.round().max(0.0) as usize).collect();
        if let Some(bad) = idx.iter().find(|&&i| i >= truth_frames) {
            return Err(Error::Shape(format!("reconstruction refers to truth frame {bad}, truth has {truth_frames}")));
        }
        Ok(idx)
    } else if recon.n_frames == truth_frames {
        Ok((0..truth_frames).collect())
    } else if truth_frames == 1 {
        Ok(vec![0; recon.n_frames])
    } else {
        Err(Error::Shape(format!(
            "{} reconstructed frames cannot be matched to {truth_frames} truth frames without frame times",
            recon.n_frames
        )))
    }
}

/// Compare on a common grid. `truth` must already match the
/// reconstruction's size and pixel pitch (see [`resample_truth`]); all its
/// frames define the static background and the block's swept area.
pub fn evaluate<T: Real>(recon: &ReconVolume<T>, truth: &ImageStack<T>) -> Result<MetricsReport> {
    if recon.n != truth.n || (recon.pixel_size_mm - truth.pixel_size_mm).abs() > 1e-9 * truth.pixel_size_mm {
        return Err(Error::Shape(format!(
            "reconstruction is {0}×{0} at {1} mm, truth is {2}×{2} at {3} mm",
            recon.n, recon.pixel_size_mm, truth.n, truth.pixel_size_mm
        )));
    }
    let n = recon.n;
    let nn = n * n;
    let map = truth_frames(recon, truth.n_frames)?;
    let median = temporal_median(&truth.frames, nn);
    let swept = swept_support(truth, &median);
    let mask = dilate(&swept, n, MASK_DILATION);
    let dynamic = swept.iter().any(|&b| b);
    let frames = map
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let (r, g) = (recon.frame(k), truth.frame(t));
            let centroid_error_mm = if dynamic {
                match (excess_centroid(r, &median, &mask, n), excess_centroid(g, &median, &mask, n)) {
                    (Some(a), Some(b)) => Some(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() * recon.pixel_size_mm),
                    _ => None,
                }
            } else {
                None
            };
            FrameMetrics { frame: k, truth_frame: t, psnr_db: psnr(r, g), relative_l2: relative_l2(r, g), centroid_error_mm }
        })
        .collect();
    Ok(MetricsReport { n, pixel_size_mm: recon.pixel_size_mm, resample: None, frames })
}

/// Union over all truth frames of the pixels that leave the background.
fn swept_support<T: Real>(truth: &ImageStack<T>, median: &[f64]) -> Vec<bool> {
    let n = truth.n;
    (0..truth.n_frames)
        .map(|t| block_footprint(truth.frame(t), median, n, 0))
        .fold(vec![false; n * n], |acc, m| acc.iter().zip(&m).map(|(&a, &b)| a || b).collect())
}

/// Share of `‖S‖₂²` inside the dilated block mask, in two readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseConcentration {
    /// Mask = everything the block covers over the whole run.
    pub swept: f64,
    /// Mask = the block's support in each frame's own truth frame.
    pub per_frame: f64,
    /// `‖S‖₂ / ‖L‖₂`.
    pub sparse_to_low_rank: f64,
}

/// Where the sparse component's energy sits relative to the moving block.
/// Fractions are `NaN` when `S` is identically zero.
pub fn sparse_concentration<T: Real>(
    low_rank: &ReconVolume<T>,
    sparse: &ReconVolume<T>,
    truth: &ImageStack<T>,
) -> Result<SparseConcentration> {
    if sparse.n != truth.n || low_rank.n != sparse.n || low_rank.n_frames != sparse.n_frames {
        return Err(Error::Shape("L, S and truth must share one grid".into()));
    }
    let n = truth.n;
    let nn = n * n;
    let map = truth_frames(sparse, truth.n_frames)?;
    let median = temporal_median(&truth.frames, nn);
    let swept = dilate(&swept_support(truth, &median), n, MASK_DILATION);
    let (mut total, mut in_swept, mut in_frame) = (0.0, 0.0, 0.0);
    for (k, &t) in map.iter().enumerate() {
        let own = block_footprint(truth.frame(t), &median, n, MASK_DILATION);
        for (i, &v) in sparse.frame(k).iter().enumerate() {
            let e = v.f64().powi(2);
            total += e;
            if swept[i] {
                in_swept += e;
            }
            if own[i] {
                in_frame += e;
            }
        }
    }
    let low: f64 = low_rank.frames.iter().map(|&v| v.f64().powi(2)).sum();
    Ok(SparseConcentration {
        swept: in_swept / total,
        per_frame: in_frame / total,
        sparse_to_low_rank: (total / low).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub source_n: usize,
    pub source_pixel_mm: f64,
    pub target_n: usize,
    pub target_pixel_mm: f64,
    /// Integer pixel-size ratio between the grids.
    pub factor: usize,
    pub downsample: bool,
    /// Side length after centered crop or zero padding, on the finer grid.
    pub fitted_n: usize,
}

/// Centered crop or zero-pad of an `from × from` image to `to × to`.
fn center_fit<T: Real>(img: &[T], from: usize, to: usize) -> Vec<T> {
    let mut out = vec![T::zero(); to * to];
    let shift = from as i64 - to as i64;
    let off = shift / 2;
    for r in 0..to {
        let sr = r as i64 + off;
        if sr < 0 || sr >= from as i64 {
            continue;
        }
        for c in 0..to {
            let sc = c as i64 + off;
            if sc >= 0 && sc < from as i64 {
                out[r * to + c] = img[sr as usize * from + sc as usize];
            }
        }
    }
    out
}

fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let k = r.round();
    (k >= 1.0 && (r - k).abs() < 1e-6 * k).then_some(k as usize)
}

/// Bring `truth` onto an `n × n` grid of pitch `pixel_size_mm` without
/// changing physical scale: centered crop or zero padding on the finer grid
/// combined with integer block averaging (or pixel replication).
pub fn resample_truth<T: Real>(truth: &ImageStack<T>, n: usize, pixel_size_mm: f64) -> Result<(ImageStack<T>, ResamplePlan)> {
    let (src_n, src_h) = (truth.n, truth.pixel_size_mm);
    let irreconcilable = || {
        Error::Shape(format!(
            "truth grid {src_n}×{src_n} at {src_h} mm cannot be matched to {n}×{n} at {pixel_size_mm} mm by crop/pad and integer resampling"
        ))
    };
    let (factor, downsample) = if let Some(k) = integer_ratio(pixel_size_mm, src_h) {
        (k, true)
    } else if let Some(k) = integer_ratio(src_h, pixel_size_mm) {
        (k, false)
    } else {
        return Err(irreconcilable());
    };
    let fitted_n = if downsample { n * factor } else { n };
    let pre_n = if downsample { src_n } else { src_n * factor };
    if (pre_n as i64 - fitted_n as i64) % 2 != 0 {
        return Err(irreconcilable());
    }
    let nn = n * n;
    let mut frames = Vec::with_capacity(nn * truth.n_frames);
    for t in 0..truth.n_frames {
        let f = truth.frame(t);
        if downsample {
            let fitted = center_fit(f, src_n, fitted_n);
            let w = T::of(1.0 / (factor * factor) as f64);
            for r in 0..n {
                for c in 0..n {
                    let mut acc = T::zero();
                    for a in 0..factor {
                        for b in 0..factor {
                            acc += fitted[(r * factor + a) * fitted_n + c * factor + b];
                        }
                    }
                    frames.push(acc * w);
                }
            }
        } else {
            let big = src_n * factor;
            let mut up = vec![T::zero(); big * big];
            for r in 0..big {
                for c in 0..big {
                    up[r * big + c] = f[(r / factor) * src_n + c / factor];
                }
            }
            frames.extend(center_fit(&up, big, n));
        }
    }
    let plan = ResamplePlan {
        source_n: src_n,
        source_pixel_mm: src_h,
        target_n: n,
        target_pixel_mm: pixel_size_mm,
        factor,
        downsample,
        fitted_n,
    };
    log::info!(
        "truth resampled {src_n}→{n}: {} by {factor} with centered fit to {fitted_n}",
        if downsample { "block average" } else { "replicate" }
    );
    Ok((
        ImageStack {
            n,
            n_frames: truth.n_frames,
            pixel_size_mm,
            frames,
            label: truth.label.clone(),
            frame_times: truth.frame_times.clone(),
            block_centers_mm: truth.block_centers_mm.clone(),
        },
        plan,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(n: usize, frames: Vec<f64>, h: f64) -> ImageStack<f64> {
        ImageStack { n, n_frames: frames.len() / (n * n), pixel_size_mm: h, frames, label: None, frame_times: None, block_centers_mm: None }
    }

    #[test]
    fn psnr_definition() {
        let truth: Vec<f64> = (0..100).map(|k| (k % 7) as f64 / 6.0).collect();
        assert_eq!(psnr(&truth, &truth), f64::INFINITY);
        let noisy: Vec<f64> = truth.iter().map(|v| v + 0.1).collect();
        assert!((psnr(&noisy, &truth) - 20.0).abs() < 1e-9);
        assert!((relative_l2(&truth, &truth)).abs() == 0.0);
    }

    #[test]
    fn centroid_shift_of_one_pixel() {
        let n = 16;
        let block = |r0: usize, c0: usize| {
            let mut f = vec![0.0; n * n];
            for r in r0..r0 + 3 {
                for c in c0..c0 + 3 {
                    f[r * n + c] = 1.0;
                }
            }
            f
        };
        let mut frames = Vec::new();
        for c0 in [2, 5, 8] {
            frames.extend(block(6, c0));
        }
        let truth = stack(n, frames, 0.25);
        let mut shifted = Vec::new();
        for c0 in [3, 6, 9] {
            shifted.extend(block(6, c0));
        }
        let recon = ReconVolume::new(n, 3, 0.25, shifted).unwrap();
        let rep = evaluate(&recon, &truth).unwrap();
        for f in &rep.frames {
            assert!((f.centroid_error_mm.unwrap() - 0.25).abs() < 1e-12);
        }
        let exact = ReconVolume::new(n, 3, 0.25, truth.frames.clone()).unwrap();
        let rep = evaluate(&exact, &truth).unwrap();
        assert!(rep.frames.iter().all(|f| f.psnr_db == f64::INFINITY && f.centroid_error_mm == Some(0.0)));
    }

    #[test]
    fn static_truth_has_no_centroid() {
        let truth = stack(8, vec![1.0; 64], 1.0);
        let recon = ReconVolume::new(8, 2, 1.0, vec![0.5; 128]).unwrap();
        let rep = evaluate(&recon, &truth).unwrap();
        assert_eq!(rep.frames.len(), 2);
        assert!(rep.frames.iter().all(|f| f.centroid_error_mm.is_none()));
        assert!(evaluate(&ReconVolume::new(4, 1, 1.0, vec![0.0; 16]).unwrap(), &truth).is_err());
    }

    #[test]
    fn resampling_keeps_physical_scale() {
        // disk of radius 10 mm on a 560 grid at 0.1 mm, target 280 at 0.2 mm
        let (n, h) = (560, 0.1);
        let disk: Vec<f64> = (0..n * n)
            .map(|k| {
                let x = (k % n) as f64 - (n as f64 - 1.0) / 2.0;
                let y = (k / n) as f64 - (n as f64 - 1.0) / 2.0;
                if (x * x + y * y).sqrt() * h < 10.0 { 1.0 } else { 0.0 }
            })
            .collect();
        let mass: f64 = disk.iter().sum::<f64>() * h * h;
        let (out, plan) = resample_truth(&stack(n, disk, h), 280, 0.2).unwrap();
        assert_eq!((plan.factor, plan.downsample, plan.fitted_n), (2, true, 560));
        let out_mass: f64 = out.frames.iter().sum::<f64>() * 0.04;
        assert!((out_mass - mass).abs() < 1e-9 * mass);
        // upsampling and padding
        let (up, plan) = resample_truth(&stack(4, vec![1.0; 16], 0.2), 10, 0.1).unwrap();
        assert_eq!((plan.factor, plan.downsample), (2, false));
        assert_eq!(up.frames.iter().sum::<f64>(), 64.0);
        assert_eq!(up.frames[0], 0.0);
        assert!(resample_truth(&stack(4, vec![1.0; 16], 0.2), 10, 0.3).is_err());
    }
}
