//! Filtered backprojection for the flat-detector fan beam.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::phantom::pixel_center;
use crate::sinogram::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbpFilter {
    #[default]
    RamLak,
    /// Ram-Lak multiplied by a Hamming window in frequency.
    Hamming,
}

/// Frequency response of the band-limited ramp for samples `spacing` apart,
/// already divided by the FFT length.
fn ramp_response(len: usize, spacing: f64, filter: FbpFilter) -> Vec<f64> {
    let mut kernel: Vec<Complex<f64>> = (0..len)
        .map(|k| {
            let m = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
            let v = if m == 0.0 {
                1.0 / (4.0 * spacing * spacing)
            } else if (m as i64) % 2 == 0 {
                0.0
            } else {
                -1.0 / (m * m * PI * PI * spacing * spacing)
            };
            Complex::new(v, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    kernel
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let f = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 } / len as f64;
            let window = match filter {
                FbpFilter::RamLak => 1.0,
                FbpFilter::Hamming => 0.54 + 0.46 * (2.0 * PI * f).cos(),
            };
            c.re * window * spacing / len as f64
        })
        .collect()
}

/// Weighted, ramp-filtered detector rows in origin-plane coordinates.
fn filtered_rows<T: Real>(s: &Sinogram<T>, filter: FbpFilter) -> Vec<Vec<f64>> {
    let g = &s.geometry;
    let d = s.n_det();
    let sod = g.sod_mm;
    let mag = g.magnification();
    let weights: Vec<f64> = (0..d)
        .map(|j| {
            let u = g.detector_offset(j) / mag;
            sod / (sod * sod + u * u).sqrt()
        })
        .collect();
    let len = (2 * d).next_power_of_two();
    let response = ramp_response(len, g.pitch_at_origin(), filter);
    let mut planner = FftPlanner::<f64>::new();
    let (fwd, inv) = (planner.plan_fft_forward(len), planner.plan_fft_inverse(len));
    (0..s.n_proj())
        .into_par_iter()
        .map(|i| {
            let mut buf = vec![Complex::new(0.0, 0.0); len];
            for (j, (&v, &w)) in s.row(i).iter().zip(&weights).enumerate() {
                buf[j].re = v.f64() * w;
            }
            fwd.process(&mut buf);
            for (b, &h) in buf.iter_mut().zip(&response) {
                *b *= h;
            }
            inv.process(&mut buf);
            buf[..d].iter().map(|c| c.re).collect()
        })
        .collect()
}

/// Reconstruct one `n × n` image (row 0 at the top) from a full-circle scan.
/// Pixels outside the geometry's field of view are set to zero.
///
/// Each projection gets the angular weight `2π / P`, so partial or
/// repeated coverage is treated as if evenly spread over the circle.
pub fn fbp<T: Real>(s: &Sinogram<T>, n: usize, pixel_size_mm: f64, filter: FbpFilter) -> Result<Vec<T>> {
    if n < 8 {
        return Err(Error::Parameter(format!("image size must be >= 8, got {n}")));
    }
    if !(pixel_size_mm > 0.0) {
        return Err(Error::Parameter(format!("pixel size must be > 0, got {pixel_size_mm}")));
    }
    s.validate()?;
    let g = &s.geometry;
    let d = s.n_det();
    let p = s.n_proj();
    let sod = g.sod_mm;
    let du = g.pitch_at_origin();
    let center = (d as f64 - 1.0) / 2.0;
    let rows = filtered_rows(s, filter);
    let trig: Vec<(f64, f64)> = s.angles_deg().iter().map(|&a| g.source_angle_rad(a).sin_cos()).collect();
    let scale = 0.5 * 2.0 * PI / p as f64;
    let fov = g.field_of_view_radius();
    let mut image = vec![T::zero(); n * n];
    image.par_chunks_mut(n).enumerate().for_each(|(r, out)| {
        for (c, px) in out.iter_mut().enumerate() {
            let [x, y] = pixel_center(n, pixel_size_mm, r, c);
            if x * x + y * y > fov * fov {
                continue;
            }
            let mut acc = 0.0;
            for (row, &(sb, cb)) in rows.iter().zip(&trig) {
                let depth = sod - (x * cb + y * sb);
                let lateral = -x * sb + y * cb;
                let u = sod * lateral / depth;
                let k = u / du + center;
                let k0 = k.floor();
                if k0 < 0.0 || k0 as usize + 1 >= d {
                    continue;
                }
                let w = k - k0;
                let k0 = k0 as usize;
                let q = (1.0 - w) * row[k0] + w * row[k0 + 1];
                let big_u = depth / sod;
                acc += q / (big_u * big_u);
            }
            *px = T::of(acc * scale);
        }
    });
    Ok(image)
}
