//! Separable multi-level orthogonal wavelet transforms with periodic
//! boundary handling, in one to three dimensions.
//!
//! Coefficients are kept in place (Mallat layout): after level `l` the
//! approximation occupies the leading corner of extent `shape / 2^l` and the
//! detail subbands fill the remainder of the level-`l-1` box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    Haar,
    /// Four taps, two vanishing moments.
    Daubechies4,
    Daubechies6,
    Daubechies8,
}

impl WaveletFamily {
    /// Low-pass analysis filter, unit norm.
    pub fn lowpass(self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletFamily::Daubechies4 => {
                let s3 = 3f64.sqrt();
                let k = 4.0 * std::f64::consts::SQRT_2;
                vec![(1.0 + s3) / k, (3.0 + s3) / k, (3.0 - s3) / k, (1.0 - s3) / k]
            }
            WaveletFamily::Daubechies6 => vec![
                0.332_670_552_950_082_6,
                0.806_891_509_311_092_6,
                0.459_877_502_118_491_6,
                -0.135_011_020_010_254_6,
                -0.085_441_273_882_026_66,
                0.035_226_291_885_709_54,
            ],
            WaveletFamily::Daubechies8 => vec![
                0.230_377_813_308_896_5,
                0.714_846_570_552_915_6,
                0.630_880_767_929_858_9,
                -0.027_983_769_416_859_85,
                -0.187_034_811_719_093_1,
                0.030_841_381_835_560_76,
                0.032_883_011_666_885_2,
                -0.010_597_401_785_069_03,
            ],
        }
    }

    /// High-pass analysis filter `g[k] = (-1)^k h[K-1-k]`.
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let k = h.len();
        (0..k).map(|i| if i % 2 == 0 { h[k - 1 - i] } else { -h[k - 1 - i] }).collect()
    }
}

/// Checks unit norm, shift-orthogonality and low/high orthogonality.
fn check_filters(h: &[f64], g: &[f64]) -> Result<()> {
    let tol = 1e-14;
    let corr = |a: &[f64], b: &[f64], shift: usize| -> f64 {
        (0..a.len()).filter(|&k| k + shift < b.len()).map(|k| a[k] * b[k + shift]).sum()
    };
    if (corr(h, h, 0) - 1.0).abs() > tol || corr(h, g, 0).abs() > tol {
        return Err(Error::Config("wavelet filters are not orthonormal".into()));
    }
    for m in (2..h.len()).step_by(2) {
        if corr(h, h, m).abs() > tol || corr(h, g, m).abs() > tol || corr(g, h, m).abs() > tol {
            return Err(Error::Config("wavelet filters are not shift-orthogonal".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub levels: usize,
    pub dims: usize,
}

impl WaveletSpec {
    pub fn new(family: WaveletFamily, levels: usize, dims: usize) -> Result<Self> {
        let s = Self { family, levels, dims };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || !(1..=3).contains(&self.dims) {
            return Err(Error::Config(format!(
                "wavelet needs levels >= 1 and dims in 1..=3, got levels={} dims={}",
                self.levels, self.dims
            )));
        }
        check_filters(&self.family.lowpass(), &self.family.highpass())
    }

    /// Checks that `shape` can be decomposed `levels` times.
    pub fn check_shape(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != self.dims {
            return Err(Error::Shape(format!("{}-D wavelet applied to {}-D array", self.dims, shape.len())));
        }
        let div = 1usize << self.levels;
        for (axis, &len) in shape.iter().enumerate() {
            if len == 0 || len % div != 0 {
                return Err(Error::Shape(format!(
                    "axis {axis} has length {len}; {} levels require a multiple of {div}",
                    self.levels
                )));
            }
        }
        Ok(())
    }
}

/// One detail subband (or the final approximation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subband {
    /// Decomposition level, starting at 1.
    pub level: usize,
    /// Per-axis flag: `true` where the band holds high-pass output.
    pub highpass: Vec<bool>,
    pub start: Vec<usize>,
    pub extent: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubbandLayout {
    pub shape: Vec<usize>,
    pub levels: usize,
    pub family: WaveletFamily,
}

impl SubbandLayout {
    /// Box extents after each level: entry `l` is `shape / 2^l`.
    pub fn level_extents(&self) -> Vec<Vec<usize>> {
        (0..=self.levels).map(|l| self.shape.iter().map(|&s| s >> l).collect()).collect()
    }

    /// Detail subbands of every level plus the final approximation (last).
    pub fn subbands(&self) -> Vec<Subband> {
        let dims = self.shape.len();
        let ext = self.level_extents();
        let mut out = Vec::new();
        for l in 1..=self.levels {
            let half = &ext[l];
            for mask in 1..(1usize << dims) {
                let highpass: Vec<bool> = (0..dims).map(|a| mask >> a & 1 == 1).collect();
                let start = (0..dims).map(|a| if highpass[a] { half[a] } else { 0 }).collect();
                out.push(Subband { level: l, highpass, start, extent: half.clone() });
            }
        }
        out.push(Subband {
            level: self.levels,
            highpass: vec![false; dims],
            start: vec![0; dims],
            extent: ext[self.levels].clone(),
        });
        out
    }

    /// Flat indices covered by a subband.
    pub fn indices(&self, band: &Subband) -> Vec<usize> {
        let strides = strides(&self.shape);
        let mut out = Vec::new();
        let mut idx = vec![0usize; band.extent.len()];
        loop {
            out.push(idx.iter().enumerate().map(|(a, &i)| (band.start[a] + i) * strides[a]).sum());
            let mut a = idx.len();
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < band.extent[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlock<T> {
    pub data: Vec<T>,
    pub layout: SubbandLayout,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

/// Calls `f(offset)` for the first element of every line along `axis`
/// inside the box `ext` anchored at the origin.
fn for_each_line(shape: &[usize], ext: &[usize], axis: usize, mut f: impl FnMut(usize)) {
    let st = strides(shape);
    let others: Vec<usize> = (0..shape.len()).filter(|&a| a != axis).collect();
    let mut idx = vec![0usize; others.len()];
    loop {
        f(others.iter().zip(&idx).map(|(&a, &i)| i * st[a]).sum());
        let mut k = idx.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < ext[others[k]] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Precomputed filters for one family.
#[derive(Debug, Clone)]
pub struct Wavelet<T> {
    spec: WaveletSpec,
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> Wavelet<T> {
    pub fn new(spec: WaveletSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            lo: spec.family.lowpass().into_iter().map(T::of).collect(),
            hi: spec.family.highpass().into_iter().map(T::of).collect(),
        })
    }

    pub fn spec(&self) -> &WaveletSpec {
        &self.spec
    }

    fn analyze_line(&self, line: &[T], out: &mut [T]) {
        let n = line.len();
        let half = n / 2;
        for i in 0..half {
            let (mut a, mut d) = (T::zero(), T::zero());
            for (k, (&h, &g)) in self.lo.iter().zip(&self.hi).enumerate() {
                let v = line[(2 * i + k) % n];
                a += h * v;
                d += g * v;
            }
            out[i] = a;
            out[half + i] = d;
        }
    }

    fn synthesize_line(&self, coef: &[T], out: &mut [T]) {
        let n = coef.len();
        let half = n / 2;
        out.fill(T::zero());
        for i in 0..half {
            let (a, d) = (coef[i], coef[half + i]);
            for (k, (&h, &g)) in self.lo.iter().zip(&self.hi).enumerate() {
                out[(2 * i + k) % n] += h * a + g * d;
            }
        }
    }

    fn axis_pass(&self, data: &mut [T], shape: &[usize], ext: &[usize], axis: usize, inverse: bool) {
        let stride = strides(shape)[axis];
        let len = ext[axis];
        let mut line = vec![T::zero(); len];
        let mut out = vec![T::zero(); len];
        for_each_line(shape, ext, axis, |base| {
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            if inverse {
                self.synthesize_line(&line, &mut out);
            } else {
                self.analyze_line(&line, &mut out);
            }
            for (i, &v) in out.iter().enumerate() {
                data[base + i * stride] = v;
            }
        });
    }

    /// Transform the row-major array `x` of the given `shape` in place.
    pub fn forward_in_place(&self, data: &mut [T], shape: &[usize]) -> Result<()> {
        self.spec.check_shape(shape)?;
        check_len(data.len(), shape)?;
        for l in 0..self.spec.levels {
            let ext: Vec<usize> = shape.iter().map(|&s| s >> l).collect();
            for axis in 0..shape.len() {
                self.axis_pass(data, shape, &ext, axis, false);
            }
        }
        Ok(())
    }

    pub fn inverse_in_place(&self, data: &mut [T], shape: &[usize]) -> Result<()> {
        self.spec.check_shape(shape)?;
        check_len(data.len(), shape)?;
        for l in (0..self.spec.levels).rev() {
            let ext: Vec<usize> = shape.iter().map(|&s| s >> l).collect();
            for axis in (0..shape.len()).rev() {
                self.axis_pass(data, shape, &ext, axis, true);
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T], shape: &[usize]) -> Result<CoefficientBlock<T>> {
        let mut data = x.to_vec();
        self.forward_in_place(&mut data, shape)?;
        Ok(CoefficientBlock {
            data,
            layout: SubbandLayout { shape: shape.to_vec(), levels: self.spec.levels, family: self.spec.family },
        })
    }

    pub fn inverse(&self, c: &CoefficientBlock<T>) -> Result<Vec<T>> {
        if c.layout.levels != self.spec.levels || c.layout.family != self.spec.family {
            return Err(Error::Shape(format!(
                "coefficient layout ({:?}, {} levels) does not match wavelet ({:?}, {} levels)",
                c.layout.family, c.layout.levels, self.spec.family, self.spec.levels
            )));
        }
        let mut data = c.data.clone();
        self.inverse_in_place(&mut data, &c.layout.shape)?;
        Ok(data)
    }
}

fn check_len(len: usize, shape: &[usize]) -> Result<()> {
    let want: usize = shape.iter().product();
    if len == want {
        Ok(())
    } else {
        Err(Error::Shape(format!("array of length {len} does not match shape {shape:?}")))
    }
}

pub fn dwt_forward<T: Real>(spec: &WaveletSpec, x: &[T], shape: &[usize]) -> Result<CoefficientBlock<T>> {
    Wavelet::new(*spec)?.forward(x, shape)
}

pub fn dwt_inverse<T: Real>(spec: &WaveletSpec, c: &CoefficientBlock<T>) -> Result<Vec<T>> {
    Wavelet::new(*spec)?.inverse(c)
}
