//! Matrix-free linear operators: the fan-beam projector, its exact
//! transpose, and block-diagonal stacking over time steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::FanBeamGeometry;
use crate::num::{norm2, Real};

/// A linear map `R^cols -> R^rows` with its transpose.
pub trait LinearOperator<T: Real>: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// `y = A x`; slices have exactly `cols` and `rows` elements.
    fn apply_into(&self, x: &[T], y: &mut [T]);

    /// `x = Aᵀ y`; slices have exactly `rows` and `cols` elements.
    fn adjoint_into(&self, y: &[T], x: &mut [T]);

    fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("forward input", x.len(), self.cols())?;
        let mut y = vec![T::zero(); self.rows()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    fn adjoint(&self, y: &[T]) -> Result<Vec<T>> {
        check_len("adjoint input", y.len(), self.rows())?;
        let mut x = vec![T::zero(); self.cols()];
        self.adjoint_into(y, &mut x);
        Ok(x)
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what} has length {got}, expected {want}")))
    }
}

impl<T: Real, O: LinearOperator<T> + ?Sized> LinearOperator<T> for Box<O> {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply_into(&self, x: &[T], y: &mut [T]) {
        (**self).apply_into(x, y)
    }
    fn adjoint_into(&self, y: &[T], x: &mut [T]) {
        (**self).adjoint_into(y, x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub size: usize,
}

impl<T: Real> LinearOperator<T> for Identity {
    fn rows(&self) -> usize {
        self.size
    }
    fn cols(&self) -> usize {
        self.size
    }
    fn apply_into(&self, x: &[T], y: &mut [T]) {
        y.copy_from_slice(x);
    }
    fn adjoint_into(&self, y: &[T], x: &mut [T]) {
        x.copy_from_slice(y);
    }
}

/// Dense row-major matrix; meant for small test problems.
#[derive(Debug, Clone)]
pub struct MatrixOperator<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> MatrixOperator<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len("matrix data", data.len(), rows * cols)?;
        Ok(Self { rows, cols, data })
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut data = vec![T::zero(); n * n];
        for (i, &d) in diag.iter().enumerate() {
            data[i * n + i] = d;
        }
        Self { rows: n, cols: n, data }
    }
}

impl<T: Real> LinearOperator<T> for MatrixOperator<T> {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply_into(&self, x: &[T], y: &mut [T]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.data[r * self.cols..(r + 1) * self.cols].iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }
    fn adjoint_into(&self, y: &[T], x: &mut [T]) {
        x.fill(T::zero());
        for (r, &yr) in y.iter().enumerate() {
            for (xc, &a) in x.iter_mut().zip(&self.data[r * self.cols..(r + 1) * self.cols]) {
                *xc += a * yr;
            }
        }
    }
}

/// Angles per work unit in the adjoint; fixed so that the summation order,
/// and therefore the result, does not depend on the thread count.
const ADJOINT_CHUNK: usize = 8;

/// Fan-beam projector for an `n × n` image with pitch `pixel_size_mm`.
///
/// Each ray runs from the source to the center of one detector element.
/// Along the ray, the image is sampled once per pixel row or column
/// (whichever axis the ray is closer to), linearly interpolating between
/// the two neighbouring pixels; values outside the grid are zero.
#[derive(Debug, Clone)]
pub struct FanBeamProjector {
    geometry: FanBeamGeometry,
    angles_deg: Vec<f64>,
    n: usize,
    pixel_size_mm: f64,
    trig: Vec<(f64, f64)>,
    offsets: Vec<f64>,
}

impl FanBeamProjector {
    pub fn new(geometry: FanBeamGeometry, angles_deg: Vec<f64>, n: usize, pixel_size_mm: f64) -> Result<Self> {
        geometry.validate()?;
        if angles_deg.is_empty() {
            return Err(Error::Config("projector needs at least one angle".into()));
        }
        if n == 0 || !(pixel_size_mm > 0.0) {
            return Err(Error::Config(format!("invalid image grid n={n}, pixel={pixel_size_mm}")));
        }
        let half_diag = n as f64 * pixel_size_mm / std::f64::consts::SQRT_2;
        if half_diag >= geometry.sod_mm || half_diag >= geometry.sdd_mm - geometry.sod_mm {
            return Err(Error::Config(format!(
                "image grid (half diagonal {half_diag:.3} mm) must lie between source and detector"
            )));
        }
        let trig = angles_deg.iter().map(|&a| geometry.source_angle_rad(a).sin_cos()).collect();
        let offsets = (0..geometry.detector_count).map(|j| geometry.detector_offset(j)).collect();
        Ok(Self { geometry, angles_deg, n, pixel_size_mm, trig, offsets })
    }

    pub fn geometry(&self) -> &FanBeamGeometry {
        &self.geometry
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixel_size_mm(&self) -> f64 {
        self.pixel_size_mm
    }

    pub fn n_angles(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn detector_count(&self) -> usize {
        self.geometry.detector_count
    }

    /// Source position and unnormalized direction of ray `(i, j)`.
    #[inline]
    pub fn ray(&self, i: usize, j: usize) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.trig[i];
        let src = [self.geometry.sod_mm * c, self.geometry.sod_mm * s];
        let back = self.geometry.sdd_mm - self.geometry.sod_mm;
        let u = self.offsets[j];
        let det = [-back * c - u * s, -back * s + u * c];
        (src, [det[0] - src[0], det[1] - src[1]])
    }

    /// Calls `f(pixel_index, weight)` for every interpolation weight of
    /// ray `(i, j)`. Forward and adjoint both go through here, which keeps
    /// them exact transposes of each other.
    #[inline]
    fn trace(&self, i: usize, j: usize, mut f: impl FnMut(usize, f64)) {
        let (src, d) = self.ray(i, j);
        let n = self.n;
        let h = self.pixel_size_mm;
        let half = (n as f64 - 1.0) / 2.0;
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if d[0].abs() >= d[1].abs() {
            // one sample per column, interpolate between rows
            let step = h * len / d[0].abs();
            for c in 0..n {
                let x = (c as f64 - half) * h;
                let t = (x - src[0]) / d[0];
                let y = src[1] + t * d[1];
                let rf = half - y / h;
                let r0 = rf.floor();
                let w = rf - r0;
                let r0 = r0 as isize;
                if r0 >= 0 && (r0 as usize) < n {
                    f(r0 as usize * n + c, (1.0 - w) * step);
                }
                let r1 = r0 + 1;
                if r1 >= 0 && (r1 as usize) < n {
                    f(r1 as usize * n + c, w * step);
                }
            }
        } else {
            let step = h * len / d[1].abs();
            for r in 0..n {
                let y = (half - r as f64) * h;
                let t = (y - src[1]) / d[1];
                let x = src[0] + t * d[0];
                let cf = x / h + half;
                let c0 = cf.floor();
                let w = cf - c0;
                let c0 = c0 as isize;
                if c0 >= 0 && (c0 as usize) < n {
                    f(r * n + c0 as usize, (1.0 - w) * step);
                }
                let c1 = c0 + 1;
                if c1 >= 0 && (c1 as usize) < n {
                    f(r * n + c1 as usize, w * step);
                }
            }
        }
    }

    /// Pixels touched by ray `(i, j)`.
    pub fn ray_support(&self, i: usize, j: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.trace(i, j, |k, w| {
            if w != 0.0 {
                out.push(k)
            }
        });
        out
    }
}

impl<T: Real> LinearOperator<T> for FanBeamProjector {
    fn rows(&self) -> usize {
        self.angles_deg.len() * self.geometry.detector_count
    }

    fn cols(&self) -> usize {
        self.n * self.n
    }

    fn apply_into(&self, x: &[T], y: &mut [T]) {
        let d = self.geometry.detector_count;
        y.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            for (j, out) in row.iter_mut().enumerate() {
                let mut acc = T::zero();
                self.trace(i, j, |k, w| acc += T::of(w) * x[k]);
                *out = acc;
            }
        });
    }

    fn adjoint_into(&self, y: &[T], x: &mut [T]) {
        let d = self.geometry.detector_count;
        let nn = self.n * self.n;
        let partials: Vec<Vec<T>> = y
            .par_chunks(d * ADJOINT_CHUNK)
            .enumerate()
            .map(|(chunk, rows)| {
                let mut buf = vec![T::zero(); nn];
                for (local, row) in rows.chunks(d).enumerate() {
                    let i = chunk * ADJOINT_CHUNK + local;
                    for (j, &v) in row.iter().enumerate() {
                        if v != T::zero() {
                            self.trace(i, j, |k, w| buf[k] += T::of(w) * v);
                        }
                    }
                }
                buf
            })
            .collect();
        x.fill(T::zero());
        for p in partials {
            for (a, b) in x.iter_mut().zip(p) {
                *a += b;
            }
        }
    }
}

/// `diag(A_1, …, A_T)` acting on the stacked vector `[x_1; …; x_T]`.
pub struct BlockDiagonalOperator<T: Real> {
    blocks: Vec<Box<dyn LinearOperator<T>>>,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
}

impl<T: Real> BlockDiagonalOperator<T> {
    pub fn new(blocks: Vec<Box<dyn LinearOperator<T>>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Config("block-diagonal operator needs at least one block".into()));
        }
        let mut row_offsets = vec![0];
        let mut col_offsets = vec![0];
        for b in &blocks {
            row_offsets.push(row_offsets.last().unwrap() + b.rows());
            col_offsets.push(col_offsets.last().unwrap() + b.cols());
        }
        Ok(Self { blocks, row_offsets, col_offsets })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, t: usize) -> &dyn LinearOperator<T> {
        self.blocks[t].as_ref()
    }

    pub fn row_range(&self, t: usize) -> std::ops::Range<usize> {
        self.row_offsets[t]..self.row_offsets[t + 1]
    }

    pub fn col_range(&self, t: usize) -> std::ops::Range<usize> {
        self.col_offsets[t]..self.col_offsets[t + 1]
    }
}

fn split_by<'a, T>(mut s: &'a mut [T], offsets: &[usize]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(offsets.len() - 1);
    for w in offsets.windows(2) {
        let (head, tail) = s.split_at_mut(w[1] - w[0]);
        out.push(head);
        s = tail;
    }
    out
}

impl<T: Real> LinearOperator<T> for BlockDiagonalOperator<T> {
    fn rows(&self) -> usize {
        *self.row_offsets.last().unwrap()
    }

    fn cols(&self) -> usize {
        *self.col_offsets.last().unwrap()
    }

    fn apply_into(&self, x: &[T], y: &mut [T]) {
        split_by(y, &self.row_offsets).into_par_iter().enumerate().for_each(|(t, yt)| {
            self.blocks[t].apply_into(&x[self.col_range(t)], yt);
        });
    }

    fn adjoint_into(&self, y: &[T], x: &mut [T]) {
        split_by(x, &self.col_offsets).into_par_iter().enumerate().for_each(|(t, xt)| {
            self.blocks[t].adjoint_into(&y[self.row_range(t)], xt);
        });
    }
}

/// Stack per-frame projectors into one operator over the animation vector.
pub fn make_temporal_operator<T: Real>(per_frame: Vec<FanBeamProjector>) -> Result<BlockDiagonalOperator<T>> {
    if per_frame.is_empty() {
        return Err(Error::Config("temporal operator needs at least one frame".into()));
    }
    BlockDiagonalOperator::new(
        per_frame
            .into_iter()
            .map(|p| Box::new(p) as Box<dyn LinearOperator<T>>)
            .collect(),
    )
}

/// Power-method estimate of the spectral norm `‖A‖₂`.
///
/// Returns `‖A x_k‖` for the normalized `k`-th power iterate of `AᵀA`
/// started from a seeded random vector; the estimate never exceeds the true
/// norm and does not decrease with `iters`.
pub fn operator_norm_estimate<T: Real>(op: &dyn LinearOperator<T>, iters: usize, seed: u64) -> Result<T> {
    if iters == 0 {
        return Err(Error::Parameter("power method needs iters >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<T> = (0..op.cols()).map(|_| T::of(rng.random::<f64>() - 0.5)).collect();
    let mut ax = vec![T::zero(); op.rows()];
    let mut next = vec![T::zero(); op.cols()];
    let nx = norm2(&x);
    if nx == T::zero() {
        return Ok(T::zero());
    }
    x.iter_mut().for_each(|v| *v /= nx);
    for _ in 0..iters {
        op.apply_into(&x, &mut ax);
        op.adjoint_into(&ax, &mut next);
        let nn = norm2(&next);
        if nn == T::zero() {
            return Ok(T::zero());
        }
        for (a, &b) in x.iter_mut().zip(&next) {
            *a = b / nn;
        }
    }
    op.apply_into(&x, &mut ax);
    Ok(norm2(&ax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::dot;

    fn small_projector(n: usize, p: usize) -> FanBeamProjector {
        let g = FanBeamGeometry::stempo(16).unwrap();
        let angles = (0..p).map(|i| i as f64 * 360.0 / p as f64).collect();
        FanBeamProjector::new(g.clone(), angles, n, g.fov_pixel_size(n)).unwrap()
    }

    fn random_vec(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    #[test]
    fn zero_in_zero_out() {
        let p = small_projector(16, 6);
        let y = LinearOperator::<f64>::forward(&p, &vec![0.0; 256]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        let x = LinearOperator::<f64>::adjoint(&p, &vec![0.0; y.len()]).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let p = small_projector(16, 6);
        assert!(matches!(LinearOperator::<f64>::forward(&p, &[1.0; 10]), Err(Error::Shape(_))));
        assert!(matches!(LinearOperator::<f64>::adjoint(&p, &[1.0; 10]), Err(Error::Shape(_))));
    }

    #[test]
    fn homogeneity_and_additivity() {
        let p = small_projector(24, 9);
        let x = random_vec(576, 1);
        let z = random_vec(576, 2);
        let y1 = p.forward(&x).unwrap();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y2 = p.forward(&x2).unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            assert_eq!(2.0 * a, *b);
        }
        let combo: Vec<f64> = x.iter().zip(&z).map(|(a, b)| 0.3 * a - 1.7 * b).collect();
        let yc = p.forward(&combo).unwrap();
        let yz = p.forward(&z).unwrap();
        for k in 0..yc.len() {
            assert!((yc[k] - (0.3 * y1[k] - 1.7 * yz[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn dot_test_small() {
        let p = small_projector(32, 10);
        for seed in 0..5 {
            let x = random_vec(p.cols_len(), seed);
            let y = random_vec(LinearOperator::<f64>::rows(&p), 100 + seed);
            let ax = p.forward(&x).unwrap();
            let aty = p.adjoint(&y).unwrap();
            let lhs = dot(&ax, &y);
            let rhs = dot(&x, &aty);
            assert!((lhs - rhs).abs() / (norm2(&ax) * norm2(&y)) < 1e-12);
        }
    }

    impl FanBeamProjector {
        fn cols_len(&self) -> usize {
            self.n * self.n
        }
    }

    #[test]
    fn nonnegative_image_gives_nonnegative_sinogram() {
        let p = small_projector(20, 7);
        let x: Vec<f64> = random_vec(400, 9).iter().map(|v| v.abs()).collect();
        assert!(p.forward(&x).unwrap().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn impulse_adjoint_matches_ray_support() {
        let p = small_projector(32, 4);
        let d = p.detector_count();
        let mut y = vec![0.0f64; 4 * d];
        let (i, j) = (1, d / 2 + 3);
        y[i * d + j] = 1.0;
        let x = p.adjoint(&y).unwrap();
        let support = p.ray_support(i, j);
        for (k, &v) in x.iter().enumerate() {
            if v != 0.0 {
                assert!(support.contains(&k));
            }
        }
        assert!(x.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn rays_missing_the_grid_are_zero() {
        // a 10 mm grid far from the edge rays of a wide detector
        let g = FanBeamGeometry::stempo(16).unwrap();
        let p = FanBeamProjector::new(g, vec![0.0, 45.0], 16, 0.5).unwrap();
        let y = p.forward(&vec![1.0f64; 256]).unwrap();
        assert_eq!(y[0], 0.0);
        assert_eq!(y[139], 0.0);
        assert!(y[70] > 0.0);
    }

    #[test]
    fn identity_and_diagonal_norms() {
        let id = Identity { size: 17 };
        let est: f64 = operator_norm_estimate(&id, 5, 3).unwrap();
        assert!((est - 1.0).abs() < 1e-6);
        let diag = MatrixOperator::diagonal(&[3.0f64, 1.0]);
        let est = operator_norm_estimate(&diag, 20, 3).unwrap();
        assert!((est - 3.0).abs() < 1e-6);
        let zero = MatrixOperator::diagonal(&[0.0f64, 0.0]);
        assert_eq!(operator_norm_estimate(&zero, 4, 1).unwrap(), 0.0);
        assert!(operator_norm_estimate(&zero, 0, 1).is_err());
    }

    #[test]
    fn power_method_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..30 * 20).map(|_| rng.random::<f64>() - 0.5).collect();
        let m = MatrixOperator::new(30, 20, data).unwrap();
        for k in 1..15 {
            let a = operator_norm_estimate(&m, k, 11).unwrap();
            let b = operator_norm_estimate(&m, 2 * k, 11).unwrap();
            assert!(a <= b + 1e-9, "k={k}: {a} > {b}");
        }
    }

    #[test]
    fn temporal_operator_structure() {
        assert!(make_temporal_operator::<f64>(vec![]).is_err());
        let single = small_projector(16, 5);
        let op = make_temporal_operator::<f64>(vec![single.clone()]).unwrap();
        let x = random_vec(256, 4);
        assert_eq!(op.forward(&x).unwrap(), single.forward(&x).unwrap());

        let g = FanBeamGeometry::stempo(16).unwrap();
        let h = g.fov_pixel_size(16);
        let a = FanBeamProjector::new(g.clone(), vec![0.0, 30.0], 16, h).unwrap();
        let b = FanBeamProjector::new(g.clone(), vec![60.0, 90.0, 120.0], 16, h).unwrap();
        let op = make_temporal_operator::<f64>(vec![a, b]).unwrap();
        assert_eq!(op.rows(), 5 * 140);
        assert_eq!(op.cols(), 512);
        let mut x = random_vec(512, 8);
        let y1 = op.forward(&x).unwrap();
        for v in &mut x[256..] {
            *v = 7.0;
        }
        let y2 = op.forward(&x).unwrap();
        assert_eq!(y1[..2 * 140], y2[..2 * 140]);
    }
}
