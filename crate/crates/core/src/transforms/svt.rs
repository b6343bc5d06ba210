//! Singular value thresholding for tall matrices via the small Gram matrix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::num::{dot, Real};

/// Eigen-decomposition of a symmetric `n × n` row-major matrix by cyclic
/// Jacobi rotations. Returns eigenvalues and the row-major eigenvector
/// matrix whose column `k` belongs to eigenvalue `k`.
pub fn symmetric_eigen<T: Real>(a: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    let mut a = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let total: T = a.iter().map(|&x| x * x).sum();
    let eps = T::epsilon() * T::epsilon() * total;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= eps {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let two = T::of(2.0);
                let theta = (a[q * n + q] - a[p * n + p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

#[derive(Debug, Clone)]
pub struct SvtOutput<T> {
    /// Thresholded matrix, same column-major layout as the input.
    pub matrix: Vec<T>,
    /// Singular values of the input, descending.
    pub singular_values: Vec<T>,
    /// Number of singular values strictly above the threshold.
    pub rank: usize,
}

/// Proximal map of `λ‖·‖_*` for a `rows × cols` matrix stored column by
/// column (each column contiguous), intended for `cols ≪ rows`.
///
/// With `MᵀM = V Λ Vᵀ` and `σ = √Λ`, the result is
/// `M V diag(max(1 - λ/σ, 0)) Vᵀ = U max(Σ - λ, 0) Vᵀ`.
pub fn svt<T: Real>(m: &[T], rows: usize, cols: usize, lambda: T) -> Result<SvtOutput<T>> {
    if m.len() != rows * cols {
        return Err(Error::Shape(format!("matrix has {} entries, expected {rows}×{cols}", m.len())));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::Parameter(format!("threshold must be >= 0, got {lambda}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite entry in SVT input".into()));
    }
    let col = |k: usize| &m[k * rows..(k + 1) * rows];
    let pairs: Vec<(usize, usize)> = (0..cols).flat_map(|a| (a..cols).map(move |b| (a, b))).collect();
    let entries: Vec<T> = pairs.par_iter().map(|&(a, b)| dot(col(a), col(b))).collect();
    let mut gram = vec![T::zero(); cols * cols];
    for (&(a, b), &g) in pairs.iter().zip(&entries) {
        gram[a * cols + b] = g;
        gram[b * cols + a] = g;
    }
    let (evals, evecs) = symmetric_eigen(&gram, cols);
    let sigma: Vec<T> = evals.iter().map(|&e| e.max(T::zero()).sqrt()).collect();
    let scale: Vec<T> = sigma
        .iter()
        .map(|&s| {
            if lambda == T::zero() {
                T::one()
            } else if s > lambda {
                T::one() - lambda / s
            } else {
                T::zero()
            }
        })
        .collect();
    // K = V diag(scale) Vᵀ
    let mut kmat = vec![T::zero(); cols * cols];
    for a in 0..cols {
        for b in 0..cols {
            kmat[a * cols + b] = (0..cols).map(|k| evecs[a * cols + k] * scale[k] * evecs[b * cols + k]).sum();
        }
    }
    let mut out = vec![T::zero(); rows * cols];
    out.par_chunks_mut(rows).enumerate().for_each(|(b, ob)| {
        for a in 0..cols {
            let w = kmat[a * cols + b];
            if w != T::zero() {
                for (o, &v) in ob.iter_mut().zip(col(a)) {
                    *o += w * v;
                }
            }
        }
    });
    let rank = sigma.iter().filter(|&&s| s > lambda).count();
    let mut singular_values = sigma;
    singular_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(SvtOutput { matrix: out, singular_values, rank })
}

/// `Σ σᵢ` from the Gram eigenvalues.
pub fn nuclear_norm<T: Real>(m: &[T], rows: usize, cols: usize) -> Result<T> {
    Ok(svt(m, rows, cols, T::zero())?.singular_values.into_iter().sum())
}
