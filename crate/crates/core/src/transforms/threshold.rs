use crate::error::{Error, Result};
use crate::num::Real;

#[inline]
pub fn shrink<T: Real>(x: T, lambda: T) -> T {
    let m = x.abs() - lambda;
    if m > T::zero() {
        m.copysign(x)
    } else {
        T::zero()
    }
}

/// Elementwise `sign(x) · max(|x| - λ, 0)`, the proximal map of `λ‖·‖₁`.
pub fn soft_threshold<T: Real>(x: &[T], lambda: T) -> Result<Vec<T>> {
    let mut out = x.to_vec();
    soft_threshold_in_place(&mut out, lambda)?;
    Ok(out)
}

pub fn soft_threshold_in_place<T: Real>(x: &mut [T], lambda: T) -> Result<()> {
    if !(lambda >= T::zero()) {
        return Err(Error::Parameter(format!("threshold must be >= 0, got {lambda}")));
    }
    x.iter_mut().for_each(|v| *v = shrink(*v, lambda));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn examples() {
        let x = [3.0, -0.5, 0.0, -7.25];
        assert_eq!(soft_threshold(&x, 0.0).unwrap(), x.to_vec());
        assert_eq!(soft_threshold(&[3.0], 1.0).unwrap(), vec![2.0]);
        assert_eq!(soft_threshold(&[-0.5], 1.0).unwrap(), vec![0.0]);
        assert_eq!(soft_threshold(&[-3.0], 1.0).unwrap(), vec![-2.0]);
        assert!(soft_threshold(&x, -1.0).is_err());
    }

    #[test]
    fn minimizes_the_proximal_objective() {
        // grid-scan oracle for argmin_y ½(y - x)² + λ|y|
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let x: f64 = rng.random::<f64>() * 10.0 - 5.0;
            let lambda: f64 = rng.random::<f64>() * 3.0;
            let obj = |y: f64| 0.5 * (y - x).powi(2) + lambda * y.abs();
            let (mut best, mut best_val) = (0.0, f64::INFINITY);
            let steps = 200_000;
            for k in 0..=steps {
                let y = -6.0 + 12.0 * k as f64 / steps as f64;
                let v = obj(y);
                if v < best_val {
                    best_val = v;
                    best = y;
                }
            }
            let got = shrink(x, lambda);
            assert!((got - best).abs() < 1e-4, "x={x} λ={lambda}: {got} vs {best}");
            assert!(obj(got) <= best_val + 1e-12);
        }
    }
}
