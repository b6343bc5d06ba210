use proptest::prelude::*;

use dyntomo::recon::tune_alpha_sparsity;
use dyntomo::transforms::{dwt_forward, dwt_inverse, nuclear_norm, soft_threshold, svt, WaveletFamily, WaveletSpec};

const FAMILIES: [WaveletFamily; 4] =
    [WaveletFamily::Haar, WaveletFamily::Daubechies4, WaveletFamily::Daubechies6, WaveletFamily::Daubechies8];

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn shape_for(dims: usize) -> Vec<usize> {
    match dims {
        1 => vec![64],
        2 => vec![16, 24],
        _ => vec![8, 16, 8],
    }
}

fn column_major(rows: usize, cols: usize, data: &[f64]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_column_slice(rows, cols, data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wavelet_round_trip_and_energy(
        family in prop::sample::select(FAMILIES.to_vec()),
        dims in 1usize..=3,
        levels in 1usize..=3,
        seed in prop::collection::vec(-10.0f64..10.0, 1024),
    ) {
        let shape = shape_for(dims);
        let len: usize = shape.iter().product();
        let x = &seed[..len];
        let spec = WaveletSpec::new(family, levels, dims).unwrap();
        let c = dwt_forward(&spec, x, &shape).unwrap();
        let back = dwt_inverse(&spec, &c).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-10 * norm(x).max(1.0));
        prop_assert!((norm(&c.data) - norm(x)).abs() <= 1e-10 * norm(x).max(1.0));
    }

    #[test]
    fn wavelet_preserves_inner_products(
        family in prop::sample::select(FAMILIES.to_vec()),
        a in prop::collection::vec(-1.0f64..1.0, 384),
        b in prop::collection::vec(-1.0f64..1.0, 384),
    ) {
        let spec = WaveletSpec::new(family, 2, 2).unwrap();
        let ca = dwt_forward(&spec, &a, &[16, 24]).unwrap();
        let cb = dwt_forward(&spec, &b, &[16, 24]).unwrap();
        let lhs: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = ca.data.iter().zip(&cb.data).map(|(x, y)| x * y).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn soft_threshold_is_nonexpansive(
        x in prop::collection::vec(-5.0f64..5.0, 1..64),
        shift in prop::collection::vec(-5.0f64..5.0, 64),
        lambda in 0.0f64..3.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let (sx, sy) = (soft_threshold(&x, lambda).unwrap(), soft_threshold(&y, lambda).unwrap());
        let d_in = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let d_out = sx.iter().zip(&sy).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        prop_assert!(d_out <= d_in + 1e-12);
    }

    #[test]
    fn soft_threshold_minimizes_the_scalar_objective(x in -4.0f64..4.0, lambda in 0.0f64..2.0) {
        let s = soft_threshold(&[x], lambda).unwrap()[0];
        let f = |z: f64| 0.5 * (z - x).powi(2) + lambda * z.abs();
        for k in -400..=400 {
            let z = k as f64 * 0.01;
            prop_assert!(f(s) <= f(z) + 1e-12);
        }
    }

    #[test]
    fn tune_alpha_keeps_the_requested_count(
        values in prop::collection::hash_set(-100_000i64..100_000, 10..300),
        fraction in 0.01f64..0.99,
    ) {
        let c: Vec<f64> = values.into_iter().filter(|&v| v != 0).map(|v| v as f64 * 1e-3).collect();
        let alpha = tune_alpha_sparsity(&c, fraction).unwrap();
        let kept = soft_threshold(&c, alpha).unwrap().iter().filter(|v| **v != 0.0).count();
        let magnitudes: std::collections::HashSet<i64> = c.iter().map(|v| (v.abs() * 1e3).round() as i64).collect();
        if magnitudes.len() == c.len() {
            prop_assert_eq!(kept, (fraction * c.len() as f64).ceil() as usize);
        }
    }

    #[test]
    fn tune_alpha_is_positively_homogeneous(
        c in prop::collection::vec(-10.0f64..10.0, 5..200),
        fraction in 0.05f64..0.95,
        scale in 0.01f64..100.0,
    ) {
        let a = tune_alpha_sparsity(&c, fraction).unwrap();
        let scaled: Vec<f64> = c.iter().map(|v| v * scale).collect();
        let b = tune_alpha_sparsity(&scaled, fraction).unwrap();
        prop_assert!((b - scale * a).abs() <= 1e-12 * (scale * a).max(1.0));
    }

    #[test]
    fn svt_matches_reference_svd(
        rows in 6usize..40,
        cols in 2usize..6,
        data in prop::collection::vec(-1.0f64..1.0, 240),
        frac in 0.0f64..1.0,
    ) {
        let m = &data[..rows * cols];
        let svd = column_major(rows, cols, m).svd(true, true);
        let smax = svd.singular_values.max();
        let lambda = frac * smax;
        let out = svt(m, rows, cols, lambda).unwrap();
        let mut shrunk = svd.singular_values.clone();
        shrunk.iter_mut().for_each(|s| *s = (*s - lambda).max(0.0));
        let oracle = svd.u.as_ref().unwrap() * nalgebra::DMatrix::from_diagonal(&shrunk) * svd.v_t.as_ref().unwrap();
        let err: f64 = out.matrix.iter().zip(oracle.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-8 * norm(m).max(1e-12), "err {}", err);
        let expected_rank = svd.singular_values.iter().filter(|&&s| s > lambda).count();
        prop_assert!(out.rank <= expected_rank);
        let nuc = nuclear_norm(m, rows, cols).unwrap();
        prop_assert!((nuc - svd.singular_values.sum()).abs() < 1e-9 * nuc.max(1.0));
    }
}

#[test]
fn haar_3d_sees_no_temporal_detail_in_a_static_stack() {
    let frame: Vec<f64> = (0..256).map(|k| ((k * 37) % 11) as f64).collect();
    let stack: Vec<f64> = (0..4).flat_map(|_| frame.iter().copied()).collect();
    let spec = WaveletSpec::new(WaveletFamily::Haar, 2, 3).unwrap();
    let c = dwt_forward(&spec, &stack, &[4, 16, 16]).unwrap();
    for band in c.layout.subbands() {
        if band.highpass[0] {
            let energy: f64 = c.layout.indices(&band).iter().map(|&i| c.data[i].powi(2)).sum();
            assert!(energy < 1e-20, "{band:?} {energy}");
        }
    }
}

#[test]
fn svt_with_zero_threshold_is_identity() {
    let m: Vec<f64> = (0..60).map(|k| (k as f64 * 0.7).sin()).collect();
    let out = svt(&m, 20, 3, 0.0).unwrap();
    for (a, b) in out.matrix.iter().zip(&m) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn invalid_wavelet_requests_are_rejected() {
    assert!(WaveletSpec::new(WaveletFamily::Haar, 0, 2).is_err());
    assert!(WaveletSpec::new(WaveletFamily::Haar, 1, 4).is_err());
    let spec = WaveletSpec::new(WaveletFamily::Daubechies4, 3, 2).unwrap();
    assert!(dwt_forward(&spec, &vec![0.0; 12 * 12], &[12, 12]).is_err());
    assert!(soft_threshold(&[1.0], -1.0).is_err());
    assert!(tune_alpha_sparsity(&[1.0, 2.0], 1.0).is_err());
}
