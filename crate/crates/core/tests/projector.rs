use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dyntomo::geometry::{FanBeamGeometry, SamplingSchedule};
use dyntomo::phantom::{generate_ground_truth, MotionProfile, PhantomScene, Primitive, Shape};
use dyntomo::projector::{make_temporal_operator, operator_norm_estimate, FanBeamProjector, MatrixOperator};
use dyntomo::sinogram::clean_sinogram;
use dyntomo::LinearOperator;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (d / dot(b, b)).sqrt()
}

fn random(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random::<f64>() - 0.5).collect()
}

fn scene(shapes: Vec<Shape>) -> PhantomScene {
    PhantomScene { primitives: shapes.into_iter().map(|s| Primitive::new(s, 1.0).unwrap()).collect(), moving: None }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dot_test_on_arbitrary_angles(
        angles in prop::collection::vec(0.0f64..360.0, 1..12),
        n in prop::sample::select(vec![8usize, 16, 24, 40]),
        binning in prop::sample::select(vec![8usize, 16, 32]),
        seed in any::<u64>(),
    ) {
        let g = FanBeamGeometry::stempo(binning).unwrap();
        let p = angles.len();
        let a = FanBeamProjector::new(g.clone(), angles, n, g.fov_pixel_size(n)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(n * n, &mut rng);
        let y = random(p * g.detector_count, &mut rng);
        let ax = LinearOperator::<f64>::forward(&a, &x).unwrap();
        let aty = LinearOperator::<f64>::adjoint(&a, &y).unwrap();
        let gap = (dot(&ax, &y) - dot(&x, &aty)).abs() / (dot(&ax, &ax).sqrt() * dot(&y, &y).sqrt()).max(1e-300);
        prop_assert!(gap < 1e-12, "gap {}", gap);
    }

    #[test]
    fn forward_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in any::<u64>()) {
        let g = FanBeamGeometry::stempo(32).unwrap();
        let a = FanBeamProjector::new(g.clone(), vec![0.0, 33.0, 271.5], 16, g.fov_pixel_size(16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (random(256, &mut rng), random(256, &mut rng));
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| alpha * u + beta * v).collect();
        let lhs = LinearOperator::<f64>::forward(&a, &mix).unwrap();
        let (ax, ay) = (LinearOperator::<f64>::forward(&a, &x).unwrap(), LinearOperator::<f64>::forward(&a, &y).unwrap());
        for k in 0..lhs.len() {
            prop_assert!((lhs[k] - alpha * ax[k] - beta * ay[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn disk_matches_analytic_sinogram_at_finest_pitch() {
    // chord through a disk of radius r centered at c, for the ray from the
    // source at angle θ through detector offset u
    let (r, center) = (3.0, [1.5, -1.0]);
    let g = FanBeamGeometry::stempo(1).unwrap();
    let n = 256;
    let h = g.pitch_at_origin();
    let gt = generate_ground_truth::<f64>(&scene(vec![Shape::Disk { center, radius: r }]), &MotionProfile::Static, 1, n, h, 8)
        .unwrap();
    let p = 12;
    let schedule = SamplingSchedule::Continuous { n_proj: p, step_deg: 30.0 };
    let s = clean_sinogram(&gt, &g, &schedule, 1, Some(vec![0; p])).unwrap();
    let d = g.detector_count;
    let mut analytic = Vec::with_capacity(p * d);
    for i in 0..p {
        let th = (30.0 * i as f64).to_radians();
        let src = [g.sod_mm * th.cos(), g.sod_mm * th.sin()];
        for j in 0..d {
            let u = (j as f64 - (d as f64 - 1.0) / 2.0) * g.detector_pitch_mm;
            let back = g.sdd_mm - g.sod_mm;
            let det = [-back * th.cos() - u * th.sin(), -back * th.sin() + u * th.cos()];
            let dir = [det[0] - src[0], det[1] - src[1]];
            let len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            let to_c = [center[0] - src[0], center[1] - src[1]];
            let dist = (to_c[0] * dir[1] - to_c[1] * dir[0]).abs() / len;
            analytic.push(if dist < r { 2.0 * (r * r - dist * dist).sqrt() } else { 0.0 });
        }
    }
    let err = rel_l2(&s.data, &analytic);
    assert!(err < 0.01, "relative L2 {err}");
}

#[test]
fn rotating_the_object_shifts_the_angles() {
    let delta: f64 = 30.0;
    let rot = |p: [f64; 2]| {
        let (s, c) = delta.to_radians().sin_cos();
        [c * p[0] - s * p[1], s * p[0] + c * p[1]]
    };
    let shapes = |turn: bool| {
        let f = |p: [f64; 2]| if turn { rot(p) } else { p };
        let extra = if turn { delta.to_radians() } else { 0.0 };
        vec![
            Shape::Disk { center: f([8.0, 3.0]), radius: 5.0 },
            Shape::Rectangle { center: f([-6.0, -7.0]), width: 9.0, height: 4.0, rotation: 0.3 + extra },
        ]
    };
    let g = FanBeamGeometry::stempo(4).unwrap();
    let n = 256;
    let h = g.pitch_at_origin();
    let base = generate_ground_truth::<f64>(&scene(shapes(false)), &MotionProfile::Static, 1, n, h, 4).unwrap();
    let turned = generate_ground_truth::<f64>(&scene(shapes(true)), &MotionProfile::Static, 1, n, h, 4).unwrap();
    let angles: Vec<f64> = (0..24).map(|i| 15.0 * i as f64).collect();
    let shifted: Vec<f64> = angles.iter().map(|a| a + delta).collect();
    let a0 = FanBeamProjector::new(g.clone(), angles, n, h).unwrap();
    let a1 = FanBeamProjector::new(g.clone(), shifted, n, h).unwrap();
    let s0 = LinearOperator::<f64>::forward(&a0, base.frame(0)).unwrap();
    let s1 = LinearOperator::<f64>::forward(&a1, turned.frame(0)).unwrap();
    let err = rel_l2(&s1, &s0);
    assert!(err < 0.02, "relative L2 {err}");
}

#[test]
fn temporal_operator_matches_per_frame_application() {
    let g = FanBeamGeometry::stempo(32).unwrap();
    let n = 16;
    let h = g.fov_pixel_size(n);
    let frames: Vec<FanBeamProjector> = (0..3)
        .map(|t| FanBeamProjector::new(g.clone(), vec![10.0 * t as f64, 100.0 + t as f64], n, h).unwrap())
        .collect();
    let op = make_temporal_operator::<f64>(frames.clone()).unwrap();
    assert_eq!(LinearOperator::<f64>::rows(&op), 3 * 2 * g.detector_count);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(3 * n * n, &mut rng);
    let y = op.forward(&x).unwrap();
    for (t, p) in frames.iter().enumerate() {
        let want = LinearOperator::<f64>::forward(p, &x[t * n * n..(t + 1) * n * n]).unwrap();
        assert_eq!(&y[t * want.len()..(t + 1) * want.len()], &want[..]);
    }
}

#[test]
fn power_method_approaches_the_svd_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (rows, cols) = (30, 12);
    let data = random(rows * cols, &mut rng);
    let exact = nalgebra::DMatrix::from_row_slice(rows, cols, &data).singular_values().max();
    let op = MatrixOperator::new(rows, cols, data).unwrap();
    let mut last = 0.0;
    for iters in [1, 2, 4, 8, 16, 32, 200] {
        let est: f64 = operator_norm_estimate(&op, iters, 1).unwrap();
        assert!(est <= exact * (1.0 + 1e-12));
        assert!(est + 1e-9 >= last);
        last = est;
    }
    assert!((last - exact).abs() < 1e-6 * exact, "{last} vs {exact}");
}
