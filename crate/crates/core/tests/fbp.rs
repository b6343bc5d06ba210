use dyntomo::geometry::{FanBeamGeometry, SamplingSchedule};
use dyntomo::phantom::{generate_ground_truth, MotionProfile, PhantomScene, Primitive, Shape, MU_HDPE, MU_PIPE};
use dyntomo::recon::{fbp, psnr, FbpFilter};
use dyntomo::sinogram::{clean_sinogram, Sinogram};
use dyntomo::GroundTruth64;

fn disk_truth(n: usize, h: f64) -> GroundTruth64 {
    let scene = PhantomScene { primitives: vec![Primitive::new(Shape::Disk { center: [0.0, 0.0], radius: 10.0 }, 1.0).unwrap()], moving: None };
    generate_ground_truth(&scene, &MotionProfile::Static, 1, n, h, 4).unwrap()
}

fn static_sinogram(gt: &GroundTruth64, g: &FanBeamGeometry, binning: usize, p: usize) -> Sinogram<f64> {
    let schedule = SamplingSchedule::Continuous { n_proj: p, step_deg: 360.0 / p as f64 };
    clean_sinogram(gt, g, &schedule, binning, Some(vec![0; p])).unwrap()
}

#[test]
fn disk_attenuation_and_psnr() {
    let g = FanBeamGeometry::stempo(4).unwrap();
    let (n, h) = (256, g.pitch_at_origin());
    let gt = disk_truth(n, h);
    let s = static_sinogram(&gt, &g, 4, 360);
    let img = fbp(&s, n, h, FbpFilter::RamLak).unwrap();
    let half = (n as f64 - 1.0) / 2.0;
    let inner: Vec<f64> = (0..n * n)
        .filter(|&k| {
            let (x, y) = (((k % n) as f64 - half) * h, ((k / n) as f64 - half) * h);
            (x * x + y * y).sqrt() < 7.0
        })
        .map(|k| img[k])
        .collect();
    let mean = inner.iter().sum::<f64>() / inner.len() as f64;
    let q = psnr(&img, gt.frame(0));
    println!("disk: interior mean {mean:.4}, psnr {q:.2} dB");
    assert!((mean - 1.0).abs() < 0.05, "interior mean {mean}");
    assert!(q >= 30.0, "psnr {q}");
}

#[test]
fn stempo_static_scene_and_sparse_angles() {
    let g = FanBeamGeometry::stempo(8).unwrap();
    let n = 256;
    let h = g.fov_pixel_size(n);
    let scene = PhantomScene::stempo(MU_HDPE, MU_PIPE, [-21.54, 12.0]);
    let gt = generate_ground_truth::<f64>(&scene, &MotionProfile::Static, 1, n, h, 4).unwrap();
    let dense = fbp(&static_sinogram(&gt, &g, 8, 360), n, h, FbpFilter::RamLak).unwrap();
    let sparse = fbp(&static_sinogram(&gt, &g, 8, 20), n, h, FbpFilter::RamLak).unwrap();
    let (qd, qs) = (psnr(&dense, gt.frame(0)), psnr(&sparse, gt.frame(0)));
    println!("stempo: P=360 {qd:.2} dB, P=20 {qs:.2} dB");
    assert!(qd >= 30.0);
    assert!(qs < qd);
}

#[test]
fn fbp_is_linear() {
    let g = FanBeamGeometry::stempo(16).unwrap();
    let schedule = SamplingSchedule::Continuous { n_proj: 30, step_deg: 12.0 };
    let mk = |seed: u64| {
        let data = (0..30 * 140).map(|k| ((k as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0).collect();
        Sinogram::new(data, g.clone(), schedule.clone(), 16, None).unwrap()
    };
    let (s1, s2) = (mk(1), mk(7));
    let (a, b) = (0.7, -1.3);
    let combo = Sinogram::new(
        s1.data.iter().zip(&s2.data).map(|(x, y)| a * x + b * y).collect(),
        g.clone(),
        schedule.clone(),
        16,
        None,
    )
    .unwrap();
    let h = g.fov_pixel_size(64);
    let f1 = fbp(&s1, 64, h, FbpFilter::Hamming).unwrap();
    let f2 = fbp(&s2, 64, h, FbpFilter::Hamming).unwrap();
    let fc = fbp(&combo, 64, h, FbpFilter::Hamming).unwrap();
    let scale = fc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..fc.len() {
        assert!((fc[k] - (a * f1[k] + b * f2[k])).abs() <= 1e-10 * scale);
    }
}
