use std::path::Path;
use std::process::Command;

use dyntomo::sinogram::container::{load_image_stack, load_sinogram};
use dyntomo_cli::config::{preset_text, PRESETS};
use dyntomo_cli::{cmd_metrics, cmd_reconstruct, cmd_simulate, cmd_subsample, Algorithm, ReconstructOptions, RunConfig, SimulateOptions};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dyntomo"))
}

fn small_moving_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        "preset = \"stempo-cont360\"\n[geometry]\nbinning = 32\n[scene]\nsupersample = 2\nn = 128\n[solver]\nn = 64\n",
    )
    .unwrap();
    path
}

#[test]
fn static_scan_round_trip_reaches_fbp_quality() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let opts = SimulateOptions { preset: Some("stempo-static".into()), out: sim.clone(), noiseless: true, ..Default::default() };
    let outcome = cmd_simulate(&opts).unwrap();
    assert_eq!(outcome.sinogram.n_proj(), 360);
    for name in ["sinogram.toml", "ground_truth.toml", "trajectory.csv", "config.toml", "manifest.toml"] {
        assert!(sim.join(name).exists(), "{name}");
    }

    let rec = dir.path().join("fbp");
    let mut ro = ReconstructOptions::new(Algorithm::Fbp, sim.join("sinogram.toml"), &rec);
    ro.truth = Some(sim.join("ground_truth.toml"));
    let out = cmd_reconstruct(&ro).unwrap();
    assert_eq!(out.volume.n, 280);
    let psnr = out.metrics.unwrap().frames[0].psnr_db;
    assert!(psnr >= 30.0, "PSNR {psnr}");

    let again = cmd_metrics(&rec.join("recon.toml"), &sim.join("ground_truth.toml"), None).unwrap();
    assert_eq!(again.frames[0].psnr_db, psnr);
    assert!(rec.join("previews").join("recon_000.pgm").exists());
}

#[test]
fn subsample_specs_select_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let cfg = small_moving_config(dir.path());
    cmd_simulate(&SimulateOptions { config: Some(cfg), out: sim.clone(), ..Default::default() }).unwrap();
    let sino = sim.join("sinogram.toml");

    let quarter = cmd_subsample(&sino, "0:90:270", &dir.path().join("q.toml"), None).unwrap();
    assert_eq!(quarter.n_proj(), 4);
    assert_eq!(quarter.frame_of_projection, Some(vec![0, 90, 180, 270]));
    let every = cmd_subsample(&sino, "every:8", &dir.path().join("e.toml"), None).unwrap();
    assert_eq!(every.n_proj(), 45);
    let reloaded = load_sinogram::<f64>(&dir.path().join("e.toml")).unwrap();
    assert_eq!(reloaded, every);

    let missing = cmd_subsample(&sino, "0.5", &dir.path().join("m.toml"), None).unwrap_err();
    assert_eq!(missing.exit_code(), 2);
}

#[test]
fn iterative_commands_write_frame_stacks() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let cfg = small_moving_config(dir.path());
    cmd_simulate(&SimulateOptions { config: Some(cfg.clone()), out: sim.clone(), ..Default::default() }).unwrap();
    let sino = sim.join("sinogram.toml");

    let mut p = ReconstructOptions::new(Algorithm::Pdfp, &sino, dir.path().join("pdfp"));
    p.config = Some(cfg.clone());
    p.max_iters = Some(5);
    let out = cmd_reconstruct(&p).unwrap();
    assert_eq!(out.volume.n_frames, 16);
    let stack = load_image_stack::<f64>(&dir.path().join("pdfp").join("recon.toml")).unwrap();
    assert_eq!(stack.n_frames, 16);
    assert!(stack.frames.iter().all(|v| *v >= 0.0));

    let mut l = ReconstructOptions::new(Algorithm::Lps, &sino, dir.path().join("lps"));
    l.config = Some(cfg);
    l.max_iters = Some(3);
    l.truth = Some(sim.join("ground_truth.toml"));
    let out = cmd_reconstruct(&l).unwrap();
    assert_eq!(out.volume.n_frames, 85);
    for name in ["recon.toml", "low_rank.toml", "sparse.toml", "report.toml", "metrics.toml", "concentration.toml"] {
        assert!(dir.path().join("lps").join(name).exists(), "{name}");
    }
    let (low, sparse) = out.components.unwrap();
    for k in 0..low.frames.len() {
        assert!((low.frames[k] + sparse.frames[k] - out.volume.frames[k]).abs() < 1e-12);
    }
}

#[test]
fn presets_parse_and_merge() {
    for (name, _) in PRESETS {
        let cfg = RunConfig::from_preset(name).unwrap();
        assert_eq!(cfg.geometry.binning, 8);
        assert!(preset_text(name).unwrap().contains("[schedule]"));
    }
    let cfg = RunConfig::parse("[geometry]\nbinning = 16\n", "inline", Some("stempo-seq8x45")).unwrap();
    assert_eq!(cfg.geometry.binning, 16);
    assert_eq!(cfg.schedule.0, dyntomo::SamplingSchedule::seq8x45());
    assert!(RunConfig::parse("[geometry]\nbinning = 3\n", "inline", None).is_err());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let ok = bin().args(["preset", "stempo-static"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("binning"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[geometry]\nbinnning = 8\n").unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&bad).arg("--out").arg(dir.path().join("x")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("binnning") && err.contains("line 2"), "{err}");

    let out = bin()
        .args(["reconstruct", "fbp", "--sinogram"])
        .arg(dir.path().join("nope.toml"))
        .arg("--out")
        .arg(dir.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = bin().args(["preset", "no-such-preset"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
