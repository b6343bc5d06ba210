use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use dyntomo::phantom::{generate_ground_truth, MotionProfile};
use dyntomo::recon::{
    evaluate, fbp, fbp_warm_start, lps_from, pdfp_wavelet, resample_truth, sparse_concentration, MetricsReport,
    ReconVolume, SolverReport, SparseConcentration, StopReason, TemporalProblem,
};
use dyntomo::sinogram::container::{
    load_image_stack, load_sinogram, save_image_stack, save_intensity_stack, save_sinogram, ImageStack,
};
use dyntomo::sinogram::{partition_ranges, simulate_measurement, subsample, subsample_occurrence, Sinogram};
use dyntomo::GroundTruth64;

use crate::angles::AngleSpec;
use crate::config::{LpsStart, RunConfig};
use crate::error::CliError;
use crate::preview;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fbp,
    Pdfp,
    Lps,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fbp => "fbp",
            Algorithm::Pdfp => "pdfp",
            Algorithm::Lps => "lps",
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn resolve_config(config: Option<&Path>, preset: Option<&str>) -> Result<RunConfig, CliError> {
    match (config, preset) {
        (Some(path), p) => RunConfig::load(path, p),
        (None, Some(p)) => RunConfig::from_preset(p),
        (None, None) => Ok(RunConfig::default()),
    }
}

#[derive(Serialize)]
struct Timing {
    command: String,
    wall_time_s: f64,
}

fn write_timing(out: &Path, command: &str, start: Instant) -> Result<(), CliError> {
    let t = Timing { command: command.into(), wall_time_s: start.elapsed().as_secs_f64() };
    write(&out.join("timing.toml"), toml::to_string(&t).expect("timing serializes"))
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub out: PathBuf,
    /// Forces the noiseless path.
    pub noiseless: bool,
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    files: Vec<String>,
    sinogram_dims: [usize; 2],
    truth_dims: [usize; 3],
    truth_pixel_size_mm: f64,
    photons: f64,
    seed: u64,
    block_out_of_field_frames: Vec<usize>,
}

pub struct SimulateOutcome {
    pub config: RunConfig,
    pub sinogram: Sinogram<f64>,
    pub truth: GroundTruth64,
}

/// Rasterizes the scene, simulates the scan and writes `sinogram`,
/// `ground_truth`, `trajectory.csv`, the resolved `config.toml` and a
/// `manifest.toml` into `opts.out`.
pub fn cmd_simulate(opts: &SimulateOptions) -> Result<SimulateOutcome, CliError> {
    let start = Instant::now();
    let mut cfg = resolve_config(opts.config.as_deref(), opts.preset.as_deref())?;
    if opts.noiseless {
        cfg.noise.photons = f64::INFINITY;
    }
    if let Some(seed) = opts.seed {
        cfg.noise.seed = seed;
    }
    let g = cfg.geometry.build()?;
    let schedule = &cfg.schedule.0;
    let p = schedule.len();
    let truth_n = cfg.scene.n.unwrap_or(2 * g.detector_count);
    let h = g.fov_pixel_size(truth_n);
    let is_static = cfg.motion.0 == MotionProfile::Static;
    let frames = cfg.scene.frames.unwrap_or(if is_static { 1 } else { p });
    if frames == 0 {
        return Err(CliError::Config("scene.frames must be >= 1".into()));
    }
    let frame_map = (frames != p).then(|| (0..p).map(|i| i * frames / p).collect::<Vec<_>>());
    let truth =
        generate_ground_truth::<f64>(&cfg.scene.phantom(), &cfg.motion.0, frames, truth_n, h, cfg.scene.supersample)?;
    let (stack, sinogram) =
        simulate_measurement(&truth, &g, schedule, cfg.geometry.binning, cfg.noise.photons()?, cfg.noise.seed, frame_map)?;

    let out = &opts.out;
    make_dir(out)?;
    let mut files = vec!["config.toml".to_string(), "sinogram.toml".into(), "ground_truth.toml".into(), "trajectory.csv".into()];
    save_sinogram(&out.join("sinogram.toml"), &sinogram)?;
    save_image_stack(&out.join("ground_truth.toml"), &ImageStack::from(&truth))?;
    if cfg.noise.write_intensities {
        save_intensity_stack(&out.join("intensities.toml"), &stack)?;
        files.push("intensities.toml".into());
    }
    let mut csv = String::from("frame,x_mm,y_mm\n");
    for (t, c) in truth.block_centers_mm.iter().enumerate() {
        csv.push_str(&format!("{t},{},{}\n", c[0], c[1]));
    }
    write(&out.join("trajectory.csv"), csv)?;
    write(&out.join("config.toml"), cfg.to_toml())?;
    let manifest = Manifest {
        command: "simulate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        files,
        sinogram_dims: [sinogram.n_proj(), sinogram.n_det()],
        truth_dims: [truth.n_frames, truth_n, truth_n],
        truth_pixel_size_mm: h,
        photons: cfg.noise.photons,
        seed: cfg.noise.seed,
        block_out_of_field_frames: truth.out_of_field.clone(),
    };
    write(&out.join("manifest.toml"), toml::to_string(&manifest).expect("manifest serializes"))?;
    write_timing(out, "simulate", start)?;
    log::info!("simulated {}×{} sinogram into {}", sinogram.n_proj(), sinogram.n_det(), out.display());
    Ok(SimulateOutcome { config: cfg, sinogram, truth })
}

#[derive(Debug, Clone)]
pub struct ReconstructOptions {
    pub algorithm: Algorithm,
    pub sinogram: PathBuf,
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub out: PathBuf,
    pub frames: Option<usize>,
    pub per_frame: Option<usize>,
    pub stride: Option<usize>,
    pub max_iters: Option<usize>,
    /// Ground truth to score against; writes `metrics.toml`.
    pub truth: Option<PathBuf>,
}

impl ReconstructOptions {
    pub fn new(algorithm: Algorithm, sinogram: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            algorithm,
            sinogram: sinogram.into(),
            config: None,
            preset: None,
            out: out.into(),
            frames: None,
            per_frame: None,
            stride: None,
            max_iters: None,
            truth: None,
        }
    }
}

pub struct ReconOutcome {
    pub volume: ReconVolume<f64>,
    /// `L` and `S` of an L+S run.
    pub components: Option<(ReconVolume<f64>, ReconVolume<f64>)>,
    pub report: Option<SolverReport>,
    pub metrics: Option<MetricsReport>,
    pub concentration: Option<SparseConcentration>,
}

/// Frame partition: explicit settings win, then per-algorithm defaults
/// (whole scan for FBP, 16 × 23 stride 22 for PDFP, 85 × 24 stride 4 for
/// L+S).
fn partition(algorithm: Algorithm, n_proj: usize, frames: Option<usize>, per_frame: Option<usize>, stride: Option<usize>) -> dyntomo::Result<Vec<Range<usize>>> {
    let (f, k, s) = match (algorithm, frames) {
        (_, Some(f)) => {
            let k = per_frame.unwrap_or((n_proj / f.max(1)).max(1));
            (f, k, stride.unwrap_or(k))
        }
        (Algorithm::Fbp, None) => (1, per_frame.unwrap_or(n_proj), stride.unwrap_or(n_proj)),
        (Algorithm::Pdfp, None) => (16, per_frame.unwrap_or(23), stride.unwrap_or(22)),
        (Algorithm::Lps, None) => (85, per_frame.unwrap_or(24), stride.unwrap_or(4)),
    };
    partition_ranges(n_proj, f, k, s)
}

fn mean_frame(s: &Sinogram<f64>) -> f64 {
    (0..s.n_proj()).map(|i| s.frame_of(i) as f64).sum::<f64>() / s.n_proj() as f64
}

fn save_volume(out: &Path, name: &str, v: &ReconVolume<f64>, previews: bool) -> Result<(), CliError> {
    save_image_stack(&out.join(format!("{name}.toml")), &v.to_stack(name))?;
    if previews {
        preview::write_stack(&out.join("previews"), name, v.n, &v.frames)?;
    }
    Ok(())
}

/// Runs one reconstruction and writes the stack(s), `report.toml`, the
/// resolved `config.toml` and previews into `opts.out`. A diverged solver
/// still writes everything before returning [`CliError::Diverged`].
pub fn cmd_reconstruct(opts: &ReconstructOptions) -> Result<ReconOutcome, CliError> {
    let start = Instant::now();
    let mut cfg = resolve_config(opts.config.as_deref(), opts.preset.as_deref())?;
    if let Some(m) = opts.max_iters {
        cfg.solver.pdfp.max_iters = m;
        cfg.solver.lps.max_iters = m;
        cfg.solver.pdfp.validate()?;
        cfg.solver.lps.validate()?;
    }
    let s = load_sinogram::<f64>(&opts.sinogram)?;
    let n = cfg.solver.n.unwrap_or(s.n_det());
    let h = cfg.solver.pixel_size_mm.unwrap_or(s.geometry.fov_pixel_size(n));
    let ranges = partition(
        opts.algorithm,
        s.n_proj(),
        opts.frames.or(cfg.solver.frames),
        opts.per_frame.or(cfg.solver.per_frame),
        opts.stride.or(cfg.solver.stride),
    )?;
    cfg.solver.n = Some(n);
    cfg.solver.pixel_size_mm = Some(h);
    cfg.solver.frames = Some(ranges.len());
    cfg.solver.per_frame = Some(ranges[0].len());
    cfg.solver.stride = Some(ranges.get(1).map_or(ranges[0].len(), |r| r.start - ranges[0].start));
    let parts = ranges.iter().map(|r| s.select_rows(&r.clone().collect::<Vec<_>>())).collect::<dyntomo::Result<Vec<_>>>()?;
    let times: Vec<f64> = parts.iter().map(mean_frame).collect();

    let (volume, components, report) = match opts.algorithm {
        Algorithm::Fbp => {
            let mut frames = Vec::with_capacity(n * n * parts.len());
            for part in &parts {
                frames.extend(fbp(part, n, h, cfg.solver.fbp_filter)?);
            }
            let mut v = ReconVolume::new(n, parts.len(), h, frames)?;
            v.frame_rows = Some(ranges.clone());
            v.frame_times = Some(times);
            (v, None, None)
        }
        Algorithm::Pdfp => {
            let mut problem = TemporalProblem::from_frames(&parts, n, h)?;
            problem.frame_rows = Some(ranges.clone());
            let (v, r) = pdfp_wavelet(&problem, &cfg.solver.pdfp)?;
            (v, None, Some(r))
        }
        Algorithm::Lps => {
            let mut problem = TemporalProblem::from_frames(&parts, n, h)?;
            problem.frame_rows = Some(ranges.clone());
            let init = match cfg.solver.lps_start {
                LpsStart::Zero => None,
                LpsStart::Fbp => Some(fbp_warm_start(&s, n, h, parts.len())?),
            };
            let res = lps_from(&problem, &cfg.solver.lps, init)?;
            let v = res.combined();
            (v, Some((res.low_rank, res.sparse)), Some(res.report))
        }
    };

    let out = &opts.out;
    make_dir(out)?;
    let previews = cfg.output.previews;
    save_volume(out, "recon", &volume, previews)?;
    if let Some((l, sp)) = &components {
        save_volume(out, "low_rank", l, previews)?;
        save_volume(out, "sparse", sp, previews)?;
    }
    let report_text = match &report {
        Some(r) => r.to_toml(),
        None => toml::to_string(&FbpReport {
            algorithm: "fbp".into(),
            filter: cfg.solver.fbp_filter,
            frames: volume.n_frames,
        })
        .expect("report serializes"),
    };
    write(&out.join("report.toml"), report_text)?;
    write(&out.join("config.toml"), cfg.to_toml())?;

    let (mut metrics, mut concentration) = (None, None);
    if let Some(truth_path) = &opts.truth {
        let truth = load_image_stack::<f64>(truth_path)?;
        let (fitted, plan) = resample_truth(&truth, n, h)?;
        let mut m = evaluate(&volume, &fitted)?;
        m.resample = Some(plan);
        write(&out.join("metrics.toml"), m.to_toml())?;
        if let Some((l, sp)) = &components {
            let c = sparse_concentration(l, sp, &fitted)?;
            write(&out.join("concentration.toml"), toml::to_string(&c).expect("concentration serializes"))?;
            concentration = Some(c);
        }
        metrics = Some(m);
    }
    write_timing(out, opts.algorithm.name(), start)?;

    if let Some(r) = &report {
        if r.stop_reason == StopReason::Diverged {
            return Err(CliError::Diverged(format!(
                "{} stopped after {} iterations; partial results in {}",
                r.algorithm,
                r.iterations,
                out.display()
            )));
        }
    }
    Ok(ReconOutcome { volume, components, report, metrics, concentration })
}

#[derive(Serialize)]
struct FbpReport {
    algorithm: String,
    filter: dyntomo::recon::FbpFilter,
    frames: usize,
}

/// Writes the rows matching `spec` as a new sinogram container at `out`.
pub fn cmd_subsample(sinogram: &Path, spec: &str, out: &Path, occurrence: Option<usize>) -> Result<Sinogram<f64>, CliError> {
    let s = load_sinogram::<f64>(sinogram)?;
    let angles = AngleSpec::parse(spec)?.resolve(&s.schedule);
    let sub = match occurrence {
        Some(k) => subsample_occurrence(&s, &angles, k)?,
        None => subsample(&s, &angles)?,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        make_dir(dir)?;
    }
    save_sinogram(out, &sub)?;
    Ok(sub)
}

/// Scores a stored reconstruction against a stored ground truth, fitting
/// the truth to the reconstruction grid first.
pub fn cmd_metrics(recon: &Path, truth: &Path, out: Option<&Path>) -> Result<MetricsReport, CliError> {
    let r = ReconVolume::from_stack(&load_image_stack::<f64>(recon)?)?;
    let t = load_image_stack::<f64>(truth)?;
    let (fitted, plan) = resample_truth(&t, r.n, r.pixel_size_mm)?;
    let mut m = evaluate(&r, &fitted)?;
    m.resample = Some(plan);
    if let Some(path) = out {
        write(path, m.to_toml())?;
    }
    Ok(m)
}
