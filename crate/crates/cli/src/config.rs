//! Run configuration: a TOML document with the sections `scene`, `motion`,
//! `geometry`, `schedule`, `noise`, `solver` and `output`.
//!
//! A config may name a `preset`; its own tables are then merged over the
//! preset's. Tables carrying a `kind`, `type` or `mode` tag replace the
//! preset table instead of merging into it.

use serde::{Deserialize, Serialize};

use dyntomo::geometry::{FanBeamGeometry, RotationSense, SamplingSchedule, STEMPO_SDD_MM, STEMPO_SOD_MM};
use dyntomo::phantom::{MotionProfile, PhantomScene, Point, Primitive};
use dyntomo::recon::{FbpFilter, LpsConfig, PdfpConfig};
use dyntomo::sinogram::Photons;

use crate::error::CliError;

pub const PRESETS: [(&str, &str); 3] = [
    ("stempo-static", include_str!("../presets/stempo-static.toml")),
    ("stempo-cont360", include_str!("../presets/stempo-cont360.toml")),
    ("stempo-seq8x45", include_str!("../presets/stempo-seq8x45.toml")),
];

pub fn preset_text(name: &str) -> Result<&'static str, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Config(format!("unknown preset {name:?}; known presets: {}", known.join(", ")))
        })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub scene: SceneConfig,
    pub motion: MotionConfig,
    pub geometry: GeometryConfig,
    pub schedule: ScheduleConfig,
    pub noise: NoiseConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Attenuation per mm of the plastic parts of the built-in phantom.
    pub mu_hdpe: f64,
    pub mu_pipe: f64,
    pub block_center_mm: Point,
    /// Replaces the built-in phantom when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub primitives: Option<Vec<Primitive>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moving: Option<usize>,
    /// Ground-truth grid size; defaults to twice the detector count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub supersample: usize,
    /// Ground-truth frame count; defaults to one per projection, or one
    /// for a static scene.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            mu_hdpe: 0.02,
            mu_pipe: 0.016,
            block_center_mm: [-21.54, 12.0],
            primitives: None,
            moving: None,
            n: None,
            supersample: 4,
            frames: None,
        }
    }
}

impl SceneConfig {
    pub fn phantom(&self) -> PhantomScene {
        match &self.primitives {
            Some(p) => PhantomScene { primitives: p.clone(), moving: self.moving },
            None => PhantomScene::stempo(self.mu_hdpe, self.mu_pipe, self.block_center_mm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MotionConfig(pub MotionProfile);

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig(MotionProfile::Static)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScheduleConfig(pub SamplingSchedule);

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig(SamplingSchedule::cont360())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub binning: usize,
    pub sod_mm: f64,
    pub sdd_mm: f64,
    pub rotation_sense: RotationSense,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { binning: 8, sod_mm: STEMPO_SOD_MM, sdd_mm: STEMPO_SDD_MM, rotation_sense: RotationSense::default() }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> dyntomo::Result<FanBeamGeometry> {
        let base = FanBeamGeometry::stempo(self.binning)?;
        Ok(FanBeamGeometry::new(self.sod_mm, self.sdd_mm, base.detector_count, base.detector_pitch_mm)?
            .with_rotation_sense(self.rotation_sense))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Unattenuated photon count per detector element; `inf` is noiseless.
    pub photons: f64,
    pub seed: u64,
    /// Also write the simulated raw intensities.
    pub write_intensities: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { photons: 1e5, seed: 7, write_intensities: false }
    }
}

impl NoiseConfig {
    pub fn photons(&self) -> dyntomo::Result<Photons> {
        Photons::from_count(self.photons)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpsStart {
    Zero,
    /// Every frame of `L` starts from the FBP of the whole sinogram.
    #[default]
    Fbp,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Reconstruction grid; defaults to the detector count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Defaults to the pitch that makes the grid span the detector width
    /// at the rotation axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixel_size_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_frame: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    pub fbp_filter: FbpFilter,
    pub lps_start: LpsStart,
    pub pdfp: PdfpConfig,
    pub lps: LpsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub previews: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { previews: true }
    }
}

const TAGS: [&str; 3] = ["kind", "type", "mode"];

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !TAGS.iter().any(|t| o.contains_key(*t)) => {
                merge(b, o)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn parse_error(origin: &str, text: &str, e: toml::de::Error) -> CliError {
    let at = e.span().map(|s| {
        let before = &text[..s.start.min(text.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
        format!(" at line {line}, column {col}")
    });
    CliError::Config(format!("{origin}{}: {}", at.unwrap_or_default(), e.message()))
}

impl RunConfig {
    /// Parses `text`, layering it over `preset` (or the preset it names).
    pub fn parse(text: &str, origin: &str, preset: Option<&str>) -> Result<Self, CliError> {
        // a first pass on the document alone so errors point into it
        let own: RunConfig = toml::from_str(text).map_err(|e| parse_error(origin, text, e))?;
        let name = preset.map(str::to_owned).or(own.preset.clone());
        let Some(name) = name else {
            return own.checked();
        };
        let base_text = preset_text(&name)?;
        let mut base: toml::Table = toml::from_str(base_text).map_err(|e| parse_error(&name, base_text, e))?;
        let over: toml::Table = toml::from_str(text).map_err(|e| parse_error(origin, text, e))?;
        merge(&mut base, over);
        base.insert("preset".into(), toml::Value::String(name.clone()));
        let merged: RunConfig = base.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("{origin}: {}", e.message())))?;
        merged.checked()
    }

    pub fn from_preset(name: &str) -> Result<Self, CliError> {
        Self::parse("", name, Some(name))
    }

    pub fn load(path: &std::path::Path, preset: Option<&str>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), preset)
    }

    fn checked(self) -> Result<Self, CliError> {
        self.motion.0.validate()?;
        self.schedule.0.validate()?;
        self.geometry.build()?;
        self.noise.photons()?;
        self.scene.phantom().validate()?;
        self.solver.pdfp.validate()?;
        self.solver.lps.validate()?;
        if self.scene.supersample == 0 {
            return Err(CliError::Config("scene.supersample must be >= 1".into()));
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
