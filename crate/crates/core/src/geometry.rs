//! Fan-beam acquisition geometry and angular sampling schedules.
//!
//! Angles are measured counter-clockwise from the +x axis of a right-handed
//! image frame whose origin is the rotation center. A source at angle θ sits
//! at `sod · (cos θ, sin θ)`; the flat detector is centered on the opposite
//! side of the origin and perpendicular to the central ray.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical detector element width before binning, mm.
pub const BASE_PIXEL_MM: f64 = 0.05;
/// Unbinned detector columns.
pub const FULL_DETECTOR_COLUMNS: usize = 2240;
/// Flat-region size (rows, columns) used to estimate the open-beam intensity
/// at binning 1.
pub const FLAT_REGION_UNBINNED: (usize, usize) = (384, 224);
pub const STEMPO_SOD_MM: f64 = 410.66;
pub const STEMPO_SDD_MM: f64 = 553.74;
pub const SUPPORTED_BINNING: [usize; 6] = [1, 2, 4, 8, 16, 32];

pub fn check_binning(binning: usize) -> Result<()> {
    if SUPPORTED_BINNING.contains(&binning) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "unsupported binning factor {binning}; expected one of {SUPPORTED_BINNING:?}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RotationSense {
    #[default]
    CounterClockwise,
    Clockwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanBeamGeometry {
    pub sod_mm: f64,
    pub sdd_mm: f64,
    pub detector_count: usize,
    pub detector_pitch_mm: f64,
    #[serde(default)]
    pub rotation_sense: RotationSense,
}

impl FanBeamGeometry {
    pub fn new(sod_mm: f64, sdd_mm: f64, detector_count: usize, detector_pitch_mm: f64) -> Result<Self> {
        let g = Self {
            sod_mm,
            sdd_mm,
            detector_count,
            detector_pitch_mm,
            rotation_sense: RotationSense::CounterClockwise,
        };
        g.validate()?;
        Ok(g)
    }

    /// Scanner geometry at the given binning factor: `2240 / binning`
    /// elements of width `0.05 · binning` mm.
    pub fn stempo(binning: usize) -> Result<Self> {
        check_binning(binning)?;
        Self::new(
            STEMPO_SOD_MM,
            STEMPO_SDD_MM,
            FULL_DETECTOR_COLUMNS / binning,
            BASE_PIXEL_MM * binning as f64,
        )
    }

    pub fn with_rotation_sense(mut self, sense: RotationSense) -> Self {
        self.rotation_sense = sense;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.sod_mm.is_finite() && self.sdd_mm.is_finite() && self.detector_pitch_mm.is_finite();
        if !finite || self.sod_mm <= 0.0 || self.sdd_mm <= self.sod_mm {
            return Err(Error::Config(format!(
                "need sdd_mm > sod_mm > 0, got sod_mm={} sdd_mm={}",
                self.sod_mm, self.sdd_mm
            )));
        }
        if self.detector_count == 0 || self.detector_pitch_mm <= 0.0 {
            return Err(Error::Config(format!(
                "need detector_count >= 1 and detector_pitch_mm > 0, got {} and {}",
                self.detector_count, self.detector_pitch_mm
            )));
        }
        Ok(())
    }

    pub fn magnification(&self) -> f64 {
        self.sdd_mm / self.sod_mm
    }

    /// Width of a binned detector element projected onto the plane through
    /// the rotation center.
    pub fn effective_pixel_size(&self, binning: usize) -> Result<f64> {
        check_binning(binning)?;
        Ok(BASE_PIXEL_MM * binning as f64 / self.magnification())
    }

    /// Detector element pitch projected onto the rotation-center plane.
    pub fn pitch_at_origin(&self) -> f64 {
        self.detector_pitch_mm / self.magnification()
    }

    /// Detector width projected onto the rotation-center plane.
    pub fn width_at_origin(&self) -> f64 {
        self.detector_count as f64 * self.pitch_at_origin()
    }

    /// Pixel size that makes an `n × n` grid span the detector width at the
    /// origin plane. Equals [`pitch_at_origin`](Self::pitch_at_origin) when
    /// `n == detector_count`.
    pub fn fov_pixel_size(&self, n: usize) -> f64 {
        self.width_at_origin() / n as f64
    }

    /// Radius of the disk around the rotation center that every ray fan
    /// covers completely.
    pub fn field_of_view_radius(&self) -> f64 {
        let half = 0.5 * self.detector_count as f64 * self.detector_pitch_mm;
        self.sod_mm * (half / self.sdd_mm).atan().sin()
    }

    /// Lateral offset of element `j`'s center on the physical detector line.
    #[inline]
    pub fn detector_offset(&self, j: usize) -> f64 {
        (j as f64 - (self.detector_count as f64 - 1.0) / 2.0) * self.detector_pitch_mm
    }

    /// Source position angle in radians for a schedule angle in degrees.
    pub fn source_angle_rad(&self, angle_deg: f64) -> f64 {
        let a = angle_deg.to_radians();
        match self.rotation_sense {
            RotationSense::CounterClockwise => a,
            RotationSense::Clockwise => -a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingSchedule {
    Continuous { n_proj: usize, step_deg: f64 },
    Sequential { n_proj: usize, step_deg: f64, rotations: usize },
    Custom { angles_deg: Vec<f64> },
}

impl SamplingSchedule {
    /// 360 projections at 1° spacing, one rotation.
    pub fn cont360() -> Self {
        SamplingSchedule::Continuous { n_proj: 360, step_deg: 1.0 }
    }

    /// 360 projections at 8° spacing, eight rotations.
    pub fn seq8x45() -> Self {
        SamplingSchedule::Sequential { n_proj: 360, step_deg: 8.0, rotations: 8 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplingSchedule::Continuous { n_proj, step_deg } => {
                if *n_proj == 0 || !step_deg.is_finite() {
                    return Err(Error::Config("continuous schedule needs n_proj >= 1 and a finite step".into()));
                }
            }
            SamplingSchedule::Sequential { n_proj, step_deg, rotations } => {
                if *n_proj == 0 || *rotations == 0 || !step_deg.is_finite() {
                    return Err(Error::Config(
                        "sequential schedule needs n_proj >= 1, rotations >= 1 and a finite step".into(),
                    ));
                }
            }
            SamplingSchedule::Custom { angles_deg } => {
                if angles_deg.is_empty() || angles_deg.iter().any(|a| !a.is_finite()) {
                    return Err(Error::Config("custom schedule needs a non-empty list of finite angles".into()));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        match self {
            SamplingSchedule::Continuous { n_proj, .. } | SamplingSchedule::Sequential { n_proj, .. } => *n_proj,
            SamplingSchedule::Custom { angles_deg } => angles_deg.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Angle of projection `i` in degrees, normalized to `[0, 360)`.
    pub fn angle_of(&self, i: usize) -> Result<f64> {
        let len = self.len();
        if i >= len {
            return Err(Error::ScheduleBounds { index: i, len });
        }
        let raw = match self {
            SamplingSchedule::Continuous { step_deg, .. } | SamplingSchedule::Sequential { step_deg, .. } => {
                i as f64 * step_deg
            }
            SamplingSchedule::Custom { angles_deg } => angles_deg[i],
        };
        Ok(normalize_deg(raw))
    }

    pub fn angles_deg(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.angle_of(i).unwrap()).collect()
    }
}

pub fn normalize_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn angle_examples() {
        assert_eq!(SamplingSchedule::cont360().angle_of(0).unwrap(), 0.0);
        let seq = SamplingSchedule::seq8x45();
        assert_eq!(seq.angle_of(45).unwrap(), 0.0);
        assert_eq!(seq.angle_of(359).unwrap(), 352.0);
        assert!(matches!(seq.angle_of(360), Err(Error::ScheduleBounds { index: 360, len: 360 })));
    }

    #[test]
    fn field_of_view_is_edge_ray_distance() {
        let g = FanBeamGeometry::stempo(8).unwrap();
        // distance from the origin to the line through the source and the
        // outer edge of the last detector element
        let (sx, sy) = (g.sod_mm, 0.0);
        let (dx, dy) = (g.sod_mm - g.sdd_mm, 0.5 * g.detector_count as f64 * g.detector_pitch_mm);
        let dist = ((dx - sx) * sy - (dy - sy) * sx).abs() / ((dx - sx).powi(2) + (dy - sy).powi(2)).sqrt();
        assert_relative_eq!(g.field_of_view_radius(), dist, max_relative = 1e-12);
        assert!(g.field_of_view_radius() > 40.0);
    }

    #[test]
    fn custom_angles_are_normalized() {
        let s = SamplingSchedule::Custom { angles_deg: vec![-90.0, 720.5] };
        assert_eq!(s.angle_of(0).unwrap(), 270.0);
        assert_eq!(s.angle_of(1).unwrap(), 0.5);
        assert!(SamplingSchedule::Custom { angles_deg: vec![] }.validate().is_err());
    }

    #[test]
    fn sequential_is_periodic_in_45() {
        let seq = SamplingSchedule::seq8x45();
        for i in 0..315 {
            assert_eq!(seq.angle_of(i).unwrap(), seq.angle_of(i + 45).unwrap());
        }
    }

    #[test]
    fn magnification_examples() {
        let g = FanBeamGeometry::stempo(8).unwrap();
        assert_relative_eq!(g.magnification(), 553.74 / 410.66, epsilon = 1e-15);
        assert_relative_eq!(g.magnification(), 1.348414, epsilon = 1e-6);
        let unit = FanBeamGeometry::new(1.0, 2.0, 10, 0.1).unwrap();
        assert_eq!(unit.magnification(), 2.0);
        let thin = FanBeamGeometry::new(5.0, 5.0 + 1e-9, 10, 0.1).unwrap();
        assert_relative_eq!(thin.magnification(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn effective_pixel_size_examples() {
        let g = FanBeamGeometry::stempo(8).unwrap();
        let p8 = g.effective_pixel_size(8).unwrap();
        assert_relative_eq!(p8, 0.4 / (553.74 / 410.66), epsilon = 1e-15);
        assert_relative_eq!(p8, 0.29665, epsilon = 1e-5);
        assert_relative_eq!(g.effective_pixel_size(4).unwrap(), 2.0 * g.effective_pixel_size(2).unwrap(), epsilon = 1e-15);
        let thin = FanBeamGeometry::new(5.0, 5.0 + 1e-9, 10, 0.05).unwrap();
        assert_relative_eq!(thin.effective_pixel_size(1).unwrap(), 0.05, epsilon = 1e-9);
        assert!(matches!(g.effective_pixel_size(3), Err(Error::Config(_))));
    }

    #[test]
    fn detector_width_matches_binning() {
        for b in [4, 8, 16, 32] {
            let g = FanBeamGeometry::stempo(b).unwrap();
            assert_eq!(g.detector_count, 2240 / b);
            let width = g.detector_count as f64 * g.effective_pixel_size(b).unwrap();
            assert_relative_eq!(width, g.width_at_origin(), epsilon = 1e-12);
            assert_relative_eq!(g.fov_pixel_size(g.detector_count), g.effective_pixel_size(b).unwrap(), epsilon = 1e-15);
        }
    }

    #[test]
    fn effective_pixel_decreases_with_magnification() {
        let mut last = f64::INFINITY;
        for sdd in [420.0, 500.0, 553.74, 700.0, 1000.0] {
            let g = FanBeamGeometry::new(410.66, sdd, 280, 0.4).unwrap();
            let p = g.effective_pixel_size(8).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(FanBeamGeometry::new(500.0, 400.0, 10, 0.1).is_err());
        assert!(FanBeamGeometry::new(0.0, 400.0, 10, 0.1).is_err());
        assert!(FanBeamGeometry::new(100.0, 400.0, 0, 0.1).is_err());
        assert!(FanBeamGeometry::new(100.0, 400.0, 10, 0.0).is_err());
    }

    #[test]
    fn detector_offsets_are_symmetric() {
        let g = FanBeamGeometry::new(1.0, 2.0, 4, 1.0).unwrap();
        let offs: Vec<_> = (0..4).map(|j| g.detector_offset(j)).collect();
        assert_eq!(offs, vec![-1.5, -0.5, 0.5, 1.5]);
    }

    #[test]
    fn schedule_serializes_with_type_tag() {
        let s = toml::to_string(&SamplingSchedule::seq8x45()).unwrap();
        assert!(s.contains("type = \"sequential\""));
        let back: SamplingSchedule = toml::from_str(&s).unwrap();
        assert_eq!(back, SamplingSchedule::seq8x45());
    }
}
