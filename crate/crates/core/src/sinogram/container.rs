//! DTOMO1 container: a TOML header next to a raw little-endian payload.
//!
//! The header at `path` names its payload file (by default
//! `<file name>.raw` in the same directory). Payloads are row-major:
//! sinograms projection-major (`P × D`), stacks frame-major
//! (`T × N × N` or `P × rows × cols`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FanBeamGeometry, SamplingSchedule};
use crate::num::Real;
use crate::phantom::{GroundTruth, Point};
use crate::sinogram::{IntensityStack, Region, Sinogram};

pub const MAGIC: &str = "DTOMO1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Sinogram,
    ImageStack,
    IntensityStack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub magic: String,
    pub kind: PayloadKind,
    pub element_type: String,
    pub dims: Vec<usize>,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binning: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_size_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_map: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_centers_mm: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<FanBeamGeometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<SamplingSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat_region: Option<Region>,
}

impl Header {
    fn new<T: Real>(kind: PayloadKind, dims: Vec<usize>, path: &Path) -> Self {
        Header {
            magic: MAGIC.into(),
            kind,
            element_type: T::DTYPE.into(),
            dims,
            payload: payload_name(path),
            label: None,
            binning: None,
            pixel_size_mm: None,
            signal_row: None,
            frame_map: None,
            frame_times: None,
            block_centers_mm: None,
            geometry: None,
            schedule: None,
            flat_region: None,
        }
    }
}

/// A stack of square images with optional provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack<T> {
    pub n: usize,
    pub n_frames: usize,
    pub pixel_size_mm: f64,
    pub frames: Vec<T>,
    pub label: Option<String>,
    /// Mean ground-truth time index seen by each frame.
    pub frame_times: Option<Vec<f64>>,
    pub block_centers_mm: Option<Vec<Point>>,
}

impl<T: Real> ImageStack<T> {
    pub fn frame(&self, t: usize) -> &[T] {
        &self.frames[t * self.n * self.n..(t + 1) * self.n * self.n]
    }
}

impl<T: Real> From<&GroundTruth<T>> for ImageStack<T> {
    fn from(gt: &GroundTruth<T>) -> Self {
        ImageStack {
            n: gt.n,
            n_frames: gt.n_frames,
            pixel_size_mm: gt.pixel_size_mm,
            frames: gt.frames.clone(),
            label: Some("ground_truth".into()),
            frame_times: None,
            block_centers_mm: Some(gt.block_centers_mm.clone()),
        }
    }
}

fn payload_name(path: &Path) -> String {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{name}.raw")
}

fn encode<T: Real>(values: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * T::BYTES);
    for &v in values {
        v.write_le(&mut out);
    }
    out
}

fn decode<T: Real>(bytes: &[u8], element_type: &str, path: &Path) -> Result<Vec<T>> {
    match element_type {
        "f64le" => Ok(bytes.chunks_exact(8).map(|c| T::of(f64::read_le(c))).collect()),
        "f32le" => Ok(bytes.chunks_exact(4).map(|c| T::of(f32::read_le(c) as f64)).collect()),
        other => Err(Error::container(path, format!("unsupported element type {other:?}"))),
    }
}

fn element_width(element_type: &str) -> usize {
    if element_type == "f32le" {
        4
    } else {
        8
    }
}

fn write_pair<T: Real>(path: &Path, header: &Header, values: &[T]) -> Result<()> {
    let text = toml::to_string(header).map_err(|e| Error::container(path, e.to_string()))?;
    let payload = path.with_file_name(&header.payload);
    fs::write(&payload, encode(values)).map_err(|e| Error::io(&payload, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads and checks the header only.
pub fn read_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: Header = toml::from_str(&text).map_err(|e| Error::container(path, e.to_string()))?;
    if header.magic != MAGIC {
        return Err(Error::container(path, format!("bad magic {:?}", header.magic)));
    }
    Ok(header)
}

fn read_pair<T: Real>(path: &Path, kind: PayloadKind) -> Result<(Header, Vec<T>)> {
    let header = read_header(path)?;
    if header.kind != kind {
        return Err(Error::container(path, format!("expected {kind:?} payload, found {:?}", header.kind)));
    }
    let payload: PathBuf = path.with_file_name(&header.payload);
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    let count: usize = header.dims.iter().product();
    if bytes.len() != count * element_width(&header.element_type) {
        return Err(Error::container(
            path,
            format!("payload has {} bytes, dims {:?} need {}", bytes.len(), header.dims, count * element_width(&header.element_type)),
        ));
    }
    let values = decode(&bytes, &header.element_type, path)?;
    Ok((header, values))
}

fn required<V>(v: Option<V>, path: &Path, key: &str) -> Result<V> {
    v.ok_or_else(|| Error::container(path, format!("missing header key {key}")))
}

pub fn save_sinogram<T: Real>(path: &Path, s: &Sinogram<T>) -> Result<()> {
    let mut h = Header::new::<T>(PayloadKind::Sinogram, vec![s.n_proj(), s.n_det()], path);
    h.binning = Some(s.binning);
    h.geometry = Some(s.geometry.clone());
    h.schedule = Some(s.schedule.clone());
    h.frame_map = s.frame_of_projection.clone();
    write_pair(path, &h, &s.data)
}

pub fn load_sinogram<T: Real>(path: &Path) -> Result<Sinogram<T>> {
    let (h, data) = read_pair::<T>(path, PayloadKind::Sinogram)?;
    let s = Sinogram {
        data,
        geometry: required(h.geometry, path, "geometry")?,
        schedule: required(h.schedule, path, "schedule")?,
        binning: required(h.binning, path, "binning")?,
        frame_of_projection: h.frame_map,
    };
    if h.dims != [s.n_proj(), s.n_det()] {
        return Err(Error::container(path, format!("dims {:?} disagree with geometry and schedule", h.dims)));
    }
    s.validate().map_err(|e| Error::container(path, e.to_string()))?;
    Ok(s)
}

pub fn save_image_stack<T: Real>(path: &Path, s: &ImageStack<T>) -> Result<()> {
    let mut h = Header::new::<T>(PayloadKind::ImageStack, vec![s.n_frames, s.n, s.n], path);
    h.pixel_size_mm = Some(s.pixel_size_mm);
    h.label = s.label.clone();
    h.frame_times = s.frame_times.clone();
    h.block_centers_mm = s.block_centers_mm.clone();
    write_pair(path, &h, &s.frames)
}

pub fn load_image_stack<T: Real>(path: &Path) -> Result<ImageStack<T>> {
    let (h, frames) = read_pair::<T>(path, PayloadKind::ImageStack)?;
    if h.dims.len() != 3 || h.dims[1] != h.dims[2] {
        return Err(Error::container(path, format!("image stack dims must be [T, N, N], got {:?}", h.dims)));
    }
    Ok(ImageStack {
        n: h.dims[1],
        n_frames: h.dims[0],
        pixel_size_mm: required(h.pixel_size_mm, path, "pixel_size_mm")?,
        frames,
        label: h.label,
        frame_times: h.frame_times,
        block_centers_mm: h.block_centers_mm,
    })
}

pub fn save_intensity_stack<T: Real>(path: &Path, s: &IntensityStack<T>) -> Result<()> {
    let mut h = Header::new::<T>(PayloadKind::IntensityStack, vec![s.n_proj, s.rows, s.cols], path);
    h.flat_region = Some(s.flat_region);
    h.signal_row = Some(s.signal_row);
    write_pair(path, &h, &s.data)
}

pub fn load_intensity_stack<T: Real>(path: &Path) -> Result<IntensityStack<T>> {
    let (h, data) = read_pair::<T>(path, PayloadKind::IntensityStack)?;
    if h.dims.len() != 3 {
        return Err(Error::container(path, format!("intensity dims must be [P, rows, cols], got {:?}", h.dims)));
    }
    IntensityStack::new(
        h.dims[0],
        h.dims[1],
        h.dims[2],
        data,
        required(h.flat_region, path, "flat_region")?,
        required(h.signal_row, path, "signal_row")?,
    )
    .map_err(|e| Error::container(path, e.to_string()))
}
