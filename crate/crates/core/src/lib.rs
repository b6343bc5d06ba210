//! Dynamic fan-beam CT: geometry, a moving-block phantom, a matched
//! projector pair, sinogram handling and spatio-temporal reconstruction.

pub mod error;
pub mod geometry;
pub mod num;
pub mod phantom;
pub mod projector;
pub mod recon;
pub mod sinogram;
pub mod transforms;

pub use error::{Error, Result};
pub use geometry::{FanBeamGeometry, RotationSense, SamplingSchedule};
pub use num::Real;
pub use phantom::{GroundTruth, MotionProfile, PhantomScene, Primitive, Shape};
pub use projector::{BlockDiagonalOperator, FanBeamProjector, LinearOperator};
pub use sinogram::container::ImageStack;
pub use sinogram::{IntensityStack, Photons, Region, Sinogram};

pub type Sinogram64 = Sinogram<f64>;
pub type Sinogram32 = Sinogram<f32>;
pub type GroundTruth64 = GroundTruth<f64>;
pub type GroundTruth32 = GroundTruth<f32>;
pub type ImageStack64 = ImageStack<f64>;
pub type ImageStack32 = ImageStack<f32>;
