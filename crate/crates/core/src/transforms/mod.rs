//! Regularization toolbox: orthogonal wavelets, soft thresholding and
//! singular value thresholding.

pub mod svt;
pub mod threshold;
pub mod wavelet;

pub use svt::{nuclear_norm, svt, SvtOutput};
pub use threshold::{soft_threshold, soft_threshold_in_place};
pub use wavelet::{dwt_forward, dwt_inverse, CoefficientBlock, Subband, SubbandLayout, Wavelet, WaveletFamily, WaveletSpec};
