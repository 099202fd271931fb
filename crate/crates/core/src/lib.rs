//! Dictionary-based out-of-focus deblurring: learned restoration filters
//! indexed by patch eigenstructure, no-reference sharpness scoring, and
//! sharpness-guided blending of candidate restorations.

pub mod blending;
pub mod error;
pub mod filterbank;
pub mod image;
pub mod inference;
pub mod io;
pub mod kernel;
pub mod learning;
pub mod metrics;
pub mod sharpness;
pub mod structure_tensor;
pub mod synth;

pub use error::{DeblurError, Result};
pub use filterbank::FilterBank;
pub use image::Image;
pub use kernel::{box_kernel, convolve, degrade, gaussian_kernel, BlurKernel, KernelSpec, NoiseSpec};
