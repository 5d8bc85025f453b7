//! Discrete-diffusion decoding for rotated surface-code memory experiments.

pub mod analysis;
pub mod baselines;
pub mod bits;
pub mod code;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod nn;
pub mod noise;
pub mod par;
pub mod rng;

pub use bits::{BinaryMatrix, BitVector};
pub use code::{ObservableMode, PauliKind, SurfaceCode};
pub use diffusion::NoiseSchedule;
pub use error::{Error, Result};
pub use noise::{NoiseModel, Sample, SyndromeHistory};
