//! Reverse-process network: autodiff tape, denoiser, training and decoding.

pub mod checkpoint;
pub mod decode;
pub mod denoiser;
pub mod gradcheck;
pub mod graph;
pub mod tensor;
pub mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use decode::{decode, decode_shots, decode_shots_from, Decoded, DEFAULT_CHAINS};
pub use denoiser::{DenoiserConfig, DenoiserOutput, DenoiserParams};
pub use tensor::Tensor;
pub use train::{train, training_loss, Adam, RoundSet, TrainConfig, TrainReport};
