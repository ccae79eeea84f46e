//! LTE-style turbo codes with log-MAP / max-log-MAP BCJR decoding, the
//! TinyTurbo weighted iterative decoder, and a trainer that learns its weights
//! by backpropagating through the unrolled decoder.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common case.
//!
//! Conventions used throughout: bit 0 is sent as -1 and bit 1 as +1, every LLR
//! is `log P(1) / P(0)`, and the hard decision is `1{L > 0}`.

pub mod channel;
pub mod codec;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod interleave;
pub mod scalar;
pub mod siso;
pub mod train;
pub mod trellis;

pub use channel::{demap, snr_to_sigma, ChannelKind, ChannelSpec};
pub use codec::{CodeSpec, CodedFrame, Puncture, TrellisKind, TurboCode};
pub use decoder::{tinyturbo_preset, turbo_decode, WeightScheme};
pub use error::{Error, Result};
pub use interleave::{lte_qpp, qpp, Permutation};
pub use scalar::Real;
pub use siso::SisoAlgorithm;
pub use train::{Loss, TrainConfig};
pub use trellis::{lte_trellis, turbo757_trellis, RscSpec, Trellis};

pub type LlrFrame = channel::LlrFrame<f64>;
pub type LlrFrame32 = channel::LlrFrame<f32>;
pub type WeightSet = decoder::WeightSet<f64>;
pub type WeightSet32 = decoder::WeightSet<f32>;
pub type DecodeConfig = decoder::DecodeConfig<f64>;
pub type DecodeConfig32 = decoder::DecodeConfig<f32>;
pub type DecodeOutput = decoder::DecodeOutput<f64>;
pub type SisoOutput = siso::SisoOutput<f64>;
pub type TrainReport = train::TrainReport<f64>;
pub type TrainReport32 = train::TrainReport<f32>;
