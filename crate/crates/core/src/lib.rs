//! High-bitrate music codec built around a 16-band PQMF filterbank, SEANet-style
//! convolutional encoder/decoder, residual (Sim)VQ quantization and a fixed-rate
//! bitstream, plus the quality metrics and compute-budget analysis used to
//! evaluate it.

pub mod analyzer;
pub mod bitstream;
pub mod codec;
pub mod config;
pub mod dsp;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod nn;
pub mod pqmf;
pub mod quant;
pub mod subband;

pub use config::{CodecConfig, Mode};
pub use error::{Error, ErrorClass, Result};
