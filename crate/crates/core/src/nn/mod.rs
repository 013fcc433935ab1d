//! Layer graphs, weights, and offline/streaming forward passes for the
//! causal convolutional encoder and decoder.

pub mod forward;
pub mod graph;
pub mod streaming;
pub mod weights;

pub use forward::{Network, Signal};
pub use graph::{
    build_decoder, build_encoder, build_end_to_end, build_subband_graphs, dac_like_decoder,
    dac_like_encoder, dac_like_end_to_end, seanet_decoder, seanet_encoder, Conv1d,
    ConvTranspose1d, Layer, Lstm, NetworkGraph, SeanetSpec, SubbandGraphs,
};
pub use streaming::StreamSession;
pub use weights::{Tensor, WeightStore};
