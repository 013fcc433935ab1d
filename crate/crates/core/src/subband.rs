//! Subband composition: PQMF bands routed to a core network (lowest bands,
//! stacked as channels) and one small side network per upper band, with the
//! latents concatenated for joint quantization. Also the network-free
//! `pqmf_direct` framing, which quantizes stacked subband samples directly.

use crate::config::CodecConfig;
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::nn::{build_subband_graphs, Network, SubbandGraphs, WeightStore};
use crate::pqmf::{PqmfBank, SubbandSignal};
use crate::quant::{CodeSequence, LatentSequence, Quantized, ResidualQuantizer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubbandLayout {
    pub bands: usize,
    pub core_bands: usize,
    pub core_latent_dim: usize,
    pub side_latent_dim: usize,
    /// Subband samples per latent frame (product of the subband strides).
    pub frame_len: usize,
    pub sample_rate: u32,
}

impl SubbandLayout {
    pub fn from_config(cfg: &CodecConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            bands: cfg.pqmf_bands,
            core_bands: cfg.core_bands,
            core_latent_dim: cfg.latent_dim,
            side_latent_dim: cfg.side_band_latent,
            frame_len: cfg.subband_frame_len(),
            sample_rate: cfg.sample_rate,
        })
    }

    pub fn side_bands(&self) -> usize {
        self.bands - self.core_bands
    }

    pub fn total_latent(&self) -> usize {
        self.core_latent_dim + self.side_bands() * self.side_latent_dim
    }

    /// Latent widths in concatenation order: core, then side bands ascending.
    pub fn latent_dims(&self) -> Vec<usize> {
        std::iter::once(self.core_latent_dim)
            .chain(std::iter::repeat_n(self.side_latent_dim, self.side_bands()))
            .collect()
    }

    /// Waveform samples per latent frame.
    pub fn frame_stride(&self) -> usize {
        self.bands * self.frame_len
    }

    pub fn frame_rate(&self) -> f64 {
        f64::from(self.sample_rate) / self.frame_stride() as f64
    }

    /// Frames produced for `samples` input samples.
    pub fn frames_for(&self, samples: usize) -> usize {
        samples.div_ceil(self.bands).div_ceil(self.frame_len)
    }

    /// Dimension of a stacked `pqmf_direct` frame.
    pub fn direct_dim(&self) -> usize {
        self.bands * self.frame_len
    }

    fn check_bank(&self, bank: &PqmfBank) -> Result<()> {
        if bank.num_bands() != self.bands {
            return Err(Error::contract(format!(
                "filterbank has {} bands, layout expects {}",
                bank.num_bands(),
                self.bands
            )));
        }
        Ok(())
    }
}

/// Core and side networks bound to weights.
#[derive(Debug, Clone)]
pub struct SubbandNetworks {
    pub core_encoder: Network,
    pub core_decoder: Network,
    pub side_encoders: Vec<Network>,
    pub side_decoders: Vec<Network>,
}

impl SubbandNetworks {
    pub fn new(graphs: &SubbandGraphs, weights: &WeightStore) -> Result<Self> {
        let bind = |gs: &[crate::nn::NetworkGraph]| -> Result<Vec<Network>> {
            gs.iter().map(|g| Network::new(g, weights)).collect()
        };
        Ok(Self {
            core_encoder: Network::new(&graphs.core_encoder, weights)?,
            core_decoder: Network::new(&graphs.core_decoder, weights)?,
            side_encoders: bind(&graphs.side_encoders)?,
            side_decoders: bind(&graphs.side_decoders)?,
        })
    }

    /// Seeded random weights for every subband graph, in one store.
    pub fn random_weights(graphs: &SubbandGraphs, seed: u64) -> WeightStore {
        let mut store = WeightStore::new();
        let all = [&graphs.core_encoder, &graphs.core_decoder]
            .into_iter()
            .chain(&graphs.side_encoders)
            .chain(&graphs.side_decoders);
        for (i, g) in all.enumerate() {
            store.merge(WeightStore::random(g, seed.wrapping_add(i as u64)));
        }
        store
    }

    pub fn from_config(cfg: &CodecConfig, weights: &WeightStore) -> Result<Self> {
        Self::new(&build_subband_graphs(cfg)?, weights)
    }
}

/// PQMF analysis, core network on bands `0..core_bands`, one side network per
/// remaining band, then concatenation.
pub fn subband_encode(
    layout: &SubbandLayout,
    bank: &PqmfBank,
    nets: &SubbandNetworks,
    buf: &AudioBuffer,
) -> Result<LatentSequence> {
    layout.check_bank(bank)?;
    check_nets(layout, nets)?;
    let sb = bank.analyze(buf)?;
    let frame_rate = layout.frame_rate();
    let mut parts = vec![LatentSequence::from_channels(
        &nets.core_encoder.forward(&sb.bands[..layout.core_bands])?,
        frame_rate,
    )];
    for (net, band) in nets.side_encoders.iter().zip(&sb.bands[layout.core_bands..]) {
        parts.push(LatentSequence::from_channels(
            &net.forward(std::slice::from_ref(band))?,
            frame_rate,
        ));
    }
    LatentSequence::concat(&parts)
}

/// Splits the latent, decodes every band and resynthesizes. The output has
/// `frames · frame_stride` samples, delayed by the filterbank group delay.
pub fn subband_decode(
    layout: &SubbandLayout,
    bank: &PqmfBank,
    nets: &SubbandNetworks,
    z: &LatentSequence,
) -> Result<AudioBuffer> {
    layout.check_bank(bank)?;
    check_nets(layout, nets)?;
    if z.dim != layout.total_latent() {
        return Err(Error::contract(format!(
            "latent has {} dims, layout needs {}",
            z.dim,
            layout.total_latent()
        )));
    }
    let parts = z.split(&layout.latent_dims())?;
    let mut bands = nets.core_decoder.forward(&parts[0].to_channels())?;
    for (net, part) in nets.side_decoders.iter().zip(&parts[1..]) {
        bands.extend(net.forward(&part.to_channels())?);
    }
    bank.synthesize(
        &SubbandSignal {
            bands,
            sample_rate_per_band: f64::from(layout.sample_rate) / layout.bands as f64,
        },
        layout.sample_rate,
    )
}

fn check_nets(layout: &SubbandLayout, nets: &SubbandNetworks) -> Result<()> {
    let sides = layout.side_bands();
    if nets.side_encoders.len() != sides || nets.side_decoders.len() != sides {
        return Err(Error::contract(format!("layout has {sides} side bands, networks do not match")));
    }
    if nets.core_encoder.in_channels() != layout.core_bands || nets.core_decoder.out_channels() != layout.core_bands {
        return Err(Error::contract(format!("core networks must carry {} bands", layout.core_bands)));
    }
    Ok(())
}

/// Stacks `frame_len` consecutive samples of every band into one vector
/// (band-major), multiplying side bands by `side_weight`. Bands are
/// zero-extended to a whole number of frames.
pub fn stack_frames(sb: &SubbandSignal, layout: &SubbandLayout, side_weight: f64) -> Result<Vec<Vec<f64>>> {
    if sb.num_bands() != layout.bands {
        return Err(Error::contract(format!("expected {} bands, got {}", layout.bands, sb.num_bands())));
    }
    let l = layout.frame_len;
    let frames = sb.band_len().div_ceil(l);
    Ok((0..frames)
        .map(|f| {
            let mut v = Vec::with_capacity(layout.direct_dim());
            for (b, band) in sb.bands.iter().enumerate() {
                let w = if b < layout.core_bands { 1.0 } else { side_weight };
                v.extend((f * l..(f + 1) * l).map(|i| band.get(i).map_or(0.0, |s| s * w)));
            }
            v
        })
        .collect())
}

/// Inverse of [`stack_frames`]: bands of `frames · frame_len` samples.
pub fn unstack_frames(frames: &[Vec<f64>], layout: &SubbandLayout, side_weight: f64) -> Result<SubbandSignal> {
    let l = layout.frame_len;
    if frames.iter().any(|f| f.len() != layout.direct_dim()) {
        return Err(Error::contract(format!("frames must have {} values", layout.direct_dim())));
    }
    let bands = (0..layout.bands)
        .map(|b| {
            let w = if b < layout.core_bands { 1.0 } else { side_weight };
            frames.iter().flat_map(|f| f[b * l..(b + 1) * l].iter().map(move |v| v / w)).collect()
        })
        .collect();
    Ok(SubbandSignal {
        bands,
        sample_rate_per_band: f64::from(layout.sample_rate) / layout.bands as f64,
    })
}

/// Quantizer input of the `pqmf_direct` mode for one mono signal.
pub fn pqmf_direct_frames(
    layout: &SubbandLayout,
    bank: &PqmfBank,
    buf: &AudioBuffer,
    side_weight: f64,
) -> Result<LatentSequence> {
    layout.check_bank(bank)?;
    let frames = stack_frames(&bank.analyze(buf)?, layout, side_weight)?;
    LatentSequence::new(frames, layout.direct_dim(), layout.frame_rate())
}

pub fn pqmf_direct_encode(
    layout: &SubbandLayout,
    bank: &PqmfBank,
    rq: &ResidualQuantizer,
    buf: &AudioBuffer,
    side_weight: f64,
) -> Result<Quantized> {
    if rq.dim() != layout.direct_dim() {
        return Err(Error::contract(format!(
            "quantizer dimension {} does not match the {}-value subband frame",
            rq.dim(),
            layout.direct_dim()
        )));
    }
    rq.quantize(&pqmf_direct_frames(layout, bank, buf, side_weight)?)
}

/// Dequantizes, unstacks and resynthesizes; output is delayed by the
/// filterbank group delay and spans `frames · frame_stride` samples.
pub fn pqmf_direct_decode(
    layout: &SubbandLayout,
    bank: &PqmfBank,
    rq: &ResidualQuantizer,
    codes: &CodeSequence,
    side_weight: f64,
) -> Result<AudioBuffer> {
    layout.check_bank(bank)?;
    let z = rq.dequantize(codes, layout.frame_rate())?;
    bank.synthesize(&unstack_frames(&z.frames, layout, side_weight)?, layout.sample_rate)
}
