//! End-to-end codec: audio → quantizer input → codes → `TQC1` bytes, and back.
//!
//! Each channel is coded independently. Input is zero-padded to
//! `roundup(T + delay, stride)` samples, where `delay` is the filterbank group
//! delay in the subband modes and 0 in `seanet` mode, so decoding can trim the
//! output to exactly the original samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bitstream::{self, BitstreamHeader, HEADER_LEN};
use crate::config::{CodecConfig, Mode};
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::nn::{build_decoder, build_encoder, build_subband_graphs, Network, StreamSession, Tensor, WeightStore};
use crate::pqmf::{PqmfBank, StreamingSynthesizer, SubbandSignal};
use crate::quant::{
    fit_rsimvq, fit_rvq_kmeans, CodeSequence, Codebook, KMeansOptions, LatentSequence, Quantized,
    ResidualQuantizer, Stage, DEFAULT_RIDGE,
};
use crate::subband::{
    pqmf_direct_frames, subband_encode, unstack_frames, SubbandLayout, SubbandNetworks,
};

/// Encoder input samples per streaming chunk when running network encoders.
const ENCODE_CHUNK: usize = 1 << 14;

#[derive(Debug, Clone)]
enum Engine {
    Direct,
    Seanet { encoder: Network, decoder: Network },
    Subband(Box<SubbandNetworks>),
}

#[derive(Debug, Clone)]
pub struct Codec {
    cfg: CodecConfig,
    layout: Option<SubbandLayout>,
    bank: Option<PqmfBank>,
    engine: Engine,
    quantizer: Option<ResidualQuantizer>,
}

/// Seeded random weights for every network the mode uses.
pub fn random_weights(cfg: &CodecConfig, seed: u64) -> Result<WeightStore> {
    Ok(match cfg.mode {
        Mode::PqmfDirect => WeightStore::new(),
        Mode::Seanet => {
            let mut s = WeightStore::random(&build_encoder(cfg)?, seed);
            s.merge(WeightStore::random(&build_decoder(cfg)?, seed.wrapping_add(1)));
            s
        }
        Mode::SubbandSeanet => SubbandNetworks::random_weights(&build_subband_graphs(cfg)?, seed),
    })
}

/// Gaussian codebooks with geometrically shrinking scale, for network modes
/// run without fitted codebooks.
pub fn random_quantizer(dim: usize, stages: usize, size: usize, seed: u64) -> Result<ResidualQuantizer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stages = (0..stages)
        .map(|i| {
            let scale = 0.5f64.powi(i as i32);
            let entries = (0..size * dim)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    scale * v
                })
                .collect();
            Ok(Stage::Plain(Codebook::new(entries, size, dim)?))
        })
        .collect::<Result<_>>()?;
    ResidualQuantizer::new(stages)
}

impl Codec {
    /// `weights` default to seeded random weights. Without `codebooks`, the
    /// network modes use random codebooks and `pqmf_direct` refuses to code.
    pub fn new(
        cfg: CodecConfig,
        weights: Option<&WeightStore>,
        codebooks: Option<ResidualQuantizer>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let subband = cfg.mode != Mode::Seanet;
        let bank = if subband {
            Some(PqmfBank::design(cfg.pqmf_bands, cfg.pqmf_taps)?)
        } else {
            None
        };
        let layout = if subband { Some(SubbandLayout::from_config(&cfg)?) } else { None };
        let random;
        let weights = match weights {
            Some(w) => w,
            None => {
                random = random_weights(&cfg, seed)?;
                &random
            }
        };
        let engine = match cfg.mode {
            Mode::PqmfDirect => Engine::Direct,
            Mode::Seanet => Engine::Seanet {
                encoder: Network::new(&build_encoder(&cfg)?, weights)?,
                decoder: Network::new(&build_decoder(&cfg)?, weights)?,
            },
            Mode::SubbandSeanet => Engine::Subband(Box::new(SubbandNetworks::from_config(&cfg, weights)?)),
        };
        let quantizer = match codebooks {
            Some(q) => Some(Self::fit_quantizer(&cfg, q)?),
            None if cfg.mode == Mode::PqmfDirect => None,
            None => Some(random_quantizer(
                cfg.quantized_dim(),
                cfg.num_quantizers,
                cfg.codebook_size,
                seed ^ 0xc0de,
            )?),
        };
        Ok(Self {
            cfg,
            layout,
            bank,
            engine,
            quantizer,
        })
    }

    fn fit_quantizer(cfg: &CodecConfig, q: ResidualQuantizer) -> Result<ResidualQuantizer> {
        if q.dim() != cfg.quantized_dim() {
            return Err(Error::contract(format!(
                "codebooks are {}-dimensional, {} mode needs {}",
                q.dim(),
                cfg.mode.name(),
                cfg.quantized_dim()
            )));
        }
        if q.codebook_size() != cfg.codebook_size {
            return Err(Error::contract(format!(
                "codebooks have {} entries, config says {}",
                q.codebook_size(),
                cfg.codebook_size
            )));
        }
        if q.num_stages() < cfg.num_quantizers {
            return Err(Error::Config(format!(
                "codebook file has {} stages, {} requested",
                q.num_stages(),
                cfg.num_quantizers
            )));
        }
        q.truncated(cfg.num_quantizers)
    }

    pub fn config(&self) -> &CodecConfig {
        &self.cfg
    }

    pub fn quantizer(&self) -> Option<&ResidualQuantizer> {
        self.quantizer.as_ref()
    }

    fn require_quantizer(&self) -> Result<&ResidualQuantizer> {
        self.quantizer.as_ref().ok_or_else(|| {
            Error::State(format!(
                "{} mode needs fitted codebooks; create them with `tqcodec fit <corpus-dir> --mode {} --output <file>` and pass --codebooks",
                self.cfg.mode.name(),
                self.cfg.mode.name()
            ))
        })
    }

    /// Samples of algorithmic delay compensated on decode.
    pub fn delay(&self) -> usize {
        self.bank.as_ref().map_or(0, PqmfBank::group_delay)
    }

    pub fn padded_len(&self, samples: usize) -> usize {
        (samples + self.delay()).div_ceil(self.cfg.total_stride()) * self.cfg.total_stride()
    }

    pub fn frame_rate(&self) -> f64 {
        f64::from(self.cfg.sample_rate) / self.cfg.total_stride() as f64
    }

    /// Quantizer input for one channel: `padded_len(x.len()) / stride` frames.
    pub fn features(&self, x: &[f64]) -> Result<LatentSequence> {
        let mut padded = x.to_vec();
        padded.resize(self.padded_len(x.len()), 0.0);
        let sr = self.cfg.sample_rate;
        match &self.engine {
            Engine::Direct => pqmf_direct_frames(
                self.layout.as_ref().expect("subband layout"),
                self.bank.as_ref().expect("subband bank"),
                &AudioBuffer::mono(padded, sr)?,
                self.cfg.side_weight,
            ),
            Engine::Seanet { encoder, .. } => {
                let mut session = encoder.stream();
                let mut out = vec![Vec::new(); encoder.out_channels()];
                for (i, chunk) in padded.chunks(ENCODE_CHUNK).enumerate() {
                    let y = session.push(i * ENCODE_CHUNK, &[chunk.to_vec()])?;
                    for (o, c) in out.iter_mut().zip(y) {
                        o.extend(c);
                    }
                }
                Ok(LatentSequence::from_channels(&out, self.frame_rate()))
            }
            Engine::Subband(nets) => subband_encode(
                self.layout.as_ref().expect("subband layout"),
                self.bank.as_ref().expect("subband bank"),
                nets,
                &AudioBuffer::mono(padded, sr)?,
            ),
        }
    }

    pub fn quantize_channel(&self, x: &[f64]) -> Result<Quantized> {
        let rq = self.require_quantizer()?;
        let z = self.features(x)?;
        if !z.is_finite() {
            return Err(Error::Validation("encoder produced non-finite latents".into()));
        }
        rq.quantize(&z)
    }

    pub fn encode_channel(&self, x: &[f64]) -> Result<CodeSequence> {
        Ok(self.quantize_channel(x)?.codes)
    }

    /// Full padded reconstruction (`frames · stride` samples, still delayed).
    pub fn synthesize(&self, z: &LatentSequence) -> Result<Vec<f64>> {
        let sr = self.cfg.sample_rate;
        let bank = || self.bank.as_ref().expect("subband bank");
        let layout = || self.layout.as_ref().expect("subband layout");
        let y = match &self.engine {
            Engine::Direct => bank()
                .synthesize(&unstack_frames(&z.frames, layout(), self.cfg.side_weight)?, sr)?
                .into_channels()
                .remove(0),
            Engine::Seanet { decoder, .. } => decoder.forward(&z.to_channels())?.remove(0),
            Engine::Subband(nets) => crate::subband::subband_decode(layout(), bank(), nets, z)?
                .into_channels()
                .remove(0),
        };
        Ok(y)
    }

    /// Decodes one channel and trims it to `original_len` samples.
    pub fn decode_channel(&self, codes: &CodeSequence, original_len: usize) -> Result<Vec<f64>> {
        let rq = self.require_quantizer()?;
        let z = rq.dequantize(codes, self.frame_rate())?;
        let y = self.synthesize(&z)?;
        self.trim(y, original_len)
    }

    fn trim(&self, y: Vec<f64>, original_len: usize) -> Result<Vec<f64>> {
        let d = self.delay();
        if y.len() < d + original_len {
            return Err(Error::contract(format!(
                "stream holds {} samples, header claims {original_len} plus delay {d}",
                y.len()
            )));
        }
        Ok(y[d..d + original_len].to_vec())
    }

    fn check_input(&self, buf: &AudioBuffer) -> Result<()> {
        if buf.sample_rate() != self.cfg.sample_rate {
            return Err(Error::contract(format!(
                "input is {} Hz, codec runs at {} Hz; resample externally",
                buf.sample_rate(),
                self.cfg.sample_rate
            )));
        }
        if !buf.is_finite() {
            return Err(Error::Validation("input audio has non-finite samples".into()));
        }
        Ok(())
    }

    /// Encodes every channel (concurrently) into one `TQC1` stream.
    pub fn encode(&self, buf: &AudioBuffer) -> Result<Vec<u8>> {
        self.check_input(buf)?;
        self.require_quantizer()?;
        let codes = per_channel(buf.channels(), |x| self.encode_channel(x))?;
        let frames = self.padded_len(buf.len()) / self.cfg.total_stride();
        let header = BitstreamHeader::for_config(&self.cfg, buf.num_channels(), buf.len(), frames)?;
        bitstream::pack(&header, &codes)
    }

    fn check_header(&self, h: &BitstreamHeader) -> Result<()> {
        let c = &self.cfg;
        let mismatch = |what: &str, got: String, want: String| {
            Err(Error::contract(format!("stream {what} is {got}, codec is configured for {want}")))
        };
        if h.mode != c.mode {
            return mismatch("mode", h.mode.name().into(), c.mode.name().into());
        }
        if h.sample_rate != c.sample_rate {
            return mismatch("sample rate", h.sample_rate.to_string(), c.sample_rate.to_string());
        }
        if usize::from(h.num_quantizers) != c.num_quantizers {
            return mismatch("quantizer count", h.num_quantizers.to_string(), c.num_quantizers.to_string());
        }
        if u32::from(h.codebook_bits) != c.codebook_bits() {
            return mismatch("codebook bits", h.codebook_bits.to_string(), c.codebook_bits().to_string());
        }
        if usize::from(h.total_stride) != c.total_stride() {
            return mismatch("stride", h.total_stride.to_string(), c.total_stride().to_string());
        }
        if h.frame_count as usize * c.total_stride() < self.delay() + h.original_length as usize {
            return Err(Error::contract("stream has too few frames for its original length"));
        }
        Ok(())
    }

    pub fn decode(&self, bytes: &[u8]) -> Result<AudioBuffer> {
        let (header, codes) = bitstream::unpack(bytes)?;
        self.check_header(&header)?;
        let n = header.original_length as usize;
        let channels = per_channel(&codes, |c| self.decode_channel(c, n))?;
        AudioBuffer::new(channels, header.sample_rate)
    }

    /// Decodes by feeding `chunk_frames` frames at a time through a
    /// [`StreamingDecoder`] per channel.
    pub fn decode_streaming(&self, bytes: &[u8], chunk_frames: usize) -> Result<AudioBuffer> {
        if chunk_frames == 0 {
            return Err(Error::contract("streaming chunk must hold at least one frame"));
        }
        let (header, codes) = bitstream::unpack(bytes)?;
        self.check_header(&header)?;
        let n = header.original_length as usize;
        let channels = per_channel(&codes, |c| {
            let mut dec = self.streaming_decoder()?;
            let mut y = Vec::with_capacity(c.len() * self.cfg.total_stride());
            for chunk in c.indices.chunks(chunk_frames) {
                y.extend(dec.push(chunk)?);
            }
            self.trim(y, n)
        })?;
        AudioBuffer::new(channels, header.sample_rate)
    }

    pub fn streaming_decoder(&self) -> Result<StreamingDecoder<'_>> {
        let rq = self.require_quantizer()?;
        let state = match &self.engine {
            Engine::Direct => StreamState::Direct {
                synth: StreamingSynthesizer::new(self.bank.as_ref().expect("subband bank")),
            },
            Engine::Seanet { decoder, .. } => StreamState::Seanet { decoder: decoder.stream() },
            Engine::Subband(nets) => StreamState::Subband {
                core: nets.core_decoder.stream(),
                sides: nets.side_decoders.iter().map(Network::stream).collect(),
                synth: StreamingSynthesizer::new(self.bank.as_ref().expect("subband bank")),
            },
        };
        Ok(StreamingDecoder {
            codec: self,
            rq,
            state,
            frames: 0,
        })
    }

    /// Per-channel encode statistics for `buf`.
    pub fn report(&self, buf: &AudioBuffer, stream: &[u8]) -> EncodeReport {
        let frames = self.padded_len(buf.len()) / self.cfg.total_stride();
        EncodeReport {
            channels: buf.num_channels(),
            samples: buf.len(),
            frames,
            stream_bytes: stream.len(),
            nominal_bps: bitstream::bitrate_for(&self.cfg),
            measured_bps: measured_bitrate(stream.len(), buf.num_channels(), buf.len(), self.cfg.sample_rate),
        }
    }
}

/// Per-channel payload bits divided by the audio duration.
pub fn measured_bitrate(stream_bytes: usize, channels: usize, samples: usize, sample_rate: u32) -> f64 {
    let secs = samples as f64 / f64::from(sample_rate);
    if secs == 0.0 || channels == 0 {
        return 0.0;
    }
    (stream_bytes.saturating_sub(HEADER_LEN) * 8) as f64 / channels as f64 / secs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodeReport {
    pub channels: usize,
    pub samples: usize,
    pub frames: usize,
    pub stream_bytes: usize,
    pub nominal_bps: u64,
    pub measured_bps: f64,
}

/// Runs `f` on every channel, one scoped thread per channel when there are
/// several.
fn per_channel<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    if items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|x| s.spawn(|| f(x))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("channel worker panicked"))
            .collect()
    })
}

enum StreamState<'a> {
    Direct {
        synth: StreamingSynthesizer<'a>,
    },
    Seanet {
        decoder: StreamSession<'a>,
    },
    Subband {
        core: StreamSession<'a>,
        sides: Vec<StreamSession<'a>>,
        synth: StreamingSynthesizer<'a>,
    },
}

/// Chunk-by-chunk decoder for one channel. Output samples are final as soon
/// as they are returned; concatenated, they equal the offline reconstruction.
pub struct StreamingDecoder<'a> {
    codec: &'a Codec,
    rq: &'a ResidualQuantizer,
    state: StreamState<'a>,
    frames: usize,
}

impl StreamingDecoder<'_> {
    /// Frames consumed so far.
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Decodes the next frames (`Nq` indices each) into `stride` samples per frame.
    pub fn push(&mut self, frames: &[Vec<u16>]) -> Result<Vec<f64>> {
        if frames.is_empty() {
            return Ok(Vec::new());
        }
        let codes = CodeSequence::new(frames.to_vec(), self.rq.num_stages(), self.rq.codebook_size())?;
        let z = self.rq.dequantize(&codes, self.codec.frame_rate())?;
        let start = self.frames;
        self.frames += frames.len();
        let cfg = &self.codec.cfg;
        match &mut self.state {
            StreamState::Direct { synth } => {
                let layout = self.codec.layout.as_ref().expect("subband layout");
                let sb = unstack_frames(&z.frames, layout, cfg.side_weight)?;
                Ok(synth_blocks(synth, &sb))
            }
            StreamState::Seanet { decoder } => Ok(decoder.push(start, &z.to_channels())?.remove(0)),
            StreamState::Subband { core, sides, synth } => {
                let layout = self.codec.layout.as_ref().expect("subband layout");
                let parts = z.split(&layout.latent_dims())?;
                let mut bands = core.push(start, &parts[0].to_channels())?;
                for (s, p) in sides.iter_mut().zip(&parts[1..]) {
                    bands.extend(s.push(start, &p.to_channels())?);
                }
                let sb = SubbandSignal {
                    bands,
                    sample_rate_per_band: f64::from(cfg.sample_rate) / layout.bands as f64,
                };
                Ok(synth_blocks(synth, &sb))
            }
        }
    }
}

fn synth_blocks(synth: &mut StreamingSynthesizer<'_>, sb: &SubbandSignal) -> Vec<f64> {
    let m = sb.num_bands();
    let mut out = vec![0.0; sb.band_len() * m];
    for b in 0..sb.band_len() {
        let column: Vec<f64> = sb.bands.iter().map(|band| band[b]).collect();
        synth.push_block(&column, &mut out[b * m..(b + 1) * m]);
    }
    out
}

/// Codebook fitting settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub kmeans: KMeansOptions,
    /// Fit SimVQ stages instead of plain k-means codebooks.
    pub simvq: bool,
    pub ridge: f64,
    /// Evenly subsample the training frames down to this many (0 = all).
    pub max_vectors: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            kmeans: KMeansOptions::default(),
            simvq: false,
            ridge: DEFAULT_RIDGE,
            max_vectors: 0,
        }
    }
}

/// Quantizer input frames of every channel of every corpus file.
pub fn training_frames(codec: &Codec, corpus: &[AudioBuffer]) -> Result<Vec<Vec<f64>>> {
    let mut frames = Vec::new();
    for buf in corpus {
        codec.check_input(buf)?;
        for c in buf.channels() {
            frames.extend(codec.features(c)?.frames);
        }
    }
    Ok(frames)
}

/// Fits `cfg.num_quantizers` stages of `cfg.codebook_size` entries on the
/// quantizer inputs that `cfg`'s mode produces for `corpus`.
pub fn fit_codebooks(
    cfg: &CodecConfig,
    weights: Option<&WeightStore>,
    corpus: &[AudioBuffer],
    opts: &FitOptions,
) -> Result<ResidualQuantizer> {
    let codec = Codec::new(cfg.clone(), weights, None, opts.kmeans.seed)?;
    let mut frames = training_frames(&codec, corpus)?;
    let k = cfg.codebook_size;
    if frames.len() < k {
        let min_secs = (k * cfg.total_stride()) as f64 / f64::from(cfg.sample_rate);
        return Err(Error::Fitting(format!(
            "corpus yields {} frames but {k} codebook entries need at least {k} (about {min_secs:.3} s of audio)",
            frames.len()
        )));
    }
    if opts.max_vectors > 0 && frames.len() > opts.max_vectors {
        let n = frames.len();
        frames = (0..opts.max_vectors).map(|i| frames[i * n / opts.max_vectors].clone()).collect();
    }
    if opts.simvq {
        fit_rsimvq(&frames, cfg.num_quantizers, k, &opts.kmeans, opts.ridge)
    } else {
        fit_rvq_kmeans(&frames, cfg.num_quantizers, k, &opts.kmeans)
    }
}

const META_MODE: &str = "meta.mode";
const META_SIDE_WEIGHT: &str = "meta.side_weight";

/// Quantizer tensors plus the mode and side weight they were fitted for.
pub fn codebook_store(rq: &ResidualQuantizer, cfg: &CodecConfig) -> WeightStore {
    let mut store = rq.to_store();
    store.insert(META_MODE, Tensor::from_f64(vec![1], &[f64::from(cfg.mode.to_byte())]).expect("scalar"));
    store.insert(META_SIDE_WEIGHT, Tensor::from_f64(vec![1], &[cfg.side_weight]).expect("scalar"));
    store
}

/// Loads codebooks, checking their metadata (when present) against `cfg`.
pub fn codebooks_from_store(store: &WeightStore, cfg: &CodecConfig) -> Result<ResidualQuantizer> {
    if let Some(t) = store.get(META_MODE) {
        let byte = t.data.first().copied().unwrap_or(-1.0);
        let mode = Mode::from_byte(byte as u8).filter(|_| byte >= 0.0);
        if mode != Some(cfg.mode) {
            return Err(Error::Config(format!(
                "codebooks were fitted for {} mode, config is {}",
                mode.map_or("an unknown", Mode::name),
                cfg.mode.name()
            )));
        }
    }
    if let Some(t) = store.get(META_SIDE_WEIGHT) {
        let w = t.data.first().copied().map(f64::from).unwrap_or(f64::NAN);
        if cfg.mode == Mode::PqmfDirect && (w - cfg.side_weight).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "codebooks were fitted with side_weight {w}, config has {}",
                cfg.side_weight
            )));
        }
    }
    ResidualQuantizer::from_store(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn small(mode: Mode) -> CodecConfig {
        CodecConfig {
            mode,
            codebook_size: 16,
            num_quantizers: 3,
            ..CodecConfig::default()
        }
    }

    #[test]
    fn lengths_round_trip_in_every_mode() {
        let x = fixtures::music(0.1, 44_100, 1);
        for mode in [Mode::Seanet, Mode::PqmfDirect, Mode::SubbandSeanet] {
            let cfg = small(mode);
            let q = (mode == Mode::PqmfDirect)
                .then(|| random_quantizer(64, 3, 16, 1).unwrap());
            let codec = Codec::new(cfg, None, q, 9).unwrap();
            let bytes = codec.encode(&x).unwrap();
            let y = codec.decode(&bytes).unwrap();
            assert_eq!(y.len(), x.len(), "{mode:?}");
            assert!(y.is_finite());
            let s = codec.decode_streaming(&bytes, 3).unwrap();
            let diff = y
                .channel(0)
                .iter()
                .zip(s.channel(0))
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff <= 1e-5, "{mode:?} {diff}");
        }
    }

    #[test]
    fn direct_mode_without_codebooks_is_a_state_error() {
        let codec = Codec::new(small(Mode::PqmfDirect), None, None, 0).unwrap();
        let err = codec.encode(&fixtures::sine(1000, 440.0, 0.5, 44_100)).unwrap_err();
        assert!(matches!(err, Error::State(_)));
        assert!(err.to_string().contains("tqcodec fit"));
    }

    #[test]
    fn network_encoder_chunking_matches_forward() {
        let cfg = small(Mode::Seanet);
        let weights = random_weights(&cfg, 4).unwrap();
        let codec = Codec::new(cfg.clone(), Some(&weights), None, 4).unwrap();
        let x = fixtures::music(0.5, 44_100, 3);
        let mut padded = x.channel(0).to_vec();
        padded.resize(codec.padded_len(x.len()), 0.0);
        let enc = Network::new(&build_encoder(&cfg).unwrap(), &weights).unwrap();
        let direct = enc.forward(&[padded]).unwrap();
        assert_eq!(codec.features(x.channel(0)).unwrap().to_channels(), direct);
    }

    #[test]
    fn insufficient_corpus_names_duration() {
        let cfg = CodecConfig::with_mode(Mode::PqmfDirect);
        let err = fit_codebooks(&cfg, None, &[fixtures::sine(4410, 440.0, 0.5, 44_100)], &FitOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Fitting(_)));
        assert!(err.to_string().contains("0.743 s"), "{err}");
    }

    #[test]
    fn codebook_metadata_is_checked() {
        let cfg = small(Mode::PqmfDirect);
        let rq = random_quantizer(64, 3, 16, 2).unwrap();
        let store = codebook_store(&rq, &cfg);
        assert_eq!(codebooks_from_store(&store, &cfg).unwrap().num_stages(), 3);
        let other = CodecConfig { side_weight: 1.0, ..cfg.clone() };
        assert!(matches!(codebooks_from_store(&store, &other), Err(Error::Config(_))));
        let seanet = CodecConfig { mode: Mode::Seanet, ..cfg };
        assert!(matches!(codebooks_from_store(&store, &seanet), Err(Error::Config(_))));
    }

    #[test]
    fn stereo_channels_are_independent() {
        let cfg = small(Mode::PqmfDirect);
        let q = random_quantizer(64, 3, 16, 2).unwrap();
        let codec = Codec::new(cfg, None, Some(q), 0).unwrap();
        let st = fixtures::stereo_music(0.1, 44_100, 5);
        let y = codec.decode(&codec.encode(&st).unwrap()).unwrap();
        for c in 0..2 {
            let mono = AudioBuffer::mono(st.channel(c).to_vec(), 44_100).unwrap();
            let ym = codec.decode(&codec.encode(&mono).unwrap()).unwrap();
            assert_eq!(ym.channel(0), y.channel(c));
        }
    }
}
