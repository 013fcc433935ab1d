use serde::Serialize;

use crate::config::CodecConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conv1d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl Conv1d {
    /// Zeros inserted before the signal. Output `t` reads inputs
    /// `t·stride − pad .. t·stride − pad + (kernel−1)·dilation`, which ends on
    /// the last sample of block `t`.
    pub fn left_pad(&self) -> usize {
        (self.kernel - 1) * self.dilation + 1 - self.stride
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        in_len.div_ceil(self.stride)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvTranspose1d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvTranspose1d {
    /// Earlier input frames that still overlap the first output of a new frame.
    pub fn history(&self) -> usize {
        (self.kernel - 1) / self.stride
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lstm {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Adds the layer input to the LSTM output (requires `input == hidden`).
    pub skip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type")]
pub enum Layer {
    Conv1d(Conv1d),
    ConvTranspose1d(ConvTranspose1d),
    Lstm(Lstm),
    Elu,
    Tanh,
    /// `y = x + f(x)` where `f` is the nested sequence.
    Residual { layers: Vec<Layer> },
}

impl Layer {
    pub fn conv(name: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Layer::Conv1d(Conv1d {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            dilation: 1,
        })
    }

    pub fn conv_strided(
        name: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Layer::Conv1d(Conv1d {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride,
            dilation: 1,
        })
    }

    pub fn conv_dilated(
        name: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
    ) -> Self {
        Layer::Conv1d(Conv1d {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            dilation,
        })
    }

    pub fn conv_transpose(
        name: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Layer::ConvTranspose1d(ConvTranspose1d {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride,
        })
    }

    pub fn lstm(name: impl Into<String>, channels: usize, layers: usize) -> Self {
        Layer::Lstm(Lstm {
            name: name.into(),
            input: channels,
            hidden: channels,
            layers,
            skip: true,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "Conv1d",
            Layer::ConvTranspose1d(_) => "ConvTranspose1d",
            Layer::Lstm(_) => "Lstm",
            Layer::Elu => "Elu",
            Layer::Tanh => "Tanh",
            Layer::Residual { .. } => "Residual",
        }
    }

    pub fn name(&self) -> String {
        match self {
            Layer::Conv1d(c) => c.name.clone(),
            Layer::ConvTranspose1d(c) => c.name.clone(),
            Layer::Lstm(l) => l.name.clone(),
            Layer::Elu => "elu".into(),
            Layer::Tanh => "tanh".into(),
            Layer::Residual { layers } => {
                let inner: Vec<String> = layers
                    .iter()
                    .filter(|l| !matches!(l, Layer::Elu | Layer::Tanh))
                    .map(Layer::name)
                    .collect();
                format!("residual[{}]", inner.join(", "))
            }
        }
    }

    /// Output channel count given the input channel count.
    fn out_channels(&self, input: usize) -> usize {
        match self {
            Layer::Conv1d(c) => c.out_ch,
            Layer::ConvTranspose1d(c) => c.out_ch,
            Layer::Lstm(l) => l.hidden,
            Layer::Elu | Layer::Tanh | Layer::Residual { .. } => input,
        }
    }

    fn validate(&self, input: usize, path: &str) -> Result<usize> {
        let mismatch = |expected: usize| {
            Err(Error::contract(format!(
                "{path}: layer expects {expected} input channels, previous layer gives {input}"
            )))
        };
        match self {
            Layer::Conv1d(c) => {
                if c.in_ch != input {
                    return mismatch(c.in_ch);
                }
                if c.out_ch == 0 || c.kernel == 0 || c.stride == 0 || c.dilation == 0 {
                    return Err(Error::contract(format!("{path}: zero-sized conv parameter")));
                }
                if (c.kernel - 1) * c.dilation + 1 < c.stride {
                    return Err(Error::contract(format!(
                        "{path}: conv span shorter than its stride"
                    )));
                }
            }
            Layer::ConvTranspose1d(c) => {
                if c.in_ch != input {
                    return mismatch(c.in_ch);
                }
                if c.out_ch == 0 || c.stride == 0 || c.kernel < c.stride {
                    return Err(Error::contract(format!(
                        "{path}: transposed conv needs kernel >= stride > 0"
                    )));
                }
            }
            Layer::Lstm(l) => {
                if l.input != input {
                    return mismatch(l.input);
                }
                if l.hidden == 0 || l.layers == 0 {
                    return Err(Error::contract(format!("{path}: empty LSTM")));
                }
                if l.skip && l.input != l.hidden {
                    return Err(Error::contract(format!(
                        "{path}: LSTM skip connection needs input == hidden"
                    )));
                }
            }
            Layer::Elu | Layer::Tanh => {}
            Layer::Residual { layers } => {
                let mut ch = input;
                for (i, l) in layers.iter().enumerate() {
                    ch = l.validate(ch, &format!("{path}.{i}"))?;
                }
                if ch != input {
                    return Err(Error::contract(format!(
                        "{path}: residual branch maps {input} channels to {ch}"
                    )));
                }
                let (down, up) = stride_product(layers);
                if down != up {
                    return Err(Error::contract(format!(
                        "{path}: residual branch changes the frame rate"
                    )));
                }
            }
        }
        Ok(self.out_channels(input))
    }
}

fn stride_product(layers: &[Layer]) -> (usize, usize) {
    let mut down = 1;
    let mut up = 1;
    for l in layers {
        match l {
            Layer::Conv1d(c) => down *= c.stride,
            Layer::ConvTranspose1d(c) => up *= c.stride,
            Layer::Residual { layers } => {
                let (d, u) = stride_product(layers);
                down *= d;
                up *= u;
            }
            _ => {}
        }
    }
    (down, up)
}

/// An ordered layer stack. `input_stride` is the number of audio samples per
/// input step (1 for waveform-in graphs, the frame hop for latent-in graphs).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkGraph {
    pub name: String,
    pub in_channels: usize,
    pub input_stride: usize,
    pub layers: Vec<Layer>,
}

impl NetworkGraph {
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        input_stride: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let g = Self {
            name: name.into(),
            in_channels,
            input_stride,
            layers,
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks channel agreement between every pair of adjacent layers.
    pub fn validate(&self) -> Result<usize> {
        if self.in_channels == 0 || self.input_stride == 0 {
            return Err(Error::contract("graph needs positive input channels and stride"));
        }
        let mut ch = self.in_channels;
        for (i, l) in self.layers.iter().enumerate() {
            ch = l.validate(ch, &format!("{}[{i}]", self.name))?;
        }
        Ok(ch)
    }

    pub fn out_channels(&self) -> usize {
        self.layers
            .iter()
            .fold(self.in_channels, |ch, l| l.out_channels(ch))
    }

    /// Product of downsampling strides over product of upsampling strides, as a
    /// reduced `(down, up)` pair.
    pub fn rate_change(&self) -> (usize, usize) {
        let (d, u) = stride_product(&self.layers);
        let g = gcd(d, u);
        (d / g, u / g)
    }

    pub fn total_stride(&self) -> usize {
        self.rate_change().0
    }

    pub fn total_upsampling(&self) -> usize {
        self.rate_change().1
    }

    /// Output length for an input of `in_len` steps.
    pub fn output_len(&self, in_len: usize) -> usize {
        fn walk(layers: &[Layer], mut len: usize) -> usize {
            for l in layers {
                len = match l {
                    Layer::Conv1d(c) => c.out_len(len),
                    Layer::ConvTranspose1d(c) => len * c.stride,
                    Layer::Residual { layers } => walk(layers, len),
                    _ => len,
                };
            }
            len
        }
        walk(&self.layers, in_len)
    }

    pub fn has_lstm(&self) -> bool {
        fn any(layers: &[Layer]) -> bool {
            layers.iter().any(|l| match l {
                Layer::Lstm(_) => true,
                Layer::Residual { layers } => any(layers),
                _ => false,
            })
        }
        any(&self.layers)
    }

    /// Every parameterized layer, depth first.
    pub fn parameterized_layers(&self) -> Vec<&Layer> {
        fn collect<'a>(layers: &'a [Layer], out: &mut Vec<&'a Layer>) {
            for l in layers {
                match l {
                    Layer::Conv1d(_) | Layer::ConvTranspose1d(_) | Layer::Lstm(_) => out.push(l),
                    Layer::Residual { layers } => collect(layers, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        collect(&self.layers, &mut out);
        out
    }

    /// Runs `self` then `next` as one graph.
    pub fn then(&self, next: &NetworkGraph, name: impl Into<String>) -> Result<NetworkGraph> {
        if self.out_channels() != next.in_channels {
            return Err(Error::contract(format!(
                "cannot chain {} ({} channels out) into {} ({} channels in)",
                self.name,
                self.out_channels(),
                next.name,
                next.in_channels
            )));
        }
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        NetworkGraph::new(name, self.in_channels, self.input_stride, layers)
    }

    /// The same topology with LSTM layers removed: the convolutional path.
    pub fn without_lstm(&self) -> NetworkGraph {
        fn strip(layers: &[Layer]) -> Vec<Layer> {
            layers
                .iter()
                .filter(|l| !matches!(l, Layer::Lstm(_)))
                .map(|l| match l {
                    Layer::Residual { layers } => Layer::Residual {
                        layers: strip(layers),
                    },
                    other => other.clone(),
                })
                .collect()
        }
        NetworkGraph {
            name: self.name.clone(),
            in_channels: self.in_channels,
            input_stride: self.input_stride,
            layers: strip(&self.layers),
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Options for one SEANet stack.
#[derive(Debug, Clone)]
pub struct SeanetSpec {
    pub prefix: String,
    pub channels: usize,
    pub width: usize,
    pub latent: usize,
    /// Encoder order; the decoder applies them reversed.
    pub strides: Vec<usize>,
    pub lstm: bool,
    /// Residual branch hidden width is `channels / res_hidden_div`.
    pub res_hidden_div: usize,
    pub input_stride: usize,
}

fn residual_unit(prefix: &str, ch: usize, hidden_div: usize) -> Layer {
    let hidden = (ch / hidden_div).max(1);
    Layer::Residual {
        layers: vec![
            Layer::Elu,
            Layer::conv(format!("{prefix}.res.conv1"), ch, hidden, 3),
            Layer::Elu,
            Layer::conv(format!("{prefix}.res.conv2"), hidden, ch, 1),
        ],
    }
}

/// Conv(k7) → per stride: residual unit, ELU, strided conv doubling channels →
/// optional LSTM → ELU → Conv(k7) to the latent width.
pub fn seanet_encoder(spec: &SeanetSpec) -> Result<NetworkGraph> {
    let p = &spec.prefix;
    let mut layers = vec![Layer::conv(format!("{p}.conv_in"), spec.channels, spec.width, 7)];
    let mut ch = spec.width;
    for (i, &s) in spec.strides.iter().enumerate() {
        layers.push(residual_unit(&format!("{p}.block{i}"), ch, spec.res_hidden_div));
        layers.push(Layer::Elu);
        layers.push(Layer::conv_strided(format!("{p}.block{i}.down"), ch, 2 * ch, 2 * s, s));
        ch *= 2;
    }
    if spec.lstm {
        layers.push(Layer::lstm(format!("{p}.lstm"), ch, 1));
    }
    layers.push(Layer::Elu);
    layers.push(Layer::conv(format!("{p}.conv_out"), ch, spec.latent, 7));
    NetworkGraph::new(p.clone(), spec.channels, spec.input_stride, layers)
}

/// Conv(k7) from the latent → optional LSTM → per reversed stride: ELU,
/// transposed conv, residual unit → ELU → Conv(k7) → tanh. The width stays at
/// `width` and halves only in the last block.
pub fn seanet_decoder(spec: &SeanetSpec) -> Result<NetworkGraph> {
    let p = &spec.prefix;
    let mut layers = vec![Layer::conv(format!("{p}.conv_in"), spec.latent, spec.width, 7)];
    if spec.lstm {
        layers.push(Layer::lstm(format!("{p}.lstm"), spec.width, 1));
    }
    let mut ch = spec.width;
    let n = spec.strides.len();
    for (i, &s) in spec.strides.iter().rev().enumerate() {
        let out = if i + 1 == n { (ch / 2).max(1) } else { ch };
        layers.push(Layer::Elu);
        layers.push(Layer::conv_transpose(format!("{p}.block{i}.up"), ch, out, 2 * s, s));
        layers.push(residual_unit(&format!("{p}.block{i}"), out, spec.res_hidden_div));
        ch = out;
    }
    layers.push(Layer::Elu);
    layers.push(Layer::conv(format!("{p}.conv_out"), ch, spec.channels, 7));
    layers.push(Layer::Tanh);
    NetworkGraph::new(p.clone(), spec.latent, spec.input_stride, layers)
}

fn fullband_spec(cfg: &CodecConfig, prefix: &str, width: usize, hidden_div: usize) -> SeanetSpec {
    SeanetSpec {
        prefix: prefix.into(),
        channels: 1,
        width,
        latent: cfg.latent_dim,
        strides: cfg.strides.clone(),
        lstm: true,
        res_hidden_div: hidden_div,
        input_stride: 1,
    }
}

/// Full-band waveform encoder.
pub fn build_encoder(cfg: &CodecConfig) -> Result<NetworkGraph> {
    seanet_encoder(&fullband_spec(cfg, "encoder", cfg.encoder_dim, 2))
}

/// Full-band waveform decoder. Residual branches keep the full channel width.
pub fn build_decoder(cfg: &CodecConfig) -> Result<NetworkGraph> {
    let mut spec = fullband_spec(cfg, "decoder", cfg.decoder_dim, 1);
    spec.input_stride = cfg.strides.iter().product();
    seanet_decoder(&spec)
}

/// Encoder followed by decoder, with the quantizer treated as identity.
pub fn build_end_to_end(cfg: &CodecConfig) -> Result<NetworkGraph> {
    build_encoder(cfg)?.then(&build_decoder(cfg)?, "codec")
}

/// Subband-mode networks: one core pair and one pair per side band.
#[derive(Debug, Clone)]
pub struct SubbandGraphs {
    pub core_encoder: NetworkGraph,
    pub core_decoder: NetworkGraph,
    pub side_encoders: Vec<NetworkGraph>,
    pub side_decoders: Vec<NetworkGraph>,
}

pub fn build_subband_graphs(cfg: &CodecConfig) -> Result<SubbandGraphs> {
    let band_stride = cfg.pqmf_bands;
    let frame_stride = cfg.total_stride();
    let core = |prefix: &str, width: usize, div: usize, stride: usize| SeanetSpec {
        prefix: prefix.into(),
        channels: cfg.core_bands,
        width,
        latent: cfg.latent_dim,
        strides: cfg.subband_strides.clone(),
        lstm: true,
        res_hidden_div: div,
        input_stride: stride,
    };
    let side = |prefix: String, width: usize, div: usize, stride: usize| SeanetSpec {
        prefix,
        channels: 1,
        width,
        latent: cfg.side_band_latent,
        strides: cfg.subband_strides.clone(),
        lstm: false,
        res_hidden_div: div,
        input_stride: stride,
    };
    let d = cfg.side_width_divisor;
    let sides = cfg.core_bands..cfg.pqmf_bands;
    Ok(SubbandGraphs {
        core_encoder: seanet_encoder(&core("core.encoder", cfg.encoder_dim, 2, band_stride))?,
        core_decoder: seanet_decoder(&core("core.decoder", cfg.decoder_dim, 1, frame_stride))?,
        side_encoders: sides
            .clone()
            .map(|b| {
                seanet_encoder(&side(format!("side{b}.encoder"), cfg.encoder_dim / d, 2, band_stride))
            })
            .collect::<Result<_>>()?,
        side_decoders: sides
            .map(|b| {
                seanet_decoder(&side(format!("side{b}.decoder"), cfg.decoder_dim / d, 1, frame_stride))
            })
            .collect::<Result<_>>()?,
    })
}

/// Topology of a DAC-style codec (dilated residual units with kernel 7,
/// strides `[2, 4, 8, 8]`, decoder width 1536) for budget comparisons. This is a
/// reconstruction from the published architecture description, not the
/// original model.
pub fn dac_like_encoder() -> Result<NetworkGraph> {
    let mut ch = 64;
    let mut layers = vec![Layer::conv("dac.encoder.conv_in", 1, ch, 7)];
    for (i, &s) in [2usize, 4, 8, 8].iter().enumerate() {
        for (u, &d) in [1usize, 3, 9].iter().enumerate() {
            layers.push(dac_unit(&format!("dac.encoder.block{i}.unit{u}"), ch, d));
        }
        layers.push(Layer::Elu);
        layers.push(Layer::conv_strided(format!("dac.encoder.block{i}.down"), ch, 2 * ch, 2 * s, s));
        ch *= 2;
    }
    layers.push(Layer::Elu);
    layers.push(Layer::conv("dac.encoder.conv_out", ch, 1024, 3));
    NetworkGraph::new("dac.encoder", 1, 1, layers)
}

pub fn dac_like_decoder() -> Result<NetworkGraph> {
    let mut ch = 1536;
    let mut layers = vec![Layer::conv("dac.decoder.conv_in", 1024, ch, 7)];
    for (i, &s) in [8usize, 8, 4, 2].iter().enumerate() {
        layers.push(Layer::Elu);
        layers.push(Layer::conv_transpose(format!("dac.decoder.block{i}.up"), ch, ch / 2, 2 * s, s));
        ch /= 2;
        for (u, &d) in [1usize, 3, 9].iter().enumerate() {
            layers.push(dac_unit(&format!("dac.decoder.block{i}.unit{u}"), ch, d));
        }
    }
    layers.push(Layer::Elu);
    layers.push(Layer::conv("dac.decoder.conv_out", ch, 1, 7));
    layers.push(Layer::Tanh);
    NetworkGraph::new("dac.decoder", 1024, 512, layers)
}

pub fn dac_like_end_to_end() -> Result<NetworkGraph> {
    dac_like_encoder()?.then(&dac_like_decoder()?, "dac")
}

fn dac_unit(prefix: &str, ch: usize, dilation: usize) -> Layer {
    Layer::Residual {
        layers: vec![
            Layer::Elu,
            Layer::conv_dilated(format!("{prefix}.conv1"), ch, ch, 7, dilation),
            Layer::Elu,
            Layer::conv(format!("{prefix}.conv2"), ch, ch, 1),
        ],
    }
}
