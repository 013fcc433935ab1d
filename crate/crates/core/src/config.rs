use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How audio reaches the quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full-band SEANet encoder/decoder on the waveform.
    Seanet,
    /// PQMF subband frames quantized directly (no networks).
    PqmfDirect,
    /// PQMF bands routed through a core network and small side networks.
    SubbandSeanet,
}

impl Mode {
    pub fn to_byte(self) -> u8 {
        match self {
            Mode::Seanet => 0,
            Mode::PqmfDirect => 1,
            Mode::SubbandSeanet => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Mode::Seanet),
            1 => Some(Mode::PqmfDirect),
            2 => Some(Mode::SubbandSeanet),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Seanet => "seanet",
            Mode::PqmfDirect => "pqmf_direct",
            Mode::SubbandSeanet => "subband_seanet",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seanet" => Ok(Mode::Seanet),
            "pqmf_direct" | "pqmf-direct" => Ok(Mode::PqmfDirect),
            "subband_seanet" | "subband-seanet" | "subband" => Ok(Mode::SubbandSeanet),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// The single source of truth for stride, bitrate, compute and layout arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub sample_rate: u32,
    /// Full-band encoder downsampling factors, applied in order.
    pub strides: Vec<usize>,
    pub encoder_dim: usize,
    pub latent_dim: usize,
    pub decoder_dim: usize,
    pub num_quantizers: usize,
    pub codebook_size: usize,
    pub mode: Mode,
    pub side_band_latent: usize,
    pub core_bands: usize,
    pub pqmf_bands: usize,
    pub pqmf_taps: usize,
    /// Downsampling factors of the core and side networks (subband modes).
    pub subband_strides: Vec<usize>,
    /// Side bands are multiplied by this before quantization in `pqmf_direct` mode.
    pub side_weight: f64,
    /// Side networks use `1 / side_width_divisor` of the core channel widths.
    pub side_width_divisor: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44_100,
            strides: vec![2, 4, 8],
            encoder_dim: 64,
            latent_dim: 128,
            decoder_dim: 128,
            num_quantizers: 5,
            codebook_size: 512,
            mode: Mode::Seanet,
            side_band_latent: 6,
            core_bands: 12,
            pqmf_bands: 16,
            pqmf_taps: 481,
            subband_strides: vec![2, 2],
            side_weight: 0.5,
            side_width_divisor: 8,
        }
    }
}

impl CodecConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.strides.is_empty() || self.strides.contains(&0) {
            return bad("strides must be a nonempty list of positive factors");
        }
        if self.subband_strides.is_empty() || self.subband_strides.contains(&0) {
            return bad("subband_strides must be a nonempty list of positive factors");
        }
        if !self.codebook_size.is_power_of_two() || self.codebook_size < 2 {
            return bad("codebook_size must be a power of two >= 2");
        }
        if self.codebook_bits() > 16 {
            return bad("codebook_size above 2^16 is not supported by the bitstream");
        }
        if self.num_quantizers == 0 || self.num_quantizers > 255 {
            return bad("num_quantizers must be in 1..=255");
        }
        if self.encoder_dim == 0 || self.latent_dim == 0 || self.decoder_dim < 2 {
            return bad("network dimensions must be positive (decoder_dim >= 2)");
        }
        if self.pqmf_bands < 2 || !self.pqmf_bands.is_power_of_two() {
            return bad("pqmf_bands must be a power of two >= 2");
        }
        if self.core_bands == 0 || self.core_bands > self.pqmf_bands {
            return bad("core_bands must be in 1..=pqmf_bands");
        }
        if self.side_width_divisor == 0
            || self.encoder_dim % self.side_width_divisor != 0
            || self.decoder_dim % (2 * self.side_width_divisor) != 0
        {
            return bad("side_width_divisor must divide encoder_dim and decoder_dim/2");
        }
        if !(self.side_weight.is_finite() && self.side_weight > 0.0) {
            return bad("side_weight must be positive");
        }
        if self.total_stride() > usize::from(u16::MAX) {
            return bad("total stride does not fit the bitstream header");
        }
        Ok(())
    }

    pub fn side_bands(&self) -> usize {
        self.pqmf_bands - self.core_bands
    }

    /// Samples represented by one quantized frame.
    pub fn total_stride(&self) -> usize {
        match self.mode {
            Mode::Seanet => self.strides.iter().product(),
            Mode::PqmfDirect | Mode::SubbandSeanet => {
                self.pqmf_bands * self.subband_strides.iter().product::<usize>()
            }
        }
    }

    pub fn codebook_bits(&self) -> u32 {
        self.codebook_size.trailing_zeros()
    }

    /// Subband samples per band stacked into one `pqmf_direct` frame.
    pub fn subband_frame_len(&self) -> usize {
        self.subband_strides.iter().product()
    }

    /// Dimension of the vectors seen by the quantizer.
    pub fn quantized_dim(&self) -> usize {
        match self.mode {
            Mode::Seanet => self.latent_dim,
            Mode::PqmfDirect => self.pqmf_bands * self.subband_frame_len(),
            Mode::SubbandSeanet => self.latent_dim + self.side_bands() * self.side_band_latent,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CodecConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("codec config always serializes")
    }
}
