//! Audio containers and the signal-processing primitives shared by the codec,
//! the metrics and the filterbank: WAV I/O, STFT and mel projection.

mod mel;
mod stft;
mod wav;

pub use mel::{mel_project, MelFilterbank};
pub use stft::{hann_window, stft, stft_mono, Spectrogram};
pub use wav::{load_wav, read_wav, save_wav, write_wav, BitDepth};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;

/// Planar multi-channel audio. Samples are nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::contract("audio buffer needs at least one channel"));
        }
        if sample_rate == 0 {
            return Err(Error::contract("sample rate must be positive"));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::contract("all channels must have equal length"));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn silence(num_channels: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; num_channels], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// A single-channel buffer holding a copy of channel `index`.
    pub fn select_channel(&self, index: usize) -> Result<AudioBuffer> {
        let ch = self
            .channels
            .get(index)
            .ok_or_else(|| Error::contract(format!("channel {index} out of range")))?;
        AudioBuffer::mono(ch.clone(), self.sample_rate)
    }

    pub fn scaled(&self, gain: f64) -> AudioBuffer {
        AudioBuffer {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|s| s * gain).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.channels.iter().flatten().all(|s| s.is_finite())
    }
}
