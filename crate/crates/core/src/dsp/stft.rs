use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Magnitude STFT, `frames × bins`, un-normalized (raw DFT magnitudes).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    num_frames: usize,
    num_bins: usize,
    pub frame_hop: usize,
    pub window_size: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn from_magnitudes(
        rows: Vec<Vec<f64>>,
        window_size: usize,
        frame_hop: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let num_bins = window_size / 2 + 1;
        if rows.iter().any(|r| r.len() != num_bins) {
            return Err(Error::contract(format!("every frame needs {num_bins} bins")));
        }
        if rows.iter().flatten().any(|&m| !(m >= 0.0)) {
            return Err(Error::contract("magnitudes must be nonnegative"));
        }
        Ok(Self {
            num_frames: rows.len(),
            magnitudes: rows.into_iter().flatten().collect(),
            num_bins,
            frame_hop,
            window_size,
            sample_rate,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn frame(&self, l: usize) -> &[f64] {
        &self.magnitudes[l * self.num_bins..(l + 1) * self.num_bins]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.magnitudes.chunks_exact(self.num_bins.max(1))
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * f64::from(self.sample_rate) / self.window_size as f64
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// STFT of a mono buffer. Frames lie fully inside the signal (no centering or
/// reflection padding), so there are `floor((len - window) / hop) + 1` of them.
pub fn stft(buf: &AudioBuffer, window_size: usize, hop: usize) -> Result<Spectrogram> {
    if buf.num_channels() != 1 {
        return Err(Error::contract("stft expects a mono buffer; select a channel first"));
    }
    stft_mono(buf.channel(0), buf.sample_rate(), window_size, hop)
}

pub fn stft_mono(
    samples: &[f64],
    sample_rate: u32,
    window_size: usize,
    hop: usize,
) -> Result<Spectrogram> {
    if !window_size.is_power_of_two() || window_size < 2 {
        return Err(Error::contract("window size must be a power of two"));
    }
    if hop == 0 || hop > window_size {
        return Err(Error::contract("hop must be in 1..=window_size"));
    }
    if samples.len() < window_size {
        return Err(Error::Metric(format!(
            "signal has {} samples, shorter than one {window_size}-sample window",
            samples.len()
        )));
    }
    let window = hann_window(window_size);
    let num_frames = (samples.len() - window_size) / hop + 1;
    let num_bins = window_size / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_size);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut frame = vec![Complex::default(); window_size];
    let mut magnitudes = Vec::with_capacity(num_frames * num_bins);
    for l in 0..num_frames {
        let start = l * hop;
        for (i, c) in frame.iter_mut().enumerate() {
            *c = Complex::new(samples[start + i] * window[i], 0.0);
        }
        fft.process_with_scratch(&mut frame, &mut scratch);
        magnitudes.extend(frame[..num_bins].iter().map(|c| c.norm()));
    }
    Ok(Spectrogram {
        magnitudes,
        num_frames,
        num_bins,
        frame_hop: hop,
        window_size,
        sample_rate,
    })
}
