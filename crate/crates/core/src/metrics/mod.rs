//! Objective quality metrics and generator-side loss terms.

mod losses;
mod spectral;

pub use losses::{
    composite_report, multiscale_mel_loss, waveform_loss, CompositeReport, LossComponents,
    LossTerm, LossWeights, MelScale, DEFAULT_MEL_SCALES, MEL_LOG_EPS,
};
pub use spectral::{
    low_bin_count, lsd, snr, LsdChannel, LsdReport, LSD_HOP, LSD_SPLIT_HZ, LSD_WINDOW,
    POWER_FLOOR, SNR_CAP_DB,
};

use serde::Serialize;

use crate::dsp::AudioBuffer;
use crate::error::Result;

/// Every metric for one reference/degraded pair, plus the conventions used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub lsd: f64,
    pub lsd_low: f64,
    pub lsd_high: f64,
    pub snr_db: f64,
    pub mel_loss: f64,
    pub waveform_loss: f64,
    pub sample_rate: u32,
    pub channels: usize,
    pub samples: usize,
    pub stft_window: usize,
    pub stft_hop: usize,
    pub split_hz: f64,
    pub power_floor: f64,
    pub snr_cap_db: f64,
    pub mel_scales: Vec<MelScale>,
    pub mel_log_eps: f64,
    /// Per-channel LSD detail (frame sums and per-bin profile).
    pub lsd_channels: Vec<LsdChannel>,
}

/// Measures `degraded` against `reference`.
pub fn evaluate(reference: &AudioBuffer, degraded: &AudioBuffer) -> Result<MetricReport> {
    let l = lsd(degraded, reference)?;
    Ok(MetricReport {
        lsd: l.lsd,
        lsd_low: l.lsd_low,
        lsd_high: l.lsd_high,
        snr_db: snr(degraded, reference)?,
        mel_loss: multiscale_mel_loss(degraded, reference, &DEFAULT_MEL_SCALES)?,
        waveform_loss: waveform_loss(degraded, reference)?,
        sample_rate: reference.sample_rate(),
        channels: reference.num_channels(),
        samples: reference.len(),
        stft_window: l.window,
        stft_hop: l.hop,
        split_hz: l.split_hz,
        power_floor: l.power_floor,
        snr_cap_db: SNR_CAP_DB,
        mel_scales: DEFAULT_MEL_SCALES.to_vec(),
        mel_log_eps: MEL_LOG_EPS,
        lsd_channels: l.channels,
    })
}

impl MetricReport {
    /// `key: value` lines, without the per-bin detail.
    pub fn to_text(&self) -> String {
        let scales: Vec<String> = self
            .mel_scales
            .iter()
            .map(|s| format!("{}/{}", s.window, s.mel_bins))
            .collect();
        [
            format!("lsd: {:.6}", self.lsd),
            format!("lsd_low: {:.6}", self.lsd_low),
            format!("lsd_high: {:.6}", self.lsd_high),
            format!("snr_db: {:.6}", self.snr_db),
            format!("mel_loss: {:.6}", self.mel_loss),
            format!("waveform_loss: {:.6}", self.waveform_loss),
            format!("sample_rate: {}", self.sample_rate),
            format!("channels: {}", self.channels),
            format!("samples: {}", self.samples),
            format!("stft: window {} hop {} hann, log10 power floor {:e}", self.stft_window, self.stft_hop, self.power_floor),
            format!("lsd_split_hz: {}", self.split_hz),
            format!("snr: 10*log10(sum y^2 / sum (x-y)^2), cap {} dB", self.snr_cap_db),
            format!("mel_scales (window/bins, hop window/4): {}", scales.join(" ")),
            format!("mel_log_eps: {:e}", self.mel_log_eps),
        ]
        .join("\n")
    }
}
