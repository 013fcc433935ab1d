use serde::Serialize;

use crate::dsp::{stft_mono, AudioBuffer};
use crate::error::{Error, Result};

pub const LSD_WINDOW: usize = 2048;
pub const LSD_HOP: usize = 512;
pub const LSD_SPLIT_HZ: f64 = 16_000.0;
pub const POWER_FLOOR: f64 = 1e-10;
pub const SNR_CAP_DB: f64 = 200.0;

/// Log-spectral distance of one channel, with enough detail to recompute the
/// scalars: per-frame sums of squared log-power differences over the low and
/// high bin sets, and a per-bin mean squared difference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LsdChannel {
    pub lsd: f64,
    pub lsd_low: f64,
    pub lsd_high: f64,
    /// Bins `0..low_bins` are below the split; the rest are at or above it.
    pub low_bins: usize,
    pub high_bins: usize,
    pub frame_low_sq: Vec<f64>,
    pub frame_high_sq: Vec<f64>,
    pub bin_profile: Vec<f64>,
}

impl LsdChannel {
    /// `mean_l sqrt((low_l + high_l) / K)` from the stored frame sums.
    pub fn recompute_lsd(&self) -> f64 {
        let k = (self.low_bins + self.high_bins) as f64;
        mean(self
            .frame_low_sq
            .iter()
            .zip(&self.frame_high_sq)
            .map(|(l, h)| ((l + h) / k).sqrt()))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Log-spectral distance with the STFT and split settings it was computed with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LsdReport {
    pub lsd: f64,
    pub lsd_low: f64,
    pub lsd_high: f64,
    pub window: usize,
    pub hop: usize,
    pub split_hz: f64,
    pub power_floor: f64,
    pub channels: Vec<LsdChannel>,
}

pub(crate) fn check_pair(x: &AudioBuffer, y: &AudioBuffer) -> Result<()> {
    if x.sample_rate() != y.sample_rate() {
        return Err(Error::contract(format!(
            "sample rates differ ({} vs {} Hz); resample one file externally",
            x.sample_rate(),
            y.sample_rate()
        )));
    }
    if x.num_channels() != y.num_channels() {
        return Err(Error::contract("channel counts differ"));
    }
    if x.len() != y.len() {
        return Err(Error::contract(format!("lengths differ ({} vs {} samples)", x.len(), y.len())));
    }
    Ok(())
}

fn log_power(m: f64) -> f64 {
    (m * m).max(POWER_FLOOR).log10()
}

/// Number of bins whose center frequency is below `split_hz`.
pub fn low_bin_count(sample_rate: u32, window: usize, split_hz: f64) -> usize {
    let bins = window / 2 + 1;
    (0..bins)
        .filter(|&k| (k as f64) * f64::from(sample_rate) / (window as f64) < split_hz)
        .count()
}

fn lsd_channel(x: &[f64], y: &[f64], sr: u32) -> Result<LsdChannel> {
    let sx = stft_mono(x, sr, LSD_WINDOW, LSD_HOP)?;
    let sy = stft_mono(y, sr, LSD_WINDOW, LSD_HOP)?;
    let bins = sx.num_bins();
    let low = low_bin_count(sr, LSD_WINDOW, LSD_SPLIT_HZ);
    let mut frame_low_sq = Vec::with_capacity(sx.num_frames());
    let mut frame_high_sq = Vec::with_capacity(sx.num_frames());
    let mut profile = vec![0.0; bins];
    for (fx, fy) in sx.frames().zip(sy.frames()) {
        let (mut lo, mut hi) = (0.0, 0.0);
        for (k, (a, b)) in fx.iter().zip(fy).enumerate() {
            let d = log_power(*a) - log_power(*b);
            let d2 = d * d;
            profile[k] += d2;
            if k < low {
                lo += d2;
            } else {
                hi += d2;
            }
        }
        frame_low_sq.push(lo);
        frame_high_sq.push(hi);
    }
    let frames = frame_low_sq.len() as f64;
    profile.iter_mut().for_each(|p| *p /= frames);
    let high = bins - low;
    let lsd_low = if low == 0 { 0.0 } else { mean(frame_low_sq.iter().map(|s| (s / low as f64).sqrt())) };
    let lsd_high = if high == 0 { 0.0 } else { mean(frame_high_sq.iter().map(|s| (s / high as f64).sqrt())) };
    let mut ch = LsdChannel {
        lsd: 0.0,
        lsd_low,
        lsd_high,
        low_bins: low,
        high_bins: high,
        frame_low_sq,
        frame_high_sq,
        bin_profile: profile,
    };
    ch.lsd = ch.recompute_lsd();
    Ok(ch)
}

/// Log-spectral distance between an estimate `x` and a reference `y`, using
/// log10 power with a `1e-10` floor. Multi-channel inputs report the mean of
/// the per-channel values.
pub fn lsd(x: &AudioBuffer, y: &AudioBuffer) -> Result<LsdReport> {
    check_pair(x, y)?;
    let channels = (0..x.num_channels())
        .map(|c| lsd_channel(x.channel(c), y.channel(c), x.sample_rate()))
        .collect::<Result<Vec<_>>>()?;
    Ok(LsdReport {
        lsd: mean(channels.iter().map(|c| c.lsd)),
        lsd_low: mean(channels.iter().map(|c| c.lsd_low)),
        lsd_high: mean(channels.iter().map(|c| c.lsd_high)),
        window: LSD_WINDOW,
        hop: LSD_HOP,
        split_hz: LSD_SPLIT_HZ,
        power_floor: POWER_FLOOR,
        channels,
    })
}

fn snr_channel(x: &[f64], y: &[f64]) -> Result<f64> {
    let signal: f64 = y.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::Metric("reference signal is all zero; SNR is undefined".into()));
    }
    let noise: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SNR_CAP_DB))
}

/// `10·log10(Σy² / Σ(x − y)²)` for estimate `x` and reference `y`, capped at
/// 200 dB; multi-channel inputs report the mean over channels.
pub fn snr(x: &AudioBuffer, y: &AudioBuffer) -> Result<f64> {
    check_pair(x, y)?;
    let per = (0..x.num_channels())
        .map(|c| snr_channel(x.channel(c), y.channel(c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(per.into_iter()))
}
