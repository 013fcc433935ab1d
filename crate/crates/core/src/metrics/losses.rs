use serde::Serialize;

use super::spectral::check_pair;
use crate::dsp::{mel_project, stft_mono, AudioBuffer, MelFilterbank};
use crate::error::{Error, Result};

pub const MEL_LOG_EPS: f64 = 1e-5;

/// One resolution of the multi-scale mel loss; the hop is a quarter window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MelScale {
    pub window: usize,
    pub mel_bins: usize,
}

pub const DEFAULT_MEL_SCALES: [MelScale; 7] = [
    MelScale { window: 32, mel_bins: 5 },
    MelScale { window: 64, mel_bins: 10 },
    MelScale { window: 128, mel_bins: 20 },
    MelScale { window: 256, mel_bins: 40 },
    MelScale { window: 512, mel_bins: 80 },
    MelScale { window: 1024, mel_bins: 160 },
    MelScale { window: 2048, mel_bins: 320 },
];

fn mel_of(x: &[f64], sr: u32, scale: &MelScale, fb: &MelFilterbank) -> Result<Vec<Vec<f64>>> {
    let spec = stft_mono(x, sr, scale.window, scale.window / 4)?;
    mel_project(&spec, fb)
}

/// Sum over scales of `mean|mel(x) − mel(y)| + mean|log10(mel(x) + ε) − log10(mel(y) + ε)|`
/// on magnitude mel spectrograms; multi-channel inputs average over channels.
pub fn multiscale_mel_loss(x: &AudioBuffer, y: &AudioBuffer, scales: &[MelScale]) -> Result<f64> {
    check_pair(x, y)?;
    let sr = x.sample_rate();
    let mut total = 0.0;
    for scale in scales {
        let fb = MelFilterbank::htk(sr, scale.window, scale.mel_bins)?;
        for c in 0..x.num_channels() {
            let mx = mel_of(x.channel(c), sr, scale, &fb)?;
            let my = mel_of(y.channel(c), sr, scale, &fb)?;
            let (mut lin, mut log, mut n) = (0.0, 0.0, 0usize);
            for (a, b) in mx.iter().flatten().zip(my.iter().flatten()) {
                lin += (a - b).abs();
                log += ((a + MEL_LOG_EPS).log10() - (b + MEL_LOG_EPS).log10()).abs();
                n += 1;
            }
            total += (lin + log) / n as f64 / x.num_channels() as f64;
        }
    }
    Ok(total)
}

/// Mean absolute sample difference.
pub fn waveform_loss(x: &AudioBuffer, y: &AudioBuffer) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() * x.num_channels();
    if n == 0 {
        return Err(Error::Metric("empty signals".into()));
    }
    let sum: f64 = (0..x.num_channels())
        .map(|c| x.channel(c).iter().zip(y.channel(c)).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum();
    Ok(sum / n as f64)
}

/// Generator loss weights. The feature-matching and adversarial weights are
/// carried for completeness; there is no discriminator to evaluate them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossWeights {
    pub mel: f64,
    pub waveform: f64,
    pub feature_match: f64,
    pub adversarial: f64,
    pub codebook: f64,
    pub commitment: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mel: 15.0,
            waveform: 1.0,
            feature_match: 2.0,
            adversarial: 1.0,
            codebook: 1.0,
            commitment: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossComponents {
    pub mel: f64,
    pub waveform: f64,
    pub codebook: f64,
    pub commitment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossTerm {
    pub name: &'static str,
    pub weight: f64,
    /// `None` for terms that need a discriminator.
    pub value: Option<f64>,
    pub weighted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeReport {
    pub total: f64,
    pub terms: Vec<LossTerm>,
}

pub fn composite_report(c: &LossComponents, w: &LossWeights) -> CompositeReport {
    let term = |name, weight: f64, value: Option<f64>| LossTerm {
        name,
        weight,
        value,
        weighted: value.map(|v| v * weight),
    };
    let terms = vec![
        term("mel", w.mel, Some(c.mel)),
        term("waveform", w.waveform, Some(c.waveform)),
        term("feature_match", w.feature_match, None),
        term("adversarial", w.adversarial, None),
        term("codebook", w.codebook, Some(c.codebook)),
        term("commitment", w.commitment, Some(c.commitment)),
    ];
    CompositeReport {
        total: terms.iter().filter_map(|t| t.weighted).sum(),
        terms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, phase: f64) -> AudioBuffer {
        AudioBuffer::mono(
            (0..n).map(|t| (2.0 * std::f64::consts::PI * 440.0 * t as f64 / 44_100.0 + phase).sin()).collect(),
            44_100,
        )
        .unwrap()
    }

    #[test]
    fn mel_loss_zero_and_symmetric() {
        let a = tone(4096, 0.0);
        let b = tone(4096, 1.0).scaled(0.5);
        assert_eq!(multiscale_mel_loss(&a, &a, &DEFAULT_MEL_SCALES).unwrap(), 0.0);
        let ab = multiscale_mel_loss(&a, &b, &DEFAULT_MEL_SCALES).unwrap();
        let ba = multiscale_mel_loss(&b, &a, &DEFAULT_MEL_SCALES).unwrap();
        assert!(ab > 0.0 && (ab - ba).abs() < 1e-12);
    }

    #[test]
    fn waveform_loss_cases() {
        let a = tone(44_100, 0.0);
        let flipped = tone(44_100, std::f64::consts::PI);
        let l = waveform_loss(&flipped, &a).unwrap();
        // mean |2 sin| over whole periods is 4/π
        assert!((l - 4.0 / std::f64::consts::PI).abs() < 1e-3, "{l}");
        let offset = AudioBuffer::mono(a.channel(0).iter().map(|v| v + 0.3).collect(), 44_100).unwrap();
        assert!((waveform_loss(&offset, &a).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn composite_weights() {
        let w = LossWeights::default();
        assert_eq!(composite_report(&LossComponents::default(), &w).total, 0.0);
        let unit = LossComponents {
            mel: 1.0,
            waveform: 1.0,
            codebook: 1.0,
            commitment: 1.0,
        };
        assert_eq!(composite_report(&unit, &w).total, 17.25);
        let double_mel = LossComponents { mel: 2.0, ..unit };
        assert_eq!(composite_report(&double_mel, &w).total, 32.25);
    }
}
