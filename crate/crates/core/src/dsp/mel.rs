use super::Spectrogram;
use crate::error::{Error, Result};

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-scale mel filterbank, `mel_bins × fft_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    mel_bins: usize,
    fft_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelFilterbank {
    /// Filters span `0 Hz .. Nyquist` with unit-peak triangles. A filter too narrow
    /// to cover any FFT bin center collapses onto the bin nearest its center, so
    /// every row keeps a positive sum.
    pub fn htk(sample_rate: u32, window_size: usize, mel_bins: usize) -> Result<Self> {
        if mel_bins == 0 {
            return Err(Error::contract("need at least one mel bin"));
        }
        let fmax = f64::from(sample_rate) / 2.0;
        Self::with_range(sample_rate, window_size, mel_bins, 0.0, fmax)
    }

    pub fn with_range(
        sample_rate: u32,
        window_size: usize,
        mel_bins: usize,
        fmin: f64,
        fmax: f64,
    ) -> Result<Self> {
        if !(fmin >= 0.0 && fmax > fmin) {
            return Err(Error::contract("mel range must satisfy 0 <= fmin < fmax"));
        }
        let fft_bins = window_size / 2 + 1;
        let bin_hz = f64::from(sample_rate) / window_size as f64;
        let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..mel_bins + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (mel_bins + 1) as f64))
            .collect();
        let mut weights = vec![0.0; mel_bins * fft_bins];
        for m in 0..mel_bins {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * fft_bins..(m + 1) * fft_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let up = (f - lo) / (center - lo);
                let down = (hi - f) / (hi - center);
                *w = up.min(down).max(0.0);
            }
            if row.iter().sum::<f64>() <= 0.0 {
                let nearest = ((center / bin_hz).round() as usize).min(fft_bins - 1);
                row[nearest] = 1.0;
            }
        }
        Ok(Self {
            weights,
            mel_bins,
            fft_bins,
            fmin,
            fmax,
        })
    }

    /// Builds a filterbank from explicit rows (each of `fft_bins` nonnegative weights).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let fft_bins = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || fft_bins == 0 || rows.iter().any(|r| r.len() != fft_bins) {
            return Err(Error::contract("filter rows must be nonempty and equally long"));
        }
        if rows.iter().flatten().any(|&w| !(w >= 0.0)) {
            return Err(Error::contract("filter weights must be nonnegative"));
        }
        Ok(Self {
            mel_bins: rows.len(),
            fft_bins,
            weights: rows.into_iter().flatten().collect(),
            fmin: 0.0,
            fmax: 0.0,
        })
    }

    pub fn mel_bins(&self) -> usize {
        self.mel_bins
    }

    pub fn fft_bins(&self) -> usize {
        self.fft_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.fft_bins..(m + 1) * self.fft_bins]
    }
}

/// Projects every spectrogram frame onto the filterbank: `frames × mel_bins`.
pub fn mel_project(spec: &Spectrogram, fb: &MelFilterbank) -> Result<Vec<Vec<f64>>> {
    if spec.num_bins() != fb.fft_bins() {
        return Err(Error::contract(format!(
            "filterbank expects {} bins, spectrogram has {}",
            fb.fft_bins(),
            spec.num_bins()
        )));
    }
    Ok(spec
        .frames()
        .map(|frame| {
            (0..fb.mel_bins())
                .map(|m| fb.row(m).iter().zip(frame).map(|(w, s)| w * s).sum())
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_positive_for_all_loss_scales() {
        for (win, bins) in [(32, 5), (64, 10), (128, 20), (256, 40), (512, 80), (1024, 160), (2048, 320)] {
            let fb = MelFilterbank::htk(44_100, win, bins).unwrap();
            for m in 0..bins {
                assert!(fb.row(m).iter().sum::<f64>() > 0.0, "win {win} row {m}");
            }
        }
    }

    #[test]
    fn selector_rows_pick_columns() {
        let spec = Spectrogram::from_magnitudes(
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            4,
            2,
            8000,
        )
        .unwrap();
        let fb = MelFilterbank::from_rows(vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let mel = mel_project(&spec, &fb).unwrap();
        assert_eq!(mel, vec![vec![3.0, 1.0], vec![6.0, 4.0]]);
    }

    #[test]
    fn mismatch_is_contract_error() {
        let spec = Spectrogram::from_magnitudes(vec![vec![0.0; 3]], 4, 2, 8000).unwrap();
        let fb = MelFilterbank::htk(8000, 8, 2).unwrap();
        assert!(matches!(mel_project(&spec, &fb), Err(Error::Contract(_))));
    }
}
