//! Cosine-modulated pseudo-QMF filterbank.
//!
//! All bands share one Kaiser-windowed lowpass prototype `h` of odd length `N`.
//! Band `k` uses
//!
//! ```text
//! h_k(n) = 2·√M·h(n)·cos((2k+1)·π/(2M)·(n − (N−1)/2) + (−1)^k·π/4)
//! f_k(n) = 2·√M·h(n)·cos((2k+1)·π/(2M)·(n − (N−1)/2) − (−1)^k·π/4)
//! ```
//!
//! for analysis and synthesis. The `√M` on each side splits the `M` gain lost
//! to decimation, which keeps subband energy equal to signal energy. A full
//! analysis/synthesis round trip delays the signal by `N − 1` samples.
//!
//! Two implementations exist for each direction: a direct-form reference that
//! filters with every `h_k` explicitly, and a polyphase path that folds the
//! prototype into `2M` partial sums and applies a `M × 2M` cosine matrix. The
//! polyphase path is the one used by the codec.

use std::f64::consts::PI;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

pub const DEFAULT_BANDS: usize = 16;
pub const DEFAULT_TAPS: usize = 481;
pub const DEFAULT_KAISER_BETA: f64 = 9.0;

#[derive(Debug, Clone)]
pub struct PqmfBank {
    num_bands: usize,
    prototype: Vec<f64>,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
    // M × 2M modulation matrices for the polyphase paths.
    analysis_mod: Vec<Vec<f64>>,
    synthesis_mod: Vec<Vec<f64>>,
    cutoff: f64,
    beta: f64,
}

/// `M` critically decimated bands, lowest frequency first.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSignal {
    pub bands: Vec<Vec<f64>>,
    pub sample_rate_per_band: f64,
}

impl SubbandSignal {
    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn band_len(&self) -> usize {
        self.bands.first().map_or(0, Vec::len)
    }

    pub fn energy(&self) -> f64 {
        self.bands.iter().flatten().map(|v| v * v).sum()
    }

    pub fn scaled(&self, gain: f64) -> SubbandSignal {
        SubbandSignal {
            bands: self
                .bands
                .iter()
                .map(|b| b.iter().map(|v| v * gain).collect())
                .collect(),
            sample_rate_per_band: self.sample_rate_per_band,
        }
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(n: usize, beta: f64) -> Vec<f64> {
    let denom = bessel_i0(beta);
    (0..n)
        .map(|i| {
            let r = 2.0 * i as f64 / (n - 1) as f64 - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Windowed-sinc lowpass with cutoff `cutoff·π` rad/sample.
fn prototype_filter(taps: usize, cutoff: f64, beta: f64) -> Vec<f64> {
    let center = (taps - 1) as f64 / 2.0;
    let wc = PI * cutoff;
    kaiser(taps, beta)
        .into_iter()
        .enumerate()
        .map(|(n, w)| {
            let t = n as f64 - center;
            let ideal = if t == 0.0 { cutoff } else { (wc * t).sin() / (PI * t) };
            ideal * w
        })
        .collect()
}

fn modulation(num_bands: usize, k: usize, n: usize, taps: usize, sign: f64) -> f64 {
    let m = num_bands as f64;
    let phase = if k % 2 == 0 { PI / 4.0 } else { -PI / 4.0 };
    let arg = (2 * k + 1) as f64 * PI / (2.0 * m) * (n as f64 - (taps - 1) as f64 / 2.0);
    2.0 * m.sqrt() * (arg + sign * phase).cos()
}

impl PqmfBank {
    /// Designs a bank with the default Kaiser β, searching the prototype cutoff
    /// that minimizes impulse round-trip error.
    pub fn design(num_bands: usize, taps: usize) -> Result<Self> {
        Self::design_with_beta(num_bands, taps, DEFAULT_KAISER_BETA)
    }

    pub fn design_with_beta(num_bands: usize, taps: usize, beta: f64) -> Result<Self> {
        if num_bands < 2 || !num_bands.is_power_of_two() {
            return Err(Error::Design(format!(
                "band count must be a power of two >= 2, got {num_bands}"
            )));
        }
        if taps % 2 == 0 {
            return Err(Error::Design(format!("tap count must be odd, got {taps}")));
        }
        if taps < 8 * num_bands {
            return Err(Error::Design(format!(
                "{taps} taps is too short for {num_bands} bands (need >= {})",
                8 * num_bands
            )));
        }
        let nominal = 1.0 / (2.0 * num_bands as f64);
        let cost = |cutoff: f64| Self::with_cutoff(num_bands, taps, cutoff, beta).impulse_error();
        let cutoff = golden_section(cost, 0.5 * nominal, 1.5 * nominal, 1e-9 * nominal);
        Ok(Self::with_cutoff(num_bands, taps, cutoff, beta))
    }

    /// Builds the bank for a fixed prototype cutoff (fraction of Nyquist).
    pub fn with_cutoff(num_bands: usize, taps: usize, cutoff: f64, beta: f64) -> Self {
        let prototype = prototype_filter(taps, cutoff, beta);
        let filters = |sign: f64| -> Vec<Vec<f64>> {
            (0..num_bands)
                .map(|k| {
                    prototype
                        .iter()
                        .enumerate()
                        .map(|(n, h)| h * modulation(num_bands, k, n, taps, sign))
                        .collect()
                })
                .collect()
        };
        let matrix = |sign: f64| -> Vec<Vec<f64>> {
            (0..num_bands)
                .map(|k| {
                    (0..2 * num_bands)
                        .map(|j| modulation(num_bands, k, j, taps, sign))
                        .collect()
                })
                .collect()
        };
        Self {
            num_bands,
            analysis: filters(1.0),
            synthesis: filters(-1.0),
            analysis_mod: matrix(1.0),
            synthesis_mod: matrix(-1.0),
            prototype,
            cutoff,
            beta,
        }
    }

    pub fn num_bands(&self) -> usize {
        self.num_bands
    }

    pub fn taps(&self) -> usize {
        self.prototype.len()
    }

    pub fn prototype(&self) -> &[f64] {
        &self.prototype
    }

    pub fn analysis_filter(&self, k: usize) -> &[f64] {
        &self.analysis[k]
    }

    pub fn synthesis_filter(&self, k: usize) -> &[f64] {
        &self.synthesis[k]
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn kaiser_beta(&self) -> f64 {
        self.beta
    }

    /// Delay of `synthesize(analyze(x))` relative to `x`, in samples.
    pub fn group_delay(&self) -> usize {
        self.taps() - 1
    }

    /// Round-trip error of unit impulses at every block phase, relative to the
    /// impulse energy, in dB.
    pub fn impulse_error_db(&self) -> f64 {
        10.0 * (self.impulse_error() / self.num_bands as f64).log10()
    }

    fn impulse_error(&self) -> f64 {
        let m = self.num_bands;
        let n = self.taps();
        let delay = self.group_delay();
        let len = (3 * n).div_ceil(m) * m + 2 * m;
        let mut err = 0.0;
        for phase in 0..m {
            let pos = m + phase;
            let mut x = vec![0.0; len];
            x[pos] = 1.0;
            let y = self.synthesize_polyphase(&self.analyze_polyphase(&x));
            for (i, &v) in y.iter().enumerate() {
                let target = if i == pos + delay { 1.0 } else { 0.0 };
                err += (v - target) * (v - target);
            }
        }
        err
    }

    fn check_input(&self, buf: &AudioBuffer) -> Result<()> {
        if buf.num_channels() != 1 {
            return Err(Error::contract("PQMF analysis expects a mono buffer"));
        }
        if buf.len() < self.taps() {
            return Err(Error::contract(format!(
                "input has {} samples; analysis needs at least {}",
                buf.len(),
                self.taps()
            )));
        }
        Ok(())
    }

    /// Splits a mono signal into `M` bands of `ceil(T/M)` samples each. The tail
    /// is zero-padded to a whole block.
    pub fn analyze(&self, buf: &AudioBuffer) -> Result<SubbandSignal> {
        self.check_input(buf)?;
        let bands = self.analyze_polyphase(buf.channel(0));
        Ok(SubbandSignal {
            bands,
            sample_rate_per_band: f64::from(buf.sample_rate()) / self.num_bands as f64,
        })
    }

    /// Direct-form reference for [`PqmfBank::analyze`].
    pub fn analyze_direct(&self, buf: &AudioBuffer) -> Result<SubbandSignal> {
        self.check_input(buf)?;
        let x = buf.channel(0);
        let m = self.num_bands;
        let blocks = x.len().div_ceil(m);
        let bands = self
            .analysis
            .iter()
            .map(|h| {
                (0..blocks)
                    .map(|b| {
                        let t = b * m;
                        h.iter()
                            .enumerate()
                            .take(t + 1)
                            .filter(|(n, _)| t - n < x.len())
                            .map(|(n, hk)| hk * x[t - n])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Ok(SubbandSignal {
            bands,
            sample_rate_per_band: f64::from(buf.sample_rate()) / m as f64,
        })
    }

    fn analyze_polyphase(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let m = self.num_bands;
        let n = self.taps();
        let blocks = x.len().div_ceil(m);
        let mut bands = vec![vec![0.0; blocks]; m];
        let mut folded = vec![0.0; 2 * m];
        for b in 0..blocks {
            let t = b * m;
            folded.iter_mut().for_each(|v| *v = 0.0);
            for (i, &h) in self.prototype.iter().enumerate().take(n.min(t + 1)) {
                let idx = t - i;
                if idx >= x.len() {
                    continue;
                }
                let j = i % (2 * m);
                let term = h * x[idx];
                if (i / (2 * m)) % 2 == 0 {
                    folded[j] += term;
                } else {
                    folded[j] -= term;
                }
            }
            for (k, band) in bands.iter_mut().enumerate() {
                band[b] = self.analysis_mod[k]
                    .iter()
                    .zip(&folded)
                    .map(|(c, y)| c * y)
                    .sum();
            }
        }
        bands
    }

    fn check_bands(&self, sb: &SubbandSignal) -> Result<usize> {
        if sb.num_bands() != self.num_bands {
            return Err(Error::contract(format!(
                "expected {} bands, got {}",
                self.num_bands,
                sb.num_bands()
            )));
        }
        let len = sb.band_len();
        if sb.bands.iter().any(|b| b.len() != len) {
            return Err(Error::contract("subband lengths differ"));
        }
        Ok(len)
    }

    /// Recombines `M` bands into `M · band_len` samples, delayed by
    /// [`PqmfBank::group_delay`] relative to the analyzed signal.
    pub fn synthesize(&self, sb: &SubbandSignal, sample_rate: u32) -> Result<AudioBuffer> {
        self.check_bands(sb)?;
        AudioBuffer::mono(self.synthesize_polyphase(&sb.bands), sample_rate)
    }

    /// Direct-form reference for [`PqmfBank::synthesize`].
    pub fn synthesize_direct(&self, sb: &SubbandSignal, sample_rate: u32) -> Result<AudioBuffer> {
        let len = self.check_bands(sb)?;
        let m = self.num_bands;
        let n = self.taps();
        let out: Vec<f64> = (0..len * m)
            .map(|t| {
                let mut acc = 0.0;
                for (f, band) in self.synthesis.iter().zip(&sb.bands) {
                    let first = (t + 1).saturating_sub(n).div_ceil(m);
                    for b in first..=(t / m).min(len.saturating_sub(1)) {
                        acc += f[t - b * m] * band[b];
                    }
                }
                acc
            })
            .collect();
        AudioBuffer::mono(out, sample_rate)
    }

    fn synthesize_polyphase(&self, bands: &[Vec<f64>]) -> Vec<f64> {
        let m = self.num_bands;
        let len = bands.first().map_or(0, Vec::len);
        let mut out = vec![0.0; len * m];
        let mut stream = StreamingSynthesizer::new(self);
        for b in 0..len {
            let column: Vec<f64> = bands.iter().map(|band| band[b]).collect();
            stream.push_block(&column, &mut out[b * m..(b + 1) * m]);
        }
        out
    }
}

/// Block-by-block polyphase synthesis. Pushing the blocks of a subband signal
/// in order yields exactly the samples of [`PqmfBank::synthesize`].
#[derive(Debug, Clone)]
pub struct StreamingSynthesizer<'a> {
    bank: &'a PqmfBank,
    acc: Vec<f64>,
    folded: Vec<f64>,
}

impl<'a> StreamingSynthesizer<'a> {
    pub fn new(bank: &'a PqmfBank) -> Self {
        let m = bank.num_bands;
        Self {
            bank,
            acc: vec![0.0; bank.taps() + m],
            folded: vec![0.0; 2 * m],
        }
    }

    /// Consumes one value per band and writes the `M` output samples that are
    /// now final.
    pub fn push_block(&mut self, column: &[f64], out: &mut [f64]) {
        let m = self.bank.num_bands;
        for (j, w) in self.folded.iter_mut().enumerate() {
            *w = self
                .bank
                .synthesis_mod
                .iter()
                .zip(column)
                .map(|(row, v)| row[j] * v)
                .sum();
        }
        for (p, &h) in self.bank.prototype.iter().enumerate() {
            let term = h * self.folded[p % (2 * m)];
            if (p / (2 * m)) % 2 == 0 {
                self.acc[p] += term;
            } else {
                self.acc[p] -= term;
            }
        }
        out[..m].copy_from_slice(&self.acc[..m]);
        self.acc.copy_within(m.., 0);
        let len = self.acc.len();
        self.acc[len - m..].iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn reset(&mut self) {
        self.acc.iter_mut().for_each(|v| *v = 0.0);
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_requests() {
        assert!(matches!(PqmfBank::design(1, 481), Err(Error::Design(_))));
        assert!(matches!(PqmfBank::design(12, 481), Err(Error::Design(_))));
        assert!(matches!(PqmfBank::design(16, 480), Err(Error::Design(_))));
        assert!(matches!(PqmfBank::design(16, 127), Err(Error::Design(_))));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn kaiser_is_symmetric_and_peaks_at_one() {
        let w = kaiser(31, 9.0);
        assert!((w[15] - 1.0).abs() < 1e-15);
        for i in 0..31 {
            assert!((w[i] - w[30 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn streaming_synthesis_reset_replays() {
        let bank = PqmfBank::with_cutoff(4, 63, 0.125, 9.0);
        let mut s = StreamingSynthesizer::new(&bank);
        let mut a = vec![0.0; 4];
        let mut b = vec![0.0; 4];
        s.push_block(&[1.0, 0.5, -0.25, 0.125], &mut a);
        s.reset();
        s.push_block(&[1.0, 0.5, -0.25, 0.125], &mut b);
        assert_eq!(a, b);
    }
}
