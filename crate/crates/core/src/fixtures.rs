//! Deterministic synthetic signals for tests, demos and codebook fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::dsp::AudioBuffer;

/// Seconds of a polyphonic synthetic "music" signal: a bass line, a melody of
/// harmonic notes with attack/decay envelopes, short noise bursts and a low
/// noise floor that reach the upper bands. Peak level stays below 0.9.
pub fn music(seconds: f64, sample_rate: u32, seed: u64) -> AudioBuffer {
    let n = (seconds * f64::from(sample_rate)).round() as usize;
    AudioBuffer::mono(music_samples(n, sample_rate, seed), sample_rate).expect("positive rate")
}

fn music_samples(n: usize, sr: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = f64::from(sr);
    let scale = [0.0, 2.0, 4.0, 7.0, 9.0];
    let mut out = vec![0.0; n];
    let mut voice = |base_hz: f64, harmonics: usize, gain: f64, note_len: (f64, f64), rng: &mut ChaCha8Rng| {
        let mut t0 = 0usize;
        while t0 < n {
            let len = (rng.random_range(note_len.0..note_len.1) * fs) as usize;
            let step = scale[rng.random_range(0..scale.len())] + 12.0 * f64::from(rng.random_range(0..2u8));
            let f0 = base_hz * 2f64.powf(step / 12.0);
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            let tilt: f64 = rng.random_range(0.6..1.4);
            for t in t0..(t0 + len).min(n) {
                let dt = (t - t0) as f64 / fs;
                let env = (dt / 0.01).min(1.0) * (-dt * 3.0).exp();
                let mut v = 0.0;
                for h in 1..=harmonics {
                    let f = f0 * h as f64;
                    if f < fs / 2.0 {
                        v += (2.0 * PI * f * dt + phase * h as f64).sin() / (h as f64).powf(tilt);
                    }
                }
                out[t] += gain * env * v;
            }
            t0 += len;
        }
    };
    voice(55.0, 8, 0.22, (0.4, 0.8), &mut rng);
    voice(220.0, 12, 0.15, (0.15, 0.4), &mut rng);
    voice(440.0, 6, 0.08, (0.1, 0.3), &mut rng);
    // hi-hat style bursts: differenced noise with a fast decay
    let period = (0.25 * fs) as usize;
    let mut prev = 0.0;
    for t in 0..n {
        let dt = (t % period) as f64 / fs;
        let w: f64 = rng.random_range(-1.0..1.0);
        // plus a steady floor like a recording's noise
        out[t] += (0.05 * (-dt * 60.0).exp() + 0.003) * (w - prev);
        prev = w;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.85 {
        out.iter_mut().for_each(|v| *v *= 0.85 / peak);
    }
    out
}

/// Uniform white noise in `[-amplitude, amplitude)`.
pub fn white_noise(len: usize, amplitude: f64, sample_rate: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..len).map(|_| rng.random_range(-amplitude..amplitude)).collect();
    AudioBuffer::mono(x, sample_rate).expect("positive rate")
}

pub fn sine(len: usize, freq_hz: f64, amplitude: f64, sample_rate: u32) -> AudioBuffer {
    let w = 2.0 * PI * freq_hz / f64::from(sample_rate);
    AudioBuffer::mono((0..len).map(|t| amplitude * (w * t as f64).sin()).collect(), sample_rate)
        .expect("positive rate")
}

/// Two decorrelated music channels.
pub fn stereo_music(seconds: f64, sample_rate: u32, seed: u64) -> AudioBuffer {
    let l = music(seconds, sample_rate, seed).into_channels().remove(0);
    let r = music(seconds, sample_rate, seed ^ 0x5eed).into_channels().remove(0);
    AudioBuffer::new(vec![l, r], sample_rate).expect("equal lengths")
}
