//! Reference implementations used only by the integration tests. They follow
//! the definitions directly (nested loops, explicit DFTs, impulse probing) and
//! share no code with the library beyond its data types.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use tqcodec::nn::{Layer, NetworkGraph, WeightStore};

pub type Signal = Vec<Vec<f64>>;

fn tensor(w: &WeightStore, name: &str) -> Vec<f64> {
    w.get(name).unwrap_or_else(|| panic!("missing tensor {name}")).to_f64()
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

/// Forward pass by definition, incrementing `macs` once per multiply.
/// Padding taps and trimmed transposed-conv outputs are counted too.
pub fn naive_forward(layers: &[Layer], w: &WeightStore, x: Signal, macs: &mut u128) -> Signal {
    let mut x = x;
    for layer in layers {
        let len = x.first().map_or(0, Vec::len);
        x = match layer {
            Layer::Conv1d(c) => {
                let wt = tensor(w, &format!("{}.weight", c.name));
                let b = tensor(w, &format!("{}.bias", c.name));
                let pad = ((c.kernel - 1) * c.dilation + 1) as isize - c.stride as isize;
                let out_len = len.div_ceil(c.stride);
                let mut y = vec![vec![0.0; out_len]; c.out_ch];
                for o in 0..c.out_ch {
                    for t in 0..out_len {
                        let mut acc = b[o];
                        for ic in 0..c.in_ch {
                            for j in 0..c.kernel {
                                *macs += 1;
                                let idx = (t * c.stride) as isize - pad + (j * c.dilation) as isize;
                                if idx >= 0 && (idx as usize) < len {
                                    acc += wt[(o * c.in_ch + ic) * c.kernel + j] * x[ic][idx as usize];
                                }
                            }
                        }
                        y[o][t] = acc;
                    }
                }
                y
            }
            Layer::ConvTranspose1d(c) => {
                let wt = tensor(w, &format!("{}.weight", c.name));
                let b = tensor(w, &format!("{}.bias", c.name));
                let out_len = len * c.stride;
                let mut y: Signal = (0..c.out_ch).map(|o| vec![b[o]; out_len]).collect();
                for o in 0..c.out_ch {
                    for ic in 0..c.in_ch {
                        for j in 0..c.kernel {
                            for i in 0..len {
                                *macs += 1;
                                let u = i * c.stride + j;
                                if u < out_len {
                                    y[o][u] += wt[(ic * c.out_ch + o) * c.kernel + j] * x[ic][i];
                                }
                            }
                        }
                    }
                }
                y
            }
            Layer::Lstm(l) => {
                let h_dim = l.hidden;
                let mut h = vec![vec![0.0; h_dim]; l.layers];
                let mut cst = vec![vec![0.0; h_dim]; l.layers];
                let params: Vec<_> = (0..l.layers)
                    .map(|i| {
                        let p = format!("{}.l{i}", l.name);
                        (
                            tensor(w, &format!("{p}.weight_ih")),
                            tensor(w, &format!("{p}.weight_hh")),
                            tensor(w, &format!("{p}.bias")),
                        )
                    })
                    .collect();
                let mut y = vec![vec![0.0; len]; h_dim];
                for t in 0..len {
                    let input: Vec<f64> = x.iter().map(|c| c[t]).collect();
                    let mut cur = input.clone();
                    for (li, (wih, whh, bias)) in params.iter().enumerate() {
                        let n_in = cur.len();
                        let mut gates = vec![0.0; 4 * h_dim];
                        for (g, gate) in gates.iter_mut().enumerate() {
                            let mut acc = bias[g];
                            for k in 0..n_in {
                                *macs += 1;
                                acc += wih[g * n_in + k] * cur[k];
                            }
                            for k in 0..h_dim {
                                *macs += 1;
                                acc += whh[g * h_dim + k] * h[li][k];
                            }
                            *gate = acc;
                        }
                        for k in 0..h_dim {
                            let ig = sigmoid(gates[k]);
                            let fg = sigmoid(gates[h_dim + k]);
                            let gg = gates[2 * h_dim + k].tanh();
                            let og = sigmoid(gates[3 * h_dim + k]);
                            cst[li][k] = fg * cst[li][k] + ig * gg;
                            h[li][k] = og * cst[li][k].tanh();
                        }
                        cur = h[li].clone();
                    }
                    for k in 0..h_dim {
                        y[k][t] = if l.skip { cur[k] + input[k] } else { cur[k] };
                    }
                }
                y
            }
            Layer::Elu => x.into_iter().map(|c| c.into_iter().map(elu).collect()).collect(),
            Layer::Tanh => x.into_iter().map(|c| c.into_iter().map(f64::tanh).collect()).collect(),
            Layer::Residual { layers } => {
                let f = naive_forward(layers, w, x.clone(), macs);
                x.iter()
                    .zip(&f)
                    .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
                    .collect()
            }
        };
    }
    x
}

/// The same topology with every channel count set to one. The dependency
/// structure between time steps does not depend on the width.
pub fn width_one(g: &NetworkGraph) -> NetworkGraph {
    fn map(layers: &[Layer]) -> Vec<Layer> {
        layers
            .iter()
            .map(|l| match l {
                Layer::Conv1d(c) => {
                    let mut c = c.clone();
                    (c.in_ch, c.out_ch) = (1, 1);
                    Layer::Conv1d(c)
                }
                Layer::ConvTranspose1d(c) => {
                    let mut c = c.clone();
                    (c.in_ch, c.out_ch) = (1, 1);
                    Layer::ConvTranspose1d(c)
                }
                Layer::Lstm(l) => {
                    let mut l = l.clone();
                    (l.input, l.hidden) = (1, 1);
                    Layer::Lstm(l)
                }
                Layer::Residual { layers } => Layer::Residual { layers: map(layers) },
                other => other.clone(),
            })
            .collect()
    }
    NetworkGraph {
        name: g.name.clone(),
        in_channels: 1,
        input_stride: g.input_stride,
        layers: map(&g.layers),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImpulseRf {
    pub steps: u64,
    pub samples: u64,
    pub lookahead_samples: u64,
}

/// Receptive field of the convolutional path by NaN probing: for each output
/// of one upsampling period, poisoning input prefixes and suffixes locates the
/// first and last input step that reaches it.
pub fn impulse_rf(graph: &NetworkGraph, in_len: usize) -> ImpulseRf {
    let g = width_one(&graph.without_lstm());
    let w = WeightStore::random(&g, 11);
    let out_len = g.output_len(in_len);
    let run = |poison: &dyn Fn(usize) -> bool| -> Vec<bool> {
        let x = vec![(0..in_len).map(|i| if poison(i) { f64::NAN } else { 0.1 }).collect()];
        let mut m = 0;
        let y = naive_forward(&g.layers, &w, x, &mut m);
        (0..out_len).map(|u| y.iter().any(|c| c[u].is_nan())).collect()
    };
    let mut prefix: HashMap<usize, Vec<bool>> = HashMap::new();
    let mut suffix: HashMap<usize, Vec<bool>> = HashMap::new();
    let (down, up) = g.rate_change();
    fn ups(layers: &[Layer]) -> usize {
        layers
            .iter()
            .map(|l| match l {
                Layer::ConvTranspose1d(c) => c.stride,
                Layer::Residual { layers } => ups(layers),
                _ => 1,
            })
            .product()
    }
    let period = ups(&g.layers);
    let u0 = (out_len * 2 / 3) / period * period;
    let out_stride = g.input_stride as f64 * down as f64 / up as f64;
    let (mut steps, mut ahead) = (0u64, 0.0f64);
    for u in u0..u0 + period {
        // smallest p with input[..=p] reaching u
        let (mut a, mut b) = (0usize, in_len - 1);
        while a < b {
            let mid = (a + b) / 2;
            let hit = prefix.entry(mid).or_insert_with(|| run(&|i| i <= mid))[u];
            if hit {
                b = mid;
            } else {
                a = mid + 1;
            }
        }
        let lo = a;
        // largest p with input[p..] reaching u
        let (mut a, mut b) = (0usize, in_len - 1);
        while a < b {
            let mid = (a + b).div_ceil(2);
            let hit = suffix.entry(mid).or_insert_with(|| run(&|i| i >= mid))[u];
            if hit {
                a = mid;
            } else {
                b = mid - 1;
            }
        }
        let hi = a;
        assert!(lo > 0 && hi < in_len - 1, "probe window too small for {}", graph.name);
        steps = steps.max((hi - lo + 1) as u64);
        ahead = ahead.max(hi as f64 * g.input_stride as f64 + 1.0 - (u + 1) as f64 * out_stride);
    }
    ImpulseRf {
        steps,
        samples: steps * g.input_stride as u64,
        lookahead_samples: ahead.max(0.0).round() as u64,
    }
}

/// Every single input step that reaches output `u`, by one probe per step.
pub fn impulse_support(graph: &NetworkGraph, in_len: usize, u: usize) -> Vec<usize> {
    let g = width_one(&graph.without_lstm());
    let w = WeightStore::random(&g, 11);
    (0..in_len)
        .filter(|&p| {
            let mut x = vec![vec![0.1; in_len]];
            x[0][p] = f64::NAN;
            let mut m = 0;
            naive_forward(&g.layers, &w, x, &mut m).iter().any(|c| c[u].is_nan())
        })
        .collect()
}

/// Index of the nearest row by exhaustive search; the first of equal rows wins.
pub fn brute_nearest(rows: &[Vec<f64>], q: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, r) in rows.iter().enumerate() {
        let d: f64 = r.iter().zip(q).map(|(a, b)| (b - a) * (b - a)).sum();
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Magnitudes of bins `0..=n/2` of a periodic-Hann windowed frame, by the DFT sum.
pub fn dft_magnitudes(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let win: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, (&x, &wv)) in frame.iter().zip(&win).enumerate() {
                let ang = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re += x * wv * ang.cos();
                im += x * wv * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Magnitude frames with no centering: `floor((len − n) / hop) + 1` of them.
pub fn naive_stft(x: &[f64], n: usize, hop: usize) -> Vec<Vec<f64>> {
    (0..=(x.len() - n) / hop).map(|l| dft_magnitudes(&x[l * hop..l * hop + n])).collect()
}

/// `mel[l][m] = Σ_k fb[m][k] · spec[l][k]` as a triple loop.
pub fn naive_mel(spec: &[Vec<f64>], fb: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; fb.len()]; spec.len()];
    for (l, frame) in spec.iter().enumerate() {
        for (m, row) in fb.iter().enumerate() {
            for (k, &s) in frame.iter().enumerate() {
                out[l][m] += row[k] * s;
            }
        }
    }
    out
}

/// Frame-averaged RMS of log10 power differences over bins `range`.
pub fn naive_lsd(x: &[f64], y: &[f64], bins: std::ops::Range<usize>) -> f64 {
    let (sx, sy) = (naive_stft(x, 2048, 512), naive_stft(y, 2048, 512));
    let lp = |m: f64| (m * m).max(1e-10).log10();
    let per: Vec<f64> = sx
        .iter()
        .zip(&sy)
        .map(|(a, b)| {
            let s: f64 = bins.clone().map(|k| (lp(a[k]) - lp(b[k])).powi(2)).sum();
            (s / bins.len() as f64).sqrt()
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

/// Graphs the analyzer oracles run on, with an input length for the counting
/// forward pass and one for impulse probing.
pub fn fixture_graphs() -> Vec<(NetworkGraph, usize, usize)> {
    use tqcodec::nn::{build_decoder, build_encoder, build_end_to_end, build_subband_graphs, dac_like_decoder, dac_like_encoder, dac_like_end_to_end};
    use tqcodec::CodecConfig;
    let cfg = CodecConfig::default();
    let sub = build_subband_graphs(&CodecConfig::with_mode(tqcodec::Mode::SubbandSeanet)).unwrap();
    let hand = NetworkGraph::new(
        "hand",
        2,
        1,
        vec![
            Layer::conv("hand.a", 2, 3, 5),
            Layer::Elu,
            Layer::Residual {
                layers: vec![Layer::conv_dilated("hand.r", 3, 3, 3, 4), Layer::Tanh],
            },
            Layer::conv_strided("hand.down", 3, 4, 6, 3),
            Layer::lstm("hand.lstm", 4, 2),
            Layer::conv_transpose("hand.up", 4, 2, 5, 2),
            Layer::conv("hand.out", 2, 1, 1),
        ],
    )
    .unwrap();
    vec![
        (hand, 61, 400),
        (build_encoder(&cfg).unwrap(), 640, 6000),
        (build_decoder(&cfg).unwrap(), 10, 60),
        (build_end_to_end(&cfg).unwrap(), 320, 6000),
        (sub.core_encoder.clone(), 40, 300),
        (sub.core_decoder.clone(), 10, 60),
        (sub.side_encoders[0].clone(), 40, 300),
        (sub.side_decoders[0].clone(), 10, 60),
        (dac_like_encoder().unwrap(), 512, 30_000),
        (dac_like_decoder().unwrap(), 1, 48),
        (dac_like_end_to_end().unwrap(), 512, 60_000),
    ]
}
