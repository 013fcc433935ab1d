//! Static compute and latency analysis of layer graphs: multiply-accumulates
//! per second and receptive field.
//!
//! MAC conventions (biases and activations are free):
//! - `Conv1d`: `in·out·kernel` per output step
//! - `ConvTranspose1d`: `in·out·kernel` per input step
//! - `Lstm`: `4·(in·hidden + hidden²)` per step and layer
//!
//! The receptive field is computed by propagating the dependency interval of
//! one output step backwards through every layer. LSTMs pass the interval
//! through unchanged and mark the graph as stateful, so the reported figure
//! covers the convolutional path only.

use serde::Serialize;

use crate::nn::{Layer, NetworkGraph};

pub const DEFAULT_CEILING_GMACS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerBudget {
    pub name: String,
    pub kind: &'static str,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Steps per second entering the layer.
    pub in_rate: f64,
    pub out_rate: f64,
    pub macs_per_second: f64,
    /// Receptive field (input steps) of the graph up to and including the
    /// top-level layer this row belongs to.
    pub cumulative_rf: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceptiveField {
    /// Span of graph input steps that can influence one output step.
    pub steps: u64,
    /// `steps × input_stride`.
    pub samples: u64,
    /// Input samples needed past the end of an output step's own time span.
    pub lookahead_samples: u64,
    /// The graph holds recurrent state, so its true history is unbounded.
    pub stateful: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub graph: String,
    pub sample_rate: u32,
    pub input_stride: usize,
    pub layers: Vec<LayerBudget>,
    pub total_macs_per_second: f64,
    pub receptive_field: ReceptiveField,
}

impl BudgetReport {
    pub fn gmacs(&self) -> f64 {
        self.total_macs_per_second / 1e9
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "graph {} @ {} Hz (input stride {})\n{:<40} {:<16} {:>6} {:>6} {:>12} {:>14} {:>8}\n",
            self.graph, self.sample_rate, self.input_stride, "layer", "type", "in", "out", "out_rate", "MACs/s", "RF"
        );
        for l in &self.layers {
            out += &format!(
                "{:<40} {:<16} {:>6} {:>6} {:>12.4} {:>14.0} {:>8}\n",
                l.name, l.kind, l.in_channels, l.out_channels, l.out_rate, l.macs_per_second, l.cumulative_rf
            );
        }
        let rf = &self.receptive_field;
        out += &format!(
            "total {:.4} GMACs/s, receptive field {} steps = {} samples, lookahead {} samples{}\n",
            self.gmacs(),
            rf.steps,
            rf.samples,
            rf.lookahead_samples,
            if rf.stateful { ", stateful (LSTM history not counted)" } else { "" }
        );
        out
    }
}

fn layer_macs(layer: &Layer, in_ch: usize, in_len: f64) -> f64 {
    match layer {
        Layer::Conv1d(c) => (c.in_ch * c.out_ch * c.kernel) as f64 * in_len / c.stride as f64,
        Layer::ConvTranspose1d(c) => (c.in_ch * c.out_ch * c.kernel) as f64 * in_len,
        Layer::Lstm(l) => {
            (0..l.layers)
                .map(|i| {
                    let input = if i == 0 { l.input } else { l.hidden };
                    4 * (input * l.hidden + l.hidden * l.hidden)
                })
                .sum::<usize>() as f64
                * in_len
        }
        Layer::Residual { layers } => {
            let mut len = in_len;
            let mut ch = in_ch;
            let mut total = 0.0;
            for l in layers {
                total += layer_macs(l, ch, len);
                len = next_len(l, len);
                ch = next_channels(l, ch);
            }
            total
        }
        Layer::Elu | Layer::Tanh => 0.0,
    }
}

fn next_len(layer: &Layer, len: f64) -> f64 {
    match layer {
        Layer::Conv1d(c) => len / c.stride as f64,
        Layer::ConvTranspose1d(c) => len * c.stride as f64,
        _ => len,
    }
}

fn next_channels(layer: &Layer, ch: usize) -> usize {
    match layer {
        Layer::Conv1d(c) => c.out_ch,
        Layer::ConvTranspose1d(c) => c.out_ch,
        Layer::Lstm(l) => l.hidden,
        _ => ch,
    }
}

/// Exact multiply-accumulate count of one forward pass over `in_len` input
/// steps, counting zero padding and trimmed transposed-conv tails.
pub fn macs_for_input(graph: &NetworkGraph, in_len: usize) -> u128 {
    fn walk(layers: &[Layer], mut len: usize) -> (u128, usize) {
        let mut total = 0u128;
        for l in layers {
            match l {
                Layer::Conv1d(c) => {
                    len = len.div_ceil(c.stride);
                    total += (c.in_ch * c.out_ch * c.kernel) as u128 * len as u128;
                }
                Layer::ConvTranspose1d(c) => {
                    total += (c.in_ch * c.out_ch * c.kernel) as u128 * len as u128;
                    len *= c.stride;
                }
                Layer::Lstm(lstm) => {
                    for i in 0..lstm.layers {
                        let input = if i == 0 { lstm.input } else { lstm.hidden };
                        total += (4 * (input * lstm.hidden + lstm.hidden * lstm.hidden)) as u128 * len as u128;
                    }
                }
                Layer::Residual { layers } => total += walk(layers, len).0,
                Layer::Elu | Layer::Tanh => {}
            }
        }
        (total, len)
    }
    walk(&graph.layers, in_len).0
}

fn flatten_rows(
    layers: &[Layer],
    mut ch: usize,
    mut rate: f64,
    rf: u64,
    rows: &mut Vec<LayerBudget>,
) -> (usize, f64) {
    for l in layers {
        if let Layer::Residual { layers: inner } = l {
            flatten_rows(inner, ch, rate, rf, rows);
            continue;
        }
        let out_rate = next_len(l, rate);
        let out_ch = next_channels(l, ch);
        rows.push(LayerBudget {
            name: l.name(),
            kind: l.kind(),
            in_channels: ch,
            out_channels: out_ch,
            in_rate: rate,
            out_rate,
            macs_per_second: layer_macs(l, ch, rate),
            cumulative_rf: rf,
        });
        ch = out_ch;
        rate = out_rate;
    }
    (ch, rate)
}

/// Per-layer and total MACs per second of audio at `sample_rate`.
pub fn count_macs(graph: &NetworkGraph, sample_rate: u32) -> BudgetReport {
    let mut rows = Vec::new();
    let mut ch = graph.in_channels;
    let mut rate = f64::from(sample_rate) / graph.input_stride as f64;
    for i in 0..graph.layers.len() {
        let prefix = NetworkGraph {
            name: graph.name.clone(),
            in_channels: graph.in_channels,
            input_stride: graph.input_stride,
            layers: graph.layers[..=i].to_vec(),
        };
        let rf = receptive_field(&prefix).steps;
        (ch, rate) = flatten_rows(&graph.layers[i..=i], ch, rate, rf, &mut rows);
    }
    let total = rows.iter().fold(0.0, |acc, r| acc + r.macs_per_second);
    BudgetReport {
        graph: graph.name.clone(),
        sample_rate,
        input_stride: graph.input_stride,
        layers: rows,
        total_macs_per_second: total,
        receptive_field: receptive_field(graph),
    }
}

fn div_floor(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -(-a).div_euclid(b)
}

/// Input interval `[lo, hi]` that output interval `[a, b]` of `layers` reads.
fn back(layers: &[Layer], mut a: i64, mut b: i64) -> (i64, i64) {
    for l in layers.iter().rev() {
        (a, b) = match l {
            Layer::Conv1d(c) => {
                let s = c.stride as i64;
                let p = c.left_pad() as i64;
                (a * s - p, b * s - p + ((c.kernel - 1) * c.dilation) as i64)
            }
            Layer::ConvTranspose1d(c) => {
                let s = c.stride as i64;
                (div_ceil(a - c.kernel as i64 + 1, s), div_floor(b, s))
            }
            Layer::Residual { layers } => {
                let (lo, hi) = back(layers, a, b);
                (lo.min(a), hi.max(b))
            }
            Layer::Lstm(_) | Layer::Elu | Layer::Tanh => (a, b),
        };
    }
    (a, b)
}

/// Product of every transposed-conv stride. Dependency patterns repeat after
/// this many output steps even when downsampling cancels the rate change.
fn upsampling_period(layers: &[Layer]) -> i64 {
    layers
        .iter()
        .map(|l| match l {
            Layer::ConvTranspose1d(c) => c.stride as i64,
            Layer::Residual { layers } => upsampling_period(layers),
            _ => 1,
        })
        .product()
}

/// Receptive field of one output step, maximized over the output phases of
/// one upsampling period, far from the signal start.
pub fn receptive_field(graph: &NetworkGraph) -> ReceptiveField {
    let (down, up) = graph.rate_change();
    let period = upsampling_period(&graph.layers);
    // output samples per input step: up / down
    let out_stride = graph.input_stride as f64 * down as f64 / up as f64;
    let base = 1_000_000 * period;
    let mut steps = 0;
    let mut lookahead = 0.0f64;
    for u in base..base + period {
        let (lo, hi) = back(&graph.layers, u, u);
        steps = steps.max((hi - lo + 1) as u64);
        let ahead = hi as f64 * graph.input_stride as f64 + 1.0 - (u + 1) as f64 * out_stride;
        lookahead = lookahead.max(ahead);
    }
    ReceptiveField {
        steps,
        samples: steps * graph.input_stride as u64,
        lookahead_samples: lookahead.max(0.0).round() as u64,
        stateful: graph.has_lstm(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphRole {
    Encoder,
    Decoder,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetVerdict {
    pub graph: String,
    pub role: GraphRole,
    pub gmacs: f64,
    pub ceiling_gmacs: f64,
    /// `None` when the graph is exempt (encoders do not run at decode time).
    pub pass: Option<bool>,
}

/// Checks each report against the decode-time ceiling.
pub fn compare_budget(reports: &[(BudgetReport, GraphRole)], ceiling_gmacs: f64) -> Vec<BudgetVerdict> {
    reports
        .iter()
        .map(|(r, role)| BudgetVerdict {
            graph: r.graph.clone(),
            role: *role,
            gmacs: r.gmacs(),
            ceiling_gmacs,
            pass: match role {
                GraphRole::Encoder => None,
                _ => Some(r.gmacs() <= ceiling_gmacs),
            },
        })
        .collect()
}

pub fn verdict_table(verdicts: &[BudgetVerdict]) -> String {
    let mut out = format!("{:<24} {:<8} {:>12} {:>10}  result\n", "graph", "role", "GMACs/s", "ceiling");
    for v in verdicts {
        let result = match v.pass {
            None => "exempt",
            Some(true) => "pass",
            Some(false) => "FAIL",
        };
        let role = match v.role {
            GraphRole::Encoder => "encoder",
            GraphRole::Decoder => "decoder",
            GraphRole::Other => "other",
        };
        out += &format!("{:<24} {:<8} {:>12.4} {:>10.1}  {result}\n", v.graph, role, v.gmacs, v.ceiling_gmacs);
    }
    out
}
