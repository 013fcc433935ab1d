//! Offline execution of a [`NetworkGraph`] with resolved weights.
//!
//! Signals are channel-major: `signal[c][t]`. Every output value is
//! accumulated as bias first, then input channels in order, then kernel taps in
//! order. The streaming session reuses the same kernels, so chunked and offline
//! execution agree bit for bit.

use super::graph::{Layer, NetworkGraph};
use super::weights::WeightStore;
use crate::error::{Error, Result};

pub type Signal = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub(crate) struct ConvOp {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
    /// `[out][in][k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvTOp {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[in][out][k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCell {
    pub input: usize,
    /// `[4H][input]`, gate order input, forget, cell, output.
    pub w_ih: Vec<f64>,
    /// `[4H][H]`
    pub w_hh: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmOp {
    pub hidden: usize,
    pub cells: Vec<LstmCell>,
    pub skip: bool,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Conv(ConvOp),
    ConvT(ConvTOp),
    Lstm(LstmOp),
    Elu,
    Tanh,
    Residual(Vec<Op>),
}

/// A graph bound to its weights, ready to run.
#[derive(Debug, Clone)]
pub struct Network {
    pub(crate) graph: NetworkGraph,
    pub(crate) ops: Vec<Op>,
}

fn fetch(store: &WeightStore, name: &str) -> Vec<f64> {
    store.get(name).map(|t| t.to_f64()).unwrap_or_default()
}

fn compile(layers: &[Layer], store: &WeightStore) -> Vec<Op> {
    layers
        .iter()
        .map(|l| match l {
            Layer::Conv1d(c) => Op::Conv(ConvOp {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                kernel: c.kernel,
                stride: c.stride,
                dilation: c.dilation,
                pad: c.left_pad(),
                weight: fetch(store, &format!("{}.weight", c.name)),
                bias: fetch(store, &format!("{}.bias", c.name)),
            }),
            Layer::ConvTranspose1d(c) => Op::ConvT(ConvTOp {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                kernel: c.kernel,
                stride: c.stride,
                weight: fetch(store, &format!("{}.weight", c.name)),
                bias: fetch(store, &format!("{}.bias", c.name)),
            }),
            Layer::Lstm(lstm) => Op::Lstm(LstmOp {
                hidden: lstm.hidden,
                skip: lstm.skip,
                cells: (0..lstm.layers)
                    .map(|i| {
                        let p = format!("{}.l{i}", lstm.name);
                        LstmCell {
                            input: if i == 0 { lstm.input } else { lstm.hidden },
                            w_ih: fetch(store, &format!("{p}.weight_ih")),
                            w_hh: fetch(store, &format!("{p}.weight_hh")),
                            bias: fetch(store, &format!("{p}.bias")),
                        }
                    })
                    .collect(),
            }),
            Layer::Elu => Op::Elu,
            Layer::Tanh => Op::Tanh,
            Layer::Residual { layers } => Op::Residual(compile(layers, store)),
        })
        .collect()
}

impl Network {
    /// Validates the graph and its weights, then converts weights to f64.
    pub fn new(graph: &NetworkGraph, weights: &WeightStore) -> Result<Self> {
        graph.validate()?;
        weights.validate_for(graph)?;
        Ok(Self {
            graph: graph.clone(),
            ops: compile(&graph.layers, weights),
        })
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn in_channels(&self) -> usize {
        self.graph.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.graph.out_channels()
    }

    /// Runs the whole input at once. Inputs whose length is not a multiple of a
    /// strided layer's stride are zero-extended to a whole block.
    pub fn forward(&self, input: &[Vec<f64>]) -> Result<Signal> {
        check_signal(input, self.in_channels())?;
        Ok(run_ops(&self.ops, input.to_vec()))
    }
}

pub(crate) fn check_signal(input: &[Vec<f64>], channels: usize) -> Result<usize> {
    if input.len() != channels {
        return Err(Error::contract(format!(
            "network expects {channels} input channels, got {}",
            input.len()
        )));
    }
    let len = input.first().map_or(0, Vec::len);
    if input.iter().any(|c| c.len() != len) {
        return Err(Error::contract("input channels differ in length"));
    }
    if input.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("network input has non-finite values".into()));
    }
    Ok(len)
}

fn run_ops(ops: &[Op], mut x: Signal) -> Signal {
    for op in ops {
        x = match op {
            Op::Conv(c) => {
                let len = x.first().map_or(0, Vec::len);
                conv_range(c, &x, 0, 0, len.div_ceil(c.stride))
            }
            Op::ConvT(c) => {
                let len = x.first().map_or(0, Vec::len);
                conv_t_range(c, &x, 0, 0, len * c.stride)
            }
            Op::Lstm(l) => {
                let mut state = LstmState::new(l);
                lstm_run(l, &mut state, &x)
            }
            Op::Elu => map(x, elu),
            Op::Tanh => map(x, f64::tanh),
            Op::Residual(inner) => {
                let y = run_ops(inner, x.clone());
                add(x, &y)
            }
        };
    }
    x
}

fn map(mut x: Signal, f: fn(f64) -> f64) -> Signal {
    x.iter_mut().flatten().for_each(|v| *v = f(*v));
    x
}

pub(crate) fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

pub(crate) fn add(mut x: Signal, y: &Signal) -> Signal {
    for (a, b) in x.iter_mut().zip(y) {
        for (p, q) in a.iter_mut().zip(b) {
            *p += q;
        }
    }
    x
}

/// Conv outputs `out_start..out_end`. `x[c][i]` holds input sample
/// `x_origin + i`; samples outside the buffer read as zero.
pub(crate) fn conv_range(
    c: &ConvOp,
    x: &[Vec<f64>],
    x_origin: usize,
    out_start: usize,
    out_end: usize,
) -> Signal {
    let n_out = out_end.saturating_sub(out_start);
    let len = x.first().map_or(0, Vec::len) as isize;
    let s = c.stride as isize;
    let mut out = Vec::with_capacity(c.out_ch);
    for o in 0..c.out_ch {
        let mut row = vec![c.bias[o]; n_out];
        for (ic, xc) in x.iter().enumerate() {
            let wrow = &c.weight[(o * c.in_ch + ic) * c.kernel..][..c.kernel];
            for (j, &w) in wrow.iter().enumerate() {
                // buffer index of output t's tap j: t·s + off
                let off = (j * c.dilation) as isize - c.pad as isize - x_origin as isize;
                let t_lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
                let t_hi = if len - 1 - off < 0 { 0 } else { (len - 1 - off) / s + 1 };
                let lo = (t_lo.max(out_start as isize) as usize).min(out_end);
                let hi = (t_hi.max(0) as usize).min(out_end).max(lo);
                if hi == lo {
                    continue;
                }
                if c.stride == 1 {
                    let base = (lo as isize + off) as usize;
                    let src = &xc[base..base + (hi - lo)];
                    for (r, &v) in row[lo - out_start..hi - out_start].iter_mut().zip(src) {
                        *r += w * v;
                    }
                } else {
                    for t in lo..hi {
                        row[t - out_start] += w * xc[(t as isize * s + off) as usize];
                    }
                }
            }
        }
        out.push(row);
    }
    out
}

/// Transposed-conv outputs `out_start..out_end`; `x[c][i]` is input frame
/// `x_origin + i`. Outputs past `len·stride` of a finite input are dropped
/// (causal trim).
pub(crate) fn conv_t_range(
    c: &ConvTOp,
    x: &[Vec<f64>],
    x_origin: usize,
    out_start: usize,
    out_end: usize,
) -> Signal {
    let n_out = out_end.saturating_sub(out_start);
    let s = c.stride;
    let mut out = Vec::with_capacity(c.out_ch);
    for o in 0..c.out_ch {
        let mut row = vec![c.bias[o]; n_out];
        for (ic, xc) in x.iter().enumerate() {
            let wrow = &c.weight[(ic * c.out_ch + o) * c.kernel..][..c.kernel];
            for (j, &w) in wrow.iter().enumerate() {
                for (i, &v) in xc.iter().enumerate() {
                    let u = (x_origin + i) * s + j;
                    if u >= out_start && u < out_end {
                        row[u - out_start] += w * v;
                    }
                }
            }
        }
        out.push(row);
    }
    out
}

#[derive(Debug, Clone)]
pub(crate) struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn new(op: &LstmOp) -> Self {
        Self {
            h: vec![vec![0.0; op.hidden]; op.cells.len()],
            c: vec![vec![0.0; op.hidden]; op.cells.len()],
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub(crate) fn lstm_run(op: &LstmOp, state: &mut LstmState, x: &[Vec<f64>]) -> Signal {
    let steps = x.first().map_or(0, Vec::len);
    let hdim = op.hidden;
    let mut out = vec![vec![0.0; steps]; hdim];
    let mut gates = vec![0.0; 4 * hdim];
    let mut input = vec![0.0; x.len()];
    for t in 0..steps {
        for (v, xc) in input.iter_mut().zip(x) {
            *v = xc[t];
        }
        let mut layer_in = input.clone();
        for (l, cell) in op.cells.iter().enumerate() {
            for (g, gate) in gates.iter_mut().enumerate() {
                let wi = &cell.w_ih[g * cell.input..][..cell.input];
                let wh = &cell.w_hh[g * hdim..][..hdim];
                let mut acc = cell.bias[g];
                for (w, v) in wi.iter().zip(&layer_in) {
                    acc += w * v;
                }
                for (w, v) in wh.iter().zip(&state.h[l]) {
                    acc += w * v;
                }
                *gate = acc;
            }
            let (h, c) = (&mut state.h[l], &mut state.c[l]);
            for k in 0..hdim {
                let i = sigmoid(gates[k]);
                let f = sigmoid(gates[hdim + k]);
                let g = gates[2 * hdim + k].tanh();
                let o = sigmoid(gates[3 * hdim + k]);
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
            layer_in.clone_from(h);
        }
        for k in 0..hdim {
            out[k][t] = if op.skip { layer_in[k] + input[k] } else { layer_in[k] };
        }
    }
    out
}
