//! Chunked execution with persistent per-layer state.
//!
//! Each convolution keeps the input history its next output block needs,
//! transposed convolutions keep the frames whose kernels still overlap new
//! outputs, and LSTMs keep `(h, c)`. Strided layers emit only complete blocks
//! and hold the remainder until the next push.

use super::forward::{
    add, check_signal, conv_range, conv_t_range, elu, lstm_run, ConvOp, ConvTOp, LstmState,
    Network, Op, Signal,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum State {
    Conv {
        buf: Signal,
        /// Absolute index of `buf[_][0]`.
        origin: usize,
        next_out: usize,
    },
    ConvT {
        buf: Signal,
        origin: usize,
    },
    Lstm(LstmState),
    Stateless,
    Residual {
        inner: Vec<State>,
        /// Inputs whose branch output has not arrived yet.
        pending: Signal,
    },
}

fn init(ops: &[Op]) -> Vec<State> {
    ops.iter()
        .map(|op| match op {
            Op::Conv(c) => State::Conv {
                buf: vec![Vec::new(); c.in_ch],
                origin: 0,
                next_out: 0,
            },
            Op::ConvT(c) => State::ConvT {
                buf: vec![Vec::new(); c.in_ch],
                origin: 0,
            },
            Op::Lstm(l) => State::Lstm(LstmState::new(l)),
            Op::Elu | Op::Tanh => State::Stateless,
            Op::Residual(inner) => State::Residual {
                inner: init(inner),
                pending: Vec::new(),
            },
        })
        .collect()
}

fn len_of(x: &Signal) -> usize {
    x.first().map_or(0, Vec::len)
}

fn conv_step(c: &ConvOp, buf: &mut Signal, origin: &mut usize, next_out: &mut usize, x: Signal) -> Signal {
    for (b, new) in buf.iter_mut().zip(x) {
        b.extend(new);
    }
    let available = *origin + len_of(buf);
    // output t is complete once input t·s + s − 1 has arrived
    let end = available / c.stride;
    let y = conv_range(c, buf, *origin, *next_out, end);
    *next_out = end;
    let keep_from = (end * c.stride).saturating_sub(c.pad).max(*origin);
    let drop = keep_from - *origin;
    for b in buf.iter_mut() {
        b.drain(..drop);
    }
    *origin = keep_from;
    y
}

fn conv_t_step(c: &ConvTOp, buf: &mut Signal, origin: &mut usize, x: Signal) -> Signal {
    let start = *origin + len_of(buf);
    for (b, new) in buf.iter_mut().zip(x) {
        b.extend(new);
    }
    let end = *origin + len_of(buf);
    let y = conv_t_range(c, buf, *origin, start * c.stride, end * c.stride);
    let keep_from = end.saturating_sub((c.kernel - 1) / c.stride).max(*origin);
    let drop = keep_from - *origin;
    for b in buf.iter_mut() {
        b.drain(..drop);
    }
    *origin = keep_from;
    y
}

fn step(ops: &[Op], states: &mut [State], mut x: Signal) -> Signal {
    for (op, st) in ops.iter().zip(states.iter_mut()) {
        x = match (op, st) {
            (Op::Conv(c), State::Conv { buf, origin, next_out }) => conv_step(c, buf, origin, next_out, x),
            (Op::ConvT(c), State::ConvT { buf, origin }) => conv_t_step(c, buf, origin, x),
            (Op::Lstm(l), State::Lstm(s)) => lstm_run(l, s, &x),
            (Op::Elu, _) => {
                x.iter_mut().flatten().for_each(|v| *v = elu(*v));
                x
            }
            (Op::Tanh, _) => {
                x.iter_mut().flatten().for_each(|v| *v = v.tanh());
                x
            }
            (Op::Residual(inner_ops), State::Residual { inner, pending }) => {
                if pending.is_empty() {
                    *pending = vec![Vec::new(); x.len()];
                }
                for (p, v) in pending.iter_mut().zip(&x) {
                    p.extend_from_slice(v);
                }
                let y = step(inner_ops, inner, x);
                let n = len_of(&y);
                let ready: Signal = pending.iter_mut().map(|p| p.drain(..n).collect()).collect();
                add(ready, &y)
            }
            _ => unreachable!("state layout mirrors the op list"),
        };
    }
    x
}

/// A single-threaded streaming run of one [`Network`].
#[derive(Debug, Clone)]
pub struct StreamSession<'a> {
    net: &'a Network,
    states: Vec<State>,
    next_index: usize,
}

impl Network {
    pub fn stream(&self) -> StreamSession<'_> {
        StreamSession {
            net: self,
            states: init(&self.ops),
            next_index: 0,
        }
    }
}

impl StreamSession<'_> {
    /// Index of the first input step the next chunk must start at.
    pub fn next_index(&self) -> usize {
        self.next_index
    }

    /// Feeds input steps `start_index..start_index + len`. Returns whatever
    /// output became final.
    pub fn push(&mut self, start_index: usize, chunk: &[Vec<f64>]) -> Result<Signal> {
        let len = check_signal(chunk, self.net.in_channels())?;
        if len == 0 {
            return Ok(vec![Vec::new(); self.net.out_channels()]);
        }
        if start_index != self.next_index {
            return Err(Error::Protocol(format!(
                "chunk starts at step {start_index}, session expects {}",
                self.next_index
            )));
        }
        self.next_index += len;
        Ok(step(&self.net.ops, &mut self.states, chunk.to_vec()))
    }

    pub fn reset(&mut self) {
        self.states = init(&self.net.ops);
        self.next_index = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::{Layer, NetworkGraph};
    use crate::nn::weights::WeightStore;

    fn toy() -> Network {
        let layers = vec![
            Layer::conv("toy.in", 2, 4, 3),
            Layer::Elu,
            Layer::conv_strided("toy.down", 4, 4, 4, 2),
            Layer::lstm("toy.lstm", 4, 1),
            Layer::conv_transpose("toy.up", 4, 3, 6, 3),
            Layer::Residual {
                layers: vec![Layer::Elu, Layer::conv_dilated("toy.res", 3, 3, 3, 2)],
            },
            Layer::Tanh,
        ];
        let g = NetworkGraph::new("toy", 2, 1, layers).unwrap();
        Network::new(&g, &WeightStore::random(&g, 5)).unwrap()
    }

    fn input(len: usize) -> Signal {
        (0..2)
            .map(|c| (0..len).map(|t| ((t * 31 + c * 7) % 17) as f64 / 8.0 - 1.0).collect())
            .collect()
    }

    #[test]
    fn chunked_equals_offline() {
        let net = toy();
        let x = input(60);
        let offline = net.forward(&x).unwrap();
        for chunk in [1, 2, 5, 7, 60] {
            let mut s = net.stream();
            let mut got: Signal = vec![Vec::new(); 3];
            let mut t = 0;
            while t < 60 {
                let n = chunk.min(60 - t);
                let part: Signal = x.iter().map(|c| c[t..t + n].to_vec()).collect();
                for (g, p) in got.iter_mut().zip(s.push(t, &part).unwrap()) {
                    g.extend(p);
                }
                t += n;
            }
            assert_eq!(got, offline, "chunk {chunk}");
        }
    }

    #[test]
    fn protocol_and_reset() {
        let net = toy();
        let x = input(8);
        let mut s = net.stream();
        let first = s.push(0, &x).unwrap();
        assert!(matches!(s.push(3, &x), Err(Error::Protocol(_))));
        let empty = s.push(99, &[vec![], vec![]]).unwrap();
        assert!(empty.iter().all(Vec::is_empty));
        s.reset();
        assert_eq!(s.push(0, &x).unwrap(), first);
    }
}
