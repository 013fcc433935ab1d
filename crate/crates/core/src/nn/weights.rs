//! Named tensor store and its little-endian `TQCW` container.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Layer, NetworkGraph};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"TQCW";
pub const WEIGHTS_VERSION: u8 = 1;

/// Row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::contract(format!(
                "tensor dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; n],
        }
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Tensors keyed by name. Iteration (and serialization) is in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

/// Names and shapes of every tensor a parameterized layer needs.
pub fn layer_tensors(layer: &Layer) -> Vec<(String, Vec<usize>)> {
    match layer {
        Layer::Conv1d(c) => vec![
            (format!("{}.weight", c.name), vec![c.out_ch, c.in_ch, c.kernel]),
            (format!("{}.bias", c.name), vec![c.out_ch]),
        ],
        Layer::ConvTranspose1d(c) => vec![
            (format!("{}.weight", c.name), vec![c.in_ch, c.out_ch, c.kernel]),
            (format!("{}.bias", c.name), vec![c.out_ch]),
        ],
        Layer::Lstm(l) => (0..l.layers)
            .flat_map(|i| {
                let input = if i == 0 { l.input } else { l.hidden };
                let p = format!("{}.l{i}", l.name);
                vec![
                    (format!("{p}.weight_ih"), vec![4 * l.hidden, input]),
                    (format!("{p}.weight_hh"), vec![4 * l.hidden, l.hidden]),
                    (format!("{p}.bias"), vec![4 * l.hidden]),
                ]
            })
            .collect(),
        _ => Vec::new(),
    }
}

fn fan_in(layer: &Layer) -> usize {
    match layer {
        Layer::Conv1d(c) => c.in_ch * c.kernel,
        Layer::ConvTranspose1d(c) => c.in_ch * c.kernel.div_ceil(c.stride),
        Layer::Lstm(l) => l.hidden,
        _ => 1,
    }
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    /// Moves every tensor of `other` into `self`, replacing duplicates.
    pub fn merge(&mut self, other: WeightStore) {
        self.tensors.extend(other.tensors);
    }

    /// Uniform `±1/√fan_in` weights from a ChaCha8 stream seeded with `seed`.
    pub fn random(graph: &NetworkGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::new();
        for layer in graph.parameterized_layers() {
            let bound = 1.0 / (fan_in(layer) as f64).sqrt();
            for (name, dims) in layer_tensors(layer) {
                let n: usize = dims.iter().product();
                let data = (0..n)
                    .map(|_| rng.random_range(-bound..bound) as f32)
                    .collect();
                store.insert(name, Tensor { dims, data });
            }
        }
        store
    }

    pub fn zeros(graph: &NetworkGraph) -> Self {
        let mut store = Self::new();
        for layer in graph.parameterized_layers() {
            for (name, dims) in layer_tensors(layer) {
                store.insert(name, Tensor::zeros(dims));
            }
        }
        store
    }

    /// Sets every `*.bias` tensor to zero.
    pub fn zero_biases(mut self) -> Self {
        for (name, t) in self.tensors.iter_mut() {
            if name.ends_with(".bias") {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        self
    }

    /// Checks that every tensor the graph needs is present with the right shape
    /// and finite values, and that no tensor under the graph's name prefix is
    /// left unused.
    pub fn validate_for(&self, graph: &NetworkGraph) -> Result<()> {
        let mut used = BTreeSet::new();
        for layer in graph.parameterized_layers() {
            for (name, dims) in layer_tensors(layer) {
                let t = self
                    .get(&name)
                    .ok_or_else(|| Error::Resolution(format!("missing tensor {name}")))?;
                if t.dims != dims {
                    return Err(Error::Resolution(format!(
                        "tensor {name} has shape {:?}, layer needs {dims:?}",
                        t.dims
                    )));
                }
                if t.data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation(format!("tensor {name} has non-finite values")));
                }
                used.insert(name);
            }
        }
        let prefix = format!("{}.", graph.name);
        if let Some(orphan) = self
            .names()
            .find(|n| n.starts_with(&prefix) && !used.contains(*n))
        {
            return Err(Error::Resolution(format!(
                "tensor {orphan} does not belong to any layer of {}",
                graph.name
            )));
        }
        Ok(())
    }

    /// Serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        9 + self
            .tensors
            .iter()
            .map(|(n, t)| 2 + n.len() + 1 + 4 * t.dims.len() + 4 * t.data.len())
            .sum::<usize>()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.push(WEIGHTS_VERSION);
        let count = u32::try_from(self.tensors.len())
            .map_err(|_| Error::contract("too many tensors"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.tensors {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::contract(format!("tensor name too long: {name}")))?;
            let rank = u8::try_from(t.dims.len())
                .map_err(|_| Error::contract(format!("tensor {name} has too many dims")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(rank);
            for &d in &t.dims {
                let d = u32::try_from(d)
                    .map_err(|_| Error::contract(format!("tensor {name} dim too large")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { data: bytes, pos: 0 };
        if r.take(4, "magic")? != WEIGHTS_MAGIC {
            return Err(Error::parse(0, "not a TQCW weight file (bad magic)"));
        }
        let version = r.take(1, "version")?[0];
        if version != WEIGHTS_VERSION {
            return Err(Error::parse(4, format!("unknown weight file version {version}")));
        }
        let count = r.u32("tensor count")?;
        let mut store = Self::new();
        for _ in 0..count {
            let name_at = r.pos;
            let name_len = usize::from(r.u16("name length")?);
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| Error::parse(name_at + 2, "tensor name is not UTF-8"))?
                .to_string();
            let rank = usize::from(r.take(1, "rank")?[0]);
            let mut dims = Vec::with_capacity(rank);
            let mut elems: usize = 1;
            for _ in 0..rank {
                let at = r.pos;
                let d = r.u32("dimension")? as usize;
                elems = elems
                    .checked_mul(d)
                    .filter(|&e| e <= (bytes.len() - r.pos) / 4)
                    .ok_or_else(|| Error::parse(at, format!("dimensions of {name} overflow the file")))?;
                dims.push(d);
            }
            let raw = r.take(4 * elems, "tensor data")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if store.tensors.insert(name.clone(), Tensor { dims, data }).is_some() {
                return Err(Error::parse(name_at, format!("duplicate tensor {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::parse(r.pos, "trailing bytes after last tensor"));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::parse(self.pos, format!("truncated {what}")));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> WeightStore {
        let mut s = WeightStore::new();
        s.insert("b", Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.0, f32::MIN_POSITIVE, 0.0, -0.0]).unwrap());
        s.insert("a", Tensor::new(vec![], vec![7.0]).unwrap());
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample_store();
        let bytes = s.to_bytes().unwrap();
        assert_eq!(bytes.len(), s.encoded_len());
        let back = WeightStore::from_bytes(&bytes).unwrap();
        for (name, t) in s.iter() {
            let b = back.get(name).unwrap();
            assert_eq!(t.dims, b.dims);
            let bits: Vec<u32> = t.data.iter().map(|v| v.to_bits()).collect();
            let back_bits: Vec<u32> = b.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, back_bits);
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        let bytes = sample_store().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(WeightStore::from_bytes(&bad), Err(Error::Parse { offset: 0, .. })));
        for cut in 0..bytes.len() {
            assert!(WeightStore::from_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn huge_dims_are_rejected_without_allocating() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(WEIGHTS_MAGIC);
        bytes.push(WEIGHTS_VERSION);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(b'x');
        bytes.push(2);
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(WeightStore::from_bytes(&bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn random_init_is_seeded() {
        let g = NetworkGraph::new("g", 2, 1, vec![Layer::conv("g.c", 2, 3, 5)]).unwrap();
        assert_eq!(WeightStore::random(&g, 1), WeightStore::random(&g, 1));
        assert_ne!(WeightStore::random(&g, 1), WeightStore::random(&g, 2));
        WeightStore::random(&g, 1).validate_for(&g).unwrap();
    }

    #[test]
    fn validation_finds_missing_orphan_and_nan() {
        let g = NetworkGraph::new("g", 1, 1, vec![Layer::conv("g.c", 1, 1, 3)]).unwrap();
        let mut s = WeightStore::zeros(&g);
        s.insert("g.extra", Tensor::zeros(vec![1]));
        assert!(matches!(s.validate_for(&g), Err(Error::Resolution(_))));
        s.remove("g.extra");
        s.get_mut("g.c.weight").unwrap().data[1] = f32::NAN;
        assert!(matches!(s.validate_for(&g), Err(Error::Validation(_))));
        s.get_mut("g.c.weight").unwrap().data[1] = 0.0;
        s.remove("g.c.bias");
        assert!(matches!(s.validate_for(&g), Err(Error::Resolution(_))));
    }
}
