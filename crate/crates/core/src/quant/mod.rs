//! Residual vector quantization: plain VQ stages, factorized stages with
//! normalized lookup, and SimVQ stages whose codebook is a frozen base times a
//! fitted projection.

mod kmeans;
mod linalg;
mod simvq;

pub use kmeans::{fit_factorized_rvq, fit_rvq_kmeans, kmeans, KMeansOptions, KMeansResult};
pub use simvq::{
    fit_rsimvq, fit_simvq_projection, fit_simvq_projection_weighted, ProjectionFit, SimVqLayer,
    DEFAULT_RIDGE,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{Tensor, WeightStore};

/// Per-frame continuous vectors, `frames[t][d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub frames: Vec<Vec<f64>>,
    pub dim: usize,
    pub frame_rate: f64,
}

impl LatentSequence {
    pub fn new(frames: Vec<Vec<f64>>, dim: usize, frame_rate: f64) -> Result<Self> {
        if frames.iter().any(|f| f.len() != dim) {
            return Err(Error::contract(format!("every latent frame needs {dim} values")));
        }
        Ok(Self {
            frames,
            dim,
            frame_rate,
        })
    }

    /// From a channel-major network output `[dim][frames]`.
    pub fn from_channels(channels: &[Vec<f64>], frame_rate: f64) -> Self {
        let len = channels.first().map_or(0, Vec::len);
        Self {
            frames: (0..len).map(|t| channels.iter().map(|c| c[t]).collect()).collect(),
            dim: channels.len(),
            frame_rate,
        }
    }

    /// Channel-major copy `[dim][frames]`.
    pub fn to_channels(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|d| self.frames.iter().map(|f| f[d]).collect())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Joins sequences of equal length along the feature axis, in order.
    pub fn concat(parts: &[LatentSequence]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("nothing to concatenate"))?;
        if parts.iter().any(|p| p.len() != first.len()) {
            return Err(Error::contract("latent parts differ in frame count"));
        }
        let dim = parts.iter().map(|p| p.dim).sum();
        let frames = (0..first.len())
            .map(|t| parts.iter().flat_map(|p| p.frames[t].iter().copied()).collect())
            .collect();
        Ok(Self {
            frames,
            dim,
            frame_rate: first.frame_rate,
        })
    }

    /// Inverse of [`LatentSequence::concat`].
    pub fn split(&self, dims: &[usize]) -> Result<Vec<LatentSequence>> {
        if dims.iter().sum::<usize>() != self.dim {
            return Err(Error::contract(format!(
                "split sizes {dims:?} do not add up to latent dimension {}",
                self.dim
            )));
        }
        let mut start = 0;
        Ok(dims
            .iter()
            .map(|&d| {
                let part = LatentSequence {
                    frames: self.frames.iter().map(|f| f[start..start + d].to_vec()).collect(),
                    dim: d,
                    frame_rate: self.frame_rate,
                };
                start += d;
                part
            })
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.frames.iter().flatten().all(|v| v.is_finite())
    }
}

/// Codebook indices, `indices[t][stage]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSequence {
    pub indices: Vec<Vec<u16>>,
    pub num_stages: usize,
    pub codebook_size: usize,
}

impl CodeSequence {
    pub fn new(indices: Vec<Vec<u16>>, num_stages: usize, codebook_size: usize) -> Result<Self> {
        if indices.iter().any(|f| f.len() != num_stages) {
            return Err(Error::contract(format!("every code frame needs {num_stages} indices")));
        }
        if let Some(bad) = indices.iter().flatten().find(|&&i| usize::from(i) >= codebook_size) {
            return Err(Error::Range(format!("index {bad} >= codebook size {codebook_size}")));
        }
        Ok(Self {
            indices,
            num_stages,
            codebook_size,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Dense `K × d` table.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Vec<f64>,
    size: usize,
    dim: usize,
    normalized: bool,
}

impl Codebook {
    pub fn new(entries: Vec<f64>, size: usize, dim: usize) -> Result<Self> {
        if size == 0 || dim == 0 || entries.len() != size * dim {
            return Err(Error::contract(format!(
                "codebook of {size} × {dim} needs {} values, got {}",
                size * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("codebook has non-finite entries".into()));
        }
        Ok(Self {
            entries,
            size,
            dim,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::contract("codebook rows differ in length"));
        }
        Self::new(rows.concat(), rows.len(), dim)
    }

    /// Scales every row to unit L2 norm (zero rows are left as is).
    pub fn normalized(mut self) -> Self {
        for row in self.entries.chunks_exact_mut(self.dim) {
            normalize(row);
        }
        self.normalized = true;
        self
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.entries[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// Nearest row by squared Euclidean distance; the lowest index wins ties.
    pub fn nearest(&self, query: &[f64]) -> (usize, f64) {
        nearest(&self.entries, self.dim, query)
    }

    /// Smallest squared distance between two distinct rows.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.size {
            for b in a + 1..self.size {
                best = best.min(sq_dist(self.row(a), self.row(b)));
            }
        }
        best
    }
}

pub(crate) fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exhaustive nearest-row search over a flat `K × dim` table. A candidate is
/// abandoned once its partial sum exceeds the best full distance, which cannot
/// change the result because the terms are nonnegative.
pub(crate) fn nearest(table: &[f64], dim: usize, q: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, row) in table.chunks_exact(dim).enumerate() {
        let mut acc = 0.0;
        let mut abandoned = false;
        for (qc, rc) in q.chunks(8).zip(row.chunks(8)) {
            for (a, b) in qc.iter().zip(rc) {
                acc += (a - b) * (a - b);
            }
            if acc > best.1 {
                abandoned = true;
                break;
            }
        }
        if !abandoned && acc < best.1 {
            best = (k, acc);
        }
    }
    best
}

/// Factorized stage: project to a small code space, normalize, look up by
/// cosine similarity, and map the chosen unit codeword back with `out_proj`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedStage {
    /// `[code_dim][dim]`
    pub in_proj: Vec<f64>,
    /// `[dim][code_dim]`
    pub out_proj: Vec<f64>,
    pub codebook: Codebook,
    decoded: Codebook,
}

impl FactorizedStage {
    pub fn new(in_proj: Vec<f64>, out_proj: Vec<f64>, codebook: Codebook, dim: usize) -> Result<Self> {
        let c = codebook.dim();
        if in_proj.len() != c * dim || out_proj.len() != dim * c {
            return Err(Error::contract("projection shapes do not match code space"));
        }
        let codebook = codebook.normalized();
        let decoded = (0..codebook.size())
            .flat_map(|k| {
                let e = codebook.row(k);
                (0..dim)
                    .map(|i| (0..c).map(|j| out_proj[i * c + j] * e[j]).sum::<f64>())
                    .collect::<Vec<_>>()
            })
            .collect();
        let size = codebook.size();
        Ok(Self {
            in_proj,
            out_proj,
            codebook,
            decoded: Codebook::new(decoded, size, dim)?,
        })
    }

    pub fn code_dim(&self) -> usize {
        self.codebook.dim()
    }

    /// Normalized code-space image of `r`.
    pub fn project(&self, r: &[f64]) -> Vec<f64> {
        let d = r.len();
        let mut q: Vec<f64> = (0..self.code_dim())
            .map(|j| self.in_proj[j * d..(j + 1) * d].iter().zip(r).map(|(w, x)| w * x).sum())
            .collect();
        normalize(&mut q);
        q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Plain(Codebook),
    Factorized(FactorizedStage),
    SimVq(SimVqLayer),
}

impl Stage {
    pub fn size(&self) -> usize {
        self.decode_table().size()
    }

    pub fn dim(&self) -> usize {
        self.decode_table().dim()
    }

    /// The `K × d` vectors this stage reconstructs.
    pub fn decode_table(&self) -> &Codebook {
        match self {
            Stage::Plain(c) => c,
            Stage::Factorized(f) => &f.decoded,
            Stage::SimVq(s) => s.effective(),
        }
    }

    pub fn encode(&self, r: &[f64]) -> usize {
        match self {
            Stage::Plain(c) => c.nearest(r).0,
            Stage::Factorized(f) => f.codebook.nearest(&f.project(r)).0,
            Stage::SimVq(s) => s.effective().nearest(r).0,
        }
    }

    pub fn decode(&self, index: usize) -> &[f64] {
        self.decode_table().row(index)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Stage::Plain(_) => "vq",
            Stage::Factorized(_) => "factorized",
            Stage::SimVq(_) => "simvq",
        }
    }
}

/// Per-stage statistics of one quantize call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizeDiagnostics {
    /// Mean squared residual (per element) after each stage.
    pub residual_energy: Vec<f64>,
    /// `usage[stage][k]`: how many frames picked entry `k`.
    pub usage: Vec<Vec<usize>>,
}

impl QuantizeDiagnostics {
    /// Fraction of each stage's entries used at least once.
    pub fn utilization(&self) -> Vec<f64> {
        self.usage
            .iter()
            .map(|u| u.iter().filter(|&&n| n > 0).count() as f64 / u.len().max(1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Quantized {
    pub codes: CodeSequence,
    pub reconstruction: LatentSequence,
    /// `residuals[t]` is `z[t] − reconstruction[t]`, the last stage's residual.
    pub residuals: Vec<Vec<f64>>,
    pub diagnostics: QuantizeDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualQuantizer {
    stages: Vec<Stage>,
}

impl ResidualQuantizer {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        let first = stages
            .first()
            .ok_or_else(|| Error::contract("a residual quantizer needs at least one stage"))?;
        let (k, d) = (first.size(), first.dim());
        if stages.iter().any(|s| s.size() != k || s.dim() != d) {
            return Err(Error::contract("all stages must share codebook size and dimension"));
        }
        if k > usize::from(u16::MAX) + 1 {
            return Err(Error::contract("codebook size above 65536"));
        }
        Ok(Self { stages })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn codebook_size(&self) -> usize {
        self.stages[0].size()
    }

    pub fn dim(&self) -> usize {
        self.stages[0].dim()
    }

    /// The first `n` stages as a quantizer of their own.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.stages.len() {
            return Err(Error::contract(format!(
                "cannot keep {n} of {} stages",
                self.stages.len()
            )));
        }
        Ok(Self {
            stages: self.stages[..n].to_vec(),
        })
    }

    /// Quantizes each frame stage by stage. The running reconstruction is summed
    /// left to right and every residual is taken against the input, so
    /// `z − reconstruction` equals the final residual exactly.
    pub fn quantize(&self, z: &LatentSequence) -> Result<Quantized> {
        if z.dim != self.dim() {
            return Err(Error::contract(format!(
                "latent dimension {} does not match quantizer dimension {}",
                z.dim,
                self.dim()
            )));
        }
        if !z.is_finite() {
            return Err(Error::Validation("latent has non-finite values".into()));
        }
        let n = self.num_stages();
        let d = self.dim();
        let mut usage = vec![vec![0usize; self.codebook_size()]; n];
        let mut energy = vec![0.0; n];
        let mut indices = Vec::with_capacity(z.len());
        let mut recon = Vec::with_capacity(z.len());
        let mut residuals = Vec::with_capacity(z.len());
        for frame in &z.frames {
            let mut sum = vec![0.0; d];
            let mut r = frame.clone();
            let mut codes = Vec::with_capacity(n);
            for (i, stage) in self.stages.iter().enumerate() {
                let k = stage.encode(&r);
                codes.push(k as u16);
                usage[i][k] += 1;
                for ((s, e), (x, rr)) in sum.iter_mut().zip(stage.decode(k)).zip(frame.iter().zip(r.iter_mut())) {
                    *s += e;
                    *rr = x - *s;
                }
                energy[i] += r.iter().map(|v| v * v).sum::<f64>();
            }
            indices.push(codes);
            recon.push(sum);
            residuals.push(r);
        }
        let denom = (z.len() * d).max(1) as f64;
        energy.iter_mut().for_each(|e| *e /= denom);
        Ok(Quantized {
            codes: CodeSequence {
                indices,
                num_stages: n,
                codebook_size: self.codebook_size(),
            },
            reconstruction: LatentSequence {
                frames: recon,
                dim: d,
                frame_rate: z.frame_rate,
            },
            residuals,
            diagnostics: QuantizeDiagnostics {
                residual_energy: energy,
                usage,
            },
        })
    }

    /// Sums the selected vectors of each frame in stage order.
    pub fn dequantize(&self, codes: &CodeSequence, frame_rate: f64) -> Result<LatentSequence> {
        if codes.num_stages > self.num_stages() {
            return Err(Error::contract(format!(
                "stream uses {} stages but the quantizer has {}",
                codes.num_stages,
                self.num_stages()
            )));
        }
        let d = self.dim();
        let k = self.codebook_size();
        let mut frames = Vec::with_capacity(codes.len());
        for frame in &codes.indices {
            if frame.len() != codes.num_stages {
                return Err(Error::contract("code frame has the wrong number of stages"));
            }
            let mut sum = vec![0.0; d];
            for (stage, &idx) in self.stages.iter().zip(frame) {
                let idx = usize::from(idx);
                if idx >= k {
                    return Err(Error::Range(format!("index {idx} >= codebook size {k}")));
                }
                for (s, e) in sum.iter_mut().zip(stage.decode(idx)) {
                    *s += e;
                }
            }
            frames.push(sum);
        }
        Ok(LatentSequence {
            frames,
            dim: d,
            frame_rate,
        })
    }

    /// Stores stages as `rvq.stage{i}.*` or `simvq.stage{i}.*` tensors.
    pub fn to_store(&self) -> WeightStore {
        let mut store = WeightStore::new();
        let k = self.codebook_size();
        let d = self.dim();
        let t = |dims: Vec<usize>, data: &[f64]| Tensor::from_f64(dims, data).expect("shape matches");
        for (i, stage) in self.stages.iter().enumerate() {
            match stage {
                Stage::Plain(c) => store.insert(format!("rvq.stage{i}.codebook"), t(vec![k, d], c.as_slice())),
                Stage::Factorized(f) => {
                    let c = f.code_dim();
                    store.insert(format!("rvq.stage{i}.codebook"), t(vec![k, c], f.codebook.as_slice()));
                    store.insert(format!("rvq.stage{i}.in_proj"), t(vec![c, d], &f.in_proj));
                    store.insert(format!("rvq.stage{i}.out_proj"), t(vec![d, c], &f.out_proj));
                }
                Stage::SimVq(s) => {
                    store.insert(format!("simvq.stage{i}.base"), t(vec![k, d], s.base()));
                    store.insert(format!("simvq.stage{i}.proj"), t(vec![d, d], s.projection()));
                }
            }
        }
        store
    }

    /// Rebuilds a quantizer from the tensors written by [`ResidualQuantizer::to_store`].
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let tensor = |name: &str, rank: usize| -> Result<(Vec<usize>, Vec<f64>)> {
            let t = store
                .get(name)
                .ok_or_else(|| Error::Resolution(format!("missing tensor {name}")))?;
            if t.dims.len() != rank {
                return Err(Error::Resolution(format!("tensor {name} must have rank {rank}")));
            }
            Ok((t.dims.clone(), t.to_f64()))
        };
        let mut stages = Vec::new();
        for i in 0.. {
            let rvq = format!("rvq.stage{i}.codebook");
            let sim = format!("simvq.stage{i}.base");
            if store.get(&rvq).is_some() {
                let (dims, data) = tensor(&rvq, 2)?;
                let cb = Codebook::new(data, dims[0], dims[1])?;
                let in_name = format!("rvq.stage{i}.in_proj");
                if store.get(&in_name).is_some() {
                    let (in_dims, in_proj) = tensor(&in_name, 2)?;
                    let (_, out_proj) = tensor(&format!("rvq.stage{i}.out_proj"), 2)?;
                    stages.push(Stage::Factorized(FactorizedStage::new(in_proj, out_proj, cb, in_dims[1])?));
                } else {
                    stages.push(Stage::Plain(cb));
                }
            } else if store.get(&sim).is_some() {
                let (dims, base) = tensor(&sim, 2)?;
                let (pdims, proj) = tensor(&format!("simvq.stage{i}.proj"), 2)?;
                if pdims != [dims[1], dims[1]] {
                    return Err(Error::Resolution(format!("simvq.stage{i}.proj must be square")));
                }
                stages.push(Stage::SimVq(SimVqLayer::from_parts(base, proj, dims[0], dims[1])?));
            } else {
                break;
            }
        }
        if stages.is_empty() {
            return Err(Error::State("codebook file holds no quantizer stages".into()));
        }
        Self::new(stages)
    }
}

/// Codebook and commitment losses of one quantize call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizerLosses {
    /// Mean squared error between the input and its (detached) reconstruction.
    pub codebook_loss: f64,
    /// Same quantity with the roles of the stop-gradient swapped; numerically
    /// identical without a backward pass.
    pub commitment_loss: f64,
    pub codebook_weight: f64,
    pub commitment_weight: f64,
    pub utilization: Vec<f64>,
}

pub fn quantizer_diagnostics(
    rq: &ResidualQuantizer,
    z: &LatentSequence,
    reconstruction: &LatentSequence,
    codes: &CodeSequence,
) -> Result<QuantizerLosses> {
    if z.dim != reconstruction.dim || z.len() != reconstruction.len() {
        return Err(Error::contract("latent and reconstruction shapes differ"));
    }
    let mut usage = vec![vec![false; rq.codebook_size()]; codes.num_stages];
    for frame in &codes.indices {
        for (s, &i) in frame.iter().enumerate() {
            usage[s][usize::from(i)] = true;
        }
    }
    let count = (z.len() * z.dim) as f64;
    let mse = if count == 0.0 {
        0.0
    } else {
        z.frames
            .iter()
            .zip(&reconstruction.frames)
            .map(|(a, b)| sq_dist(a, b))
            .sum::<f64>()
            / count
    };
    Ok(QuantizerLosses {
        codebook_loss: mse,
        commitment_loss: mse,
        codebook_weight: 1.0,
        commitment_weight: 0.25,
        utilization: usage
            .iter()
            .map(|u| u.iter().filter(|&&b| b).count() as f64 / u.len() as f64)
            .collect(),
    })
}
