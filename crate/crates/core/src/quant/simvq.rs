use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kmeans::{check_training, stage_seed, KMeansOptions, ResidualTracker};
use super::linalg::{covariance, covariance_factor, weighted_ridge};
use super::{nearest, Codebook, ResidualQuantizer, Stage};
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE: f64 = 1e-6;

/// VQ layer whose effective codebook is `C·W`: `C` (`K × d`) is frozen at
/// construction and only the `d × d` projection `W` changes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimVqLayer {
    base: Vec<f64>,
    proj: Vec<f64>,
    effective: Codebook,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionFit {
    /// `(weighted) ||C·W − targets||_F²` after the update.
    pub residual: f64,
    pub projection_norm: f64,
}

fn matmul(a: &[f64], b: &[f64], n: usize, p: usize, q: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * q];
    for i in 0..n {
        for k in 0..p {
            let v = a[i * p + k];
            for j in 0..q {
                out[i * q + j] += v * b[k * q + j];
            }
        }
    }
    out
}

impl SimVqLayer {
    /// Standard-normal base, identity projection.
    pub fn new_random(size: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = (0..size * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let proj = (0..dim * dim)
            .map(|i| if i / dim == i % dim { 1.0 } else { 0.0 })
            .collect();
        Self::from_parts(base, proj, size, dim)
    }

    pub fn from_parts(base: Vec<f64>, proj: Vec<f64>, size: usize, dim: usize) -> Result<Self> {
        if base.len() != size * dim || proj.len() != dim * dim {
            return Err(Error::contract("SimVQ base must be K × d and projection d × d"));
        }
        let effective = Codebook::new(matmul(&base, &proj, size, dim, dim), size, dim)?;
        Ok(Self {
            base,
            proj,
            effective,
        })
    }

    pub fn size(&self) -> usize {
        self.effective.size()
    }

    pub fn dim(&self) -> usize {
        self.effective.dim()
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn projection(&self) -> &[f64] {
        &self.proj
    }

    pub fn effective(&self) -> &Codebook {
        &self.effective
    }

    /// FNV-1a over the bit patterns of the frozen base.
    pub fn base_checksum(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for v in &self.base {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn set_projection(&mut self, proj: Vec<f64>) -> Result<()> {
        let (k, d) = (self.size(), self.dim());
        if proj.len() != d * d {
            return Err(Error::contract("projection must be d × d"));
        }
        self.effective = Codebook::new(matmul(&self.base, &proj, k, d, d), k, d)?;
        self.proj = proj;
        Ok(())
    }
}

/// Ridge least-squares fit of `W` so that `C·W` approximates `targets`
/// (`K × d`, row-major).
pub fn fit_simvq_projection(layer: &mut SimVqLayer, targets: &[f64], lambda: f64) -> Result<ProjectionFit> {
    fit_simvq_projection_weighted(layer, targets, None, lambda)
}

/// As [`fit_simvq_projection`] with a nonnegative weight per codebook row.
pub fn fit_simvq_projection_weighted(
    layer: &mut SimVqLayer,
    targets: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
) -> Result<ProjectionFit> {
    let (k, d) = (layer.size(), layer.dim());
    if targets.len() != k * d {
        return Err(Error::contract(format!("targets must be {k} × {d}")));
    }
    if weights.is_some_and(|w| w.len() != k || w.iter().any(|&x| !(x >= 0.0))) {
        return Err(Error::contract("need one nonnegative weight per codebook row"));
    }
    let w = weighted_ridge(&layer.base, targets, weights, k, d, d, lambda)?;
    layer.set_projection(w)?;
    let residual = layer
        .effective
        .rows()
        .zip(targets.chunks_exact(d))
        .enumerate()
        .map(|(i, (e, t))| weights.map_or(1.0, |w| w[i]) * super::sq_dist(e, t))
        .sum();
    Ok(ProjectionFit {
        residual,
        projection_norm: layer.proj.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

/// Fits one SimVQ stage to `data` by alternating assignment to the current
/// effective codebook with a count-weighted ridge fit of the projection to the
/// cluster means. The projection starts as a covariance factor so the initial
/// codebook matches the data's second-order statistics.
fn fit_stage(data: &[Vec<f64>], k: usize, opts: &KMeansOptions, lambda: f64) -> Result<SimVqLayer> {
    let d = data[0].len();
    let mut layer = SimVqLayer::new_random(k, d, opts.seed)?;
    layer.set_projection(covariance_factor(&covariance(data, d), d)?)?;
    let distortion = |layer: &SimVqLayer, assign: &mut [usize]| -> f64 {
        data.iter()
            .zip(assign.iter_mut())
            .map(|(x, a)| {
                let (i, dd) = nearest(layer.effective.as_slice(), d, x);
                *a = i;
                dd
            })
            .sum()
    };
    let mut assign = vec![0; data.len()];
    let mut current = distortion(&layer, &mut assign);
    let mut best = (current, layer.proj.clone());
    for _ in 0..opts.max_iters {
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0.0; k];
        for (x, &a) in data.iter().zip(&assign) {
            counts[a] += 1.0;
            for (s, v) in sums[a * d..(a + 1) * d].iter_mut().zip(x) {
                *s += v;
            }
        }
        for (row, &c) in sums.chunks_exact_mut(d).zip(&counts) {
            if c > 0.0 {
                row.iter_mut().for_each(|v| *v /= c);
            }
        }
        fit_simvq_projection_weighted(&mut layer, &sums, Some(&counts), lambda)?;
        let next = distortion(&layer, &mut assign);
        if next < best.0 {
            best = (next, layer.proj.clone());
        }
        let improvement = current - next;
        current = next;
        if current == 0.0 || improvement.abs() <= opts.tolerance * current.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    layer.set_projection(best.1)?;
    Ok(layer)
}

/// Residual SimVQ: each stage is a SimVQ layer fitted to the residual of the
/// stages before it.
pub fn fit_rsimvq(
    training: &[Vec<f64>],
    nq: usize,
    k: usize,
    opts: &KMeansOptions,
    lambda: f64,
) -> Result<ResidualQuantizer> {
    if nq == 0 {
        return Err(Error::Fitting("need at least one stage".into()));
    }
    check_training(training, k)?;
    let mut tracker = ResidualTracker::new(training);
    let mut stages = Vec::with_capacity(nq);
    for i in 0..nq {
        let stage_opts = KMeansOptions {
            seed: stage_seed(opts.seed, i),
            ..*opts
        };
        let layer = fit_stage(&tracker.residual, k, &stage_opts, lambda)
            .map_err(|e| Error::Fitting(format!("stage {i}: {e}")))?;
        let stage = Stage::SimVq(layer);
        tracker.advance(&stage);
        stages.push(stage);
    }
    ResidualQuantizer::new(stages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_base_recovers_identity() {
        let base = vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let mut layer = SimVqLayer::from_parts(base.clone(), vec![0.0; 9], 3, 3).unwrap();
        let before = layer.base_checksum();
        fit_simvq_projection(&mut layer, &base, DEFAULT_RIDGE).unwrap();
        for (i, w) in layer.projection().iter().enumerate() {
            let id = if i / 3 == i % 3 { 1.0 } else { 0.0 };
            assert!((w - id).abs() < 1e-6);
        }
        assert_eq!(layer.base_checksum(), before);
    }

    #[test]
    fn ridge_shrinks_projection() {
        let mut layer = SimVqLayer::new_random(32, 4, 3).unwrap();
        let targets: Vec<f64> = (0..128).map(|i| (i as f64 * 0.7).sin()).collect();
        let small = fit_simvq_projection(&mut layer, &targets, 1e-6).unwrap().projection_norm;
        let large = fit_simvq_projection(&mut layer, &targets, 1e6).unwrap().projection_norm;
        assert!(large < small * 1e-3);
    }

    #[test]
    fn rsimvq_stages_reduce_training_error() {
        let data: Vec<Vec<f64>> = (0..800)
            .map(|i| (0..4).map(|j| ((i * (2 * j + 1)) as f64 * 0.0917).sin()).collect())
            .collect();
        let rq = fit_rsimvq(&data, 3, 16, &KMeansOptions::default(), DEFAULT_RIDGE).unwrap();
        let z = super::super::LatentSequence::new(data, 4, 1.0).unwrap();
        let e = rq.quantize(&z).unwrap().diagnostics.residual_energy;
        assert!(e[0] < 0.5 && e[1] < e[0] && e[2] < e[1], "{e:?}");
    }
}
