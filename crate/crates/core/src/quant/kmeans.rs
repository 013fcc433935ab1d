use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{covariance, leading_eigenvectors, weighted_ridge};
use super::{nearest, normalize, Codebook, FactorizedStage, ResidualQuantizer, Stage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    /// Stop once the relative distortion improvement falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Codebook,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroids.
    pub distortion: f64,
    pub iterations: usize,
}

/// Derives independent per-stage seeds from one user seed.
pub(crate) fn stage_seed(seed: u64, stage: usize) -> u64 {
    let mut z = seed ^ (stage as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn check_training(data: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::Fitting("codebook size must be positive".into()));
    }
    if data.len() < k {
        return Err(Error::Fitting(format!(
            "need at least {k} training vectors, got {}",
            data.len()
        )));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|v| v.len() != d) {
        return Err(Error::Fitting("training vectors must share a nonzero dimension".into()));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("training data has non-finite values".into()));
    }
    Ok(d)
}

fn assign(data: &[Vec<f64>], table: &[f64], d: usize, out: &mut [usize], dist: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for ((x, a), e) in data.iter().zip(out.iter_mut()).zip(dist.iter_mut()) {
        let (k, dd) = nearest(table, d, x);
        *a = k;
        *e = dd;
        total += dd;
    }
    total
}

/// Lloyd's algorithm with k-means++ seeding. Clusters that lose all points are
/// re-seeded with the points farthest from their centroids.
pub fn kmeans(data: &[Vec<f64>], k: usize, opts: &KMeansOptions) -> Result<KMeansResult> {
    let d = check_training(data, k)?;
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut table = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    table.extend_from_slice(&data[first]);
    let mut best: Vec<f64> = data.iter().map(|x| super::sq_dist(x, &data[first])).collect();
    for _ in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // never land on a zero-weight point through rounding
            if best[chosen] == 0.0 {
                chosen = best
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|(_, &w)| w > 0.0)
                    .map_or(chosen, |(i, _)| i);
            }
            chosen
        } else {
            return Err(Error::Fitting(format!(
                "training data has fewer than {k} distinct vectors"
            )));
        };
        let c = data[pick].clone();
        for (b, x) in best.iter_mut().zip(data) {
            *b = b.min(super::sq_dist(x, &c));
        }
        table.extend_from_slice(&c);
    }

    let mut assignments = vec![0; n];
    let mut dist = vec![0.0; n];
    let mut distortion = assign(data, &table, d, &mut assignments, &mut dist);
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a * d..(a + 1) * d].iter_mut().zip(x) {
                *s += v;
            }
        }
        // farthest points first, lowest index on ties
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
        let mut donors = order.into_iter();
        for c in 0..k {
            let row = &mut table[c * d..(c + 1) * d];
            if counts[c] > 0 {
                for (t, s) in row.iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *t = s / counts[c] as f64;
                }
            } else if let Some(p) = donors.next() {
                row.copy_from_slice(&data[p]);
            }
        }
        let next = assign(data, &table, d, &mut assignments, &mut dist);
        let improvement = distortion - next;
        distortion = next;
        if distortion == 0.0 || improvement.abs() <= opts.tolerance * distortion.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(KMeansResult {
        centroids: Codebook::new(table, k, d)?,
        assignments,
        distortion,
        iterations,
    })
}

/// Fits `nq` plain VQ stages, each by k-means on the residuals left by the
/// stages before it.
pub fn fit_rvq_kmeans(
    training: &[Vec<f64>],
    nq: usize,
    k: usize,
    opts: &KMeansOptions,
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
        let fit = kmeans(&tracker.residual, k, &stage_opts)
            .map_err(|e| Error::Fitting(format!("stage {i}: {e}")))?;
        let stage = Stage::Plain(fit.centroids);
        tracker.advance(&stage);
        stages.push(stage);
    }
    ResidualQuantizer::new(stages)
}

/// Tracks the running reconstruction of every training vector so residuals are
/// always `input − running sum`, exactly as the quantizer computes them.
pub(crate) struct ResidualTracker<'a> {
    input: &'a [Vec<f64>],
    sums: Vec<Vec<f64>>,
    pub residual: Vec<Vec<f64>>,
}

impl<'a> ResidualTracker<'a> {
    pub fn new(input: &'a [Vec<f64>]) -> Self {
        let d = input.first().map_or(0, Vec::len);
        Self {
            input,
            sums: vec![vec![0.0; d]; input.len()],
            residual: input.to_vec(),
        }
    }

    pub fn advance(&mut self, stage: &Stage) {
        for ((r, s), x) in self.residual.iter_mut().zip(&mut self.sums).zip(self.input) {
            let k = stage.encode(r);
            for (((rv, sv), xv), e) in r.iter_mut().zip(s.iter_mut()).zip(x).zip(stage.decode(k)) {
                *sv += e;
                *rv = xv - *sv;
            }
        }
    }
}

/// Fits factorized stages: the input projection spans the leading principal
/// directions of the residual, the unit codebook comes from k-means on the
/// normalized projections, and the output projection is a least-squares map
/// from chosen codewords back to residuals.
pub fn fit_factorized_rvq(
    training: &[Vec<f64>],
    nq: usize,
    k: usize,
    code_dim: usize,
    opts: &KMeansOptions,
) -> Result<ResidualQuantizer> {
    let d = check_training(training, k)?;
    if code_dim == 0 || code_dim > d {
        return Err(Error::Fitting(format!("code dimension must be in 1..={d}")));
    }
    let mut tracker = ResidualTracker::new(training);
    let mut stages = Vec::with_capacity(nq);
    for i in 0..nq {
        let residual = &tracker.residual;
        let cov = covariance(residual, d);
        let in_proj: Vec<f64> = leading_eigenvectors(&cov, d, code_dim).concat();
        let projected: Vec<Vec<f64>> = residual
            .iter()
            .map(|r| {
                let mut q: Vec<f64> = (0..code_dim)
                    .map(|j| in_proj[j * d..(j + 1) * d].iter().zip(r).map(|(w, x)| w * x).sum())
                    .collect();
                normalize(&mut q);
                q
            })
            .collect();
        let stage_opts = KMeansOptions {
            seed: stage_seed(opts.seed, i),
            ..*opts
        };
        let fit = kmeans(&projected, k, &stage_opts)
            .map_err(|e| Error::Fitting(format!("stage {i}: {e}")))?;
        let codebook = fit.centroids.normalized();
        let chosen: Vec<f64> = projected
            .iter()
            .flat_map(|q| codebook.row(codebook.nearest(q).0).to_vec())
            .collect();
        let targets: Vec<f64> = residual.concat();
        // X is code_dim × d; out_proj is its transpose
        let x = weighted_ridge(&chosen, &targets, None, residual.len(), code_dim, d, 1e-6)?;
        let out_proj: Vec<f64> = (0..d)
            .flat_map(|r| (0..code_dim).map(move |c| (r, c)))
            .map(|(r, c)| x[c * d + r])
            .collect();
        let stage = Stage::Factorized(FactorizedStage::new(in_proj, out_proj, codebook, d)?);
        tracker.advance(&stage);
        stages.push(stage);
    }
    ResidualQuantizer::new(stages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_vector_single_centroid() {
        let data = vec![vec![0.25, -3.0]; 10];
        let fit = kmeans(&data, 1, &KMeansOptions::default()).unwrap();
        assert_eq!(fit.centroids.row(0), &[0.25, -3.0]);
        assert_eq!(fit.distortion, 0.0);
    }

    #[test]
    fn too_few_vectors() {
        let data = vec![vec![1.0]; 3];
        assert!(matches!(kmeans(&data, 4, &KMeansOptions::default()), Err(Error::Fitting(_))));
        // enough vectors but not enough distinct ones
        let data = vec![vec![1.0]; 8];
        assert!(matches!(kmeans(&data, 4, &KMeansOptions::default()), Err(Error::Fitting(_))));
    }

    #[test]
    fn seeds_are_deterministic() {
        let data: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let opts = KMeansOptions {
            seed: 9,
            ..KMeansOptions::default()
        };
        let a = kmeans(&data, 8, &opts).unwrap();
        let b = kmeans(&data, 8, &opts).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert!(a.centroids.min_pairwise_distance() > 0.0);
    }

    #[test]
    fn factorized_stages_reduce_error() {
        let data: Vec<Vec<f64>> = (0..600)
            .map(|i| (0..6).map(|j| ((i * (j + 3)) as f64 * 0.173).sin() * (j + 1) as f64).collect())
            .collect();
        let rq = fit_factorized_rvq(&data, 3, 16, 4, &KMeansOptions::default()).unwrap();
        for s in rq.stages() {
            if let Stage::Factorized(f) = s {
                for row in f.codebook.rows() {
                    let n: f64 = row.iter().map(|v| v * v).sum();
                    assert!((n - 1.0).abs() < 1e-6);
                }
            }
        }
        let z = super::super::LatentSequence::new(data, 6, 1.0).unwrap();
        let e = rq.quantize(&z).unwrap().diagnostics.residual_energy;
        let input: f64 = z.frames.iter().flatten().map(|v| v * v).sum::<f64>() / (600.0 * 6.0);
        assert!(e[0] < input && e[1] < e[0] && e[2] < e[1], "{input} {e:?}");
    }
}
