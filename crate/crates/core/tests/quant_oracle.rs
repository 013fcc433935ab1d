mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tqcodec::quant::{
    fit_rsimvq, fit_rvq_kmeans, fit_simvq_projection, Codebook, KMeansOptions, LatentSequence, ResidualQuantizer,
    SimVqLayer, Stage,
};

use common::brute_nearest;

fn grid(n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| vec![lo + i as f64 * step, lo + j as f64 * step]))
        .collect()
}

/// Stage choices by exhaustive search, with residuals taken against the input.
fn brute_rvq(stages: &[Vec<Vec<f64>>], x: &[f64]) -> Vec<u16> {
    let mut sum = vec![0.0; x.len()];
    let mut out = Vec::new();
    for rows in stages {
        let r: Vec<f64> = x.iter().zip(&sum).map(|(a, s)| a - s).collect();
        let k = brute_nearest(rows, &r);
        out.push(k as u16);
        sum.iter_mut().zip(&rows[k]).for_each(|(s, c)| *s += c);
    }
    out
}

fn check_grid(stages: Vec<Vec<Vec<f64>>>, points: Vec<Vec<f64>>) {
    let rq = ResidualQuantizer::new(
        stages.iter().map(|rows| Stage::Plain(Codebook::from_rows(rows).unwrap())).collect(),
    )
    .unwrap();
    let q = rq.quantize(&LatentSequence::new(points.clone(), 2, 1.0).unwrap()).unwrap();
    for (x, got) in points.iter().zip(&q.codes.indices) {
        assert_eq!(got, &brute_rvq(&stages, x), "at {x:?}");
    }
}

#[test]
fn random_codebooks_on_a_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..5 {
        let stages: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|s| {
                let scale = 0.5f64.powi(s);
                (0..4).map(|_| vec![rng.random_range(-1.0..1.0) * scale, rng.random_range(-1.0..1.0) * scale]).collect()
            })
            .collect();
        check_grid(stages, grid(121 + trial, -1.5, 1.5));
    }
}

#[test]
fn lattice_codebooks_break_ties_toward_lower_index() {
    // corners of a square: grid lines through the origin are equidistant
    let square = vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, 1.0]];
    let half: Vec<Vec<f64>> = square.iter().map(|r| r.iter().map(|v| v * 0.5).collect()).collect();
    check_grid(vec![square, half], grid(41, -2.0, 2.0));
}

#[test]
fn fitted_quantizer_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let train: Vec<Vec<f64>> = (0..600).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let rq = fit_rvq_kmeans(&train, 4, 4, &KMeansOptions::default()).unwrap();
    let stages: Vec<Vec<Vec<f64>>> = rq
        .stages()
        .iter()
        .map(|s| s.decode_table().rows().map(<[f64]>::to_vec).collect())
        .collect();
    check_grid(stages, grid(101, -1.2, 1.2));
}

#[test]
fn planted_projection_is_recovered() {
    let (k, d) = (64, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut layer = SimVqLayer::new_random(k, d, 3).unwrap();
    let base_sum = layer.base_checksum();
    let planted: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut targets = vec![0.0; k * d];
    for i in 0..k {
        for j in 0..d {
            targets[i * d + j] = (0..d).map(|m| layer.base()[i * d + m] * planted[m * d + j]).sum();
        }
    }
    fit_simvq_projection(&mut layer, &targets, 0.0).unwrap();
    let err = layer.projection().iter().zip(&planted).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-9, "{err}");
    assert_eq!(layer.base_checksum(), base_sum);
}

#[test]
fn rsimvq_bases_stay_frozen_and_prefixes_improve() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let a: f64 = rng.random_range(-1.0..1.0);
        (0..4).map(|j| a * (j as f64 + 1.0) + 0.3 * rng.random_range(-1.0..1.0)).collect()
    };
    let train: Vec<Vec<f64>> = (0..800).map(|_| sample(&mut rng)).collect();
    let held: Vec<Vec<f64>> = (0..300).map(|_| sample(&mut rng)).collect();
    let opts = KMeansOptions { max_iters: 15, ..KMeansOptions::default() };
    let rq = fit_rsimvq(&train, 5, 16, &opts, 1e-6).unwrap();
    let z = LatentSequence::new(held, 4, 1.0).unwrap();
    let mut prev = f64::INFINITY;
    for n in 1..=5 {
        let q = rq.truncated(n).unwrap().quantize(&z).unwrap();
        let err: f64 = q.residuals.iter().flatten().map(|v| v * v).sum();
        assert!(err <= prev, "stage {n}: {err} > {prev}");
        prev = err;
    }

    // the same seeds on other data and another iteration budget: new projections, same bases
    let other: Vec<Vec<f64>> = train.iter().map(|v| v.iter().map(|x| x * 2.0 + 0.1).collect()).collect();
    let refit = fit_rsimvq(&other, 5, 16, &KMeansOptions { max_iters: 3, ..opts }, 1e-6).unwrap();
    for (a, b) in rq.stages().iter().zip(refit.stages()) {
        let (Stage::SimVq(a), Stage::SimVq(b)) = (a, b) else { panic!("expected SimVQ stages") };
        assert_eq!(a.base_checksum(), b.base_checksum());
        assert_ne!(a.projection(), b.projection());
    }
}
