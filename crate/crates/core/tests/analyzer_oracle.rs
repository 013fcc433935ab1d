mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tqcodec::analyzer::{count_macs, macs_for_input, receptive_field};
use tqcodec::nn::{Layer, Network, NetworkGraph, WeightStore};

use common::{fixture_graphs, impulse_rf, impulse_support, naive_forward};

fn random_input(channels: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..channels).map(|_| (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()).collect()
}

#[test]
fn mac_counts_match_counting_forward() {
    for (g, n, _) in fixture_graphs() {
        let w = WeightStore::random(&g, 5);
        let x = random_input(g.in_channels, n, 9);
        let mut macs = 0u128;
        let naive = naive_forward(&g.layers, &w, x.clone(), &mut macs);
        assert_eq!(macs, macs_for_input(&g, n), "{}", g.name);

        let fast = Network::new(&g, &w).unwrap().forward(&x).unwrap();
        assert_eq!(fast.len(), naive.len());
        for (a, b) in fast.iter().flatten().zip(naive.iter().flatten()) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{}: {a} vs {b}", g.name);
        }
    }
}

#[test]
fn per_second_rate_is_the_long_run_count() {
    let n = 3 << 20;
    for (g, _, _) in fixture_graphs() {
        let report = count_macs(&g, 44_100);
        let steps_per_second = 44_100.0 / g.input_stride as f64;
        let expected = macs_for_input(&g, n) as f64 / n as f64 * steps_per_second;
        let rel = (report.total_macs_per_second - expected).abs() / expected;
        assert!(rel < 1e-12, "{}: {} vs {expected}", g.name, report.total_macs_per_second);
        let layer_sum: f64 = report.layers.iter().map(|l| l.macs_per_second).sum();
        assert!((layer_sum - report.total_macs_per_second).abs() <= 1e-6 * expected);
    }
}

#[test]
fn receptive_fields_match_impulse_probing() {
    for (g, _, probe_len) in fixture_graphs() {
        let rf = receptive_field(&g);
        let oracle = impulse_rf(&g, probe_len);
        assert_eq!(rf.steps, oracle.steps, "{} steps", g.name);
        assert_eq!(rf.samples, oracle.samples, "{} samples", g.name);
        assert_eq!(rf.lookahead_samples, oracle.lookahead_samples, "{} lookahead", g.name);
        assert_eq!(rf.stateful, g.has_lstm());
    }
}

#[test]
fn support_is_one_contiguous_span() {
    for (g, _, probe_len) in fixture_graphs().into_iter().take(3) {
        let u = g.without_lstm().output_len(probe_len) / 2;
        let support = impulse_support(&g, probe_len, u);
        assert!(!support.is_empty());
        assert!(support.windows(2).all(|w| w[1] == w[0] + 1), "{}: gaps in {support:?}", g.name);
        assert!(support.len() as u64 <= receptive_field(&g).steps);
    }
}

#[test]
fn cumulative_rf_follows_prefixes() {
    for (g, _, probe_len) in fixture_graphs().into_iter().take(3) {
        let report = count_macs(&g, 44_100);
        let mut row = 0;
        for i in 0..g.layers.len() {
            let prefix = NetworkGraph { layers: g.layers[..=i].to_vec(), ..g.clone() };
            let expected = impulse_rf(&prefix, probe_len).steps;
            let rows = match &g.layers[i] {
                Layer::Residual { layers } => layers.len(),
                _ => 1,
            };
            for r in &report.layers[row..row + rows] {
                assert_eq!(r.cumulative_rf, expected, "{} layer {i}", g.name);
            }
            row += rows;
        }
        assert_eq!(row, report.layers.len());
    }
}
