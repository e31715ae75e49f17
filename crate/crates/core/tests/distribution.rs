mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use craftrl::agent::ComposedDistribution;

#[test]
fn sampling_frequencies_match_probabilities() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let d = common::random_distribution(&mut r);
    let draws = 100_000;
    let mut counts: Vec<Vec<usize>> = d.heads().iter().map(|h| vec![0; h.len()]).collect();
    for _ in 0..draws {
        for (h, i) in d.sample_indices(&mut r).into_iter().enumerate() {
            counts[h][i] += 1;
        }
    }
    for (h, c) in counts.iter().enumerate() {
        let (chi2, p) = common::chi_square(c, &d.heads()[h]);
        assert!(p > 0.01, "head {h}: chi2 {chi2:.2} p {p:.4}");
    }
}

#[test]
fn joint_log_prob_is_the_sum_over_heads() {
    let mut r = ChaCha8Rng::seed_from_u64(22);
    let d = common::random_distribution(&mut r);
    for _ in 0..50 {
        let idx = d.sample_indices(&mut r);
        let want: f64 = idx.iter().enumerate().map(|(h, i)| d.heads()[h][*i].ln()).sum();
        assert!((d.log_prob_indices(&idx).unwrap() - want).abs() < 1e-12);
    }
    let mode = d.mode_indices();
    for (h, i) in mode.iter().enumerate() {
        assert!(d.heads()[h].iter().all(|p| *p <= d.heads()[h][*i]));
    }
}

#[test]
fn degenerate_heads_are_deterministic() {
    let d = ComposedDistribution::new(vec![vec![0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        assert_eq!(d.sample_indices(&mut r), vec![1, 0]);
    }
    assert_eq!(d.entropy(), 0.0);
}
