mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use craftrl::agent::{kl_divergence, ComposedDistribution};
use craftrl::losses::graph::{action_log_prob, policy_gradient_term, value_term};
use craftrl::losses::{
    pg_coefficients, pg_loss, total_loss, value_loss, LossComponents, LossWeights,
    VTraceResult,
};
use craftrl::nn::Tape;

#[test]
fn advantage_clipping_zeroes_negative_rows() {
    println!("{}", common::a2_advantage_clipping().unwrap());
}

#[test]
fn single_step_policy_gradient_hand_trace() {
    // ρ = 0.5, A = 2: loss = −log π(a), so ∂/∂z_j = π_j − [j = a]
    let logits = vec![0.3, -1.2, 0.8];
    let a = 2;
    let mut tape = Tape::new();
    let z = tape.input(1, 3, logits.clone()).unwrap();
    let lp = tape.log_softmax(z);
    let alp = action_log_prob(&mut tape, &[lp], &[vec![a]]).unwrap();
    let res = VTraceResult {
        targets: vec![0.0],
        advantages: vec![2.0],
        rhos: vec![0.5],
    };
    let coef = pg_coefficients(&res, false, None);
    assert_eq!(coef, vec![1.0]);
    let loss = policy_gradient_term(&mut tape, alp, &coef).unwrap();
    let grads = tape.backward(loss).unwrap();
    let g = grads.get(z).unwrap();
    let zmax = logits.iter().cloned().fold(f64::MIN, f64::max);
    let norm: f64 = logits.iter().map(|x| (x - zmax).exp()).sum();
    for j in 0..3 {
        let p = (logits[j] - zmax).exp() / norm;
        let want = p - if j == a { 1.0 } else { 0.0 };
        assert!((g[j] - want).abs() < 1e-12, "{} vs {want}", g[j]);
    }
    // the chosen logit is pushed up, the others down
    assert!(g[a] < 0.0 && g[0] > 0.0 && g[1] > 0.0);
    let direct = pg_loss(&[tape.scalar(alp)], &res, false).unwrap();
    assert!((direct - tape.scalar(loss)).abs() < 1e-12);
}

#[test]
fn value_loss_hand_trace_and_scaling() {
    assert_eq!(value_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert_eq!(value_loss(&[0.5], &[2.0]).unwrap(), 0.5 * 1.5 * 1.5);
    let zero = [0.0; 3];
    let t = [1.0, -2.0, 0.5];
    let t2: Vec<f64> = t.iter().map(|x| 2.0 * x).collect();
    assert!((value_loss(&zero, &t2).unwrap() - 4.0 * value_loss(&zero, &t).unwrap()).abs() < 1e-12);

    let mut tape = Tape::new();
    let v = tape.input(2, 1, vec![0.5, 1.0]).unwrap();
    let l = value_term(&mut tape, v, &[2.0, 1.0], &[1.0, 1.0]).unwrap();
    assert!((tape.scalar(l) - 1.125).abs() < 1e-12);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(v).unwrap(), &[-1.5, 0.0]);
}

#[test]
fn kl_matches_direct_summation() {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let p = common::random_distribution(&mut r);
        let q = common::random_distribution(&mut r);
        let mut want = 0.0;
        for h in 0..p.heads().len() {
            for i in 0..p.heads()[h].len() {
                let (a, b) = (p.heads()[h][i], q.heads()[h][i]);
                want += a * (a / b).ln();
            }
        }
        assert!((kl_divergence(&p, &q).unwrap() - want).abs() < 1e-12);
        assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
    }
    let d = ComposedDistribution::uniform(&[2, 3]);
    assert!(kl_divergence(&d, &ComposedDistribution::uniform(&[3, 2])).is_err());
}

#[test]
fn total_loss_combinations() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let c = LossComponents {
        policy: r.gen_range(-2.0..2.0),
        value: r.gen_range(0.0..2.0),
        entropy: r.gen_range(0.0..2.0),
        policy_cloning: r.gen_range(0.0..2.0),
        value_cloning: r.gen_range(0.0..2.0),
    };
    let zero = LossWeights {
        policy: 0.0,
        value: 0.0,
        entropy: 0.0,
        policy_cloning: 0.0,
        value_cloning: 0.0,
    };
    assert_eq!(total_loss(&c, &zero), 0.0);
    let pg_only = LossWeights { policy: 1.0, ..zero };
    assert_eq!(total_loss(&c, &pg_only), c.policy);
    let w = LossWeights::default();
    let hand = w.policy * c.policy + w.value * c.value - w.entropy * c.entropy
        + w.policy_cloning * c.policy_cloning
        + w.value_cloning * c.value_cloning;
    assert!((total_loss(&c, &w) - hand).abs() < 1e-12);
}
