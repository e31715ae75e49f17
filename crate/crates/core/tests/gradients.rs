mod common;

#[test]
fn layers_match_finite_differences() {
    for seed in 0..10 {
        let (worst, n) = common::layer_checks(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(n > 0 && worst < 1e-4);
    }
}

#[test]
fn actor_and_critic_losses_match_finite_differences() {
    for seed in 0..10 {
        let (worst, n) = common::loss_checks(seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(n > 0 && worst < 1e-4);
    }
}

#[test]
fn actor_and_critic_gradients_are_separate() {
    println!("{}", common::a7_separation().unwrap());
}
