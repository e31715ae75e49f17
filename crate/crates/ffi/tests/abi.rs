use std::ffi::{CStr, CString};
use std::ptr;

use craftrl::agent::{ArchConfig, Network, Role};
use craftrl::nn::checkpoint;
use craftrl_ffi::*;

fn last_error() -> String {
    let p = cr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn random_episode_through_the_abi() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(cr_env_new(ptr::null(), &mut env), CrStatus::Ok);
        let mut sizes = [0usize; CR_HEAD_COUNT];
        assert_eq!(cr_head_sizes(sizes.as_mut_ptr()), CrStatus::Ok);
        assert_eq!(cr_env_reset(env, 3), CrStatus::Ok);

        let (mut ns, mut nn) = (0, 0);
        assert_eq!(cr_env_feature_sizes(env, &mut ns, &mut nn), CrStatus::Ok);
        let (mut sp, mut non) = (vec![0.0; ns], vec![0.0; nn]);
        assert_eq!(cr_env_features(env, sp.as_mut_ptr(), ns, non.as_mut_ptr(), nn), CrStatus::Ok);
        // one tile kind per cell of the 5x5 view
        assert_eq!(sp.iter().sum::<f64>(), 25.0);

        let mut total = 0.0;
        let mut done = false;
        let mut k = 0usize;
        while !done {
            let action: Vec<usize> = sizes.iter().enumerate().map(|(h, s)| (k * 31 + h * 7) % s).collect();
            let mut r = 0.0;
            assert_eq!(cr_env_step(env, action.as_ptr(), &mut r, &mut done), CrStatus::Ok);
            total += r;
            k += 1;
        }
        let mut ret = -1.0;
        let mut frame = 0u32;
        let mut ms = [false; CR_MILESTONE_COUNT];
        assert_eq!(cr_env_progress(env, &mut frame, &mut ret, ms.as_mut_ptr()), CrStatus::Ok);
        assert_eq!(ret, total);
        assert!(frame > 0);

        let a = [0usize; CR_HEAD_COUNT];
        assert_eq!(cr_env_step(env, a.as_ptr(), ptr::null_mut(), ptr::null_mut()), CrStatus::EpisodeDone);
        assert!(last_error().contains("reset"));
        cr_env_free(env);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(cr_env_new(ptr::null(), ptr::null_mut()), CrStatus::NullPointer);
        let bad = CString::new("[env]\ngrid_size = 0\n").unwrap();
        assert_eq!(cr_env_new(bad.as_ptr(), &mut env), CrStatus::Config);
        assert!(env.is_null());
        let unknown = CString::new("[nonsense]\n").unwrap();
        assert_eq!(cr_env_new(unknown.as_ptr(), &mut env), CrStatus::Config);

        assert_eq!(cr_env_new(ptr::null(), &mut env), CrStatus::Ok);
        assert!(cr_last_error().is_null());
        let a = [0usize; CR_HEAD_COUNT];
        assert_eq!(cr_env_step(env, a.as_ptr(), ptr::null_mut(), ptr::null_mut()), CrStatus::Usage);
        cr_env_reset(env, 0);
        let out_of_range = [99usize; CR_HEAD_COUNT];
        assert_eq!(
            cr_env_step(env, out_of_range.as_ptr(), ptr::null_mut(), ptr::null_mut()),
            CrStatus::Usage
        );
        cr_env_free(env);
        cr_env_free(ptr::null_mut());

        let mut policy = ptr::null_mut();
        let missing = CString::new("/nonexistent/actor.ckpt").unwrap();
        assert_eq!(cr_policy_load(missing.as_ptr(), ptr::null(), 0, &mut policy), CrStatus::Io);
        assert!(policy.is_null());
    }
}

#[test]
fn policy_acts_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("actor.ckpt");
    let net = Network::new(Role::Actor, &ArchConfig::default(), 2, 5).unwrap();
    checkpoint::save(net.params(), &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let config = CString::new("[env]\nmax_frames = 100\n").unwrap();
    unsafe {
        let mut policy = ptr::null_mut();
        assert_eq!(cr_policy_load(cpath.as_ptr(), config.as_ptr(), 1, &mut policy), CrStatus::Ok);
        let mut env = ptr::null_mut();
        assert_eq!(cr_env_new(config.as_ptr(), &mut env), CrStatus::Ok);
        let mut sizes = [0usize; CR_HEAD_COUNT];
        cr_head_sizes(sizes.as_mut_ptr());

        // greedy actions are a pure function of the observation history
        let mut runs = Vec::new();
        for _ in 0..2 {
            cr_env_reset(env, 11);
            cr_policy_reset(policy);
            let mut actions = Vec::new();
            let mut done = false;
            while !done {
                let mut a = [0usize; CR_HEAD_COUNT];
                assert_eq!(cr_policy_act(policy, env, false, a.as_mut_ptr()), CrStatus::Ok);
                assert!(a.iter().zip(&sizes).all(|(i, s)| i < s));
                assert_eq!(cr_env_step(env, a.as_ptr(), ptr::null_mut(), &mut done), CrStatus::Ok);
                actions.push(a);
            }
            runs.push(actions);
        }
        assert_eq!(runs[0], runs[1]);

        let mut mean = -1.0;
        let mut freq = [-1.0; CR_MILESTONE_COUNT];
        assert_eq!(cr_evaluate(policy, 3, 0, true, &mut mean, freq.as_mut_ptr()), CrStatus::Ok);
        assert!(mean >= 0.0);
        assert!(freq.iter().all(|f| (0.0..=1.0).contains(f)));
        assert_eq!(cr_evaluate(policy, 0, 0, true, &mut mean, ptr::null_mut()), CrStatus::Usage);

        cr_env_free(env);
        cr_policy_free(policy);
    }
}

#[test]
fn vtrace_matches_the_engine() {
    let rewards = [1.0, 0.0, 2.0];
    let discounts = [0.9, 0.9, 0.0];
    let behavior = [-1.0, -0.5, -2.0];
    let target = [-0.7, -0.9, -2.0];
    let values = [0.5, 1.0, -0.2];
    let mut targets = [0.0; 3];
    let mut adv = [0.0; 3];
    let status = unsafe {
        cr_vtrace(
            3,
            rewards.as_ptr(),
            discounts.as_ptr(),
            behavior.as_ptr(),
            target.as_ptr(),
            values.as_ptr(),
            4.0,
            1.0,
            1.0,
            targets.as_mut_ptr(),
            adv.as_mut_ptr(),
        )
    };
    assert_eq!(status, CrStatus::Ok);
    let expect = craftrl::losses::vtrace(&craftrl::losses::VTraceInput {
        rewards: rewards.to_vec(),
        discounts: discounts.to_vec(),
        behavior_log_probs: behavior.to_vec(),
        target_log_probs: target.to_vec(),
        values: values.to_vec(),
        bootstrap: 4.0,
        rho_bar: 1.0,
        c_bar: 1.0,
    })
    .unwrap();
    assert_eq!(targets.to_vec(), expect.targets);
    assert_eq!(adv.to_vec(), expect.advantages);
    // terminal last step ignores the bootstrap
    assert_eq!(targets[2], 2.0);

    let bad = unsafe {
        cr_vtrace(
            3,
            rewards.as_ptr(),
            discounts.as_ptr(),
            behavior.as_ptr(),
            target.as_ptr(),
            values.as_ptr(),
            0.0,
            0.5,
            1.0,
            targets.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(bad, CrStatus::Usage);
    assert!(last_error().contains("rho_bar"));
}
