//! Oracles shared by the topic tests and the acceptance target.
//! Each check returns a short summary on success and the first violation otherwise.

#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use craftrl::agent::{ArchConfig, ComposedDistribution, EncoderKind, Network, RecurrentState, Role};
use craftrl::config::Config;
use craftrl::demo::{generate_demos, subsample, SubsampleConfig};
use craftrl::env::{ChainCraft, EnvConfig, Head, HEAD_COUNT, HEAD_SIZES};
use craftrl::losses::graph::{action_log_prob, policy_cloning_term, policy_gradient_term};
use craftrl::losses::{clear_losses, pg_coefficients, pg_loss, vtrace, KlDirection, LossWeights, Source, VTraceInput};
use craftrl::nn::{ConvGeometry, Conv3x3, Linear, LstmCell, ParameterSet, RealArray, ResidualBlock, Tape, Var};
use craftrl::pipeline::RunManifest;
use craftrl::replay::{compose_batch, ReplayBuffer, TrajectorySegment};
use craftrl::trainer::{build_learner, AblationConfig, ActorWorker, Learner, PolicySnapshot, PreparedBatch, TrainConfig};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pearson statistic and upper-tail p-value of `counts` against `probs`.
pub fn chi_square(counts: &[usize], probs: &[f64]) -> (f64, f64) {
    let n: usize = counts.iter().sum();
    let chi2: f64 = counts
        .iter()
        .zip(probs)
        .map(|(c, p)| {
            let e = p * n as f64;
            (*c as f64 - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(chi2);
    (chi2, p)
}

// ---------------------------------------------------------------- V-trace

pub fn random_vtrace_input(r: &mut ChaCha8Rng, t: usize) -> VTraceInput {
    let c_bar = if r.gen_bool(0.5) { 1.0 } else { r.gen_range(0.3..1.5) };
    let rho_bar = if r.gen_bool(0.5) { c_bar } else { c_bar + r.gen_range(0.0..1.0) };
    VTraceInput {
        rewards: (0..t).map(|_| r.gen_range(-2.0..2.0)).collect(),
        discounts: (0..t)
            .map(|_| if r.gen_bool(0.2) { 0.0 } else { r.gen_range(0.5..1.0) })
            .collect(),
        behavior_log_probs: (0..t).map(|_| r.gen_range(-3.0..0.0)).collect(),
        target_log_probs: (0..t).map(|_| r.gen_range(-3.0..0.0)).collect(),
        values: (0..t).map(|_| r.gen_range(-3.0..3.0)).collect(),
        bootstrap: r.gen_range(-3.0..3.0),
        rho_bar,
        c_bar,
    }
}

/// `v_s = V_s + Σ_{t≥s} (Π_{i=s}^{t-1} γ_i c_i) ρ_t δ_t`, summed term by term.
pub fn vtrace_unrolled(x: &VTraceInput) -> Vec<f64> {
    let n = x.rewards.len();
    let value = |t: usize| if t < n { x.values[t] } else { x.bootstrap };
    let ratio = |t: usize| (x.target_log_probs[t] - x.behavior_log_probs[t]).exp();
    (0..n)
        .map(|s| {
            let mut v = x.values[s];
            for t in s..n {
                let mut weight = 1.0;
                for i in s..t {
                    weight *= x.discounts[i] * ratio(i).min(x.c_bar);
                }
                let delta = x.rewards[t] + x.discounts[t] * value(t + 1) - x.values[t];
                v += weight * ratio(t).min(x.rho_bar) * delta;
            }
            v
        })
        .collect()
}

/// Discounted n-step return to the end of the sequence, bootstrapped.
pub fn n_step_returns(x: &VTraceInput) -> Vec<f64> {
    let n = x.rewards.len();
    (0..n)
        .map(|s| {
            let mut g = 0.0;
            let mut disc = 1.0;
            for t in s..n {
                g += disc * x.rewards[t];
                disc *= x.discounts[t];
            }
            g + disc * x.bootstrap
        })
        .collect()
}

pub fn a1_vtrace() -> Check {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let t = r.gen_range(1..=6);
        let x = random_vtrace_input(&mut r, t);
        let got = vtrace(&x).map_err(|e| e.to_string())?;
        for (a, b) in got.targets.iter().zip(vtrace_unrolled(&x)) {
            worst = worst.max((a - b).abs());
            ensure!((a - b).abs() < 1e-10, "case {case}: recursion {a} vs unrolled {b}");
        }
    }
    let mut worst_on = 0.0f64;
    for case in 0..1000 {
        let t = r.gen_range(1..=6);
        let mut x = random_vtrace_input(&mut r, t);
        x.target_log_probs = x.behavior_log_probs.clone();
        x.rho_bar = 1.0;
        x.c_bar = 1.0;
        let got = vtrace(&x).map_err(|e| e.to_string())?;
        for (a, b) in got.targets.iter().zip(n_step_returns(&x)) {
            worst_on = worst_on.max((a - b).abs());
            ensure!((a - b).abs() < 1e-12, "on-policy case {case}: {a} vs n-step {b}");
        }
    }
    Ok(format!("1000 cases max |diff| {worst:.1e}; on-policy max |diff| {worst_on:.1e}"))
}

// ---------------------------------------------------------------- advantage clipping

fn random_logits(tape: &mut Tape, r: &mut ChaCha8Rng, rows: usize) -> (Vec<Var>, Vec<Var>) {
    let mut inputs = Vec::new();
    let mut lps = Vec::new();
    for size in HEAD_SIZES {
        let data: Vec<f64> = (0..rows * size).map(|_| r.gen_range(-2.0..2.0)).collect();
        let x = tape.input(rows, size, data).expect("shape");
        inputs.push(x);
        lps.push(tape.log_softmax(x));
    }
    (inputs, lps)
}

fn random_actions(r: &mut ChaCha8Rng, rows: usize) -> Vec<Vec<usize>> {
    (0..rows)
        .map(|_| HEAD_SIZES.iter().map(|s| r.gen_range(0..*s)).collect())
        .collect()
}

/// Policy-gradient loss on random logits; returns the loss value and logit gradients per head.
fn pg_on_logits(seed: u64, x: &VTraceInput, clip: bool) -> (f64, Vec<Vec<f64>>) {
    let mut r = rng(seed);
    let rows = x.rewards.len();
    let mut tape = Tape::new();
    let (inputs, lps) = random_logits(&mut tape, &mut r, rows);
    let actions = random_actions(&mut r, rows);
    let alp = action_log_prob(&mut tape, &lps, &actions).expect("heads");
    let res = vtrace(x).expect("valid");
    let coef = pg_coefficients(&res, clip, None);
    let loss = policy_gradient_term(&mut tape, alp, &coef).expect("rows");
    let grads = tape.backward(loss).expect("scalar");
    let g = inputs
        .iter()
        .map(|v| grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tape.value(*v).len()]))
        .collect();
    (tape.scalar(loss), g)
}

pub fn a2_advantage_clipping() -> Check {
    let mut r = rng(2);
    let mut zero_rows = 0;
    for batch in 0..200u64 {
        let t = r.gen_range(2..=12);
        let x = random_vtrace_input(&mut r, t);
        let res = vtrace(&x).map_err(|e| e.to_string())?;
        let (_, grads) = pg_on_logits(batch, &x, true);
        for (row, a) in res.advantages.iter().enumerate() {
            if *a <= 0.0 {
                zero_rows += 1;
                for (h, g) in grads.iter().enumerate() {
                    let size = HEAD_SIZES[h];
                    let slice = &g[row * size..(row + 1) * size];
                    ensure!(
                        slice.iter().all(|v| *v == 0.0),
                        "batch {batch} row {row}: A = {a} but head {h} gradient {slice:?}"
                    );
                }
            }
        }
    }
    let mut equal = 0;
    for batch in 0..200u64 {
        let t = r.gen_range(2..=12);
        let mut x = random_vtrace_input(&mut r, t);
        // rewards large enough that every advantage is positive
        x.rewards.iter_mut().for_each(|v| *v = 20.0 + v.abs());
        let res = vtrace(&x).map_err(|e| e.to_string())?;
        ensure!(res.advantages.iter().all(|a| *a > 0.0), "construction left a non-positive advantage");
        let (lc, gc) = pg_on_logits(1000 + batch, &x, true);
        let (lu, gu) = pg_on_logits(1000 + batch, &x, false);
        ensure!(lc.to_bits() == lu.to_bits() && gc == gu, "batch {batch}: clipped {lc} vs unclipped {lu}");
        let lps: Vec<f64> = (0..t).map(|_| r.gen_range(-4.0..0.0)).collect();
        let (a, b) = (pg_loss(&lps, &res, true).unwrap(), pg_loss(&lps, &res, false).unwrap());
        ensure!(a.to_bits() == b.to_bits(), "batch {batch}: pg_loss {a} vs {b}");
        equal += 1;
    }
    Ok(format!("{zero_rows} rows with A<=0 all have zero logit gradient; {equal} all-positive batches bit-equal"))
}

// ---------------------------------------------------------------- CLEAR

pub fn random_distribution(r: &mut ChaCha8Rng) -> ComposedDistribution {
    let heads = HEAD_SIZES
        .iter()
        .map(|s| {
            let w: Vec<f64> = (0..*s).map(|_| r.gen_range(0.05..1.0)).collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|x| x / z).collect()
        })
        .collect();
    ComposedDistribution::new(heads).expect("valid")
}

pub fn a3_clear() -> Check {
    let mut r = rng(3);
    for trial in 0..50 {
        let n = r.gen_range(1..10);
        let dists: Vec<_> = (0..n).map(|_| random_distribution(&mut r)).collect();
        let values: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let sources = vec![Source::Replay; n];
        for dir in [KlDirection::ReplayToCurrent, KlDirection::CurrentToReplay] {
            let (kl, mse) = clear_losses(&dists, &dists, &values, &values, &sources, dir).map_err(|e| e.to_string())?;
            ensure!(kl == 0.0 && mse == 0.0, "trial {trial}: equal snapshots give ({kl}, {mse})");
        }
        // same on the tape
        let mut tape = Tape::new();
        let mut lps = Vec::new();
        let mut stored = Vec::new();
        for h in 0..HEAD_COUNT {
            let flat: Vec<f64> = dists.iter().flat_map(|d| d.heads()[h].iter().map(|p| p.ln())).collect();
            lps.push(tape.input(n, HEAD_SIZES[h], flat.clone()).unwrap());
            stored.push(flat);
        }
        let w = vec![1.0 / n as f64; n];
        for dir in [KlDirection::ReplayToCurrent, KlDirection::CurrentToReplay] {
            let v = policy_cloning_term(&mut tape, &lps, &stored, &w, dir).map_err(|e| e.to_string())?;
            ensure!(tape.scalar(v).abs() < 1e-12, "trial {trial}: taped KL at equality {}", tape.scalar(v));
        }
    }
    // one-hot head against a uniform head over k classes: KL = ln k
    for (h, k) in HEAD_SIZES.iter().enumerate() {
        let mut p_heads: Vec<Vec<f64>> = HEAD_SIZES.iter().map(|s| vec![1.0 / *s as f64; *s]).collect();
        let q = ComposedDistribution::new(p_heads.clone()).unwrap();
        p_heads[h] = (0..*k).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let p = ComposedDistribution::new(p_heads).unwrap();
        let (kl, _) = clear_losses(
            &[q.clone()],
            &[p.clone()],
            &[0.0],
            &[0.0],
            &[Source::Replay],
            KlDirection::ReplayToCurrent,
        )
        .map_err(|e| e.to_string())?;
        let expect = (*k as f64).ln();
        ensure!((kl - expect).abs() < 1e-12, "head {h}: KL {kl} vs ln {k} = {expect}");
    }
    let w = LossWeights::default();
    ensure!(w.policy_cloning == 0.01 && w.value_cloning == 0.005, "default cloning weights {w:?}");
    let manifest = RunManifest::new("train", Some("+ER +SAC +CL"), 0, &Config::default()).map_err(|e| e.to_string())?;
    let json = serde_json::to_value(&manifest).map_err(|e| e.to_string())?;
    let loss = &json["config"]["loss"];
    ensure!(
        loss["policy_cloning"] == 0.01 && loss["value_cloning"] == 0.005,
        "manifest loss section {loss}"
    );
    Ok("zero at equality, ln k exact, weights 0.01/0.005 recorded in the manifest".into())
}

// ---------------------------------------------------------------- gradient checks

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

const FD_STEP: f64 = 1e-5;

/// Checks `∂f/∂param` for every scalar of every parameter (or `per_param` random ones).
fn check_params(
    params: &mut ParameterSet,
    analytic: &ParameterSet,
    per_param: Option<usize>,
    r: &mut ChaCha8Rng,
    f: &mut dyn FnMut(&ParameterSet) -> f64,
) -> Result<(f64, usize), String> {
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for name in names {
        let len = params.value(&name).unwrap().len();
        let idx: Vec<usize> = match per_param {
            Some(k) if k < len => (0..k).map(|_| r.gen_range(0..len)).collect(),
            _ => (0..len).collect(),
        };
        for i in idx {
            let orig = params.value(&name).unwrap().data()[i];
            params.value_mut(&name).unwrap().data_mut()[i] = orig + FD_STEP;
            let up = f(params);
            params.value_mut(&name).unwrap().data_mut()[i] = orig - FD_STEP;
            let down = f(params);
            params.value_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.grad(&name).unwrap().data()[i];
            let e = rel_err(a, numeric);
            ensure!(e < 1e-4, "{name}[{i}]: analytic {a} vs numeric {numeric} (rel {e:.2e})");
            worst = worst.max(e);
            checked += 1;
        }
    }
    Ok((worst, checked))
}

fn random_params(r: &mut ChaCha8Rng, params: &mut ParameterSet) {
    for (_, p) in params.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.8..0.8));
    }
}

/// Scalar `Σ c ⊙ y` of a layer output, with gradients into `params`.
fn layer_loss(
    params: &ParameterSet,
    input: &[f64],
    shape: (usize, usize),
    coef: &[f64],
    forward: &dyn Fn(&mut Tape, &ParameterSet, Var) -> Var,
    want_grads: Option<&mut ParameterSet>,
) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let x = tape.input(shape.0, shape.1, input.to_vec()).unwrap();
    let y = forward(&mut tape, params, x);
    let loss = tape.weighted_sum(y, coef.to_vec()).unwrap();
    let value = tape.scalar(loss);
    let mut gx = Vec::new();
    if let Some(out) = want_grads {
        let grads = tape.backward(loss).unwrap();
        out.zero_grad();
        tape.accumulate_into(&grads, "t", out).unwrap();
        gx = grads.get(x).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; input.len()]);
    }
    (value, gx)
}

fn check_layer(
    seed: u64,
    mut params: ParameterSet,
    shape: (usize, usize),
    out_len: usize,
    forward: &dyn Fn(&mut Tape, &ParameterSet, Var) -> Var,
) -> Result<(f64, usize), String> {
    let mut r = rng(seed);
    random_params(&mut r, &mut params);
    let input: Vec<f64> = (0..shape.0 * shape.1).map(|_| r.gen_range(-1.0..1.0)).collect();
    let coef: Vec<f64> = (0..out_len).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut analytic = params.clone();
    let (_, gx) = layer_loss(&params, &input, shape, &coef, forward, Some(&mut analytic));
    let (mut worst, mut n) = check_params(&mut params, &analytic, None, &mut r, &mut |p| {
        layer_loss(p, &input, shape, &coef, forward, None).0
    })?;
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let up = layer_loss(&params, &x, shape, &coef, forward, None).0;
        x[i] = orig - FD_STEP;
        let down = layer_loss(&params, &x, shape, &coef, forward, None).0;
        x[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let e = rel_err(gx[i], numeric);
        ensure!(e < 1e-4, "input[{i}]: analytic {} vs numeric {numeric}", gx[i]);
        worst = worst.max(e);
        n += 1;
    }
    Ok((worst, n))
}

pub fn layer_checks(seed: u64) -> Result<(f64, usize), String> {
    let mut worst = 0.0f64;
    let mut total = 0;
    let mut acc = |res: Result<(f64, usize), String>, what: &str| -> Result<(), String> {
        let (w, n) = res.map_err(|e| format!("{what}: {e}"))?;
        worst = worst.max(w);
        total += n;
        Ok(())
    };
    let mut r = rng(seed ^ 0xfeed);

    let lin = Linear::new("lin", 5, 4);
    let mut p = ParameterSet::new();
    lin.init(&mut p, &mut r, 1.0).unwrap();
    acc(
        check_layer(seed, p, (3, 5), 12, &|t, p, x| lin.forward(t, "t", p, x).unwrap()),
        "linear",
    )?;

    let geom = ConvGeometry {
        channels_in: 2,
        channels_out: 3,
        height: 4,
        width: 3,
    };
    let conv = Conv3x3::new("conv", geom);
    let mut p = ParameterSet::new();
    conv.init(&mut p, &mut r, 1.0).unwrap();
    acc(
        check_layer(seed, p, (2, 2 * 12), 2 * 3 * 12, &|t, p, x| conv.forward(t, "t", p, x).unwrap()),
        "conv3x3",
    )?;

    let block = ResidualBlock::new("res", 2, 3, 3, 2);
    let mut p = ParameterSet::new();
    block.init(&mut p, &mut r).unwrap();
    acc(
        check_layer(seed, p, (2, 2 * 9), 2 * 2 * 9, &|t, p, x| block.forward(t, "t", p, x).unwrap()),
        "residual block",
    )?;

    // two recurrent steps from a non-zero state
    let cell = LstmCell::new("lstm", 3, 4);
    let mut p = ParameterSet::new();
    cell.init(&mut p, &mut r).unwrap();
    let h0: Vec<f64> = (0..8).map(|_| r.gen_range(-0.5..0.5)).collect();
    let c0: Vec<f64> = (0..8).map(|_| r.gen_range(-0.5..0.5)).collect();
    acc(
        check_layer(seed, p, (2, 6), 2 * 8, &|t, p, x| {
            let x1 = t.slice_cols(x, 0, 3).unwrap();
            let x2 = t.slice_cols(x, 3, 3).unwrap();
            let h = t.input(2, 4, h0.clone()).unwrap();
            let c = t.input(2, 4, c0.clone()).unwrap();
            let (h, c) = cell.step(t, "t", p, x1, h, c).unwrap();
            let (h, c) = cell.step(t, "t", p, x2, h, c).unwrap();
            t.concat_cols(&[h, c]).unwrap()
        }),
        "lstm",
    )?;

    // elementwise ops and the softmax head
    let mut p = ParameterSet::new();
    p.insert("w", RealArray::new(vec![4, 4], vec![0.0; 16]).unwrap()).unwrap();
    acc(
        check_layer(seed, p, (3, 4), 12, &|t, p, x| {
            let w = t.param("t", p, "w").unwrap();
            let y = t.matmul(x, w).unwrap();
            let a = t.tanh(y);
            let b = t.sigmoid(y);
            let c = t.mul(a, b).unwrap();
            let d = t.exp(c);
            let e = t.square(d);
            let f = t.add(e, a).unwrap();
            let g = t.relu(f);
            let s = t.sub(g, b).unwrap();
            t.log_softmax(s)
        }),
        "elementwise and log-softmax",
    )?;
    Ok((worst, total))
}

pub fn test_arch(encoder: EncoderKind, craft_subnet: bool) -> ArchConfig {
    ArchConfig {
        encoder,
        residual_blocks: 1,
        convs_per_block: 1,
        channels: 2,
        spatial_units: 6,
        nonspatial_units: [6, 5],
        hidden: 4,
        inventory_units: [4, 3],
        craft_subnet,
        ..Default::default()
    }
}

pub fn small_env() -> EnvConfig {
    EnvConfig {
        max_frames: 60,
        ..Default::default()
    }
}

/// Segments rolled out by `learner`'s networks; odd ones are tagged as replay.
pub fn learner_batch(learner: &Learner, n: usize, len: usize, seed: u64) -> Vec<(Arc<TrajectorySegment>, Source)> {
    let snap = PolicySnapshot {
        version: 0,
        actor: learner.actor.clone(),
        critic: learner.critic.clone(),
    };
    let mut worker = ActorWorker::new(0, &small_env(), seed).unwrap();
    (0..n)
        .map(|i| {
            let (seg, _) = worker.collect(&snap, len).unwrap();
            (Arc::new(seg), if i % 2 == 1 { Source::Replay } else { Source::Online })
        })
        .collect()
}

pub fn test_learner(arch: &ArchConfig, ablation: AblationConfig, seed: u64, weights: LossWeights) -> Learner {
    let actor = Network::new(Role::Actor, arch, small_env().view_radius, seed).unwrap();
    let train = TrainConfig {
        seed,
        ..Default::default()
    };
    build_learner(actor.params(), arch, small_env().view_radius, &ablation, &train, &weights).unwrap()
}

/// Full loss with the V-trace constants frozen at the current parameters, for finite differences.
fn frozen_loss_check(learner: &mut Learner, seed: u64, per_param: usize) -> Result<(f64, usize), String> {
    let mut r = rng(seed);
    let batch = learner_batch(learner, 4, 6, seed);
    let prepared = PreparedBatch::new(&batch).map_err(|e| e.to_string())?;
    let mut tape = Tape::new();
    let out = learner.forward(&mut tape, &prepared).unwrap();
    let k = learner.constants(&tape, &prepared, &out).unwrap();
    let (loss, _) = learner.loss(&mut tape, &prepared, &out, &k, false).unwrap();
    let grads = tape.backward(loss).unwrap();
    let mut actor_grads = learner.actor.params().clone();
    actor_grads.zero_grad();
    tape.accumulate_into(&grads, learner.actor.scope(), &mut actor_grads).unwrap();
    let critic_grads = learner.critic.as_ref().map(|c| {
        let mut g = c.params().clone();
        g.zero_grad();
        tape.accumulate_into(&grads, c.scope(), &mut g).unwrap();
        g
    });

    let eval = |l: &Learner| -> f64 {
        let mut t = Tape::new();
        let o = l.forward(&mut t, &prepared).unwrap();
        let (v, _) = l.loss(&mut t, &prepared, &o, &k, false).unwrap();
        t.scalar(v)
    };

    let mut params = learner.actor.params().clone();
    let (mut worst, mut n) = {
        let mut probe = |p: &ParameterSet| {
            *learner.actor.params_mut() = p.clone();
            eval(learner)
        };
        check_params(&mut params, &actor_grads, Some(per_param), &mut r, &mut probe)?
    };
    *learner.actor.params_mut() = params;
    if let Some(cg) = critic_grads {
        let mut params = learner.critic.as_ref().unwrap().params().clone();
        let mut probe = |p: &ParameterSet| {
            *learner.critic.as_mut().unwrap().params_mut() = p.clone();
            eval(learner)
        };
        let (w, m) = check_params(&mut params, &cg, Some(per_param), &mut r, &mut probe)?;
        *learner.critic.as_mut().unwrap().params_mut() = params;
        worst = worst.max(w);
        n += m;
    }
    Ok((worst, n))
}

pub fn loss_checks(seed: u64) -> Result<(f64, usize), String> {
    let mut worst = 0.0f64;
    let mut total = 0;
    let configs = [
        (EncoderKind::Mlp, true, AblationConfig::default()),
        (EncoderKind::Residual, false, AblationConfig::default().with(true, true, false, true)),
        (EncoderKind::Mlp, true, AblationConfig::default().with(true, false, true, true)),
    ];
    for (i, (enc, cp, ab)) in configs.into_iter().enumerate() {
        let mut learner = test_learner(&test_arch(enc, cp), ab.clone(), seed * 7 + i as u64, LossWeights::default());
        // perturb so zero-initialised biases do not sit ReLU pre-activations exactly on the kink
        let mut r = rng(seed ^ 0xabc);
        for (_, p) in learner.actor.params_mut().iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v += r.gen_range(-0.1..0.1));
        }
        if let Some(c) = learner.critic.as_mut() {
            for (_, p) in c.params_mut().iter_mut() {
                p.value.data_mut().iter_mut().for_each(|v| *v += r.gen_range(-0.1..0.1));
            }
        }
        let (w, n) = frozen_loss_check(&mut learner, seed, 3).map_err(|e| format!("{}: {e}", ab.label()))?;
        worst = worst.max(w);
        total += n;
    }
    Ok((worst, total))
}

pub fn a4_gradients() -> Check {
    let mut worst = 0.0f64;
    let mut total = 0;
    for seed in 0..10 {
        let (w, n) = layer_checks(seed).map_err(|e| format!("seed {seed}: {e}"))?;
        worst = worst.max(w);
        total += n;
        let (w, n) = loss_checks(seed).map_err(|e| format!("seed {seed}: {e}"))?;
        worst = worst.max(w);
        total += n;
    }
    Ok(format!("{total} coordinates over 10 seeds, max relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- subsampling

pub fn a5_subsampling() -> Check {
    let demos = generate_demos(100, 5, 0.3, &EnvConfig::default()).map_err(|e| e.to_string())?;
    let configs = [
        SubsampleConfig::default(),
        SubsampleConfig {
            excluded_heads: vec![Head::Equip],
            ..Default::default()
        },
        SubsampleConfig {
            truncation: 150,
            ..Default::default()
        },
    ];
    let mut records = 0;
    for (i, demo) in demos.iter().enumerate() {
        let demo = if i % 2 == 0 { demo.with_fine_rotation(10).unwrap() } else { demo.clone() };
        let cfg = &configs[i % configs.len()];
        let out = subsample(&demo.frames, demo.seed, cfg);
        let s = out.stats;
        let accounted = out.frames_covered() + s.noop_dropped + s.excluded_dropped + s.camera_dropped + s.truncated_frames;
        ensure!(
            accounted == demo.frames.len() as u64 && out.original_length == demo.frames.len() as u64,
            "episode {i}: {accounted} frames accounted for, {} recorded",
            demo.frames.len()
        );
        ensure!(out.len() <= cfg.truncation.min(2000), "episode {i}: {} records", out.len());
        ensure!(out.records.iter().all(|r| !r.action.is_noop()), "episode {i}: no-op record kept");
        ensure!(
            out.records
                .iter()
                .all(|r| r.action.active_heads().iter().all(|h| !cfg.excluded_heads.contains(h))),
            "episode {i}: excluded head kept"
        );
        records += out.len();
    }
    Ok(format!("100 episodes conserve frames; {records} records, none no-op"))
}

// ---------------------------------------------------------------- replay

pub fn dummy_segment(id: u64, len: usize) -> TrajectorySegment {
    let env = ChainCraft::new(small_env()).unwrap();
    let (_, obs) = env.reset(0).unwrap();
    TrajectorySegment {
        observations: vec![obs; len + 1],
        actions: vec![[0; HEAD_COUNT]; len],
        rewards: vec![0.0; len],
        dones: vec![false; len],
        valid: vec![true; len],
        behavior_log_probs: vec![HEAD_SIZES.iter().map(|s| vec![-(*s as f64).ln(); *s]).collect(); len],
        behavior_values: vec![0.0; len],
        actor_state: RecurrentState::zeros(1, 4),
        critic_state: RecurrentState::zeros(1, 4),
        episode_id: id,
        actor_id: 0,
        policy_version: 0,
    }
}

pub fn a6_replay() -> Check {
    let buf = ReplayBuffer::new(5).map_err(|e| e.to_string())?;
    for i in 0..12 {
        buf.push(dummy_segment(i, 2)).map_err(|e| e.to_string())?;
        let ids: Vec<u64> = buf.snapshot().iter().map(|s| s.episode_id).collect();
        let lo = (i + 1).saturating_sub(5);
        ensure!(ids == (lo..=i).collect::<Vec<_>>(), "after {} pushes: {ids:?}", i + 1);
    }
    ensure!(buf.len() == 5 && buf.total_written() == 12, "len {} written {}", buf.len(), buf.total_written());

    let k = 10;
    let buf = ReplayBuffer::new(k).unwrap();
    for i in 0..k as u64 {
        buf.push(dummy_segment(i, 1)).unwrap();
    }
    let draws = 100_000;
    let mut counts = vec![0usize; k];
    let mut r = rng(6);
    for s in buf.sample(draws, &mut r).unwrap() {
        counts[s.episode_id as usize] += 1;
    }
    let (chi2, p) = chi_square(&counts, &vec![1.0 / k as f64; k]);
    ensure!(p > 0.01, "uniform sampling rejected: chi2 {chi2:.2}, p {p:.4}");

    for (ratio, online) in [(3usize, 4usize), (1, 8), (15, 1), (7, 2)] {
        let batch = compose_batch((0..online as u64).map(|i| Arc::new(dummy_segment(100 + i, 1))).collect(), ratio, &buf, &mut r);
        let replayed = batch.iter().filter(|(_, s)| *s == Source::Replay).count();
        let fresh = batch.iter().filter(|(_, s)| *s == Source::Online).count();
        ensure!(fresh == online && replayed == ratio * online, "ratio {ratio}: {replayed}:{fresh}");
        ensure!(
            batch[..online].iter().all(|(s, src)| *src == Source::Online && s.episode_id >= 100),
            "ratio {ratio}: online segments must lead the batch"
        );
    }
    Ok(format!("FIFO exact; chi2 {chi2:.2} (p {p:.3}); ratio 3 gives 12:4 replay:online"))
}

// ---------------------------------------------------------------- separation

/// Gradient of the loss restricted to `weights` into a copy of each network's parameters.
fn split_grads(learner: &mut Learner, weights: LossWeights, seed: u64) -> (ParameterSet, ParameterSet) {
    learner.weights = weights;
    let batch = learner_batch(learner, 4, 6, seed);
    let prepared = PreparedBatch::new(&batch).unwrap();
    let mut tape = Tape::new();
    let out = learner.forward(&mut tape, &prepared).unwrap();
    let k = learner.constants(&tape, &prepared, &out).unwrap();
    let (loss, _) = learner.loss(&mut tape, &prepared, &out, &k, false).unwrap();
    let grads = tape.backward(loss).unwrap();
    let mut a = learner.actor.params().clone();
    a.zero_grad();
    tape.accumulate_into(&grads, learner.actor.scope(), &mut a).unwrap();
    let critic = learner.critic.as_ref().unwrap();
    let mut c = critic.params().clone();
    c.zero_grad();
    tape.accumulate_into(&grads, critic.scope(), &mut c).unwrap();
    (a, c)
}

fn all_zero(p: &ParameterSet) -> bool {
    p.iter().all(|(_, x)| x.grad.data().iter().all(|g| *g == 0.0))
}

pub fn a7_separation() -> Check {
    let policy_only = LossWeights {
        value: 0.0,
        value_cloning: 0.0,
        ..Default::default()
    };
    let value_only = LossWeights {
        policy: 0.0,
        entropy: 0.0,
        policy_cloning: 0.0,
        ..Default::default()
    };
    for seed in 0..5 {
        for enc in [EncoderKind::Mlp, EncoderKind::Residual] {
            let mut l = test_learner(&test_arch(enc, true), AblationConfig::default(), seed, LossWeights::default());
            let actor_names: Vec<String> = l.actor.params().names().map(str::to_string).collect();
            ensure!(
                l.critic.as_ref().unwrap().params().names().all(|n| !actor_names.iter().any(|a| a == n)),
                "actor and critic share parameter names"
            );
            let (a, c) = split_grads(&mut l, policy_only, seed);
            ensure!(all_zero(&c), "seed {seed}: policy terms reach the critic");
            ensure!(!all_zero(&a), "seed {seed}: policy terms give the actor no gradient");
            let (a, c) = split_grads(&mut l, value_only, seed);
            ensure!(all_zero(&a), "seed {seed}: value terms reach the actor");
            ensure!(!all_zero(&c), "seed {seed}: value terms give the critic no gradient");
        }
    }
    Ok("no cross-gradients over 10 actor/critic pairs".into())
}
