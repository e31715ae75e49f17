//! C ABI over the craftrl engine.
//!
//! Every function returns a [`CrStatus`]. On failure the message is kept per thread and can be
//! read with [`cr_last_error`]. Handles are opaque and must be released with their `_free`
//! function. Panics never cross the boundary; they surface as `CR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use craftrl::agent::{nonspatial_width, spatial_width, FeatureBatch, Network, RecurrentState};
use craftrl::config::Config;
use craftrl::env::{ChainCraft, ComposedAction, Observation, WorldState, HEAD_COUNT, HEAD_SIZES, MILESTONE_COUNT};
use craftrl::losses::{vtrace, VTraceInput};
use craftrl::pipeline::load_network;
use craftrl::trainer::evaluate_network;
use craftrl::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Usage = 4,
    Format = 5,
    Io = 6,
    Numeric = 7,
    Unavailable = 8,
    Generation = 9,
    /// The episode is over; reset the environment first.
    EpisodeDone = 10,
    Panic = 99,
}

/// Number of action heads.
pub const CR_HEAD_COUNT: usize = 7;
/// Number of milestones in the reward chain.
pub const CR_MILESTONE_COUNT: usize = 9;

const _: () = assert!(CR_HEAD_COUNT == HEAD_COUNT && CR_MILESTONE_COUNT == MILESTONE_COUNT);

/// An environment together with its current episode.
pub struct CrEnv {
    env: ChainCraft,
    episode: Option<(WorldState, Observation)>,
}

/// A policy network with its recurrent state and sampling RNG.
pub struct CrPolicy {
    net: Network,
    config: Config,
    state: RecurrentState,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => CrStatus::Config,
            Error::Usage(_) => CrStatus::Usage,
            Error::Format(_) => CrStatus::Format,
            Error::Io(_) => CrStatus::Io,
            Error::Numeric(_) => CrStatus::Numeric,
            Error::Unavailable(_) => CrStatus::Unavailable,
            Error::Generation(_) => CrStatus::Generation,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(CrStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CrStatus::Panic
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn config_from(toml: *const c_char) -> Result<Config, Failure> {
    Ok(Config::parse(opt_str(toml, "config")?.unwrap_or(""))?)
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Writes the size of each action head into `sizes[0..CR_HEAD_COUNT]`.
#[no_mangle]
pub unsafe extern "C" fn cr_head_sizes(sizes: *mut usize) -> CrStatus {
    guard(|| {
        out_slice(sizes, HEAD_COUNT, "sizes")?.copy_from_slice(&HEAD_SIZES);
        Ok(())
    })
}

/// Creates an environment from a TOML config (null for defaults). Only the `[env]` section is used.
#[no_mangle]
pub unsafe extern "C" fn cr_env_new(config_toml: *const c_char, out: *mut *mut CrEnv) -> CrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = config_from(config_toml)?;
        let env = ChainCraft::new(config.env)?;
        *out = Box::into_raw(Box::new(CrEnv { env, episode: None }));
        Ok(())
    })
}

/// Releases an environment. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cr_env_free(env: *mut CrEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Starts a new episode on the map generated from `seed`.
#[no_mangle]
pub unsafe extern "C" fn cr_env_reset(env: *mut CrEnv, seed: u64) -> CrStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        env.episode = Some(env.env.reset(seed)?);
        Ok(())
    })
}

fn episode(env: &mut CrEnv) -> Result<&mut (WorldState, Observation), Failure> {
    env.episode
        .as_mut()
        .ok_or_else(|| Failure(CrStatus::Usage, "no episode in progress; call cr_env_reset".into()))
}

/// Applies the action given as one index per head (`CR_HEAD_COUNT` entries).
/// `reward` and `done` may be null.
#[no_mangle]
pub unsafe extern "C" fn cr_env_step(
    env: *mut CrEnv,
    action: *const usize,
    reward: *mut f64,
    done: *mut bool,
) -> CrStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let idx = in_slice(action, HEAD_COUNT, "action")?;
        let action = ComposedAction::from_indices(idx)?;
        let CrEnv { env: sim, episode } = env;
        let (state, obs) = episode
            .as_mut()
            .ok_or_else(|| Failure(CrStatus::Usage, "no episode in progress; call cr_env_reset".into()))?;
        if state.done {
            return Err(Failure(CrStatus::EpisodeDone, "the episode is over; call cr_env_reset".into()));
        }
        let outcome = sim.step(state, &action)?;
        *obs = outcome.observation;
        if let Some(r) = reward.as_mut() {
            *r = outcome.reward;
        }
        if let Some(d) = done.as_mut() {
            *d = outcome.done;
        }
        Ok(())
    })
}

/// Frames elapsed, return so far and the obtained flag of every milestone
/// (`CR_MILESTONE_COUNT` entries). Any output may be null.
#[no_mangle]
pub unsafe extern "C" fn cr_env_progress(
    env: *mut CrEnv,
    frame: *mut u32,
    episode_return: *mut f64,
    milestones: *mut bool,
) -> CrStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let (state, _) = episode(env)?;
        if let Some(f) = frame.as_mut() {
            *f = state.frame;
        }
        if let Some(r) = episode_return.as_mut() {
            *r = state.episode_return;
        }
        if !milestones.is_null() {
            out_slice(milestones, MILESTONE_COUNT, "milestones")?.copy_from_slice(&state.obtained);
        }
        Ok(())
    })
}

/// Widths of the spatial and non-spatial feature vectors.
#[no_mangle]
pub unsafe extern "C" fn cr_env_feature_sizes(env: *const CrEnv, spatial: *mut usize, nonspatial: *mut usize) -> CrStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        *spatial.as_mut().ok_or_else(|| null("spatial"))? = spatial_width(env.env.config().view_radius);
        *nonspatial.as_mut().ok_or_else(|| null("nonspatial"))? = nonspatial_width();
        Ok(())
    })
}

/// Copies the current observation's features, the same ones the networks consume.
/// Buffer lengths must equal the sizes from `cr_env_feature_sizes`.
#[no_mangle]
pub unsafe extern "C" fn cr_env_features(
    env: *mut CrEnv,
    spatial: *mut f64,
    spatial_len: usize,
    nonspatial: *mut f64,
    nonspatial_len: usize,
) -> CrStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let (_, obs) = episode(env)?;
        let f = FeatureBatch::single(obs);
        if spatial_len != f.spatial.len() || nonspatial_len != f.nonspatial.len() {
            return Err(invalid(format!(
                "feature buffers need lengths {} and {}, got {spatial_len} and {nonspatial_len}",
                f.spatial.len(),
                f.nonspatial.len()
            )));
        }
        out_slice(spatial, spatial_len, "spatial")?.copy_from_slice(&f.spatial);
        out_slice(nonspatial, nonspatial_len, "nonspatial")?.copy_from_slice(&f.nonspatial);
        Ok(())
    })
}

/// Loads a policy checkpoint. `config_toml` (null for defaults) must describe the architecture
/// it was trained with. `seed` drives action sampling.
#[no_mangle]
pub unsafe extern "C" fn cr_policy_load(
    path: *const c_char,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut CrPolicy,
) -> CrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = opt_str(path, "path")?.ok_or_else(|| null("path"))?;
        let config = config_from(config_toml)?;
        let net = load_network(Path::new(path), &config)?;
        if !net.role().has_policy() {
            return Err(Failure(CrStatus::Usage, format!("{path} holds a critic, not a policy")));
        }
        let state = net.initial_state(1);
        *out = Box::into_raw(Box::new(CrPolicy {
            net,
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }));
        Ok(())
    })
}

/// Releases a policy. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cr_policy_free(policy: *mut CrPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Clears the recurrent state; call at the start of every episode.
#[no_mangle]
pub unsafe extern "C" fn cr_policy_reset(policy: *mut CrPolicy) -> CrStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| null("policy"))?;
        p.state = p.net.initial_state(1);
        Ok(())
    })
}

/// Picks an action for the environment's current observation and writes one index per head
/// into `action[0..CR_HEAD_COUNT]`. With `sampled` false every head takes its most likely value.
#[no_mangle]
pub unsafe extern "C" fn cr_policy_act(policy: *mut CrPolicy, env: *mut CrEnv, sampled: bool, action: *mut usize) -> CrStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| null("policy"))?;
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let out = out_slice(action, HEAD_COUNT, "action")?;
        let (_, obs) = episode(env)?;
        let step = p.net.step(&FeatureBatch::single(obs), &p.state)?;
        p.state = step.state;
        let dist = step.dist.expect("policy heads checked at load");
        let idx = if sampled {
            dist.sample_indices(&mut p.rng)
        } else {
            dist.mode_indices()
        };
        out.copy_from_slice(&idx);
        Ok(())
    })
}

/// Evaluates the policy on seeds `seed_base..seed_base + episodes` with the environment of its
/// config. `frequency` (may be null) receives the per-milestone success rates.
#[no_mangle]
pub unsafe extern "C" fn cr_evaluate(
    policy: *const CrPolicy,
    episodes: usize,
    seed_base: u64,
    sampled: bool,
    mean: *mut f64,
    frequency: *mut f64,
) -> CrStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        let report = evaluate_network(&p.net, &p.config.env, episodes, seed_base, sampled)?;
        if let Some(m) = mean.as_mut() {
            *m = report.mean;
        }
        if !frequency.is_null() {
            out_slice(frequency, MILESTONE_COUNT, "frequency")?.copy_from_slice(&report.reward_frequency);
        }
        Ok(())
    })
}

/// V-trace targets and advantages for one sequence of length `len`.
/// `advantages` may be null.
#[no_mangle]
pub unsafe extern "C" fn cr_vtrace(
    len: usize,
    rewards: *const f64,
    discounts: *const f64,
    behavior_log_probs: *const f64,
    target_log_probs: *const f64,
    values: *const f64,
    bootstrap: f64,
    rho_bar: f64,
    c_bar: f64,
    targets: *mut f64,
    advantages: *mut f64,
) -> CrStatus {
    guard(|| {
        if len == 0 {
            return Err(invalid("len must be positive"));
        }
        let input = VTraceInput {
            rewards: in_slice(rewards, len, "rewards")?.to_vec(),
            discounts: in_slice(discounts, len, "discounts")?.to_vec(),
            behavior_log_probs: in_slice(behavior_log_probs, len, "behavior_log_probs")?.to_vec(),
            target_log_probs: in_slice(target_log_probs, len, "target_log_probs")?.to_vec(),
            values: in_slice(values, len, "values")?.to_vec(),
            bootstrap,
            rho_bar,
            c_bar,
        };
        let res = vtrace(&input)?;
        out_slice(targets, len, "targets")?.copy_from_slice(&res.targets);
        if !advantages.is_null() {
            out_slice(advantages, len, "advantages")?.copy_from_slice(&res.advantages);
        }
        Ok(())
    })
}
