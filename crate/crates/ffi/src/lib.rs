//! C ABI for the simulator environment: opaque handles, status codes and a
//! flat-buffer step interface so other languages can drive episodes.

use fluxswarm::config::{parse_config, RunConfig};
use fluxswarm::env::{Environment, EpisodeStatus, TruncationCause, OBS_DIM};
use fluxswarm::vec2::vec2;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    FsOk = 0,
    FsErrNullPointer = 1,
    FsErrInvalidArgument = 2,
    FsErrConfig = 3,
    FsErrUtf8 = 4,
    FsErrRuntime = 5,
}

/// Episode state after a step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsEpisodeState {
    FsRunning = 0,
    FsSuccess = 1,
    FsFailure = 2,
    FsTruncatedTimeout = 3,
    FsTruncatedCfd = 4,
}

/// Opaque simulation environment handle.
pub struct FsEnv {
    inner: Environment,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: impl Into<String>) {
    let message = message.into();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() =
            CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    });
}

fn status_of(episode: EpisodeStatus) -> FsEpisodeState {
    match episode {
        EpisodeStatus::Running => FsEpisodeState::FsRunning,
        EpisodeStatus::Success => FsEpisodeState::FsSuccess,
        EpisodeStatus::Failure => FsEpisodeState::FsFailure,
        EpisodeStatus::Truncated(TruncationCause::Timeout) => FsEpisodeState::FsTruncatedTimeout,
        EpisodeStatus::Truncated(TruncationCause::CfdDivergence) => FsEpisodeState::FsTruncatedCfd,
    }
}

fn build_env(config: &RunConfig) -> Result<Environment, String> {
    let setup = config.build().map_err(|e| e.to_string())?;
    setup.make_env().map_err(|e| e.to_string())
}

fn write_observations(env: &Environment, out: *mut f64, len: usize) -> FsStatus {
    let needed = env.n_agents() * OBS_DIM;
    if out.is_null() {
        set_error("observation buffer is null");
        return FsStatus::FsErrNullPointer;
    }
    if len < needed {
        set_error(format!(
            "observation buffer holds {len} doubles, need {needed}"
        ));
        return FsStatus::FsErrInvalidArgument;
    }
    let slice = unsafe { std::slice::from_raw_parts_mut(out, needed) };
    for (agent, chunk) in env
        .observations()
        .iter()
        .zip(slice.chunks_exact_mut(OBS_DIM))
    {
        chunk.copy_from_slice(agent);
    }
    FsStatus::FsOk
}

/// Message of the most recent error on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Observation features per agent.
#[no_mangle]
pub extern "C" fn fs_observation_dim() -> usize {
    OBS_DIM
}

/// Reward objectives per agent per step.
#[no_mangle]
pub extern "C" fn fs_objective_count() -> usize {
    fluxswarm::env::N_OBJECTIVES
}

/// Creates an environment from TOML text (pass an empty string for the
/// built-in defaults). On success writes the handle to `out`.
///
/// # Safety
/// `toml_text` must be a valid NUL-terminated string and `out` a valid
/// pointer; the returned handle must be released with [`fs_env_destroy`].
#[no_mangle]
pub unsafe extern "C" fn fs_env_create_from_toml(
    toml_text: *const c_char,
    out: *mut *mut FsEnv,
) -> FsStatus {
    if toml_text.is_null() || out.is_null() {
        set_error("null pointer argument");
        return FsStatus::FsErrNullPointer;
    }
    let text = match CStr::from_ptr(toml_text).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config text is not valid UTF-8");
            return FsStatus::FsErrUtf8;
        }
    };
    let result = catch_unwind(|| -> Result<Environment, String> {
        let config = parse_config(text).map_err(|e| e.to_string())?;
        build_env(&config)
    });
    match result {
        Ok(Ok(env)) => {
            *out = Box::into_raw(Box::new(FsEnv { inner: env }));
            FsStatus::FsOk
        }
        Ok(Err(message)) => {
            set_error(message);
            *out = ptr::null_mut();
            FsStatus::FsErrConfig
        }
        Err(_) => {
            set_error("panic while building environment");
            *out = ptr::null_mut();
            FsStatus::FsErrRuntime
        }
    }
}

/// Creates an environment by loading a TOML config file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_env_create(path: *const c_char, out: *mut *mut FsEnv) -> FsStatus {
    if path.is_null() || out.is_null() {
        set_error("null pointer argument");
        return FsStatus::FsErrNullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(p) => p,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return FsStatus::FsErrUtf8;
        }
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            set_error(format!("cannot read {path}: {e}"));
            return FsStatus::FsErrConfig;
        }
    };
    let c_text = match CString::new(text) {
        Ok(t) => t,
        Err(_) => {
            set_error("config contains interior NUL bytes");
            return FsStatus::FsErrConfig;
        }
    };
    fs_env_create_from_toml(c_text.as_ptr(), out)
}

/// Releases an environment handle. Null is a no-op.
///
/// # Safety
/// `env` must be a handle from a create call, not yet destroyed.
#[no_mangle]
pub unsafe extern "C" fn fs_env_destroy(env: *mut FsEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of agents in the swarm.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_env_agent_count(env: *const FsEnv) -> usize {
    if env.is_null() {
        return 0;
    }
    (*env).inner.n_agents()
}

/// Simulation time (s) inside the current episode.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_env_time(env: *const FsEnv) -> f64 {
    if env.is_null() {
        return f64::NAN;
    }
    (*env).inner.time()
}

/// Steps taken in the current episode.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_env_step_count(env: *const FsEnv) -> u64 {
    if env.is_null() {
        return 0;
    }
    (*env).inner.step_count() as u64
}

/// Resets the episode and writes the `agents * 8` initial observations.
///
/// # Safety
/// `env` must be a live handle and `obs_out` must point to at least
/// `obs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fs_env_reset(
    env: *mut FsEnv,
    obs_out: *mut f64,
    obs_len: usize,
) -> FsStatus {
    if env.is_null() {
        set_error("env handle is null");
        return FsStatus::FsErrNullPointer;
    }
    let env = &mut *env;
    let result = catch_unwind(AssertUnwindSafe(|| env.inner.reset()));
    match result {
        Ok(_) => write_observations(&env.inner, obs_out, obs_len),
        Err(_) => {
            set_error("panic during reset");
            FsStatus::FsErrRuntime
        }
    }
}

/// Advances one control step.
///
/// `actions` holds `agents * 2` normalized components in agent-id order.
/// On success writes `agents * 8` observations, `agents * 3` rewards
/// (progress, energy, smoothness per agent) and the episode state. Stepping
/// a finished episode is an error; call [`fs_env_reset`] first.
///
/// # Safety
/// All pointers must be valid for their stated lengths; `env` must be a
/// live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_env_step(
    env: *mut FsEnv,
    actions: *const f64,
    actions_len: usize,
    obs_out: *mut f64,
    obs_len: usize,
    rewards_out: *mut f64,
    rewards_len: usize,
    state_out: *mut FsEpisodeState,
) -> FsStatus {
    if env.is_null() || actions.is_null() || state_out.is_null() {
        set_error("null pointer argument");
        return FsStatus::FsErrNullPointer;
    }
    let env = &mut *env;
    let n = env.inner.n_agents();
    if actions_len < 2 * n {
        set_error(format!(
            "action buffer holds {actions_len} doubles, need {}",
            2 * n
        ));
        return FsStatus::FsErrInvalidArgument;
    }
    if env.inner.status().is_terminal() {
        set_error("episode already finished; reset the environment");
        return FsStatus::FsErrInvalidArgument;
    }
    let raw = std::slice::from_raw_parts(actions, 2 * n);
    let actions: Vec<_> = raw.chunks_exact(2).map(|c| vec2(c[0], c[1])).collect();
    let outcome = match catch_unwind(AssertUnwindSafe(|| env.inner.step(&actions))) {
        Ok(outcome) => outcome,
        Err(_) => {
            set_error("panic during step");
            return FsStatus::FsErrRuntime;
        }
    };
    if rewards_out.is_null() {
        set_error("reward buffer is null");
        return FsStatus::FsErrNullPointer;
    }
    if rewards_len < 3 * n {
        set_error(format!(
            "reward buffer holds {rewards_len} doubles, need {}",
            3 * n
        ));
        return FsStatus::FsErrInvalidArgument;
    }
    let rewards = std::slice::from_raw_parts_mut(rewards_out, 3 * n);
    for agent in 0..n {
        let row = outcome.rewards.row(agent);
        rewards[3 * agent..3 * agent + 3].copy_from_slice(&row);
    }
    *state_out = status_of(outcome.status);
    write_observations(&env.inner, obs_out, obs_len)
}
