//! C ABI over the simulator, affordance scoring, and controller calibration.
//!
//! Handles are opaque pointers owned by the library; every entry point
//! returns an `ImphrlStatus` and writes results through out parameters.
//! All functions are panic-safe: a Rust panic is reported as
//! `IMPHRL_STATUS_INTERNAL` instead of unwinding across the boundary.

use std::ffi::CStr;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use imphrl::affordance::affordance_coupling;
use imphrl::config::{AblationCase, Profile, RunConfig};
use imphrl::controller::{fit_adaptive_params, Demonstration};
use imphrl::envs::{TaskEnv, TaskKind};
use imphrl::primitives::PrimitiveId;
use imphrl::rl::{call_from_theta, ACTION_DIM};

/// Status codes returned by every API call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ImphrlStatus {
    /// Success.
    ImphrlStatusOk = 0,
    /// A required pointer argument was null.
    ImphrlStatusNullPointer = 1,
    /// An argument was out of range (task id, primitive id, buffer size).
    ImphrlStatusInvalidArgument = 2,
    /// A path argument was not valid UTF-8.
    ImphrlStatusBadUtf8 = 3,
    /// Filesystem or parse failure; see `imphrl_last_error`.
    ImphrlStatusIo = 4,
    /// Parameter fitting failed (degenerate regressors, no demos).
    ImphrlStatusFitFailed = 5,
    /// The episode has ended; reset before stepping again.
    ImphrlStatusEpisodeDone = 6,
    /// Internal panic; see `imphrl_last_error`.
    ImphrlStatusInternal = 7,
}

use ImphrlStatus::*;

/// Task selector for `imphrl_env_new`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ImphrlTask {
    ImphrlTaskLift = 0,
    ImphrlTaskDoor = 1,
    ImphrlTaskWipe = 2,
    ImphrlTaskCleanup = 3,
}

/// Ablation arm selector: which controller/affordance switches are active.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ImphrlAblation {
    ImphrlAblationFull = 0,
    ImphrlAblationCase1 = 1,
    ImphrlAblationCase2 = 2,
    ImphrlAblationCase3 = 3,
}

/// Result of one primitive decision.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ImphrlStepInfo {
    pub env_reward: f64,
    pub shaped_reward: f64,
    /// Affordance coupling of the executed call, in [0, 1].
    pub affordance: f64,
    /// Peak contact force over the execution, N.
    pub max_force: f64,
    /// Actuation energy over the execution, J.
    pub energy: f64,
    /// Atomic-action budget consumed by this decision.
    pub atomic_cost: usize,
    /// 1 when the task's success predicate holds after the decision.
    pub success: u8,
    /// 1 when the episode ended (budget exhausted or divergence).
    pub done: u8,
}

/// Result of a calibration fit.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ImphrlFitResult {
    pub beta: f64,
    pub gamma_e: f64,
    /// Mean per-demonstration residual MSE.
    pub mean_mse: f64,
    pub n_demos: usize,
}

/// Opaque environment handle.
pub struct ImphrlEnv {
    env: TaskEnv,
}

thread_local! {
    static LAST_ERROR: std::cell::RefCell<std::ffi::CString> =
        std::cell::RefCell::new(std::ffi::CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = std::ffi::CString::new(cleaned).unwrap();
    });
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn imphrl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn guarded(f: impl FnOnce() -> ImphrlStatus) -> ImphrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            ImphrlStatusInternal
        }
    }
}

fn task_kind(task: ImphrlTask) -> TaskKind {
    match task {
        ImphrlTask::ImphrlTaskLift => TaskKind::Lift,
        ImphrlTask::ImphrlTaskDoor => TaskKind::Door,
        ImphrlTask::ImphrlTaskWipe => TaskKind::Wipe,
        ImphrlTask::ImphrlTaskCleanup => TaskKind::Cleanup,
    }
}

fn ablation_case(a: ImphrlAblation) -> AblationCase {
    match a {
        ImphrlAblation::ImphrlAblationFull => AblationCase::Full,
        ImphrlAblation::ImphrlAblationCase1 => AblationCase::Case1,
        ImphrlAblation::ImphrlAblationCase2 => AblationCase::Case2,
        ImphrlAblation::ImphrlAblationCase3 => AblationCase::Case3,
    }
}

/// Creates an environment for `task` under the given ablation arm, already
/// reset with `seed`. On success writes the handle to `out`.
#[no_mangle]
pub extern "C" fn imphrl_env_new(
    task: ImphrlTask,
    ablation: ImphrlAblation,
    seed: u64,
    out: *mut *mut ImphrlEnv,
) -> ImphrlStatus {
    if out.is_null() {
        return ImphrlStatusNullPointer;
    }
    guarded(|| {
        let cfg = RunConfig::new(task_kind(task), Profile::Desk, ablation_case(ablation), seed);
        let mut env = TaskEnv::new(cfg.task_spec(), cfg.env_config());
        env.reset(seed);
        let handle = Box::new(ImphrlEnv { env });
        unsafe { *out = Box::into_raw(handle) };
        ImphrlStatusOk
    })
}

/// Releases an environment handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn imphrl_env_free(env: *mut ImphrlEnv) {
    if !env.is_null() {
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Observation length of the environment's task.
#[no_mangle]
pub extern "C" fn imphrl_env_obs_dim(env: *const ImphrlEnv) -> usize {
    if env.is_null() {
        return 0;
    }
    let handle = unsafe { &*env };
    imphrl::envs::obs_dim(handle.env.spec.kind)
}

/// Number of continuous parameters expected per primitive call.
#[no_mangle]
pub extern "C" fn imphrl_theta_dim() -> usize {
    ACTION_DIM
}

fn write_obs(
    obs: &[f64],
    obs_out: *mut f64,
    obs_cap: usize,
    obs_len: *mut usize,
) -> ImphrlStatus {
    if obs_out.is_null() || obs_len.is_null() {
        return ImphrlStatusNullPointer;
    }
    if obs_cap < obs.len() {
        set_error("observation buffer too small");
        return ImphrlStatusInvalidArgument;
    }
    unsafe {
        std::ptr::copy_nonoverlapping(obs.as_ptr(), obs_out, obs.len());
        *obs_len = obs.len();
    }
    ImphrlStatusOk
}

/// Resets the episode from `seed` and writes the initial observation.
#[no_mangle]
pub extern "C" fn imphrl_env_reset(
    env: *mut ImphrlEnv,
    seed: u64,
    obs_out: *mut f64,
    obs_cap: usize,
    obs_len: *mut usize,
) -> ImphrlStatus {
    if env.is_null() {
        return ImphrlStatusNullPointer;
    }
    guarded(|| {
        let handle = unsafe { &mut *env };
        let obs = handle.env.reset(seed);
        write_obs(&obs.0, obs_out, obs_cap, obs_len)
    })
}

fn decode_call(
    primitive: u32,
    theta: *const f64,
) -> Result<imphrl::primitives::PrimitiveCall, ImphrlStatus> {
    if theta.is_null() {
        return Err(ImphrlStatusNullPointer);
    }
    if primitive >= imphrl::primitives::NUM_PRIMITIVES as u32 {
        set_error("primitive index out of range");
        return Err(ImphrlStatusInvalidArgument);
    }
    let slice = unsafe { std::slice::from_raw_parts(theta, ACTION_DIM) };
    let mut arr = [0.0; ACTION_DIM];
    arr.copy_from_slice(slice);
    Ok(call_from_theta(
        PrimitiveId::from_index(primitive as usize),
        &arr,
    ))
}

/// Executes one primitive decision. `theta` must hold `imphrl_theta_dim()`
/// values laid out as position xyz, yaw, delta xyz, gripper, stiffness xyzpsi.
#[no_mangle]
pub extern "C" fn imphrl_env_step(
    env: *mut ImphrlEnv,
    primitive: u32,
    theta: *const f64,
    info_out: *mut ImphrlStepInfo,
    obs_out: *mut f64,
    obs_cap: usize,
    obs_len: *mut usize,
) -> ImphrlStatus {
    if env.is_null() || info_out.is_null() {
        return ImphrlStatusNullPointer;
    }
    guarded(|| {
        let handle = unsafe { &mut *env };
        if handle.env.done {
            set_error("episode is done; call imphrl_env_reset");
            return ImphrlStatusEpisodeDone;
        }
        let call = match decode_call(primitive, theta) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let (obs, info, done) = handle.env.step(&call);
        unsafe {
            *info_out = ImphrlStepInfo {
                env_reward: info.env_reward,
                shaped_reward: info.shaped_reward,
                affordance: info.affordance,
                max_force: info.max_force,
                energy: info.energy,
                atomic_cost: info.atomic_cost,
                success: info.success as u8,
                done: done as u8,
            };
        }
        write_obs(&obs.0, obs_out, obs_cap, obs_len)
    })
}

/// Scores the affordance coupling a candidate call would receive in the
/// current state, without executing it.
#[no_mangle]
pub extern "C" fn imphrl_affordance_eval(
    env: *const ImphrlEnv,
    primitive: u32,
    theta: *const f64,
    coupling_out: *mut f64,
) -> ImphrlStatus {
    if env.is_null() || coupling_out.is_null() {
        return ImphrlStatusNullPointer;
    }
    guarded(|| {
        let handle = unsafe { &*env };
        let call = match decode_call(primitive, theta) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let ctx = handle.env.affordance_ctx();
        match affordance_coupling(&call, &ctx) {
            Ok(c) => {
                unsafe { *coupling_out = c };
                ImphrlStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                ImphrlStatusInvalidArgument
            }
        }
    })
}

/// Fits adaptive-controller parameters from a directory of demonstration
/// CSVs (`time,fx,fy,fz,dx,dy,dz,kdot_x,kdot_y,kdot_z`).
#[no_mangle]
pub extern "C" fn imphrl_fit_params(
    demo_dir: *const c_char,
    result_out: *mut ImphrlFitResult,
) -> ImphrlStatus {
    if demo_dir.is_null() || result_out.is_null() {
        return ImphrlStatusNullPointer;
    }
    guarded(|| {
        let dir = match unsafe { CStr::from_ptr(demo_dir) }.to_str() {
            Ok(s) => s,
            Err(_) => return ImphrlStatusBadUtf8,
        };
        let entries = match std::fs::read_dir(dir) {
            Ok(e) => e,
            Err(e) => {
                set_error(&format!("reading {dir}: {e}"));
                return ImphrlStatusIo;
            }
        };
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let mut demos = Vec::with_capacity(paths.len());
        for p in &paths {
            match Demonstration::load_csv(p) {
                Ok(d) => demos.push(d),
                Err(e) => {
                    set_error(&e.to_string());
                    return ImphrlStatusIo;
                }
            }
        }
        match fit_adaptive_params(&demos) {
            Ok(fit) => {
                let mean_mse = if fit.per_demo.is_empty() {
                    0.0
                } else {
                    fit.per_demo.iter().map(|d| d.mse).sum::<f64>() / fit.per_demo.len() as f64
                };
                unsafe {
                    *result_out = ImphrlFitResult {
                        beta: fit.beta,
                        gamma_e: fit.gamma_e,
                        mean_mse,
                        n_demos: fit.per_demo.len(),
                    };
                }
                ImphrlStatusOk
            }
            Err(e) => {
                set_error(&e.to_string());
                ImphrlStatusFitFailed
            }
        }
    })
}
