//! C ABI over the `optreset` library.
//!
//! Every fallible function returns an [`OptresetStatus`]. On failure a
//! message is stored per thread and can be fetched with
//! [`optreset_last_error_message`]. Handles are opaque pointers created by
//! `*_new`/constructor functions and released with the matching `*_free`.
//! Strings returned to the caller must be released with
//! [`optreset_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use optreset::config::CliConfig;
use optreset::harness;
use optreset::nn::FlatParams;
use optreset::optim::{self, OptimHyper, OptimizerKind, OptimizerState};
use optreset::rl::{self, MdpSpec};
use optreset::tensor::Tensor;
use optreset::train;
use optreset::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptresetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Degenerate = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
    Internal = 9,
}

/// Values accepted by the `kind` argument of [`optreset_optimizer_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptresetOptimizerKind {
    Sgd = 0,
    Adam = 1,
    Rmsprop = 2,
    Radam = 3,
}

/// Opaque optimizer over a flat parameter vector of fixed length.
pub struct OptresetOptimizer {
    hyper: OptimHyper,
    state: OptimizerState,
}

/// Opaque finite MDP.
pub struct OptresetMdp {
    spec: MdpSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> OptresetStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::ShapeMismatch(..) => {
            OptresetStatus::DimensionMismatch
        }
        Error::NonFinite(_) => OptresetStatus::NonFinite,
        Error::Degenerate(_) => OptresetStatus::Degenerate,
        Error::Config(_) => OptresetStatus::Config,
        Error::Io { .. } => OptresetStatus::Io,
        Error::EmptyBatch | Error::EmptyBuffer | Error::InvalidArgument(_) => {
            OptresetStatus::InvalidArgument
        }
        Error::Malformed(_) | Error::Json(_) | Error::Csv(_) => OptresetStatus::InvalidArgument,
    }
}

struct Fail(OptresetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(status: OptresetStatus, msg: &str) -> Fail {
    Fail(status, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OptresetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            OptresetStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            OptresetStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(OptresetStatus::NullPointer, &format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(OptresetStatus::NullPointer, &format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(OptresetStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(OptresetStatus::InvalidArgument, &format!("{what} is not UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| fail(OptresetStatus::NullPointer, &format!("{what} is null")))
}

fn kind_from(kind: u32) -> Result<OptimizerKind, Fail> {
    match kind {
        0 => Ok(OptimizerKind::Sgd),
        1 => Ok(OptimizerKind::Adam),
        2 => Ok(OptimizerKind::Rmsprop),
        3 => Ok(OptimizerKind::Radam),
        _ => Err(fail(
            OptresetStatus::InvalidArgument,
            &format!("unknown optimizer kind {kind}"),
        )),
    }
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn optreset_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn optreset_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates an optimizer with fresh state for `n_params` parameters.
/// `kind` is an [`OptresetOptimizerKind`] value.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn optreset_optimizer_new(
    kind: u32,
    alpha: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    n_params: usize,
    out: *mut *mut OptresetOptimizer,
) -> OptresetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let hyper = OptimHyper {
            kind: kind_from(kind)?,
            alpha,
            beta1,
            beta2,
            epsilon,
            ..OptimHyper::adam(alpha)
        };
        hyper.validate()?;
        let state = optim::fresh_state(&[n_params])?;
        *out = Box::into_raw(Box::new(OptresetOptimizer { hyper, state }));
        Ok(())
    })
}

/// Applies one update to `params` in place.
///
/// # Safety
/// `params` and `grad` must point to `n` valid doubles.
#[no_mangle]
pub unsafe extern "C" fn optreset_optimizer_step(
    opt: *mut OptresetOptimizer,
    params: *mut f64,
    grad: *const f64,
    n: usize,
) -> OptresetStatus {
    guard(|| {
        let opt = out_ptr(opt, "optimizer")?;
        let expected = opt.state.m.len();
        if n != expected {
            return Err(Error::DimensionMismatch { expected, got: n }.into());
        }
        let params = slice_mut(params, n, "params")?;
        let grad = slice(grad, n, "grad")?;
        let p = FlatParams {
            values: Tensor::vector(params.to_vec())?,
        };
        let g = Tensor::vector(grad.to_vec())?;
        let (np, ns, _) = optim::step(&p, &g, &opt.state, &opt.hyper)?;
        params.copy_from_slice(np.as_slice());
        opt.state = ns;
        Ok(())
    })
}

/// Zeroes both moments and the step counter.
///
/// # Safety
/// `opt` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn optreset_optimizer_reset(opt: *mut OptresetOptimizer) -> OptresetStatus {
    guard(|| {
        let opt = out_ptr(opt, "optimizer")?;
        opt.state = optim::reset_state(&opt.state);
        Ok(())
    })
}

/// Copies the raw moments and step counter out. Either of `m` and `v` may
/// be NULL to skip it.
///
/// # Safety
/// Non-null `m` and `v` must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn optreset_optimizer_moments(
    opt: *const OptresetOptimizer,
    m: *mut f64,
    v: *mut f64,
    n: usize,
    step_count: *mut u64,
) -> OptresetStatus {
    guard(|| {
        let opt = opt
            .as_ref()
            .ok_or_else(|| fail(OptresetStatus::NullPointer, "optimizer is null"))?;
        let expected = opt.state.m.len();
        if n != expected {
            return Err(Error::DimensionMismatch { expected, got: n }.into());
        }
        if !m.is_null() {
            slice_mut(m, n, "m")?.copy_from_slice(opt.state.m.as_slice());
        }
        if !v.is_null() {
            slice_mut(v, n, "v")?.copy_from_slice(opt.state.v.as_slice());
        }
        if let Some(c) = step_count.as_mut() {
            *c = opt.state.i;
        }
        Ok(())
    })
}

/// # Safety
/// `opt` must come from [`optreset_optimizer_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn optreset_optimizer_free(opt: *mut OptresetOptimizer) {
    if !opt.is_null() {
        drop(Box::from_raw(opt));
    }
}

unsafe fn put_mdp(out: *mut *mut OptresetMdp, spec: MdpSpec) -> Result<(), Fail> {
    let out = out_ptr(out, "out")?;
    *out = Box::into_raw(Box::new(OptresetMdp { spec }));
    Ok(())
}

/// Deterministic gridworld; see the README for the layout.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn optreset_mdp_gridworld(
    width: usize,
    height: usize,
    goal_x: usize,
    goal_y: usize,
    step_penalty: f64,
    gamma: f64,
    out: *mut *mut OptresetMdp,
) -> OptresetStatus {
    guard(|| {
        let spec = rl::make_gridworld(width, height, (goal_x, goal_y), step_penalty, gamma, 0)?;
        put_mdp(out, spec)
    })
}

/// Random garnet MDP.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn optreset_mdp_garnet(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    gamma: f64,
    seed: u64,
    out: *mut *mut OptresetMdp,
) -> OptresetStatus {
    guard(|| {
        let spec = rl::make_garnet(n_states, n_actions, branching, gamma, seed)?;
        put_mdp(out, spec)
    })
}

/// Builds an MDP from its JSON description (the serialized `MdpSpec`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn optreset_mdp_from_json(
    json: *const c_char,
    out: *mut *mut OptresetMdp,
) -> OptresetStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let spec: MdpSpec = serde_json::from_str(text).map_err(Error::from)?;
        spec.validate()?;
        put_mdp(out, spec)
    })
}

/// # Safety
/// `mdp` must be a live handle; the out pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn optreset_mdp_dims(
    mdp: *const OptresetMdp,
    n_states: *mut usize,
    n_actions: *mut usize,
) -> OptresetStatus {
    guard(|| {
        let mdp = mdp
            .as_ref()
            .ok_or_else(|| fail(OptresetStatus::NullPointer, "mdp is null"))?;
        if let Some(s) = n_states.as_mut() {
            *s = mdp.spec.n_states;
        }
        if let Some(a) = n_actions.as_mut() {
            *a = mdp.spec.n_actions;
        }
        Ok(())
    })
}

/// Solves for Q* and writes it row-major (`state * n_actions + action`).
///
/// # Safety
/// `q_out` must point to `len` writable doubles, `len = n_states * n_actions`.
#[no_mangle]
pub unsafe extern "C" fn optreset_mdp_value_iteration(
    mdp: *const OptresetMdp,
    tol: f64,
    q_out: *mut f64,
    len: usize,
) -> OptresetStatus {
    guard(|| {
        let mdp = mdp
            .as_ref()
            .ok_or_else(|| fail(OptresetStatus::NullPointer, "mdp is null"))?;
        let expected = mdp.spec.n_states * mdp.spec.n_actions;
        if len != expected {
            return Err(Error::DimensionMismatch { expected, got: len }.into());
        }
        let q = rl::value_iteration_oracle(&mdp.spec, tol)?;
        let out = slice_mut(q_out, len, "q_out")?;
        for s in 0..mdp.spec.n_states {
            out[s * mdp.spec.n_actions..(s + 1) * mdp.spec.n_actions].copy_from_slice(q.row(s));
        }
        Ok(())
    })
}

/// # Safety
/// `mdp` must come from one of the MDP constructors and not be used again.
#[no_mangle]
pub unsafe extern "C" fn optreset_mdp_free(mdp: *mut OptresetMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Runs one training job described by a TOML config (same format as the
/// CLI, `[env]` required) and returns the run record as JSON in
/// `*json_out`. Nothing is written to disk.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `json_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn optreset_train_toml(
    toml: *const c_char,
    json_out: *mut *mut c_char,
) -> OptresetStatus {
    guard(|| {
        let out = out_ptr(json_out, "json_out")?;
        *out = ptr::null_mut();
        let text = str_arg(toml, "toml")?;
        let cfg = CliConfig::from_toml_str(text, &[])?;
        let spec = cfg.env()?.build(cfg.train.gamma)?;
        let record = train::run_training(&cfg.train, &spec)?;
        let json = serde_json::to_string(&record).map_err(Error::from)?;
        let c = CString::new(json).map_err(|_| fail(OptresetStatus::Internal, "NUL in output"))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// `(agent - random) / (reference - random)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn optreset_normalize_score(
    agent: f64,
    random_score: f64,
    reference_score: f64,
    out: *mut f64,
) -> OptresetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let anchors = harness::NormalizationAnchors {
            random_score,
            reference_score,
        };
        *out = harness::normalize_score(agent, &anchors)?;
        Ok(())
    })
}

/// Trapezoidal area under `curve`; divided by `n - 1` when `normalized`.
///
/// # Safety
/// `curve` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn optreset_auc(
    curve: *const f64,
    n: usize,
    normalized: bool,
    out: *mut f64,
) -> OptresetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let curve = slice(curve, n, "curve")?;
        *out = harness::area_under_curve(curve, normalized)?;
        Ok(())
    })
}
