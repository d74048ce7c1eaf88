//! C ABI over `tlnmem`.
//!
//! Objects are opaque handles created by `*_new`/`*_load` and released with
//! `*_free`. Every fallible call returns a [`TlnmemStatus`]; on failure the
//! message is kept per thread and read with [`tlnmem_last_error_message`].
//! Array arguments are `(pointer, length)` pairs of `double`; indices are 0-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tlnmem::cert::{certify_lp, certify_sdp, LpOptions, SdpSearch};
use tlnmem::data::{load_model, save_model};
use tlnmem::memory::{GainMode, Session, SessionConfig};
use tlnmem::nalgebra::DVector;
use tlnmem::network::{CstlnParams, Network};
use tlnmem::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlnmemStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Memory full or a latent transition failed.
    Capacity = 4,
    NoCertificate = 5,
    Numerical = 6,
    Io = 7,
    /// Malformed or incompatible model file.
    Format = 8,
    Panic = 9,
}

/// Chain network parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TlnmemParams {
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
}

impl From<TlnmemParams> for CstlnParams {
    fn from(p: TlnmemParams) -> Self {
        CstlnParams { n: p.n, epsilon: p.epsilon, delta: p.delta, c: p.c }
    }
}

impl From<CstlnParams> for TlnmemParams {
    fn from(p: CstlnParams) -> Self {
        TlnmemParams { n: p.n, epsilon: p.epsilon, delta: p.delta, c: p.c }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TlnmemSessionOptions {
    /// Integrator step.
    pub dt: f64,
    /// Use the algebraic Riccati gain instead of the online auxiliary flows.
    pub algebraic_gain: bool,
}

/// Outcome of one retrieval.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TlnmemInference {
    /// Stored pattern whose support was reached, or -1.
    pub pattern_id: i64,
    /// First unit of the settled pair, or -1 if the state did not settle on a pair.
    pub support_start: i64,
    pub similarity: f64,
    pub converged: bool,
}

pub struct TlnmemNetwork {
    inner: Network,
}

pub struct TlnmemSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TlnmemStatus {
    match e {
        Error::InvalidParameter { .. }
        | Error::IndexOutOfRange { .. }
        | Error::UnknownPattern(_)
        | Error::ZeroNorm
        | Error::Config(_)
        | Error::DegenerateNetwork(_) => TlnmemStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => TlnmemStatus::DimensionMismatch,
        Error::Capacity { .. } | Error::Collision(_) | Error::TransitionFailed { .. } => TlnmemStatus::Capacity,
        Error::NoCertificate(_) | Error::DegenerateEncoder(_) => TlnmemStatus::NoCertificate,
        Error::Io(_) => TlnmemStatus::Io,
        Error::BadMagic { .. }
        | Error::Truncated { .. }
        | Error::CountMismatch { .. }
        | Error::UnsupportedVersion { .. }
        | Error::CorruptModel(_)
        | Error::Checksum { .. }
        | Error::Json(_) => TlnmemStatus::Format,
        _ => TlnmemStatus::Numerical,
    }
}

struct Fail(TlnmemStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TlnmemStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts panics into `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TlnmemStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            TlnmemStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            TlnmemStatus::Panic
        }
    }
}

unsafe fn vector(ptr: *const f64, len: usize, what: &str) -> Result<DVector<f64>, Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(DVector::from_column_slice(std::slice::from_raw_parts(ptr, len)))
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Fail(TlnmemStatus::DimensionMismatch, format!("{what} holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Fail(TlnmemStatus::InvalidArgument, "path is not UTF-8".into()))
}

fn session_config(options: Option<&TlnmemSessionOptions>) -> SessionConfig {
    let mut cfg = SessionConfig::default();
    if let Some(o) = options {
        cfg.integrator.dt = o.dt;
        cfg.gain_mode = if o.algebraic_gain { GainMode::Algebraic } else { GainMode::Dynamic };
    }
    cfg
}

unsafe fn session_ref<'a>(s: *const TlnmemSession) -> Result<&'a TlnmemSession, Fail> {
    s.as_ref().ok_or_else(|| null("session"))
}

unsafe fn session_mut<'a>(s: *mut TlnmemSession) -> Result<&'a mut TlnmemSession, Fail> {
    s.as_mut().ok_or_else(|| null("session"))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tlnmem_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn tlnmem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Seven units with ε = 0.9, δ = 2, c = 1.
#[no_mangle]
pub extern "C" fn tlnmem_params_default() -> TlnmemParams {
    CstlnParams::default().into()
}

#[no_mangle]
pub extern "C" fn tlnmem_session_options_default() -> TlnmemSessionOptions {
    let cfg = SessionConfig::default();
    TlnmemSessionOptions { dt: cfg.integrator.dt, algebraic_gain: cfg.gain_mode == GainMode::Algebraic }
}

/// # Safety
/// `out` must be a valid pointer; `*out` receives a handle to free with [`tlnmem_network_free`].
#[no_mangle]
pub unsafe extern "C" fn tlnmem_network_new(params: TlnmemParams, out: *mut *mut TlnmemNetwork) -> TlnmemStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let inner = Network::new(params.into())?;
        *out = Box::into_raw(Box::new(TlnmemNetwork { inner }));
        Ok(())
    })
}

/// # Safety
/// `net` must come from [`tlnmem_network_new`] and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_network_free(net: *mut TlnmemNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Writes the attractor on units `{i, i+1}` into `out[0..n]`.
///
/// # Safety
/// `net` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_network_attractor(
    net: *const TlnmemNetwork,
    i: usize,
    out: *mut f64,
    len: usize,
) -> TlnmemStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("network"))?;
        let n = net.inner.n();
        let dst = out_slice(out, len, n, "out")?;
        let x = net.inner.attractor_closed_form(i)?.x;
        dst[..n].copy_from_slice(x.as_slice());
        Ok(())
    })
}

/// Empty memory for patterns of dimension `d`.
///
/// # Safety
/// `options` may be null for defaults; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_session_new(
    params: TlnmemParams,
    d: usize,
    options: *const TlnmemSessionOptions,
    out: *mut *mut TlnmemSession,
) -> TlnmemStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let cfg = session_config(options.as_ref());
        let inner = Session::new(Network::new(params.into())?, d, cfg)?;
        *out = Box::into_raw(Box::new(TlnmemSession { inner }));
        Ok(())
    })
}

/// Session around a saved model; the latent state starts on the last stored attractor.
///
/// # Safety
/// `file` must be a NUL-terminated UTF-8 path; `options` may be null; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_session_load(
    file: *const c_char,
    options: *const TlnmemSessionOptions,
    out: *mut *mut TlnmemSession,
) -> TlnmemStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let (model, params) = load_model(path(file)?)?;
        let cfg = session_config(options.as_ref());
        cfg.validate()?;
        let net = Network::new(params)?;
        let start = model.registry.last().and_then(|e| e.support.pair_start()).unwrap_or(0);
        let state = net.attractor_closed_form(start)?.x;
        *out = Box::into_raw(Box::new(TlnmemSession { inner: Session { net, model, state, cfg } }));
        Ok(())
    })
}

/// # Safety
/// `session` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_session_free(session: *mut TlnmemSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// # Safety
/// `session` must be a live handle and `file` a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_session_save(session: *const TlnmemSession, file: *const c_char) -> TlnmemStatus {
    guard(|| {
        let s = &session_ref(session)?.inner;
        save_model(path(file)?, &s.model, s.net.params())?;
        Ok(())
    })
}

/// Number of stored patterns, or 0 for a null handle.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_session_len(session: *const TlnmemSession) -> usize {
    session.as_ref().map_or(0, |s| s.inner.model.registry.len())
}

/// Learn `pattern[0..d]` under `pattern_id`; `*support_start` receives the first unit of its pair.
///
/// # Safety
/// `session` must be live, `pattern` must hold `d` doubles; `support_start` may be null.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_session_learn(
    session: *mut TlnmemSession,
    pattern_id: usize,
    pattern: *const f64,
    d: usize,
    seed: u64,
    support_start: *mut usize,
) -> TlnmemStatus {
    guard(|| {
        let s = &mut session_mut(session)?.inner;
        let p = vector(pattern, d, "pattern")?;
        let outcome = s.learn(pattern_id, &p, seed, false)?;
        if let Some(dst) = support_start.as_mut() {
            *dst = outcome.support.and_then(|sp| sp.pair_start()).unwrap_or(usize::MAX);
        }
        Ok(())
    })
}

/// Retrieve from `input[0..d]` and write the reconstruction into `out[0..d]`.
/// With `cold_start` the latent state starts at zero; otherwise it continues
/// from the previous call and is carried over.
///
/// # Safety
/// `session` must be live; `input` must hold `d` doubles and `out` `out_len` doubles;
/// `result` may be null.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_session_infer(
    session: *mut TlnmemSession,
    input: *const f64,
    d: usize,
    cold_start: bool,
    out: *mut f64,
    out_len: usize,
    result: *mut TlnmemInference,
) -> TlnmemStatus {
    guard(|| {
        let s = &mut session_mut(session)?.inner;
        let p = vector(input, d, "input")?;
        let dst = out_slice(out, out_len, s.model.d(), "out")?;
        if cold_start {
            s.state = DVector::zeros(s.net.n());
        }
        let res = s.infer(&p, false)?;
        dst[..res.reconstructed.len()].copy_from_slice(res.reconstructed.as_slice());
        if let Some(r) = result.as_mut() {
            *r = TlnmemInference {
                pattern_id: res.pattern_id.map_or(-1, |v| v as i64),
                support_start: res.matched_support.pair_start().map_or(-1, |v| v as i64),
                similarity: res.similarity,
                converged: res.converged,
            };
        }
        Ok(())
    })
}

/// Largest noise norm certified by the polyhedral method for a stored pattern.
///
/// # Safety
/// `session` must be live and `radius` valid.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_certify_lp(
    session: *const TlnmemSession,
    pattern_id: usize,
    radius: *mut f64,
) -> TlnmemStatus {
    guard(|| {
        let s = &session_ref(session)?.inner;
        let r = radius.as_mut().ok_or_else(|| null("radius"))?;
        *r = certify_lp(&s.net, &s.model, pattern_id, &LpOptions::default())?.r;
        Ok(())
    })
}

/// Largest noise norm certified by the quadratic-constraint method for a stored pattern.
///
/// # Safety
/// `session` must be live and `radius` valid.
#[no_mangle]
pub unsafe extern "C" fn tlnmem_certify_sdp(
    session: *const TlnmemSession,
    pattern_id: usize,
    radius: *mut f64,
) -> TlnmemStatus {
    guard(|| {
        let s = &session_ref(session)?.inner;
        let r = radius.as_mut().ok_or_else(|| null("radius"))?;
        let entry = s.model.entry(pattern_id)?;
        *r = certify_sdp(&s.net, &entry.x_star, &s.model.w_e, &SdpSearch::default())?.best.r;
        Ok(())
    })
}
