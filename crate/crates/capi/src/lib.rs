//! C ABI over the wavelab core.
//!
//! Conventions: every fallible call returns a [`WavelabStatus`]; out-params
//! are written only on `WAVELAB_OK`. Handles are opaque and freed with their
//! `_free` function. `wavelab_last_error` returns a thread-local message for
//! the most recent failure on the calling thread.
//!
//! The matching header lives in `include/wavelab.h` (cbindgen layout; see
//! `cbindgen.toml`). The `header_parity` test keeps it in sync.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use wavelab::checkpoint;
use wavelab::error::Error;
use wavelab::eval::{closed_loop, teacher_force};
use wavelab::model::{step_plain, Model, ModelKind, ModelState};
use wavelab::tuning::{at_induce, AtConfig};
use wavelab::wave::{add_noise, rmsa, simulate_wave, NoiseSpec, Sequence, WaveConfig};
use wavelab::wavd;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavelabStatus {
    WavelabOk = 0,
    WavelabErrInvalidArgument = 1,
    WavelabErrShape = 2,
    WavelabErrIo = 3,
    WavelabErrFormat = 4,
    WavelabErrDivergence = 5,
    WavelabErrTuning = 6,
    WavelabErrNullPointer = 7,
    WavelabErrUtf8 = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap();
    });
}

fn fail(status: WavelabStatus, msg: &str) -> WavelabStatus {
    set_error(msg);
    status
}

fn fail_null(what: &str) -> WavelabStatus {
    fail(
        WavelabStatus::WavelabErrNullPointer,
        &format!("null pointer: {what}"),
    )
}

fn status_of(err: &Error) -> WavelabStatus {
    match err {
        Error::ShapeMismatch { .. } => WavelabStatus::WavelabErrShape,
        Error::InvalidConfig(_) => WavelabStatus::WavelabErrInvalidArgument,
        Error::Io(_) => WavelabStatus::WavelabErrIo,
        Error::Format(_) => WavelabStatus::WavelabErrFormat,
        Error::Divergence { .. } => WavelabStatus::WavelabErrDivergence,
        Error::Tuning(_) => WavelabStatus::WavelabErrTuning,
    }
}

fn from_result<T>(result: wavelab::Result<T>) -> Result<T, WavelabStatus> {
    result.map_err(|e| {
        let status = status_of(&e);
        set_error(&e.to_string());
        status
    })
}

unsafe fn path_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a Path, WavelabStatus> {
    if ptr.is_null() {
        return Err(fail_null(what));
    }
    let s = unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| fail(WavelabStatus::WavelabErrUtf8, &format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

/// Opaque sequence handle.
pub struct WavelabSequence {
    inner: Sequence,
}

/// Opaque model handle (weights bound to a grid).
pub struct WavelabModel {
    inner: Box<dyn Model>,
}

/// Opaque stateful stepping session over a model.
pub struct WavelabSession {
    model: Box<dyn Model>,
    state: ModelState,
    pending: Vec<f64>,
}

fn duplicate(model: &dyn Model) -> Box<dyn Model> {
    let mut buf = Vec::new();
    checkpoint::write_checkpoint(&mut buf, model).expect("in-memory serialize");
    let (h, w) = model.grid();
    checkpoint::read_checkpoint(&buf[..], h, w).expect("in-memory deserialize")
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wavelab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread.
#[no_mangle]
pub extern "C" fn wavelab_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_sequence_simulate(
    height: u32,
    width: u32,
    steps: u32,
    wave_speed: f64,
    source_row: f64,
    source_col: f64,
    pulse_sigma: f64,
    amplitude: f64,
    seed: u64,
    out: *mut *mut WavelabSequence,
) -> WavelabStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let config = WaveConfig {
        height: height as usize,
        width: width as usize,
        steps: steps as usize,
        wave_speed,
        source: (source_row, source_col),
        pulse_sigma,
        amplitude,
        seed,
        ..WaveConfig::default()
    };
    match from_result(simulate_wave(&config)) {
        Ok(seq) => {
            unsafe { *out = Box::into_raw(Box::new(WavelabSequence { inner: seq })) };
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_sequence_from_data(
    t: u32,
    h: u32,
    w: u32,
    values: *const f64,
    out: *mut *mut WavelabSequence,
) -> WavelabStatus {
    if values.is_null() || out.is_null() {
        return fail_null("values/out");
    }
    let n = t as usize * h as usize * w as usize;
    let data = unsafe { std::slice::from_raw_parts(values, n) }.to_vec();
    if !data.iter().all(|v| v.is_finite()) {
        return fail(
            WavelabStatus::WavelabErrInvalidArgument,
            "sequence values must be finite",
        );
    }
    let seq = Sequence {
        t: t as usize,
        h: h as usize,
        w: w as usize,
        values: data,
    };
    unsafe { *out = Box::into_raw(Box::new(WavelabSequence { inner: seq })) };
    WavelabStatus::WavelabOk
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_sequence_dims(
    seq: *const WavelabSequence,
    t: *mut u32,
    h: *mut u32,
    w: *mut u32,
) -> WavelabStatus {
    if seq.is_null() || t.is_null() || h.is_null() || w.is_null() {
        return fail_null("seq/t/h/w");
    }
    let seq = unsafe { &(*seq).inner };
    unsafe {
        *t = seq.t as u32;
        *h = seq.h as u32;
        *w = seq.w as u32;
    }
    WavelabStatus::WavelabOk
}

/// Copies the `[t][i][j]` row-major values into `out` (`len` must equal
/// `t*h*w`).
#[no_mangle]
pub unsafe extern "C" fn wavelab_sequence_copy_data(
    seq: *const WavelabSequence,
    out: *mut f64,
    len: usize,
) -> WavelabStatus {
    if seq.is_null() || out.is_null() {
        return fail_null("seq/out");
    }
    let seq = unsafe { &(*seq).inner };
    if len != seq.values.len() {
        return fail(
            WavelabStatus::WavelabErrShape,
            &format!("buffer holds {len}, sequence has {}", seq.values.len()),
        );
    }
    unsafe { std::ptr::copy_nonoverlapping(seq.values.as_ptr(), out, len) };
    WavelabStatus::WavelabOk
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_sequence_rmsa(
    seq: *const WavelabSequence,
    out: *mut f64,
) -> WavelabStatus {
    if seq.is_null() || out.is_null() {
        return fail_null("seq/out");
    }
    unsafe { *out = rmsa(&(*seq).inner) };
    WavelabStatus::WavelabOk
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_sequence_add_noise(
    seq: *const WavelabSequence,
    target_snr: f64,
    seed: u64,
    out: *mut *mut WavelabSequence,
) -> WavelabStatus {
    if seq.is_null() || out.is_null() {
        return fail_null("seq/out");
    }
    let spec = NoiseSpec::new(target_snr, seed);
    match from_result(add_noise(unsafe { &(*seq).inner }, &spec)) {
        Ok(noisy) => {
            unsafe { *out = Box::into_raw(Box::new(WavelabSequence { inner: noisy })) };
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

/// Reads a WAVD container file.
#[no_mangle]
pub unsafe extern "C" fn wavelab_sequence_read(
    path: *const c_char,
    out: *mut *mut WavelabSequence,
) -> WavelabStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let path = match unsafe { path_arg(path, "path") } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match from_result(wavd::read_sequence_file(path)) {
        Ok(seq) => {
            unsafe { *out = Box::into_raw(Box::new(WavelabSequence { inner: seq })) };
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

/// Writes a WAVD container file.
#[no_mangle]
pub unsafe extern "C" fn wavelab_sequence_write(
    seq: *const WavelabSequence,
    path: *const c_char,
) -> WavelabStatus {
    if seq.is_null() {
        return fail_null("seq");
    }
    let path = match unsafe { path_arg(path, "path") } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match from_result(wavd::write_sequence_file(path, unsafe { &(*seq).inner })) {
        Ok(()) => WavelabStatus::WavelabOk,
        Err(status) => status,
    }
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_sequence_free(seq: *mut WavelabSequence) {
    if !seq.is_null() {
        drop(unsafe { Box::from_raw(seq) });
    }
}

/// Dynamic time warping distance between two series.
#[no_mangle]
pub unsafe extern "C" fn wavelab_dtw(
    a: *const f64,
    a_len: usize,
    b: *const f64,
    b_len: usize,
    out: *mut f64,
) -> WavelabStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        return fail_null("a/b/out");
    }
    let a = unsafe { std::slice::from_raw_parts(a, a_len) };
    let b = unsafe { std::slice::from_raw_parts(b, b_len) };
    match from_result(wavelab::eval::dtw(a, b)) {
        Ok(d) => {
            unsafe { *out = d };
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

/// Builds a fresh model (`distana4`, `distana24`, `convlstm2`, `convlstm8`,
/// `tcn121`, `tcn191`) with seeded initial weights on an HxW grid.
#[no_mangle]
pub unsafe extern "C" fn wavelab_model_new(
    model_id: *const c_char,
    height: u32,
    width: u32,
    seed: u64,
    out: *mut *mut WavelabModel,
) -> WavelabStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let id = match unsafe { path_arg(model_id, "model_id") } {
        Ok(p) => p.to_string_lossy().to_string(),
        Err(status) => return status,
    };
    let kind = match from_result(ModelKind::parse(&id)) {
        Ok(k) => k,
        Err(status) => return status,
    };
    match from_result(kind.build(height as usize, width as usize, seed)) {
        Ok(model) => {
            unsafe { *out = Box::into_raw(Box::new(WavelabModel { inner: model })) };
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

/// Loads a CKPT container and binds it to an HxW grid.
#[no_mangle]
pub unsafe extern "C" fn wavelab_model_load(
    path: *const c_char,
    height: u32,
    width: u32,
    out: *mut *mut WavelabModel,
) -> WavelabStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let path = match unsafe { path_arg(path, "path") } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match from_result(checkpoint::read_checkpoint_file(
        path,
        height as usize,
        width as usize,
    )) {
        Ok(model) => {
            unsafe { *out = Box::into_raw(Box::new(WavelabModel { inner: model })) };
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_model_save(
    model: *const WavelabModel,
    path: *const c_char,
) -> WavelabStatus {
    if model.is_null() {
        return fail_null("model");
    }
    let path = match unsafe { path_arg(path, "path") } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match from_result(checkpoint::write_checkpoint_file(path, unsafe {
        (*model).inner.as_ref()
    })) {
        Ok(()) => WavelabStatus::WavelabOk,
        Err(status) => status,
    }
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_model_param_count(
    model: *const WavelabModel,
    out: *mut usize,
) -> WavelabStatus {
    if model.is_null() || out.is_null() {
        return fail_null("model/out");
    }
    unsafe { *out = (*model).inner.params().len() };
    WavelabStatus::WavelabOk
}

/// Copies the model id into `buf` as a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn wavelab_model_id(
    model: *const WavelabModel,
    buf: *mut c_char,
    buf_len: usize,
) -> WavelabStatus {
    if model.is_null() || buf.is_null() {
        return fail_null("model/buf");
    }
    let id = unsafe { (*model).inner.model_id() }.as_bytes();
    if buf_len < id.len() + 1 {
        return fail(
            WavelabStatus::WavelabErrShape,
            &format!("buffer of {buf_len} too small for id of {}", id.len() + 1),
        );
    }
    unsafe {
        std::ptr::copy_nonoverlapping(id.as_ptr() as *const c_char, buf, id.len());
        *buf.add(id.len()) = 0;
    }
    WavelabStatus::WavelabOk
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_model_free(model: *mut WavelabModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Opens a stepping session with the model's weights and a zero state.
#[no_mangle]
pub unsafe extern "C" fn wavelab_session_new(
    model: *const WavelabModel,
    out: *mut *mut WavelabSession,
) -> WavelabStatus {
    if model.is_null() || out.is_null() {
        return fail_null("model/out");
    }
    let model = duplicate(unsafe { (*model).inner.as_ref() });
    let state = ModelState::zeros(&model.state_shapes());
    let (h, w) = model.grid();
    let session = WavelabSession {
        pending: vec![0.0; h * w],
        state,
        model,
    };
    unsafe { *out = Box::into_raw(Box::new(session)) };
    WavelabStatus::WavelabOk
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_session_reset(session: *mut WavelabSession) -> WavelabStatus {
    if session.is_null() {
        return fail_null("session");
    }
    let session = unsafe { &mut *session };
    session.state = ModelState::zeros(&session.model.state_shapes());
    session.pending.fill(0.0);
    WavelabStatus::WavelabOk
}

/// Feeds one HxW frame and returns the model's prediction of the next frame.
#[no_mangle]
pub unsafe extern "C" fn wavelab_session_step(
    session: *mut WavelabSession,
    frame: *const f64,
    frame_len: usize,
    prediction: *mut f64,
    prediction_len: usize,
) -> WavelabStatus {
    if session.is_null() || frame.is_null() || prediction.is_null() {
        return fail_null("session/frame/prediction");
    }
    let session = unsafe { &mut *session };
    let (h, w) = session.model.grid();
    if frame_len != h * w || prediction_len != h * w {
        return fail(
            WavelabStatus::WavelabErrShape,
            &format!("frame/prediction must be {}", h * w),
        );
    }
    let frame = unsafe { std::slice::from_raw_parts(frame, frame_len) };
    match from_result(step_plain(session.model.as_ref(), &session.state, frame)) {
        Ok((pred, next)) => {
            session.state = next;
            session.pending.copy_from_slice(&pred);
            unsafe { std::ptr::copy_nonoverlapping(pred.as_ptr(), prediction, prediction_len) };
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

/// Teacher-forces the first `steps` frames of `noisy` into the session.
#[no_mangle]
pub unsafe extern "C" fn wavelab_session_induce_tf(
    session: *mut WavelabSession,
    noisy: *const WavelabSequence,
    steps: u32,
) -> WavelabStatus {
    if session.is_null() || noisy.is_null() {
        return fail_null("session/noisy");
    }
    let session = unsafe { &mut *session };
    let noisy = unsafe { &(*noisy).inner };
    match from_result(teacher_force(session.model.as_ref(), noisy, steps as usize)) {
        Ok((state, pending)) => {
            session.state = state;
            session.pending = pending;
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

/// Active-tuning induction: infers inputs against the first `steps` noisy
/// frames by gradient descent (rate `eta`, window `history`, `cycles` per
/// step) and charges the session state.
#[no_mangle]
pub unsafe extern "C" fn wavelab_session_induce_at(
    session: *mut WavelabSession,
    noisy: *const WavelabSequence,
    steps: u32,
    eta: f64,
    history: u32,
    cycles: u32,
    final_window_loss: *mut f64,
) -> WavelabStatus {
    if session.is_null() || noisy.is_null() {
        return fail_null("session/noisy");
    }
    let session = unsafe { &mut *session };
    let noisy = unsafe { &(*noisy).inner };
    let config = AtConfig {
        eta,
        history: history as usize,
        cycles: cycles as usize,
        ..AtConfig::new(eta, history as usize)
    };
    match from_result(at_induce(
        session.model.as_ref(),
        noisy,
        &config,
        steps as usize,
    )) {
        Ok(outcome) => {
            if !final_window_loss.is_null() {
                let last = outcome
                    .trace
                    .rows
                    .last()
                    .map(|r| r.window_loss)
                    .unwrap_or(f64::NAN);
                unsafe { *final_window_loss = last };
            }
            session.state = outcome.state;
            session.pending = outcome.pending;
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

/// Closed-loop rollout from the session's current state: `steps` frames,
/// starting with the pending prediction, each output fed back as input.
/// The rollout works on a copy; the session state does not advance.
#[no_mangle]
pub unsafe extern "C" fn wavelab_session_rollout(
    session: *const WavelabSession,
    steps: u32,
    out: *mut *mut WavelabSequence,
) -> WavelabStatus {
    if session.is_null() || out.is_null() {
        return fail_null("session/out");
    }
    let session = unsafe { &*session };
    match from_result(closed_loop(
        session.model.as_ref(),
        &session.state,
        &session.pending,
        steps as usize,
    )) {
        Ok(seq) => {
            unsafe { *out = Box::into_raw(Box::new(WavelabSequence { inner: seq })) };
            WavelabStatus::WavelabOk
        }
        Err(status) => status,
    }
}

#[no_mangle]
pub unsafe extern "C" fn wavelab_session_free(session: *mut WavelabSession) {
    if !session.is_null() {
        drop(unsafe { Box::from_raw(session) });
    }
}
