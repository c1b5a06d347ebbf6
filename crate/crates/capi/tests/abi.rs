//! Drives the C ABI in-process: handle lifecycles, error reporting, and the
//! header staying in sync with the exported symbols.

use std::ffi::{CStr, CString};
use std::ptr;

use wavelab_capi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(wavelab_last_error()) }
        .to_string_lossy()
        .to_string()
}

#[test]
fn version_is_a_readable_string() {
    let v = unsafe { CStr::from_ptr(wavelab_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn sequence_simulate_noise_rmsa_roundtrip() {
    unsafe {
        let mut seq: *mut WavelabSequence = ptr::null_mut();
        let status = wavelab_sequence_simulate(16, 16, 40, 0.5, 8.0, 8.0, 0.5, 1.0, 1, &mut seq);
        assert_eq!(status, WavelabStatus::WavelabOk);
        let (mut t, mut h, mut w) = (0u32, 0u32, 0u32);
        assert_eq!(
            wavelab_sequence_dims(seq, &mut t, &mut h, &mut w),
            WavelabStatus::WavelabOk
        );
        assert_eq!((t, h, w), (40, 16, 16));

        let mut power = 0.0f64;
        assert_eq!(wavelab_sequence_rmsa(seq, &mut power), WavelabStatus::WavelabOk);
        assert!(power > 0.0);

        let mut noisy: *mut WavelabSequence = ptr::null_mut();
        assert_eq!(
            wavelab_sequence_add_noise(seq, 4.0, 7, &mut noisy),
            WavelabStatus::WavelabOk
        );
        let mut buf = vec![0.0f64; (t * h * w) as usize];
        assert_eq!(
            wavelab_sequence_copy_data(noisy, buf.as_mut_ptr(), buf.len()),
            WavelabStatus::WavelabOk
        );
        assert!(buf.iter().all(|v| v.is_finite()));

        // Wrong buffer length reports a shape error with a message.
        assert_eq!(
            wavelab_sequence_copy_data(noisy, buf.as_mut_ptr(), 3),
            WavelabStatus::WavelabErrShape
        );
        assert!(last_error().contains("buffer"));

        wavelab_sequence_free(noisy);
        wavelab_sequence_free(seq);
    }
}

#[test]
fn wavd_file_roundtrip_through_abi() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("x.wavd").to_str().unwrap());
    unsafe {
        let values: Vec<f64> = (0..12).map(|i| i as f64 * 0.25 - 1.0).collect();
        let mut seq: *mut WavelabSequence = ptr::null_mut();
        assert_eq!(
            wavelab_sequence_from_data(3, 2, 2, values.as_ptr(), &mut seq),
            WavelabStatus::WavelabOk
        );
        assert_eq!(wavelab_sequence_write(seq, path.as_ptr()), WavelabStatus::WavelabOk);
        let mut back: *mut WavelabSequence = ptr::null_mut();
        assert_eq!(
            wavelab_sequence_read(path.as_ptr(), &mut back),
            WavelabStatus::WavelabOk
        );
        let mut buf = vec![0.0f64; 12];
        assert_eq!(
            wavelab_sequence_copy_data(back, buf.as_mut_ptr(), 12),
            WavelabStatus::WavelabOk
        );
        for (orig, got) in values.iter().zip(&buf) {
            assert_eq!(*orig as f32, *got as f32);
        }
        wavelab_sequence_free(seq);
        wavelab_sequence_free(back);

        let mut missing: *mut WavelabSequence = ptr::null_mut();
        let bad = c(dir.path().join("absent.wavd").to_str().unwrap());
        assert_eq!(
            wavelab_sequence_read(bad.as_ptr(), &mut missing),
            WavelabStatus::WavelabErrIo
        );
    }
}

#[test]
fn dtw_through_abi() {
    unsafe {
        let a = [0.0, 0.0];
        let b = [1.0, 1.0];
        let mut out = 0.0f64;
        assert_eq!(
            wavelab_dtw(a.as_ptr(), 2, b.as_ptr(), 2, &mut out),
            WavelabStatus::WavelabOk
        );
        assert_eq!(out, 2.0);
        assert_eq!(
            wavelab_dtw(a.as_ptr(), 0, b.as_ptr(), 2, &mut out),
            WavelabStatus::WavelabErrInvalidArgument
        );
    }
}

#[test]
fn model_save_load_and_session_stepping() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = c(dir.path().join("m.ckpt").to_str().unwrap());
    unsafe {
        let mut model: *mut WavelabModel = ptr::null_mut();
        let id = c("distana4");
        assert_eq!(
            wavelab_model_new(id.as_ptr(), 8, 8, 42, &mut model),
            WavelabStatus::WavelabOk
        );
        let mut count = 0usize;
        assert_eq!(
            wavelab_model_param_count(model, &mut count),
            WavelabStatus::WavelabOk
        );
        assert_eq!(count, 200);
        let mut namebuf = [0i8 as std::ffi::c_char; 32];
        assert_eq!(
            wavelab_model_id(model, namebuf.as_mut_ptr(), namebuf.len()),
            WavelabStatus::WavelabOk
        );
        assert_eq!(
            CStr::from_ptr(namebuf.as_ptr()).to_str().unwrap(),
            "distana4"
        );

        assert_eq!(wavelab_model_save(model, ckpt.as_ptr()), WavelabStatus::WavelabOk);
        let mut loaded: *mut WavelabModel = ptr::null_mut();
        assert_eq!(
            wavelab_model_load(ckpt.as_ptr(), 8, 8, &mut loaded),
            WavelabStatus::WavelabOk
        );

        let mut session: *mut WavelabSession = ptr::null_mut();
        assert_eq!(wavelab_session_new(loaded, &mut session), WavelabStatus::WavelabOk);
        let frame = vec![0.1f64; 64];
        let mut pred = vec![0.0f64; 64];
        assert_eq!(
            wavelab_session_step(session, frame.as_ptr(), 64, pred.as_mut_ptr(), 64),
            WavelabStatus::WavelabOk
        );
        assert!(pred.iter().any(|v| *v != 0.0));
        assert!(pred.iter().all(|v| v.abs() < 1.0));

        // Reset restores quiescence: zero input now yields zero output.
        assert_eq!(wavelab_session_reset(session), WavelabStatus::WavelabOk);
        let zeros = vec![0.0f64; 64];
        assert_eq!(
            wavelab_session_step(session, zeros.as_ptr(), 64, pred.as_mut_ptr(), 64),
            WavelabStatus::WavelabOk
        );
        assert!(pred.iter().all(|v| *v == 0.0));

        wavelab_session_free(session);
        wavelab_model_free(loaded);
        wavelab_model_free(model);
    }
}

#[test]
fn session_induction_and_rollout() {
    unsafe {
        let mut model: *mut WavelabModel = ptr::null_mut();
        let id = c("distana4");
        assert_eq!(
            wavelab_model_new(id.as_ptr(), 8, 8, 3, &mut model),
            WavelabStatus::WavelabOk
        );
        let mut clean: *mut WavelabSequence = ptr::null_mut();
        assert_eq!(
            wavelab_sequence_simulate(8, 8, 30, 0.5, 4.0, 4.0, 0.5, 1.0, 2, &mut clean),
            WavelabStatus::WavelabOk
        );
        let mut noisy: *mut WavelabSequence = ptr::null_mut();
        assert_eq!(
            wavelab_sequence_add_noise(clean, 100.0, 5, &mut noisy),
            WavelabStatus::WavelabOk
        );

        let mut session: *mut WavelabSession = ptr::null_mut();
        assert_eq!(wavelab_session_new(model, &mut session), WavelabStatus::WavelabOk);
        assert_eq!(
            wavelab_session_induce_tf(session, noisy, 10),
            WavelabStatus::WavelabOk
        );
        let mut tf_roll: *mut WavelabSequence = ptr::null_mut();
        assert_eq!(
            wavelab_session_rollout(session, 15, &mut tf_roll),
            WavelabStatus::WavelabOk
        );
        let (mut t, mut h, mut w) = (0, 0, 0);
        wavelab_sequence_dims(tf_roll, &mut t, &mut h, &mut w);
        assert_eq!((t, h, w), (15, 8, 8));

        let mut final_loss = f64::NAN;
        assert_eq!(wavelab_session_reset(session), WavelabStatus::WavelabOk);
        assert_eq!(
            wavelab_session_induce_at(session, noisy, 8, 0.1, 3, 5, &mut final_loss),
            WavelabStatus::WavelabOk
        );
        assert!(final_loss.is_finite());
        let mut at_roll: *mut WavelabSequence = ptr::null_mut();
        assert_eq!(
            wavelab_session_rollout(session, 15, &mut at_roll),
            WavelabStatus::WavelabOk
        );

        wavelab_sequence_free(tf_roll);
        wavelab_sequence_free(at_roll);
        wavelab_session_free(session);
        wavelab_sequence_free(noisy);
        wavelab_sequence_free(clean);
        wavelab_model_free(model);
    }
}

#[test]
fn null_pointers_are_reported_not_crashed() {
    unsafe {
        let mut out = 0.0f64;
        assert_eq!(
            wavelab_dtw(ptr::null(), 1, ptr::null(), 1, &mut out),
            WavelabStatus::WavelabErrNullPointer
        );
        assert!(last_error().contains("null pointer"));
        assert_eq!(
            wavelab_sequence_rmsa(ptr::null(), &mut out),
            WavelabStatus::WavelabErrNullPointer
        );
        let mut model: *mut WavelabModel = ptr::null_mut();
        let bad_id = c("not-a-model");
        assert_eq!(
            wavelab_model_new(bad_id.as_ptr(), 4, 4, 1, &mut model),
            WavelabStatus::WavelabErrInvalidArgument
        );
        assert!(last_error().contains("unknown model"));
    }
}

/// Every `wavelab_` symbol exported by the crate must be declared in the
/// committed header, and vice versa.
#[test]
fn header_parity() {
    let src = include_str!("../src/lib.rs");
    let header = include_str!("../include/wavelab.h");

    let mut exported: Vec<&str> = Vec::new();
    for chunk in src.split("#[no_mangle]").skip(1) {
        if let Some(pos) = chunk.find("fn wavelab_") {
            let rest = &chunk[pos + 3..];
            let name = rest.split('(').next().unwrap().trim();
            exported.push(name);
        }
    }
    assert!(!exported.is_empty());
    for name in &exported {
        assert!(
            header.contains(&format!("{name}(")),
            "`{name}` missing from include/wavelab.h"
        );
    }
    for line in header.lines() {
        if let Some(pos) = line.find("wavelab_") {
            let name = line[pos..].split('(').next().unwrap().trim();
            if line.contains('(') && !name.is_empty() {
                assert!(
                    exported.contains(&name),
                    "header declares `{name}` which the crate does not export"
                );
            }
        }
    }
}
