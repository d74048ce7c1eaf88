use std::ffi::{CStr, CString};
use std::ptr;

use tlnmem::data::synthetic_patterns;
use tlnmem_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tlnmem_last_error_message()) }.to_string_lossy().into_owned()
}

fn options() -> TlnmemSessionOptions {
    TlnmemSessionOptions { dt: 1e-2, algebraic_gain: true }
}

unsafe fn new_session(d: usize) -> *mut TlnmemSession {
    let mut s = ptr::null_mut();
    let opts = options();
    assert_eq!(tlnmem_session_new(tlnmem_params_default(), d, &opts, &mut s), TlnmemStatus::Ok);
    assert!(!s.is_null());
    s
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(tlnmem_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(tlnmem_network_new(tlnmem_params_default(), ptr::null_mut()), TlnmemStatus::NullPointer);
        assert!(last_error().contains("out"));
        let mut r = 0.0;
        assert_eq!(tlnmem_certify_lp(ptr::null(), 0, &mut r), TlnmemStatus::NullPointer);
        assert!(last_error().contains("session"));
        assert_eq!(tlnmem_session_len(ptr::null()), 0);
        tlnmem_session_free(ptr::null_mut());
        tlnmem_network_free(ptr::null_mut());
    }
}

#[test]
fn bad_parameters_set_message_and_null_handle() {
    unsafe {
        let mut p = tlnmem_params_default();
        p.epsilon = 1.5;
        let mut net = ptr::NonNull::<TlnmemNetwork>::dangling().as_ptr();
        assert_eq!(tlnmem_network_new(p, &mut net), TlnmemStatus::InvalidArgument);
        assert!(net.is_null());
        assert!(!last_error().is_empty());
    }
}

#[test]
fn attractor_matches_closed_form() {
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(tlnmem_network_new(tlnmem_params_default(), &mut net), TlnmemStatus::Ok);
        assert!(last_error().is_empty());
        let mut x = [0.0; 7];
        assert_eq!(tlnmem_network_attractor(net, 2, x.as_mut_ptr(), 7), TlnmemStatus::Ok);
        let level = 1.0 / (2.0 - 0.9);
        for (k, v) in x.iter().enumerate() {
            let want = if k == 2 || k == 3 { level } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "unit {k}: {v}");
        }
        let mut short = [0.0; 3];
        assert_eq!(tlnmem_network_attractor(net, 2, short.as_mut_ptr(), 3), TlnmemStatus::DimensionMismatch);
        assert_eq!(tlnmem_network_attractor(net, 6, x.as_mut_ptr(), 7), TlnmemStatus::InvalidArgument);
        tlnmem_network_free(net);
    }
}

#[test]
fn learn_infer_save_load_certify() {
    let d = 12;
    let set = synthetic_patterns(3, d, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = CString::new(dir.path().join("m.tlnm").to_str().unwrap()).unwrap();
    unsafe {
        let s = new_session(d);
        let mut starts = Vec::new();
        for (id, p) in set.patterns.iter().enumerate() {
            let mut start = usize::MAX;
            let st = tlnmem_session_learn(s, id, p.as_ptr(), d, 11 + id as u64, &mut start);
            assert_eq!(st, TlnmemStatus::Ok, "{}", last_error());
            starts.push(start);
        }
        assert_eq!(starts, vec![0, 1, 2]);
        assert_eq!(tlnmem_session_len(s), 3);

        let mut out = vec![0.0; d];
        let mut res = TlnmemInference { pattern_id: -2, support_start: -2, similarity: 0.0, converged: false };
        let st = tlnmem_session_infer(s, set.patterns[1].as_ptr(), d, true, out.as_mut_ptr(), d, &mut res);
        assert_eq!(st, TlnmemStatus::Ok, "{}", last_error());
        assert_eq!(res.pattern_id, 1);
        assert_eq!(res.support_start, 1);
        assert!(res.converged);
        assert!(res.similarity > 0.999);
        let err: f64 = out.iter().zip(set.patterns[1].iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "reconstruction error {err}");

        let wrong = vec![0.0; d + 1];
        let st = tlnmem_session_infer(s, wrong.as_ptr(), d + 1, true, out.as_mut_ptr(), d, ptr::null_mut());
        assert_eq!(st, TlnmemStatus::DimensionMismatch);

        assert_eq!(tlnmem_session_save(s, file.as_ptr()), TlnmemStatus::Ok, "{}", last_error());
        let mut lp = -1.0;
        assert_eq!(tlnmem_certify_lp(s, 0, &mut lp), TlnmemStatus::Ok, "{}", last_error());
        let mut sdp = -1.0;
        assert_eq!(tlnmem_certify_sdp(s, 0, &mut sdp), TlnmemStatus::Ok, "{}", last_error());
        assert!(lp > 0.0 && sdp > 0.0, "lp {lp} sdp {sdp}");
        let mut r = 0.0;
        assert_eq!(tlnmem_certify_lp(s, 9, &mut r), TlnmemStatus::InvalidArgument);
        tlnmem_session_free(s);

        let opts = options();
        let mut loaded = ptr::null_mut();
        assert_eq!(tlnmem_session_load(file.as_ptr(), &opts, &mut loaded), TlnmemStatus::Ok, "{}", last_error());
        assert_eq!(tlnmem_session_len(loaded), 3);
        let mut lp2 = -1.0;
        assert_eq!(tlnmem_certify_lp(loaded, 0, &mut lp2), TlnmemStatus::Ok);
        assert!((lp - lp2).abs() <= 1e-12 * lp.abs().max(1.0));
        let mut res2 = res;
        let st = tlnmem_session_infer(loaded, set.patterns[2].as_ptr(), d, true, out.as_mut_ptr(), d, &mut res2);
        assert_eq!(st, TlnmemStatus::Ok);
        assert_eq!(res2.pattern_id, 2);
        tlnmem_session_free(loaded);
    }
}

#[test]
fn loading_garbage_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.tlnm");
    std::fs::write(&p, b"not a model").unwrap();
    let file = CString::new(p.to_str().unwrap()).unwrap();
    let missing = CString::new(dir.path().join("none.tlnm").to_str().unwrap()).unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(tlnmem_session_load(file.as_ptr(), ptr::null(), &mut s), TlnmemStatus::Format);
        assert!(s.is_null());
        assert_eq!(tlnmem_session_load(missing.as_ptr(), ptr::null(), &mut s), TlnmemStatus::Io);
    }
}

#[test]
fn capacity_error_after_last_pair() {
    let d = 8;
    let set = synthetic_patterns(7, d, 3).unwrap();
    unsafe {
        let s = new_session(d);
        let mut last = TlnmemStatus::Ok;
        for (id, p) in set.patterns.iter().enumerate() {
            last = tlnmem_session_learn(s, id, p.as_ptr(), d, id as u64, ptr::null_mut());
            if last != TlnmemStatus::Ok {
                break;
            }
        }
        assert_eq!(last, TlnmemStatus::Capacity, "{}", last_error());
        assert!(!last_error().is_empty());
        tlnmem_session_free(s);
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        assert_eq!(tlnmem_network_new(tlnmem_params_default(), ptr::null_mut()), TlnmemStatus::NullPointer);
    }
    let other = std::thread::spawn(last_error).join().unwrap();
    assert!(other.is_empty());
    assert!(!last_error().is_empty());
}
