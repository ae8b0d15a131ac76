use std::ffi::{CStr, CString};
use std::ptr;

use nrsfm_ffi::*;

fn last_error() -> String {
    let p = nrsfm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_scene(seed: u64) -> *mut NrsfmScene {
    let mut p = nrsfm_generator_params_default();
    p.m_a = 3;
    p.m_b = 3;
    p.n = 3;
    p.seed = seed;
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nrsfm_scene_generate(&p, &mut s) }, NrsfmStatus::Ok);
    assert!(!s.is_null());
    s
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(nrsfm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generate_reconstruct_roundtrip() {
    let scene = small_scene(2);
    let (mut n, mut m) = (0, 0);
    assert_eq!(unsafe { nrsfm_scene_dims(scene, &mut n, &mut m) }, NrsfmStatus::Ok);
    assert_eq!((n, m), (3, 9));

    let mut params = nrsfm_reconstruct_params_default();
    params.method = NrsfmMethod::QnrDsl;
    let mut rec = ptr::null_mut();
    assert_eq!(unsafe { nrsfm_reconstruct(scene, &params, &mut rec) }, NrsfmStatus::Ok, "{}", last_error());
    let (mut rn, mut rm) = (0, 0);
    assert_eq!(unsafe { nrsfm_reconstruction_dims(rec, &mut rn, &mut rm) }, NrsfmStatus::Ok);
    assert_eq!((rn, rm), (3, 9));

    let mut pts = vec![0.0; 3 * 9 * 3];
    assert_eq!(unsafe { nrsfm_reconstruction_points(rec, pts.as_mut_ptr(), pts.len()) }, NrsfmStatus::Ok);
    assert!(pts.iter().all(|v| v.is_finite()));
    assert!(pts.chunks(3).all(|p| p[2] > 0.0));

    let (mut rms, mut rel) = (f64::NAN, f64::NAN);
    assert_eq!(unsafe { nrsfm_reconstruction_rms(rec, scene, &mut rms, &mut rel) }, NrsfmStatus::Ok);
    assert!(rms >= 0.0 && rel < 0.2, "rms {rms} rel {rel}");

    let mut short = vec![0.0; 5];
    assert_eq!(unsafe { nrsfm_reconstruction_points(rec, short.as_mut_ptr(), short.len()) }, NrsfmStatus::InvalidInput);
    assert!(last_error().contains("buffer"));

    unsafe {
        nrsfm_reconstruction_free(rec);
        nrsfm_scene_free(scene);
    }
}

#[test]
fn json_roundtrip_preserves_ground_truth() {
    let scene = small_scene(5);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { nrsfm_scene_to_json(scene, &mut json) }, NrsfmStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { nrsfm_scene_from_json(json, &mut back) }, NrsfmStatus::Ok);
    let mut a = vec![0.0; 81];
    let mut b = vec![0.0; 81];
    unsafe {
        assert_eq!(nrsfm_scene_ground_truth(scene, a.as_mut_ptr(), a.len()), NrsfmStatus::Ok);
        assert_eq!(nrsfm_scene_ground_truth(back, b.as_mut_ptr(), b.len()), NrsfmStatus::Ok);
        nrsfm_string_free(json);
        nrsfm_scene_free(scene);
        nrsfm_scene_free(back);
    }
    assert_eq!(a, b);
}

#[test]
fn pixel_scene_has_no_ground_truth() {
    // two images of four points, all visible
    let px = [
        300.0, 200.0, 340.0, 210.0, 310.0, 260.0, 350.0, 270.0, //
        305.0, 205.0, 345.0, 212.0, 312.0, 262.0, 352.0, 275.0,
    ];
    let mut s = ptr::null_mut();
    let st = unsafe { nrsfm_scene_from_pixels(2, 4, px.as_ptr(), ptr::null(), 600.0, 600.0, 320.0, 240.0, &mut s) };
    assert_eq!(st, NrsfmStatus::Ok, "{}", last_error());
    let mut buf = [0.0; 24];
    assert_eq!(unsafe { nrsfm_scene_ground_truth(s, buf.as_mut_ptr(), buf.len()) }, NrsfmStatus::InvalidInput);
    unsafe { nrsfm_scene_free(s) };

    let bad = unsafe { nrsfm_scene_from_pixels(2, 4, px.as_ptr(), ptr::null(), -1.0, 600.0, 320.0, 240.0, &mut s) };
    assert_eq!(bad, NrsfmStatus::InvalidInput);
}

#[test]
fn error_codes() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nrsfm_scene_generate(ptr::null(), &mut s) }, NrsfmStatus::NullPointer);
    assert!(last_error().contains("params"));

    let mut p = nrsfm_generator_params_default();
    p.m_a = 1;
    assert_eq!(unsafe { nrsfm_scene_generate(&p, &mut s) }, NrsfmStatus::InvalidInput);

    let junk = CString::new("{not json").unwrap();
    assert_eq!(unsafe { nrsfm_scene_from_json(junk.as_ptr(), &mut s) }, NrsfmStatus::InvalidInput);

    // DSL cannot handle hidden points
    let mut p = nrsfm_generator_params_default();
    p.m_a = 3;
    p.m_b = 3;
    p.n = 3;
    p.hide_fraction = 0.3;
    assert_eq!(unsafe { nrsfm_scene_generate(&p, &mut s) }, NrsfmStatus::Ok);
    let params = nrsfm_reconstruct_params_default();
    let mut rec = ptr::null_mut();
    assert_eq!(unsafe { nrsfm_reconstruct(s, &params, &mut rec) }, NrsfmStatus::Incompatible);
    assert!(rec.is_null());
    unsafe { nrsfm_scene_free(s) };

    let (mut a, mut b) = (0.0, 0.0);
    assert_eq!(unsafe { nrsfm_lemma1(100, 0.5, 0.1, 0.6, 0, &mut a, &mut b) }, NrsfmStatus::InvalidInput);
    unsafe {
        nrsfm_scene_free(ptr::null_mut());
        nrsfm_reconstruction_free(ptr::null_mut());
        nrsfm_string_free(ptr::null_mut());
    }
}

#[test]
fn lemma1_fractions() {
    let (mut a, mut b) = (0.0, 0.0);
    assert_eq!(unsafe { nrsfm_lemma1(2000, 0.1, 0.1, 0.6, 3, &mut a, &mut b) }, NrsfmStatus::Ok);
    assert!(a >= 0.75 && b >= 0.75, "{a} {b}");
    assert_eq!(unsafe { nrsfm_lemma1(500, 0.0, 0.0, 0.6, 3, &mut a, &mut b) }, NrsfmStatus::Ok);
    assert_eq!((a, b), (1.0, 1.0));
}

#[test]
fn errors_are_thread_local() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nrsfm_scene_generate(ptr::null(), &mut s) }, NrsfmStatus::NullPointer);
    let other = std::thread::spawn(|| nrsfm_last_error().is_null()).join().unwrap();
    assert!(other);
}
