use std::ffi::{CStr, CString};
use std::ptr;

use tubeseg_ffi::*;

fn last_error() -> String {
    let p = tubeseg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn phantom(kind: &str, n: usize, spacing: f64) -> (*mut TubesegVolume, *mut TubesegMask) {
    let kind = CString::new(kind).unwrap();
    let (mut v, mut m) = (ptr::null_mut(), ptr::null_mut());
    let s = unsafe { tubeseg_phantom_generate(kind.as_ptr(), [n; 3].as_ptr(), spacing, true, 7, &mut v, &mut m) };
    assert_eq!(s, TubesegStatus::Ok);
    (v, m)
}

#[test]
fn pipeline_roundtrip() {
    let (vol, truth) = phantom("tube", 64, 0.5);
    let dir = tempfile::tempdir().unwrap();
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let mut run = ptr::null_mut();
        assert_eq!(
            tubeseg_pipeline_run(vol, ptr::null(), out_dir.as_ptr(), &mut run),
            TubesegStatus::Ok
        );
        assert!(tubeseg_last_error_message().is_null());

        let json = tubeseg_run_report_json(run);
        let report: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        tubeseg_string_free(json);
        assert_eq!(report["stages_completed"].as_array().unwrap().len(), 6);

        let mut mask = ptr::null_mut();
        assert_eq!(tubeseg_run_mask(run, &mut mask), TubesegStatus::Ok);
        let mut d = 0.0;
        assert_eq!(tubeseg_mask_dice(mask, truth, &mut d), TubesegStatus::Ok);
        assert!(d >= 0.9, "dice {d}");

        let mut seed = [0usize; 3];
        assert_eq!(tubeseg_run_seed(run, seed.as_mut_ptr()), TubesegStatus::Ok);
        assert_eq!(seed[2], report["seed"][2].as_u64().unwrap() as usize);

        let mut cl = ptr::null_mut();
        assert_eq!(tubeseg_run_centreline(run, &mut cl), TubesegStatus::Ok);
        assert_eq!(tubeseg_centreline_branch_count(cl), 1);
        assert_eq!(tubeseg_centreline_branch_parent(cl, 0), -1);
        let mut n = 0;
        let pts = tubeseg_centreline_branch_points(cl, 0, &mut n);
        assert!(n > 10 && !pts.is_null());
        let xyz = std::slice::from_raw_parts(pts, 3 * n);
        assert!(xyz.iter().all(|v| v.is_finite()));
        assert!(tubeseg_centreline_branch_points(cl, 1, &mut n).is_null());

        let mut cpr = ptr::null_mut();
        assert_eq!(tubeseg_run_cpr(run, &mut cpr), TubesegStatus::Ok);
        let mut dims = [0usize; 3];
        tubeseg_volume_dims(cpr, dims.as_mut_ptr());
        assert_eq!(&dims[..2], &[81, 81]);

        let mut cpr2 = ptr::null_mut();
        assert_eq!(tubeseg_cpr(vol, cl, 0, ptr::null(), &mut cpr2), TubesegStatus::Ok);
        let (mut a, mut b) = (0, 0);
        let da = std::slice::from_raw_parts(tubeseg_volume_data(cpr, &mut a), a);
        let db = std::slice::from_raw_parts(tubeseg_volume_data(cpr2, &mut b), b);
        assert_eq!(da, db);

        assert!(dir.path().join("report.json").exists());
        for p in [cpr, cpr2, vol] {
            tubeseg_volume_free(p);
        }
        tubeseg_centreline_free(cl);
        tubeseg_mask_free(mask);
        tubeseg_mask_free(truth);
        tubeseg_run_free(run);
    }
}

#[test]
fn failed_run_keeps_partial_report() {
    let data = vec![40.0; 32 * 32 * 32];
    unsafe {
        let mut vol = ptr::null_mut();
        let s = tubeseg_volume_new(
            [32; 3].as_ptr(),
            [0.5; 3].as_ptr(),
            ptr::null(),
            data.as_ptr(),
            data.len(),
            &mut vol,
        );
        assert_eq!(s, TubesegStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(
            tubeseg_pipeline_run(vol, ptr::null(), ptr::null(), &mut run),
            TubesegStatus::NoSeed
        );
        assert!(last_error().contains("stage `seeds` failed"));
        assert!(!run.is_null());
        let mut mask = ptr::null_mut();
        assert_eq!(tubeseg_run_mask(run, &mut mask), TubesegStatus::Empty);
        assert!(mask.is_null());
        let json = tubeseg_run_report_json(run);
        assert!(CStr::from_ptr(json)
            .to_str()
            .unwrap()
            .contains("\"failed_stage\": \"seeds\""));
        tubeseg_string_free(json);
        tubeseg_run_free(run);
        tubeseg_volume_free(vol);
    }
}

#[test]
fn segment_and_extract() {
    let (vol, truth) = phantom("tube", 48, 0.5);
    unsafe {
        let mut mask = ptr::null_mut();
        let seed = [24usize, 24, 24];
        assert_eq!(
            tubeseg_segment(vol, seed.as_ptr(), 369.0, 621.0, ptr::null(), &mut mask),
            TubesegStatus::Ok
        );
        let mut d = 0.0;
        tubeseg_mask_dice(mask, truth, &mut d);
        assert!(d >= 0.9, "dice {d}");
        let mut bytes = vec![0u8; 48 * 48 * 48];
        assert_eq!(
            tubeseg_mask_copy(mask, bytes.as_mut_ptr(), bytes.len()),
            TubesegStatus::Ok
        );
        assert_eq!(bytes.iter().filter(|&&b| b == 1).count(), tubeseg_mask_count(mask));
        assert_eq!(
            tubeseg_mask_copy(mask, bytes.as_mut_ptr(), 10),
            TubesegStatus::InvalidArgument
        );

        let mut cl = ptr::null_mut();
        assert_eq!(
            tubeseg_centreline_extract(mask, ptr::null(), &mut cl),
            TubesegStatus::Ok
        );
        let mut len = 0.0;
        assert_eq!(tubeseg_centreline_branch_length(cl, 0, &mut len), TubesegStatus::Ok);
        assert!(len > 15.0, "length {len}");
        assert_eq!(
            tubeseg_centreline_branch_length(cl, 3, &mut len),
            TubesegStatus::InvalidArgument
        );

        let bad = [24usize, 24, 99];
        let mut m2 = ptr::null_mut();
        assert_eq!(
            tubeseg_segment(vol, bad.as_ptr(), 369.0, 621.0, ptr::null(), &mut m2),
            TubesegStatus::InvalidArgument
        );
        assert_eq!(
            tubeseg_segment(vol, seed.as_ptr(), 621.0, 369.0, ptr::null(), &mut m2),
            TubesegStatus::InvalidArgument
        );

        tubeseg_centreline_free(cl);
        tubeseg_mask_free(mask);
        tubeseg_mask_free(truth);
        tubeseg_volume_free(vol);
    }
}

#[test]
fn config_handles() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let toml = CString::new("cr = 0.46\n").unwrap();
        assert_eq!(tubeseg_config_parse(toml.as_ptr(), &mut cfg), TubesegStatus::Ok);
        let set = CString::new("cr=0.55").unwrap();
        assert_eq!(tubeseg_config_set(cfg, set.as_ptr()), TubesegStatus::Ok);
        let bad = CString::new("cr=1.5").unwrap();
        assert_eq!(tubeseg_config_set(cfg, bad.as_ptr()), TubesegStatus::Config);
        let s = tubeseg_config_to_toml(cfg);
        assert!(CStr::from_ptr(s).to_str().unwrap().contains("cr = 0.55"));
        tubeseg_string_free(s);
        tubeseg_config_free(cfg);

        let unknown = CString::new("nonsense = 1").unwrap();
        let mut c2 = ptr::null_mut();
        assert_eq!(tubeseg_config_parse(unknown.as_ptr(), &mut c2), TubesegStatus::Config);
        assert!(c2.is_null());
        assert!(last_error().contains("nonsense"));
    }
}

#[test]
fn io_and_argument_errors() {
    unsafe {
        let mut v = ptr::null_mut();
        let missing = CString::new("/nonexistent/volume.mha").unwrap();
        assert_eq!(tubeseg_volume_load(missing.as_ptr(), &mut v), TubesegStatus::Io);
        assert_eq!(tubeseg_volume_load(ptr::null(), &mut v), TubesegStatus::NullPointer);
        assert_eq!(
            tubeseg_volume_load(missing.as_ptr(), ptr::null_mut()),
            TubesegStatus::NullPointer
        );
        let data = [0.0; 5];
        let s = tubeseg_volume_new(
            [2, 2, 2].as_ptr(),
            [1.0; 3].as_ptr(),
            ptr::null(),
            data.as_ptr(),
            5,
            &mut v,
        );
        assert_ne!(s, TubesegStatus::Ok);
        assert!(v.is_null());
        let kind = CString::new("cube").unwrap();
        let s = tubeseg_phantom_generate(kind.as_ptr(), [16; 3].as_ptr(), 1.0, false, 0, &mut v, ptr::null_mut());
        assert_eq!(s, TubesegStatus::InvalidArgument);
        assert!(last_error().contains("cube"));
        assert_eq!(tubeseg_mask_count(ptr::null()), 0);
        assert!(tubeseg_volume_data(ptr::null(), ptr::null_mut()).is_null());
        tubeseg_volume_free(ptr::null_mut());
        assert!(!CStr::from_ptr(tubeseg_version()).to_bytes().is_empty());
    }
}

#[test]
fn file_roundtrip() {
    let (vol, truth) = phantom("helix", 40, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let vp = CString::new(dir.path().join("v.mha").to_str().unwrap()).unwrap();
    let mp = CString::new(dir.path().join("m.mha").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(tubeseg_volume_save(vol, vp.as_ptr()), TubesegStatus::Ok);
        assert_eq!(tubeseg_mask_save(truth, mp.as_ptr()), TubesegStatus::Ok);
        let (mut v2, mut m2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(tubeseg_volume_load(vp.as_ptr(), &mut v2), TubesegStatus::Ok);
        assert_eq!(tubeseg_mask_load(mp.as_ptr(), &mut m2), TubesegStatus::Ok);
        let (mut a, mut b) = (0, 0);
        let da = std::slice::from_raw_parts(tubeseg_volume_data(vol, &mut a), a);
        let db = std::slice::from_raw_parts(tubeseg_volume_data(v2, &mut b), b);
        // non-integer samples are stored as 32-bit floats
        assert!(da.iter().zip(db).all(|(&x, &y)| (x as f32) as f64 == y));
        let mut d = 0.0;
        tubeseg_mask_dice(truth, m2, &mut d);
        assert_eq!(d, 1.0);
        let mut sp = [0.0; 3];
        tubeseg_volume_spacing(v2, sp.as_mut_ptr());
        assert_eq!(sp, [1.0; 3]);
        for v in [vol, v2] {
            tubeseg_volume_free(v);
        }
        tubeseg_mask_free(truth);
        tubeseg_mask_free(m2);
    }
}
