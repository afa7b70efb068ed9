use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;
use teleport_sim_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ts_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn campaign_round_trip() {
    unsafe {
        let cfg = ts_config_default();
        let mut res = ptr::null_mut();
        assert_eq!(ts_run_campaign(cfg, &mut res), TsStatus::Ok);
        let (mut total, mut mean, mut sigma) = (0u64, 0.0, 0.0);
        assert_eq!(ts_result_summary(res, &mut total, &mut mean, &mut sigma), TsStatus::Ok);
        let direct = teleport_sim::experiment::run_campaign(&teleport_sim::experiment::CampaignConfig::default()).unwrap();
        assert_eq!(total, direct.total_counts);
        assert_eq!(mean, direct.mean_fidelity);

        let (mut c, mut w, mut f, mut s) = (0u64, 0u64, 0.0, 0.0);
        assert_eq!(ts_result_state(res, 2, &mut c, &mut w, &mut f, &mut s), TsStatus::Ok);
        assert_eq!((c, w), (direct.states[2].correct, direct.states[2].wrong));
        assert_eq!(ts_result_state(res, TS_NUM_STATES, &mut c, &mut w, &mut f, &mut s), TsStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let mut json = ptr::null_mut();
        assert_eq!(ts_result_to_json(res, &mut json), TsStatus::Ok);
        let parsed: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(parsed["total_counts"].as_u64(), Some(total));
        ts_string_free(json);
        ts_result_free(res);
        ts_config_free(cfg);
    }
}

#[test]
fn config_text_round_trip_and_errors() {
    unsafe {
        let cfg = ts_config_default();
        assert_eq!(ts_config_set_seed(cfg, 99), TsStatus::Ok);
        let mut text = ptr::null_mut();
        assert_eq!(ts_config_to_toml(cfg, &mut text), TsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(ts_config_from_toml(text, &mut back), TsStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(ts_config_to_toml(back, &mut again), TsStatus::Ok);
        assert_eq!(CStr::from_ptr(text), CStr::from_ptr(again));
        assert!(CStr::from_ptr(text).to_str().unwrap().contains("seed = 99"));
        ts_string_free(text);
        ts_string_free(again);
        ts_config_free(back);
        ts_config_free(cfg);

        let mut out = ptr::null_mut();
        let bad = CString::new("schema_version = 1\nseed = 1").unwrap();
        assert_eq!(ts_config_from_toml(bad.as_ptr(), &mut out), TsStatus::Config);
        assert!(out.is_null());
        assert!(last_error().contains("orbit_duration"), "{}", last_error());

        let missing = CString::new("/nonexistent/campaign.toml").unwrap();
        assert_eq!(ts_config_load(missing.as_ptr(), &mut out), TsStatus::Io);
        assert_eq!(ts_config_load(ptr::null(), &mut out), TsStatus::NullPointer);
        assert_eq!(ts_run_campaign(ptr::null(), ptr::null_mut()), TsStatus::NullPointer);
        ts_config_free(ptr::null_mut());
        ts_result_free(ptr::null_mut());
        ts_string_free(ptr::null_mut());
    }
}

#[test]
fn physics_entry_points() {
    unsafe {
        let mut range = 0.0;
        assert_eq!(ts_slant_range(76.0, 500.0, &mut range), TsStatus::Ok);
        assert!((range - 514.15).abs() < 0.01);
        assert_eq!(ts_slant_range(0.0, 500.0, &mut range), TsStatus::InvalidArgument);

        let mut f = 0.0;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(ts_teleport_fidelity(s, 0.0, s, 0.0, 1.0, 0.0, &mut f), TsStatus::Ok);
        assert!((f - 0.5).abs() < 1e-12);
        assert_eq!(ts_teleport_fidelity(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, &mut f), TsStatus::Ok);
        assert_eq!(ts_teleport_fidelity(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, &mut f), TsStatus::InvalidArgument);
        assert_eq!(ts_teleport_fidelity(1.0, 0.0, 0.0, 0.0, 1.0, 1.5, &mut f), TsStatus::InvalidArgument);

        let mut years = 0.0;
        assert_eq!(ts_fibre_waiting_years(8210.0, 1200.0, 0.2, &mut years), TsStatus::Ok);
        assert!((3.8e12..3.9e12).contains(&years));
        assert_eq!(ts_fibre_waiting_years(0.0, 1200.0, 0.2, &mut years), TsStatus::InvalidArgument);

        let cfg = ts_config_default();
        let mut budget = [0.0; TS_BUDGET_ROWS];
        assert_eq!(ts_error_budget(cfg, budget.as_mut_ptr()), TsStatus::Ok);
        for (got, want) in budget.iter().zip([0.06, 0.10, 0.03, 0.04]) {
            assert!((got - want).abs() < 1e-6);
        }
        assert!(budget[4] > 0.15 && budget[4] < 0.25);

        let mut rows = 0usize;
        assert_eq!(ts_loss_profile_len(cfg, &mut rows), TsStatus::Ok);
        assert_eq!(rows, 351);
        let (mut t, mut l) = (vec![0.0; rows], vec![0.0; rows]);
        let mut written = 0usize;
        assert_eq!(
            ts_loss_profile(cfg, t.as_mut_ptr(), l.as_mut_ptr(), rows - 1, &mut written),
            TsStatus::InvalidArgument
        );
        assert_eq!(ts_loss_profile(cfg, t.as_mut_ptr(), l.as_mut_ptr(), rows, &mut written), TsStatus::Ok);
        assert_eq!(written, rows);
        assert_eq!((t[0], t[rows - 1]), (-175.0, 175.0));
        assert!(l.iter().all(|x| (39.0..=54.0).contains(x)));

        let mut fitted = ptr::null_mut();
        let mut residual = f64::NAN;
        assert_eq!(ts_calibrate(cfg, &mut fitted, &mut residual), TsStatus::Ok);
        assert!(residual < 1e-9);
        ts_config_free(fitted);
        ts_config_free(cfg);
    }
}

#[test]
fn header_is_current() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/teleport_sim.h")).unwrap();
    for name in [
        "ts_config_default",
        "ts_run_campaign",
        "ts_result_state",
        "ts_error_budget",
        "ts_calibrate",
        "ts_last_error",
        "TS_STATUS_NON_CONVERGENCE",
        "typedef struct TsConfig TsConfig",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libteleport_sim_ffi.a");
    if !lib.exists() {
        panic!("static library not found at {}", lib.display());
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".to_string());
    let status = Command::new(&cc)
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler runs");
    assert!(status.success(), "compiling the C smoke test failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ffi smoke ok"));
}
