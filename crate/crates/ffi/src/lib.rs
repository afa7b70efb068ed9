//! C ABI over `teleport_sim`.
//!
//! Configurations and campaign results are opaque handles owned by the
//! caller and released with their `*_free` function. Every fallible call
//! returns a [`TsStatus`]; on failure [`ts_last_error`] describes the cause
//! for the calling thread. Strings returned by the library are released with
//! [`ts_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use teleport_sim::bsm::{teleport_expected, BsmModel};
use teleport_sim::experiment::calibrate::calibrate;
use teleport_sim::experiment::{
    error_budget, fibre_comparison, run_campaign, CalibrationTargets, CampaignConfig, CampaignResult, NoiseSource,
};
use teleport_sim::linkgeom::{loss_profile, slant_range, PassGeometry};
use teleport_sim::qstate::{MubState, PureState, C64};
use teleport_sim::Error;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    NonConvergence = 5,
    Internal = 6,
    Panic = 7,
}

/// Number of input states, in the order H, V, +, -, R, L.
pub const TS_NUM_STATES: usize = 6;

/// Rows of the error budget: double pair, distinguishability, polarization
/// distortion, background, all sources.
pub const TS_BUDGET_ROWS: usize = 5;

/// Opaque campaign configuration.
pub struct TsConfig(CampaignConfig);

/// Opaque campaign result.
pub struct TsResult(CampaignResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> TsStatus {
    match e {
        Error::InvalidParameter { .. } | Error::State(_) => TsStatus::InvalidArgument,
        Error::Config(_) => TsStatus::Config,
        Error::Io { .. } => TsStatus::Io,
        Error::NonConvergence { .. } => TsStatus::NonConvergence,
        _ => TsStatus::Internal,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (TsStatus, String)>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TsStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (TsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (TsStatus, String) {
    (TsStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (TsStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TsStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (TsStatus, String)> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn config_arg<'a>(p: *const TsConfig) -> Result<&'a CampaignConfig, (TsStatus, String)> {
    p.as_ref().map(|c| &c.0).ok_or_else(|| null("config"))
}

unsafe fn result_arg<'a>(p: *const TsResult) -> Result<&'a CampaignResult, (TsStatus, String)> {
    p.as_ref().map(|r| &r.0).ok_or_else(|| null("result"))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Built-in calibrated configuration.
#[no_mangle]
pub extern "C" fn ts_config_default() -> *mut TsConfig {
    Box::into_raw(Box::new(TsConfig(CampaignConfig::default())))
}

/// Loads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_config_load(path: *const c_char, out: *mut *mut TsConfig) -> TsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let cfg = CampaignConfig::load(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TsConfig(cfg)));
        Ok(())
    })
}

/// Parses a TOML configuration held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_config_from_toml(text: *const c_char, out: *mut *mut TsConfig) -> TsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(TsConfig(CampaignConfig::from_toml_str(text).map_err(lib_err)?)));
        Ok(())
    })
}

/// Serializes a configuration to TOML; free the string with [`ts_string_free`].
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_config_to_toml(config: *const TsConfig, out: *mut *mut c_char) -> TsStatus {
    guard(|| {
        let cfg = config_arg(config)?;
        let out = out_arg(out, "out")?;
        let text = cfg.to_toml_string().map_err(lib_err)?;
        *out = CString::new(text)
            .map_err(|_| (TsStatus::Internal, "nul byte in TOML".to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_config_set_seed(config: *mut TsConfig, seed: u64) -> TsStatus {
    guard(|| {
        config.as_mut().ok_or_else(|| null("config"))?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_config_free(config: *mut TsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the Monte Carlo campaign.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_run_campaign(config: *const TsConfig, out: *mut *mut TsResult) -> TsStatus {
    guard(|| {
        let cfg = config_arg(config)?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(TsResult(run_campaign(cfg).map_err(lib_err)?)));
        Ok(())
    })
}

/// # Safety
/// `result` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_result_free(result: *mut TsResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Total four-photon counts and the mean fidelity with its sigma.
///
/// # Safety
/// `result` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_result_summary(
    result: *const TsResult,
    total_counts: *mut u64,
    mean_fidelity: *mut f64,
    mean_sigma: *mut f64,
) -> TsStatus {
    guard(|| {
        let r = result_arg(result)?;
        *out_arg(total_counts, "total_counts")? = r.total_counts;
        *out_arg(mean_fidelity, "mean_fidelity")? = r.mean_fidelity;
        *out_arg(mean_sigma, "mean_sigma")? = r.mean_sigma;
        Ok(())
    })
}

/// Per-state tallies for `state` in `0..TS_NUM_STATES`. Fidelity and sigma
/// are NaN when the state collected no events.
///
/// # Safety
/// `result` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_result_state(
    result: *const TsResult,
    state: usize,
    correct: *mut u64,
    wrong: *mut u64,
    fidelity: *mut f64,
    sigma: *mut f64,
) -> TsStatus {
    guard(|| {
        let r = result_arg(result)?;
        let m = *MubState::ALL
            .get(state)
            .ok_or_else(|| (TsStatus::InvalidArgument, format!("state index {state} out of range")))?;
        let s = r.state(m);
        *out_arg(correct, "correct")? = s.correct;
        *out_arg(wrong, "wrong")? = s.wrong;
        *out_arg(fidelity, "fidelity")? = s.fidelity.unwrap_or(f64::NAN);
        *out_arg(sigma, "sigma")? = s.sigma.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Full result record as JSON; free the string with [`ts_string_free`].
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_result_to_json(result: *const TsResult, out: *mut *mut c_char) -> TsStatus {
    guard(|| {
        let r = result_arg(result)?;
        let out = out_arg(out, "out")?;
        let text = serde_json::to_string(r).map_err(|e| (TsStatus::Internal, e.to_string()))?;
        *out = CString::new(text)
            .map_err(|_| (TsStatus::Internal, "nul byte in JSON".to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Writes `TS_BUDGET_ROWS` fidelity deficits into `deficits`.
///
/// # Safety
/// `config` must be a live handle; `deficits` must hold `TS_BUDGET_ROWS` values.
#[no_mangle]
pub unsafe extern "C" fn ts_error_budget(config: *const TsConfig, deficits: *mut f64) -> TsStatus {
    guard(|| {
        let cfg = config_arg(config)?;
        if deficits.is_null() {
            return Err(null("deficits"));
        }
        let b = error_budget(cfg).map_err(lib_err)?;
        let rows = [
            NoiseSource::DoublePair,
            NoiseSource::Distinguishability,
            NoiseSource::PolarizationDistortion,
            NoiseSource::Background,
            NoiseSource::All,
        ];
        let out = std::slice::from_raw_parts_mut(deficits, TS_BUDGET_ROWS);
        for (o, s) in out.iter_mut().zip(rows) {
            *o = b.deficit(s);
        }
        Ok(())
    })
}

/// Fits the calibration parameters of `config` to the published targets and
/// returns the calibrated configuration in `out`.
///
/// # Safety
/// `config` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_calibrate(config: *const TsConfig, out: *mut *mut TsConfig, residual: *mut f64) -> TsStatus {
    guard(|| {
        let cfg = config_arg(config)?;
        let out = out_arg(out, "out")?;
        let residual = out_arg(residual, "residual")?;
        let fit = match calibrate(cfg, &CalibrationTargets::default()) {
            Ok(fit) => fit,
            Err(e) => {
                if let Error::NonConvergence { residual: r, .. } = &e {
                    *residual = *r;
                }
                return Err(lib_err(e));
            }
        };
        *residual = fit.residual;
        if !fit.within_tolerance {
            return Err((
                TsStatus::NonConvergence,
                format!("fit stalled at residual {:.3e}", fit.residual),
            ));
        }
        *out = Box::into_raw(Box::new(TsConfig(fit.parameters.apply(cfg))));
        Ok(())
    })
}

/// Number of rows [`ts_loss_profile`] produces for `config` at 1 s steps.
///
/// # Safety
/// `config` must be a live handle and `rows` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_loss_profile_len(config: *const TsConfig, rows: *mut usize) -> TsStatus {
    guard(|| {
        let cfg = config_arg(config)?;
        let p = loss_profile(&cfg.geometry, &cfg.link, cfg.orbit_duration, 1.0).map_err(lib_err)?;
        *out_arg(rows, "rows")? = p.len();
        Ok(())
    })
}

/// Fills `capacity` slots of `time_s` and `loss_db` with the reference-pass
/// loss profile at 1 s steps; `written` receives the row count.
///
/// # Safety
/// `config` must be a live handle; arrays must hold `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn ts_loss_profile(
    config: *const TsConfig,
    time_s: *mut f64,
    loss_db: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> TsStatus {
    guard(|| {
        let cfg = config_arg(config)?;
        let written = out_arg(written, "written")?;
        if time_s.is_null() || loss_db.is_null() {
            return Err(null("time_s/loss_db"));
        }
        let p = loss_profile(&cfg.geometry, &cfg.link, cfg.orbit_duration, 1.0).map_err(lib_err)?;
        if p.len() > capacity {
            return Err((
                TsStatus::InvalidArgument,
                format!("capacity {capacity} below {} rows", p.len()),
            ));
        }
        let (t, l) = (
            std::slice::from_raw_parts_mut(time_s, p.len()),
            std::slice::from_raw_parts_mut(loss_db, p.len()),
        );
        for (i, row) in p.iter().enumerate() {
            t[i] = row.t_s;
            l[i] = row.loss_db;
        }
        *written = p.len();
        Ok(())
    })
}

/// Line-of-sight distance in km at `elevation_deg` for a circular orbit at
/// `altitude_km`.
///
/// # Safety
/// `range_km` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_slant_range(elevation_deg: f64, altitude_km: f64, range_km: *mut f64) -> TsStatus {
    guard(|| {
        let out = out_arg(range_km, "range_km")?;
        if !(elevation_deg > 0.0 && elevation_deg <= 90.0 && altitude_km > 0.0) {
            return Err((
                TsStatus::InvalidArgument,
                "need 0 < elevation <= 90 and altitude > 0".to_string(),
            ));
        }
        let g = PassGeometry {
            orbit_altitude: altitude_km,
            ..PassGeometry::default()
        };
        *out = slant_range(elevation_deg, &g);
        Ok(())
    })
}

/// Outcome-averaged fidelity of teleporting `alpha|H⟩ + beta|V⟩`, normalized
/// here, through a Werner resource of fidelity `entangled_fidelity` with
/// mode overlap `mode_overlap`.
///
/// # Safety
/// `fidelity` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_teleport_fidelity(
    alpha_re: f64,
    alpha_im: f64,
    beta_re: f64,
    beta_im: f64,
    entangled_fidelity: f64,
    mode_overlap: f64,
    fidelity: *mut f64,
) -> TsStatus {
    guard(|| {
        let out = out_arg(fidelity, "fidelity")?;
        let input = PureState::qubit(C64::new(alpha_re, alpha_im), C64::new(beta_re, beta_im))
            .map_err(|e| lib_err(e.into()))?;
        let model = BsmModel::new(mode_overlap).map_err(lib_err)?;
        *out = teleport_expected(&input, entangled_fidelity, &model)
            .map_err(lib_err)?
            .fidelity;
        Ok(())
    })
}

/// Expected waiting time, in years, for one event through a fibre.
///
/// # Safety
/// `years` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_fibre_waiting_years(
    rate_hz: f64,
    distance_km: f64,
    loss_db_per_km: f64,
    years: *mut f64,
) -> TsStatus {
    guard(|| {
        let out = out_arg(years, "years")?;
        *out = fibre_comparison(rate_hz, distance_km, loss_db_per_km)
            .map_err(lib_err)?
            .waiting_time_years;
        Ok(())
    })
}
