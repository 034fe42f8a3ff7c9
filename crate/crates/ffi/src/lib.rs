//! C ABI over the `frac` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_parse`/
//! `*_synthesize` functions and released with the matching `*_free`. Every fallible
//! call returns a [`FracStatus`]; the message of the most recent failure on the
//! calling thread is available from [`frac_last_error`]. Strings returned through
//! `char **` out-parameters are owned by the caller and released with
//! [`frac_string_free`]. Angles are in degrees.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use frac::bench::resolution_report;
use frac::codec::{bits_from_hex, bits_per_pulse, bits_to_hex, decode, encode, FrameSelection};
use frac::estimate::{run_estimate, Algorithm, EstimateOptions};
use frac::scenario::{NoiseSpec, Scenario};
use frac::signal::Snapshot;
use frac::{EstimateSet, FracError};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FracStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidScene = 4,
    Overflow = 5,
    LengthMismatch = 6,
    InvalidSelection = 7,
    DimensionMismatch = 8,
    EigFailure = 9,
    NonFinite = 10,
    DegenerateCore = 11,
    SubspaceCollapse = 12,
    OutOfDomain = 13,
    CombinatorialBlowup = 14,
    SingularFisher = 15,
    Parse = 16,
    Io = 17,
    IndexOutOfRange = 18,
    BufferTooSmall = 19,
    Panic = 20,
}

impl From<&FracError> for FracStatus {
    fn from(e: &FracError) -> Self {
        match e {
            FracError::InvalidConfig(_) => FracStatus::InvalidConfig,
            FracError::InvalidScene(_) => FracStatus::InvalidScene,
            FracError::Overflow(_) => FracStatus::Overflow,
            FracError::LengthMismatch { .. } => FracStatus::LengthMismatch,
            FracError::InvalidSelection(_) => FracStatus::InvalidSelection,
            FracError::DimensionMismatch(_) => FracStatus::DimensionMismatch,
            FracError::EigFailure(_) => FracStatus::EigFailure,
            FracError::NonFinite(_) => FracStatus::NonFinite,
            FracError::DegenerateCore { .. } => FracStatus::DegenerateCore,
            FracError::SubspaceCollapse(_) => FracStatus::SubspaceCollapse,
            FracError::OutOfDomain(_) => FracStatus::OutOfDomain,
            FracError::CombinatorialBlowup { .. } => FracStatus::CombinatorialBlowup,
            FracError::SingularFisher(_) => FracStatus::SingularFisher,
            FracError::Parse(_) => FracStatus::Parse,
            FracError::Io(_) => FracStatus::Io,
        }
    }
}

/// Scenario: radar configuration, targets, noise level and seed.
pub struct FracScenario(Scenario);

/// One synthesized frame of measurements.
pub struct FracSnapshot {
    snap: Snapshot,
    sigma2: f64,
}

/// Estimated targets, strongest first.
pub struct FracEstimates(EstimateSet);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FracTarget {
    pub r_m: f64,
    pub v_mps: f64,
    pub theta_deg: f64,
    pub beta_re: f64,
    pub beta_im: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FracResolution {
    pub range_m: f64,
    pub velocity_mps: f64,
    pub doa_broadside_deg: f64,
    pub doa_nominal_deg: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FracStatus, msg: impl Into<String>) -> FracStatus {
    set_error(msg.into());
    status
}

fn from_err(e: FracError) -> FracStatus {
    let s = FracStatus::from(&e);
    fail(s, e.to_string())
}

/// Run `f`, turning panics into [`FracStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), FracStatus>) -> FracStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FracStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(FracStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, FracStatus> {
    if p.is_null() {
        return Err(fail(FracStatus::NullPointer, format!("{name} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(FracStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, FracStatus> {
    p.as_ref().ok_or_else(|| fail(FracStatus::NullPointer, format!("{name} is NULL")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, FracStatus> {
    p.as_mut().ok_or_else(|| fail(FracStatus::NullPointer, format!("{name} is NULL")))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NULs removed").into_raw()
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn frac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn frac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn frac_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default scenario: the reference configuration with three targets at 20 dB.
#[no_mangle]
pub extern "C" fn frac_scenario_new() -> *mut FracScenario {
    Box::into_raw(Box::new(FracScenario(Scenario::default())))
}

/// Parse a scenario from `key: value` text.
#[no_mangle]
pub unsafe extern "C" fn frac_scenario_parse(text: *const c_char, out: *mut *mut FracScenario) -> FracStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let sc = Scenario::parse(str_arg(text, "text")?).map_err(from_err)?;
        *out = Box::into_raw(Box::new(FracScenario(sc)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_scenario_free(sc: *mut FracScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

#[no_mangle]
pub unsafe extern "C" fn frac_scenario_set_snr_db(sc: *mut FracScenario, snr_db: f64) -> FracStatus {
    guard(|| {
        if !snr_db.is_finite() {
            return Err(fail(FracStatus::InvalidScene, "snr_db must be finite"));
        }
        out_ptr(sc, "scenario")?.0.noise = NoiseSpec::SnrDb(snr_db);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_scenario_set_seed(sc: *mut FracScenario, seed: u64) -> FracStatus {
    guard(|| {
        out_ptr(sc, "scenario")?.0.seed = seed;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_scenario_target_count(sc: *const FracScenario, out: *mut usize) -> FracStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(sc, "scenario")?.0.targets.len();
        Ok(())
    })
}

/// Synthesize the scenario's snapshot (frame and noise drawn from its seed).
#[no_mangle]
pub unsafe extern "C" fn frac_snapshot_synthesize(sc: *const FracScenario, out: *mut *mut FracSnapshot) -> FracStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let (snap, sigma2) = handle(sc, "scenario")?.0.synthesize().map_err(from_err)?;
        *out = Box::into_raw(Box::new(FracSnapshot { snap, sigma2 }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_snapshot_free(s: *mut FracSnapshot) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Rows (`N·K`) and columns (`Qr`) of the measurement matrix.
#[no_mangle]
pub unsafe extern "C" fn frac_snapshot_dims(s: *const FracSnapshot, rows: *mut usize, cols: *mut usize) -> FracStatus {
    guard(|| {
        let s = handle(s, "snapshot")?;
        *out_ptr(rows, "rows")? = s.snap.y.nrows();
        *out_ptr(cols, "cols")? = s.snap.y.ncols();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_snapshot_sigma2(s: *const FracSnapshot, out: *mut f64) -> FracStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(s, "snapshot")?.sigma2;
        Ok(())
    })
}

/// Copy the measurements row by row as interleaved real/imaginary pairs into
/// `buf`, which must hold `2·rows·cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn frac_snapshot_copy(s: *const FracSnapshot, buf: *mut f64, len: usize) -> FracStatus {
    guard(|| {
        let y = &handle(s, "snapshot")?.snap.y;
        let need = 2 * y.len();
        if buf.is_null() {
            return Err(fail(FracStatus::NullPointer, "buf is NULL"));
        }
        if len < need {
            return Err(fail(FracStatus::BufferTooSmall, format!("buffer holds {len} doubles, need {need}")));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for i in 0..y.nrows() {
            for j in 0..y.ncols() {
                let at = 2 * (i * y.ncols() + j);
                out[at] = y[(i, j)].re;
                out[at + 1] = y[(i, j)].im;
            }
        }
        Ok(())
    })
}

/// Estimate `targets` targets with the named algorithm (`danm2-hooi`,
/// `danm2-match`, `ddanm-hooi`, `ddanm-match`, `l1`, `omp`).
#[no_mangle]
pub unsafe extern "C" fn frac_estimate(
    s: *const FracSnapshot,
    algorithm: *const c_char,
    targets: usize,
    out: *mut *mut FracEstimates,
) -> FracStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let s = handle(s, "snapshot")?;
        let algo: Algorithm = str_arg(algorithm, "algorithm")?.parse().map_err(from_err)?;
        let res = run_estimate(&s.snap, algo, &EstimateOptions::new(targets, s.sigma2)).map_err(from_err)?;
        *out = Box::into_raw(Box::new(FracEstimates(res.set)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_estimates_free(e: *mut FracEstimates) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

#[no_mangle]
pub unsafe extern "C" fn frac_estimates_len(e: *const FracEstimates, out: *mut usize) -> FracStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(e, "estimates")?.0.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_estimates_get(e: *const FracEstimates, index: usize, out: *mut FracTarget) -> FracStatus {
    guard(|| {
        let set = &handle(e, "estimates")?.0;
        let t = set
            .estimates
            .get(index)
            .ok_or_else(|| fail(FracStatus::IndexOutOfRange, format!("index {index} of {}", set.len())))?;
        *out_ptr(out, "out")? = FracTarget {
            r_m: t.r,
            v_mps: t.v,
            theta_deg: t.theta.to_degrees(),
            beta_re: t.beta.re,
            beta_im: t.beta.im,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_estimates_residual(e: *const FracEstimates, out: *mut f64) -> FracStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(e, "estimates")?.0.residual;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_bits_per_pulse(
    p: usize,
    m: usize,
    k: usize,
    pm_levels: usize,
    out: *mut u32,
) -> FracStatus {
    guard(|| {
        *out_ptr(out, "out")? = bits_per_pulse(p, m, k, pm_levels).map_err(from_err)?;
        Ok(())
    })
}

/// Encode a hexadecimal bit string (one frame's worth) into frame text.
#[no_mangle]
pub unsafe extern "C" fn frac_codec_encode(
    sc: *const FracScenario,
    hex: *const c_char,
    frame_text: *mut *mut c_char,
) -> FracStatus {
    guard(|| {
        let out = out_ptr(frame_text, "frame_text")?;
        *out = ptr::null_mut();
        let sc = &handle(sc, "scenario")?.0;
        let (cfg, j) = (&sc.cfg, sc.pm_levels);
        let per = bits_per_pulse(cfg.p, cfg.m, cfg.k, j).map_err(from_err)? as usize;
        let bits = bits_from_hex(str_arg(hex, "hex")?, per * cfg.n).map_err(from_err)?;
        *out = c_string(encode(&bits, cfg, j).map_err(from_err)?.to_text());
        Ok(())
    })
}

/// Decode frame text back into the hexadecimal bit string.
#[no_mangle]
pub unsafe extern "C" fn frac_codec_decode(
    sc: *const FracScenario,
    frame_text: *const c_char,
    hex: *mut *mut c_char,
) -> FracStatus {
    guard(|| {
        let out = out_ptr(hex, "hex")?;
        *out = ptr::null_mut();
        let sc = &handle(sc, "scenario")?.0;
        let frame = FrameSelection::from_text(str_arg(frame_text, "frame_text")?).map_err(from_err)?;
        *out = c_string(bits_to_hex(&decode(&frame, &sc.cfg, sc.pm_levels).map_err(from_err)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frac_resolution(sc: *const FracScenario, out: *mut FracResolution) -> FracStatus {
    guard(|| {
        let r = resolution_report(&handle(sc, "scenario")?.0.cfg);
        *out_ptr(out, "out")? = FracResolution {
            range_m: r.range_m,
            velocity_mps: r.velocity_mps,
            doa_broadside_deg: r.doa_broadside_deg,
            doa_nominal_deg: r.doa_nominal_deg,
        };
        Ok(())
    })
}
