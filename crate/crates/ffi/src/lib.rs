//! C ABI for the aminertia library.
//!
//! Every fallible call returns an [`AmStatus`]; on failure a message for the
//! calling thread is available from [`am_last_error`]. Objects crossing the
//! boundary by pointer are opaque handles released with their `_free`
//! function. Matrices are row-major `double[9]`.

use aminertia::delta::{forward_kin, inverse_kin, jacobian, DeltaGeometry};
use aminertia::freqdom::{margins, open_loop_tf, AxisGains, Band};
use aminertia::harness::{run_scenario, Mode, RunError, RunLog, ScenarioConfig};
use aminertia::presense::{estimate_inertia, fit_obb, PointCloud, PriorCatalog};
use aminertia::spatial::{compose_inertia, InertialParams, Mat3, Vec3};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Presense = 4,
    Kinematics = 5,
    Analysis = 6,
    Diverged = 7,
    Io = 8,
    OutOfRange = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(AmStatus, String);

impl Failure {
    fn new(status: AmStatus, msg: impl ToString) -> Self {
        Self(status, msg.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AmStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(AmStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    // SAFETY: caller passes a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::new(AmStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message describing the last failure on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn am_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn am_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Rigid-body inertial parameters: mass, CoM and inertia about the CoM.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmInertial {
    pub mass: f64,
    pub com: [f64; 3],
    pub inertia: [f64; 9],
}

fn mat_to_rows(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

fn rows_to_mat(a: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(a)
}

impl From<InertialParams> for AmInertial {
    fn from(p: InertialParams) -> Self {
        Self {
            mass: p.mass,
            com: p.com.into(),
            inertia: mat_to_rows(&p.inertia_about_com),
        }
    }
}

/// An all-zero inertia block denotes a point mass.
fn to_params(a: &AmInertial) -> Result<InertialParams, Failure> {
    let bad = |e: aminertia::spatial::InertiaError| Failure::new(AmStatus::InvalidArgument, e);
    if a.inertia == [0.0; 9] {
        if !(a.mass > 0.0 && a.mass.is_finite() && a.com.iter().all(|c| c.is_finite())) {
            return Err(Failure::new(
                AmStatus::InvalidArgument,
                format!("point mass {} at {:?}", a.mass, a.com),
            ));
        }
        return Ok(InertialParams::point_mass(a.mass, Vec3::from(a.com)));
    }
    InertialParams::new(a.mass, Vec3::from(a.com), rows_to_mat(&a.inertia)).map_err(bad)
}

/// Whole-system inertia of a vehicle and an object whose own CoM frame is
/// placed at `p_obj` (plus `obj.com`).
///
/// # Safety
/// All pointers must be valid; `p_obj` points to three doubles.
#[no_mangle]
pub unsafe extern "C" fn am_compose_inertia(
    vehicle: *const AmInertial,
    obj: *const AmInertial,
    p_obj: *const f64,
    out: *mut AmInertial,
) -> AmStatus {
    guard(|| {
        non_null(vehicle, "vehicle")?;
        non_null(obj, "obj")?;
        non_null(p_obj, "p_obj")?;
        non_null(out, "out")?;
        // SAFETY: checked non-null; caller guarantees validity.
        let (v, o, p) = unsafe { (&*vehicle, &*obj, std::slice::from_raw_parts(p_obj, 3)) };
        let (v, o) = (to_params(v)?, to_params(o)?);
        let total = compose_inertia(&v, &o, &Vec3::from_column_slice(p));
        // SAFETY: checked non-null.
        unsafe { *out = total.into() };
        Ok(())
    })
}

/// Prior catalog handle.
pub struct AmCatalog(PriorCatalog);

/// Built-in prior catalog.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn am_catalog_builtin(out: *mut *mut AmCatalog) -> AmStatus {
    guard(|| {
        non_null(out, "out")?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(AmCatalog(PriorCatalog::builtin()))) };
        Ok(())
    })
}

/// Loads a prior catalog from a TOML file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn am_catalog_load(path: *const c_char, out: *mut *mut AmCatalog) -> AmStatus {
    guard(|| {
        non_null(out, "out")?;
        // SAFETY: forwarded caller guarantee.
        let path = unsafe { str_arg(path, "path") }?;
        let cat = PriorCatalog::load(Path::new(path)).map_err(|e| Failure::new(AmStatus::Presense, e))?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(AmCatalog(cat))) };
        Ok(())
    })
}

/// # Safety
/// `cat` is null or a handle from `am_catalog_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn am_catalog_free(cat: *mut AmCatalog) {
    if !cat.is_null() {
        // SAFETY: handle was created by Box::into_raw.
        drop(unsafe { Box::from_raw(cat) });
    }
}

/// Pre-sensed object estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmObjectEstimate {
    pub mass: f64,
    /// MoI about the object CoM in the cloud frame, row-major.
    pub inertia: [f64; 9],
    /// End effector to object CoM, m.
    pub grasp_offset: [f64; 3],
    /// Bounding box extents, longest first, m.
    pub box_dims: [f64; 3],
}

/// Fits a bounding box to `n_points` xyz triples and applies the prior for
/// `label`.
///
/// # Safety
/// `cat` is a live catalog handle, `label` a NUL-terminated string, `points`
/// holds `3 * n_points` doubles and `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn am_presense_estimate(
    cat: *const AmCatalog,
    label: *const c_char,
    points: *const f64,
    n_points: usize,
    pad_height: f64,
    out: *mut AmObjectEstimate,
) -> AmStatus {
    guard(|| {
        non_null(cat, "cat")?;
        non_null(points, "points")?;
        non_null(out, "out")?;
        // SAFETY: forwarded caller guarantees.
        let (cat, label, raw) = unsafe {
            (
                &(*cat).0,
                str_arg(label, "label")?,
                std::slice::from_raw_parts(points, 3 * n_points),
            )
        };
        let err = |e: aminertia::presense::PresenseError| Failure::new(AmStatus::Presense, e);
        let prior = cat.prior_for(label).map_err(err)?;
        let cloud = PointCloud::new(raw.chunks_exact(3).map(Vec3::from_column_slice).collect()).map_err(err)?;
        let obb = fit_obb(&cloud).map_err(err)?;
        let est = estimate_inertia(&obb, prior, pad_height).map_err(err)?;
        let value = AmObjectEstimate {
            mass: est.mass_tilde,
            inertia: mat_to_rows(&est.moi_in_parent()),
            grasp_offset: est.grasp_offset.into(),
            box_dims: obb.dims.into(),
        };
        // SAFETY: checked non-null.
        unsafe { *out = value };
        Ok(())
    })
}

/// Delta arm geometry; angles in rad, lengths in m.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmDeltaGeometry {
    pub base_radius: f64,
    pub platform_radius: f64,
    pub upper_arm_len: f64,
    pub forearm_len: f64,
    pub arm_azimuths: [f64; 3],
    pub joint_min: [f64; 3],
    pub joint_max: [f64; 3],
}

impl From<DeltaGeometry> for AmDeltaGeometry {
    fn from(g: DeltaGeometry) -> Self {
        Self {
            base_radius: g.base_radius,
            platform_radius: g.platform_radius,
            upper_arm_len: g.upper_arm_len,
            forearm_len: g.forearm_len,
            arm_azimuths: g.arm_azimuths,
            joint_min: g.joint_limits.map(|l| l[0]),
            joint_max: g.joint_limits.map(|l| l[1]),
        }
    }
}

impl AmDeltaGeometry {
    fn to_core(self) -> Result<DeltaGeometry, Failure> {
        let g = DeltaGeometry {
            base_radius: self.base_radius,
            platform_radius: self.platform_radius,
            upper_arm_len: self.upper_arm_len,
            forearm_len: self.forearm_len,
            arm_azimuths: self.arm_azimuths,
            joint_limits: [0, 1, 2].map(|i| [self.joint_min[i], self.joint_max[i]]),
        };
        g.validate().map_err(|e| Failure::new(AmStatus::InvalidArgument, e))?;
        Ok(g)
    }
}

/// Default arm geometry.
#[no_mangle]
pub extern "C" fn am_delta_default_geometry() -> AmDeltaGeometry {
    DeltaGeometry::default().into()
}

unsafe fn delta_call(
    geom: *const AmDeltaGeometry,
    input: *const f64,
    out: *mut f64,
    n_out: usize,
    f: impl FnOnce(&DeltaGeometry, [f64; 3]) -> Result<Vec<f64>, aminertia::delta::DeltaError>,
) -> AmStatus {
    guard(|| {
        non_null(geom, "geom")?;
        non_null(input, "input")?;
        non_null(out, "out")?;
        // SAFETY: checked non-null; caller guarantees three input doubles.
        let (g, x) = unsafe { ((*geom).to_core()?, std::slice::from_raw_parts(input, 3)) };
        let values = f(&g, [x[0], x[1], x[2]]).map_err(|e| Failure::new(AmStatus::Kinematics, e))?;
        // SAFETY: caller guarantees `n_out` writable doubles.
        unsafe { std::slice::from_raw_parts_mut(out, n_out) }.copy_from_slice(&values);
        Ok(())
    })
}

/// End-effector position for joint angles `theta[3]`, written to `p[3]`.
///
/// # Safety
/// Pointers valid for three doubles each.
#[no_mangle]
pub unsafe extern "C" fn am_delta_forward(geom: *const AmDeltaGeometry, theta: *const f64, p: *mut f64) -> AmStatus {
    // SAFETY: forwarded caller guarantees.
    unsafe {
        delta_call(geom, theta, p, 3, |g, t| {
            forward_kin(g, &t).map(|v| v.as_slice().to_vec())
        })
    }
}

/// Joint angles for end-effector position `p[3]`, written to `theta[3]`.
///
/// # Safety
/// Pointers valid for three doubles each.
#[no_mangle]
pub unsafe extern "C" fn am_delta_inverse(geom: *const AmDeltaGeometry, p: *const f64, theta: *mut f64) -> AmStatus {
    // SAFETY: forwarded caller guarantees.
    unsafe {
        delta_call(geom, p, theta, 3, |g, x| {
            inverse_kin(g, &Vec3::from(x)).map(|t| t.to_vec())
        })
    }
}

/// Velocity Jacobian at `theta[3]`, row-major into `jac[9]`.
///
/// # Safety
/// `theta` valid for three doubles, `jac` for nine.
#[no_mangle]
pub unsafe extern "C" fn am_delta_jacobian(geom: *const AmDeltaGeometry, theta: *const f64, jac: *mut f64) -> AmStatus {
    // SAFETY: forwarded caller guarantees.
    unsafe {
        delta_call(geom, theta, jac, 9, |g, t| {
            jacobian(g, &t).map(|m| mat_to_rows(&m).to_vec())
        })
    }
}

/// Rate-loop margins. `phase_crossover` is negative when the phase never
/// reaches -180 deg in band, in which case `gain_margin_db` is `+inf`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmMargins {
    pub gain_margin_db: f64,
    pub phase_margin_deg: f64,
    pub gain_crossover: f64,
    pub phase_crossover: f64,
}

/// Margins of the single-axis rate loop with PID gains `kp, ki, kd`,
/// scheduling gain `k_k`, motor gain `k_m`, motor lag `tau_m` and inertia `j`,
/// scanned over `[lo, hi]` rad/s.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn am_rate_margins(
    kp: f64,
    ki: f64,
    kd: f64,
    k_k: f64,
    k_m: f64,
    tau_m: f64,
    j: f64,
    lo: f64,
    hi: f64,
    out: *mut AmMargins,
) -> AmStatus {
    guard(|| {
        non_null(out, "out")?;
        let err = |e: aminertia::freqdom::FreqError| Failure::new(AmStatus::Analysis, e);
        let tf = open_loop_tf(&AxisGains { kp, ki, kd }, k_k, k_m, tau_m, j).map_err(err)?;
        let band = Band {
            lo,
            hi,
            ..Band::default()
        };
        let m = margins(&tf, &band).map_err(err)?;
        // SAFETY: checked non-null.
        unsafe {
            *out = AmMargins {
                gain_margin_db: m.gain_margin_db,
                phase_margin_deg: m.phase_margin_deg,
                gain_crossover: m.gain_crossover,
                phase_crossover: m.phase_crossover.unwrap_or(-1.0),
            }
        };
        Ok(())
    })
}

/// Scenario configuration handle.
pub struct AmScenario(ScenarioConfig);

fn config_err(e: impl ToString) -> Failure {
    Failure::new(AmStatus::Config, e)
}

unsafe fn new_scenario(out: *mut *mut AmScenario, make: impl FnOnce() -> Result<ScenarioConfig, Failure>) -> AmStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = make()?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(AmScenario(cfg))) };
        Ok(())
    })
}

/// Loads a scenario TOML file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn am_scenario_load(path: *const c_char, out: *mut *mut AmScenario) -> AmStatus {
    // SAFETY: forwarded caller guarantees.
    unsafe {
        new_scenario(out, || {
            let path = str_arg(path, "path")?;
            ScenarioConfig::load(Path::new(path)).map_err(config_err)
        })
    }
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `text` is a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn am_scenario_parse(text: *const c_char, out: *mut *mut AmScenario) -> AmStatus {
    // SAFETY: forwarded caller guarantees.
    unsafe {
        new_scenario(out, || {
            let text = str_arg(text, "text")?;
            ScenarioConfig::parse(text).map_err(config_err)
        })
    }
}

/// Sets the controller mode by name: `baseline`, `iags` (or `pre-only`),
/// `iags+dob`, `dob-only`.
///
/// # Safety
/// `sc` is a live scenario handle and `mode` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn am_scenario_set_mode(sc: *mut AmScenario, mode: *const c_char) -> AmStatus {
    guard(|| {
        non_null(sc, "sc")?;
        // SAFETY: forwarded caller guarantees.
        let mode: Mode = unsafe { str_arg(mode, "mode") }?.parse().map_err(config_err)?;
        // SAFETY: checked non-null.
        unsafe { (*sc).0.mode = mode };
        Ok(())
    })
}

/// # Safety
/// `sc` is a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn am_scenario_set_seed(sc: *mut AmScenario, seed: u64) -> AmStatus {
    guard(|| {
        non_null(sc, "sc")?;
        // SAFETY: checked non-null.
        unsafe { (*sc).0.seed = seed };
        Ok(())
    })
}

/// # Safety
/// `sc` is null or a handle from `am_scenario_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn am_scenario_free(sc: *mut AmScenario) {
    if !sc.is_null() {
        // SAFETY: handle was created by Box::into_raw.
        drop(unsafe { Box::from_raw(sc) });
    }
}

/// Run log handle.
pub struct AmRunLog(RunLog);

/// Runs a scenario to completion.
///
/// # Safety
/// `sc` is a live scenario handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn am_run(sc: *const AmScenario, out: *mut *mut AmRunLog) -> AmStatus {
    guard(|| {
        non_null(sc, "sc")?;
        non_null(out, "out")?;
        // SAFETY: checked non-null.
        let log = run_scenario(unsafe { &(*sc).0 }).map_err(|e| {
            let status = match e {
                RunError::Config(_) => AmStatus::Config,
                RunError::Diverged { .. } | RunError::Kinematics { .. } => AmStatus::Diverged,
            };
            Failure::new(status, e)
        })?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(AmRunLog(log))) };
        Ok(())
    })
}

/// Number of logged rows; zero for a null handle.
///
/// # Safety
/// `log` is null or a live run-log handle.
#[no_mangle]
pub unsafe extern "C" fn am_runlog_len(log: *const AmRunLog) -> usize {
    if log.is_null() {
        0
    } else {
        // SAFETY: checked non-null.
        unsafe { (*log).0.rows.len() }
    }
}

/// One logged control tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmLogSample {
    pub t: f64,
    pub p: [f64; 3],
    pub p_des: [f64; 3],
    /// Roll, pitch, yaw, rad.
    pub att: [f64; 3],
    pub m_hat_o: f64,
    pub m_true_o: f64,
    pub m_hat_t: f64,
    pub m_true_t: f64,
    pub k_k: [f64; 3],
    pub latched: bool,
}

/// Copies row `index` of the log into `out`.
///
/// # Safety
/// `log` is a live run-log handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn am_runlog_row(log: *const AmRunLog, index: usize, out: *mut AmLogSample) -> AmStatus {
    guard(|| {
        non_null(log, "log")?;
        non_null(out, "out")?;
        // SAFETY: checked non-null.
        let rows = unsafe { &(*log).0.rows };
        let r = rows
            .get(index)
            .ok_or_else(|| Failure::new(AmStatus::OutOfRange, format!("row {index} of {}", rows.len())))?;
        // SAFETY: checked non-null.
        unsafe {
            *out = AmLogSample {
                t: r.t,
                p: r.p,
                p_des: r.p_des,
                att: r.att,
                m_hat_o: r.m_hat_o,
                m_true_o: r.m_true_o,
                m_hat_t: r.m_hat_t,
                m_true_t: r.m_true_t,
                k_k: r.k_k,
                latched: r.latched,
            }
        };
        Ok(())
    })
}

/// Time of the grasp latch, or a negative value when it never latched.
///
/// # Safety
/// `log` is null or a live run-log handle.
#[no_mangle]
pub unsafe extern "C" fn am_runlog_latch_time(log: *const AmRunLog) -> f64 {
    if log.is_null() {
        return -1.0;
    }
    // SAFETY: checked non-null.
    unsafe { (*log).0.latch_time() }.unwrap_or(-1.0)
}

/// Writes the log as CSV.
///
/// # Safety
/// `log` is a live run-log handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn am_runlog_write_csv(log: *const AmRunLog, path: *const c_char) -> AmStatus {
    guard(|| {
        non_null(log, "log")?;
        // SAFETY: forwarded caller guarantees.
        let path = unsafe { str_arg(path, "path") }?;
        let io = |e: &dyn std::fmt::Display| Failure::new(AmStatus::Io, format!("{path}: {e}"));
        let f = File::create(path).map_err(|e| io(&e))?;
        // SAFETY: checked non-null.
        unsafe { &(*log).0 }.write_csv(BufWriter::new(f)).map_err(|e| io(&e))
    })
}

/// # Safety
/// `log` is null or a handle from `am_run` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn am_runlog_free(log: *mut AmRunLog) {
    if !log.is_null() {
        // SAFETY: handle was created by Box::into_raw.
        drop(unsafe { Box::from_raw(log) });
    }
}
