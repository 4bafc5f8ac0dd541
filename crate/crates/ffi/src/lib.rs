//! C ABI over `cubethrust`.
//!
//! Every function returns a [`CtStatus`]. Objects are opaque handles created
//! by a `*_new` function and released with the matching `*_free`. After a
//! non-OK status, `ct_last_error` copies the message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cubethrust::cli::allocate;
use cubethrust::geometry::{FaceAngles, Layout};
use cubethrust::search::{self, SearchConfig, SweepOutput, UnitCommandSet};
use cubethrust::sim::{self, ScenarioConfig};
use cubethrust::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    Numeric = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Thruster layout of the 24-slot cube.
pub struct CtLayout {
    inner: Layout,
}

/// Result of a configuration sweep.
pub struct CtSearch {
    inner: SweepOutput,
}

/// Docking scenario.
pub struct CtScenario {
    inner: ScenarioConfig,
}

/// One row of the sweep summary. `f_min` is NaN when no subset is viable.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CtSweepRow {
    pub n: usize,
    pub combinations: u64,
    pub full_rank: u64,
    pub viable: u64,
    pub optimal: u64,
    pub f_min: f64,
}

/// Headline numbers of one simulation. `time_to_dock` is NaN if not docked.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CtSimSummary {
    pub docked: bool,
    pub time_to_dock: f64,
    pub total_impulse: f64,
    pub angular_velocity_rms: f64,
    pub steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> CtStatus {
    match err {
        Error::Domain(_) | Error::Parse { .. } => CtStatus::InvalidArgument,
        Error::Io { .. } => CtStatus::Io,
        Error::Convergence { .. } | Error::Numeric(_) => CtStatus::Numeric,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CtStatus, String)>) -> CtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CtStatus::Panic
        }
    }
}

fn fail(err: Error) -> (CtStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (CtStatus, String) {
    (CtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn ids_from<'a>(ids: *const usize, n: usize) -> Result<&'a [usize], (CtStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if ids.is_null() {
        return Err(null("ids"));
    }
    Ok(std::slice::from_raw_parts(ids, n))
}

/// Copies the last error message of this thread into `buf`, NUL-terminated.
/// `len_out`, if non-null, receives the message length without the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes or be null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn ct_last_error(buf: *mut c_char, cap: usize, len_out: *mut usize) -> CtStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    if !len_out.is_null() {
        *len_out = msg.len();
    }
    if cap == 0 {
        return if msg.is_empty() { CtStatus::Ok } else { CtStatus::BufferTooSmall };
    }
    if buf.is_null() {
        return CtStatus::NullPointer;
    }
    let n = msg.len().min(cap - 1);
    std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
    *buf.add(n) = 0;
    if n < msg.len() {
        CtStatus::BufferTooSmall
    } else {
        CtStatus::Ok
    }
}

/// Builds a layout with face angles in degrees.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ct_layout_new(side_length: f64, theta_deg: f64, phi_deg: f64, out: *mut *mut CtLayout) -> CtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let angles = FaceAngles::from_degrees(theta_deg, phi_deg).map_err(fail)?;
        let inner = Layout::new(side_length, angles).map_err(fail)?;
        *out = Box::into_raw(Box::new(CtLayout { inner }));
        Ok(())
    })
}

/// # Safety
/// `layout` must come from `ct_layout_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_layout_free(layout: *mut CtLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// Non-negative thrusts for `wrench` (fx, fy, fz, tx, ty, tz) using the
/// thrusters `ids`. `magnitudes` receives `n_ids` values. Returns
/// `Infeasible` when the squared residual exceeds `eps`; outputs are still
/// written.
///
/// # Safety
/// `ids` and `magnitudes` must hold `n_ids` elements, `wrench` six.
#[no_mangle]
pub unsafe extern "C" fn ct_allocate(
    layout: *const CtLayout,
    ids: *const usize,
    n_ids: usize,
    wrench: *const f64,
    eps: f64,
    magnitudes: *mut f64,
    residual_sq: *mut f64,
) -> CtStatus {
    guard(|| {
        let layout = layout.as_ref().ok_or_else(|| null("layout"))?;
        let ids = ids_from(ids, n_ids)?;
        if wrench.is_null() {
            return Err(null("wrench"));
        }
        if magnitudes.is_null() && n_ids > 0 {
            return Err(null("magnitudes"));
        }
        let mut w = [0.0; 6];
        w.copy_from_slice(std::slice::from_raw_parts(wrench, 6));
        let report = allocate(&layout.inner, ids, w, eps).map_err(fail)?;
        if n_ids > 0 {
            std::slice::from_raw_parts_mut(magnitudes, n_ids).copy_from_slice(&report.magnitudes);
        }
        if !residual_sq.is_null() {
            *residual_sq = report.residual_sq;
        }
        if !report.feasible {
            return Err((
                CtStatus::Infeasible,
                format!("squared residual {:e} exceeds eps {:e}", report.residual_sq, eps),
            ));
        }
        Ok(())
    })
}

/// Runs the twelve unit-wrench tests on `ids`.
///
/// # Safety
/// `ids` must hold `n_ids` elements; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn ct_viability(
    layout: *const CtLayout,
    ids: *const usize,
    n_ids: usize,
    eps: f64,
    viable: *mut bool,
    total_thrust: *mut f64,
) -> CtStatus {
    guard(|| {
        let layout = layout.as_ref().ok_or_else(|| null("layout"))?;
        let ids = ids_from(ids, n_ids)?;
        if !(eps.is_finite() && eps > 0.0) {
            return Err((CtStatus::InvalidArgument, format!("eps {eps} must be positive")));
        }
        let h = layout.inner.allocation(ids).map_err(fail)?;
        let rec = search::viability_test(&h, &UnitCommandSet::standard(), eps);
        if !viable.is_null() {
            *viable = rec.viable;
        }
        if !total_thrust.is_null() {
            *total_thrust = if rec.viable { rec.total_thrust } else { f64::NAN };
        }
        Ok(())
    })
}

/// Sweeps subset sizes `n_min..=n_max` with the given geometry and eps.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ct_search_run(
    side_length: f64,
    theta_deg: f64,
    phi_deg: f64,
    eps: f64,
    n_min: usize,
    n_max: usize,
    out: *mut *mut CtSearch,
) -> CtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = SearchConfig {
            side_length,
            theta_deg,
            phi_deg,
            eps,
            n_min,
            n_max,
            ..SearchConfig::default()
        };
        let inner = search::sweep(&cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(CtSearch { inner }));
        Ok(())
    })
}

/// Summary row for subset size `n`.
///
/// # Safety
/// `search` must come from `ct_search_run`; `row` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ct_search_row(search: *const CtSearch, n: usize, row: *mut CtSweepRow) -> CtStatus {
    guard(|| {
        let search = search.as_ref().ok_or_else(|| null("search"))?;
        if row.is_null() {
            return Err(null("row"));
        }
        let r = search
            .inner
            .summary
            .row(n)
            .ok_or_else(|| (CtStatus::InvalidArgument, format!("no row for N={n}")))?;
        *row = CtSweepRow {
            n: r.n,
            combinations: r.combinations,
            full_rank: r.full_rank,
            viable: r.viable,
            optimal: r.optimal,
            f_min: r.f_min.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Copies the first optimal subset of size `n` into `ids` (capacity `cap`).
/// `len_out` receives its length, 0 if there is none.
///
/// # Safety
/// `ids` must hold `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn ct_search_optimal_ids(
    search: *const CtSearch,
    n: usize,
    ids: *mut usize,
    cap: usize,
    len_out: *mut usize,
) -> CtStatus {
    guard(|| {
        let search = search.as_ref().ok_or_else(|| null("search"))?;
        if len_out.is_null() {
            return Err(null("len_out"));
        }
        let set = search
            .inner
            .optimal
            .iter()
            .find(|o| o.n == n)
            .ok_or_else(|| (CtStatus::InvalidArgument, format!("no result for N={n}")))?;
        let first = set.configurations.first().map(Vec::as_slice).unwrap_or(&[]);
        *len_out = first.len();
        if first.len() > cap {
            return Err((CtStatus::BufferTooSmall, format!("need {} slots", first.len())));
        }
        if !first.is_empty() {
            if ids.is_null() {
                return Err(null("ids"));
            }
            std::slice::from_raw_parts_mut(ids, first.len()).copy_from_slice(first);
        }
        Ok(())
    })
}

/// # Safety
/// `search` must come from `ct_search_run` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_search_free(search: *mut CtSearch) {
    if !search.is_null() {
        drop(Box::from_raw(search));
    }
}

/// Default scenario: 12-thruster optimal set, built-in parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ct_scenario_new(out: *mut *mut CtScenario) -> CtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(CtScenario {
            inner: ScenarioConfig::default(),
        }));
        Ok(())
    })
}

/// Parses a JSON scenario; omitted fields take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ct_scenario_from_json(json: *const c_char, out: *mut *mut CtScenario) -> CtStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (CtStatus::InvalidArgument, "scenario is not UTF-8".to_string()))?;
        let inner = ScenarioConfig::from_json(text).map_err(|e| (CtStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(CtScenario { inner }));
        Ok(())
    })
}

/// Replaces the scenario's thruster set.
///
/// # Safety
/// `ids` must hold `n_ids` elements.
#[no_mangle]
pub unsafe extern "C" fn ct_scenario_set_ids(scenario: *mut CtScenario, ids: *const usize, n_ids: usize) -> CtStatus {
    guard(|| {
        let scenario = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        let ids = ids_from(ids, n_ids)?;
        scenario.inner.layout().map_err(fail)?.allocation(ids).map_err(fail)?;
        scenario.inner.thruster_ids = ids.to_vec();
        Ok(())
    })
}

/// Sets the simulated duration in seconds.
///
/// # Safety
/// `scenario` must come from a `ct_scenario_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn ct_scenario_set_final_time(scenario: *mut CtScenario, t_final: f64) -> CtStatus {
    guard(|| {
        let scenario = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err((CtStatus::InvalidArgument, format!("final time {t_final} must be positive")));
        }
        scenario.inner.t_final = t_final;
        Ok(())
    })
}

/// Runs the closed loop.
///
/// # Safety
/// `scenario` must come from a `ct_scenario_*` constructor; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ct_simulate(scenario: *const CtScenario, out: *mut CtSimSummary) -> CtStatus {
    guard(|| {
        let scenario = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = sim::run(&scenario.inner).map_err(fail)?;
        *out = CtSimSummary {
            docked: r.docked,
            time_to_dock: r.time_to_dock.unwrap_or(f64::NAN),
            total_impulse: r.total_impulse,
            angular_velocity_rms: r.angular_velocity_rms_norm,
            steps: r.steps,
        };
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from a `ct_scenario_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_scenario_free(scenario: *mut CtScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Library version, static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
