//! C ABI for the navlab library.
//!
//! Conventions:
//! - every constructor returns a status code and writes an opaque handle
//!   through an out-pointer; handles are freed with the matching `_free`;
//! - structured results come back as JSON strings allocated by this library
//!   and released with `nav_string_free`;
//! - on any non-OK status, `nav_last_error` returns a thread-local message
//!   valid until the next failing call on the same thread.
//!
//! The header `include/navlab.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use navlab::geometry::{build_substrate, parse_geometry_spec, Geometry, VertexId};
use navlab::measure::{
    build_cost_geometry, sandwich_params, solve_profile, thresholds, CostGeometry, CostSpec,
};
use navlab::routing::{default_step_budget, route_trial_batch, NavGraph};
use navlab::sampler::{sample_bounded_cost_exact, sample_product, sample_rba, EdgeSet};
use navlab::NavError;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NavStatus {
    NavOk = 0,
    NavNullPointer = 1,
    NavInvalidArgument = 2,
    NavParseError = 3,
    NavUnsupported = 4,
    NavNumericError = 5,
    NavIoError = 6,
    NavInternalPanic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn status_of(err: &NavError) -> NavStatus {
    match err {
        NavError::Parse(_) | NavError::Json(_) => NavStatus::NavParseError,
        NavError::Unsupported(_) => NavStatus::NavUnsupported,
        NavError::Io(_) => NavStatus::NavIoError,
        NavError::Numeric(_) | NavError::DegenerateBudget(_) | NavError::OracleScale(_) => {
            NavStatus::NavNumericError
        }
        _ => NavStatus::NavInvalidArgument,
    }
}

fn fail(err: NavError) -> NavStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

/// Runs a closure, translating panics into `NavInternalPanic`.
fn guarded(f: impl FnOnce() -> NavStatus) -> NavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            NavStatus::NavInternalPanic
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, NavStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(NavStatus::NavNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not UTF-8".into());
        NavStatus::NavInvalidArgument
    })
}

fn emit_json<T: serde::Serialize>(value: &T, out: *mut *mut c_char) -> NavStatus {
    let text = match serde_json::to_string(value) {
        Ok(t) => t,
        Err(e) => return fail(NavError::Json(e)),
    };
    let cstring = CString::new(text).expect("JSON has no NUL bytes");
    unsafe { *out = cstring.into_raw() };
    NavStatus::NavOk
}

/// Opaque geometry handle.
pub struct NavGeometry {
    inner: Arc<Geometry>,
}

/// Opaque cost-geometry handle.
pub struct NavCostGeometry {
    inner: CostGeometry,
}

/// Opaque sampled edge-set handle.
pub struct NavEdgeSet {
    inner: EdgeSet,
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nav_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Frees a string returned by any `_json` entry point.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a geometry from a spec string such as `cycle:n=1024`,
/// `torus:side=64,dims=2`, or `setsystem:branch=2,depth=10`.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nav_geometry_new(
    spec: *const c_char,
    out: *mut *mut NavGeometry,
) -> NavStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer".into());
            return NavStatus::NavNullPointer;
        }
        let spec = match cstr_arg(spec) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match parse_geometry_spec(spec) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(NavGeometry { inner }));
                NavStatus::NavOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `g` must come from `nav_geometry_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nav_geometry_free(g: *mut NavGeometry) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` must be a live geometry handle.
#[no_mangle]
pub unsafe extern "C" fn nav_geometry_vertex_count(g: *const NavGeometry) -> u64 {
    if g.is_null() {
        return 0;
    }
    (*g).inner.vertex_count() as u64
}

/// # Safety
/// `g` must be a live geometry handle.
#[no_mangle]
pub unsafe extern "C" fn nav_geometry_scale_count(g: *const NavGeometry) -> u64 {
    if g.is_null() {
        return 0;
    }
    (*g).inner.scale_count() as u64
}

/// # Safety
/// `g` must be a live geometry handle.
#[no_mangle]
pub unsafe extern "C" fn nav_geometry_gamma(g: *const NavGeometry) -> f64 {
    if g.is_null() {
        return f64::NAN;
    }
    (*g).inner.gamma()
}

/// Semi-metric distance between two vertices.
///
/// # Safety
/// `g` must be a live geometry handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nav_geometry_distance(
    g: *const NavGeometry,
    u: u32,
    v: u32,
    out: *mut f64,
) -> NavStatus {
    guarded(|| {
        if g.is_null() || out.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        let geom = &(*g).inner;
        let n = geom.vertex_count() as u32;
        if u >= n || v >= n {
            return fail(NavError::InvalidArg(format!(
                "vertex out of range for n={n}"
            )));
        }
        *out = geom.distance(VertexId(u), VertexId(v));
        NavStatus::NavOk
    })
}

/// Runs the empirical coherence verification; writes a JSON report.
///
/// # Safety
/// `g` must be a live geometry handle; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nav_geometry_coherence_json(
    g: *const NavGeometry,
    rho: f64,
    sample_pairs: u64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> NavStatus {
    guarded(|| {
        if g.is_null() || out_json.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        match (*g)
            .inner
            .verify_coherence(rho, sample_pairs as usize, seed)
        {
            Ok(report) => emit_json(&report, out_json),
            Err(e) => fail(e),
        }
    })
}

/// Attaches per-scale costs to a geometry. Cost specs: `indexing:alpha=1.0`,
/// `logdensity:alpha=1.0`, `explicit:c1,c2,...`.
///
/// # Safety
/// `g` must be a live geometry handle; `spec` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nav_cost_geometry_new(
    g: *const NavGeometry,
    spec: *const c_char,
    out: *mut *mut NavCostGeometry,
) -> NavStatus {
    guarded(|| {
        if g.is_null() || out.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        let spec = match cstr_arg(spec) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let parsed = match CostSpec::parse(spec) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match build_cost_geometry(Arc::clone(&(*g).inner), &parsed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(NavCostGeometry { inner }));
                NavStatus::NavOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `cg` must come from `nav_cost_geometry_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nav_cost_geometry_free(cg: *mut NavCostGeometry) {
    if !cg.is_null() {
        drop(Box::from_raw(cg));
    }
}

/// Solves the entropic profile at a budget; the JSON object carries the
/// solution and its sandwich parameters.
///
/// # Safety
/// `cg` must be a live cost-geometry handle; `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn nav_solve_json(
    cg: *const NavCostGeometry,
    budget: f64,
    out_json: *mut *mut c_char,
) -> NavStatus {
    guarded(|| {
        if cg.is_null() || out_json.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        let model = (*cg).inner.model();
        let solution = match solve_profile(model, budget) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let sandwich = sandwich_params(model, &solution).ok();
        emit_json(
            &serde_json::json!({ "solution": solution, "sandwich": sandwich }),
            out_json,
        )
    })
}

/// Budget thresholds at exponent slack `theta`, as JSON.
///
/// # Safety
/// `cg` must be a live cost-geometry handle; `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn nav_thresholds_json(
    cg: *const NavCostGeometry,
    theta: f64,
    out_json: *mut *mut c_char,
) -> NavStatus {
    guarded(|| {
        if cg.is_null() || out_json.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        match thresholds((*cg).inner.model(), theta) {
            Ok(th) => emit_json(&th, out_json),
            Err(e) => fail(e),
        }
    })
}

/// Samples long-range edges from the entropic product measure at `budget`.
///
/// # Safety
/// `cg` must be a live cost-geometry handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nav_sample_product(
    cg: *const NavCostGeometry,
    budget: f64,
    seed: u64,
    out: *mut *mut NavEdgeSet,
) -> NavStatus {
    guarded(|| {
        if cg.is_null() || out.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        let model = (*cg).inner.model();
        let solution = match solve_profile(model, budget) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        match sample_product(&(*cg).inner, &solution.q_star, seed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(NavEdgeSet { inner }));
                NavStatus::NavOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Samples one exact uniform bounded-cost edge set.
///
/// # Safety
/// `cg` must be a live cost-geometry handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nav_sample_exact(
    cg: *const NavCostGeometry,
    budget: f64,
    seed: u64,
    out: *mut *mut NavEdgeSet,
) -> NavStatus {
    guarded(|| {
        if cg.is_null() || out.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        match sample_bounded_cost_exact(&(*cg).inner, budget, seed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(NavEdgeSet { inner }));
                NavStatus::NavOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Samples rank-based-augmentation edges, `edges_per_vertex` per vertex.
///
/// # Safety
/// `g` must be a live geometry handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nav_sample_rba(
    g: *const NavGeometry,
    edges_per_vertex: u32,
    seed: u64,
    out: *mut *mut NavEdgeSet,
) -> NavStatus {
    guarded(|| {
        if g.is_null() || out.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        match sample_rba(&(*g).inner, edges_per_vertex as usize, seed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(NavEdgeSet { inner }));
                NavStatus::NavOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `set` must come from a sampler and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nav_edge_set_free(set: *mut NavEdgeSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// # Safety
/// `set` must be a live edge-set handle.
#[no_mangle]
pub unsafe extern "C" fn nav_edge_set_len(set: *const NavEdgeSet) -> u64 {
    if set.is_null() {
        return 0;
    }
    (*set).inner.len() as u64
}

/// The `index`-th edge of the set (sorted order).
///
/// # Safety
/// `set` must be a live edge-set handle; `u`, `v` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn nav_edge_set_edge(
    set: *const NavEdgeSet,
    index: u64,
    u: *mut u32,
    v: *mut u32,
) -> NavStatus {
    guarded(|| {
        if set.is_null() || u.is_null() || v.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        let edges: &[(u32, u32)] = &(*set).inner.edges;
        match edges.get(index as usize) {
            Some(&(a, b)) => {
                *u = a;
                *v = b;
                NavStatus::NavOk
            }
            None => fail(NavError::InvalidArg(format!(
                "edge index {index} out of range"
            ))),
        }
    })
}

/// Routes a batch of random pairs over substrate + edge set and writes the
/// statistics as JSON. `step_budget = 0` selects the default `10 (ln n)^2`.
///
/// # Safety
/// `g` and `set` must be live handles; `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn nav_route_batch_json(
    g: *const NavGeometry,
    set: *const NavEdgeSet,
    pairs: u64,
    step_budget: u64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> NavStatus {
    guarded(|| {
        if g.is_null() || set.is_null() || out_json.is_null() {
            set_error("null pointer".into());
            return NavStatus::NavNullPointer;
        }
        let geom = Arc::clone(&(*g).inner);
        let budget = if step_budget == 0 {
            default_step_budget(geom.vertex_count())
        } else {
            step_budget as usize
        };
        let run = || -> navlab::Result<navlab::routing::BatchStats> {
            let substrate = build_substrate(geom)?;
            let graph = NavGraph::new(substrate, (*set).inner.clone())?;
            route_trial_batch(&graph, pairs as usize, budget, seed)
        };
        match run() {
            Ok(stats) => emit_json(&stats, out_json),
            Err(e) => fail(e),
        }
    })
}
