//! C ABI over `algebroid-mech`.
//!
//! Objects are opaque handles created by `am_chart_builtin`,
//! `am_lagrangian_parse` and `am_integrate` and released with the matching
//! `am_*_free`. Every fallible call returns an
//! [`AmStatus`]; on failure [`am_last_error`] describes the most recent error
//! on the calling thread.
//!
//! Flat state vectors are laid out as `x[m], y[n], v[n], p[n]` and dual points
//! as `x[m], y[n], p[n], pbar[n], q[n], qbar[n], l[n], lbar[n]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use algebroid_mech::algebroid::{state_vars, AlgebroidError, Chart};
use algebroid_mech::dynamics::{
    energy, integrate, rhs_unconstrained, DynamicsError, Method, MomState, Trajectory,
};
use algebroid_mech::expr::{Expr, ExprError};
use algebroid_mech::geometry::{alpha_inverse, alpha_map, DualPoint, GeometryError};
use algebroid_mech::systems;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Dimension = 4,
    SingularHessian = 5,
    Numerical = 6,
    Panic = 7,
}

/// A Lie algebroid chart.
pub struct AmChart(Chart);

/// A Lagrangian parsed over the state variables of one chart.
pub struct AmLagrangian {
    expr: Expr,
    m: usize,
    n: usize,
}

/// An integrated trajectory with per-node energies.
pub struct AmTrajectory(Trajectory<MomState>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

struct Fail(AmStatus, String);

impl Fail {
    fn null(what: &str) -> Self {
        Fail(AmStatus::NullPointer, format!("{what} is null"))
    }
}

fn expr_status(e: &ExprError) -> AmStatus {
    match e {
        ExprError::Domain { .. } => AmStatus::Numerical,
        ExprError::PointLength { .. } => AmStatus::Dimension,
        _ => AmStatus::Parse,
    }
}

impl From<AlgebroidError> for Fail {
    fn from(e: AlgebroidError) -> Self {
        let status = match &e {
            AlgebroidError::Expr(x) => expr_status(x),
            AlgebroidError::Dimension { .. } => AmStatus::Dimension,
            AlgebroidError::Index(_) => AmStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

impl From<GeometryError> for Fail {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Algebroid(a) => a.into(),
            GeometryError::Expr(x) => Fail(expr_status(&x), x.to_string()),
            other => Fail(AmStatus::InvalidArgument, other.to_string()),
        }
    }
}

impl From<DynamicsError> for Fail {
    fn from(e: DynamicsError) -> Self {
        let status = match &e {
            DynamicsError::Geometry(g) => return g.clone().into(),
            DynamicsError::SingularHessian { .. } => AmStatus::SingularHessian,
            DynamicsError::InvalidSpan { .. } | DynamicsError::Constraint(_) => {
                AmStatus::InvalidArgument
            }
            _ => AmStatus::Numerical,
        };
        Fail(status, e.to_string())
    }
}

/// Runs `f`, recording failures and converting panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AmStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(AmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(
    p: *const f64,
    len: usize,
    expected: usize,
    what: &str,
) -> Result<&'a [f64], Fail> {
    if len != expected {
        return Err(Fail(
            AmStatus::Dimension,
            format!("{what}: expected length {expected}, got {len}"),
        ));
    }
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(
    p: *mut f64,
    len: usize,
    expected: usize,
    what: &str,
) -> Result<&'a mut [f64], Fail> {
    if len < expected {
        return Err(Fail(
            AmStatus::Dimension,
            format!("{what}: capacity {len} below required {expected}"),
        ));
    }
    if expected == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, expected))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::null(what));
    }
    out.write(value);
    Ok(())
}

fn state_len(m: usize, n: usize) -> usize {
    m + 3 * n
}

fn lagrangian_for<'a>(chart: &AmChart, l: &'a AmLagrangian) -> Result<&'a Expr, Fail> {
    if (l.m, l.n) != (chart.0.base_dim(), chart.0.rank()) {
        return Err(Fail(
            AmStatus::Dimension,
            format!(
                "Lagrangian was parsed for (m, n) = ({}, {}), chart has ({}, {})",
                l.m,
                l.n,
                chart.0.base_dim(),
                chart.0.rank()
            ),
        ));
    }
    Ok(&l.expr)
}

fn mom_state(m: usize, n: usize, s: &[f64]) -> MomState {
    MomState::from_slice(m, n, s)
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn am_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn am_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a built-in chart by name (`trivial_r<n>`, `so3`, `se2`, ...).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn am_chart_builtin(name: *const c_char, out: *mut *mut AmChart) -> AmStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let chart = systems::builtin(name).ok_or_else(|| {
            Fail(
                AmStatus::InvalidArgument,
                format!(
                    "unknown builtin `{name}`; known: {}",
                    systems::BUILTIN_NAMES.join(", ")
                ),
            )
        })?;
        write_out(out, Box::into_raw(Box::new(AmChart(chart))), "out")
    })
}

/// # Safety
/// `chart` must come from [`am_chart_builtin`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn am_chart_free(chart: *mut AmChart) {
    if !chart.is_null() {
        drop(Box::from_raw(chart));
    }
}

/// Base dimension `m`; 0 for a null handle.
///
/// # Safety
/// `chart` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn am_chart_base_dim(chart: *const AmChart) -> usize {
    chart.as_ref().map_or(0, |c| c.0.base_dim())
}

/// Bundle rank `n`; 0 for a null handle.
///
/// # Safety
/// `chart` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn am_chart_rank(chart: *const AmChart) -> usize {
    chart.as_ref().map_or(0, |c| c.0.rank())
}

/// Samples the anchor-compatibility and Jacobi residuals.
///
/// # Safety
/// `chart` must be live; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn am_chart_check_structure(
    chart: *const AmChart,
    samples: usize,
    seed: u64,
    tol: f64,
    anchor_residual: *mut f64,
    jacobi_residual: *mut f64,
    pass: *mut bool,
) -> AmStatus {
    guard(|| {
        let chart = handle(chart, "chart")?;
        let r = chart.0.check_structure(samples, seed, tol);
        write_out(anchor_residual, r.anchor_residual, "anchor_residual")?;
        write_out(jacobi_residual, r.jacobi_residual, "jacobi_residual")?;
        write_out(pass, r.pass, "pass")
    })
}

/// Parses a Lagrangian over `x1..xm, y1..yn, v1..vn` of `chart`.
///
/// # Safety
/// `chart` must be live, `text` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn am_lagrangian_parse(
    chart: *const AmChart,
    text: *const c_char,
    out: *mut *mut AmLagrangian,
) -> AmStatus {
    guard(|| {
        let chart = handle(chart, "chart")?;
        let text = str_arg(text, "text")?;
        let (m, n) = (chart.0.base_dim(), chart.0.rank());
        let expr = Expr::parse(text, &state_vars(m, n))
            .map_err(|e| Fail(expr_status(&e), e.to_string()))?;
        write_out(
            out,
            Box::into_raw(Box::new(AmLagrangian { expr, m, n })),
            "out",
        )
    })
}

/// # Safety
/// `l` must come from [`am_lagrangian_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn am_lagrangian_free(l: *mut AmLagrangian) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Time derivative of a flat state `x, y, v, p` (length `m + 3n`).
///
/// # Safety
/// Handles must be live; `state` has `len` entries, `out` room for `len`.
#[no_mangle]
pub unsafe extern "C" fn am_rhs(
    chart: *const AmChart,
    lagrangian: *const AmLagrangian,
    state: *const f64,
    len: usize,
    out: *mut f64,
) -> AmStatus {
    guard(|| {
        let chart = handle(chart, "chart")?;
        let l = lagrangian_for(chart, handle(lagrangian, "lagrangian")?)?;
        let (m, n) = (chart.0.base_dim(), chart.0.rank());
        let s = slice_arg(state, len, state_len(m, n), "state")?;
        let d = rhs_unconstrained(&chart.0, l, &mom_state(m, n, s))?;
        out_slice(out, len, len, "out")?.copy_from_slice(&d.to_vec());
        Ok(())
    })
}

/// Energy of a flat state.
///
/// # Safety
/// Handles must be live; `state` has `len` entries; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn am_energy(
    chart: *const AmChart,
    lagrangian: *const AmLagrangian,
    state: *const f64,
    len: usize,
    out: *mut f64,
) -> AmStatus {
    guard(|| {
        let chart = handle(chart, "chart")?;
        let l = lagrangian_for(chart, handle(lagrangian, "lagrangian")?)?;
        let (m, n) = (chart.0.base_dim(), chart.0.rank());
        let s = slice_arg(state, len, state_len(m, n), "state")?;
        write_out(out, energy(&chart.0, l, &mom_state(m, n, s))?, "out")
    })
}

unsafe fn dual_map(
    chart: *const AmChart,
    point: *const f64,
    len: usize,
    out: *mut f64,
    f: fn(&Chart, &DualPoint) -> Result<DualPoint, GeometryError>,
) -> AmStatus {
    guard(|| {
        let chart = handle(chart, "chart")?;
        let (m, n) = (chart.0.base_dim(), chart.0.rank());
        let d = DualPoint::from_slice(m, n, slice_arg(point, len, m + 7 * n, "point")?)?;
        out_slice(out, len, len, "out")?.copy_from_slice(&f(&chart.0, &d)?.to_vec());
        Ok(())
    })
}

/// Applies the Tulczyjew map to a flat dual point (length `m + 7n`).
///
/// # Safety
/// `chart` must be live; `point` has `len` entries, `out` room for `len`.
#[no_mangle]
pub unsafe extern "C" fn am_alpha_map(
    chart: *const AmChart,
    point: *const f64,
    len: usize,
    out: *mut f64,
) -> AmStatus {
    dual_map(chart, point, len, out, alpha_map)
}

/// Inverse of [`am_alpha_map`].
///
/// # Safety
/// As for [`am_alpha_map`].
#[no_mangle]
pub unsafe extern "C" fn am_alpha_inverse(
    chart: *const AmChart,
    point: *const f64,
    len: usize,
    out: *mut f64,
) -> AmStatus {
    dual_map(chart, point, len, out, alpha_inverse)
}

/// Integrates from `state` over `[t0, t1]` with fixed-step RK4 when
/// `adaptive_tol <= 0`, otherwise with the step-doubling controller.
///
/// # Safety
/// Handles must be live; `state` has `len` entries; `out` is valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn am_integrate(
    chart: *const AmChart,
    lagrangian: *const AmLagrangian,
    state: *const f64,
    len: usize,
    t0: f64,
    t1: f64,
    dt: f64,
    adaptive_tol: f64,
    out: *mut *mut AmTrajectory,
) -> AmStatus {
    guard(|| {
        let chart = handle(chart, "chart")?;
        let l = lagrangian_for(chart, handle(lagrangian, "lagrangian")?)?;
        let (m, n) = (chart.0.base_dim(), chart.0.rank());
        let s = slice_arg(state, len, state_len(m, n), "state")?;
        let method = if adaptive_tol > 0.0 {
            Method::Adaptive { tol: adaptive_tol }
        } else {
            Method::Rk4
        };
        let tr = integrate(&chart.0, l, &mom_state(m, n, s), t0, t1, dt, method)?;
        write_out(out, Box::into_raw(Box::new(AmTrajectory(tr))), "out")
    })
}

/// # Safety
/// `tr` must come from [`am_integrate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_free(tr: *mut AmTrajectory) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}

/// Number of stored nodes; 0 for a null handle.
///
/// # Safety
/// `tr` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_len(tr: *const AmTrajectory) -> usize {
    tr.as_ref().map_or(0, |t| t.0.len())
}

/// Length of one flat state; 0 for a null or empty handle.
///
/// # Safety
/// `tr` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_state_dim(tr: *const AmTrajectory) -> usize {
    tr.as_ref()
        .and_then(|t| t.0.states.first())
        .map_or(0, |s| s.to_vec().len())
}

/// Copies all node times into `out` (capacity `cap`).
///
/// # Safety
/// `tr` must be live; `out` has room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_times(
    tr: *const AmTrajectory,
    out: *mut f64,
    cap: usize,
) -> AmStatus {
    guard(|| {
        let tr = handle(tr, "trajectory")?;
        out_slice(out, cap, tr.0.times.len(), "out")?.copy_from_slice(&tr.0.times);
        Ok(())
    })
}

fn node(tr: &AmTrajectory, k: usize) -> Result<usize, Fail> {
    if k >= tr.0.len() {
        return Err(Fail(
            AmStatus::InvalidArgument,
            format!("node {k} out of range (len {})", tr.0.len()),
        ));
    }
    Ok(k)
}

/// Copies the flat state at node `k` into `out` (capacity `cap`).
///
/// # Safety
/// `tr` must be live; `out` has room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_state(
    tr: *const AmTrajectory,
    k: usize,
    out: *mut f64,
    cap: usize,
) -> AmStatus {
    guard(|| {
        let tr = handle(tr, "trajectory")?;
        let s = tr.0.states[node(tr, k)?].to_vec();
        out_slice(out, cap, s.len(), "out")?.copy_from_slice(&s);
        Ok(())
    })
}

/// Energy stored at node `k`.
///
/// # Safety
/// `tr` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_energy(
    tr: *const AmTrajectory,
    k: usize,
    out: *mut f64,
) -> AmStatus {
    guard(|| {
        let tr = handle(tr, "trajectory")?;
        write_out(out, tr.0.diagnostics[node(tr, k)?].energy, "out")
    })
}

/// `max_k |E_k − E_0|`; NaN for a null handle.
///
/// # Safety
/// `tr` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_energy_drift(tr: *const AmTrajectory) -> f64 {
    tr.as_ref().map_or(f64::NAN, |t| t.0.energy_drift())
}
