//! C ABI for the kinetic traffic simulator. Handles are opaque, every call
//! returns a status code, and the last error text is kept per thread for
//! retrieval with `gk_last_error_message`. All functions catch panics at the
//! boundary and report them as `GK_STATUS_PANIC` instead of unwinding into
//! the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use granular_kinetics::dynamics::{step, BoundarySpec};
use granular_kinetics::error::Error;
use granular_kinetics::homogeneous::{
    critical_density, fundamental_diagram, FundamentalDiagram, SteadyStateOptions,
};
use granular_kinetics::interaction::EnvironmentProfile;
use granular_kinetics::scenarios::{build_roadworks, build_traffic_light};
use granular_kinetics::state::{macroscopic_fields, total_vehicles, KineticState, SpeedLattice};

/// Result of every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Convergence = 3,
    Stability = 4,
    Boundary = 5,
    IndexOutOfRange = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> GkStatus {
    match err {
        Error::NoConvergence { .. } => GkStatus::Convergence,
        Error::UnstableStep { .. } => GkStatus::Stability,
        Error::Boundary { .. } => GkStatus::Boundary,
        Error::IndexOutOfRange { .. } => GkStatus::IndexOutOfRange,
        _ => GkStatus::InvalidArgument,
    }
}

fn fail(err: Error) -> GkStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Runs a closure at the ABI boundary: panics become GK_STATUS_PANIC.
fn guarded(body: impl FnOnce() -> GkStatus) -> GkStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            GkStatus::Panic
        }
    }
}

/// cbindgen:ignore
pub struct GkSim {
    state: KineticState,
    lattice: SpeedLattice,
    bc: BoundarySpec,
    profile: EnvironmentProfile,
    dt: f64,
}

/// cbindgen:ignore
pub struct GkDiagram {
    inner: FundamentalDiagram,
}

/// Copy the last error message of this thread into `buf` (NUL terminated,
/// truncated to `cap` bytes) and return the full message length in bytes,
/// excluding the terminator. Call with a null `buf` or zero `cap` to query
/// the required capacity.
///
/// # Safety
/// `buf` must be null or valid for `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gk_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

fn emit_sim(sim: GkSim, out: *mut *mut GkSim) -> GkStatus {
    unsafe { *out = Box::into_raw(Box::new(sim)) };
    GkStatus::Ok
}

/// Create the roadworks scenario: a 10-cell road with 6 speed classes, an
/// empty start, constant inflow of density `rho0` (0 < rho0 <= 1), a road
/// condition ramp over the work zone, and a free exit.
///
/// # Safety
/// `out` must be a valid pointer; the returned handle must be released with
/// `gk_sim_free`.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_roadworks(rho0: f64, out: *mut *mut GkSim) -> GkStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return GkStatus::NullPointer;
        }
        match build_roadworks(rho0) {
            Ok(s) => {
                let dt = s.profile.default_dt();
                emit_sim(
                    GkSim {
                        state: s.initial,
                        lattice: s.lattice,
                        bc: s.bc,
                        profile: s.profile,
                        dt,
                    },
                    out,
                )
            }
            Err(e) => fail(e),
        }
    })
}

/// Create the traffic-light scenario: `queue_cells` full standing cells
/// (1 to 5) queued at a light that alternates 10 green, 10 red.
///
/// # Safety
/// `out` must be a valid pointer; the returned handle must be released with
/// `gk_sim_free`.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_traffic_light(
    queue_cells: usize,
    out: *mut *mut GkSim,
) -> GkStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return GkStatus::NullPointer;
        }
        match build_traffic_light(queue_cells) {
            Ok(s) => {
                let dt = s.profile.default_dt();
                emit_sim(
                    GkSim {
                        state: s.initial,
                        lattice: s.lattice,
                        bc: s.bc,
                        profile: s.profile,
                        dt,
                    },
                    out,
                )
            }
            Err(e) => fail(e),
        }
    })
}

/// Create a custom road: `m` cells, `n` speed classes, uniform road
/// condition `alpha`, anticipation `beta`, rate coefficient `eta0`, uniform
/// initial density `initial_rho`, constant inflow of density `inflow_rho`,
/// and exit limiter `right_limiter`.
///
/// # Safety
/// `out` must be a valid pointer; the returned handle must be released with
/// `gk_sim_free`.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_custom(
    m: usize,
    n: usize,
    alpha: f64,
    beta: f64,
    eta0: f64,
    initial_rho: f64,
    inflow_rho: f64,
    right_limiter: f64,
    out: *mut *mut GkSim,
) -> GkStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return GkStatus::NullPointer;
        }
        if !(0.0..=1.0).contains(&inflow_rho) {
            return fail(Error::invalid(
                "inflow density",
                format!("{inflow_rho} outside [0, 1]"),
            ));
        }
        if !(0.0..=1.0).contains(&right_limiter) {
            return fail(Error::invalid(
                "exit limiter",
                format!("{right_limiter} outside [0, 1]"),
            ));
        }
        let build = || -> granular_kinetics::error::Result<GkSim> {
            let lattice = SpeedLattice::uniform(n)?;
            let state = KineticState::uniform_density(m, n, initial_rho)?;
            let bc = BoundarySpec::constant_inflow(vec![inflow_rho / n as f64; n], right_limiter);
            let profile = EnvironmentProfile::uniform(m, alpha, beta, eta0)?;
            let dt = profile.default_dt();
            Ok(GkSim {
                state,
                lattice,
                bc,
                profile,
                dt,
            })
        };
        match build() {
            Ok(sim) => emit_sim(sim, out),
            Err(e) => fail(e),
        }
    })
}

unsafe fn sim_ref<'a>(sim: *const GkSim) -> Option<&'a GkSim> {
    unsafe { sim.as_ref() }
}

/// Advance the simulation by `steps` explicit steps of the built-in step
/// size (see `gk_sim_dt`).
///
/// # Safety
/// `sim` must be a live handle from one of the constructors.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_step(sim: *mut GkSim, steps: u64) -> GkStatus {
    guarded(|| {
        let Some(sim) = (unsafe { sim.as_mut() }) else {
            set_error("sim handle is null");
            return GkStatus::NullPointer;
        };
        for _ in 0..steps {
            match step(&sim.state, &sim.lattice, &sim.bc, &sim.profile, sim.dt) {
                Ok(next) => sim.state = next,
                Err(e) => return fail(e),
            }
        }
        GkStatus::Ok
    })
}

/// Current simulation time.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_time(sim: *const GkSim, out: *mut f64) -> GkStatus {
    guarded(|| {
        let (Some(sim), false) = (unsafe { sim_ref(sim) }, out.is_null()) else {
            set_error("null pointer");
            return GkStatus::NullPointer;
        };
        unsafe { *out = sim.state.t() };
        GkStatus::Ok
    })
}

/// Step size used by `gk_sim_step`.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_dt(sim: *const GkSim, out: *mut f64) -> GkStatus {
    guarded(|| {
        let (Some(sim), false) = (unsafe { sim_ref(sim) }, out.is_null()) else {
            set_error("null pointer");
            return GkStatus::NullPointer;
        };
        unsafe { *out = sim.dt };
        GkStatus::Ok
    })
}

/// Number of cells and speed classes.
///
/// # Safety
/// `sim` must be a live handle; `m_out` and `n_out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_dims(
    sim: *const GkSim,
    m_out: *mut usize,
    n_out: *mut usize,
) -> GkStatus {
    guarded(|| {
        let (Some(sim), false, false) = (unsafe { sim_ref(sim) }, m_out.is_null(), n_out.is_null())
        else {
            set_error("null pointer");
            return GkStatus::NullPointer;
        };
        unsafe {
            *m_out = sim.state.m();
            *n_out = sim.state.n();
        }
        GkStatus::Ok
    })
}

/// Copy the full distribution f_ij, row major by cell, into `buf`.
/// `len` must equal cells x classes.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_distribution(
    sim: *const GkSim,
    buf: *mut f64,
    len: usize,
) -> GkStatus {
    guarded(|| {
        let (Some(sim), false) = (unsafe { sim_ref(sim) }, buf.is_null()) else {
            set_error("null pointer");
            return GkStatus::NullPointer;
        };
        let values = sim.state.values();
        if len != values.len() {
            return fail(Error::invalid(
                "buffer length",
                format!("{len} != cells x classes = {}", values.len()),
            ));
        }
        unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
        GkStatus::Ok
    })
}

fn copy_field(
    sim: *const GkSim,
    buf: *mut f64,
    len: usize,
    pick: impl Fn(&GkSim, usize) -> f64,
) -> GkStatus {
    let Some(sim) = (unsafe { sim_ref(sim) }) else {
        set_error("null pointer");
        return GkStatus::NullPointer;
    };
    if buf.is_null() {
        set_error("null pointer");
        return GkStatus::NullPointer;
    }
    let m = sim.state.m();
    if len != m {
        return fail(Error::invalid(
            "buffer length",
            format!("{len} != cells = {m}"),
        ));
    }
    for i in 0..m {
        unsafe { *buf.add(i) = pick(sim, i) };
    }
    GkStatus::Ok
}

/// Per-cell density into `buf` of length cells.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_density(sim: *const GkSim, buf: *mut f64, len: usize) -> GkStatus {
    guarded(|| copy_field(sim, buf, len, |s, i| s.state.row(i).iter().sum()))
}

/// Per-cell flux into `buf` of length cells.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_flux(sim: *const GkSim, buf: *mut f64, len: usize) -> GkStatus {
    guarded(|| {
        copy_field(sim, buf, len, |s, i| {
            s.state
                .row(i)
                .iter()
                .zip(s.lattice.speeds())
                .map(|(f, v)| v * f)
                .sum()
        })
    })
}

/// Per-cell mean speed into `buf` of length cells. Empty cells have no mean
/// speed and are marked NaN.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_mean_speed(
    sim: *const GkSim,
    buf: *mut f64,
    len: usize,
) -> GkStatus {
    guarded(|| {
        let Some(sim_r) = (unsafe { sim_ref(sim) }) else {
            set_error("null pointer");
            return GkStatus::NullPointer;
        };
        let fields = macroscopic_fields(&sim_r.state, &sim_r.lattice);
        copy_field(sim, buf, len, |_, i| fields.u[i].unwrap_or(f64::NAN))
    })
}

/// Per-cell speed variance into `buf` of length cells (zero on empty cells).
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_variance(sim: *const GkSim, buf: *mut f64, len: usize) -> GkStatus {
    guarded(|| {
        let Some(sim_r) = (unsafe { sim_ref(sim) }) else {
            set_error("null pointer");
            return GkStatus::NullPointer;
        };
        let fields = macroscopic_fields(&sim_r.state, &sim_r.lattice);
        copy_field(sim, buf, len, |_, i| fields.theta[i])
    })
}

/// Total vehicle mass on the road.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_total_mass(sim: *const GkSim, out: *mut f64) -> GkStatus {
    guarded(|| {
        let (Some(sim), false) = (unsafe { sim_ref(sim) }, out.is_null()) else {
            set_error("null pointer");
            return GkStatus::NullPointer;
        };
        unsafe { *out = total_vehicles(&sim.state) };
        GkStatus::Ok
    })
}

/// Release a simulation handle. A null handle is a no-op.
///
/// # Safety
/// `sim` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn gk_sim_free(sim: *mut GkSim) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Compute long-time flux/speed/variance curves for road condition `alpha`
/// over the density grid `rho_start:rho_stop:rho_step` with `n` speed
/// classes and rate coefficient `eta0`. Fails with GK_STATUS_CONVERGENCE
/// if any grid point does not reach a certified steady state.
///
/// # Safety
/// `out` must be a valid pointer; the returned handle must be released with
/// `gk_diagram_free`.
#[no_mangle]
pub unsafe extern "C" fn gk_diagram_compute(
    alpha: f64,
    rho_start: f64,
    rho_stop: f64,
    rho_step: f64,
    n: usize,
    eta0: f64,
    out: *mut *mut GkDiagram,
) -> GkStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return GkStatus::NullPointer;
        }
        if !(0.0 <= rho_start && rho_start <= rho_stop && rho_stop <= 1.0) {
            return fail(Error::invalid(
                "density grid",
                format!("[{rho_start}, {rho_stop}] must sit inside [0, 1]"),
            ));
        }
        if !(rho_step > 0.0 && rho_step.is_finite()) {
            return fail(Error::invalid(
                "density grid",
                format!("step {rho_step} must be positive"),
            ));
        }
        let k_max = ((rho_stop - rho_start) / rho_step + 1e-9).floor() as usize;
        let grid: Vec<f64> = (0..=k_max)
            .map(|k| (rho_start + k as f64 * rho_step).min(rho_stop))
            .collect();
        let lattice = match SpeedLattice::uniform(n) {
            Ok(l) => l,
            Err(e) => return fail(e),
        };
        let opts = SteadyStateOptions::default();
        let diagram = match fundamental_diagram(alpha, &grid, &lattice, eta0, &opts) {
            Ok(d) => d,
            Err(e) => return fail(e),
        };
        if let Some((rho, residual, steps)) = diagram.first_unconverged() {
            return fail(Error::NoConvergence {
                rho,
                alpha,
                residual,
                steps,
                tol: opts.tol,
            });
        }
        unsafe { *out = Box::into_raw(Box::new(GkDiagram { inner: diagram })) };
        GkStatus::Ok
    })
}

/// Number of grid points in a diagram.
///
/// # Safety
/// `diagram` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_diagram_len(diagram: *const GkDiagram, out: *mut usize) -> GkStatus {
    guarded(|| {
        let (Some(d), false) = (unsafe { diagram.as_ref() }, out.is_null()) else {
            set_error("null pointer");
            return GkStatus::NullPointer;
        };
        unsafe { *out = d.inner.len() };
        GkStatus::Ok
    })
}

/// Read one diagram row. The mean speed is NaN on the empty road.
///
/// # Safety
/// `diagram` must be a live handle; `rho`, `q`, `u`, `theta` must be valid
/// pointers.
#[no_mangle]
pub unsafe extern "C" fn gk_diagram_row(
    diagram: *const GkDiagram,
    index: usize,
    rho: *mut f64,
    q: *mut f64,
    u: *mut f64,
    theta: *mut f64,
) -> GkStatus {
    guarded(|| {
        let Some(d) = (unsafe { diagram.as_ref() }) else {
            set_error("diagram handle is null");
            return GkStatus::NullPointer;
        };
        if rho.is_null() || q.is_null() || u.is_null() || theta.is_null() {
            set_error("null pointer");
            return GkStatus::NullPointer;
        }
        if index >= d.inner.len() {
            return fail(Error::IndexOutOfRange {
                what: "diagram row",
                index,
                size: d.inner.len(),
            });
        }
        unsafe {
            *rho = d.inner.rho[index];
            *q = d.inner.q[index];
            *u = d.inner.u[index].unwrap_or(f64::NAN);
            *theta = d.inner.theta[index];
        }
        GkStatus::Ok
    })
}

/// Release a diagram handle. A null handle is a no-op.
///
/// # Safety
/// `diagram` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn gk_diagram_free(diagram: *mut GkDiagram) {
    if !diagram.is_null() {
        drop(unsafe { Box::from_raw(diagram) });
    }
}

/// Density of the speed-variance peak for road condition `alpha` on the
/// canonical 6-class lattice with eta0 = 1, scanned at `resolution`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_critical_density(
    alpha: f64,
    resolution: f64,
    out: *mut f64,
) -> GkStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return GkStatus::NullPointer;
        }
        let lattice = match SpeedLattice::uniform(6) {
            Ok(l) => l,
            Err(e) => return fail(e),
        };
        match critical_density(alpha, &lattice, 1.0, resolution) {
            Ok(rc) => {
                unsafe { *out = rc };
                GkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
