//! Time integration of the full road: convection between cells limited by
//! downstream free space, plus in-cell interactions.
//!
//! With phi_k the limiter at interface k (k = 0 is the road entry, k = m the
//! exit) the explicit update of cell i reads, per speed class j,
//!
//!   f'_ij = f_ij [ 1 - dt ( v_j phi_{i+1} + eta(i) rho_i ) ]
//!         + dt v_j phi_i f_{i-1,j}
//!         + dt G_ij,
//!
//! with the inflow row f~(t) standing in for cell -1. Every term carries a
//! nonnegative coefficient whenever dt < 1/(1 + 2 eta0), which is why the
//! scheme cannot leave the admissible set: losses scale the old value, gains
//! and convection only add mass bounded by the limiter.
//!
//! Boundaries are time functions: an inflow distribution on the left, a
//! limiter value on the right, and optional gate overrides that pin the
//! limiter of an internal interface (a red light is the constant 0).

use crate::error::{Error, Result};
use crate::interaction::{
    fictitious_density, flux_limiter, gain_loss, game_table, interaction_rate, EnvironmentProfile,
};
use crate::state::{KineticState, SpeedLattice};
use std::fmt;
use std::sync::Arc;

/// Shared time-dependent value, cheap to clone into trajectories and threads.
pub type TimeFn<T> = Arc<dyn Fn(f64) -> T + Send + Sync>;

/// How the limiter at the road entry is chosen.
#[derive(Clone)]
pub enum LeftLimiter {
    /// Treat the inflow row as a virtual upstream cell: the entry limiter is
    /// Phi(total inflow mass, rho_1).
    FromInflow,
    /// An explicit time profile in [0, 1].
    Explicit(TimeFn<f64>),
}

impl fmt::Debug for LeftLimiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeftLimiter::FromInflow => f.write_str("FromInflow"),
            LeftLimiter::Explicit(_) => f.write_str("Explicit(<fn>)"),
        }
    }
}

/// Override of one internal interface limiter. While the schedule returns
/// Some(v), the interface uses v in place of the capacity rule.
#[derive(Clone)]
pub struct GateOverride {
    pub interface: usize,
    pub schedule: TimeFn<Option<f64>>,
}

impl fmt::Debug for GateOverride {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GateOverride {{ interface: {} }}", self.interface)
    }
}

/// Boundary data for one road: inflow distribution, entry and exit limiter
/// rules, and any gates.
#[derive(Clone)]
pub struct BoundarySpec {
    inflow: TimeFn<Vec<f64>>,
    left: LeftLimiter,
    right: TimeFn<f64>,
    gates: Vec<GateOverride>,
}

impl fmt::Debug for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BoundarySpec {{ left: {:?}, gates: {:?} }}",
            self.left, self.gates
        )
    }
}

impl BoundarySpec {
    pub fn new(inflow: TimeFn<Vec<f64>>, left: LeftLimiter, right: TimeFn<f64>) -> Self {
        BoundarySpec {
            inflow,
            left,
            right,
            gates: Vec::new(),
        }
    }

    /// No inflow and a blocked exit: the road exchanges nothing with the
    /// outside.
    pub fn closed(n: usize) -> Self {
        BoundarySpec::new(
            Arc::new(move |_| vec![0.0; n]),
            LeftLimiter::FromInflow,
            Arc::new(|_| 0.0),
        )
    }

    /// Constant inflow row with the entry limiter derived from it, and a
    /// constant exit limiter.
    pub fn constant_inflow(f_bar: Vec<f64>, right: f64) -> Self {
        BoundarySpec::new(
            Arc::new(move |_| f_bar.clone()),
            LeftLimiter::FromInflow,
            Arc::new(move |_| right),
        )
    }

    pub fn with_gate(mut self, gate: GateOverride) -> Self {
        self.gates.push(gate);
        self
    }

    pub fn inflow_fn(&self) -> TimeFn<Vec<f64>> {
        self.inflow.clone()
    }

    pub fn left_rule(&self) -> LeftLimiter {
        self.left.clone()
    }

    pub fn right_fn(&self) -> TimeFn<f64> {
        self.right.clone()
    }

    pub fn gates(&self) -> &[GateOverride] {
        &self.gates
    }

    /// Inflow row at time t, validated as an admissible single-cell
    /// distribution.
    pub fn inflow_at(&self, t: f64, n: usize) -> Result<Vec<f64>> {
        let f = (self.inflow)(t);
        if f.len() != n {
            return Err(Error::Boundary {
                t,
                detail: format!("inflow row has {} classes, road has {n}", f.len()),
            });
        }
        let mut sum = 0.0;
        for (j, x) in f.iter().enumerate() {
            if !x.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(x) {
                return Err(Error::Boundary {
                    t,
                    detail: format!("inflow[{j}] = {x} outside [0, 1]"),
                });
            }
            sum += x;
        }
        if sum > 1.0 + 1e-12 {
            return Err(Error::Boundary {
                t,
                detail: format!("inflow mass {sum} exceeds 1"),
            });
        }
        Ok(f)
    }
}

/// The m + 1 interface limiters at time t; entry 0 is the road entry, entry
/// m the exit, and gate overrides replace the capacity rule wherever their
/// schedule is active.
pub fn interface_limiters(
    rho: &[f64],
    inflow: &[f64],
    bc: &BoundarySpec,
    t: f64,
) -> Result<Vec<f64>> {
    let m = rho.len();
    let mut phi = Vec::with_capacity(m + 1);
    let entry = match &bc.left {
        LeftLimiter::FromInflow => {
            let mass_in: f64 = inflow.iter().sum();
            flux_limiter(mass_in.clamp(0.0, 1.0), rho[0])?
        }
        LeftLimiter::Explicit(f) => {
            let v = f(t);
            if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                return Err(Error::Boundary {
                    t,
                    detail: format!("entry limiter {v} outside [0, 1]"),
                });
            }
            v.clamp(0.0, 1.0)
        }
    };
    phi.push(entry);
    for k in 1..m {
        phi.push(flux_limiter(rho[k - 1], rho[k])?);
    }
    let exit = (bc.right)(t);
    if !(-1e-12..=1.0 + 1e-12).contains(&exit) {
        return Err(Error::Boundary {
            t,
            detail: format!("exit limiter {exit} outside [0, 1]"),
        });
    }
    phi.push(exit.clamp(0.0, 1.0));

    for gate in &bc.gates {
        if gate.interface == 0 || gate.interface >= m {
            return Err(Error::IndexOutOfRange {
                what: "gate interface",
                index: gate.interface,
                size: m,
            });
        }
        if let Some(v) = (gate.schedule)(t) {
            if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                return Err(Error::Boundary {
                    t,
                    detail: format!("gate at interface {} set to {v}", gate.interface),
                });
            }
            phi[gate.interface] = v.clamp(0.0, 1.0);
        }
    }
    Ok(phi)
}

/// One explicit step of size dt. Fails if dt does not satisfy the strict
/// stability bound of the profile.
pub fn step(
    state: &KineticState,
    lattice: &SpeedLattice,
    bc: &BoundarySpec,
    profile: &EnvironmentProfile,
    dt: f64,
) -> Result<KineticState> {
    let (m, n) = (state.m(), state.n());
    if lattice.n() != n {
        return Err(Error::invalid(
            "lattice",
            format!("{} classes for a state with {n}", lattice.n()),
        ));
    }
    if profile.m() != m {
        return Err(Error::invalid(
            "environment profile",
            format!("{} cells for a state with {m}", profile.m()),
        ));
    }
    let bound = profile.stability_bound();
    if dt.is_nan() || dt <= 0.0 || dt >= bound {
        return Err(Error::UnstableStep { dt, bound });
    }

    let t = state.t();
    let rho = state.densities();
    let inflow = bc.inflow_at(t, n)?;
    let phi = interface_limiters(&rho, &inflow, bc, t)?;

    let mut next = vec![0.0; m * n];
    for i in 0..m {
        let rt = fictitious_density(&rho, profile.beta(), i)?;
        let table = game_table(lattice, profile.alpha()[i], rt, phi[i + 1])?;
        let gl = gain_loss(
            state.row(i),
            &table,
            interaction_rate(profile.eta0(), rho[i]),
        );
        let up = if i == 0 {
            &inflow[..]
        } else {
            state.row(i - 1)
        };
        for j in 0..n {
            let v = lattice.speed(j);
            let keep = 1.0 - dt * (v * phi[i + 1] + gl.loss);
            let conv = dt * (v * phi[i] * up[j]);
            next[i * n + j] = state.get(i, j) * keep + conv + dt * gl.gain[j];
        }
    }
    KineticState::new(m, n, t + dt, next)
}

/// States produced by repeated stepping, on the uniform grid t_k = t_0 + k dt.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<KineticState>,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> &KineticState {
        &self.states[0]
    }

    pub fn final_state(&self) -> &KineticState {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }
}

/// Number of steps and the step size that tile `horizon` with steps no
/// larger than dt_max.
pub fn steps_for_horizon(horizon: f64, dt_max: f64) -> Result<(u64, f64)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(
            "horizon",
            format!("{horizon} must be positive"),
        ));
    }
    if !(dt_max > 0.0 && dt_max.is_finite()) {
        return Err(Error::invalid(
            "dt_max",
            format!("{dt_max} must be positive"),
        ));
    }
    let n = (horizon / dt_max - 1e-9).ceil().max(1.0) as u64;
    Ok((n, horizon / n as f64))
}

/// Integrate from `initial` up to t_0 + horizon, which must be an integer
/// number of steps.
pub fn simulate(
    initial: &KineticState,
    lattice: &SpeedLattice,
    bc: &BoundarySpec,
    profile: &EnvironmentProfile,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(
            "horizon",
            format!("{horizon} must be positive"),
        ));
    }
    let steps_real = horizon / dt;
    let steps = steps_real.round();
    if steps < 1.0 || (steps_real - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::invalid(
            "horizon",
            format!("{horizon} is not an integer number of steps of size {dt}"),
        ));
    }
    let steps = steps as u64;
    let mut states = Vec::with_capacity(steps as usize + 1);
    let mut times = Vec::with_capacity(steps as usize + 1);
    states.push(initial.clone());
    times.push(initial.t());
    for _ in 0..steps {
        let next = step(states.last().expect("nonempty"), lattice, bc, profile, dt)?;
        times.push(next.t());
        states.push(next);
    }
    Ok(Trajectory { times, states, dt })
}

/// Piecewise-linear interpolant between stored states. Accepts t within the
/// trajectory range, with 1e-9 slack at both ends.
pub fn interpolate(traj: &Trajectory, t: f64) -> Result<KineticState> {
    let t0 = traj.times[0];
    let t_end = *traj.times.last().expect("nonempty");
    if !(t0 - 1e-9..=t_end + 1e-9).contains(&t) {
        return Err(Error::invalid(
            "interpolation time",
            format!("t = {t} outside [{t0}, {t_end}]"),
        ));
    }
    if traj.len() == 1 {
        return Ok(traj.states[0].clone());
    }
    let pos = ((t - t0) / traj.dt).floor();
    let k = (pos.max(0.0) as usize).min(traj.len() - 2);
    let w = ((t - traj.times[k]) / traj.dt).clamp(0.0, 1.0);
    let (a, b) = (&traj.states[k], &traj.states[k + 1]);
    let f: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (1.0 - w) * x + w * y)
        .collect();
    KineticState::new(a.m(), a.n(), t, f)
}
