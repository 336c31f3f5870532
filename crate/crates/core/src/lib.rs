//! Fully discrete kinetic traffic model: a road of m cells, each holding at
//! most one unit of vehicle mass spread over n speed classes
//! v_j = (j-1)/(n-1). The state f_ij(t) evolves by binary interactions whose
//! outcomes a_hk^j depend on the local road condition alpha and on the free
//! space left in the destination cell, throttled by a flux limiter at each
//! cell interface:
//!
//!   d f_ij / dt =  v_j [ Phi_(i-1,i) f_(i-1)j - Phi_(i,i+1) f_ij ]
//!               + eta(i) [ sum_hk a_hk^j f_ih f_ik - f_ij rho_i ]
//!
//! The crate provides the admissible state types, the interaction tables and
//! operators (local and lookahead-averaged), the explicit time stepper with
//! its stability bound, spatially homogeneous steady states and fundamental
//! diagrams, two canonical road scenarios, randomized verification suites
//! for the scheme's qualitative theory, and the command line front end.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod homogeneous;
pub mod interaction;
pub mod scenarios;
pub mod state;
pub mod verify;

pub use dynamics::{
    interpolate, simulate, step, steps_for_horizon, BoundarySpec, GateOverride, LeftLimiter,
    TimeFn, Trajectory,
};
pub use error::{Error, Result};
pub use homogeneous::{
    critical_density, fundamental_diagram, homogeneous_rhs, steady_state, FundamentalDiagram,
    HomogeneousState, InitialSplit, SteadyStateOptions, SteadyStateOutcome,
};
pub use interaction::{
    fictitious_density, flux_limiter, gain_loss, game_table, interaction_operator_local,
    interaction_operator_nonlocal, interaction_rate, EnvironmentProfile, GainLoss, GameTableSlice,
    NonlocalWeights,
};
pub use scenarios::{
    build_roadworks, build_roadworks_with, build_traffic_light, build_traffic_light_with,
    roadworks_alpha, AlphaProfile, GateSchedule, RoadworksScenario, TrafficLightScenario,
};
pub use state::{
    l1_distance, macroscopic_fields, total_vehicles, KineticState, MacroFields, PhysicalUnits,
    RoadGeometry, SpeedLattice, ADMISSIBILITY_TOL,
};
