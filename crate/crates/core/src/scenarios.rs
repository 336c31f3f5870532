//! Canned road configurations: a roadworks bottleneck with cell-dependent
//! road conditions, and a traffic light as a periodically gated interface.
//!
//! Both run on 10 cells with 6 speed classes and eta0 = 1.

use crate::dynamics::{BoundarySpec, GateOverride, LeftLimiter, TimeFn};
use crate::error::{Error, Result};
use crate::interaction::EnvironmentProfile;
use crate::state::{KineticState, SpeedLattice};
use std::sync::Arc;

pub const SCENARIO_CELLS: usize = 10;
pub const SCENARIO_CLASSES: usize = 6;

/// Road-condition profile along the roadworks stretch.
///
/// `Variable` is the canonical scenario: alpha = 0.61 on cells 1..=5, then a
/// linear ramp 0.61 - 0.022 (i - 5) on cells 6..=9, reaching 0.5 at cell 10.
/// `LiteralTable` evaluates the printed ramp formula (31 - i/10)/40 on cells
/// 6..=9 instead; it contradicts the narrated decrease (it jumps to ~0.76)
/// and is kept only for side-by-side comparison. `Constant` is the control
/// with one value everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaProfile {
    Variable,
    Constant(f64),
    LiteralTable,
}

/// Per-cell road conditions for a 10-cell roadworks run.
pub fn roadworks_alpha(profile: AlphaProfile) -> Vec<f64> {
    match profile {
        AlphaProfile::Constant(a) => vec![a; SCENARIO_CELLS],
        AlphaProfile::Variable => (1..=SCENARIO_CELLS)
            .map(|i| {
                if i <= 5 {
                    0.61
                } else if i <= 9 {
                    0.61 - 0.022 * (i - 5) as f64
                } else {
                    0.5
                }
            })
            .collect(),
        AlphaProfile::LiteralTable => (1..=SCENARIO_CELLS)
            .map(|i| {
                if i <= 5 {
                    0.61
                } else if i <= 9 {
                    (31.0 - i as f64 / 10.0) / 40.0
                } else {
                    0.5
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct RoadworksScenario {
    pub initial: KineticState,
    pub lattice: SpeedLattice,
    pub bc: BoundarySpec,
    pub profile: EnvironmentProfile,
    pub rho0: f64,
}

/// Roadworks with the canonical variable road conditions.
pub fn build_roadworks(rho0: f64) -> Result<RoadworksScenario> {
    build_roadworks_with(rho0, AlphaProfile::Variable)
}

/// Roadworks: empty road, constant inflow of density rho0 spread uniformly
/// over the speed classes, entry limiter derived from the inflow, free exit.
pub fn build_roadworks_with(rho0: f64, alpha: AlphaProfile) -> Result<RoadworksScenario> {
    if !(rho0 > 0.0 && rho0 <= 1.0) {
        return Err(Error::invalid(
            "inflow density",
            format!("rho0 = {rho0} outside (0, 1]"),
        ));
    }
    let lattice = SpeedLattice::uniform(SCENARIO_CLASSES)?;
    let initial = KineticState::zero(SCENARIO_CELLS, SCENARIO_CLASSES)?;
    let inflow = vec![rho0 / SCENARIO_CLASSES as f64; SCENARIO_CLASSES];
    let bc = BoundarySpec::new(
        Arc::new(move |_| inflow.clone()),
        LeftLimiter::FromInflow,
        Arc::new(|_| 1.0),
    );
    let profile = EnvironmentProfile::new(roadworks_alpha(alpha), 0.0, 1.0)?;
    Ok(RoadworksScenario {
        initial,
        lattice,
        bc,
        profile,
        rho0,
    })
}

/// Red/green cycle of one gated interface: green first from t = 0, then red,
/// repeating with period green + red. During red the interface limiter is
/// pinned to 0; during green the capacity rule applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSchedule {
    pub interface: usize,
    pub green: f64,
    pub red: f64,
}

impl GateSchedule {
    pub fn new(interface: usize, green: f64, red: f64) -> Result<Self> {
        if !(green > 0.0 && green.is_finite() && red > 0.0 && red.is_finite()) {
            return Err(Error::invalid(
                "gate schedule",
                format!("green = {green}, red = {red} must be positive durations"),
            ));
        }
        Ok(GateSchedule {
            interface,
            green,
            red,
        })
    }

    /// Limiter override at time t: None while green, Some(0) while red.
    pub fn value(&self, t: f64) -> Option<f64> {
        let phase = t.rem_euclid(self.green + self.red);
        if phase < self.green {
            None
        } else {
            Some(0.0)
        }
    }

    pub fn period(&self) -> f64 {
        self.green + self.red
    }
}

#[derive(Debug, Clone)]
pub struct TrafficLightScenario {
    pub initial: KineticState,
    pub lattice: SpeedLattice,
    pub bc: BoundarySpec,
    pub profile: EnvironmentProfile,
    pub schedule: GateSchedule,
}

/// Traffic light with the default even 10/10 duty cycle.
pub fn build_traffic_light(queue_cells: usize) -> Result<TrafficLightScenario> {
    build_traffic_light_with(queue_cells, 10.0, 10.0)
}

/// Traffic light at the interface between cells 5 and 6: a pre-formed queue
/// of `queue_cells` full standing cells immediately left of the light, an
/// empty road ahead, no inflow, free exit. Full anticipation (beta = 1) lets
/// the head of the queue see the empty cell ahead once the light is green.
pub fn build_traffic_light_with(
    queue_cells: usize,
    green: f64,
    red: f64,
) -> Result<TrafficLightScenario> {
    if !(1..=5).contains(&queue_cells) {
        return Err(Error::invalid(
            "queue length",
            format!("queue_cells = {queue_cells} outside 1..=5"),
        ));
    }
    let lattice = SpeedLattice::uniform(SCENARIO_CLASSES)?;
    let gate_interface = 5;
    let mut f = vec![0.0; SCENARIO_CELLS * SCENARIO_CLASSES];
    for i in gate_interface - queue_cells..gate_interface {
        f[i * SCENARIO_CLASSES] = 1.0;
    }
    let initial = KineticState::new(SCENARIO_CELLS, SCENARIO_CLASSES, 0.0, f)?;
    let schedule = GateSchedule::new(gate_interface, green, red)?;
    let sched = schedule;
    let gate: TimeFn<Option<f64>> = Arc::new(move |t| sched.value(t));
    let bc = BoundarySpec::new(
        Arc::new(|_| vec![0.0; SCENARIO_CLASSES]),
        LeftLimiter::FromInflow,
        Arc::new(|_| 1.0),
    )
    .with_gate(GateOverride {
        interface: gate_interface,
        schedule: gate,
    });
    let profile = EnvironmentProfile::uniform(SCENARIO_CELLS, 0.55, 1.0, 1.0)?;
    Ok(TrafficLightScenario {
        initial,
        lattice,
        bc,
        profile,
        schedule,
    })
}
