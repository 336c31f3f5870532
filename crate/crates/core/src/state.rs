//! Discrete state space: road cells crossed with a finite speed lattice.
//!
//! A road of m unit-length cells carries, per cell i, a distribution over n
//! speed classes. Entry f_ij is the fraction of cell capacity occupied by
//! vehicles at speed v_j, so admissible states satisfy
//!
//!   0 <= f_ij <= 1  and  rho_i = sum_j f_ij <= 1.
//!
//! Macroscopic fields per cell:
//!
//!   rho_i   = sum_j f_ij                         (density)
//!   q_i     = sum_j v_j f_ij                     (flux)
//!   u_i     = q_i / rho_i                        (mean speed; undefined on empty cells)
//!   theta_i = sum_j (v_j - u_i)^2 f_ij / rho_i   (speed variance)
//!
//! All quantities are dimensionless: speeds live in [0, 1], cells have unit
//! length, densities are fractions of cell capacity.

use crate::error::{Error, Result};

/// Slack accepted on admissibility bounds before a state is rejected.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

/// Ordered dimensionless speeds v_1 = 0 < ... < v_n = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedLattice {
    v: Vec<f64>,
}

impl SpeedLattice {
    /// Uniformly spaced lattice v_j = (j - 1)/(n - 1).
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(
                "speed lattice",
                format!("needs at least 2 classes, got {n}"),
            ));
        }
        let d = (n - 1) as f64;
        Self::new((0..n).map(|j| j as f64 / d).collect())
    }

    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::invalid(
                "speed lattice",
                format!("needs at least 2 classes, got {}", v.len()),
            ));
        }
        if v[0] != 0.0 || *v.last().unwrap() != 1.0 || v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "speed lattice",
                format!("speeds must rise strictly from 0 to 1, got {v:?}"),
            ));
        }
        Ok(SpeedLattice { v })
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn speeds(&self) -> &[f64] {
        &self.v
    }

    pub fn speed(&self, j: usize) -> f64 {
        self.v[j]
    }
}

/// Road of m unit cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoadGeometry {
    m: usize,
}

impl RoadGeometry {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("road geometry", "needs at least 1 cell"));
        }
        Ok(RoadGeometry { m })
    }

    pub fn cells(&self) -> usize {
        self.m
    }
}

/// The m x n matrix of distribution values, row-major by cell, plus the
/// current time. Construction validates admissibility within
/// [`ADMISSIBILITY_TOL`]; stored values are kept as given, never clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    m: usize,
    n: usize,
    t: f64,
    f: Vec<f64>,
}

impl KineticState {
    pub fn new(m: usize, n: usize, t: f64, f: Vec<f64>) -> Result<Self> {
        if m == 0 || n < 2 {
            return Err(Error::invalid(
                "state shape",
                format!("m = {m}, n = {n}; need m >= 1 and n >= 2"),
            ));
        }
        if f.len() != m * n {
            return Err(Error::invalid(
                "state shape",
                format!(
                    "{} entries for {m} cells x {n} classes = {}",
                    f.len(),
                    m * n
                ),
            ));
        }
        if !t.is_finite() {
            return Err(Error::invalid("state time", format!("t = {t}")));
        }
        let state = KineticState { m, n, t, f };
        state.check_admissible()?;
        Ok(state)
    }

    pub fn zero(m: usize, n: usize) -> Result<Self> {
        Self::new(m, n, 0.0, vec![0.0; m * n])
    }

    /// Every cell at density rho, split uniformly over the speed classes.
    pub fn uniform_density(m: usize, n: usize, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(
                "state density",
                format!("rho = {rho} outside [0, 1]"),
            ));
        }
        Self::new(m, n, 0.0, vec![rho / n as f64; m * n])
    }

    fn check_admissible(&self) -> Result<()> {
        for i in 0..self.m {
            let mut sum = 0.0;
            for j in 0..self.n {
                let x = self.get(i, j);
                if !(-ADMISSIBILITY_TOL..=1.0 + ADMISSIBILITY_TOL).contains(&x) {
                    return Err(Error::invalid(
                        "state",
                        format!("f[{i}][{j}] = {x} outside [0, 1]"),
                    ));
                }
                sum += x;
            }
            if sum > 1.0 + ADMISSIBILITY_TOL {
                return Err(Error::invalid(
                    "state",
                    format!("cell {i} occupancy {sum} exceeds 1"),
                ));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.f[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.f[i * self.n..(i + 1) * self.n]
    }

    pub fn densities(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.row(i).iter().sum()).collect()
    }

    /// True when both states hold bitwise identical distribution values,
    /// regardless of their time stamps.
    pub fn distribution_eq(&self, other: &KineticState) -> bool {
        self.m == other.m && self.n == other.n && self.f == other.f
    }
}

/// l1 distance between the distribution values of two states of equal shape.
pub fn l1_distance(a: &KineticState, b: &KineticState) -> f64 {
    assert_eq!((a.m, a.n), (b.m, b.n), "state shapes differ");
    a.f.iter().zip(&b.f).map(|(x, y)| (x - y).abs()).sum()
}

/// Per-cell density, flux, mean speed, and speed variance. Mean speed is
/// `None` on empty cells; it is never emitted as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroFields {
    pub rho: Vec<f64>,
    pub q: Vec<f64>,
    pub u: Vec<Option<f64>>,
    pub theta: Vec<f64>,
}

pub fn macroscopic_fields(state: &KineticState, lattice: &SpeedLattice) -> MacroFields {
    assert_eq!(state.n(), lattice.n(), "lattice size differs from state");
    let m = state.m();
    let mut rho = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m);
    let mut theta = Vec::with_capacity(m);
    for i in 0..m {
        let row = state.row(i);
        let r: f64 = row.iter().sum();
        let qq: f64 = row.iter().zip(lattice.speeds()).map(|(f, v)| v * f).sum();
        rho.push(r);
        q.push(qq);
        if r > 0.0 {
            let mean = qq / r;
            let var: f64 = row
                .iter()
                .zip(lattice.speeds())
                .map(|(f, v)| (v - mean) * (v - mean) * f)
                .sum::<f64>()
                / r;
            u.push(Some(mean));
            theta.push(var);
        } else {
            u.push(None);
            theta.push(0.0);
        }
    }
    MacroFields { rho, q, u, theta }
}

/// Total dimensionless mass sum_ij f_ij, in [0, m].
pub fn total_vehicles(state: &KineticState) -> f64 {
    state.values().iter().sum()
}

/// Physical scales used to convert a dimensional setup into the
/// dimensionless one: cell length ell (m), top speed vmax (m/s), cell
/// capacity nmax (vehicles), and the physical interaction frequency
/// coefficient. The dimensionless rate is
///
///   eta0 = ell nmax / (2 vmax) * eta0_phys
///
/// and times and speeds scale as t* = (vmax/ell) t, v* = v/vmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalUnits {
    pub ell: f64,
    pub vmax: f64,
    pub nmax: f64,
    pub eta0_phys: f64,
}

impl PhysicalUnits {
    pub fn new(ell: f64, vmax: f64, nmax: f64, eta0_phys: f64) -> Result<Self> {
        for (name, v) in [
            ("ell", ell),
            ("vmax", vmax),
            ("nmax", nmax),
            ("eta0_phys", eta0_phys),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "physical units",
                    format!("{name} = {v} must be strictly positive"),
                ));
            }
        }
        Ok(PhysicalUnits {
            ell,
            vmax,
            nmax,
            eta0_phys,
        })
    }

    pub fn dimensionless_eta0(&self) -> f64 {
        self.ell * self.nmax / (2.0 * self.vmax) * self.eta0_phys
    }

    pub fn dimensionless_time(&self, t: f64) -> f64 {
        self.vmax / self.ell * t
    }

    pub fn dimensionless_speed(&self, v: f64) -> f64 {
        v / self.vmax
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_lattice_endpoints_and_spacing() {
        let l = SpeedLattice::uniform(2).unwrap();
        assert_eq!(l.speeds(), &[0.0, 1.0]);
        let l = SpeedLattice::uniform(6).unwrap();
        assert_eq!(l.speeds(), &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert!(SpeedLattice::uniform(1).is_err());
    }

    #[test]
    fn lattice_rejects_bad_orderings() {
        assert!(SpeedLattice::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(SpeedLattice::new(vec![0.1, 1.0]).is_err());
        assert!(SpeedLattice::new(vec![0.0, 0.9]).is_err());
    }

    #[test]
    fn geometry_needs_a_cell() {
        assert!(RoadGeometry::new(0).is_err());
        assert_eq!(RoadGeometry::new(10).unwrap().cells(), 10);
    }

    #[test]
    fn state_validation_catches_shape_and_bounds() {
        assert!(KineticState::new(2, 2, 0.0, vec![0.0; 3]).is_err());
        assert!(KineticState::new(1, 2, 0.0, vec![1.5, 0.0]).is_err());
        assert!(KineticState::new(1, 2, 0.0, vec![-1e-6, 0.0]).is_err());
        assert!(KineticState::new(1, 2, 0.0, vec![0.7, 0.7]).is_err());
        assert!(KineticState::new(1, 2, 0.0, vec![0.5, 0.5]).is_ok());
        assert!(KineticState::new(1, 2, f64::NAN, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn moments_on_empty_and_single_class_cells() {
        let lattice = SpeedLattice::uniform(2).unwrap();
        let s = KineticState::zero(3, 2).unwrap();
        let mf = macroscopic_fields(&s, &lattice);
        assert_eq!(mf.rho, vec![0.0; 3]);
        assert_eq!(mf.q, vec![0.0; 3]);
        assert_eq!(mf.u, vec![None; 3]);
        assert_eq!(mf.theta, vec![0.0; 3]);

        let s = KineticState::new(1, 2, 0.0, vec![0.0, 0.5]).unwrap();
        let mf = macroscopic_fields(&s, &lattice);
        assert_eq!(mf.rho[0], 0.5);
        assert_eq!(mf.q[0], 0.5);
        assert_eq!(mf.u[0], Some(1.0));
        assert_eq!(mf.theta[0], 0.0);
    }

    #[test]
    fn moments_on_even_two_class_split() {
        let lattice = SpeedLattice::uniform(2).unwrap();
        let s = KineticState::new(1, 2, 0.0, vec![0.25, 0.25]).unwrap();
        let mf = macroscopic_fields(&s, &lattice);
        assert_eq!(mf.rho[0], 0.5);
        assert_eq!(mf.u[0], Some(0.5));
        assert!((mf.theta[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn total_mass_counts_everything() {
        assert_eq!(total_vehicles(&KineticState::zero(4, 3).unwrap()), 0.0);
        let full = KineticState::new(3, 2, 0.0, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(total_vehicles(&full), 3.0);
    }

    #[test]
    fn unit_conversions() {
        let u = PhysicalUnits::new(2.0, 1.0, 4.0, 1.0).unwrap();
        assert_eq!(u.dimensionless_eta0(), 4.0);
        assert_eq!(u.dimensionless_time(1.0), 0.5);
        assert_eq!(u.dimensionless_speed(0.5), 0.5);
        let id = PhysicalUnits::new(2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(id.dimensionless_eta0(), 1.0);
        assert!(PhysicalUnits::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(PhysicalUnits::new(1.0, -2.0, 1.0, 1.0).is_err());
    }

    fn admissible_state(m: usize, n: usize) -> impl Strategy<Value = KineticState> {
        (
            proptest::collection::vec(0.0..1.0f64, m * n),
            proptest::collection::vec(0.0..1.0f64, m),
        )
            .prop_map(move |(w, rhos)| {
                let mut f = vec![0.0; m * n];
                for i in 0..m {
                    let row = &w[i * n..(i + 1) * n];
                    let s: f64 = row.iter().sum();
                    for j in 0..n {
                        f[i * n + j] = if s < 1e-12 {
                            rhos[i] / n as f64
                        } else {
                            row[j] * rhos[i] / s
                        };
                    }
                }
                KineticState::new(m, n, 0.0, f).unwrap()
            })
    }

    proptest! {
        #[test]
        fn moment_bounds_hold(state in admissible_state(5, 4)) {
            let lattice = SpeedLattice::uniform(4).unwrap();
            let mf = macroscopic_fields(&state, &lattice);
            for i in 0..5 {
                prop_assert!(mf.rho[i] >= 0.0 && mf.rho[i] <= 1.0 + 1e-12);
                prop_assert!(mf.q[i] >= 0.0 && mf.q[i] <= mf.rho[i] + 1e-12);
                if let Some(u) = mf.u[i] {
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&u));
                }
                prop_assert!(mf.theta[i] >= 0.0 && mf.theta[i] <= 0.25 + 1e-12);
            }
        }

        #[test]
        fn density_and_flux_are_linear(a in admissible_state(3, 3), b in admissible_state(3, 3)) {
            let lattice = SpeedLattice::uniform(3).unwrap();
            let mix: Vec<f64> = a.values().iter().zip(b.values())
                .map(|(x, y)| 0.5 * x + 0.5 * y).collect();
            let mix = KineticState::new(3, 3, 0.0, mix).unwrap();
            let (ma, mb, mm) = (
                macroscopic_fields(&a, &lattice),
                macroscopic_fields(&b, &lattice),
                macroscopic_fields(&mix, &lattice),
            );
            for i in 0..3 {
                prop_assert!((mm.rho[i] - 0.5 * (ma.rho[i] + mb.rho[i])).abs() < 1e-12);
                prop_assert!((mm.q[i] - 0.5 * (ma.q[i] + mb.q[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn total_mass_matches_density_sum(state in admissible_state(6, 3)) {
            let lattice = SpeedLattice::uniform(3).unwrap();
            let mf = macroscopic_fields(&state, &lattice);
            let via_fields: f64 = mf.rho.iter().sum();
            prop_assert!((total_vehicles(&state) - via_fields).abs() < 1e-12);
        }
    }
}
