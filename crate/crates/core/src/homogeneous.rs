//! Spatially homogeneous relaxation and its long-time limits.
//!
//! On a uniform road every cell carries the same distribution f = (f_1..f_n),
//! the limiter sees equal densities on both sides, and the anticipated
//! density equals the current mass s = sum_j f_j. The evolution reduces to
//!
//!   df_j/dt = eta0 s ( sum_{h,k} A[h][k][j] f_h f_k - f_j s ),
//!
//! with the table of games built from (alpha, rho~ = s, Phi(s, s)). The mass
//! is conserved, so trajectories stay on the simplex slice sum f = rho and
//! relax toward a steady distribution whose moments
//!
//!   q(rho) = sum_j v_j f_j,   u = q / rho,   theta = sum_j (v_j - u)^2 f_j / rho
//!
//! trace the fundamental diagram of the model as rho sweeps [0, 1].
//!
//! Steady states are found by integrating the relaxation with the explicit
//! scheme and, once the residual is small, polishing the iterate with a
//! damped Newton step on the first n - 1 components plus the mass
//! constraint. Some attractors sit on faces of the simplex and are reached
//! only algebraically; candidates obtained by zeroing near-vanishing
//! components are therefore also tested. A candidate replaces the iterate
//! only when the exact residual of the full right-hand side drops below the
//! requested tolerance, so the polish can never invent a spurious root.

use crate::error::{Error, Result};
use crate::interaction::{bilinear_gain, flux_limiter, game_table};
use crate::state::SpeedLattice;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Distribution of one cell over the speed classes, the state of the
/// homogeneous system.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousState {
    f: Vec<f64>,
}

impl HomogeneousState {
    pub fn new(f: Vec<f64>) -> Result<Self> {
        if f.len() < 2 {
            return Err(Error::invalid(
                "homogeneous state",
                "needs at least 2 classes",
            ));
        }
        let mut sum = 0.0;
        for (j, x) in f.iter().enumerate() {
            if !x.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(x) {
                return Err(Error::invalid(
                    "homogeneous state",
                    format!("f[{j}] = {x} outside [0, 1]"),
                ));
            }
            sum += x;
        }
        if sum > 1.0 + 1e-12 {
            return Err(Error::invalid(
                "homogeneous state",
                format!("total mass {sum} exceeds 1"),
            ));
        }
        Ok(HomogeneousState { f })
    }

    /// Mass rho divided evenly over the classes.
    pub fn uniform_split(n: usize, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(
                "homogeneous state",
                format!("rho = {rho} outside [0, 1]"),
            ));
        }
        Self::new(vec![rho / n as f64; n])
    }

    /// Mass rho split over the classes with seeded random weights.
    pub fn random_split(n: usize, rho: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(
                "homogeneous state",
                format!("rho = {rho} outside [0, 1]"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        let f = if s < 1e-12 {
            vec![rho / n as f64; n]
        } else {
            w.iter().map(|x| x * rho / s).collect()
        };
        Self::new(f)
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn rho(&self) -> f64 {
        self.f.iter().sum()
    }
}

/// Right-hand side of the homogeneous relaxation at the given distribution.
/// The table of games is rebuilt from the current mass, so this is the exact
/// tendency of the state and the reference for every residual test.
/// Individual entries may lie slightly outside [0, 1] (refinement iterates
/// do); only the total mass must stay within [0, 1].
pub fn homogeneous_rhs(
    f: &[f64],
    lattice: &SpeedLattice,
    alpha: f64,
    eta0: f64,
) -> Result<Vec<f64>> {
    let n = lattice.n();
    if f.len() != n {
        return Err(Error::invalid(
            "homogeneous state",
            format!("{} classes for a lattice with {n}", f.len()),
        ));
    }
    if !(eta0 > 0.0 && eta0.is_finite()) {
        return Err(Error::invalid(
            "interaction rate",
            format!("eta0 = {eta0} must be strictly positive"),
        ));
    }
    let s: f64 = f.iter().sum();
    let phi = flux_limiter(s, s)?;
    let table = game_table(lattice, alpha, s, phi)?;
    let eta = eta0 * s;
    let g = bilinear_gain(&table, f, f);
    Ok((0..n).map(|j| eta * (g[j] - f[j] * s)).collect())
}

fn residual_of(f: &[f64], lattice: &SpeedLattice, alpha: f64, eta0: f64) -> Result<f64> {
    Ok(homogeneous_rhs(f, lattice, alpha, eta0)?
        .iter()
        .map(|x| x.abs())
        .sum())
}

/// Choice of the initial split of the mass over the speed classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialSplit {
    Uniform,
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateOptions {
    /// l1 residual below which the state counts as steady.
    pub tol: f64,
    /// Cap on explicit relaxation steps.
    pub max_steps: u64,
    /// Step size; defaults to the profile default for the given eta0.
    pub dt: Option<f64>,
    pub init: InitialSplit,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions {
            tol: 1e-10,
            max_steps: 10_000_000,
            dt: None,
            init: InitialSplit::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateOutcome {
    pub state: HomogeneousState,
    /// Exact l1 residual of the returned state.
    pub residual: f64,
    /// Explicit relaxation steps taken.
    pub steps: u64,
    pub converged: bool,
    /// |final mass - initial mass|.
    pub mass_drift: f64,
    /// l1 norm of one extra Newton direction from the returned state; zero
    /// at exact roots, large where the iteration stalled short of one.
    pub state_error: f64,
    /// Whether the returned state came from the Newton or face polish
    /// rather than from plain relaxation.
    pub polished: bool,
}

/// Relax a uniform road of density rho under road condition alpha until the
/// distribution stops changing, and certify the limit by its exact residual.
pub fn steady_state(
    alpha: f64,
    rho: f64,
    lattice: &SpeedLattice,
    eta0: f64,
    opts: &SteadyStateOptions,
) -> Result<SteadyStateOutcome> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(
            "density",
            format!("rho = {rho} outside [0, 1]"),
        ));
    }
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(Error::invalid(
            "steady state options",
            format!("tol = {} must be strictly positive", opts.tol),
        ));
    }
    if !(eta0 > 0.0 && eta0.is_finite()) {
        return Err(Error::invalid(
            "interaction rate",
            format!("eta0 = {eta0} must be strictly positive"),
        ));
    }
    let bound = 1.0 / (1.0 + 2.0 * eta0);
    let dt = opts.dt.unwrap_or(0.45 * bound);
    if dt.is_nan() || dt <= 0.0 || dt >= bound {
        return Err(Error::UnstableStep { dt, bound });
    }

    let n = lattice.n();
    let init = match opts.init {
        InitialSplit::Uniform => HomogeneousState::uniform_split(n, rho)?,
        InitialSplit::Seeded(seed) => HomogeneousState::random_split(n, rho, seed)?,
    };
    let mut f = init.f().to_vec();
    let rho_target: f64 = f.iter().sum();

    if rho_target == 0.0 {
        return Ok(SteadyStateOutcome {
            state: HomogeneousState::new(f)?,
            residual: 0.0,
            steps: 0,
            converged: true,
            mass_drift: 0.0,
            state_error: 0.0,
            polished: false,
        });
    }

    // The blended density and the limiter are constant along the trajectory
    // up to mass drift, so the table is hoisted out of the loop; residuals
    // that matter are re-evaluated with the exact state-dependent table.
    let table = game_table(lattice, alpha, rho, flux_limiter(rho, rho)?)?;
    let mut steps: u64 = 0;
    let (f, residual, polished, converged) = loop {
        let s: f64 = f.iter().sum();
        let eta = eta0 * s;
        let g = bilinear_gain(&table, &f, &f);
        let residual: f64 = (0..n).map(|j| (eta * (g[j] - f[j] * s)).abs()).sum();

        if residual < opts.tol {
            let exact = residual_of(&f, lattice, alpha, eta0)?;
            if exact < opts.tol {
                break (f, exact, false, true);
            }
        }

        let at_cap = steps >= opts.max_steps;
        let milestone = steps >= 1024 && steps.is_power_of_two();
        let gate = if steps >= 65536 { 1e-1 } else { 1e-3 };
        if at_cap || (milestone && residual < gate) {
            if let Some((cand, res)) = polish(&f, lattice, alpha, eta0, rho_target, opts.tol) {
                break (cand, res, true, true);
            }
            if at_cap {
                let exact = residual_of(&f, lattice, alpha, eta0).unwrap_or(residual);
                break (f, exact, false, false);
            }
        }

        let keep = 1.0 - dt * eta * s;
        for j in 0..n {
            f[j] = f[j] * keep + dt * eta * g[j];
        }
        steps += 1;
    };

    let mass_drift = (f.iter().sum::<f64>() - rho_target).abs();
    let state_error =
        newton_direction_norm(&f, lattice, alpha, eta0, rho_target).unwrap_or(residual);
    Ok(SteadyStateOutcome {
        state: HomogeneousState::new(f)?,
        residual,
        steps,
        converged,
        mass_drift,
        state_error,
        polished,
    })
}

/// Thresholds for zeroing near-vanishing components, relative to the mass.
const FACE_LADDER: [f64; 7] = [1e-12, 1e-9, 1e-6, 1e-3, 3e-2, 1e-1, 3e-1];

/// Try to finish the iterate off: one damped Newton solve, then projections
/// of the result (or of the iterate) onto nearby faces of the simplex. Every
/// candidate is scored by its exact residual and the best one is returned
/// only if it meets the tolerance.
fn polish(
    f: &[f64],
    lattice: &SpeedLattice,
    alpha: f64,
    eta0: f64,
    rho_target: f64,
    tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let newton = damped_newton(f, lattice, alpha, eta0, rho_target);
    let base = newton.clone().unwrap_or_else(|| f.to_vec());
    if let Some(x) = newton {
        candidates.push(x);
    }
    for tau in FACE_LADDER {
        let cut = tau * rho_target;
        let mut proj: Vec<f64> = base
            .iter()
            .map(|x| if x.abs() < cut { 0.0 } else { *x })
            .collect();
        restore_mass(&mut proj, rho_target);
        candidates.push(proj);
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for cand in candidates {
        if let Ok(res) = residual_of(&cand, lattice, alpha, eta0) {
            if res < tol && best.as_ref().is_none_or(|(_, b)| res < *b) {
                best = Some((cand, res));
            }
        }
    }
    best
}

/// Clamp to [0, 1] and put the mass defect on the largest component. Exact
/// for single-component states; a one-rounding adjustment otherwise.
fn restore_mass(f: &mut [f64], rho_target: f64) {
    for x in f.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    let sum: f64 = f.iter().sum();
    let am = f
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    f[am] = (f[am] + (rho_target - sum)).max(0.0);
}

/// Damped Newton iteration on F = (rhs_1 .. rhs_{n-1}, sum f - rho_target).
/// The dropped component is redundant because the interactions conserve
/// mass. Iterates may leave the box [0, 1]^n; only the final iterate is
/// clamped and rebalanced. Returns None when the function cannot even be
/// evaluated at the start.
fn damped_newton(
    f0: &[f64],
    lattice: &SpeedLattice,
    alpha: f64,
    eta0: f64,
    rho_target: f64,
) -> Option<Vec<f64>> {
    let n = f0.len();
    let eval = |x: &[f64]| -> Option<Vec<f64>> {
        let rhs = homogeneous_rhs(x, lattice, alpha, eta0).ok()?;
        let mut fv = rhs[..n - 1].to_vec();
        fv.push(x.iter().sum::<f64>() - rho_target);
        Some(fv)
    };
    let mut x = f0.to_vec();
    let mut fx = eval(&x)?;
    let mut norm: f64 = fx.iter().map(|v| v.abs()).sum();

    for _ in 0..60 {
        if norm < 1e-15 {
            break;
        }
        let jac = match newton_jacobian(&x, lattice, alpha, eta0) {
            Some(j) => j,
            None => break,
        };
        let rhs: Vec<f64> = fx.iter().map(|v| -v).collect();
        let delta = match solve_regularized(&jac, &rhs, n) {
            Some(d) => d,
            None => break,
        };
        let mut accepted = false;
        let mut c = 1.0;
        for _ in 0..6 {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + c * d).collect();
            if let Some(ft) = eval(&trial) {
                let tn: f64 = ft.iter().map(|v| v.abs()).sum();
                if tn < (1.0 - 0.1 * c) * norm {
                    x = trial;
                    fx = ft;
                    norm = tn;
                    accepted = true;
                    break;
                }
            }
            c *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    restore_mass(&mut x, rho_target);
    Some(x)
}

/// Jacobian of F with the table frozen at the current mass. Moves tangent
/// to the mass constraint leave the table unchanged, so the frozen table is
/// exact there; the mass row itself is linear.
fn newton_jacobian(x: &[f64], lattice: &SpeedLattice, alpha: f64, eta0: f64) -> Option<Vec<f64>> {
    let n = x.len();
    let s: f64 = x.iter().sum();
    let phi = flux_limiter(s, s).ok()?;
    let table = game_table(lattice, alpha, s, phi).ok()?;
    let g = bilinear_gain(&table, x, x);
    let mut jac = vec![0.0; n * n];
    for j in 0..n - 1 {
        for l in 0..n {
            let mut dg = 0.0;
            for (k, &xk) in x.iter().enumerate() {
                dg += table.get(l, k, j) * xk;
            }
            for (h, &xh) in x.iter().enumerate() {
                dg += table.get(h, l, j) * xh;
            }
            let kron = if j == l { s } else { 0.0 };
            jac[j * n + l] = eta0 * ((g[j] - x[j] * s) + s * (dg - kron - x[j]));
        }
    }
    for l in 0..n {
        jac[(n - 1) * n + l] = 1.0;
    }
    Some(jac)
}

/// Norm of one extra Newton direction from a finished state; the residual
/// itself is the fallback when the linear solve fails outright.
fn newton_direction_norm(
    f: &[f64],
    lattice: &SpeedLattice,
    alpha: f64,
    eta0: f64,
    rho_target: f64,
) -> Option<f64> {
    let n = f.len();
    let rhs_full = homogeneous_rhs(f, lattice, alpha, eta0).ok()?;
    let mut fv = rhs_full[..n - 1].to_vec();
    fv.push(f.iter().sum::<f64>() - rho_target);
    let jac = newton_jacobian(f, lattice, alpha, eta0)?;
    let neg: Vec<f64> = fv.iter().map(|v| -v).collect();
    let delta = solve_regularized(&jac, &neg, n)?;
    Some(delta.iter().map(|v| v.abs()).sum())
}

/// Dense solve with partial pivoting; on a vanishing pivot retry with a
/// Tikhonov shift lambda I, escalating lambda until the factorization goes
/// through.
fn solve_regularized(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    if let Some(x) = solve_dense(a, b, n) {
        return Some(x);
    }
    let max_abs = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return if b.iter().all(|v| *v == 0.0) {
            Some(vec![0.0; n])
        } else {
            None
        };
    }
    let mut lambda = 1e-10 * max_abs;
    while lambda <= 1e-2 * max_abs {
        let mut shifted = a.to_vec();
        for i in 0..n {
            shifted[i * n + i] += lambda;
        }
        if let Some(x) = solve_dense(&shifted, b, n) {
            return Some(x);
        }
        lambda *= 100.0;
    }
    None
}

/// Gaussian elimination with partial pivoting on a row-major n x n system.
fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if m[row * n + col].abs() > m[piv * n + col].abs() {
                piv = row;
            }
        }
        if m[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            rhs.swap(col, piv);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for k in col + 1..n {
            acc -= m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Long-time moments over a density grid for one road condition.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalDiagram {
    pub alpha: f64,
    pub rho: Vec<f64>,
    pub q: Vec<f64>,
    /// Mean speed, undefined on an empty road.
    pub u: Vec<Option<f64>>,
    pub theta: Vec<f64>,
    pub converged: Vec<bool>,
    pub residuals: Vec<f64>,
    pub steps: Vec<u64>,
    pub state_errors: Vec<f64>,
}

impl FundamentalDiagram {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }

    /// First grid point that failed to converge, as (rho, residual, steps).
    pub fn first_unconverged(&self) -> Option<(f64, f64, u64)> {
        self.converged
            .iter()
            .position(|c| !*c)
            .map(|i| (self.rho[i], self.residuals[i], self.steps[i]))
    }
}

fn moments(f: &[f64], lattice: &SpeedLattice) -> (f64, f64, Option<f64>, f64) {
    let rho: f64 = f.iter().sum();
    let q: f64 = f
        .iter()
        .enumerate()
        .map(|(j, x)| lattice.speed(j) * x)
        .sum();
    if rho > 0.0 {
        let u = q / rho;
        let theta = f
            .iter()
            .enumerate()
            .map(|(j, x)| (lattice.speed(j) - u).powi(2) * x)
            .sum::<f64>()
            / rho;
        (rho, q, Some(u), theta)
    } else {
        (rho, q, None, 0.0)
    }
}

/// Sweep the density grid in parallel and collect the steady moments.
pub fn fundamental_diagram(
    alpha: f64,
    rho_grid: &[f64],
    lattice: &SpeedLattice,
    eta0: f64,
    opts: &SteadyStateOptions,
) -> Result<FundamentalDiagram> {
    for (i, r) in rho_grid.iter().enumerate() {
        if !(0.0..=1.0).contains(r) {
            return Err(Error::invalid(
                "density grid",
                format!("rho[{i}] = {r} outside [0, 1]"),
            ));
        }
    }
    let outcomes: Vec<SteadyStateOutcome> = rho_grid
        .par_iter()
        .map(|&rho| steady_state(alpha, rho, lattice, eta0, opts))
        .collect::<Result<Vec<_>>>()?;

    let k = rho_grid.len();
    let mut d = FundamentalDiagram {
        alpha,
        rho: Vec::with_capacity(k),
        q: Vec::with_capacity(k),
        u: Vec::with_capacity(k),
        theta: Vec::with_capacity(k),
        converged: Vec::with_capacity(k),
        residuals: Vec::with_capacity(k),
        steps: Vec::with_capacity(k),
        state_errors: Vec::with_capacity(k),
    };
    for out in outcomes {
        let (rho, q, u, theta) = moments(out.state.f(), lattice);
        d.rho.push(rho);
        d.q.push(q);
        d.u.push(u);
        d.theta.push(theta);
        d.converged.push(out.converged);
        d.residuals.push(out.residual);
        d.steps.push(out.steps);
        d.state_errors.push(out.state_error);
    }
    Ok(d)
}

/// Density of the speed-variance peak on the grid rho_k = k resolution.
/// The scan is ascending and ties keep the earlier peak; a peak at the very
/// first positive grid point means the variance only decays, and the
/// critical density is reported as 0.
pub fn critical_density(
    alpha: f64,
    lattice: &SpeedLattice,
    eta0: f64,
    resolution: f64,
) -> Result<f64> {
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(Error::invalid(
            "resolution",
            format!("{resolution} outside (0, 0.5]"),
        ));
    }
    let k_max = (1.0 / resolution + 1e-9).floor() as usize;
    let grid: Vec<f64> = (1..=k_max)
        .map(|k| (k as f64 * resolution).min(1.0))
        .collect();
    let diagram = fundamental_diagram(alpha, &grid, lattice, eta0, &SteadyStateOptions::default())?;
    if let Some((rho, residual, steps)) = diagram.first_unconverged() {
        return Err(Error::NoConvergence {
            rho,
            alpha,
            residual,
            steps,
            tol: SteadyStateOptions::default().tol,
        });
    }
    let mut best = 0usize;
    for k in 1..diagram.len() {
        if diagram.theta[k] > diagram.theta[best] {
            best = k;
        }
    }
    if best == 0 {
        Ok(0.0)
    } else {
        Ok(diagram.rho[best])
    }
}
