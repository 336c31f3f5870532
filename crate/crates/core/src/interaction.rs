//! Microscopic interaction machinery: flux limiter, fictitious density,
//! interaction rate, per-cell tables of games, and gain/loss operators.
//!
//! Transfer into a downstream cell is capped by its free space:
//!
//!   Phi(r, s) = (1 - s)/r  if r + s > 1,  else 1
//!
//! so that Phi r <= 1 - s whenever the two cells together exceed capacity.
//!
//! Drivers react to an anticipation-weighted density blend
//!
//!   rho~_i = (1 - beta) rho_i + beta rho_{i+1}   (rho~_m = rho_m)
//!
//! and interact in binary encounters at rate eta(i) = eta0 rho_i. A table of
//! games A[h][k][j] holds the probability that a candidate at speed v_h that
//! meets a field vehicle at v_k leaves at v_j. Each (h, k) row is a
//! probability vector built from three behavioral rules:
//!
//!   - acceleration by one class with probability alpha (1 - rho~) Phi,
//!   - braking to the slower partner's class, scaled by Phi,
//!   - a full stop with the remaining probability when the road ahead
//!     is blocked (factor 1 - Phi).
//!
//! The resulting per-cell gain and loss are
//!
//!   G_ij = eta(i) sum_{h,k} A[h][k][j] f_ih f_ik,   L_ij = eta(i) rho_i,
//!
//! and sum_j (G_ij - f_ij L_ij) = 0: interactions shuffle speeds without
//! creating or destroying vehicles.

use crate::error::{Error, Result};
use crate::state::{KineticState, SpeedLattice};

/// Tolerance for floating point drift on probability entries; anything
/// further out of [0, 1] indicates a construction bug and panics.
const TABLE_TOL: f64 = 1e-12;

/// Per-cell road conditions alpha_i in [0, 1], anticipation beta in [0, 1],
/// and the rate coefficient eta0 > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentProfile {
    alpha: Vec<f64>,
    beta: f64,
    eta0: f64,
}

impl EnvironmentProfile {
    pub fn new(alpha: Vec<f64>, beta: f64, eta0: f64) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("environment profile", "alpha list is empty"));
        }
        for (i, a) in alpha.iter().enumerate() {
            if !(0.0..=1.0).contains(a) {
                return Err(Error::invalid(
                    "environment profile",
                    format!("alpha[{i}] = {a} outside [0, 1]"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::invalid(
                "environment profile",
                format!("beta = {beta} outside [0, 1]"),
            ));
        }
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::invalid(
                "environment profile",
                format!("eta0 = {eta0} must be strictly positive"),
            ));
        }
        Ok(EnvironmentProfile { alpha, beta, eta0 })
    }

    pub fn uniform(m: usize, alpha: f64, beta: f64, eta0: f64) -> Result<Self> {
        Self::new(vec![alpha; m], beta, eta0)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    /// Uniform bound on the interaction rate: eta(i) = eta0 rho_i <= eta0.
    pub fn eta_bar(&self) -> f64 {
        self.eta0
    }

    /// Strict upper bound on admissible time steps, 1/(1 + 2 eta0).
    pub fn stability_bound(&self) -> f64 {
        1.0 / (1.0 + 2.0 * self.eta0)
    }

    /// Default time step: 90% of the bound times a 0.5 safety factor.
    pub fn default_dt(&self) -> f64 {
        0.45 / (1.0 + 2.0 * self.eta0)
    }
}

/// Fraction of upstream vehicles allowed across an interface, from the free
/// space of the destination cell.
pub fn flux_limiter(rho_here: f64, rho_next: f64) -> Result<f64> {
    for (name, r) in [("rho_here", rho_here), ("rho_next", rho_next)] {
        if !(-TABLE_TOL..=1.0 + TABLE_TOL).contains(&r) {
            return Err(Error::invalid(
                "flux limiter argument",
                format!("{name} = {r} outside [0, 1]"),
            ));
        }
    }
    let r = rho_here.clamp(0.0, 1.0);
    let s = rho_next.clamp(0.0, 1.0);
    // r + s > 1 forces r > 0, so the quotient branch never divides by zero.
    if r + s > 1.0 {
        Ok((1.0 - s) / r)
    } else {
        Ok(1.0)
    }
}

/// Anticipated density rho~_i; the last cell sees its own density.
pub fn fictitious_density(rho: &[f64], beta: f64, i: usize) -> Result<f64> {
    if i >= rho.len() {
        return Err(Error::IndexOutOfRange {
            what: "cell",
            index: i,
            size: rho.len(),
        });
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(
            "anticipation",
            format!("beta = {beta} outside [0, 1]"),
        ));
    }
    if i + 1 == rho.len() {
        Ok(rho[i])
    } else {
        Ok((1.0 - beta) * rho[i] + beta * rho[i + 1])
    }
}

/// Binary encounter rate eta0 rho_i.
pub fn interaction_rate(eta0: f64, rho_i: f64) -> f64 {
    eta0 * rho_i
}

/// Table of games for one cell: A[h][k][j] is the probability that a
/// candidate at v_h meeting a field vehicle at v_k leaves at v_j. Stored
/// flattened as a[(h n + k) n + j].
#[derive(Debug, Clone, PartialEq)]
pub struct GameTableSlice {
    n: usize,
    a: Vec<f64>,
}

impl GameTableSlice {
    /// Wrap raw entries, validating that every (h, k) row is a probability
    /// vector. Mostly useful for tests and external tables.
    pub fn new(n: usize, a: Vec<f64>) -> Result<Self> {
        if n < 2 || a.len() != n * n * n {
            return Err(Error::invalid(
                "game table",
                format!("{} entries for n = {n}", a.len()),
            ));
        }
        let t = GameTableSlice { n, a };
        for h in 0..n {
            for k in 0..n {
                let row = t.row(h, k);
                if row
                    .iter()
                    .any(|p| !(-TABLE_TOL..=1.0 + TABLE_TOL).contains(p))
                {
                    return Err(Error::invalid(
                        "game table",
                        format!("row ({h}, {k}) has entries outside [0, 1]"),
                    ));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > TABLE_TOL {
                    return Err(Error::invalid(
                        "game table",
                        format!("row ({h}, {k}) sums to {s}, not 1"),
                    ));
                }
            }
        }
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, h: usize, k: usize, j: usize) -> f64 {
        self.a[(h * self.n + k) * self.n + j]
    }

    pub fn row(&self, h: usize, k: usize) -> &[f64] {
        let base = (h * self.n + k) * self.n;
        &self.a[base..base + self.n]
    }
}

/// Build the table of games for one cell from its road condition alpha, the
/// anticipated density rho~, and the limiter Phi toward the next cell.
///
/// Candidate h against field k:
///   h < k (slower candidate):   accelerate one class or keep speed; a
///                               blocked road (1 - Phi) forces a stop.
///   h > k (faster candidate):   pass with the acceleration probability,
///                               else queue at the field speed or stop.
///   h = k (equal speeds):       mix one class down, stay, one class up.
/// Rows accumulate, so coinciding targets (small n) merge correctly.
pub fn game_table(
    lattice: &SpeedLattice,
    alpha: f64,
    rho_tilde: f64,
    phi_next: f64,
) -> Result<GameTableSlice> {
    for (name, v) in [
        ("alpha", alpha),
        ("rho_tilde", rho_tilde),
        ("phi", phi_next),
    ] {
        if !(-TABLE_TOL..=1.0 + TABLE_TOL).contains(&v) {
            return Err(Error::invalid(
                "game table parameter",
                format!("{name} = {v} outside [0, 1]"),
            ));
        }
    }
    let alpha = alpha.clamp(0.0, 1.0);
    let rt = rho_tilde.clamp(0.0, 1.0);
    let phi = phi_next.clamp(0.0, 1.0);

    let n = lattice.n();
    let mut a = vec![0.0; n * n * n];
    // Probability of gaining one speed class.
    let acc = alpha * (1.0 - rt) * phi;
    // Probability of keeping the current class when interacting across
    // different speeds.
    let keep = (1.0 - alpha * (1.0 - rt)) * phi;

    for h in 0..n {
        for k in 0..n {
            let base = (h * n + k) * n;
            let row = &mut a[base..base + n];
            if h < k {
                if h == 0 {
                    row[0] += 1.0 - acc;
                    row[1] += acc;
                } else {
                    row[0] += 1.0 - phi;
                    row[h] += keep;
                    row[h + 1] += acc;
                }
            } else if h > k {
                if k == 0 {
                    row[0] += 1.0 - acc;
                    row[h] += acc;
                } else {
                    row[0] += 1.0 - phi;
                    row[k] += keep;
                    row[h] += acc;
                }
            } else if h == 0 {
                row[0] += 1.0 - acc;
                row[1] += acc;
            } else if h == n - 1 {
                row[0] += 1.0 - phi;
                row[n - 2] += (1.0 - alpha) * rt * phi;
                row[n - 1] += (1.0 - (1.0 - alpha) * rt) * phi;
            } else {
                row[0] += 1.0 - phi;
                row[h - 1] += (1.0 - alpha) * rt * phi;
                row[h] += (1.0 - alpha - (1.0 - 2.0 * alpha) * rt) * phi;
                row[h + 1] += acc;
            }
        }
    }

    for v in &mut a {
        assert!(
            (-TABLE_TOL..=1.0 + TABLE_TOL).contains(v),
            "game table entry {v} out of [0, 1]"
        );
        *v = v.clamp(0.0, 1.0);
    }
    Ok(GameTableSlice { n, a })
}

/// Gain vector and loss factor for one cell. The loss factor
/// eta(i) rho_i does not depend on the speed class.
#[derive(Debug, Clone, PartialEq)]
pub struct GainLoss {
    pub gain: Vec<f64>,
    pub loss: f64,
}

/// g_j = sum_{h,k} A[h][k][j] f_cand[h] f_field[k]. Shared by the local and
/// nonlocal operators so that a zero-horizon nonlocal evaluation reproduces
/// the local one bit for bit.
pub(crate) fn bilinear_gain(table: &GameTableSlice, f_cand: &[f64], f_field: &[f64]) -> Vec<f64> {
    let n = table.n();
    let mut g = vec![0.0; n];
    for (h, &fh) in f_cand.iter().enumerate() {
        if fh == 0.0 {
            continue;
        }
        for (k, &fk) in f_field.iter().enumerate() {
            let p = fh * fk;
            if p == 0.0 {
                continue;
            }
            let row = table.row(h, k);
            for j in 0..n {
                g[j] += row[j] * p;
            }
        }
    }
    g
}

/// Gain and loss for one cell row at encounter rate eta.
pub fn gain_loss(f_row: &[f64], table: &GameTableSlice, eta: f64) -> GainLoss {
    let g = bilinear_gain(table, f_row, f_row);
    let rho: f64 = f_row.iter().sum();
    GainLoss {
        gain: g.iter().map(|x| eta * x).collect(),
        loss: eta * rho,
    }
}

/// Per-cell interaction horizons mu(i) and weights over the cells seen,
/// with w_l >= 0 and sum_l w_l = 1 for each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalWeights {
    mu: Vec<usize>,
    w: Vec<Vec<f64>>,
}

impl NonlocalWeights {
    pub fn new(mu: Vec<usize>, w: Vec<Vec<f64>>) -> Result<Self> {
        let m = mu.len();
        if w.len() != m {
            return Err(Error::invalid(
                "nonlocal weights",
                format!("{} weight lists for {m} cells", w.len()),
            ));
        }
        for i in 0..m {
            if i + mu[i] >= m {
                return Err(Error::invalid(
                    "nonlocal weights",
                    format!("horizon mu[{i}] = {} reaches past the last cell", mu[i]),
                ));
            }
            if w[i].len() != mu[i] + 1 {
                return Err(Error::invalid(
                    "nonlocal weights",
                    format!("cell {i} has {} weights for horizon {}", w[i].len(), mu[i]),
                ));
            }
            if w[i].iter().any(|x| *x < 0.0) {
                return Err(Error::invalid(
                    "nonlocal weights",
                    format!("cell {i} has negative weights"),
                ));
            }
            let s: f64 = w[i].iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(
                    "nonlocal weights",
                    format!("cell {i} weights sum to {s}, not 1"),
                ));
            }
        }
        Ok(NonlocalWeights { mu, w })
    }

    /// Zero horizon everywhere: each cell interacts with itself only.
    pub fn local(m: usize) -> Self {
        NonlocalWeights {
            mu: vec![0; m],
            w: vec![vec![1.0]; m],
        }
    }

    /// Fixed look-ahead horizon, clipped at the end of the road, with
    /// uniform weights 1/(mu(i) + 1).
    pub fn uniform(m: usize, horizon: usize) -> Self {
        let mu: Vec<usize> = (0..m).map(|i| horizon.min(m - 1 - i)).collect();
        let w = mu
            .iter()
            .map(|&mi| vec![1.0 / (mi + 1) as f64; mi + 1])
            .collect();
        NonlocalWeights { mu, w }
    }

    pub fn mu(&self, i: usize) -> usize {
        self.mu[i]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.w[i]
    }
}

/// Local interaction tendency G_ij - f_ij L_ij for every cell, as an m x n
/// row-major matrix. `limiters` holds the m + 1 interface values, entry i + 1
/// being the limiter out of cell i.
pub fn interaction_operator_local(
    state: &KineticState,
    lattice: &SpeedLattice,
    profile: &EnvironmentProfile,
    limiters: &[f64],
) -> Result<Vec<f64>> {
    let (m, n) = (state.m(), state.n());
    check_operator_inputs(state, lattice, profile, limiters)?;
    let rho = state.densities();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let rt = fictitious_density(&rho, profile.beta(), i)?;
        let table = game_table(lattice, profile.alpha()[i], rt, limiters[i + 1])?;
        let gl = gain_loss(
            state.row(i),
            &table,
            interaction_rate(profile.eta0(), rho[i]),
        );
        for j in 0..n {
            out[i * n + j] = gl.gain[j] - state.get(i, j) * gl.loss;
        }
    }
    Ok(out)
}

/// Nonlocal interaction tendency: cell i gathers weighted encounters with
/// the cells l = i .. i + mu(i),
///
///   J_ij = sum_l w_l [ eta(l) g_j(A(l); f_i, f_l) - f_ij eta(l) rho_l ],
///
/// where the table A(l) uses cell l's road condition, anticipated density,
/// and outgoing limiter. A zero horizon reproduces the local operator
/// exactly.
pub fn interaction_operator_nonlocal(
    state: &KineticState,
    lattice: &SpeedLattice,
    weights: &NonlocalWeights,
    profile: &EnvironmentProfile,
    limiters: &[f64],
) -> Result<Vec<f64>> {
    let (m, n) = (state.m(), state.n());
    check_operator_inputs(state, lattice, profile, limiters)?;
    if weights.mu.len() != m {
        return Err(Error::invalid(
            "nonlocal weights",
            format!("{} cells in weights, state has {m}", weights.mu.len()),
        ));
    }
    let rho = state.densities();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for l in i..=i + weights.mu(i) {
            let w = weights.weights(i)[l - i];
            let rt = fictitious_density(&rho, profile.beta(), l)?;
            let table = game_table(lattice, profile.alpha()[l], rt, limiters[l + 1])?;
            let eta = interaction_rate(profile.eta0(), rho[l]);
            let g = bilinear_gain(&table, state.row(i), state.row(l));
            let loss = eta * rho[l];
            for j in 0..n {
                out[i * n + j] += w * (eta * g[j] - state.get(i, j) * loss);
            }
        }
    }
    Ok(out)
}

fn check_operator_inputs(
    state: &KineticState,
    lattice: &SpeedLattice,
    profile: &EnvironmentProfile,
    limiters: &[f64],
) -> Result<()> {
    if lattice.n() != state.n() {
        return Err(Error::invalid(
            "lattice",
            format!("{} classes for a state with {}", lattice.n(), state.n()),
        ));
    }
    if profile.m() != state.m() {
        return Err(Error::invalid(
            "environment profile",
            format!("{} cells for a state with {}", profile.m(), state.m()),
        ));
    }
    if limiters.len() != state.m() + 1 {
        return Err(Error::invalid(
            "limiters",
            format!(
                "{} interface values for {} cells",
                limiters.len(),
                state.m()
            ),
        ));
    }
    Ok(())
}
