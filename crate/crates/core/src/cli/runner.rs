//! Map a parsed run configuration onto the library and write the results.
//!
//! Failure policy: every file a run can produce is written before the run
//! classifies itself, so an unconverged diagram or a failed verification
//! still leaves its evidence on disk. The deferred error then selects the
//! process exit code (2 for convergence, 3 for verification).

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use log::info;

use crate::cli::config::{CommandKind, ProfileKind, RunConfig, ScenarioConfig, ScenarioName};
use crate::cli::output;
use crate::dynamics::{simulate, steps_for_horizon, BoundarySpec, GateOverride, Trajectory};
use crate::error::{Error, Result};
use crate::homogeneous::{fundamental_diagram, InitialSplit, SteadyStateOptions};
use crate::interaction::EnvironmentProfile;
use crate::scenarios::{
    build_roadworks_with, build_traffic_light_with, AlphaProfile, GateSchedule,
};
use crate::state::{KineticState, SpeedLattice};
use crate::verify::{
    check_continuous_dependence, check_convergence, check_equicontinuity, check_invariance,
    check_mass_balance, estimate_limiter_lipschitz,
};

#[derive(Debug)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
}

/// Execute the configured run. `config_echo` is the raw config text and is
/// reproduced in the manifest.
pub fn run(cfg: &RunConfig, config_echo: &str) -> Result<RunOutcome> {
    let start = Instant::now();
    let out = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out)?;

    let (mut files, deferred) = match cfg.command {
        CommandKind::Diagram => run_diagram(cfg, &out)?,
        CommandKind::Simulate => (run_simulate(cfg, &out)?, None),
        CommandKind::Verify => run_verify(cfg, &out)?,
    };

    let manifest = output::write_manifest(
        &out,
        config_echo,
        cfg.seed,
        cfg.jobs,
        start.elapsed(),
        &files,
    )?;
    files.push(manifest);
    info!(
        "{}: wrote {} files to {}",
        cfg.command,
        files.len(),
        out.display()
    );
    match deferred {
        Some(err) => Err(err),
        None => Ok(RunOutcome { files }),
    }
}

fn run_diagram(cfg: &RunConfig, out: &std::path::Path) -> Result<(Vec<PathBuf>, Option<Error>)> {
    let h = &cfg.homogeneous;
    let lattice = SpeedLattice::uniform(h.n)?;
    let grid = h.rho_grid.expand();
    let opts = SteadyStateOptions {
        tol: h.tol,
        max_steps: h.max_steps,
        dt: None,
        init: InitialSplit::Uniform,
    };
    let mut files = Vec::new();
    let mut deferred = None;
    for &alpha in &h.alpha {
        let diagram = fundamental_diagram(alpha, &grid, &lattice, h.eta0, &opts)?;
        let path = out.join(format!("diagram_alpha_{alpha}.csv"));
        output::write_diagram_csv(&path, &diagram)?;
        info!(
            "diagram alpha = {alpha}: {} points, {} converged",
            diagram.len(),
            diagram.converged.iter().filter(|c| **c).count()
        );
        files.push(path);
        if deferred.is_none() {
            if let Some((rho, residual, steps)) = diagram.first_unconverged() {
                deferred = Some(Error::NoConvergence {
                    rho,
                    alpha,
                    residual,
                    steps,
                    tol: h.tol,
                });
            }
        }
    }
    Ok((files, deferred))
}

/// The pieces of a scenario the integrator needs.
struct Problem {
    initial: KineticState,
    lattice: SpeedLattice,
    bc: BoundarySpec,
    profile: EnvironmentProfile,
}

fn alpha_profile_of(sc: &ScenarioConfig) -> AlphaProfile {
    match sc.alpha_profile {
        ProfileKind::Variable => AlphaProfile::Variable,
        ProfileKind::Constant => AlphaProfile::Constant(sc.alpha),
        ProfileKind::LiteralTable => AlphaProfile::LiteralTable,
    }
}

fn build_problem(sc: &ScenarioConfig) -> Result<Problem> {
    match sc.name {
        ScenarioName::Roadworks => {
            let s = build_roadworks_with(sc.rho0, alpha_profile_of(sc))?;
            Ok(Problem {
                initial: s.initial,
                lattice: s.lattice,
                bc: s.bc,
                profile: s.profile,
            })
        }
        ScenarioName::TrafficLight => {
            let s = build_traffic_light_with(sc.queue_cells, sc.green, sc.red)?;
            Ok(Problem {
                initial: s.initial,
                lattice: s.lattice,
                bc: s.bc,
                profile: s.profile,
            })
        }
        ScenarioName::Custom => {
            let lattice = SpeedLattice::uniform(sc.n)?;
            let initial = KineticState::uniform_density(sc.m, sc.n, sc.initial_rho)?;
            let inflow = vec![sc.rho0 / sc.n as f64; sc.n];
            let mut bc = BoundarySpec::constant_inflow(inflow, sc.right_limiter);
            if let Some(interface) = sc.gate_interface {
                let sched = GateSchedule::new(interface, sc.green, sc.red)?;
                bc = bc.with_gate(GateOverride {
                    interface,
                    schedule: Arc::new(move |t| sched.value(t)),
                });
            }
            let profile = EnvironmentProfile::uniform(sc.m, sc.alpha, sc.beta, sc.eta0)?;
            Ok(Problem {
                initial,
                lattice,
                bc,
                profile,
            })
        }
    }
}

fn run_simulate(cfg: &RunConfig, out: &std::path::Path) -> Result<Vec<PathBuf>> {
    let p = build_problem(&cfg.scenario)?;
    let dt_cap = cfg
        .dynamics
        .dt_max
        .unwrap_or_else(|| p.profile.default_dt());
    let (steps, dt) = steps_for_horizon(cfg.dynamics.horizon, dt_cap)?;
    info!("simulate: {steps} steps of dt = {dt}");
    let traj = simulate(
        &p.initial,
        &p.lattice,
        &p.bc,
        &p.profile,
        dt,
        cfg.dynamics.horizon,
    )?;
    let path = out.join("trajectory.csv");
    output::write_trajectory_csv(&path, &traj, &p.lattice, cfg.dynamics.stride)?;
    Ok(vec![path])
}

fn integrate(p: &Problem, horizon: f64) -> Result<(Trajectory, f64)> {
    let (_, dt) = steps_for_horizon(horizon, p.profile.default_dt())?;
    let traj = simulate(&p.initial, &p.lattice, &p.bc, &p.profile, dt, horizon)?;
    Ok((traj, dt))
}

fn run_verify(cfg: &RunConfig, out: &std::path::Path) -> Result<(Vec<PathBuf>, Option<Error>)> {
    let v = &cfg.verify;
    let sc = &cfg.scenario;
    let mut files = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    let mut summary = String::new();
    let mut record = |line: String, ok: bool, name: &str, failures: &mut Vec<String>| {
        info!("{line}");
        summary.push_str(&line);
        summary.push('\n');
        if !ok {
            failures.push(name.to_string());
        }
    };

    // randomized admissibility trials on the canonical 10 x 6 road
    let inv_dt = 0.45 / 3.0;
    let inv = check_invariance(v.trials, cfg.seed, inv_dt)?;
    let path = out.join("invariance.csv");
    output::write_invariance_csv(&path, &inv)?;
    files.push(path);
    record(
        format!(
            "invariance: {} ({} trials x {} steps, {} violations, entries in [{:.3e}, {:.3e}], max cell mass {:.17})",
            pass_str(inv.passed()),
            inv.trials,
            inv.steps_per_trial,
            inv.violations,
            inv.worst_low,
            inv.worst_high,
            inv.worst_sum
        ),
        inv.passed(),
        "invariance",
        &mut failures,
    );

    // per-step mass balance and interpolant slope bounds on both scenarios
    let roadworks = build_problem(&ScenarioConfig {
        name: ScenarioName::Roadworks,
        ..sc.clone()
    })?;
    let light = build_problem(&ScenarioConfig {
        name: ScenarioName::TrafficLight,
        ..sc.clone()
    })?;
    let (rw_traj, rw_dt) = integrate(&roadworks, v.horizon)?;
    let (tl_traj, _) = integrate(&light, v.horizon)?;

    let rw_mb = check_mass_balance(&rw_traj, &roadworks.lattice, &roadworks.bc)?;
    let tl_mb = check_mass_balance(&tl_traj, &light.lattice, &light.bc)?;
    let path = out.join("mass_balance.csv");
    output::write_mass_balance_csv(&path, &[("roadworks", &rw_mb), ("traffic_light", &tl_mb)])?;
    files.push(path);
    for (label, mb) in [("roadworks", &rw_mb), ("traffic_light", &tl_mb)] {
        record(
            format!(
                "mass balance ({label}): {} (max residual {:.3e} vs tol {:.3e})",
                pass_str(mb.passed()),
                mb.max_residual,
                mb.tol
            ),
            mb.passed(),
            &format!("mass balance ({label})"),
            &mut failures,
        );
    }

    let rw_eq = check_equicontinuity(&rw_traj, roadworks.profile.eta_bar(), v.pairs, cfg.seed)?;
    let tl_eq = check_equicontinuity(&tl_traj, light.profile.eta_bar(), v.pairs, cfg.seed)?;
    let path = out.join("equicontinuity.csv");
    output::write_equicontinuity_csv(&path, &[("roadworks", &rw_eq), ("traffic_light", &tl_eq)])?;
    files.push(path);
    for (label, eq) in [("roadworks", &rw_eq), ("traffic_light", &tl_eq)] {
        record(
            format!(
                "equicontinuity ({label}): {} ({} pairs, {} violations, max ratio {:.3e})",
                pass_str(eq.passed()),
                eq.pairs,
                eq.violations,
                eq.max_ratio
            ),
            eq.passed(),
            &format!("equicontinuity ({label})"),
            &mut failures,
        );
    }

    // step refinement on the roadworks problem
    let conv = check_convergence(
        &roadworks.initial,
        &roadworks.lattice,
        &roadworks.bc,
        &roadworks.profile,
        roadworks.profile.default_dt(),
        v.levels,
        v.horizon,
    )?;
    let path = out.join("convergence.csv");
    output::write_convergence_csv(&path, &conv)?;
    files.push(path);
    let conv_ok = conv.ratios.iter().all(|r| (1.7..=2.3).contains(r));
    record(
        format!(
            "convergence: {} (ratios {}; fitted order {:.3})",
            pass_str(conv_ok),
            conv.ratios
                .iter()
                .map(|r| format!("{r:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            conv.order
        ),
        conv_ok,
        "convergence",
        &mut failures,
    );

    // continuous dependence on initial and boundary data
    let dep = check_continuous_dependence(
        &roadworks.initial,
        &roadworks.lattice,
        &roadworks.bc,
        &roadworks.profile,
        &v.deltas,
        rw_dt,
        v.horizon,
        cfg.seed,
    )?;
    let path = out.join("dependence.csv");
    output::write_dependence_csv(&path, &dep)?;
    files.push(path);
    let dep_ok = dep.gaps.windows(2).all(|w| w[0] > w[1]) && dep.zero_delta_gap == 0.0;
    record(
        format!(
            "dependence: {} (gaps {}; zero-delta gap {:e}; boundary envelope {:.3})",
            pass_str(dep_ok),
            dep.gaps
                .iter()
                .map(|g| format!("{g:.3e}"))
                .collect::<Vec<_>>()
                .join(" > "),
            dep.zero_delta_gap,
            dep.k_boundary
        ),
        dep_ok,
        "dependence",
        &mut failures,
    );

    // informational: the capacity limiter has no global slope constant
    let lip = estimate_limiter_lipschitz(v.samples, cfg.seed)?;
    summary.push_str(&format!(
        "limiter slope (informational): max {:.3e} over {} samples at (rho, rho') = ({:.3}, {:.3}) vs ({:.3}, {:.3})\n",
        lip.max_slope, lip.samples, lip.worst.0, lip.worst.1, lip.worst.2, lip.worst.3
    ));

    summary.push_str(&format!(
        "overall: {}\n",
        if failures.is_empty() { "PASS" } else { "FAIL" }
    ));
    let path = out.join("verify_summary.txt");
    std::fs::write(&path, &summary)?;
    files.push(path);

    let deferred = if failures.is_empty() {
        None
    } else {
        Some(Error::Verification(format!(
            "{} of 8 checks failed: {}",
            failures.len(),
            failures.join(", ")
        )))
    };
    Ok((files, deferred))
}

fn pass_str(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config_str;

    fn run_in(dir: &std::path::Path, text: &str) -> Result<RunOutcome> {
        let mut cfg = parse_config_str(text, "test.conf")?;
        cfg.out = dir.join(&cfg.out).display().to_string();
        run(&cfg, text)
    }

    #[test]
    fn diagram_runs_write_files_and_defer_convergence_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ok = run_in(
            dir.path(),
            "command = diagram\n[homogeneous]\nalpha = 1.0\nrho_grid = 0.1:0.3:0.1\n",
        )
        .unwrap();
        assert!(ok.files.iter().any(|f| f.ends_with("diagram_alpha_1.csv")));
        assert!(dir.path().join("out/manifest.txt").exists());

        let err = run_in(
            dir.path(),
            "command = diagram\nout = bad\n[homogeneous]\nalpha = 0.61\nrho_grid = 0.2:0.2:0.1\ntol = 1e-30\nmax_steps = 500\n",
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
        // the evidence is still on disk
        assert!(dir.path().join("bad/diagram_alpha_0.61.csv").exists());
        assert!(dir.path().join("bad/manifest.txt").exists());
    }

    #[test]
    fn simulate_runs_all_three_scenario_kinds() {
        let dir = tempfile::tempdir().unwrap();
        for (sub, text) in [
            (
                "rw",
                "command = simulate\nout = rw\n[dynamics]\nhorizon = 1\n",
            ),
            (
                "tl",
                "command = simulate\nout = tl\n[scenarios]\nname = traffic_light\n[dynamics]\nhorizon = 1\n",
            ),
            (
                "cu",
                "command = simulate\nout = cu\n[scenarios]\nname = custom\nm = 4\nn = 3\ninitial_rho = 0.3\nrho0 = 0\ngate_interface = 2\n[dynamics]\nhorizon = 1\n",
            ),
        ] {
            let outcome = run_in(dir.path(), text).unwrap();
            let traj = dir.path().join(sub).join("trajectory.csv");
            assert!(outcome.files.contains(&traj), "{sub}");
            let (header, rows) = output::read_csv(&traj).unwrap();
            assert_eq!(header[0], "t");
            assert!(!rows.is_empty());
        }
    }

    #[test]
    fn verify_runs_end_to_end_and_reports_failures_via_the_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let quick = "command = verify\n[verify]\ntrials = 4\nlevels = 3\ndeltas = 1e-2, 1e-3\nhorizon = 3\npairs = 16\nsamples = 200\n";
        run_in(dir.path(), quick).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("out/verify_summary.txt")).unwrap();
        assert!(summary.contains("overall: PASS"), "{summary}");
        for f in [
            "invariance.csv",
            "mass_balance.csv",
            "equicontinuity.csv",
            "convergence.csv",
            "dependence.csv",
        ] {
            assert!(dir.path().join("out").join(f).exists(), "{f}");
        }

        // perturbation sizes in ascending order invert the gap ordering,
        // which the dependence rule must flag through exit code 3
        let bad = "command = verify\nout = bad\n[verify]\ntrials = 2\nlevels = 3\ndeltas = 1e-4, 1e-2\nhorizon = 3\npairs = 8\nsamples = 100\n";
        let err = run_in(dir.path(), bad).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
        let summary = std::fs::read_to_string(dir.path().join("bad/verify_summary.txt")).unwrap();
        assert!(summary.contains("overall: FAIL"), "{summary}");
    }
}
