//! CSV and manifest writers. Every float is printed with `fmt_f64` (17
//! significant digits), so a value survives a write/read round trip exactly
//! and reruns with the same config and seed produce byte-identical files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::homogeneous::FundamentalDiagram;
use crate::state::{macroscopic_fields, SpeedLattice};
use crate::verify::{
    DependenceReport, EquicontinuityReport, InvarianceReport, MassBalanceReport, RefinementReport,
};

/// Shortest-exact is locale- and implementation-stable, but 17 significant
/// digits make the round trip property obvious; keep them.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => fmt_f64(v),
        None => String::new(),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(contents.as_bytes())?;
    Ok(())
}

/// `rho,q,u,theta` rows of one long-time diagram; `u` is empty on the
/// empty road.
pub fn write_diagram_csv(path: &Path, diagram: &FundamentalDiagram) -> Result<()> {
    let mut s = String::from("rho,q,u,theta\n");
    for k in 0..diagram.len() {
        s.push_str(&fmt_f64(diagram.rho[k]));
        s.push(',');
        s.push_str(&fmt_f64(diagram.q[k]));
        s.push(',');
        s.push_str(&fmt_opt(diagram.u[k]));
        s.push(',');
        s.push_str(&fmt_f64(diagram.theta[k]));
        s.push('\n');
    }
    write_atomic(path, &s)
}

/// `t,cell,rho,q,u,theta` rows, cells numbered from 1, every `stride`-th
/// stored step plus always the final one.
pub fn write_trajectory_csv(
    path: &Path,
    traj: &Trajectory,
    lattice: &SpeedLattice,
    stride: usize,
) -> Result<()> {
    if stride == 0 {
        return Err(Error::invalid("stride", "stride must be at least 1"));
    }
    let last = traj.len() - 1;
    let mut s = String::from("t,cell,rho,q,u,theta\n");
    for k in (0..traj.len()).step_by(stride).chain(
        // the final state always appears, stride or not
        if !last.is_multiple_of(stride) {
            Some(last)
        } else {
            None
        },
    ) {
        let state = &traj.states[k];
        let fields = macroscopic_fields(state, lattice);
        for i in 0..state.m() {
            s.push_str(&fmt_f64(traj.times[k]));
            s.push(',');
            s.push_str(&(i + 1).to_string());
            s.push(',');
            s.push_str(&fmt_f64(fields.rho[i]));
            s.push(',');
            s.push_str(&fmt_f64(fields.q[i]));
            s.push(',');
            s.push_str(&fmt_opt(fields.u[i]));
            s.push(',');
            s.push_str(&fmt_f64(fields.theta[i]));
            s.push('\n');
        }
    }
    write_atomic(path, &s)
}

pub fn write_invariance_csv(path: &Path, report: &InvarianceReport) -> Result<()> {
    let mut s = String::from("stat,value\n");
    s.push_str(&format!("trials,{}\n", report.trials));
    s.push_str(&format!("steps_per_trial,{}\n", report.steps_per_trial));
    s.push_str(&format!("dt,{}\n", fmt_f64(report.dt)));
    s.push_str(&format!("violations,{}\n", report.violations));
    s.push_str(&format!("worst_low,{}\n", fmt_f64(report.worst_low)));
    s.push_str(&format!("worst_high,{}\n", fmt_f64(report.worst_high)));
    s.push_str(&format!("worst_sum,{}\n", fmt_f64(report.worst_sum)));
    write_atomic(path, &s)
}

pub fn write_mass_balance_csv(path: &Path, reports: &[(&str, &MassBalanceReport)]) -> Result<()> {
    let mut s = String::from("scenario,step,residual\n");
    for (label, report) in reports {
        for (k, r) in report.residuals.iter().enumerate() {
            s.push_str(&format!("{label},{},{}\n", k + 1, fmt_f64(*r)));
        }
    }
    write_atomic(path, &s)
}

pub fn write_convergence_csv(path: &Path, report: &RefinementReport) -> Result<()> {
    let mut s = String::from("level,dt,steps,successive_distance,to_finest,ratio\n");
    for k in 0..report.dts.len() {
        s.push_str(&format!(
            "{k},{},{},{},{},{}\n",
            fmt_f64(report.dts[k]),
            report.steps[k],
            fmt_opt(report.successive.get(k).copied()),
            fmt_f64(report.to_finest[k]),
            fmt_opt(report.ratios.get(k).copied()),
        ));
    }
    write_atomic(path, &s)
}

pub fn write_dependence_csv(path: &Path, report: &DependenceReport) -> Result<()> {
    let mut s = String::from("delta,data_gap,gap,ratio\n");
    for k in 0..report.deltas.len() {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(report.deltas[k]),
            fmt_f64(report.data_gaps[k]),
            fmt_f64(report.gaps[k]),
            fmt_opt(report.ratios.get(k).copied()),
        ));
    }
    // determinism witness: the unperturbed copy has a gap of exactly zero
    s.push_str(&format!(
        "{},{},{},\n",
        fmt_f64(0.0),
        fmt_f64(0.0),
        fmt_f64(report.zero_delta_gap),
    ));
    write_atomic(path, &s)
}

pub fn write_equicontinuity_csv(
    path: &Path,
    reports: &[(&str, &EquicontinuityReport)],
) -> Result<()> {
    let mut s = String::from("scenario,pairs,violations,max_ratio\n");
    for (label, report) in reports {
        s.push_str(&format!(
            "{label},{},{},{}\n",
            report.pairs,
            report.violations,
            fmt_f64(report.max_ratio),
        ));
    }
    write_atomic(path, &s)
}

/// Split a CSV produced by this module back into header and raw string rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::invalid("csv file", format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        rows.push(line.split(',').map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Numeric CSV field: empty means undefined (mean speed of an empty cell).
pub fn parse_float_field(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::invalid("csv field", format!("`{s}` is not a number")))
}

/// Run manifest: config echo, version, effective seed and thread count, wall
/// time, and the files written. The wall time makes this file exempt from
/// the byte-identity guarantee.
pub fn write_manifest(
    dir: &Path,
    config_echo: &str,
    seed: u64,
    jobs: usize,
    wall: std::time::Duration,
    files: &[PathBuf],
) -> Result<PathBuf> {
    let path = dir.join("manifest.txt");
    let mut s = String::new();
    s.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("seed = {seed}\n"));
    s.push_str(&format!("jobs = {jobs}\n"));
    s.push_str(&format!("wall_seconds = {:.3}\n", wall.as_secs_f64()));
    s.push_str("files =\n");
    for f in files {
        s.push_str(&format!("  {}\n", f.display()));
    }
    s.push_str("config =\n");
    for line in config_echo.lines() {
        s.push_str("  | ");
        s.push_str(line);
        s.push('\n');
    }
    write_atomic(&path, &s)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, BoundarySpec};
    use crate::homogeneous::{fundamental_diagram, SteadyStateOptions};
    use crate::interaction::EnvironmentProfile;
    use crate::state::KineticState;

    #[test]
    fn floats_round_trip_exactly_through_the_formatter() {
        for &x in &[0.15, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 0.1 + 0.2] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.15), "1.4999999999999999e-1");
    }

    #[test]
    fn diagram_csv_round_trips_and_leaves_u_empty_on_the_empty_road() {
        let dir = tempfile::tempdir().unwrap();
        let lattice = SpeedLattice::uniform(6).unwrap();
        let d = fundamental_diagram(
            1.0,
            &[0.0, 0.2],
            &lattice,
            1.0,
            &SteadyStateOptions::default(),
        )
        .unwrap();
        let path = dir.path().join("d.csv");
        write_diagram_csv(&path, &d).unwrap();
        let (header, rows) = read_csv(&path).unwrap();
        assert_eq!(header, ["rho", "q", "u", "theta"]);
        assert_eq!(rows.len(), 2);
        assert_eq!(parse_float_field(&rows[0][2]).unwrap(), None);
        assert_eq!(parse_float_field(&rows[1][0]).unwrap(), Some(d.rho[1]));
        assert_eq!(parse_float_field(&rows[1][1]).unwrap(), Some(d.q[1]));
    }

    #[test]
    fn trajectory_csv_strides_but_keeps_the_final_step() {
        let dir = tempfile::tempdir().unwrap();
        let lattice = SpeedLattice::uniform(3).unwrap();
        let profile = EnvironmentProfile::uniform(2, 0.5, 0.0, 1.0).unwrap();
        let bc = BoundarySpec::closed(3);
        let initial = KineticState::uniform_density(2, 3, 0.3).unwrap();
        let traj = simulate(&initial, &lattice, &bc, &profile, 0.1, 0.5).unwrap();
        assert_eq!(traj.len(), 6);
        let path = dir.path().join("t.csv");
        write_trajectory_csv(&path, &traj, &lattice, 4).unwrap();
        let (header, rows) = read_csv(&path).unwrap();
        assert_eq!(header, ["t", "cell", "rho", "q", "u", "theta"]);
        // steps 0 and 4 by stride, plus the forced final step 5; 2 cells each
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0][1], "1");
        assert_eq!(rows[1][1], "2");
        let t_last = parse_float_field(&rows[5][0]).unwrap().unwrap();
        assert!((t_last - 0.5).abs() < 1e-12);
    }

    #[test]
    fn manifest_lists_files_and_echoes_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![dir.path().join("a.csv")];
        let path = write_manifest(
            dir.path(),
            "command = verify\n[verify]\ntrials = 3\n",
            42,
            0,
            std::time::Duration::from_millis(1234),
            &files,
        )
        .unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.contains("seed = 42"));
        assert!(text.contains("a.csv"));
        assert!(text.contains("  | trials = 3"));
    }
}
