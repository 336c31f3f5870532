//! Run configuration files.
//!
//! The format is line based. `key = value` pairs live either at the top of
//! the file or under a section header `[homogeneous]`, `[scenarios]`,
//! `[dynamics]`, or `[verify]`. `#` starts a comment, also after a value.
//! Unknown sections, unknown keys, and duplicate keys are syntax errors that
//! report the offending line; values that parse but violate a domain
//! constraint are reported with their qualified key name.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Diagram,
    Simulate,
    Verify,
}

impl CommandKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CommandKind::Diagram => "diagram",
            CommandKind::Simulate => "simulate",
            CommandKind::Verify => "verify",
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Density grid `start:stop:step`, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn expand(&self) -> Vec<f64> {
        let k_max = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=k_max)
            .map(|k| (self.start + k as f64 * self.step).min(self.stop))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousConfig {
    /// Road conditions to sweep; a diagram run needs at least one.
    pub alpha: Vec<f64>,
    pub rho_grid: GridSpec,
    pub n: usize,
    pub eta0: f64,
    pub tol: f64,
    pub max_steps: u64,
}

impl Default for HomogeneousConfig {
    fn default() -> Self {
        HomogeneousConfig {
            alpha: Vec::new(),
            rho_grid: GridSpec {
                start: 0.0,
                stop: 1.0,
                step: 0.01,
            },
            n: 6,
            eta0: 1.0,
            tol: 1e-10,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioName {
    Roadworks,
    TrafficLight,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Variable,
    Constant,
    LiteralTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    /// Inflow density, spread uniformly over the speed classes.
    pub rho0: f64,
    pub alpha_profile: ProfileKind,
    /// Road condition used by the constant profile and by custom roads.
    pub alpha: f64,
    pub queue_cells: usize,
    pub green: f64,
    pub red: f64,
    pub m: usize,
    pub n: usize,
    pub eta0: f64,
    pub beta: f64,
    /// Uniform initial density of a custom road.
    pub initial_rho: f64,
    pub right_limiter: f64,
    pub gate_interface: Option<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: ScenarioName::Roadworks,
            rho0: 0.4,
            alpha_profile: ProfileKind::Variable,
            alpha: 0.61,
            queue_cells: 5,
            green: 10.0,
            red: 10.0,
            m: 10,
            n: 6,
            eta0: 1.0,
            beta: 0.0,
            initial_rho: 0.0,
            right_limiter: 1.0,
            gate_interface: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub horizon: f64,
    /// Cap on the step size; the profile default when absent.
    pub dt_max: Option<f64>,
    /// Write every stride-th step to the trajectory file.
    pub stride: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            horizon: 30.0,
            dt_max: None,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub trials: usize,
    pub levels: usize,
    pub deltas: Vec<f64>,
    pub horizon: f64,
    pub pairs: usize,
    pub samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            trials: 1000,
            levels: 4,
            deltas: vec![1e-2, 1e-3, 1e-4],
            horizon: 15.0,
            pairs: 1000,
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub seed: u64,
    pub out: String,
    /// Worker threads; 0 keeps the default pool.
    pub jobs: usize,
    pub homogeneous: HomogeneousConfig,
    pub scenario: ScenarioConfig,
    pub dynamics: DynamicsConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: CommandKind::Simulate,
            seed: 42,
            out: "out".to_string(),
            jobs: 0,
            homogeneous: HomogeneousConfig::default(),
            scenario: ScenarioConfig::default(),
            dynamics: DynamicsConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, &path.display().to_string())
}

fn syntax(path: &str, line: usize, detail: impl Into<String>) -> Error {
    Error::ConfigSyntax {
        path: path.to_string(),
        line,
        detail: detail.into(),
    }
}

fn value_err(key: &str, detail: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.to_string(),
        detail: detail.into(),
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| value_err(key, format!("`{raw}` is not a number")))
}

fn parse_usize(key: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>()
        .map_err(|_| value_err(key, format!("`{raw}` is not a nonnegative integer")))
}

fn parse_u64(key: &str, raw: &str) -> Result<u64> {
    raw.parse::<u64>()
        .map_err(|_| value_err(key, format!("`{raw}` is not a nonnegative integer")))
}

fn parse_f64_list(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(key, s))
        .collect()
}

fn parse_grid(key: &str, raw: &str) -> Result<GridSpec> {
    let parts: Vec<&str> = raw.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(value_err(
            key,
            format!("`{raw}` is not of the form start:stop:step"),
        ));
    }
    let start = parse_f64(key, parts[0])?;
    let stop = parse_f64(key, parts[1])?;
    let step = parse_f64(key, parts[2])?;
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&stop) || start > stop {
        return Err(value_err(
            key,
            format!("grid [{start}, {stop}] must sit inside [0, 1] with start <= stop"),
        ));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(value_err(key, format!("step {step} must be positive")));
    }
    Ok(GridSpec { start, stop, step })
}

fn check_unit(key: &str, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(value_err(key, format!("{x} outside [0, 1]")));
    }
    Ok(x)
}

fn check_positive(key: &str, x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(value_err(key, format!("{x} must be positive and finite")));
    }
    Ok(x)
}

/// Parse a configuration from text; `path` only labels error messages.
pub fn parse_config_str(text: &str, path: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut command: Option<CommandKind> = None;
    let mut section = String::new();
    let mut seen: HashSet<String> = HashSet::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| syntax(path, lineno, "unterminated section header"))?
                .trim();
            match name {
                "homogeneous" | "scenarios" | "dynamics" | "verify" => {
                    section = name.to_string();
                }
                _ => return Err(syntax(path, lineno, format!("unknown section [{name}]"))),
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            syntax(
                path,
                lineno,
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        let key = key.trim();
        let value = value.trim();
        let qualified = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if !seen.insert(qualified.clone()) {
            return Err(syntax(path, lineno, format!("duplicate key `{qualified}`")));
        }

        match (section.as_str(), key) {
            ("", "command") => {
                command = Some(match value {
                    "diagram" => CommandKind::Diagram,
                    "simulate" => CommandKind::Simulate,
                    "verify" => CommandKind::Verify,
                    _ => {
                        return Err(value_err(
                            &qualified,
                            format!("`{value}` is not one of diagram, simulate, verify"),
                        ))
                    }
                });
            }
            ("", "seed") => cfg.seed = parse_u64(&qualified, value)?,
            ("", "out") => cfg.out = value.to_string(),
            ("", "jobs") => cfg.jobs = parse_usize(&qualified, value)?,

            ("homogeneous", "alpha") => {
                let alphas = parse_f64_list(&qualified, value)?;
                for a in &alphas {
                    check_unit(&qualified, *a)?;
                }
                cfg.homogeneous.alpha = alphas;
            }
            ("homogeneous", "rho_grid") => {
                cfg.homogeneous.rho_grid = parse_grid(&qualified, value)?
            }
            ("homogeneous", "n") => {
                let n = parse_usize(&qualified, value)?;
                if n < 2 {
                    return Err(value_err(
                        &qualified,
                        format!("{n} speed classes, need at least 2"),
                    ));
                }
                cfg.homogeneous.n = n;
            }
            ("homogeneous", "eta0") => {
                cfg.homogeneous.eta0 = check_positive(&qualified, parse_f64(&qualified, value)?)?
            }
            ("homogeneous", "tol") => {
                cfg.homogeneous.tol = check_positive(&qualified, parse_f64(&qualified, value)?)?
            }
            ("homogeneous", "max_steps") => {
                let s = parse_u64(&qualified, value)?;
                if s == 0 {
                    return Err(value_err(&qualified, "0 steps cannot converge"));
                }
                cfg.homogeneous.max_steps = s;
            }

            ("scenarios", "name") => {
                cfg.scenario.name = match value {
                    "roadworks" => ScenarioName::Roadworks,
                    "traffic_light" => ScenarioName::TrafficLight,
                    "custom" => ScenarioName::Custom,
                    _ => {
                        return Err(value_err(
                            &qualified,
                            format!("`{value}` is not one of roadworks, traffic_light, custom"),
                        ))
                    }
                };
            }
            ("scenarios", "rho0") => {
                cfg.scenario.rho0 = check_unit(&qualified, parse_f64(&qualified, value)?)?
            }
            ("scenarios", "alpha_profile") => {
                cfg.scenario.alpha_profile = match value {
                    "variable" => ProfileKind::Variable,
                    "constant" => ProfileKind::Constant,
                    "literal_table" => ProfileKind::LiteralTable,
                    _ => {
                        return Err(value_err(
                            &qualified,
                            format!("`{value}` is not one of variable, constant, literal_table"),
                        ))
                    }
                };
            }
            ("scenarios", "alpha") => {
                cfg.scenario.alpha = check_unit(&qualified, parse_f64(&qualified, value)?)?
            }
            ("scenarios", "queue_cells") => {
                let q = parse_usize(&qualified, value)?;
                if !(1..=5).contains(&q) {
                    return Err(value_err(&qualified, format!("{q} outside 1..=5")));
                }
                cfg.scenario.queue_cells = q;
            }
            ("scenarios", "green") => {
                cfg.scenario.green = check_positive(&qualified, parse_f64(&qualified, value)?)?
            }
            ("scenarios", "red") => {
                cfg.scenario.red = check_positive(&qualified, parse_f64(&qualified, value)?)?
            }
            ("scenarios", "m") => {
                let m = parse_usize(&qualified, value)?;
                if m == 0 {
                    return Err(value_err(&qualified, "a road needs at least one cell"));
                }
                cfg.scenario.m = m;
            }
            ("scenarios", "n") => {
                let n = parse_usize(&qualified, value)?;
                if n < 2 {
                    return Err(value_err(
                        &qualified,
                        format!("{n} speed classes, need at least 2"),
                    ));
                }
                cfg.scenario.n = n;
            }
            ("scenarios", "eta0") => {
                cfg.scenario.eta0 = check_positive(&qualified, parse_f64(&qualified, value)?)?
            }
            ("scenarios", "beta") => {
                cfg.scenario.beta = check_unit(&qualified, parse_f64(&qualified, value)?)?
            }
            ("scenarios", "initial_rho") => {
                cfg.scenario.initial_rho = check_unit(&qualified, parse_f64(&qualified, value)?)?
            }
            ("scenarios", "right_limiter") => {
                cfg.scenario.right_limiter = check_unit(&qualified, parse_f64(&qualified, value)?)?
            }
            ("scenarios", "gate_interface") => {
                cfg.scenario.gate_interface = Some(parse_usize(&qualified, value)?);
            }

            ("dynamics", "horizon") => {
                cfg.dynamics.horizon = check_positive(&qualified, parse_f64(&qualified, value)?)?
            }
            ("dynamics", "dt_max") => {
                cfg.dynamics.dt_max =
                    Some(check_positive(&qualified, parse_f64(&qualified, value)?)?)
            }
            ("dynamics", "stride") => {
                let s = parse_usize(&qualified, value)?;
                if s == 0 {
                    return Err(value_err(&qualified, "stride must be at least 1"));
                }
                cfg.dynamics.stride = s;
            }

            ("verify", "trials") => {
                let t = parse_usize(&qualified, value)?;
                if t == 0 {
                    return Err(value_err(&qualified, "at least one trial is required"));
                }
                cfg.verify.trials = t;
            }
            ("verify", "levels") => {
                let l = parse_usize(&qualified, value)?;
                if l < 3 {
                    return Err(value_err(
                        &qualified,
                        format!("{l} < 3 levels cannot estimate an order"),
                    ));
                }
                cfg.verify.levels = l;
            }
            ("verify", "deltas") => {
                let ds = parse_f64_list(&qualified, value)?;
                if ds.is_empty() {
                    return Err(value_err(
                        &qualified,
                        "at least one perturbation size is required",
                    ));
                }
                for d in &ds {
                    check_unit(&qualified, *d)?;
                }
                cfg.verify.deltas = ds;
            }
            ("verify", "horizon") => {
                cfg.verify.horizon = check_positive(&qualified, parse_f64(&qualified, value)?)?
            }
            ("verify", "pairs") => {
                let p = parse_usize(&qualified, value)?;
                if p == 0 {
                    return Err(value_err(&qualified, "at least one pair is required"));
                }
                cfg.verify.pairs = p;
            }
            ("verify", "samples") => {
                let s = parse_usize(&qualified, value)?;
                if s == 0 {
                    return Err(value_err(&qualified, "at least one sample is required"));
                }
                cfg.verify.samples = s;
            }

            _ => {
                let place = if section.is_empty() {
                    "at top level".to_string()
                } else {
                    format!("in section [{section}]")
                };
                return Err(syntax(path, lineno, format!("unknown key `{key}` {place}")));
            }
        }
    }

    cfg.command = command.ok_or_else(|| {
        value_err(
            "command",
            "missing; one of diagram, simulate, verify is required",
        )
    })?;
    if cfg.command == CommandKind::Diagram && cfg.homogeneous.alpha.is_empty() {
        return Err(value_err(
            "homogeneous.alpha",
            "at least one road condition is required for a diagram run",
        ));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# full example, every key spelled out
command = diagram
seed = 7
out = results   # trailing comment
jobs = 2

[homogeneous]
alpha = 0.61, 1.0
rho_grid = 0:1:0.1
n = 6
eta0 = 1.0
tol = 1e-10
max_steps = 5000000

[scenarios]
name = traffic_light
rho0 = 0.4
alpha_profile = constant
alpha = 0.61
queue_cells = 3
green = 10
red = 10

[dynamics]
horizon = 30
dt_max = 0.1
stride = 2

[verify]
trials = 50
levels = 3
deltas = 1e-2, 1e-3
horizon = 5
pairs = 10
samples = 100
";

    #[test]
    fn full_example_round_trips_every_field() {
        let cfg = parse_config_str(FULL, "full.conf").unwrap();
        assert_eq!(cfg.command, CommandKind::Diagram);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.out, "results");
        assert_eq!(cfg.jobs, 2);
        assert_eq!(cfg.homogeneous.alpha, vec![0.61, 1.0]);
        assert_eq!(cfg.homogeneous.rho_grid.expand().len(), 11);
        assert_eq!(cfg.homogeneous.max_steps, 5_000_000);
        assert_eq!(cfg.scenario.name, ScenarioName::TrafficLight);
        assert_eq!(cfg.scenario.alpha_profile, ProfileKind::Constant);
        assert_eq!(cfg.scenario.queue_cells, 3);
        assert_eq!(cfg.dynamics.dt_max, Some(0.1));
        assert_eq!(cfg.dynamics.stride, 2);
        assert_eq!(cfg.verify.deltas, vec![1e-2, 1e-3]);
    }

    #[test]
    fn defaults_fill_everything_but_the_command() {
        let cfg = parse_config_str("command = simulate\n", "min.conf").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.out, "out");
        assert_eq!(cfg.jobs, 0);
        assert_eq!(cfg.dynamics.horizon, 30.0);
        assert_eq!(cfg.verify.trials, 1000);
        assert_eq!(cfg.scenario.rho0, 0.4);
        let err = parse_config_str("seed = 1\n", "x.conf").unwrap_err();
        assert!(err.to_string().contains("command"), "{err}");
    }

    #[test]
    fn grid_expansion_hits_both_ends() {
        let g = GridSpec {
            start: 0.0,
            stop: 1.0,
            step: 0.01,
        };
        let v = g.expand();
        assert_eq!(v.len(), 101);
        assert_eq!(v[0], 0.0);
        assert_eq!(*v.last().unwrap(), 1.0);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        let g = GridSpec {
            start: 0.05,
            stop: 0.5,
            step: 0.05,
        };
        assert_eq!(g.expand().len(), 10);
    }

    #[test]
    fn unknown_keys_and_sections_report_their_line() {
        let err = parse_config_str("command = simulate\nbogus = 1\n", "c.conf").unwrap_err();
        assert_eq!(
            err.to_string(),
            "c.conf:2: unknown key `bogus` at top level"
        );
        let err = parse_config_str("command = simulate\n[nope]\n", "c.conf").unwrap_err();
        assert_eq!(err.to_string(), "c.conf:2: unknown section [nope]");
        let err =
            parse_config_str("command = simulate\nseed = 1\nseed = 2\n", "c.conf").unwrap_err();
        assert_eq!(err.to_string(), "c.conf:3: duplicate key `seed`");
        let err = parse_config_str("command = simulate\nseed\n", "c.conf").unwrap_err();
        assert!(err
            .to_string()
            .starts_with("c.conf:2: expected `key = value`"));
    }

    #[test]
    fn domain_violations_name_the_key_and_constraint() {
        let err = parse_config_str("command = simulate\n[scenarios]\nbeta = 1.5\n", "c.conf")
            .unwrap_err();
        assert_eq!(
            err.to_string(),
            "config key `scenarios.beta`: 1.5 outside [0, 1]"
        );
        assert_eq!(err.exit_code(), 1);
        let err =
            parse_config_str("command = diagram\n[homogeneous]\neta0 = 0\n", "c.conf").unwrap_err();
        assert!(err.to_string().contains("homogeneous.eta0"), "{err}");
        let err = parse_config_str("command = diagram\n", "c.conf").unwrap_err();
        assert!(err.to_string().contains("homogeneous.alpha"), "{err}");
    }

    #[test]
    fn grids_and_lists_reject_malformed_values() {
        let err = parse_config_str(
            "command = diagram\n[homogeneous]\nalpha = 0.5\nrho_grid = 0:1\n",
            "c.conf",
        )
        .unwrap_err();
        assert!(err.to_string().contains("start:stop:step"), "{err}");
        let err = parse_config_str("command = diagram\n[homogeneous]\nalpha = one\n", "c.conf")
            .unwrap_err();
        assert!(err.to_string().contains("not a number"), "{err}");
    }
}
