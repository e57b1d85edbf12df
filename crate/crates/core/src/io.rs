//! Run specifications, command execution and output files.
//!
//! A [`RunSpec`] fully determines a run. Every command writes the resolved
//! spec to `run_spec.json` and a `summary.json`; feeding `run_spec.json`
//! back in reproduces the run's CSV output byte for byte.
//!
//! CSV schemas (the `E` column is present for both variants):
//!
//! | file             | columns                                              |
//! |------------------|------------------------------------------------------|
//! | `trajectory.csv` | `t,S,E,I,R,N`                                        |
//! | `coupled.csv`    | `t,I_lower,I,I_upper,S_over_N,breakdown_flag`        |
//! | `ode.csv`        | `t,s,e,i,r`                                          |
//! | `compare.csv`    | `t,S,E,I,R,s,e,i,r,deviation` (`S..R` scaled counts) |
//! | `ensemble.csv`   | `replicate,terminal,minor_outbreak,extinction_time,t_end,events,growth_rate` |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ensemble::{run_ensemble, EnsembleConfig, EnsembleStats};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PopulationState};
use crate::ode::{self, integrate_on_grid, largest_remainder_counts, OdeSolution, ScaledState};
use crate::ssa::{
    simulate_coupled_sandwich, simulate_epidemic, CoupledTrajectory, CouplingOptions, SimConfig,
    Terminal, Trajectory, DEFAULT_MAX_EVENTS,
};
use crate::theory::{self, TheorySummary};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Theory,
    Simulate,
    Couple,
    Ode,
    Ensemble,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Theory => "theory",
            Command::Simulate => "simulate",
            Command::Couple => "couple",
            Command::Ode => "ode",
            Command::Ensemble => "ensemble",
            Command::Compare => "compare",
        }
    }
}

/// Command options. Every field has a default so configs may omit any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub seed: u64,
    pub t_max: f64,
    /// ODE step.
    pub dt: f64,
    /// Susceptible-depletion threshold of the coupling.
    pub eps0: f64,
    /// Initial infective proportion for the fluid limit and comparisons.
    pub eps1: f64,
    /// Initial removed proportion for the fluid limit and comparisons.
    pub eps2: f64,
    pub replicates: u64,
    pub grid_step: f64,
    /// Newly infected individuals at the start of stochastic runs
    /// (`simulate`, `couple`, `ensemble`); latent under SEIR.
    pub initial_cases: u64,
    /// Minor-outbreak horizon of `ensemble`; defaults to `t_max`.
    pub extinction_horizon: Option<f64>,
    /// Stop `ensemble` replicates once `e + i` reaches this count.
    pub takeoff_threshold: Option<u64>,
    pub max_events: u64,
    /// Worker count of `ensemble`; the result does not depend on it.
    pub parallelism: Option<usize>,
    /// ODE starting proportions `[s, e, i, r]`; overrides `eps1`/`eps2`.
    pub z0: Option<[f64; 4]>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 0,
            t_max: 10.0,
            dt: ode::DEFAULT_DT,
            eps0: 0.05,
            eps1: 0.01,
            eps2: 0.01,
            replicates: 100,
            grid_step: 0.1,
            initial_cases: 1,
            extinction_horizon: None,
            takeoff_threshold: None,
            max_events: DEFAULT_MAX_EVENTS,
            parallelism: None,
            z0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub command: Command,
    pub params: ModelParams,
    #[serde(default)]
    pub options: RunOptions,
}

const PARAM_KEYS: [&str; 6] = ["lambda", "mu", "gamma", "delta", "nu", "n0"];

impl RunSpec {
    /// Reads a config from JSON. Either the nested layout written to
    /// `run_spec.json` (`command`, `params`, `options`) or a flat object of
    /// parameters and options is accepted; `command` overrides the file's.
    pub fn from_json(value: Value, command: Option<Command>) -> Result<RunSpec> {
        let Value::Object(mut map) = value else {
            return Err(Error::config("config", "expected a JSON object"));
        };
        if let Some(c) = command {
            map.insert(
                "command".into(),
                serde_json::to_value(c).expect("plain enum"),
            );
        }
        if !map.contains_key("params") {
            let mut params = serde_json::Map::new();
            let mut options = serde_json::Map::new();
            for (key, v) in std::mem::take(&mut map) {
                if key == "command" {
                    map.insert(key, v);
                } else if PARAM_KEYS.contains(&key.as_str()) {
                    params.insert(key, v);
                } else {
                    options.insert(key, v);
                }
            }
            map.insert("params".into(), Value::Object(params));
            map.insert("options".into(), Value::Object(options));
        }
        if !map.contains_key("command") {
            return Err(Error::config(
                "command",
                "missing; name one on the command line",
            ));
        }
        let spec: RunSpec = serde_json::from_value(Value::Object(map))
            .map_err(|e| Error::config("config", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate_supercritical()?;
        let o = &self.options;
        let positive = |field: &'static str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    field,
                    format!("must be positive and finite, got {x}"),
                ))
            }
        };
        positive("t_max", o.t_max)?;
        positive("dt", o.dt)?;
        positive("grid_step", o.grid_step)?;
        if !(o.eps0 > 0.0 && o.eps0 < 1.0) {
            return Err(Error::config(
                "eps0",
                format!("must lie in (0, 1), got {}", o.eps0),
            ));
        }
        if !(o.eps1 >= 0.0 && o.eps2 >= 0.0 && o.eps1 + o.eps2 < 1.0) {
            return Err(Error::config(
                "eps1",
                "eps1, eps2 >= 0 with eps1 + eps2 < 1 required",
            ));
        }
        if o.replicates == 0 {
            return Err(Error::config("replicates", "must be >= 1"));
        }
        if o.max_events == 0 {
            return Err(Error::config("max_events", "must be >= 1"));
        }
        if o.initial_cases > self.params.n0 {
            return Err(Error::config("initial_cases", "cannot exceed n0"));
        }
        if let Some(h) = o.extinction_horizon {
            if !(h > 0.0 && h <= o.t_max) {
                return Err(Error::config(
                    "extinction_horizon",
                    "must lie in (0, t_max]",
                ));
            }
        }
        if let Some(z) = o.z0 {
            if z.iter().any(|&x| !(x >= 0.0)) || (z.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::config("z0", "must be nonnegative and sum to 1"));
            }
        }
        Ok(())
    }

    /// Fluid-limit starting point.
    pub fn ode_start(&self) -> ScaledState {
        match self.options.z0 {
            Some(z) => ScaledState::from_array(z),
            None => ScaledState::seeded(self.options.eps1, self.options.eps2),
        }
    }

    fn sim_config(&self, initial: PopulationState) -> SimConfig {
        let o = &self.options;
        SimConfig::new(self.params, initial, o.t_max)
            .with_seed(o.seed)
            .with_max_events(o.max_events)
            .with_grid_step(o.grid_step)
    }

    fn single_start(&self) -> PopulationState {
        PopulationState::index_cases(
            self.params.variant(),
            self.params.n0,
            self.options.initial_cases,
        )
    }
}

pub fn parse_config_file(path: &Path, command: Option<Command>) -> Result<RunSpec> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    RunSpec::from_json(value, command)
}

/// Formats `x` rounded to 9 significant digits, in shortest form.
pub fn fmt_time(x: f64) -> String {
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float");
    format!("{rounded}")
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,S,E,I,R,N\n");
    for s in &traj.samples {
        let z = s.state;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_time(s.t),
            z.s,
            z.e,
            z.i,
            z.r,
            z.total()
        );
    }
    out
}

pub fn coupled_csv(traj: &CoupledTrajectory) -> String {
    let mut out = String::from("t,I_lower,I,I_upper,S_over_N,breakdown_flag\n");
    for s in &traj.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_time(s.t),
            s.i_lower,
            s.i_epidemic,
            s.i_upper,
            s.s_over_n,
            u8::from(s.broken)
        );
    }
    out
}

pub fn ode_csv(sol: &OdeSolution) -> String {
    let mut out = String::from("t,s,e,i,r\n");
    for (t, z) in sol.grid.iter().zip(&sol.states) {
        let _ = writeln!(out, "{},{},{},{},{}", fmt_time(*t), z.s, z.e, z.i, z.r);
    }
    out
}

pub fn compare_csv(params: &ModelParams, traj: &Trajectory, sol: &OdeSolution) -> Result<String> {
    let mut out = String::from("t,S,E,I,R,s,e,i,r,deviation\n");
    let growth = params.pop_growth();
    for sample in &traj.samples {
        let k = sol
            .index_of(sample.t)
            .ok_or_else(|| Error::GridMismatch(format!("time {} not on the ODE grid", sample.t)))?;
        let scaled =
            ScaledState::from_counts(&sample.state, params.n0 as f64 * (growth * sample.t).exp());
        let z = sol.states[k];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_time(sample.t),
            scaled.s,
            scaled.e,
            scaled.i,
            scaled.r,
            z.s,
            z.e,
            z.i,
            z.r,
            scaled.distance(&z)
        );
    }
    Ok(out)
}

pub fn ensemble_csv(stats: &EnsembleStats) -> String {
    let mut out = String::from(
        "replicate,terminal,minor_outbreak,extinction_time,t_end,events,growth_rate\n",
    );
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for r in &stats.per_replicate {
        let _ = writeln!(
            out,
            "{},{:?},{},{},{},{},{}",
            r.index,
            r.terminal,
            r.minor_outbreak,
            opt(r.extinction_time),
            fmt_time(r.t_end),
            r.event_count,
            opt(r.growth_rate)
        );
    }
    out
}

/// Everything a command produced, before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub spec: RunSpec,
    pub theory: TheorySummary,
    pub terminal: Option<Terminal>,
    /// Command-specific results for `summary.json`.
    pub details: Value,
    /// `(file name, contents)` of the CSV outputs.
    pub tables: Vec<(&'static str, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    /// Random streams used under `seed` (one per replicate).
    pub streams: u64,
    pub theory: TheorySummary,
    pub terminal: Option<Terminal>,
    pub details: Value,
    pub spec: RunSpec,
}

/// Runs the spec's command without touching the file system.
pub fn execute(spec: &RunSpec) -> Result<RunOutput> {
    spec.validate()?;
    let p = &spec.params;
    let o = &spec.options;
    let theory = theory::summarize(p, Some((o.eps0, p.n0 as f64)))?;
    let mut terminal = None;
    let mut tables = Vec::new();
    let details = match spec.command {
        Command::Theory => Value::Null,
        Command::Simulate => {
            let cfg = spec.sim_config(spec.single_start()).run_past_extinction();
            let traj = simulate_epidemic(&cfg)?;
            terminal = Some(traj.terminal);
            tables.push(("trajectory.csv", trajectory_csv(&traj)));
            serde_json::json!({
                "event_count": traj.event_count,
                "t_end": traj.t_end,
                "final_state": traj.final_state(),
            })
        }
        Command::Couple => {
            let cfg = spec.sim_config(spec.single_start());
            let traj = simulate_coupled_sandwich(&cfg, CouplingOptions::new(o.eps0))?;
            terminal = Some(traj.terminal);
            tables.push(("coupled.csv", coupled_csv(&traj)));
            serde_json::json!({
                "event_count": traj.event_count,
                "t_end": traj.t_end,
                "breakdown_time": traj.breakdown_time,
                "lower_frozen_after_breakdown": traj.lower_frozen_after_breakdown,
                "ordering_violations": traj.ordering_violations,
                "upper_extinct_at": traj.upper_extinct_at,
                "lower_extinct_at": traj.lower_extinct_at,
                "epidemic_extinct_at": traj.epidemic_extinct_at,
            })
        }
        Command::Ode => {
            let sol = integrate_on_grid(p, spec.ode_start(), o.t_max, o.dt, o.grid_step)?;
            tables.push(("ode.csv", ode_csv(&sol)));
            serde_json::json!({
                "dt": sol.dt,
                "terminal_state": sol.terminal(),
                "converged_to": sol.converged_to,
                "oscillations": ode::damped_oscillation_report(&sol),
            })
        }
        Command::Compare => {
            let start = spec.ode_start();
            let initial = largest_remainder_counts(p.n0, &start);
            // start the fluid limit exactly where the rounded counts are
            let z0 = ScaledState::from_counts(&initial, p.n0 as f64);
            let sol = integrate_on_grid(p, z0, o.t_max, o.dt, o.grid_step)?;
            let traj = simulate_epidemic(&spec.sim_config(initial).run_past_extinction())?;
            terminal = Some(traj.terminal);
            let sup = ode::compare_scaled(p, &traj, &sol)?;
            tables.push(("compare.csv", compare_csv(p, &traj, &sol)?));
            serde_json::json!({ "initial": initial, "sup_deviation": sup })
        }
        Command::Ensemble => {
            let mut sim = spec
                .sim_config(spec.single_start())
                .with_takeoff_threshold(o.takeoff_threshold);
            if o.takeoff_threshold.is_some() {
                sim.sample_grid = None;
            }
            let mut cfg = EnsembleConfig::new(sim, o.replicates);
            cfg.extinction_horizon = o.extinction_horizon.unwrap_or(o.t_max);
            cfg.parallelism = o.parallelism;
            if o.takeoff_threshold.is_none() {
                cfg.growth_window = Some(cfg.default_growth_window());
            }
            let stats = run_ensemble(&cfg)?;
            tables.push(("ensemble.csv", ensemble_csv(&stats)));
            serde_json::json!({
                "replicates": stats.replicates,
                "extinction_freq": stats.extinction_freq,
                "theory_minor_outbreak_prob": theory.minor_outbreak_prob,
                "survivors": stats.survivors,
                "growth_window": cfg.growth_window,
                "mean_growth_rate": stats.mean_growth_rate,
                "theory_alpha": theory.alpha,
            })
        }
    };
    Ok(RunOutput {
        spec: spec.clone(),
        theory,
        terminal,
        details,
        tables,
    })
}

fn write_file(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|source| Error::Io { path, source })
}

fn pretty<T: Serialize>(x: &T) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("serializable");
    s.push('\n');
    s
}

/// Writes `summary.json`, `run_spec.json` and the CSV tables into `dir`,
/// creating it if needed. Returns the paths written.
pub fn emit_outputs(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let o = &output.spec.options;
    let streams = match output.spec.command {
        Command::Ensemble => o.replicates,
        Command::Theory | Command::Ode => 0,
        _ => 1,
    };
    let summary = Summary {
        tool: "epigrow".into(),
        version: VERSION.into(),
        command: output.spec.command,
        seed: o.seed,
        streams,
        theory: output.theory.clone(),
        terminal: output.terminal,
        details: output.details.clone(),
        spec: output.spec.clone(),
    };
    let mut written = Vec::new();
    for (name, contents) in output.tables.iter().map(|(n, c)| (*n, c.clone())).chain([
        ("summary.json", pretty(&summary)),
        ("run_spec.json", pretty(&output.spec)),
    ]) {
        let path = dir.join(name);
        write_file(path.clone(), &contents)?;
        written.push(path);
    }
    Ok(written)
}
