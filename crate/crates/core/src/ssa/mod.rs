//! Exact event-by-event simulation.
//!
//! All engines use the direct method: draw an exponential holding time
//! with the total jump rate, then pick the event with probability
//! proportional to its rate. States are recorded on an optional sample
//! grid (the state at grid time `t` is the state after the last jump at or
//! before `t`) plus the initial and terminal states.

mod ages;
mod coupled;
mod epidemic;
mod growth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PopulationState, Variant};

pub use ages::{simulate_population_with_ages, AgeSample};
pub use coupled::{simulate_coupled_sandwich, CoupledSample, CoupledTrajectory, CouplingOptions};
pub use epidemic::{simulate_epidemic, simulate_epidemic_observed, EventObserver, NoObserver};
pub use growth::{estimate_growth_rate, estimate_log_slope, Observable};

pub const DEFAULT_MAX_EVENTS: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub initial: PopulationState,
    pub t_max: f64,
    pub max_events: u64,
    pub seed: u64,
    /// Random stream within `seed`; ensembles use the replicate index.
    #[serde(default)]
    pub stream: u64,
    /// Strictly increasing sampling times in `(0, t_max]`.
    #[serde(default)]
    pub sample_grid: Option<Vec<f64>>,
    /// End the run as soon as no latent or infectious individual is left.
    #[serde(default = "default_true")]
    pub stop_on_epidemic_extinction: bool,
    /// End the run once `e + i` reaches this many individuals.
    #[serde(default)]
    pub takeoff_threshold: Option<u64>,
}

fn default_true() -> bool {
    true
}

impl SimConfig {
    /// Run from `initial` to `t_max` with seed 0, no sample grid and the
    /// default event cap.
    pub fn new(params: ModelParams, initial: PopulationState, t_max: f64) -> Self {
        SimConfig {
            params,
            initial,
            t_max,
            max_events: DEFAULT_MAX_EVENTS,
            seed: 0,
            stream: 0,
            sample_grid: None,
            stop_on_epidemic_extinction: true,
            takeoff_threshold: None,
        }
    }

    /// One infective among `params.n0` individuals.
    pub fn single_infective(params: ModelParams, t_max: f64) -> Self {
        SimConfig::new(params, PopulationState::single_infective(params.n0), t_max)
    }

    /// One newly infected individual, latent under SEIR.
    pub fn index_case(params: ModelParams, t_max: f64) -> Self {
        SimConfig::new(
            params,
            PopulationState::index_cases(params.variant(), params.n0, 1),
            t_max,
        )
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_grid_step(mut self, step: f64) -> Self {
        self.sample_grid = Some(uniform_grid(step, self.t_max));
        self
    }

    pub fn with_max_events(mut self, max_events: u64) -> Self {
        self.max_events = max_events;
        self
    }

    pub fn with_takeoff_threshold(mut self, threshold: Option<u64>) -> Self {
        self.takeoff_threshold = threshold;
        self
    }

    pub fn run_past_extinction(mut self) -> Self {
        self.stop_on_epidemic_extinction = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::config("t_max", "must be positive and finite"));
        }
        if self.max_events == 0 {
            return Err(Error::config("max_events", "must be > 0"));
        }
        if self.params.variant() == Variant::Sir && self.initial.e != 0 {
            return Err(Error::config("initial", "exposed count must be 0 for SIR"));
        }
        if let Some(grid) = &self.sample_grid {
            if grid.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::config(
                    "sample_grid",
                    "times must be strictly increasing",
                ));
            }
            if grid
                .iter()
                .any(|&t| !(t > 0.0) || t > self.t_max * (1.0 + 1e-12))
            {
                return Err(Error::config("sample_grid", "times must lie in (0, t_max]"));
            }
        }
        if self.takeoff_threshold == Some(0) {
            return Err(Error::config("takeoff_threshold", "must be >= 1"));
        }
        Ok(())
    }
}

/// `step, 2 step, ...` up to and including `t_max` (when it is a multiple).
pub fn uniform_grid(step: f64, t_max: f64) -> Vec<f64> {
    if !(step > 0.0) {
        return Vec::new();
    }
    let count = (t_max / step + 1e-9).floor() as usize;
    (1..=count).map(|k| k as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    ReachedTmax,
    EpidemicExtinct,
    PopulationExtinct,
    EventCapHit,
    /// The infected count reached the configured take-off threshold.
    TookOff,
    /// The coupling broke down and the run was configured to stop there.
    CouplingBroken,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: PopulationState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub terminal: Terminal,
    pub event_count: u64,
    /// Time the run ended (`t_max` unless it stopped early).
    pub t_end: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> PopulationState {
        self.samples
            .last()
            .expect("trajectory holds the initial sample")
            .state
    }

    /// State at time `t`, read from the samples. Exact when `t` is a sample
    /// time; `None` past the end of the run.
    pub fn state_at(&self, t: f64) -> Option<PopulationState> {
        let tol = 1e-9 * t.abs().max(1.0);
        if t > self.t_end + tol {
            return None;
        }
        let k = self.samples.partition_point(|s| s.t <= t + tol);
        (k > 0).then(|| self.samples[k - 1].state)
    }

    /// Whether the run ended because the epidemic died out by itself.
    pub fn epidemic_died_out(&self) -> bool {
        matches!(
            self.terminal,
            Terminal::EpidemicExtinct | Terminal::PopulationExtinct
        ) || self.final_state().infected() == 0
    }
}

/// Records grid samples while a run advances.
pub(crate) struct GridRecorder<'a> {
    grid: &'a [f64],
    next: usize,
}

impl<'a> GridRecorder<'a> {
    pub(crate) fn new(grid: Option<&'a [f64]>) -> Self {
        GridRecorder {
            grid: grid.unwrap_or(&[]),
            next: 0,
        }
    }

    /// Emits every grid time strictly before `t` with the current value.
    #[inline]
    pub(crate) fn advance_to<T: Copy>(&mut self, t: f64, value: T, out: &mut Vec<(f64, T)>) {
        while self.next < self.grid.len() && self.grid[self.next] < t {
            out.push((self.grid[self.next], value));
            self.next += 1;
        }
    }

    /// Emits remaining grid times up to and including `t`.
    pub(crate) fn finish_at<T: Copy>(&mut self, t: f64, value: T, out: &mut Vec<(f64, T)>) {
        while self.next < self.grid.len() && self.grid[self.next] <= t {
            out.push((self.grid[self.next], value));
            self.next += 1;
        }
        if out.last().is_none_or(|&(last, _)| last < t) {
            out.push((t, value));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_endpoint() {
        let g = uniform_grid(0.1, 1.0);
        assert_eq!(g.len(), 10);
        assert!((g[9] - 1.0).abs() < 1e-12);
        assert_eq!(uniform_grid(0.3, 1.0).len(), 3);
    }

    #[test]
    fn config_validation() {
        let p = ModelParams::sir(1.0, 0.5, 3.0, 1.0, 100).unwrap();
        let ok = SimConfig::single_infective(p, 5.0).with_grid_step(0.5);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.sample_grid = Some(vec![1.0, 0.5]);
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.t_max = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.initial.e = 1;
        assert!(bad.validate().is_err());
        assert!(ok.clone().with_max_events(0).validate().is_err());
    }
}
