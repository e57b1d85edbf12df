//! Monte Carlo ensembles of independent replicates.
//!
//! Replicate `k` runs the template [`SimConfig`] on random stream `k` of the
//! master seed, so its result does not depend on which worker ran it or
//! when. Results are collected in replicate order before any reduction,
//! which makes every statistic bit-for-bit reproducible for any number of
//! workers, including the sequential build without the `parallel` feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventKind, ModelParams};
use crate::ssa::{
    estimate_growth_rate, simulate_epidemic_observed, EventObserver, SimConfig, Terminal,
    Trajectory,
};
use crate::stats::{
    binomial_upper_tail, mean_estimate, wilson_interval, MeanEstimate, Proportion, Z95,
};
use crate::theory::{classify_scenario, endemic_equilibrium, Scenario};

/// Fewest surviving replicates accepted by [`endemic_level_check`].
pub const MIN_SURVIVORS: usize = 30;

/// Relative distance from the equilibrium prevalence counted as "near".
pub const NEAR_EQUILIBRIUM_RTOL: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Template run; replicate `k` uses `sim.seed` with stream `k`.
    pub sim: SimConfig,
    pub replicates: u64,
    /// A replicate whose epidemic died out by this time is a minor outbreak.
    pub extinction_horizon: f64,
    /// Window `(t_a, t_b)` for time-averaged proportions of survivors.
    #[serde(default)]
    pub endemic_window: Option<(f64, f64)>,
    /// Window for survivor growth-rate fits.
    #[serde(default)]
    pub growth_window: Option<(f64, f64)>,
    /// Worker count; `None` uses every available core.
    #[serde(default)]
    pub parallelism: Option<usize>,
}

impl EnsembleConfig {
    pub fn new(sim: SimConfig, replicates: u64) -> Self {
        let extinction_horizon = sim.t_max;
        EnsembleConfig {
            sim,
            replicates,
            extinction_horizon,
            endemic_window: None,
            growth_window: None,
            parallelism: None,
        }
    }

    /// Growth window `[0.3 h, 0.8 h]` for extinction horizon `h`.
    pub fn default_growth_window(&self) -> (f64, f64) {
        (0.3 * self.extinction_horizon, 0.8 * self.extinction_horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be >= 1"));
        }
        let horizon = self.extinction_horizon;
        if !(horizon > 0.0 && horizon <= self.sim.t_max) {
            return Err(Error::config(
                "extinction_horizon",
                "must lie in (0, t_max]",
            ));
        }
        for (field, window) in [
            ("endemic_window", self.endemic_window),
            ("growth_window", self.growth_window),
        ] {
            if let Some((a, b)) = window {
                if !(0.0 <= a && a < b && b <= self.sim.t_max) {
                    return Err(Error::config(field, "need 0 <= start < end <= t_max"));
                }
                if self.sim.sample_grid.is_none() {
                    return Err(Error::config(field, "windows need a sample grid"));
                }
            }
        }
        if self.parallelism == Some(0) {
            return Err(Error::config("parallelism", "must be >= 1"));
        }
        Ok(())
    }
}

/// What one replicate contributed to the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub index: u64,
    pub terminal: Terminal,
    /// The epidemic died out at or before the extinction horizon.
    pub minor_outbreak: bool,
    /// Time the last latent or infectious individual left, if that happened.
    pub extinction_time: Option<f64>,
    pub t_end: f64,
    pub event_count: u64,
    pub growth_rate: Option<f64>,
    /// Time-averaged `[S/N, E/N, I/N, R/N]` over the endemic window.
    pub endemic_avg: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub replicates: u64,
    pub extinction_freq: Proportion,
    pub survivors: usize,
    pub mean_growth_rate: Option<MeanEstimate>,
    pub endemic_avg: Option<[MeanEstimate; 4]>,
    pub per_replicate: Vec<ReplicateSummary>,
}

/// Runs `f(k)` for `k in 0..count` on up to `parallelism` workers and
/// returns the results in index order. The first error (lowest index) wins.
pub fn map_replicates<T, F>(count: u64, parallelism: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let wrap = |k: u64| {
        f(k).map_err(|e| Error::Replicate {
            index: k,
            source: Box::new(e),
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || (0..count).into_par_iter().map(wrap).collect::<Vec<_>>();
        let results = match parallelism {
            Some(threads) => rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::config("parallelism", e.to_string()))?
                .install(run),
            None => run(),
        };
        results.into_iter().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = parallelism;
        (0..count).map(wrap).collect()
    }
}

/// Tracks `e + i` from the event stream to time-stamp the epidemic's end.
struct ExtinctionClock {
    infected: u64,
    at: Option<f64>,
}

impl EventObserver for ExtinctionClock {
    fn on_event(&mut self, t: f64, event: EventKind) {
        match event {
            EventKind::Infection => self.infected += 1,
            EventKind::DeathE | EventKind::DeathI | EventKind::Recovery => {
                self.infected -= 1;
                if self.infected == 0 && self.at.is_none() {
                    self.at = Some(t);
                }
            }
            _ => {}
        }
    }
}

/// Runs replicate `k` of the template and also returns when its epidemic
/// ended, if it did.
pub fn run_replicate(sim: &SimConfig, k: u64) -> Result<(Trajectory, Option<f64>)> {
    let cfg = sim.clone().with_stream(k);
    let infected = cfg.initial.infected();
    let mut clock = ExtinctionClock {
        infected,
        at: (infected == 0).then_some(0.0),
    };
    let traj = simulate_epidemic_observed(&cfg, &mut clock)?;
    Ok((traj, clock.at))
}

/// Mean of the sampled proportions over `[a, b]`. Samples sit on the
/// configured grid, so this is the grid approximation of the time average.
fn window_average(traj: &Trajectory, (a, b): (f64, f64)) -> Option<[f64; 4]> {
    let mut acc = [0.0; 4];
    let mut count = 0usize;
    for s in traj
        .samples
        .iter()
        .filter(|s| s.t >= a - 1e-9 && s.t <= b + 1e-9)
    {
        let n = s.state.total();
        if n == 0 || s.state.infected() == 0 {
            return None;
        }
        for (x, c) in acc.iter_mut().zip(s.state.as_array()) {
            *x += c as f64 / n as f64;
        }
        count += 1;
    }
    (count > 0 && traj.t_end >= b - 1e-9).then(|| acc.map(|x| x / count as f64))
}

fn summarize_replicate(
    config: &EnsembleConfig,
    index: u64,
    traj: &Trajectory,
    extinction_time: Option<f64>,
) -> Result<ReplicateSummary> {
    let minor_outbreak = extinction_time.is_some_and(|t| t <= config.extinction_horizon);
    let growth_rate = match config.growth_window {
        Some(window) if !minor_outbreak => match estimate_growth_rate(traj, window) {
            Ok(rate) => Some(rate),
            Err(Error::WindowContainsExtinction { .. }) => None,
            Err(e) => return Err(e),
        },
        _ => None,
    };
    let endemic_avg = match config.endemic_window {
        Some(window) if !minor_outbreak => window_average(traj, window),
        _ => None,
    };
    Ok(ReplicateSummary {
        index,
        terminal: traj.terminal,
        minor_outbreak,
        extinction_time,
        t_end: traj.t_end,
        event_count: traj.event_count,
        growth_rate,
        endemic_avg,
    })
}

pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleStats> {
    config.validate()?;
    let per_replicate = map_replicates(config.replicates, config.parallelism, |k| {
        let (traj, extinction_time) = run_replicate(&config.sim, k)?;
        summarize_replicate(config, k, &traj, extinction_time)
    })?;
    Ok(reduce(config.replicates, per_replicate))
}

fn reduce(replicates: u64, per_replicate: Vec<ReplicateSummary>) -> EnsembleStats {
    let minor = per_replicate.iter().filter(|r| r.minor_outbreak).count();
    let rates: Vec<f64> = per_replicate.iter().filter_map(|r| r.growth_rate).collect();
    let averages: Vec<[f64; 4]> = per_replicate.iter().filter_map(|r| r.endemic_avg).collect();
    let endemic_avg = (!averages.is_empty()).then(|| {
        std::array::from_fn(|c| {
            let column: Vec<f64> = averages.iter().map(|a| a[c]).collect();
            mean_estimate(&column).expect("nonempty")
        })
    });
    EnsembleStats {
        replicates,
        extinction_freq: wilson_interval(minor as u64, replicates, Z95),
        survivors: per_replicate.len() - minor,
        mean_growth_rate: mean_estimate(&rates),
        endemic_avg,
        per_replicate,
    }
}

/// Expected number of jumps a surviving replicate makes up to time `t`,
/// from the mean population size `n0 e^{(lambda - mu) t}`.
pub fn expected_events(params: &ModelParams, t: f64) -> f64 {
    let g = params.pop_growth();
    params.n0 as f64 * (params.lambda + params.mu) / g * (g * t).exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndemicReport {
    pub window: (f64, f64),
    pub survivors: usize,
    pub equilibrium: [f64; 4],
    pub averages: [MeanEstimate; 4],
    /// Relative error per compartment; absolute error where the equilibrium
    /// component is 0 (the `E` slot of SIR).
    pub errors: [f64; 4],
    pub max_relative_error: f64,
}

/// Survivor time averages over the endemic window against the equilibrium.
pub fn endemic_level_check(config: &EnsembleConfig) -> Result<EndemicReport> {
    config.validate()?;
    let window = config
        .endemic_window
        .ok_or_else(|| Error::config("endemic_window", "required for the endemic check"))?;
    let params = &config.sim.params;
    let scenario = classify_scenario(params)?;
    let equilibrium = match (scenario, endemic_equilibrium(params)) {
        (Scenario::EndemicCapable, Some(z)) => z.to_array(),
        _ => {
            return Err(Error::Precondition(format!(
                "endemic check needs alpha > lambda - mu, scenario is {scenario:?}"
            )))
        }
    };
    let expected = expected_events(params, window.1);
    if expected > config.sim.max_events as f64 {
        return Err(Error::BudgetExceeded {
            t_end: window.1,
            expected_events: expected,
            budget: config.sim.max_events,
        });
    }
    let stats = run_ensemble(config)?;
    let averages = match stats.endemic_avg {
        Some(a) if a[0].count >= MIN_SURVIVORS => a,
        other => {
            return Err(Error::InsufficientSurvivors {
                survivors: other.map_or(0, |a| a[0].count),
                required: MIN_SURVIVORS,
            })
        }
    };
    let errors: [f64; 4] = std::array::from_fn(|c| {
        let diff = (averages[c].mean - equilibrium[c]).abs();
        if equilibrium[c] > 0.0 {
            diff / equilibrium[c]
        } else {
            diff
        }
    });
    Ok(EndemicReport {
        window,
        survivors: averages[0].count,
        equilibrium,
        averages,
        errors,
        max_relative_error: errors.iter().copied().fold(0.0, f64::max),
    })
}

/// Checkpoint readings of one surviving replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSample {
    pub index: u64,
    /// `I` at each checkpoint.
    pub infectious: Vec<u64>,
    /// `I/N` at each checkpoint.
    pub prevalence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub scenario: Scenario,
    pub replicates: u64,
    pub survivors: usize,
    pub checkpoints: Vec<f64>,
    /// Survivor mean of `I/N` at each checkpoint.
    pub mean_prevalence: Vec<f64>,
    /// Survivors for which the tested change (see the report fields) held.
    pub successes: usize,
    /// One-sided binomial p-value of `successes` against a fair coin.
    pub p_value: f64,
    pub samples: Vec<CheckpointSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    /// Slow-growth arm; success means `I/N` fell between `T/2` and `T`.
    pub subdominant: ArmReport,
    /// Fast-growth arm; success means `I` rose between `T/2` and `T`.
    pub endemic: ArmReport,
    /// Survivor means of `I/N` at `T/3`, `2T/3` and `T` keep falling.
    pub subdominant_monotone: bool,
    pub endemic_prevalence: f64,
    pub equilibrium_prevalence: f64,
    pub endemic_near_equilibrium: bool,
}

/// Checkpoints `T/3, T/2, 2T/3, T` of a run ending at `T`.
pub fn checkpoints(t_max: f64) -> Vec<f64> {
    vec![t_max / 3.0, t_max / 2.0, 2.0 * t_max / 3.0, t_max]
}

fn checkpoint_arm(
    config: &EnsembleConfig,
    scenario: Scenario,
    rises: fn(&CheckpointSample) -> bool,
) -> Result<ArmReport> {
    config.validate()?;
    let times = checkpoints(config.sim.t_max);
    let mut sim = config.sim.clone();
    sim.sample_grid = Some(times.clone());
    sim.takeoff_threshold = None;
    sim.stop_on_epidemic_extinction = true;
    let runs = map_replicates(config.replicates, config.parallelism, |k| {
        let (traj, _) = run_replicate(&sim, k)?;
        if traj.terminal != Terminal::ReachedTmax || traj.final_state().infected() == 0 {
            return Ok(None);
        }
        let mut infectious = Vec::with_capacity(times.len());
        let mut prevalence = Vec::with_capacity(times.len());
        for &t in &times {
            let state = traj.state_at(t).expect("grid time within the run");
            infectious.push(state.i);
            prevalence.push(state.i as f64 / state.total() as f64);
        }
        Ok(Some(CheckpointSample {
            index: k,
            infectious,
            prevalence,
        }))
    })?;
    let samples: Vec<CheckpointSample> = runs.into_iter().flatten().collect();
    let survivors = samples.len();
    if survivors == 0 {
        return Err(Error::InsufficientSurvivors {
            survivors: 0,
            required: 1,
        });
    }
    let mean_prevalence = (0..times.len())
        .map(|c| samples.iter().map(|s| s.prevalence[c]).sum::<f64>() / survivors as f64)
        .collect();
    let successes = samples.iter().filter(|s| rises(s)).count();
    Ok(ArmReport {
        scenario,
        replicates: config.replicates,
        survivors,
        checkpoints: times,
        mean_prevalence,
        successes,
        p_value: binomial_upper_tail(successes as u64, survivors as u64, 0.5),
        samples,
    })
}

/// Contrasts a slow-growth parameter set (`0 < alpha < lambda - mu`) with
/// an endemic-capable one (`alpha > lambda - mu`) among surviving runs.
pub fn scenario_discrimination(
    a: &EnsembleConfig,
    b: &EnsembleConfig,
) -> Result<DiscriminationReport> {
    let scenario_a = classify_scenario(&a.sim.params)?;
    let scenario_b = classify_scenario(&b.sim.params)?;
    if scenario_a != Scenario::SubdominantGrowth {
        return Err(Error::Precondition(format!(
            "first parameter set needs 0 < alpha < lambda - mu, scenario is {scenario_a:?}"
        )));
    }
    if scenario_b != Scenario::EndemicCapable {
        return Err(Error::Precondition(format!(
            "second parameter set needs alpha > lambda - mu, scenario is {scenario_b:?}"
        )));
    }
    // checkpoint indices: 0 = T/3, 1 = T/2, 2 = 2T/3, 3 = T
    let subdominant = checkpoint_arm(a, scenario_a, |s| s.prevalence[3] < s.prevalence[1])?;
    let endemic = checkpoint_arm(b, scenario_b, |s| s.infectious[3] > s.infectious[1])?;
    let m = &subdominant.mean_prevalence;
    let subdominant_monotone = m[0] > m[2] && m[2] > m[3];
    let equilibrium_prevalence = endemic_equilibrium(&b.sim.params)
        .expect("endemic-capable")
        .i;
    let endemic_prevalence = endemic.mean_prevalence[3];
    Ok(DiscriminationReport {
        endemic_near_equilibrium: (endemic_prevalence - equilibrium_prevalence).abs()
            <= NEAR_EQUILIBRIUM_RTOL * equilibrium_prevalence,
        subdominant,
        endemic,
        subdominant_monotone,
        endemic_prevalence,
        equilibrium_prevalence,
    })
}
