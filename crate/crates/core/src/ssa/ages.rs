use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

const MAX_ATTEMPTS: u32 = 10_000;

/// Ages of everyone alive at `t_max` in a surviving population run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSample {
    pub t_max: f64,
    pub ages: Vec<f64>,
    /// Runs discarded because the population died out.
    pub retries: u32,
    pub event_count: u64,
}

/// Individual-level birth-death simulation that keeps every birth time.
///
/// Founders have age 0 at time 0. A run whose population dies out is
/// discarded and restarted on the same random stream.
pub fn simulate_population_with_ages(config: &SimConfig) -> Result<AgeSample> {
    let founders = config.initial.total();
    if config.t_max == 0.0 {
        config.params.validate()?;
        return Ok(AgeSample {
            t_max: 0.0,
            ages: vec![0.0; founders as usize],
            retries: 0,
            event_count: 0,
        });
    }
    config.validate()?;
    let p = &config.params;
    if p.gamma > 0.0 && config.initial.infected() > 0 {
        return Err(Error::Precondition(
            "age tracking needs the epidemic disabled (gamma = 0 or no infected)".into(),
        ));
    }
    if founders == 0 {
        return Err(Error::config("initial", "population must be nonempty"));
    }
    let total_rate = p.lambda + p.mu;
    let birth_share = p.lambda / total_rate;
    let mut rng = stream_rng(config.seed, config.stream);
    let mut events = 0_u64;

    for attempt in 0..MAX_ATTEMPTS {
        let mut born: Vec<f64> = vec![0.0; founders as usize];
        let mut t = 0.0_f64;
        loop {
            if born.is_empty() {
                break;
            }
            t += rng.sample::<f64, _>(Exp1) / (total_rate * born.len() as f64);
            if t > config.t_max {
                return Ok(AgeSample {
                    t_max: config.t_max,
                    ages: born.iter().map(|&b| config.t_max - b).collect(),
                    retries: attempt,
                    event_count: events,
                });
            }
            if rng.random::<f64>() < birth_share {
                born.push(t);
            } else {
                let k = rng.random_range(0..born.len());
                born.swap_remove(k);
            }
            events += 1;
            if events >= config.max_events {
                return Err(Error::BudgetExceeded {
                    t_end: config.t_max,
                    expected_events: events as f64,
                    budget: config.max_events,
                });
            }
        }
    }
    Err(Error::RetriesExhausted {
        attempts: MAX_ATTEMPTS,
    })
}
