use rand::Rng;
use rand_distr::Exp1;

use super::{GridRecorder, Sample, SimConfig, Terminal, Trajectory};
use crate::error::Result;
use crate::model::{apply_event_unchecked, EventKind, EventRates};
use crate::rng::stream_rng;

/// Hook into every holding interval and jump of [`simulate_epidemic_observed`].
pub trait EventObserver {
    /// The chain held its state for `dt` with these rates.
    fn on_interval(&mut self, _dt: f64, _rates: &EventRates) {}
    /// `event` fired at time `t`.
    fn on_event(&mut self, _t: f64, _event: EventKind) {}
}

pub struct NoObserver;

impl EventObserver for NoObserver {}

/// One exact realization of the SIR/SEIR chain.
pub fn simulate_epidemic(config: &SimConfig) -> Result<Trajectory> {
    simulate_epidemic_observed(config, &mut NoObserver)
}

pub fn simulate_epidemic_observed<O: EventObserver>(
    config: &SimConfig,
    observer: &mut O,
) -> Result<Trajectory> {
    config.validate()?;
    let params = &config.params;
    let variant = params.variant();
    let (lambda, mu, gamma, delta) = (params.lambda, params.mu, params.gamma, params.delta);
    let nu = params.nu.unwrap_or(0.0);
    let lambda_plus_mu = lambda + mu;

    let mut rng = stream_rng(config.seed, config.stream);
    let mut recorder = GridRecorder::new(config.sample_grid.as_deref());
    let mut samples = vec![(0.0, config.initial)];

    let mut state = config.initial;
    let mut t = 0.0_f64;
    let mut events = 0_u64;

    let (terminal, t_end) = loop {
        let n = state.total();
        if n == 0 {
            break (Terminal::PopulationExtinct, t);
        }
        let nf = n as f64;
        let (s, e, i) = (state.s as f64, state.e as f64, state.i as f64);
        let rates = EventRates([
            lambda * nf,
            mu * s,
            mu * e,
            mu * i,
            mu * state.r as f64,
            gamma * i * s / nf,
            nu * e,
            delta * i,
        ]);
        // the deaths sum to mu N
        let total = lambda_plus_mu * nf + rates.0[5] + rates.0[6] + rates.0[7];
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        let t_next = t + hold;
        if t_next > config.t_max {
            observer.on_interval(config.t_max - t, &rates);
            break (Terminal::ReachedTmax, config.t_max);
        }
        observer.on_interval(hold, &rates);
        recorder.advance_to(t_next, state, &mut samples);

        let event = pick_event(&rates, rng.random::<f64>() * total);
        let was_infected = state.e + state.i > 0;
        apply_event_unchecked(variant, &mut state, event);
        t = t_next;
        events += 1;
        observer.on_event(t, event);

        if config.stop_on_epidemic_extinction && was_infected && state.infected() == 0 {
            let terminal = if state.total() == 0 {
                Terminal::PopulationExtinct
            } else {
                Terminal::EpidemicExtinct
            };
            break (terminal, t);
        }
        if let Some(k) = config.takeoff_threshold {
            if state.infected() >= k {
                break (Terminal::TookOff, t);
            }
        }
        if events >= config.max_events {
            break (Terminal::EventCapHit, t);
        }
    };
    recorder.finish_at(t_end, state, &mut samples);

    Ok(Trajectory {
        samples: samples
            .into_iter()
            .map(|(t, state)| Sample { t, state })
            .collect(),
        terminal,
        event_count: events,
        t_end,
    })
}

/// Event whose cumulative-rate bin contains `target`, never one with rate 0.
#[inline]
fn pick_event(rates: &EventRates, mut target: f64) -> EventKind {
    let mut fallback = EventKind::Birth;
    for (k, &rate) in rates.0.iter().enumerate() {
        if rate > 0.0 {
            if target < rate {
                return EventKind::ALL[k];
            }
            target -= rate;
            fallback = EventKind::ALL[k];
        }
    }
    fallback
}
