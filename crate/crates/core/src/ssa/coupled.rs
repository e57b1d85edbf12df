//! Joint realization of the SIR epidemic and two linear birth-death
//! processes that bound its infective count from below and above.
//!
//! Every contact made by an epidemic infective draws one uniform `U`:
//!
//! * `U < S/N`: the contact infects (epidemic and upper process gain one);
//!   if additionally `U < 1 - eps0` and the infector belongs to the lower
//!   process, the lower process gains one as well;
//! * `U >= S/N`: the upper process gains a ghost.
//!
//! Ghosts give birth at rate `gamma` and die at rate `delta + mu`, always
//! to and as ghosts. Lower-process members are a marked subset of the
//! epidemic infectives, so removals are shared. While `S/N >= 1 - eps0`
//! an accepted lower contact always finds a susceptible, which gives
//! `lower <= epidemic <= upper`. Once `S/N` first drops below `1 - eps0`
//! the lower process is frozen at its current value.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{GridRecorder, SimConfig, Terminal};
use crate::error::{Error, Result};
use crate::model::Variant;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingOptions {
    /// Susceptible-depletion threshold; the coupling holds while `S/N >= 1 - eps0`.
    pub eps0: f64,
    /// End the run at the breakdown time.
    pub stop_at_breakdown: bool,
}

impl CouplingOptions {
    pub fn new(eps0: f64) -> Self {
        CouplingOptions {
            eps0,
            stop_at_breakdown: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledSample {
    pub t: f64,
    pub i_lower: u64,
    pub i_epidemic: u64,
    pub i_upper: u64,
    pub s_over_n: f64,
    pub broken: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledTrajectory {
    pub samples: Vec<CoupledSample>,
    pub eps0: f64,
    /// First time `S/N < 1 - eps0`.
    pub breakdown_time: Option<f64>,
    /// The lower process stops evolving at breakdown.
    pub lower_frozen_after_breakdown: bool,
    pub terminal: Terminal,
    pub event_count: u64,
    pub t_end: f64,
    /// Events at which `lower <= epidemic <= upper` failed before breakdown.
    pub ordering_violations: u64,
    pub upper_extinct_at: Option<f64>,
    /// Only set when the lower process died before breakdown.
    pub lower_extinct_at: Option<f64>,
    pub epidemic_extinct_at: Option<f64>,
}

#[derive(Clone, Copy)]
struct Counts {
    s: u64,
    i: u64,
    r: u64,
    ghosts: u64,
    lower: u64,
}

impl Counts {
    fn n(&self) -> u64 {
        self.s + self.i + self.r
    }

    fn s_over_n(&self) -> f64 {
        match self.n() {
            0 => 0.0,
            n => self.s as f64 / n as f64,
        }
    }

    fn upper(&self) -> u64 {
        self.i + self.ghosts
    }
}

#[derive(Clone, Copy)]
enum Jump {
    Birth,
    DeathS,
    DeathR,
    RemoveInfective,
    Contact,
    GhostBirth,
    GhostDeath,
}

/// Simulates the sandwich coupling for the SIR model.
pub fn simulate_coupled_sandwich(
    config: &SimConfig,
    options: CouplingOptions,
) -> Result<CoupledTrajectory> {
    config.validate()?;
    let eps0 = options.eps0;
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::config("eps0", "must lie in (0, 1)"));
    }
    if config.params.variant() != Variant::Sir {
        return Err(Error::Precondition(
            "the sandwich coupling is defined for the SIR model only".into(),
        ));
    }
    if config.initial.i == 0 {
        return Err(Error::Precondition(
            "need at least one initial infective".into(),
        ));
    }
    let p = config.params;
    let removal = p.removal_rate();
    let accept_lower = 1.0 - eps0;

    let mut rng = stream_rng(config.seed, config.stream);
    let mut recorder = GridRecorder::new(config.sample_grid.as_deref());
    let mut c = Counts {
        s: config.initial.s,
        i: config.initial.i,
        r: config.initial.r,
        ghosts: 0,
        lower: config.initial.i,
    };
    let snapshot = |c: &Counts, broken: bool| (c.lower, c.i, c.upper(), c.s_over_n(), broken);
    let mut samples = vec![(0.0, snapshot(&c, false))];

    let mut t = 0.0_f64;
    let mut events = 0_u64;
    let mut breakdown_time = None;
    let mut violations = 0_u64;
    let mut upper_extinct_at = None;
    let mut lower_extinct_at = None;
    let mut epidemic_extinct_at = None;
    if c.s_over_n() < accept_lower {
        breakdown_time = Some(0.0);
    }

    let (terminal, t_end) = loop {
        if c.upper() == 0 && c.n() == 0 {
            break (Terminal::PopulationExtinct, t);
        }
        if c.upper() == 0 {
            break (Terminal::EpidemicExtinct, t);
        }
        let n = c.n() as f64;
        let i = c.i as f64;
        let g = c.ghosts as f64;
        let rates = [
            p.lambda * n,
            p.mu * c.s as f64,
            p.mu * c.r as f64,
            removal * i,
            p.gamma * i,
            p.gamma * g,
            removal * g,
        ];
        let total: f64 = rates.iter().sum();
        let t_next = t + rng.sample::<f64, _>(Exp1) / total;
        if t_next > config.t_max {
            break (Terminal::ReachedTmax, config.t_max);
        }
        let broken = breakdown_time.is_some();
        recorder.advance_to(t_next, snapshot(&c, broken), &mut samples);
        t = t_next;

        let mut target = rng.random::<f64>() * total;
        let mut jump = Jump::GhostDeath;
        for (k, &rate) in rates.iter().enumerate() {
            if rate > 0.0 && target < rate {
                jump = [
                    Jump::Birth,
                    Jump::DeathS,
                    Jump::DeathR,
                    Jump::RemoveInfective,
                    Jump::Contact,
                    Jump::GhostBirth,
                    Jump::GhostDeath,
                ][k];
                break;
            }
            target -= rate;
        }
        if matches!(jump, Jump::GhostDeath) && c.ghosts == 0 {
            // rounding pushed the target past the last nonzero bin
            jump = if c.i > 0 {
                Jump::RemoveInfective
            } else {
                Jump::Birth
            };
        }

        match jump {
            Jump::Birth => c.s += 1,
            Jump::DeathS => c.s -= 1,
            Jump::DeathR => c.r -= 1,
            Jump::RemoveInfective => {
                let lower_member =
                    !broken && c.lower > 0 && rng.random::<f64>() * (c.i as f64) < c.lower as f64;
                c.i -= 1;
                // recovery and death both remove the individual from every process;
                // only recoveries add to R
                if rng.random::<f64>() * removal < p.delta {
                    c.r += 1;
                }
                if lower_member {
                    c.lower -= 1;
                }
            }
            Jump::Contact => {
                let u = rng.random::<f64>();
                if u < c.s_over_n() {
                    let lower_infector = !broken
                        && u < accept_lower
                        && c.lower > 0
                        && rng.random::<f64>() * (c.i as f64) < c.lower as f64;
                    c.s -= 1;
                    c.i += 1;
                    if lower_infector {
                        c.lower += 1;
                    }
                } else {
                    c.ghosts += 1;
                }
            }
            Jump::GhostBirth => c.ghosts += 1,
            Jump::GhostDeath => c.ghosts -= 1,
        }
        events += 1;

        if !broken {
            if !(c.lower <= c.i && c.i <= c.upper()) {
                violations += 1;
            }
            if c.lower == 0 && lower_extinct_at.is_none() {
                lower_extinct_at = Some(t);
            }
        }
        if c.i == 0 && epidemic_extinct_at.is_none() {
            epidemic_extinct_at = Some(t);
        }
        if c.upper() == 0 && upper_extinct_at.is_none() {
            upper_extinct_at = Some(t);
        }
        if breakdown_time.is_none() && c.s_over_n() < accept_lower {
            breakdown_time = Some(t);
            if options.stop_at_breakdown {
                break (Terminal::CouplingBroken, t);
            }
        }
        if let Some(k) = config.takeoff_threshold {
            // both bounds are settled: each is extinct or has taken off
            let settled = |x: u64| x == 0 || x >= k;
            if c.upper() >= k && (broken || settled(c.lower)) {
                break (Terminal::TookOff, t);
            }
        }
        if events >= config.max_events {
            break (Terminal::EventCapHit, t);
        }
    };
    let broken = breakdown_time.is_some();
    recorder.finish_at(t_end, snapshot(&c, broken), &mut samples);

    Ok(CoupledTrajectory {
        samples: samples
            .into_iter()
            .map(
                |(t, (i_lower, i_epidemic, i_upper, s_over_n, broken))| CoupledSample {
                    t,
                    i_lower,
                    i_epidemic,
                    i_upper,
                    s_over_n,
                    broken,
                },
            )
            .collect(),
        eps0,
        breakdown_time,
        lower_frozen_after_breakdown: true,
        terminal,
        event_count: events,
        t_end,
        ordering_violations: violations,
        upper_extinct_at,
        lower_extinct_at,
        epidemic_extinct_at,
    })
}
