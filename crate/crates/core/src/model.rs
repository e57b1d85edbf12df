//! Parameters, compartment state and the event table of the dynamic
//! SIR/SEIR epidemic in a linear birth-death population.
//!
//! One state encoding serves both variants: the exposed count stays at
//! zero when no latency rate is given.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Sir,
    Seir,
}

/// Rate parameters (per unit time) and the initial population size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-capita birth rate.
    pub lambda: f64,
    /// Per-capita death rate.
    pub mu: f64,
    /// Contact rate of an infectious individual.
    pub gamma: f64,
    /// Recovery rate.
    pub delta: f64,
    /// Rate of leaving the latent state; `None` selects the SIR model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Initial population size.
    pub n0: u64,
}

impl ModelParams {
    pub fn sir(lambda: f64, mu: f64, gamma: f64, delta: f64, n0: u64) -> Result<Self> {
        let p = ModelParams {
            lambda,
            mu,
            gamma,
            delta,
            nu: None,
            n0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn seir(lambda: f64, mu: f64, gamma: f64, delta: f64, nu: f64, n0: u64) -> Result<Self> {
        let p = ModelParams {
            lambda,
            mu,
            gamma,
            delta,
            nu: Some(nu),
            n0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks finiteness and signs. `mu = 0` (pure birth) and `gamma = 0`
    /// (no epidemic) are accepted so that population-only runs can share
    /// the same parameter type.
    pub fn validate(&self) -> Result<()> {
        fn finite(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::params(field, format!("must be finite, got {v}")))
            }
        }
        finite("lambda", self.lambda)?;
        finite("mu", self.mu)?;
        finite("gamma", self.gamma)?;
        finite("delta", self.delta)?;
        if self.lambda <= 0.0 {
            return Err(Error::params("lambda", "must be > 0"));
        }
        if self.mu < 0.0 {
            return Err(Error::params("mu", "must be >= 0"));
        }
        if self.gamma < 0.0 {
            return Err(Error::params("gamma", "must be >= 0"));
        }
        if self.delta <= 0.0 {
            return Err(Error::params("delta", "must be > 0"));
        }
        if let Some(nu) = self.nu {
            finite("nu", nu)?;
            if nu <= 0.0 {
                return Err(Error::params("nu", "must be > 0"));
            }
        }
        if self.n0 == 0 {
            return Err(Error::params("n0", "must be >= 1"));
        }
        Ok(())
    }

    /// `validate` plus the standing assumption `lambda > mu`.
    pub fn validate_supercritical(&self) -> Result<()> {
        self.validate()?;
        if !self.is_supercritical() {
            return Err(Error::NotSupercritical {
                lambda: self.lambda,
                mu: self.mu,
            });
        }
        Ok(())
    }

    pub fn is_supercritical(&self) -> bool {
        self.lambda > self.mu
    }

    pub fn variant(&self) -> Variant {
        match self.nu {
            Some(_) => Variant::Seir,
            None => Variant::Sir,
        }
    }

    /// Net growth rate of the population, `lambda - mu`.
    pub fn pop_growth(&self) -> f64 {
        self.lambda - self.mu
    }

    /// Mean removal rate of an infective, `delta + mu`.
    pub fn removal_rate(&self) -> f64 {
        self.delta + self.mu
    }

    /// Same model with every rate multiplied by `factor` (a change of time unit).
    pub fn rescaled(&self, factor: f64) -> Self {
        ModelParams {
            lambda: self.lambda * factor,
            mu: self.mu * factor,
            gamma: self.gamma * factor,
            delta: self.delta * factor,
            nu: self.nu.map(|nu| nu * factor),
            n0: self.n0,
        }
    }
}

/// Compartment counts. `e` is always zero for the SIR model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PopulationState {
    pub s: u64,
    pub e: u64,
    pub i: u64,
    pub r: u64,
}

impl PopulationState {
    pub const fn new(s: u64, e: u64, i: u64, r: u64) -> Self {
        PopulationState { s, e, i, r }
    }

    /// One infective among `n` individuals.
    pub const fn single_infective(n: u64) -> Self {
        PopulationState::new(n - 1, 0, 1, 0)
    }

    /// `k` newly infected among `n` individuals: latent under SEIR,
    /// infectious under SIR.
    pub const fn index_cases(variant: Variant, n: u64, k: u64) -> Self {
        match variant {
            Variant::Seir => PopulationState::new(n - k, k, 0, 0),
            Variant::Sir => PopulationState::new(n - k, 0, k, 0),
        }
    }

    pub const fn total(&self) -> u64 {
        self.s + self.e + self.i + self.r
    }

    /// Individuals carrying the disease (latent or infectious).
    pub const fn infected(&self) -> u64 {
        self.e + self.i
    }

    pub const fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.s, self.e, self.i, self.r]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Birth,
    DeathS,
    DeathE,
    DeathI,
    DeathR,
    Infection,
    BecomeInfectious,
    Recovery,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::Birth,
        EventKind::DeathS,
        EventKind::DeathE,
        EventKind::DeathI,
        EventKind::DeathR,
        EventKind::Infection,
        EventKind::BecomeInfectious,
        EventKind::Recovery,
    ];

    /// State change in `(s, e, i, r)` coordinates. In the SIR model an
    /// infection moves the individual straight to `i`.
    pub const fn delta(self, variant: Variant) -> [i64; 4] {
        match self {
            EventKind::Birth => [1, 0, 0, 0],
            EventKind::DeathS => [-1, 0, 0, 0],
            EventKind::DeathE => [0, -1, 0, 0],
            EventKind::DeathI => [0, 0, -1, 0],
            EventKind::DeathR => [0, 0, 0, -1],
            EventKind::Infection => match variant {
                Variant::Sir => [-1, 0, 1, 0],
                Variant::Seir => [-1, 1, 0, 0],
            },
            EventKind::BecomeInfectious => [0, -1, 1, 0],
            EventKind::Recovery => [0, 0, -1, 1],
        }
    }

    pub const fn is_legal(self, variant: Variant) -> bool {
        !matches!(
            (self, variant),
            (
                EventKind::DeathE | EventKind::BecomeInfectious,
                Variant::Sir
            )
        )
    }

    /// Births and deaths change `N`; the disease events do not.
    pub const fn is_demographic(self) -> bool {
        matches!(
            self,
            EventKind::Birth
                | EventKind::DeathS
                | EventKind::DeathE
                | EventKind::DeathI
                | EventKind::DeathR
        )
    }

    pub const fn index(self) -> usize {
        self as usize
    }
}

/// Jump intensities indexed by [`EventKind::index`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EventRates(pub [f64; 8]);

impl EventRates {
    pub fn get(&self, kind: EventKind) -> f64 {
        self.0[kind.index()]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventKind, f64)> + '_ {
        EventKind::ALL.iter().map(move |&k| (k, self.0[k.index()]))
    }
}

/// Rates of all eight event types in `state`. A dead population
/// (`N = 0`) has all rates zero.
pub fn event_rates(params: &ModelParams, state: &PopulationState) -> EventRates {
    let n = state.total();
    if n == 0 {
        return EventRates::default();
    }
    let (s, e, i, r) = (
        state.s as f64,
        state.e as f64,
        state.i as f64,
        state.r as f64,
    );
    let nf = n as f64;
    let nu = params.nu.unwrap_or(0.0);
    EventRates([
        params.lambda * nf,
        params.mu * s,
        params.mu * e,
        params.mu * i,
        params.mu * r,
        params.gamma * i * s / nf,
        nu * e,
        params.delta * i,
    ])
}

/// In-place update for the simulation loop, which only fires events with
/// positive rate; such an event always has a count to decrement.
#[inline]
pub(crate) fn apply_event_unchecked(
    variant: Variant,
    state: &mut PopulationState,
    event: EventKind,
) {
    debug_assert!(apply_event(variant, *state, event).is_ok());
    match (event, variant) {
        (EventKind::Birth, _) => state.s += 1,
        (EventKind::DeathS, _) => state.s -= 1,
        (EventKind::DeathE, _) => state.e -= 1,
        (EventKind::DeathI, _) => state.i -= 1,
        (EventKind::DeathR, _) => state.r -= 1,
        (EventKind::Infection, Variant::Sir) => {
            state.s -= 1;
            state.i += 1;
        }
        (EventKind::Infection, Variant::Seir) => {
            state.s -= 1;
            state.e += 1;
        }
        (EventKind::BecomeInfectious, _) => {
            state.e -= 1;
            state.i += 1;
        }
        (EventKind::Recovery, _) => {
            state.i -= 1;
            state.r += 1;
        }
    }
}

/// Applies one event, rejecting transitions that are undefined for the
/// variant or would make a count negative.
pub fn apply_event(
    variant: Variant,
    state: PopulationState,
    event: EventKind,
) -> Result<PopulationState> {
    if !event.is_legal(variant) {
        return Err(Error::IllegalEvent { event, variant });
    }
    let d = event.delta(variant);
    let mut counts = state.as_array();
    for (c, &dc) in counts.iter_mut().zip(d.iter()) {
        *c = match dc {
            0 => *c,
            1 => c.checked_add(1).ok_or(Error::Overflow { event })?,
            _ => c.checked_sub(1).ok_or(Error::Underflow { event, state })?,
        };
    }
    if counts
        .iter()
        .try_fold(0u64, |acc, &c| acc.checked_add(c))
        .is_none()
    {
        return Err(Error::Overflow { event });
    }
    Ok(PopulationState::new(
        counts[0], counts[1], counts[2], counts[3],
    ))
}
