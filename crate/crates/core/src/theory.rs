//! Closed-form results for the branching approximation and the endemic
//! fluid limit: reproduction numbers, Malthusian parameters, minor
//! outbreak probabilities, equilibria and the scenario classification.
//!
//! Each closed form has an independent numerical route
//! ([`malthusian_euler_lotka`], [`extinction_prob_pgf_oracle`]) so the two
//! can be checked against each other.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ode::ScaledState;

/// Relative tolerance used when comparing the Malthusian parameter with
/// the thresholds `0` and `lambda - mu`.
pub const BOUNDARY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// `alpha < 0`: every outbreak dies out.
    AlwaysExtinct,
    /// `alpha = 0`: critical branching, still dies out with probability one.
    BoundaryCritical,
    /// `0 < alpha < lambda - mu`: infectives grow, but slower than the population.
    SubdominantGrowth,
    /// `alpha = lambda - mu`.
    BoundaryEqualGrowth,
    /// `alpha > lambda - mu`: a major outbreak reaches the endemic level.
    EndemicCapable,
}

/// Time at which the lower coupling is expected to fail and the infective
/// count at that moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub eps0: f64,
    pub n: f64,
    pub t_n: f64,
    pub i_at_tn: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub r0: f64,
    pub alpha: f64,
    pub pop_growth: f64,
    pub minor_outbreak_prob: f64,
    pub scenario: Scenario,
    /// Equilibrium proportions `[s, e, i, r]`.
    pub endemic: Option<[f64; 4]>,
    pub perfect_coupling_hint: bool,
    pub breakdown: Option<Breakdown>,
}

pub fn basic_reproduction_number(params: &ModelParams) -> f64 {
    let infectious = params.gamma / params.removal_rate();
    match params.nu {
        None => infectious,
        Some(nu) => nu / (nu + params.mu) * infectious,
    }
}

/// Malthusian parameter from its closed form.
///
/// For SEIR this is the positive root of `(a+mu+delta)(a+mu+nu) = gamma*nu`,
/// i.e. `-(mu + (delta+nu)/2) + sqrt((delta-nu)^2/4 + gamma*nu)`.
pub fn malthusian_closed_form(params: &ModelParams) -> f64 {
    let ModelParams {
        mu, gamma, delta, ..
    } = *params;
    match params.nu {
        None => gamma - (delta + mu),
        Some(nu) => {
            let half_gap = 0.5 * (delta - nu);
            -(mu + 0.5 * (delta + nu)) + (half_gap * half_gap + gamma * nu).sqrt()
        }
    }
}

/// Laplace transform of the expected infectious-contact rate,
/// `int_0^inf exp(-a t) c(t) dt`, in closed (singularity-free) form.
/// Only meaningful for `a` above [`euler_lotka_pole`].
pub fn contact_transform(params: &ModelParams, a: f64) -> f64 {
    let x = a + params.mu;
    match params.nu {
        None => params.gamma / (x + params.delta),
        Some(nu) => params.gamma * nu / ((x + params.delta) * (x + nu)),
    }
}

/// Left end of the domain on which [`contact_transform`] is finite.
pub fn euler_lotka_pole(params: &ModelParams) -> f64 {
    let slowest = match params.nu {
        None => params.delta,
        Some(nu) => params.delta.min(nu),
    };
    -(params.mu + slowest)
}

/// Solves `contact_transform(a) = 1` by bracketing and bisection.
///
/// The transform decreases from `+inf` at the pole to 0, so a root exists
/// whenever `gamma > 0`.
pub fn malthusian_euler_lotka(params: &ModelParams, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::config("tol", "must be > 0"));
    }
    let mut lo = euler_lotka_pole(params);
    if !(params.gamma > 0.0) {
        // the transform vanishes identically: there is no root to bracket
        return Err(Error::BracketFailure { upper: lo });
    }
    let residual = |a: f64| contact_transform(params, a) - 1.0;
    let mut step = 1.0;
    let mut hi = lo + step;
    loop {
        let f = residual(hi);
        if f == 0.0 {
            return Ok(hi);
        }
        if f < 0.0 {
            break;
        }
        lo = hi;
        step *= 2.0;
        hi = lo + step;
        if !hi.is_finite() || step > 1e300 {
            return Err(Error::BracketFailure { upper: hi });
        }
    }
    // the pole end is implicitly +inf, so only midpoints are evaluated
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = residual(mid);
        if f == 0.0 {
            return Ok(mid);
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Limiting probability of a minor outbreak started by one infective.
pub fn minor_outbreak_probability(params: &ModelParams) -> f64 {
    let geometric_part = params.removal_rate() / params.gamma;
    let q = match params.nu {
        None => geometric_part,
        Some(nu) => geometric_part + params.mu / (nu + params.mu),
    };
    if basic_reproduction_number(params) <= 1.0 {
        1.0
    } else {
        q.min(1.0)
    }
}

/// Probability generating function of the number of infectious contacts
/// made by one newly infected individual.
///
/// The infectious-period count is geometric with success probability
/// `(delta+mu)/(delta+mu+gamma)`; with latency it is mixed with a point
/// mass at zero for death before becoming infectious.
pub fn offspring_pgf(params: &ModelParams, s: f64) -> f64 {
    let removal = params.removal_rate();
    let geometric = removal / (removal + params.gamma * (1.0 - s));
    match params.nu {
        None => geometric,
        Some(nu) => {
            let die_latent = params.mu / (nu + params.mu);
            die_latent + (1.0 - die_latent) * geometric
        }
    }
}

/// Smallest fixed point of [`offspring_pgf`] on `[0, 1]`, by iterating
/// `s <- g(s)` from 0.
///
/// The iteration is monotone and converges linearly; it stops once both
/// the last change and the geometric estimate of the remaining distance
/// drop below `tol`.
pub fn extinction_prob_pgf_oracle(params: &ModelParams, tol: f64) -> f64 {
    const MAX_ITER: usize = 50_000_000;
    let mut s = 0.0_f64;
    let mut prev_step = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let next = offspring_pgf(params, s);
        let step = next - s;
        s = next;
        if step <= 0.0 {
            break;
        }
        let ratio = step / prev_step;
        let remaining = if ratio < 1.0 {
            step * ratio / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        if step < tol && remaining < tol {
            break;
        }
        prev_step = step;
    }
    s.min(1.0)
}

fn rate_scale(params: &ModelParams) -> f64 {
    [
        params.lambda,
        params.gamma,
        params.removal_rate(),
        params.nu.unwrap_or(0.0),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn near(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= BOUNDARY_RTOL * scale
}

/// `alpha > lambda - mu` beyond the boundary tolerance.
fn outgrows_population(params: &ModelParams, alpha: f64) -> bool {
    let growth = params.pop_growth();
    alpha > growth && !near(alpha, growth, alpha.abs().max(growth.abs()))
}

/// Positive fixed point of the fluid-limit equations, present only when
/// the epidemic outgrows the population.
pub fn endemic_equilibrium(params: &ModelParams) -> Option<ScaledState> {
    let alpha = malthusian_closed_form(params);
    if !outgrows_population(params, alpha) {
        return None;
    }
    let ModelParams {
        lambda,
        gamma,
        delta,
        ..
    } = *params;
    let state = match params.nu {
        None => {
            let excess = 1.0 / (lambda + delta) - 1.0 / gamma;
            ScaledState::new(
                (lambda + delta) / gamma,
                0.0,
                lambda * excess,
                delta * excess,
            )
        }
        Some(nu) => {
            let b = nu / ((lambda + nu) * (lambda + delta));
            let excess = b - 1.0 / gamma;
            ScaledState::new(
                1.0 / (gamma * b),
                lambda * (lambda + delta) / nu * excess,
                lambda * excess,
                delta * excess,
            )
        }
    };
    Some(state)
}

pub fn classify_scenario(params: &ModelParams) -> Result<Scenario> {
    params.validate_supercritical()?;
    let alpha = malthusian_closed_form(params);
    let growth = params.pop_growth();
    let scenario = if near(alpha, 0.0, rate_scale(params)) {
        Scenario::BoundaryCritical
    } else if alpha < 0.0 {
        Scenario::AlwaysExtinct
    } else if near(alpha, growth, alpha.max(growth)) {
        Scenario::BoundaryEqualGrowth
    } else if alpha < growth {
        Scenario::SubdominantGrowth
    } else {
        Scenario::EndemicCapable
    };
    Ok(scenario)
}

/// Approximate time at which infectives reach a fraction `eps0` of the
/// population, and the infective count then, for a population of initial
/// size `n`.
///
/// With `a = alpha` and `g = lambda - mu` these are `ln(eps0 n) / (a - g)`
/// and `(eps0 n)^(a / (a - g))`; for SIR, `a - g = gamma - (delta + lambda)`.
pub fn breakdown_diagnostics(params: &ModelParams, eps0: f64, n: f64) -> Result<Breakdown> {
    params.validate_supercritical()?;
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::config("eps0", "must lie in (0, 1)"));
    }
    if !(eps0 * n > 1.0) {
        return Err(Error::Precondition(format!(
            "eps0 * n must exceed 1, got {}",
            eps0 * n
        )));
    }
    let alpha = malthusian_closed_form(params);
    if !outgrows_population(params, alpha) {
        return Err(Error::Precondition(format!(
            "breakdown needs alpha > lambda - mu (gamma > delta + lambda for SIR), \
             got alpha = {alpha}, lambda - mu = {}",
            params.pop_growth()
        )));
    }
    let gap = alpha - params.pop_growth();
    let scale = (eps0 * n).ln();
    let exponent = alpha / gap;
    Ok(Breakdown {
        eps0,
        n,
        t_n: scale / gap,
        i_at_tn: (eps0 * n).powf(exponent),
        exponent,
    })
}

/// Heuristic hint `alpha^2 < lambda - mu` for the upper bound and the
/// epidemic to coincide forever with positive probability.
pub fn perfect_coupling_condition(params: &ModelParams) -> bool {
    let alpha = malthusian_closed_form(params);
    alpha * alpha < params.pop_growth()
}

/// Every closed-form quantity for `params`. Breakdown diagnostics are
/// included when `breakdown_at = Some((eps0, n))` and they are defined.
pub fn summarize(params: &ModelParams, breakdown_at: Option<(f64, f64)>) -> Result<TheorySummary> {
    let scenario = classify_scenario(params)?;
    let endemic = if scenario == Scenario::EndemicCapable {
        endemic_equilibrium(params).map(|z| z.to_array())
    } else {
        None
    };
    let breakdown = match breakdown_at {
        Some((eps0, n)) if scenario == Scenario::EndemicCapable && eps0 * n > 1.0 => {
            Some(breakdown_diagnostics(params, eps0, n)?)
        }
        _ => None,
    };
    Ok(TheorySummary {
        r0: basic_reproduction_number(params),
        alpha: malthusian_closed_form(params),
        pop_growth: params.pop_growth(),
        minor_outbreak_prob: minor_outbreak_probability(params),
        scenario,
        endemic,
        perfect_coupling_hint: perfect_coupling_condition(params),
        breakdown,
    })
}
