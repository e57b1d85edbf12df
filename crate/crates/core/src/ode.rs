//! Deterministic fluid limit of the proportion process `Z(t) / (n e^{(lambda-mu) t})`.
//!
//! The flow is integrated with fixed-step classical RK4 so that output is
//! reproducible bit for bit; every integration is repeated at half the
//! step and rejected if the terminal states disagree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PopulationState};
use crate::ssa::Trajectory;
use crate::theory;

/// Radius of the ball used to decide that the flow has reached an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-6;
/// The flow must stay inside the ball for this long to count as converged.
pub const EQUILIBRIUM_DWELL: f64 = 5.0;
/// Largest accepted change of the terminal state when the step is halved.
pub const HALVING_TOL: f64 = 1e-8;
pub const DEFAULT_DT: f64 = 1e-3;

/// Compartment proportions relative to `n(t) = n e^{(lambda-mu) t}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScaledState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
}

impl ScaledState {
    pub const fn new(s: f64, e: f64, i: f64, r: f64) -> Self {
        ScaledState { s, e, i, r }
    }

    pub const fn disease_free() -> Self {
        ScaledState::new(1.0, 0.0, 0.0, 0.0)
    }

    /// Starting point `(1 - eps1 - eps2, 0, eps1, eps2)`.
    pub fn seeded(eps1: f64, eps2: f64) -> Self {
        ScaledState::new(1.0 - eps1 - eps2, 0.0, eps1, eps2)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ScaledState::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s, self.e, self.i, self.r]
    }

    pub fn sum(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    pub fn distance(&self, other: &ScaledState) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Counts divided by `scale`.
    pub fn from_counts(z: &PopulationState, scale: f64) -> Self {
        ScaledState::new(
            z.s as f64 / scale,
            z.e as f64 / scale,
            z.i as f64 / scale,
            z.r as f64 / scale,
        )
    }

    fn axpy(self, h: f64, d: ScaledState) -> ScaledState {
        ScaledState::new(
            self.s + h * d.s,
            self.e + h * d.e,
            self.i + h * d.i,
            self.r + h * d.r,
        )
    }

    fn scale(self, k: f64) -> ScaledState {
        ScaledState::new(k * self.s, k * self.e, k * self.i, k * self.r)
    }
}

/// Right-hand side of the limiting equations, written term by term.
pub fn ode_rhs(params: &ModelParams, z: &ScaledState) -> ScaledState {
    let ModelParams {
        lambda,
        gamma,
        delta,
        ..
    } = *params;
    let incidence = gamma * z.i * z.s;
    match params.nu {
        None => ScaledState::new(
            lambda * (1.0 - z.s) - incidence,
            0.0,
            z.i * (gamma * z.s - (lambda + delta)),
            -lambda * z.r + delta * z.i,
        ),
        Some(nu) => ScaledState::new(
            lambda * (1.0 - z.s) - incidence,
            incidence - (lambda + nu) * z.e,
            nu * z.e - (lambda + delta) * z.i,
            delta * z.i - lambda * z.r,
        ),
    }
}

/// Net jump drift `sum_l l * beta_l(z)` of the scaled event rates.
pub fn jump_drift(params: &ModelParams, z: &ScaledState) -> ScaledState {
    let mu = params.mu;
    let incidence = params.gamma * z.i * z.s;
    let births = params.lambda * z.sum();
    let (to_e, to_i) = match params.nu {
        None => (0.0, incidence),
        Some(nu) => (incidence - nu * z.e, nu * z.e),
    };
    ScaledState::new(
        births - mu * z.s - incidence,
        to_e - mu * z.e,
        to_i - mu * z.i - params.delta * z.i,
        params.delta * z.i - mu * z.r,
    )
}

/// The same vector field assembled from the event table:
/// `sum_l l * beta_l(z) - (lambda - mu) z`. Agrees with [`ode_rhs`] on the
/// simplex.
pub fn rhs_from_rates(params: &ModelParams, z: &ScaledState) -> ScaledState {
    jump_drift(params, z).axpy(-params.pop_growth(), *z)
}

fn rk4_step(params: &ModelParams, z: ScaledState, h: f64) -> ScaledState {
    let k1 = ode_rhs(params, &z);
    let k2 = ode_rhs(params, &z.axpy(0.5 * h, k1));
    let k3 = ode_rhs(params, &z.axpy(0.5 * h, k2));
    let k4 = ode_rhs(params, &z.axpy(h, k3));
    let slope = ScaledState::new(
        k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s,
        k1.e + 2.0 * k2.e + 2.0 * k3.e + k4.e,
        k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i,
        k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r,
    );
    z.axpy(h / 6.0, slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    DiseaseFree,
    Endemic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub to: EquilibriumKind,
    /// First grid time after which the solution stays within [`EQUILIBRIUM_TOL`].
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub params: ModelParams,
    pub dt: f64,
    pub grid: Vec<f64>,
    pub states: Vec<ScaledState>,
    pub converged_to: Option<Convergence>,
}

impl OdeSolution {
    /// Index of the grid point at time `t`, if there is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let pos = self.grid.partition_point(|&g| g < t - tol);
        (pos < self.grid.len() && (self.grid[pos] - t).abs() <= tol).then_some(pos)
    }

    pub fn terminal(&self) -> ScaledState {
        *self
            .states
            .last()
            .expect("solution has at least the initial point")
    }
}

fn steps_for(span: f64, h: f64, field: &'static str) -> Result<usize> {
    let ratio = span / h;
    let k = ratio.round();
    if !(k >= 1.0) || (ratio - k).abs() > 1e-6 * k.max(1.0) {
        return Err(Error::config(
            field,
            format!("{span} is not a whole multiple of the step {h}"),
        ));
    }
    Ok(k as usize)
}

fn run_rk4(params: &ModelParams, z0: ScaledState, steps: usize, h: f64) -> ScaledState {
    (0..steps).fold(z0, |z, _| rk4_step(params, z, h))
}

/// Integrates with step `dt`, recording every step.
pub fn integrate(
    params: &ModelParams,
    z0: ScaledState,
    t_max: f64,
    dt: f64,
) -> Result<OdeSolution> {
    integrate_on_grid(params, z0, t_max, dt, dt)
}

/// Integrates with step `dt` and records the state every `sample_step`,
/// which must be a whole multiple of `dt`, as must `t_max`.
pub fn integrate_on_grid(
    params: &ModelParams,
    z0: ScaledState,
    t_max: f64,
    dt: f64,
    sample_step: f64,
) -> Result<OdeSolution> {
    params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::config("dt", "must be > 0"));
    }
    if !(t_max > 0.0) {
        return Err(Error::config("t_max", "must be > 0"));
    }
    let a = z0.to_array();
    if a.iter().any(|&x| !(x >= 0.0)) || (z0.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::config(
            "z0",
            format!("must be nonnegative proportions summing to 1, got {a:?}"),
        ));
    }
    if params.nu.is_none() && z0.e != 0.0 {
        return Err(Error::config("z0", "exposed proportion must be 0 for SIR"));
    }
    let steps = steps_for(t_max, dt, "t_max")?;
    let stride = steps_for(sample_step, dt, "sample_step")?;

    let mut grid = vec![0.0];
    let mut states = vec![z0];
    let mut z = z0;
    for k in 1..=steps {
        z = rk4_step(params, z, dt);
        if k % stride == 0 || k == steps {
            grid.push(k as f64 * dt);
            states.push(z);
        }
    }

    let fine = run_rk4(params, z0, 2 * steps, 0.5 * dt);
    let deviation = fine.distance(&z);
    if deviation > HALVING_TOL {
        return Err(Error::StepSizeTooCoarse { deviation });
    }

    let mut sol = OdeSolution {
        params: *params,
        dt,
        grid,
        states,
        converged_to: None,
    };
    sol.converged_to = detect_convergence(&sol);
    Ok(sol)
}

fn detect_convergence(sol: &OdeSolution) -> Option<Convergence> {
    let t_end = *sol.grid.last()?;
    let mut candidates = vec![(EquilibriumKind::DiseaseFree, ScaledState::disease_free())];
    if let Some(z) = theory::endemic_equilibrium(&sol.params) {
        candidates.push((EquilibriumKind::Endemic, z));
    }
    candidates.into_iter().find_map(|(kind, target)| {
        let outside = sol
            .states
            .iter()
            .rposition(|z| z.distance(&target) > EQUILIBRIUM_TOL);
        let entry = match outside {
            None => 0,
            Some(k) if k + 1 < sol.grid.len() => k + 1,
            Some(_) => return None,
        };
        let time = sol.grid[entry];
        (t_end - time >= EQUILIBRIUM_DWELL - 1e-9).then_some(Convergence { to: kind, time })
    })
}

/// Largest-remainder rounding of `n * z` to counts summing to exactly `n`.
pub fn largest_remainder_counts(n: u64, z: &ScaledState) -> PopulationState {
    let exact: Vec<f64> = z
        .to_array()
        .iter()
        .map(|&x| x.max(0.0) * n as f64)
        .collect();
    let mut counts: Vec<u64> = exact.iter().map(|&x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..4).collect();
    // stable sort keeps index order among equal remainders
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra)
    });
    let mut missing = n.saturating_sub(assigned);
    if exact.iter().all(|&x| x == 0.0) {
        // nothing to apportion by; everyone is susceptible
        counts[0] += missing;
        missing = 0;
    }
    for &k in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        if z.to_array()[k] > 0.0 {
            counts[k] += 1;
            missing -= 1;
        }
    }
    PopulationState::new(counts[0], counts[1], counts[2], counts[3])
}

/// Largest Euclidean distance, over the trajectory's sample times, between
/// the scaled counts `Z(t) / (n e^{(lambda-mu) t})` and the fluid limit.
/// Every trajectory sample must fall on the solution's grid.
pub fn compare_scaled(params: &ModelParams, traj: &Trajectory, sol: &OdeSolution) -> Result<f64> {
    let n = params.n0 as f64;
    let growth = params.pop_growth();
    let mut worst = 0.0_f64;
    for sample in &traj.samples {
        let k = sol.index_of(sample.t).ok_or_else(|| {
            Error::GridMismatch(format!("trajectory time {} not on the ODE grid", sample.t))
        })?;
        let scaled = ScaledState::from_counts(&sample.state, n * (growth * sample.t).exp());
        worst = worst.max(scaled.distance(&sol.states[k]));
    }
    Ok(worst)
}

/// Values of the integral form
/// `z(t) = z0 e^{-g t} + int_0^t e^{-g (t-u)} sum_l l beta_l(z(u)) du`, `g = lambda - mu`,
/// evaluated by composite Simpson quadrature on the solution's own samples.
///
/// The solution must be sampled at a uniform step; values are returned at
/// every second grid point as `(grid index, state)`.
pub fn integral_form(sol: &OdeSolution) -> Result<Vec<(usize, ScaledState)>> {
    if sol.grid.len() < 3 {
        return Err(Error::GridMismatch("need at least three samples".into()));
    }
    let h = sol.grid[1] - sol.grid[0];
    if sol
        .grid
        .windows(2)
        .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0))
    {
        return Err(Error::GridMismatch("grid must be uniform".into()));
    }
    let g = sol.params.pop_growth();
    let decay1 = (-g * h).exp();
    let decay2 = decay1 * decay1;
    let drift: Vec<ScaledState> = sol
        .states
        .iter()
        .map(|z| jump_drift(&sol.params, z))
        .collect();
    let mut out = vec![(0, sol.states[0])];
    let mut z = sol.states[0];
    let mut k = 0;
    while k + 2 < sol.grid.len() {
        let panel = drift[k]
            .scale(decay2)
            .axpy(4.0 * decay1, drift[k + 1])
            .axpy(1.0, drift[k + 2])
            .scale(h / 3.0);
        z = z.scale(decay2).axpy(1.0, panel);
        k += 2;
        out.push((k, z));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub t: f64,
    pub ibar: f64,
    /// Height above the reference level.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub reference: f64,
    pub peaks: Vec<Peak>,
    /// Peak amplitudes never increase after the first peak.
    pub damped: bool,
    /// Mean spacing of successive peaks, when there are at least two.
    pub mean_period: Option<f64>,
}

/// Local maxima of the infective proportion above the endemic level
/// (the terminal value when there is no endemic equilibrium).
pub fn damped_oscillation_report(sol: &OdeSolution) -> OscillationReport {
    const MIN_AMPLITUDE: f64 = 1e-9;
    let reference = theory::endemic_equilibrium(&sol.params)
        .map(|z| z.i)
        .unwrap_or_else(|| sol.terminal().i);
    let peaks: Vec<Peak> = sol
        .states
        .windows(3)
        .enumerate()
        .filter(|(_, w)| w[1].i > w[0].i && w[1].i >= w[2].i)
        .map(|(k, w)| Peak {
            t: sol.grid[k + 1],
            ibar: w[1].i,
            amplitude: w[1].i - reference,
        })
        .filter(|p| p.amplitude > MIN_AMPLITUDE)
        .collect();
    let damped = peaks.windows(2).all(|w| w[1].amplitude <= w[0].amplitude);
    let mean_period = (peaks.len() >= 2)
        .then(|| (peaks[peaks.len() - 1].t - peaks[0].t) / (peaks.len() - 1) as f64);
    OscillationReport {
        reference,
        peaks,
        damped,
        mean_period,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sir() -> ModelParams {
        ModelParams::sir(1.0, 0.5, 3.0, 1.0, 1000).unwrap()
    }

    fn seir() -> ModelParams {
        ModelParams::seir(1.0, 0.5, 6.0, 1.0, 2.0, 1000).unwrap()
    }

    fn norm(z: ScaledState) -> f64 {
        z.distance(&ScaledState::default())
    }

    #[test]
    fn rhs_vanishes_at_equilibria() {
        let eq = ScaledState::new(2.0 / 3.0, 0.0, 1.0 / 6.0, 1.0 / 6.0);
        assert!(norm(ode_rhs(&sir(), &eq)) < 1e-15);
        assert_eq!(norm(ode_rhs(&sir(), &ScaledState::disease_free())), 0.0);
        let eq = ScaledState::new(0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0);
        assert!(norm(ode_rhs(&seir(), &eq)) < 1e-15);
        assert_eq!(norm(ode_rhs(&seir(), &ScaledState::disease_free())), 0.0);
    }

    #[test]
    fn both_vector_fields_agree_on_simplex() {
        for z in [
            ScaledState::new(0.7, 0.1, 0.15, 0.05),
            ScaledState::new(0.2, 0.3, 0.4, 0.1),
            ScaledState::seeded(0.01, 0.01),
        ] {
            assert!(ode_rhs(&seir(), &z).distance(&rhs_from_rates(&seir(), &z)) < 1e-14);
        }
        let z = ScaledState::new(0.5, 0.0, 0.3, 0.2);
        assert!(ode_rhs(&sir(), &z).distance(&rhs_from_rates(&sir(), &z)) < 1e-14);
    }

    #[test]
    fn converges_to_endemic_level() {
        let sol =
            integrate_on_grid(&sir(), ScaledState::seeded(0.01, 0.01), 200.0, 1e-3, 0.1).unwrap();
        let conv = sol.converged_to.unwrap();
        assert_eq!(conv.to, EquilibriumKind::Endemic);
        let eq = theory::endemic_equilibrium(&sir()).unwrap();
        assert!(sol.terminal().distance(&eq) < 1e-6);
        for z in &sol.states {
            assert!((z.sum() - 1.0).abs() < 1e-9);
            assert!(z.to_array().iter().all(|&x| x > -1e-9));
        }
    }

    #[test]
    fn equilibrium_is_fixed_point_of_the_flow() {
        let eq = theory::endemic_equilibrium(&sir()).unwrap();
        let sol = integrate_on_grid(&sir(), eq, 50.0, 1e-3, 0.5).unwrap();
        for z in &sol.states {
            assert!(z.distance(&eq) < 1e-9);
        }
        assert_eq!(sol.converged_to.unwrap().time, 0.0);
        assert!(damped_oscillation_report(&sol).peaks.is_empty());
    }

    #[test]
    fn seir_flow_reaches_its_equilibrium() {
        let z0 = ScaledState::new(0.98, 0.0, 0.01, 0.01);
        let sol = integrate_on_grid(&seir(), z0, 200.0, 1e-3, 1.0).unwrap();
        assert_eq!(sol.converged_to.unwrap().to, EquilibriumKind::Endemic);
    }

    #[test]
    fn subdominant_flow_returns_to_disease_free() {
        let p = ModelParams::sir(1.0, 0.5, 1.8, 1.0, 1000).unwrap();
        let sol = integrate_on_grid(&p, ScaledState::seeded(0.01, 0.01), 100.0, 1e-3, 0.1).unwrap();
        assert_eq!(sol.converged_to.unwrap().to, EquilibriumKind::DiseaseFree);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let p = ModelParams::sir(0.02, 0.01, 10.0, 2.0, 1000).unwrap();
        let err = integrate(&p, ScaledState::seeded(0.01, 0.0), 200.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::StepSizeTooCoarse { .. }), "{err}");
    }

    #[test]
    fn input_validation() {
        assert!(integrate(&sir(), ScaledState::new(0.5, 0.0, 0.1, 0.1), 1.0, 1e-3).is_err());
        assert!(integrate(&sir(), ScaledState::seeded(0.01, 0.0), 1.0, 0.0).is_err());
        assert!(
            integrate_on_grid(&sir(), ScaledState::seeded(0.01, 0.0), 1.0, 1e-3, 0.00015).is_err()
        );
    }

    #[test]
    fn integral_form_reproduces_solution() {
        for p in [sir(), seir()] {
            let z0 = ScaledState::seeded(0.01, 0.01);
            let sol = integrate(&p, z0, 30.0, 1e-3).unwrap();
            let worst = integral_form(&sol)
                .unwrap()
                .into_iter()
                .map(|(k, z)| z.distance(&sol.states[k]))
                .fold(0.0, f64::max);
            assert!(worst < 1e-6, "integral form deviates by {worst}");
        }
    }

    #[test]
    fn largest_remainder_preserves_total() {
        let z = ScaledState::seeded(0.01, 0.01);
        assert_eq!(
            largest_remainder_counts(1000, &z),
            PopulationState::new(980, 0, 10, 10)
        );
        let z = ScaledState::new(1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0);
        let c = largest_remainder_counts(100, &z);
        assert_eq!(c.total(), 100);
        assert_eq!(c.e, 0);
    }

    #[test]
    fn oscillations_are_damped_for_long_lived_hosts() {
        let p = ModelParams::sir(0.02, 0.01, 10.0, 2.0, 1000).unwrap();
        let sol =
            integrate_on_grid(&p, ScaledState::seeded(0.001, 0.0), 600.0, 1e-3, 0.01).unwrap();
        let report = damped_oscillation_report(&sol);
        assert!(report.peaks.len() >= 2, "{report:?}");
        assert!(report.damped);
    }
}
