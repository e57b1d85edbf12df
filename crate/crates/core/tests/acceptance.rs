//! Acceptance criteria 1 to 11. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stderr (so it shows even when output is captured) and
//! then asserts.

use std::io::Write;
use std::time::Instant;

use rand::Rng;

use epigrow::ensemble::{
    endemic_level_check, map_replicates, run_ensemble, scenario_discrimination, EnsembleConfig,
};
use epigrow::io::{execute, Command, RunOptions, RunSpec};
use epigrow::model::{ModelParams, PopulationState};
use epigrow::ode::{
    compare_scaled, integrate_on_grid, largest_remainder_counts, ode_rhs, ScaledState,
};
use epigrow::rng::stream_rng;
use epigrow::ssa::{
    estimate_log_slope, simulate_coupled_sandwich, simulate_epidemic,
    simulate_population_with_ages, CouplingOptions, Observable, SimConfig,
};
use epigrow::stats::{ks_test, mann_whitney_less, median, wilson_interval, Z95};
use epigrow::theory::{
    basic_reproduction_number, endemic_equilibrium, extinction_prob_pgf_oracle,
    malthusian_closed_form, malthusian_euler_lotka, minor_outbreak_probability,
};

fn report(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {criterion}: {status}: {detail}"
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

/// 10^4 parameter sets per variant, rates log-uniform on [0.05, 20] with
/// lambda > mu (the pair is swapped when drawn the other way round).
fn random_params(seir: bool) -> Vec<ModelParams> {
    let mut rng = stream_rng(2024, u64::from(seir));
    let (lo, hi) = (0.05f64.ln(), 20.0f64.ln());
    let mut draw = move || rng.random_range(lo..hi).exp();
    let mut out = Vec::with_capacity(10_000);
    while out.len() < 10_000 {
        let (a, b) = (draw(), draw());
        if a == b {
            continue;
        }
        let (lambda, mu) = (a.max(b), a.min(b));
        let (gamma, delta, nu) = (draw(), draw(), draw());
        let p = if seir {
            ModelParams::seir(lambda, mu, gamma, delta, nu, 1000)
        } else {
            ModelParams::sir(lambda, mu, gamma, delta, 1000)
        };
        out.push(p.expect("valid draw"));
    }
    out
}

#[test]
fn criterion_01_closed_forms_match_oracles() {
    let start = Instant::now();
    let mut worst_alpha = 0.0f64;
    let mut worst_pi = 0.0f64;
    for seir in [false, true] {
        for p in random_params(seir) {
            let el = malthusian_euler_lotka(&p, 1e-13).expect("root exists");
            worst_alpha = worst_alpha.max((malthusian_closed_form(&p) - el).abs());
            let oracle = extinction_prob_pgf_oracle(&p, 1e-13);
            worst_pi = worst_pi.max((minor_outbreak_probability(&p) - oracle).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst_alpha < 1e-10 && worst_pi < 1e-10 && secs < 10.0,
        &format!("max |alpha - EL root| = {worst_alpha:.2e}, max |pi - pgf| = {worst_pi:.2e}, {secs:.2}s"),
    );
}

#[test]
fn criterion_02_threshold_equivalence() {
    let mut mismatches = 0;
    for seir in [false, true] {
        for p in random_params(seir) {
            let r0 = basic_reproduction_number(&p);
            let alpha = malthusian_closed_form(&p);
            if (r0 - 1.0).signum() != alpha.signum() {
                mismatches += 1;
            }
        }
    }
    report(
        2,
        mismatches == 0,
        &format!("{mismatches} sign mismatches in 20000 sets"),
    );
}

#[test]
fn criterion_03_equilibria() {
    let sets: Vec<ModelParams> = random_params(false)
        .into_iter()
        .chain(random_params(true))
        .collect();
    let start = Instant::now();
    let mut worst_rhs = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut wrong_presence = 0;
    let mut present = 0;
    for p in &sets {
        let eq = endemic_equilibrium(p);
        let outgrows = malthusian_closed_form(p) > p.pop_growth();
        if eq.is_some() != outgrows {
            wrong_presence += 1;
        }
        if let Some(z) = eq {
            present += 1;
            worst_rhs = worst_rhs.max(ode_rhs(p, &z).distance(&ScaledState::default()));
            worst_sum = worst_sum.max((z.sum() - 1.0).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        worst_rhs < 1e-12 && worst_sum < 1e-12 && wrong_presence == 0 && secs < 1.0,
        &format!(
            "{present} equilibria, max |rhs| = {worst_rhs:.2e}, max |sum - 1| = {worst_sum:.2e}, \
             {wrong_presence} presence errors, {secs:.3}s"
        ),
    );
}

/// One newly infected individual (latent under SEIR). Replicates stop once
/// 200 individuals are latent or infectious; from there the epidemic dies
/// out with probability below 0.5^200.
fn extinction_ensemble(params: ModelParams, seed: u64) -> EnsembleConfig {
    let sim = SimConfig::index_case(params, 25.0)
        .with_seed(seed)
        .with_takeoff_threshold(Some(200));
    let mut cfg = EnsembleConfig::new(sim, 10_000);
    cfg.extinction_horizon = 25.0;
    cfg
}

#[test]
fn criterion_04_extinction_probability() {
    let sir = ModelParams::sir(1.0, 0.5, 3.0, 1.0, 10_000).unwrap();
    let seir = ModelParams::seir(1.0, 0.5, 6.0, 1.0, 2.0, 10_000).unwrap();
    let a = run_ensemble(&extinction_ensemble(sir, 0))
        .unwrap()
        .extinction_freq;
    let b = run_ensemble(&extinction_ensemble(seir, 42))
        .unwrap()
        .extinction_freq;
    report(
        4,
        a.contains(0.5) && b.contains(0.45),
        &format!(
            "SIR {:.4} [{:.4}, {:.4}] vs 0.5; SEIR {:.4} [{:.4}, {:.4}] vs 0.45",
            a.estimate, a.lower, a.upper, b.estimate, b.lower, b.upper
        ),
    );
}

#[test]
fn criterion_05_sandwich_coupling() {
    let p = ModelParams::sir(1.0, 0.5, 3.0, 1.0, 10_000).unwrap();
    let eps0 = 0.05;
    let opts = CouplingOptions {
        eps0,
        stop_at_breakdown: true,
    };
    let sim = SimConfig::single_infective(p, 100.0)
        .with_seed(5)
        .with_takeoff_threshold(Some(200));
    let runs = map_replicates(1000, None, |k| {
        let traj = simulate_coupled_sandwich(&sim.clone().with_stream(k), opts)?;
        Ok((
            traj.ordering_violations,
            traj.upper_extinct_at.is_some(),
            traj.lower_extinct_at.is_some(),
        ))
    })
    .unwrap();
    let violations: u64 = runs.iter().map(|r| r.0).sum();
    let upper = wilson_interval(runs.iter().filter(|r| r.1).count() as u64, 1000, Z95);
    let lower = wilson_interval(runs.iter().filter(|r| r.2).count() as u64, 1000, Z95);
    let want_upper = (p.delta + p.mu) / p.gamma;
    let want_lower = (p.delta + p.mu) / (p.gamma * (1.0 - eps0));
    report(
        5,
        violations == 0 && upper.contains(want_upper) && lower.contains(want_lower),
        &format!(
            "{violations} violations; upper {:.3} [{:.3}, {:.3}] vs {want_upper:.4}; \
             lower {:.3} [{:.3}, {:.3}] vs {want_lower:.4}",
            upper.estimate, upper.lower, upper.upper, lower.estimate, lower.lower, lower.upper
        ),
    );
}

#[test]
fn criterion_06_growth_rates() {
    // scenario iii: alpha = 0.3 < lambda - mu. Seeded with 100 infectives
    // (0.1% of n) so the window holds hundreds of infectives, not a handful.
    let p3 = ModelParams::sir(1.0, 0.5, 1.8, 1.0, 100_000).unwrap();
    let sim = SimConfig::new(p3, PopulationState::new(99_900, 0, 100, 0), 10.0)
        .with_grid_step(0.1)
        .with_seed(6);
    let mut cfg = EnsembleConfig::new(sim, 20);
    cfg.growth_window = Some(cfg.default_growth_window());
    let iii = run_ensemble(&cfg).unwrap().mean_growth_rate.unwrap();

    // scenario iv: alpha = 1.5 > lambda - mu, single infective; the window
    // is [0.3, 0.8] of the breakdown time ln(eps0 n) / (alpha - (lambda - mu)) = 6.2
    let p4 = ModelParams::sir(1.0, 0.5, 3.0, 1.0, 10_000).unwrap();
    let sim = SimConfig::single_infective(p4, 5.0)
        .with_grid_step(0.1)
        .with_seed(7);
    let mut cfg = EnsembleConfig::new(sim, 200);
    cfg.growth_window = Some((2.0, 5.0));
    let iv = run_ensemble(&cfg).unwrap().mean_growth_rate.unwrap();

    // the population alone
    let pop = ModelParams::sir(1.0, 0.5, 0.0, 1.0, 1000).unwrap();
    let sim = SimConfig::new(pop, PopulationState::new(1000, 0, 0, 0), 5.0)
        .with_grid_step(0.1)
        .with_seed(8);
    let slopes = map_replicates(20, None, |k| {
        let traj = simulate_epidemic(&sim.clone().with_stream(k))?;
        estimate_log_slope(&traj, (0.0, 5.0), Observable::Total)
    })
    .unwrap();
    let n_slope = slopes.iter().sum::<f64>() / slopes.len() as f64;

    let within = |x: f64, want: f64| (x - want).abs() <= 0.1 * want;
    report(
        6,
        within(iii.mean, 0.3) && within(iv.mean, 1.5) && within(n_slope, 0.5),
        &format!(
            "iii {:.4} +- {:.4} ({} runs) vs 0.3; iv {:.4} +- {:.4} ({} survivors) vs 1.5; N slope {n_slope:.4} vs 0.5",
            iii.mean, iii.std_error, iii.count, iv.mean, iv.std_error, iv.count
        ),
    );
}

#[test]
fn criterion_07_fluid_limit_trend() {
    let start = ScaledState::seeded(0.01, 0.01);
    let mut medians = Vec::new();
    let mut deviations = Vec::new();
    for n in [1_000u64, 10_000, 100_000] {
        let p = ModelParams::sir(1.0, 0.5, 3.0, 1.0, n).unwrap();
        let initial = largest_remainder_counts(n, &start);
        let z0 = ScaledState::from_counts(&initial, n as f64);
        let sol = integrate_on_grid(&p, z0, 10.0, 1e-3, 0.1).unwrap();
        let sim = SimConfig::new(p, initial, 10.0)
            .with_grid_step(0.1)
            .with_seed(70)
            .run_past_extinction();
        let dev = map_replicates(100, None, |k| {
            let traj = simulate_epidemic(&sim.clone().with_stream(k))?;
            compare_scaled(&p, &traj, &sol)
        })
        .unwrap();
        medians.push(median(&dev));
        deviations.push(dev);
    }
    let p_small = mann_whitney_less(&deviations[1], &deviations[0]);
    let p_large = mann_whitney_less(&deviations[2], &deviations[1]);
    let decreasing = medians[0] > medians[1] && medians[1] > medians[2];
    report(
        7,
        decreasing && p_small < 0.01 && p_large < 0.01,
        &format!(
            "medians {:.4} > {:.4} > {:.4}; rank-test p = {p_small:.1e}, {p_large:.1e}",
            medians[0], medians[1], medians[2]
        ),
    );
}

#[test]
fn criterion_08_endemic_level() {
    let check = |params: ModelParams| {
        let sim = SimConfig::single_infective(params, 50.0)
            .with_grid_step(0.1)
            .with_seed(8);
        let mut cfg = EnsembleConfig::new(sim, 400);
        cfg.endemic_window = Some((30.0, 50.0));
        endemic_level_check(&cfg)
    };
    let sir = check(ModelParams::sir(1.0, 0.5, 3.0, 1.0, 10_000).unwrap());
    let seir = check(ModelParams::seir(1.0, 0.5, 6.0, 1.0, 2.0, 10_000).unwrap());
    let describe = |r: &epigrow::Result<epigrow::ensemble::EndemicReport>| match r {
        Ok(rep) => format!(
            "max relative error {:.4} over {} survivors",
            rep.max_relative_error, rep.survivors
        ),
        Err(e) => e.to_string(),
    };
    let ok = |r: &epigrow::Result<epigrow::ensemble::EndemicReport>| {
        r.as_ref().is_ok_and(|rep| rep.max_relative_error <= 0.05)
    };
    report(
        8,
        ok(&sir) && ok(&seir),
        &format!("SIR: {}; SEIR: {}", describe(&sir), describe(&seir)),
    );
}

#[test]
fn criterion_09_age_distribution() {
    let p = ModelParams::sir(1.0, 0.5, 0.0, 1.0, 1).unwrap();
    let sim = SimConfig::new(p, PopulationState::new(1, 0, 0, 0), 15.0).with_seed(9);
    let samples = map_replicates(100, None, |k| {
        simulate_population_with_ages(&sim.clone().with_stream(k))
    })
    .unwrap();
    let ages: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.ages.iter().copied())
        .collect();
    let ks = ks_test(&ages, |a| 1.0 - (-p.lambda * a).exp());
    report(
        9,
        ks.p_value >= 0.01,
        &format!(
            "{} ages, D = {:.5}, p = {:.3}",
            ks.n, ks.statistic, ks.p_value
        ),
    );
}

#[test]
fn criterion_10_scenario_discrimination() {
    let a_params = ModelParams::sir(1.0, 0.5, 1.8, 1.0, 100_000).unwrap();
    let a_sim =
        SimConfig::new(a_params, PopulationState::new(99_900, 0, 100, 0), 10.0).with_seed(10);
    let a = EnsembleConfig::new(a_sim, 20);
    let b_params = ModelParams::sir(1.0, 0.5, 3.0, 1.0, 10_000).unwrap();
    let b = EnsembleConfig::new(
        SimConfig::single_infective(b_params, 12.0).with_seed(11),
        60,
    );
    let r = scenario_discrimination(&a, &b).unwrap();
    let pass = r.subdominant.p_value < 0.01
        && r.subdominant_monotone
        && r.endemic.p_value < 0.01
        && r.endemic_near_equilibrium;
    report(
        10,
        pass,
        &format!(
            "A: I/N fell in {}/{} survivors (p = {:.1e}), means {:?}; \
             B: I rose in {}/{} (p = {:.1e}), I/N {:.4} vs {:.4}",
            r.subdominant.successes,
            r.subdominant.survivors,
            r.subdominant.p_value,
            r.subdominant
                .mean_prevalence
                .iter()
                .map(|x| format!("{x:.2e}"))
                .collect::<Vec<_>>(),
            r.endemic.successes,
            r.endemic.survivors,
            r.endemic.p_value,
            r.endemic_prevalence,
            r.equilibrium_prevalence
        ),
    );
}

#[test]
fn criterion_11_determinism() {
    let params = ModelParams::seir(1.0, 0.5, 6.0, 1.0, 2.0, 2_000).unwrap();
    let spec = |command, parallelism| RunSpec {
        command,
        params,
        options: RunOptions {
            seed: 123,
            t_max: 4.0,
            replicates: 64,
            parallelism,
            ..RunOptions::default()
        },
    };
    let tables = |s: &RunSpec| execute(s).unwrap().tables;
    let mut identical = true;
    for command in [Command::Simulate, Command::Couple, Command::Compare] {
        let mut sir_spec = spec(command, None);
        if command == Command::Couple {
            sir_spec.params.nu = None;
        }
        identical &= tables(&sir_spec) == tables(&sir_spec);
    }
    let reference = tables(&spec(Command::Ensemble, Some(1)));
    for threads in [None, Some(2), Some(4)] {
        identical &= tables(&spec(Command::Ensemble, threads)) == reference;
    }
    report(
        11,
        identical,
        "simulate, couple, compare repeated; ensemble with 1, 2, 4 and default workers",
    );
}
