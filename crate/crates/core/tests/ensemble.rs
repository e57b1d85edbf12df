//! Ensemble-level checks small enough for every test run.

use epigrow::ensemble::{endemic_level_check, map_replicates, EnsembleConfig};
use epigrow::model::ModelParams;
use epigrow::ssa::{simulate_coupled_sandwich, CouplingOptions, SimConfig};
use epigrow::stats::{wilson_interval, Z95};

#[test]
fn wilson_interval_covers_upper_process_extinction() {
    // the upper process is a linear birth-death process with extinction
    // probability (delta + mu) / gamma = 0.5; it always exceeds 100 by the
    // time the coupling breaks at n = 2000
    let p = ModelParams::sir(1.0, 0.5, 3.0, 1.0, 2000).unwrap();
    let opts = CouplingOptions {
        eps0: 0.05,
        stop_at_breakdown: true,
    };
    let runs_per_rep = 100;
    let extinct = map_replicates(100 * runs_per_rep, None, |k| {
        let cfg = SimConfig::single_infective(p, 100.0)
            .with_seed(77)
            .with_stream(k);
        Ok(simulate_coupled_sandwich(&cfg, opts)?
            .upper_extinct_at
            .is_some())
    })
    .unwrap();
    let covered = extinct
        .chunks(runs_per_rep as usize)
        .filter(|chunk| {
            let k = chunk.iter().filter(|&&e| e).count() as u64;
            wilson_interval(k, runs_per_rep, Z95).contains(0.5)
        })
        .count();
    assert!(covered >= 90, "covered {covered} of 100");
}

fn endemic_config(params: ModelParams) -> EnsembleConfig {
    let sim = SimConfig::single_infective(params, 14.0)
        .with_grid_step(0.1)
        .with_seed(3);
    let mut cfg = EnsembleConfig::new(sim, 120);
    cfg.endemic_window = Some((10.0, 14.0));
    cfg
}

#[test]
fn survivors_settle_at_the_endemic_level() {
    // a desk-sized version of the endemic-level comparison: small start,
    // short window
    let sir = ModelParams::sir(1.0, 0.5, 3.0, 1.0, 200).unwrap();
    let report = endemic_level_check(&endemic_config(sir)).unwrap();
    assert!(report.survivors >= 30);
    assert!(report.max_relative_error < 0.05, "{report:?}");

    let seir = ModelParams::seir(1.0, 0.5, 6.0, 1.0, 2.0, 200).unwrap();
    let report = endemic_level_check(&endemic_config(seir)).unwrap();
    assert!(report.max_relative_error < 0.05, "{report:?}");
}
