use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};
use crate::stats::ols_slope;

/// Count whose logarithm is regressed on time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    Infectious,
    Total,
}

/// Least-squares slope of `ln i(t)` over the samples in `window`.
pub fn estimate_growth_rate(traj: &Trajectory, window: (f64, f64)) -> Result<f64> {
    estimate_log_slope(traj, window, Observable::Infectious)
}

pub fn estimate_log_slope(traj: &Trajectory, window: (f64, f64), what: Observable) -> Result<f64> {
    let (start, end) = window;
    if !(end > start) {
        return Err(Error::config("window", "end must exceed start"));
    }
    let fail = || Error::WindowContainsExtinction { start, end };
    if traj.t_end < end - 1e-9 * end.abs().max(1.0) {
        return Err(fail());
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for s in &traj.samples {
        if s.t < start - 1e-9 || s.t > end + 1e-9 {
            continue;
        }
        let count = match what {
            Observable::Infectious => s.state.i,
            Observable::Total => s.state.total(),
        };
        if count == 0 {
            return Err(fail());
        }
        ts.push(s.t);
        ys.push((count as f64).ln());
    }
    if ts.len() < 2 {
        return Err(Error::config(
            "window",
            "fewer than two samples inside the window",
        ));
    }
    Ok(ols_slope(&ts, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PopulationState;
    use crate::ssa::{Sample, Terminal};

    fn synthetic(f: impl Fn(f64) -> u64) -> Trajectory {
        let samples: Vec<Sample> = (0..=80)
            .map(|k| {
                let t = k as f64 * 0.1;
                Sample {
                    t,
                    state: PopulationState::new(1000, 0, f(t), 0),
                }
            })
            .collect();
        Trajectory {
            samples,
            terminal: Terminal::ReachedTmax,
            event_count: 0,
            t_end: 8.0,
        }
    }

    #[test]
    fn recovers_exponent_of_exponential_input() {
        let traj = synthetic(|t| (1.5 * t).exp().floor() as u64);
        let slope = estimate_growth_rate(&traj, (2.0, 6.0)).unwrap();
        assert!((slope - 1.5).abs() < 0.01, "{slope}");
    }

    #[test]
    fn extinction_inside_window_is_an_error() {
        let traj = synthetic(|t| if t < 4.0 { 5 } else { 0 });
        assert!(matches!(
            estimate_growth_rate(&traj, (2.0, 6.0)),
            Err(Error::WindowContainsExtinction { .. })
        ));
        let mut short = synthetic(|_| 5);
        short.t_end = 3.0;
        assert!(estimate_growth_rate(&short, (2.0, 6.0)).is_err());
    }
}
