//! Variance of the mean of `n` uniform variates against the asymptotic
//! variance `gamma / n - 1 / n^2 - 1 / (2 n^3)`.
//!
//! Each trial draws from its own [`RngStream`] keyed by `(seed, n, trial)`,
//! so a trial's average does not depend on which thread computes it or in
//! which order. Averages are folded into the variance in trial order.

use std::ops::Range;

use rayon::prelude::*;

use super::output::fmt_real;
use crate::asymptotics::asymptotic_variance;
use crate::error::{invalid, Result};
use crate::moments::MomentAccumulator;
use crate::rng::{streams, RngStream, UNIT_53};

/// Dataset sizes sampled by default, 500 through 10^6.
pub const DEFAULT_N_GRID: [u64; 7] = [500, 1_000, 5_000, 10_000, 49_500, 100_000, 1_000_000];

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const MIN_TRIALS: u64 = 1_000;

const CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig2Record {
    pub n: u64,
    pub trials: u64,
    pub empirical_var: f64,
    pub asymptotic: f64,
    pub abs_error: f64,
    /// Exact variance of the mean of `n` iid `U[0, 1)`: `1 / (12 n)`.
    pub oracle_var: f64,
}

impl Fig2Record {
    pub const HEADER: [&'static str; 6] = [
        "n",
        "trials",
        "empirical_var",
        "asymptotic",
        "abs_error",
        "oracle_var",
    ];

    pub fn csv_fields(&self) -> [String; 6] {
        [
            self.n.to_string(),
            self.trials.to_string(),
            fmt_real(self.empirical_var),
            fmt_real(self.asymptotic),
            fmt_real(self.abs_error),
            fmt_real(self.oracle_var),
        ]
    }
}

/// Mean of `n` uniforms from the trial's own substream.
///
/// The 53-bit integer draws are summed exactly before a single scaling, so
/// the result is independent of summation order.
pub fn trial_average(seed: u64, n: u64, trial: u64) -> f64 {
    let mut rng = RngStream::new(seed, streams::fig2_trial(n, trial));
    let mut sum: u128 = 0;
    for _ in 0..n {
        sum += u128::from(rng.next_u53());
    }
    sum as f64 * UNIT_53 / n as f64
}

/// Averages of the given trial range, in trial order.
pub fn trial_averages(seed: u64, n: u64, trials: Range<u64>, execution: Execution) -> Vec<f64> {
    match execution {
        Execution::Serial => trials.map(|t| trial_average(seed, n, t)).collect(),
        Execution::Parallel => trials
            .into_par_iter()
            .map(|t| trial_average(seed, n, t))
            .collect(),
    }
}

fn check_inputs(n_list: &[u64], trials: u64) -> Result<()> {
    if n_list.is_empty() {
        return Err(invalid("n", "at least one dataset size is required"));
    }
    if let Some(n) = n_list.iter().find(|&&n| n < 2) {
        return Err(invalid("n", format!("every n must be >= 2, got {n}")));
    }
    if let Some(n) = n_list.iter().find(|&&n| n >= 1 << 32) {
        return Err(invalid("n", format!("n must be below 2^32, got {n}")));
    }
    if trials < MIN_TRIALS {
        return Err(invalid(
            "trials",
            format!("need at least {MIN_TRIALS} trials, got {trials}"),
        ));
    }
    if trials > 1 << 32 {
        return Err(invalid(
            "trials",
            format!("at most 2^32 trials, got {trials}"),
        ));
    }
    Ok(())
}

/// One record per entry of `n_list`, in input order.
pub fn fig2_experiment(
    n_list: &[u64],
    trials: u64,
    seed: u64,
    execution: Execution,
) -> Result<Vec<Fig2Record>> {
    check_inputs(n_list, trials)?;
    n_list
        .iter()
        .map(|&n| {
            let mut acc = MomentAccumulator::new();
            let mut start = 0;
            while start < trials {
                let end = (start + CHUNK).min(trials);
                for avg in trial_averages(seed, n, start..end, execution) {
                    acc.absorb_values(&[avg])?;
                }
                start = end;
            }
            let empirical_var = acc.sample_variance()?[0];
            let asymptotic = asymptotic_variance(n)?;
            Ok(Fig2Record {
                n,
                trials,
                empirical_var,
                asymptotic,
                abs_error: (empirical_var - asymptotic).abs(),
                oracle_var: 1.0 / (12.0 * n as f64),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_inputs() {
        assert!(fig2_experiment(&[1], 1000, 0, Execution::Serial).is_err());
        assert!(fig2_experiment(&[10], 999, 0, Execution::Serial).is_err());
        assert!(fig2_experiment(&[], 1000, 0, Execution::Serial).is_err());
    }

    #[test]
    fn serial_parallel_and_partitioned_agree() {
        let serial = trial_averages(5, 300, 0..2000, Execution::Serial);
        let parallel = trial_averages(5, 300, 0..2000, Execution::Parallel);
        assert_eq!(serial, parallel);
        let mut parts = trial_averages(5, 300, 0..700, Execution::Serial);
        parts.extend(trial_averages(5, 300, 700..2000, Execution::Parallel));
        assert_eq!(serial, parts);

        let a = fig2_experiment(&[100, 250], 3000, 9, Execution::Serial).unwrap();
        let b = fig2_experiment(&[100, 250], 3000, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_grid_tracks_uniform_oracle() {
        let recs = fig2_experiment(&[50, 200], 20_000, 3, Execution::Parallel).unwrap();
        for r in recs {
            assert!(
                (r.empirical_var - r.oracle_var).abs() < 0.05 * r.oracle_var,
                "{r:?}"
            );
            assert_eq!(r.abs_error, (r.empirical_var - r.asymptotic).abs());
            assert_eq!(r.trials, 20_000);
        }
    }

    #[test]
    fn averages_lie_in_unit_interval() {
        for t in 0..100 {
            let a = trial_average(1, 7, t);
            assert!((0.0..1.0).contains(&a));
        }
    }
}
