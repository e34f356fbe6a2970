//! Running mean and variance of per-parameter error gradients.
//!
//! [`MomentAccumulator`] folds gradient samples one at a time with the
//! single-variable recursions
//!
//! ```text
//! mean_n = (1 - 1/n) mean_{n-1} + (1/n) g_n
//! var_n  = (1 - 1/(n-1)) var_{n-1} + (1/n) (g_n - mean_{n-1})^2      (n >= 2)
//! ```
//!
//! which reproduce the sample mean and the `n - 1` divisor sample variance
//! without storing the history. The two-pass formulas in [`direct_moments`]
//! are kept alongside as the reference the recursion is tested against.

use crate::error::{check_finite, Error, Result};

/// One gradient vector `g^n`, the per-parameter partial derivatives of the
/// error for a single pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    values: Vec<f64>,
    pattern_index: usize,
}

impl GradientSample {
    pub fn new(values: Vec<f64>, pattern_index: usize) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self {
            values,
            pattern_index,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pattern_index(&self) -> usize {
        self.pattern_index
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Wraps a scalar history as one-dimensional samples indexed by position.
pub fn scalar_samples(history: &[f64]) -> Result<Vec<GradientSample>> {
    history
        .iter()
        .enumerate()
        .map(|(i, &g)| GradientSample::new(vec![g], i))
        .collect()
}

/// Streaming per-coordinate mean and sample variance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentAccumulator {
    n: u64,
    mean: Vec<f64>,
    // Meaningful only once n >= 2.
    sample_variance: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of absorbed samples.
    pub fn count(&self) -> u64 {
        self.n
    }

    /// Parameter count, or `None` before the first sample fixes it.
    pub fn dimension(&self) -> Option<usize> {
        (self.n > 0).then_some(self.mean.len())
    }

    pub fn absorb(&mut self, sample: &GradientSample) -> Result<()> {
        self.absorb_values(sample.values())
    }

    /// Folds one gradient vector into the running moments.
    ///
    /// The accumulator is left untouched when the input is rejected.
    pub fn absorb_values(&mut self, g: &[f64]) -> Result<()> {
        check_finite(g)?;
        if self.n == 0 {
            self.n = 1;
            self.mean = g.to_vec();
            self.sample_variance = vec![0.0; g.len()];
            return Ok(());
        }
        if g.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: g.len(),
            });
        }

        self.n += 1;
        let n = self.n as f64;
        let b_n = 1.0 / n;
        // a_{n-1} = 1 - 1/(n-1); zero at n = 2, which discards the undefined var_1.
        let a_prev = 1.0 - 1.0 / (n - 1.0);
        for ((mean, var), &x) in self
            .mean
            .iter_mut()
            .zip(self.sample_variance.iter_mut())
            .zip(g)
        {
            let d = x - *mean;
            *var = a_prev * *var + b_n * d * d;
            // (1 - 1/n) mean + (1/n) x, written in increment form.
            *mean += b_n * d;
        }
        Ok(())
    }

    /// Running mean; an error before any sample is absorbed.
    pub fn mean(&self) -> Result<&[f64]> {
        if self.n == 0 {
            return Err(Error::InsufficientSamples {
                quantity: "mean",
                count: 0,
            });
        }
        Ok(&self.mean)
    }

    /// Sample variance (divisor `n - 1`); an error for fewer than two samples.
    pub fn sample_variance(&self) -> Result<&[f64]> {
        if self.n < 2 {
            return Err(Error::InsufficientSamples {
                quantity: "sample variance",
                count: self.n as usize,
            });
        }
        Ok(&self.sample_variance)
    }

    /// Population variance (divisor `n`), derived from the sample variance.
    pub fn population_variance(&self) -> Result<Vec<f64>> {
        match self.n {
            0 => Err(Error::InsufficientSamples {
                quantity: "population variance",
                count: 0,
            }),
            1 => Ok(vec![0.0; self.mean.len()]),
            n => {
                let scale = (n - 1) as f64 / n as f64;
                Ok(self.sample_variance.iter().map(|v| v * scale).collect())
            }
        }
    }

    /// Square root of the sample variance, per coordinate.
    pub fn sample_std(&self) -> Result<Vec<f64>> {
        Ok(self.sample_variance()?.iter().map(|v| v.sqrt()).collect())
    }
}

/// Two-pass moments of a complete history.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectMoments {
    pub mean: Vec<f64>,
    /// `None` for a single-sample history.
    pub sample_variance: Option<Vec<f64>>,
    pub population_variance: Vec<f64>,
}

/// Textbook two-pass mean and variances of a stored history.
pub fn direct_moments(history: &[GradientSample]) -> Result<DirectMoments> {
    let first = history.first().ok_or(Error::InsufficientSamples {
        quantity: "mean",
        count: 0,
    })?;
    let m = first.dimension();
    if let Some(bad) = history.iter().find(|s| s.dimension() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: bad.dimension(),
        });
    }

    let count = history.len() as f64;
    let mut mean = vec![0.0; m];
    for s in history {
        for (acc, &x) in mean.iter_mut().zip(s.values()) {
            *acc += x;
        }
    }
    mean.iter_mut().for_each(|v| *v /= count);

    let mut sum_sq = vec![0.0; m];
    for s in history {
        for ((acc, &x), &mu) in sum_sq.iter_mut().zip(s.values()).zip(&mean) {
            *acc += (x - mu) * (x - mu);
        }
    }

    let population_variance = sum_sq.iter().map(|s| s / count).collect();
    let sample_variance =
        (history.len() >= 2).then(|| sum_sq.iter().map(|s| s / (count - 1.0)).collect());
    Ok(DirectMoments {
        mean,
        sample_variance,
        population_variance,
    })
}

/// Concentration ratio `f = (sum g)^2 / sum g^2` of one coordinate's history.
///
/// Cauchy-Schwarz bounds it by `0 <= f <= N`; the upper bound is reached
/// exactly when every entry is equal. The lower bound is 0, attained by
/// cancelling histories such as `[1, -1]`, not 1.
pub fn f_ratio(history: &[f64]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::InsufficientSamples {
            quantity: "f ratio",
            count: 0,
        });
    }
    check_finite(history)?;
    let sum: f64 = history.iter().sum();
    let sum_sq: f64 = history.iter().map(|g| g * g).sum();
    if sum_sq == 0.0 {
        return Err(Error::AllZeroHistory);
    }
    // Rounding can push a constant history a few ulps past N.
    Ok((sum * sum / sum_sq).min(history.len() as f64))
}

/// Expected update `<dw> = -eta <g> / sigma_pop(g)` of one coordinate over
/// a history of gradients, using population moments.
pub fn expected_perturbation(history: &[f64], eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(crate::error::invalid(
            "eta",
            format!("must be > 0, got {eta}"),
        ));
    }
    if history.len() < 2 {
        return Err(Error::InsufficientSamples {
            quantity: "expected perturbation",
            count: history.len(),
        });
    }
    check_finite(history)?;
    let n = history.len() as f64;
    let mean = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(-eta * mean / var.sqrt())
}

/// Magnitude of the expected update written through the concentration ratio,
/// `eta / sqrt(N / f - 1)`.
pub fn perturbation_magnitude_from_f(batch: usize, f: f64, eta: f64) -> Result<f64> {
    let n = batch as f64;
    if f >= n {
        return Err(Error::ZeroVariance);
    }
    if f == 0.0 {
        return Ok(0.0);
    }
    Ok(eta / (n / f - 1.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fold(history: &[f64]) -> MomentAccumulator {
        let mut acc = MomentAccumulator::new();
        for &g in history {
            acc.absorb_values(&[g]).unwrap();
        }
        acc
    }

    #[test]
    fn first_sample_defines_mean_only() {
        let acc = fold(&[5.0]);
        assert_eq!(acc.count(), 1);
        assert_eq!(acc.mean().unwrap(), &[5.0]);
        assert!(matches!(
            acc.sample_variance(),
            Err(Error::InsufficientSamples { count: 1, .. })
        ));
    }

    #[test]
    fn empty_accumulator_queries_fail() {
        let acc = MomentAccumulator::new();
        assert!(acc.mean().is_err());
        assert!(acc.sample_variance().is_err());
        assert!(acc.population_variance().is_err());
        assert_eq!(acc.dimension(), None);
    }

    #[test]
    fn hand_evaluated_sequences() {
        let acc = fold(&[1.0, 2.0, 3.0]);
        assert_eq!(acc.mean().unwrap(), &[2.0]);
        assert_relative_eq!(acc.sample_variance().unwrap()[0], 1.0, epsilon = 1e-15);

        let acc = fold(&[1.0, -1.0]);
        assert_eq!(acc.mean().unwrap(), &[0.0]);
        assert_relative_eq!(acc.sample_variance().unwrap()[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_samples_without_mutation() {
        let mut acc = fold(&[1.0, 2.0]);
        let before = acc.clone();
        assert!(matches!(
            acc.absorb_values(&[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 1,
                actual: 2
            })
        ));
        assert!(matches!(
            acc.absorb_values(&[f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        assert_eq!(acc, before);
        assert!(GradientSample::new(vec![f64::INFINITY], 0).is_err());
    }

    #[test]
    fn thousand_random_samples_match_two_pass() {
        let mut rng = RngStream::new(11, 0);
        let history: Vec<f64> = (0..1000)
            .map(|_| 3.0 + 2.0 * rng.next_symmetric())
            .collect();
        let acc = fold(&history);
        let direct = direct_moments(&scalar_samples(&history).unwrap()).unwrap();
        assert_relative_eq!(acc.mean().unwrap()[0], direct.mean[0], max_relative = 1e-9);
        assert_relative_eq!(
            acc.sample_variance().unwrap()[0],
            direct.sample_variance.unwrap()[0],
            max_relative = 1e-9
        );
    }

    #[test]
    fn direct_moments_hand_values() {
        let d = direct_moments(&scalar_samples(&[1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(d.mean, vec![2.0]);
        assert_eq!(d.sample_variance, Some(vec![2.0]));
        assert_eq!(d.population_variance, vec![1.0]);

        let d = direct_moments(&scalar_samples(&[4.5, 4.5, 4.5]).unwrap()).unwrap();
        assert_eq!(d.mean, vec![4.5]);
        assert_eq!(d.sample_variance, Some(vec![0.0]));
        assert_eq!(d.population_variance, vec![0.0]);

        let d = direct_moments(&scalar_samples(&[1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(d.mean, vec![2.0]);
        assert_eq!(d.sample_variance, Some(vec![1.0]));
        assert_relative_eq!(d.population_variance[0], 2.0 / 3.0, epsilon = 1e-15);

        assert!(direct_moments(&[]).is_err());
        let single = direct_moments(&scalar_samples(&[7.0]).unwrap()).unwrap();
        assert_eq!(single.sample_variance, None);
    }

    #[test]
    fn f_ratio_examples() {
        assert_eq!(f_ratio(&[0.3; 7]).unwrap(), 7.0);
        assert_eq!(f_ratio(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(f_ratio(&[1.0, -1.0]).unwrap(), 0.0);
        assert_relative_eq!(f_ratio(&[1.0, 3.0]).unwrap(), 1.6, epsilon = 1e-15);
        assert_eq!(f_ratio(&[0.0, 0.0]), Err(Error::AllZeroHistory));
        assert!(f_ratio(&[]).is_err());
    }

    #[test]
    fn expected_perturbation_examples() {
        assert_relative_eq!(
            expected_perturbation(&[1.0, 3.0], 0.1).unwrap(),
            -0.2,
            epsilon = 1e-15
        );
        assert_eq!(expected_perturbation(&[1.0, -1.0], 0.7).unwrap(), 0.0);
        assert_eq!(
            expected_perturbation(&[2.0, 2.0], 0.1),
            Err(Error::ZeroVariance)
        );
        assert!(expected_perturbation(&[1.0, 3.0], 0.0).is_err());
        assert!(expected_perturbation(&[1.0], 0.1).is_err());
    }

    proptest! {
        #[test]
        fn recursion_matches_two_pass(history in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            let acc = fold(&history);
            let direct = direct_moments(&scalar_samples(&history).unwrap()).unwrap();
            let tol = |x: f64| 1e-9 * x.abs() + 1e-12;
            prop_assert!((acc.mean().unwrap()[0] - direct.mean[0]).abs() <= tol(direct.mean[0]));
            let sv = direct.sample_variance.unwrap()[0];
            prop_assert!((acc.sample_variance().unwrap()[0] - sv).abs() <= tol(sv));
            prop_assert!(acc.sample_variance().unwrap()[0] >= 0.0);
        }

        #[test]
        fn population_is_scaled_sample(history in prop::collection::vec(-10f64..10.0, 2..50)) {
            let direct = direct_moments(&scalar_samples(&history).unwrap()).unwrap();
            let n = history.len() as f64;
            let expected = direct.sample_variance.unwrap()[0] * (n - 1.0) / n;
            prop_assert!((direct.population_variance[0] - expected).abs() <= 1e-12 * expected.abs() + 1e-15);
            let acc = fold(&history);
            let pv = acc.population_variance().unwrap()[0];
            prop_assert!((pv - expected).abs() <= 1e-9 * expected.abs() + 1e-12);
        }

        #[test]
        fn f_ratio_bounds(history in prop::collection::vec(-5f64..5.0, 1..64)) {
            prop_assume!(history.iter().any(|&g| g != 0.0));
            let f = f_ratio(&history).unwrap();
            prop_assert!(f >= 0.0 && f <= history.len() as f64);
        }

        #[test]
        fn permutation_invariance(mut history in prop::collection::vec(-5f64..5.0, 2..40), k in 0usize..40) {
            prop_assume!(history.iter().any(|&g| g != 0.0));
            let f = f_ratio(&history).unwrap();
            let d = direct_moments(&scalar_samples(&history).unwrap()).unwrap();
            let k = k % history.len();
            history.rotate_left(k);
            history.reverse();
            let f2 = f_ratio(&history).unwrap();
            let d2 = direct_moments(&scalar_samples(&history).unwrap()).unwrap();
            prop_assert!((f - f2).abs() <= 1e-12 * f.max(1.0));
            prop_assert!((d.mean[0] - d2.mean[0]).abs() <= 1e-12);
            prop_assert!((d.population_variance[0] - d2.population_variance[0]).abs() <= 1e-12);
        }

        #[test]
        fn magnitude_identity(history in prop::collection::vec(-5f64..5.0, 2..40), eta in 0.001f64..1.0) {
            let Ok(dw) = expected_perturbation(&history, eta) else { return Ok(()); };
            let f = f_ratio(&history).unwrap();
            let Ok(mag) = perturbation_magnitude_from_f(history.len(), f, eta) else { return Ok(()); };
            prop_assert!((dw.abs() - mag).abs() <= 1e-12 * mag.max(1e-300) + 1e-15,
                "direct {} vs via f {}", dw.abs(), mag);
        }
    }
}
