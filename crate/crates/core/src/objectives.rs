//! Pattern-indexed test objectives with analytic gradients.
//!
//! An [`Objective`] is a per-pattern error `E_p(w)` over a fixed dataset of
//! `M` patterns; the total error is the mean over patterns, so the batch
//! gradient is the mean of per-pattern gradients. Synthetic datasets are drawn
//! once from a seeded stream and then frozen.

use crate::error::{check_finite, invalid, Error, Result};
use crate::rng::{streams, RngStream};

/// Default base step for first-derivative central differences.
pub const FD_GRADIENT_STEP: f64 = 1e-6;
/// Default base step for second-derivative central differences.
pub const FD_HESSIAN_STEP: f64 = 1e-4;

pub trait Objective: Send + Sync {
    /// Parameter count `m`.
    fn dimension(&self) -> usize;

    /// Number of patterns `M`.
    fn dataset_size(&self) -> usize;

    /// Error of a single pattern.
    fn eval(&self, w: &[f64], pattern: usize) -> f64;

    /// Analytic gradient of a single pattern's error.
    fn grad(&self, w: &[f64], pattern: usize) -> Vec<f64>;

    /// Mean error over all patterns.
    fn total_error(&self, w: &[f64]) -> f64 {
        let m = self.dataset_size();
        (0..m).map(|p| self.eval(w, p)).sum::<f64>() / m as f64
    }

    /// Mean gradient over all patterns.
    fn total_gradient(&self, w: &[f64]) -> Vec<f64> {
        let m = self.dataset_size();
        let mut acc = vec![0.0; self.dimension()];
        for p in 0..m {
            for (a, g) in acc.iter_mut().zip(self.grad(w, p)) {
                *a += g;
            }
        }
        acc.iter_mut().for_each(|a| *a /= m as f64);
        acc
    }
}

/// One `(features, target)` training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub features: Vec<f64>,
    pub target: f64,
}

/// Diagonal quadratic `1/2 sum_i lambda_i (w_i - c_i - eps_i^p)^2` with
/// frozen per-pattern offsets `eps^p`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    lambdas: Vec<f64>,
    center: Vec<f64>,
    // Row-major, M rows of `dimension` offsets.
    offsets: Vec<f64>,
    patterns: usize,
}

impl Quadratic {
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn offset(&self, pattern: usize) -> &[f64] {
        let m = self.lambdas.len();
        &self.offsets[pattern * m..(pattern + 1) * m]
    }
}

impl Objective for Quadratic {
    fn dimension(&self) -> usize {
        self.lambdas.len()
    }

    fn dataset_size(&self) -> usize {
        self.patterns
    }

    fn eval(&self, w: &[f64], pattern: usize) -> f64 {
        let eps = self.offset(pattern);
        0.5 * self
            .lambdas
            .iter()
            .zip(w)
            .zip(&self.center)
            .zip(eps)
            .map(|(((l, w), c), e)| {
                let d = w - c - e;
                l * d * d
            })
            .sum::<f64>()
    }

    fn grad(&self, w: &[f64], pattern: usize) -> Vec<f64> {
        let eps = self.offset(pattern);
        self.lambdas
            .iter()
            .zip(w)
            .zip(&self.center)
            .zip(eps)
            .map(|(((l, w), c), e)| l * (w - c - e))
            .collect()
    }
}

/// Builds a noisy diagonal quadratic over `patterns` patterns.
///
/// Offsets are `noise_scale * U[-1, 1)` per coordinate, recentred so each
/// coordinate's offsets average to zero across the dataset.
pub fn make_quadratic(
    lambdas: &[f64],
    center: &[f64],
    noise_scale: f64,
    patterns: usize,
    seed: u64,
) -> Result<Quadratic> {
    if lambdas.is_empty() {
        return Err(invalid("lambdas", "at least one coordinate is required"));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(invalid(
            "lambdas",
            format!("every entry must be > 0, got {l}"),
        ));
    }
    if center.len() != lambdas.len() {
        return Err(Error::DimensionMismatch {
            expected: lambdas.len(),
            actual: center.len(),
        });
    }
    check_finite(center)?;
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(invalid(
            "noise_scale",
            format!("must be >= 0, got {noise_scale}"),
        ));
    }
    if patterns < 2 {
        return Err(invalid(
            "patterns",
            format!("need at least 2, got {patterns}"),
        ));
    }

    let m = lambdas.len();
    let mut offsets = vec![0.0; m * patterns];
    if noise_scale > 0.0 {
        let mut rng = RngStream::new(seed, streams::DATASET);
        offsets
            .iter_mut()
            .for_each(|e| *e = noise_scale * rng.next_symmetric());
        for i in 0..m {
            let mean = (0..patterns).map(|p| offsets[p * m + i]).sum::<f64>() / patterns as f64;
            for p in 0..patterns {
                offsets[p * m + i] -= mean;
            }
        }
    }
    Ok(Quadratic {
        lambdas: lambdas.to_vec(),
        center: center.to_vec(),
        offsets,
        patterns,
    })
}

/// Two-dimensional Rosenbrock function `(1 - x)^2 + 100 (y - x^2)^2`, a
/// single-pattern dataset.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

pub fn make_rosenbrock() -> Rosenbrock {
    Rosenbrock
}

impl Objective for Rosenbrock {
    fn dimension(&self) -> usize {
        2
    }

    fn dataset_size(&self) -> usize {
        1
    }

    fn eval(&self, w: &[f64], _pattern: usize) -> f64 {
        let (x, y) = (w[0], w[1]);
        (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2)
    }

    fn grad(&self, w: &[f64], _pattern: usize) -> Vec<f64> {
        let (x, y) = (w[0], w[1]);
        let r = y - x * x;
        vec![-2.0 * (1.0 - x) - 400.0 * x * r, 200.0 * r]
    }
}

/// Linear least squares, `1/2 (x . w - y)^2` per pattern.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    patterns: Vec<Pattern>,
    w_star: Vec<f64>,
}

impl LeastSquares {
    /// Wraps explicit patterns; `w_star` is the generating parameter vector,
    /// recorded for reference only.
    pub fn from_patterns(patterns: Vec<Pattern>, w_star: Vec<f64>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(invalid("patterns", "at least one pattern is required"));
        }
        let dim = w_star.len();
        for p in &patterns {
            if p.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.features.len(),
                });
            }
            check_finite(&p.features)?;
            check_finite(&[p.target])?;
        }
        Ok(Self { patterns, w_star })
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    fn residual(&self, w: &[f64], pattern: usize) -> f64 {
        let p = &self.patterns[pattern];
        p.features.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() - p.target
    }
}

impl Objective for LeastSquares {
    fn dimension(&self) -> usize {
        self.w_star.len()
    }

    fn dataset_size(&self) -> usize {
        self.patterns.len()
    }

    fn eval(&self, w: &[f64], pattern: usize) -> f64 {
        let r = self.residual(w, pattern);
        0.5 * r * r
    }

    fn grad(&self, w: &[f64], pattern: usize) -> Vec<f64> {
        let r = self.residual(w, pattern);
        self.patterns[pattern]
            .features
            .iter()
            .map(|x| r * x)
            .collect()
    }
}

/// Synthetic regression data: features and the hidden `w*` are `U[-1, 1)`,
/// targets are `x . w* + noise_scale * U[-1, 1)`.
pub fn make_least_squares(
    dim: usize,
    patterns: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<LeastSquares> {
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    if patterns < dim {
        return Err(invalid(
            "patterns",
            format!("need at least dim = {dim} patterns, got {patterns}"),
        ));
    }
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(invalid(
            "noise_scale",
            format!("must be >= 0, got {noise_scale}"),
        ));
    }
    let mut rng = RngStream::new(seed, streams::DATASET);
    let w_star: Vec<f64> = (0..dim).map(|_| rng.next_symmetric()).collect();
    let data = (0..patterns)
        .map(|_| {
            let features: Vec<f64> = (0..dim).map(|_| rng.next_symmetric()).collect();
            let clean: f64 = features.iter().zip(&w_star).map(|(x, w)| x * w).sum();
            let target = clean + noise_scale * rng.next_symmetric();
            Pattern { features, target }
        })
        .collect();
    LeastSquares::from_patterns(data, w_star)
}

fn step_for(h: f64, wi: f64) -> f64 {
    h * wi.abs().max(1.0)
}

fn checked(value: f64, context: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteEvaluation { context: context() })
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            "h",
            format!("finite-difference step must be > 0, got {h}"),
        ))
    }
}

/// Central differences of a scalar function. The step along coordinate `i`
/// is `h * max(1, |w_i|)`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Result<Vec<f64>> {
    check_step(h)?;
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            let step = step_for(h, w[i]);
            x[i] = w[i] + step;
            let plus = checked(f(&x), || format!("w + h e_{i}"))?;
            x[i] = w[i] - step;
            let minus = checked(f(&x), || format!("w - h e_{i}"))?;
            x[i] = w[i];
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// Full finite-difference Hessian of a scalar function: three-point
/// diagonal, four-point mixed partials.
pub fn central_hessian(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    check_step(h)?;
    let m = w.len();
    let f0 = checked(f(w), || "w".to_string())?;
    let steps: Vec<f64> = w.iter().map(|&wi| step_for(h, wi)).collect();
    let mut x = w.to_vec();
    let mut hess = vec![vec![0.0; m]; m];
    for i in 0..m {
        x[i] = w[i] + steps[i];
        let plus = checked(f(&x), || format!("w + h e_{i}"))?;
        x[i] = w[i] - steps[i];
        let minus = checked(f(&x), || format!("w - h e_{i}"))?;
        x[i] = w[i];
        hess[i][i] = (plus - 2.0 * f0 + minus) / (steps[i] * steps[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                x[i] = w[i] + si * steps[i];
                x[j] = w[j] + sj * steps[j];
                let v = f(&x);
                x[i] = w[i];
                x[j] = w[j];
                checked(v, || format!("mixed stencil ({i}, {j})"))
            };
            let pp = corner(1.0, 1.0)?;
            let pm = corner(1.0, -1.0)?;
            let mp = corner(-1.0, 1.0)?;
            let mm = corner(-1.0, -1.0)?;
            let h_ij = (pp - pm - mp + mm) / (4.0 * steps[i] * steps[j]);
            hess[i][j] = h_ij;
            hess[j][i] = h_ij;
        }
    }
    Ok(hess)
}

/// Central-difference gradient of one pattern's error.
pub fn fd_gradient(
    objective: &dyn Objective,
    w: &[f64],
    pattern: usize,
    h: f64,
) -> Result<Vec<f64>> {
    central_gradient(|x| objective.eval(x, pattern), w, h)
}

/// Central-difference gradient of the total error.
pub fn fd_total_gradient(objective: &dyn Objective, w: &[f64], h: f64) -> Result<Vec<f64>> {
    central_gradient(|x| objective.total_error(x), w, h)
}

/// Diagonal second derivatives of the total error,
/// `(E(w + h e_i) - 2 E(w) + E(w - h e_i)) / h^2`.
pub fn fd_hessian_diag(objective: &dyn Objective, w: &[f64], h: f64) -> Result<Vec<f64>> {
    check_step(h)?;
    let f0 = checked(objective.total_error(w), || "w".to_string())?;
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            let step = step_for(h, w[i]);
            x[i] = w[i] + step;
            let plus = checked(objective.total_error(&x), || format!("w + h e_{i}"))?;
            x[i] = w[i] - step;
            let minus = checked(objective.total_error(&x), || format!("w - h e_{i}"))?;
            x[i] = w[i];
            Ok((plus - 2.0 * f0 + minus) / (step * step))
        })
        .collect()
}

/// Full finite-difference Hessian of the total error.
pub fn fd_hessian(objective: &dyn Objective, w: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    central_hessian(|x| objective.total_error(x), w, h)
}
