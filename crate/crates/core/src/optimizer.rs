//! Vario-eta and plain SGD updates, expected-error estimators, and the
//! seeded optimization loop.
//!
//! Vario-eta divides each coordinate's step by the spread of that coordinate's
//! gradients over the batch:
//!
//! ```text
//! dw_i = -eta * mean_i / (s_i + phi)
//! ```
//!
//! In [`VarianceMode::Recursive`] `s_i` is the batch sample standard deviation
//! (divisor `N - 1`) from [`MomentAccumulator`]. In [`VarianceMode::Asymptotic`]
//! every `s_i` is replaced by the single scalar `sqrt(v_N)`, where `v_N` is
//! [`asymptotic_variance`] at the batch size. That removes per-coordinate
//! adaptivity: an asymptotic-mode step is exactly an SGD step with learning
//! rate `eta / (sqrt(v_N) + phi)`, see [`VarioEtaConfig::equivalent_sgd_eta`].

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::asymptotics::asymptotic_variance;
use crate::error::{check_finite, invalid, Error, Result};
use crate::moments::{GradientSample, MomentAccumulator};
use crate::objectives::{fd_hessian, fd_hessian_diag, fd_total_gradient, Objective};
use crate::rng::{streams, RngStream};

/// Default stabilizer added to the gradient standard deviation.
pub const DEFAULT_PHI: f64 = 1e-6;

/// Default base step for the finite differences used by the expected-error
/// estimators; the step along `w_i` is `h * max(1, |w_i|)`.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMode {
    /// Batch sample variance via the moment recursion.
    Recursive,
    /// Size-only asymptotic variance, shared by all coordinates.
    Asymptotic,
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recursive" => Ok(Self::Recursive),
            "asymptotic" => Ok(Self::Asymptotic),
            other => Err(invalid(
                "variance_mode",
                format!("expected `recursive` or `asymptotic`, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarioEtaConfig {
    pub eta: f64,
    pub phi: f64,
    pub variance_mode: VarianceMode,
    pub batch_size: usize,
    /// Sup-norm cap on a single update; off by default.
    pub max_step: Option<f64>,
}

impl VarioEtaConfig {
    pub fn new(eta: f64, batch_size: usize) -> Self {
        Self {
            eta,
            phi: DEFAULT_PHI,
            variance_mode: VarianceMode::Recursive,
            batch_size,
            max_step: None,
        }
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_mode(mut self, mode: VarianceMode) -> Self {
        self.variance_mode = mode;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = Some(max_step);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(invalid("eta", format!("must be > 0, got {}", self.eta)));
        }
        if !(self.phi >= 0.0) || !self.phi.is_finite() {
            return Err(invalid("phi", format!("must be >= 0, got {}", self.phi)));
        }
        if let Some(m) = self.max_step {
            if !(m > 0.0) {
                return Err(invalid("max_step", format!("must be > 0, got {m}")));
            }
        }
        match self.variance_mode {
            VarianceMode::Recursive if self.batch_size < 2 => Err(invalid(
                "batch_size",
                format!(
                    "recursive variance needs at least 2 samples, got {}",
                    self.batch_size
                ),
            )),
            VarianceMode::Asymptotic => self.asymptotic_scale().map(|_| ()),
            _ => Ok(()),
        }
    }

    /// `sqrt(v_N)` for the configured batch size; an error when `v_N <= 0`.
    pub fn asymptotic_scale(&self) -> Result<f64> {
        let n = self.batch_size as u64;
        let v = asymptotic_variance(n)?;
        if !(v > 0.0) {
            return Err(Error::NonPositiveAsymptoticVariance { n, value: v });
        }
        Ok(v.sqrt())
    }

    /// Learning rate of the SGD run that an asymptotic-mode run reproduces.
    pub fn equivalent_sgd_eta(&self) -> Result<f64> {
        Ok(self.eta / (self.asymptotic_scale()? + self.phi))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub w: Vec<f64>,
    pub step_count: u64,
    pub last_update: Vec<f64>,
}

fn check_batch(batch: &[GradientSample], dim: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(invalid("batch", "at least one gradient sample is required"));
    }
    match batch.iter().find(|g| g.dimension() != dim) {
        Some(bad) => Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dimension(),
        }),
        None => Ok(()),
    }
}

/// Arithmetic mean of the batch, summed in batch order.
fn batch_mean(batch: &[GradientSample], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for g in batch {
        for (m, x) in mean.iter_mut().zip(g.values()) {
            *m += x;
        }
    }
    let n = batch.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if num == 0.0 {
        Ok(0.0)
    } else if den == 0.0 {
        Err(Error::ZeroVariance)
    } else {
        Ok(num / den)
    }
}

impl OptimizerState {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        check_finite(&w)?;
        let m = w.len();
        Ok(Self {
            w,
            step_count: 0,
            last_update: vec![0.0; m],
        })
    }

    pub fn dimension(&self) -> usize {
        self.w.len()
    }

    /// One vario-eta update from a batch of per-pattern gradients.
    ///
    /// The state is unchanged when an error is returned.
    pub fn varioeta_step(
        &mut self,
        config: &VarioEtaConfig,
        batch: &[GradientSample],
    ) -> Result<()> {
        config.validate()?;
        if batch.len() != config.batch_size {
            return Err(Error::BatchSizeMismatch {
                expected: config.batch_size,
                actual: batch.len(),
            });
        }
        let dim = self.dimension();
        check_batch(batch, dim)?;

        let update = match config.variance_mode {
            VarianceMode::Recursive => {
                let mut acc = MomentAccumulator::new();
                for g in batch {
                    acc.absorb(g)?;
                }
                acc.mean()?
                    .iter()
                    .zip(acc.sample_variance()?)
                    .map(|(&m, &v)| ratio(-config.eta * m, v.sqrt() + config.phi))
                    .collect::<Result<Vec<f64>>>()?
            }
            VarianceMode::Asymptotic => {
                let eta = config.equivalent_sgd_eta()?;
                scaled_mean_update(eta, batch, dim)
            }
        };
        self.apply(update, config.max_step)
    }

    /// One plain gradient-descent update, `dw = -eta * mean gradient`.
    pub fn sgd_step(&mut self, eta: f64, batch: &[GradientSample]) -> Result<()> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(invalid("eta", format!("must be > 0, got {eta}")));
        }
        let dim = self.dimension();
        check_batch(batch, dim)?;
        let update = scaled_mean_update(eta, batch, dim);
        self.apply(update, None)
    }

    fn apply(&mut self, mut update: Vec<f64>, max_step: Option<f64>) -> Result<()> {
        if let Some(cap) = max_step {
            let sup = update.iter().fold(0.0f64, |a, d| a.max(d.abs()));
            if sup > cap {
                let scale = cap / sup;
                update.iter_mut().for_each(|d| *d *= scale);
            }
        }
        check_finite(&update)?;
        let next: Vec<f64> = self.w.iter().zip(&update).map(|(w, d)| w + d).collect();
        check_finite(&next)?;
        self.w = next;
        self.last_update = update;
        self.step_count += 1;
        Ok(())
    }
}

fn scaled_mean_update(eta: f64, batch: &[GradientSample], dim: usize) -> Vec<f64> {
    batch_mean(batch, dim)
        .into_iter()
        .map(|m| -eta * m)
        .collect()
}

fn check_fd_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(invalid("fd_step", format!("must be > 0, got {h}")))
    }
}

fn finite_or(value: f64, context: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteEvaluation {
            context: context.to_string(),
        })
    }
}

/// Expected error under zero-mean uncorrelated updates `dw_i = -eta g_i`:
/// `E(w) + eta^2 / 2 * sum_i var(g_i) d2E/dw_i^2`.
pub fn expected_error_simple(
    objective: &dyn Objective,
    w: &[f64],
    eta: f64,
    sigma2: &[f64],
    fd_step: f64,
) -> Result<f64> {
    check_fd_step(fd_step)?;
    if sigma2.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: sigma2.len(),
        });
    }
    if let Some(v) = sigma2.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(invalid("sigma2", format!("entries must be >= 0, got {v}")));
    }
    let e0 = finite_or(objective.total_error(w), "E(w)")?;
    let noise: f64 = if sigma2.iter().all(|&v| v == 0.0) {
        0.0
    } else {
        let curvature = fd_hessian_diag(objective, w, fd_step)?;
        sigma2.iter().zip(&curvature).map(|(v, h)| v * h).sum()
    };
    Ok(e0 + 0.5 * eta * eta * noise)
}

/// Second-order expected error over an empirical set of perturbations,
/// keeping the mean-update and cross-covariance terms:
///
/// ```text
/// E(w) + sum_i <dw_i> dE/dw_i + 1/2 sum_i <dw_i^2> d2E/dw_i^2
///      + sum_{i<j} <dw_i dw_j> d2E/dw_i dw_j
/// ```
pub fn expected_error_full(
    objective: &dyn Objective,
    w: &[f64],
    perturbations: &[Vec<f64>],
    fd_step: f64,
) -> Result<f64> {
    check_fd_step(fd_step)?;
    if perturbations.len() < 2 {
        return Err(Error::InsufficientSamples {
            quantity: "perturbation moments",
            count: perturbations.len(),
        });
    }
    let m = w.len();
    if let Some(bad) = perturbations.iter().find(|p| p.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: bad.len(),
        });
    }
    for p in perturbations {
        check_finite(p)?;
    }

    let count = perturbations.len() as f64;
    let mut first = vec![0.0; m];
    let mut second = vec![vec![0.0; m]; m];
    for p in perturbations {
        for i in 0..m {
            first[i] += p[i];
            for j in i..m {
                second[i][j] += p[i] * p[j];
            }
        }
    }
    first.iter_mut().for_each(|v| *v /= count);
    second.iter_mut().flatten().for_each(|v| *v /= count);

    let e0 = finite_or(objective.total_error(w), "E(w)")?;
    let grad = fd_total_gradient(objective, w, fd_step)?;
    let hess = fd_hessian(objective, w, fd_step)?;

    let mut total = e0;
    for i in 0..m {
        total += first[i] * grad[i];
        total += 0.5 * second[i][i] * hess[i][i];
        for j in i + 1..m {
            total += second[i][j] * hess[i][j];
        }
    }
    Ok(total)
}

/// Update rule of an optimizer run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Sgd { eta: f64, batch_size: usize },
    VarioEta(VarioEtaConfig),
}

impl Method {
    pub fn batch_size(&self) -> usize {
        match self {
            Method::Sgd { batch_size, .. } => *batch_size,
            Method::VarioEta(c) => c.batch_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::Sgd { eta, batch_size } => {
                if !(*eta > 0.0) || !eta.is_finite() {
                    return Err(invalid("eta", format!("must be > 0, got {eta}")));
                }
                if *batch_size == 0 {
                    return Err(invalid("batch_size", "must be at least 1"));
                }
                Ok(())
            }
            Method::VarioEta(c) => c.validate(),
        }
    }
}

/// Epoch-wise sampling without replacement: the dataset is shuffled, consumed
/// in consecutive batches, and reshuffled once fewer than a full batch remain.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
    rng: RngStream,
}

impl BatchSampler {
    pub fn new(dataset: usize, batch: usize, seed: u64) -> Result<Self> {
        if batch == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if batch > dataset {
            return Err(Error::BatchExceedsDataset { batch, dataset });
        }
        let mut rng = RngStream::new(seed, streams::BATCHES);
        let mut order: Vec<usize> = (0..dataset).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            order,
            cursor: 0,
            batch,
            rng,
        })
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.cursor + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor += self.batch;
        &self.order[start..self.cursor]
    }
}

/// One row of an optimizer trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub step: u64,
    /// Total error `E(w)` over the dataset.
    pub error: f64,
    pub w_norm: f64,
    pub update_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The run stopped at `step`; records up to the previous step are kept.
    Diverged {
        step: u64,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub steps: u64,
    pub seed: u64,
    pub record_every: u64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    /// Seconds since the run started, one entry per record.
    pub record_seconds: Vec<f64>,
    pub status: RunStatus,
    pub final_w: Vec<f64>,
    /// Order-sensitive hash of every pattern index consumed.
    pub batch_fingerprint: u64,
    /// Wall time spent computing per-pattern gradients.
    pub gradient_seconds: f64,
    /// Wall time spent inside the update rule.
    pub update_seconds: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Runs `config.steps` updates from `initial_w`, recording the total error at
/// step 0, every `record_every` steps, and at the final step.
///
/// Deterministic given the seed: batches come from a [`BatchSampler`] keyed
/// by the seed only, so runs with different methods but the same seed consume
/// the same batch sequence.
pub fn run(objective: &dyn Objective, config: &RunConfig, initial_w: &[f64]) -> Result<Trajectory> {
    config.method.validate()?;
    if config.steps == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    if config.record_every == 0 {
        return Err(invalid("record_every", "must be at least 1"));
    }
    if initial_w.len() != objective.dimension() {
        return Err(Error::DimensionMismatch {
            expected: objective.dimension(),
            actual: initial_w.len(),
        });
    }
    let mut sampler = BatchSampler::new(
        objective.dataset_size(),
        config.method.batch_size(),
        config.seed,
    )?;
    let mut state = OptimizerState::new(initial_w.to_vec())?;

    let initial_error = objective.total_error(&state.w);
    if !initial_error.is_finite() {
        return Err(Error::NonFiniteEvaluation {
            context: "initial parameters".to_string(),
        });
    }
    let mut records = vec![TrajectoryRecord {
        step: 0,
        error: initial_error,
        w_norm: norm(&state.w),
        update_norm: 0.0,
    }];
    let run_started = Instant::now();
    let mut record_seconds = vec![0.0];
    let mut fingerprint = FNV_OFFSET;
    let mut gradient_seconds = 0.0;
    let mut update_seconds = 0.0;
    let mut status = RunStatus::Completed;

    for step in 1..=config.steps {
        let indices = sampler.next_batch();
        for &p in indices {
            fingerprint = (fingerprint ^ p as u64).wrapping_mul(FNV_PRIME);
        }

        let started = Instant::now();
        let batch: Result<Vec<GradientSample>> = indices
            .iter()
            .map(|&p| GradientSample::new(objective.grad(&state.w, p), p))
            .collect();
        gradient_seconds += started.elapsed().as_secs_f64();
        let batch = match batch {
            Ok(b) => b,
            Err(e) => {
                status = RunStatus::Diverged {
                    step,
                    reason: format!("gradient: {e}"),
                };
                break;
            }
        };

        let started = Instant::now();
        let outcome = match &config.method {
            Method::Sgd { eta, .. } => state.sgd_step(*eta, &batch),
            Method::VarioEta(c) => state.varioeta_step(c, &batch),
        };
        update_seconds += started.elapsed().as_secs_f64();
        if let Err(e) = outcome {
            status = RunStatus::Diverged {
                step,
                reason: format!("update: {e}"),
            };
            break;
        }

        if step % config.record_every == 0 || step == config.steps {
            let error = objective.total_error(&state.w);
            if !error.is_finite() {
                status = RunStatus::Diverged {
                    step,
                    reason: format!("non-finite error {error}"),
                };
                break;
            }
            records.push(TrajectoryRecord {
                step,
                error,
                w_norm: norm(&state.w),
                update_norm: norm(&state.last_update),
            });
            record_seconds.push(run_started.elapsed().as_secs_f64());
        }
    }

    Ok(Trajectory {
        records,
        record_seconds,
        status,
        final_w: state.w,
        batch_fingerprint: fingerprint,
        gradient_seconds,
        update_seconds,
    })
}
