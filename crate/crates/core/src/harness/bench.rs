//! Side-by-side optimizer runs on a shared batch sequence.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::objectives::{make_least_squares, make_quadratic, make_rosenbrock, Objective};
use crate::optimizer::{
    run, Method, RunConfig, RunStatus, VarianceMode, VarioEtaConfig, DEFAULT_PHI,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Quadratic,
    Rosenbrock,
    LeastSquares,
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "rosenbrock" => Ok(Self::Rosenbrock),
            "least-squares" => Ok(Self::LeastSquares),
            other => Err(invalid(
                "problem",
                format!("expected quadratic, rosenbrock or least-squares, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quadratic => "quadratic",
            Self::Rosenbrock => "rosenbrock",
            Self::LeastSquares => "least-squares",
        })
    }
}

/// Synthetic problem description. `dim`, `patterns` and `noise` are ignored
/// by Rosenbrock, which is a fixed 2-d, single-pattern objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub problem: Problem,
    pub dim: usize,
    pub patterns: usize,
    pub noise: f64,
}

impl ProblemConfig {
    pub fn new(problem: Problem) -> Self {
        Self {
            problem,
            dim: 3,
            patterns: 1000,
            noise: 0.1,
        }
    }

    /// The objective and its starting point; dataset noise is drawn from `seed`.
    pub fn build(&self, seed: u64) -> Result<(Box<dyn Objective>, Vec<f64>)> {
        match self.problem {
            Problem::Quadratic => {
                let d = self.dim.max(1);
                // curvatures spread log-uniformly over [1, 10]
                let lambdas: Vec<f64> = (0..d)
                    .map(|i| {
                        if d == 1 {
                            1.0
                        } else {
                            10f64.powf(i as f64 / (d - 1) as f64)
                        }
                    })
                    .collect();
                let q = make_quadratic(&lambdas, &vec![0.0; d], self.noise, self.patterns, seed)?;
                Ok((Box::new(q), vec![5.0; d]))
            }
            Problem::Rosenbrock => Ok((Box::new(make_rosenbrock()), vec![-1.2, 1.0])),
            Problem::LeastSquares => {
                let ls = make_least_squares(self.dim, self.patterns, self.noise, seed)?;
                Ok((Box::new(ls), vec![0.0; self.dim]))
            }
        }
    }
}

/// A named update rule for benchmarking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    Sgd,
    /// SGD at the learning rate an asymptotic vario-eta run reduces to.
    SgdEquivalent,
    VarioEtaRecursive,
    VarioEtaAsymptotic,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::SgdEquivalent => "sgd-equivalent",
            Self::VarioEtaRecursive => "varioeta-recursive",
            Self::VarioEtaAsymptotic => "varioeta-asymptotic",
        }
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::Sgd,
            Self::SgdEquivalent,
            Self::VarioEtaRecursive,
            Self::VarioEtaAsymptotic,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| {
            invalid(
                "method",
                format!("expected sgd, sgd-equivalent, varioeta-recursive or varioeta-asymptotic, got `{s}`"),
            )
        })
    }
}

/// Optimizer settings shared by every method of a bench.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSettings {
    pub eta: f64,
    pub phi: f64,
    pub batch_size: usize,
    pub max_step: Option<f64>,
    pub steps: u64,
    pub record_every: u64,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            eta: 0.01,
            phi: DEFAULT_PHI,
            batch_size: 10,
            max_step: None,
            steps: 2000,
            record_every: 10,
            seed: 0,
        }
    }
}

impl BenchSettings {
    fn varioeta(&self, mode: VarianceMode) -> VarioEtaConfig {
        VarioEtaConfig {
            eta: self.eta,
            phi: self.phi,
            variance_mode: mode,
            batch_size: self.batch_size,
            max_step: self.max_step,
        }
    }

    pub fn method(&self, tag: MethodTag) -> Result<Method> {
        let batch_size = self.batch_size;
        Ok(match tag {
            MethodTag::Sgd => Method::Sgd {
                eta: self.eta,
                batch_size,
            },
            MethodTag::SgdEquivalent => Method::Sgd {
                eta: self
                    .varioeta(VarianceMode::Asymptotic)
                    .equivalent_sgd_eta()?,
                batch_size,
            },
            MethodTag::VarioEtaRecursive => {
                Method::VarioEta(self.varioeta(VarianceMode::Recursive))
            }
            MethodTag::VarioEtaAsymptotic => {
                Method::VarioEta(self.varioeta(VarianceMode::Asymptotic))
            }
        })
    }
}

/// Batch-size checks against the dataset: a hard error when `N > M`, a
/// warning when `N > M / 10` since stochastic convergence wants `M >> N`.
pub fn robbins_monro_check(batch: usize, dataset: usize) -> Result<Option<String>> {
    if batch > dataset {
        return Err(Error::BatchExceedsDataset { batch, dataset });
    }
    Ok((batch * 10 > dataset).then(|| {
        format!(
            "batch size N = {batch} exceeds M/10 for a dataset of M = {dataset} patterns; \
             the Robbins-Monro condition M >> N is not met"
        )
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub method: MethodTag,
    pub step: u64,
    pub error: f64,
    /// Seconds since the method's run started, measured at the record.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOutcome {
    pub records: Vec<BenchRecord>,
    pub warnings: Vec<String>,
    /// Methods whose run stopped early, with the reason.
    pub divergences: Vec<(MethodTag, u64, String)>,
}

/// Runs every method from the same start on the same seeded batch sequence.
pub fn bench_run(
    problem: &ProblemConfig,
    methods: &[MethodTag],
    settings: &BenchSettings,
) -> Result<BenchOutcome> {
    if methods.is_empty() {
        return Err(invalid("method", "at least one method is required"));
    }
    let (objective, start) = problem.build(settings.seed)?;
    let mut outcome = BenchOutcome::default();
    if let Some(w) = robbins_monro_check(settings.batch_size, objective.dataset_size())? {
        outcome.warnings.push(w);
    }
    let resolved: Vec<(MethodTag, Method)> = methods
        .iter()
        .map(|&tag| {
            let m = settings.method(tag)?;
            m.validate()?;
            Ok((tag, m))
        })
        .collect::<Result<_>>()?;
    if settings.steps == 0 {
        return Ok(outcome);
    }

    for (tag, method) in resolved {
        let config = RunConfig {
            method,
            steps: settings.steps,
            seed: settings.seed,
            record_every: settings.record_every,
        };
        let trajectory = run(objective.as_ref(), &config, &start)?;
        outcome.records.extend(
            trajectory
                .records
                .iter()
                .zip(&trajectory.record_seconds)
                .map(|(r, &wall_time)| BenchRecord {
                    method: tag,
                    step: r.step,
                    error: r.error,
                    wall_time,
                }),
        );
        if let RunStatus::Diverged { step, reason } = trajectory.status {
            outcome.divergences.push((tag, step, reason));
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: VarianceMode,
    pub final_error: f64,
    pub steps_completed: u64,
    pub update_seconds_per_step: f64,
    pub total_seconds_per_step: f64,
    pub batch_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummary {
    pub recursive: ModeSummary,
    pub asymptotic: ModeSummary,
    pub warnings: Vec<String>,
}

impl CompareSummary {
    /// Asymptotic updates are no slower than recursive ones.
    pub fn asymptotic_not_slower(&self) -> bool {
        self.asymptotic.update_seconds_per_step <= self.recursive.update_seconds_per_step
    }
}

/// Recursive against asymptotic variance on the same problem and batches.
pub fn mode_compare(problem: &ProblemConfig, settings: &BenchSettings) -> Result<CompareSummary> {
    if settings.steps == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    let (objective, start) = problem.build(settings.seed)?;
    let mut warnings = Vec::new();
    if let Some(w) = robbins_monro_check(settings.batch_size, objective.dataset_size())? {
        warnings.push(w);
    }
    let summarize = |mode: VarianceMode| -> Result<ModeSummary> {
        let config = RunConfig {
            method: Method::VarioEta(settings.varioeta(mode)),
            steps: settings.steps,
            seed: settings.seed,
            record_every: settings.steps,
        };
        let started = Instant::now();
        let t = run(objective.as_ref(), &config, &start)?;
        let total = started.elapsed().as_secs_f64();
        if let RunStatus::Diverged { step, reason } = &t.status {
            return Err(Error::NonFiniteEvaluation {
                context: format!("{mode:?} run diverged at step {step}: {reason}"),
            });
        }
        let steps = settings.steps as f64;
        Ok(ModeSummary {
            mode,
            final_error: t.records.last().map_or(f64::NAN, |r| r.error),
            steps_completed: settings.steps,
            update_seconds_per_step: t.update_seconds / steps,
            total_seconds_per_step: total / steps,
            batch_fingerprint: t.batch_fingerprint,
        })
    };
    // asymptotic first so any warm-up cost lands on it, not on the baseline
    let asymptotic = summarize(VarianceMode::Asymptotic)?;
    let recursive = summarize(VarianceMode::Recursive)?;
    Ok(CompareSummary {
        recursive,
        asymptotic,
        warnings,
    })
}
