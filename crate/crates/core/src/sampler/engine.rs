use rand::Rng;
use rayon::prelude::*;

use super::{Algorithm, CostClock, CostMode, SampleSet, SamplerError, WeightedSample};
use crate::density::DensityPair;
use crate::models::{ModelError, StagedModel};
use crate::rng::{StreamId, StreamRng, Streams};

/// Continuation probability at a checkpoint. Implementations must return a
/// value in `(0, 1]`; anything else aborts the run.
pub trait ContinuationPolicy: Sync {
    fn alpha(&self, checkpoint: usize, theta: &[f64], u: f64, phi: &[f64]) -> f64;
}

/// Same probability everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPolicy(pub f64);

impl ContinuationPolicy for ConstantPolicy {
    fn alpha(&self, _: usize, _: &[f64], _: f64, _: &[f64]) -> f64 {
        self.0
    }
}

/// Policy from a closure `(checkpoint, theta, u, phi) -> alpha`.
pub struct FnPolicy<F>(pub F);

impl<F> ContinuationPolicy for FnPolicy<F>
where
    F: Fn(usize, &[f64], f64, &[f64]) -> f64 + Sync,
{
    fn alpha(&self, checkpoint: usize, theta: &[f64], u: f64, phi: &[f64]) -> f64 {
        (self.0)(checkpoint, theta, u, phi)
    }
}

/// Non-negative unbiased estimator of the likelihood, drawn with its own
/// random stream.
pub trait LikelihoodEstimator: Sync {
    fn estimate(&self, theta: &[f64], rng: &mut StreamRng) -> f64;
}

pub struct FnEstimator<F>(pub F);

impl<F> LikelihoodEstimator for FnEstimator<F>
where
    F: Fn(&[f64], &mut StreamRng) -> f64 + Sync,
{
    fn estimate(&self, theta: &[f64], rng: &mut StreamRng) -> f64 {
        (self.0)(theta, rng)
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub cost_mode: CostMode,
    /// Number of failed iterations tolerated before the run aborts.
    pub failure_budget: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: None,
            cost_mode: CostMode::Sim,
            failure_budget: 0,
        }
    }
}

/// Result of one lazy likelihood estimate for fixed `theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct LazyOutcome {
    /// `1[d <= eps] / prod(a)`, zero when stopped.
    pub estimate: f64,
    pub early_stopped: bool,
    pub stage_costs: Vec<f64>,
    pub distance: Option<f64>,
    /// Product of the continuation probabilities applied.
    pub continuation_prob: f64,
    /// Decision statistics per checkpoint reached (filled when capturing).
    pub phis: Vec<Vec<f64>>,
    pub aux: Vec<f64>,
}

#[derive(Debug)]
pub enum IterationError {
    Model(ModelError),
    InvalidAlpha { checkpoint: usize, value: f64 },
}

impl From<ModelError> for IterationError {
    fn from(e: ModelError) -> Self {
        IterationError::Model(e)
    }
}

/// Runs the staged simulator for one `theta`. Stage `k` draws only from
/// `stage_rngs[k]`; stop decisions draw only from `coin`. With no policy
/// every stage runs and the result is the plain ABC estimate.
#[allow(clippy::too_many_arguments)]
pub fn lazy_likelihood<M: StagedModel, S: Rng, C: Rng>(
    model: &M,
    theta: &[f64],
    u: f64,
    epsilon: f64,
    policy: Option<&dyn ContinuationPolicy>,
    stage_rngs: &mut [S],
    coin: &mut C,
    cost_mode: CostMode,
    capture: bool,
) -> Result<LazyOutcome, (IterationError, Vec<f64>)> {
    let k = model.stage_count();
    let mut costs = vec![0.0; k];
    let mut state = model.start(theta).map_err(|e| (e.into(), costs.clone()))?;
    let mut prod = 1.0;
    let mut phis = Vec::new();
    for stage in 0..k {
        let clock = CostClock::start(cost_mode);
        let declared = model
            .run_stage(stage, theta, &mut state, &mut stage_rngs[stage])
            .map_err(|e| (e.into(), costs.clone()))?;
        costs[stage] = clock.stop(declared);
        if stage + 1 == k {
            break;
        }
        if policy.is_none() && !capture {
            continue;
        }
        let phi = model.decision_statistics(stage, theta, &state);
        if let Some(p) = policy {
            let a = p.alpha(stage, theta, u, &phi);
            if !(a > 0.0 && a <= 1.0) {
                return Err((
                    IterationError::InvalidAlpha {
                        checkpoint: stage,
                        value: a,
                    },
                    costs,
                ));
            }
            let v: f64 = coin.random();
            if capture {
                phis.push(phi);
            }
            if v >= a {
                return Ok(LazyOutcome {
                    estimate: 0.0,
                    early_stopped: true,
                    stage_costs: costs,
                    distance: None,
                    continuation_prob: prod * a,
                    phis,
                    aux: Vec::new(),
                });
            }
            prod *= a;
        } else {
            phis.push(phi);
        }
    }
    let d = model.distance(&model.summary(&state));
    let aux = if capture {
        model.pilot_aux(&state)
    } else {
        Vec::new()
    };
    Ok(LazyOutcome {
        estimate: if d <= epsilon { 1.0 / prod } else { 0.0 },
        early_stopped: false,
        stage_costs: costs,
        distance: Some(d),
        continuation_prob: prod,
        phis,
        aux,
    })
}

/// Per-iteration record kept by capturing runs.
#[derive(Clone, Debug, PartialEq)]
pub struct CapturedIteration {
    pub theta: Vec<f64>,
    pub u: f64,
    /// Decision statistics at every checkpoint (empty if the iteration failed).
    pub phis: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub distance: Option<f64>,
    pub aux: Vec<f64>,
    pub failed: bool,
}

type IterResult = Result<(WeightedSample, Option<CapturedIteration>, Option<String>), SamplerError>;

fn in_pool<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, SamplerError> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| SamplerError::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn collect_results(
    results: Vec<IterResult>,
    budget: usize,
) -> Result<(Vec<WeightedSample>, Vec<CapturedIteration>), SamplerError> {
    let mut samples = Vec::with_capacity(results.len());
    let mut captured = Vec::new();
    let mut failures = 0;
    let mut first = None;
    for r in results {
        let (s, c, fail) = r?;
        if let Some(msg) = fail {
            failures += 1;
            first.get_or_insert(msg);
        }
        samples.push(s);
        captured.extend(c);
    }
    if failures > budget {
        return Err(SamplerError::FailureBudget {
            failures,
            budget,
            first: first.unwrap_or_default(),
        });
    }
    Ok((samples, captured))
}

fn check_common(n: usize, epsilon: f64) -> Result<(), SamplerError> {
    if n == 0 {
        return Err(SamplerError::InvalidArgument(
            "iteration count must be at least 1".into(),
        ));
    }
    if !(epsilon >= 0.0) {
        return Err(SamplerError::InvalidArgument(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_staged<M: StagedModel>(
    densities: &DensityPair,
    n: usize,
    model: &M,
    epsilon: f64,
    policy: Option<&dyn ContinuationPolicy>,
    base_seed: u64,
    opts: &RunOptions,
    capture: bool,
) -> Result<(SampleSet, Vec<CapturedIteration>), SamplerError> {
    check_common(n, epsilon)?;
    if policy.is_some() && model.checkpoint_count() == 0 {
        return Err(SamplerError::InvalidArgument(
            "lazy ABC needs a model with a checkpoint".into(),
        ));
    }
    let streams = Streams::new(base_seed);
    let k = model.stage_count();
    let mode = opts.cost_mode;
    let work = |i: usize| -> IterResult {
        let it = i as u64;
        let mut theta_rng = streams.rng(it, StreamId::Theta);
        let theta = densities.sample(&mut theta_rng);
        let u = densities
            .ratio(&theta)
            .map_err(|source| SamplerError::Ratio {
                iteration: it,
                source,
            })?;
        let mut stage_rngs: Vec<StreamRng> = (0..k)
            .map(|s| streams.rng(it, StreamId::Stage(s)))
            .collect();
        let mut coin = streams.rng(it, StreamId::Coin);
        match lazy_likelihood(
            model,
            &theta,
            u,
            epsilon,
            policy,
            &mut stage_rngs,
            &mut coin,
            mode,
            capture,
        ) {
            Ok(out) => {
                let weight = if out.estimate > 0.0 {
                    u / out.continuation_prob
                } else {
                    0.0
                };
                let cap = capture.then(|| CapturedIteration {
                    theta: theta.clone(),
                    u,
                    phis: out.phis,
                    stage_costs: out.stage_costs.clone(),
                    distance: out.distance,
                    aux: out.aux,
                    failed: false,
                });
                Ok((
                    WeightedSample {
                        theta,
                        weight,
                        early_stopped: out.early_stopped,
                        stage_costs: out.stage_costs,
                        distance: out.distance,
                        continuation_prob: out.continuation_prob,
                    },
                    cap,
                    None,
                ))
            }
            Err((IterationError::InvalidAlpha { checkpoint, value }, _)) => {
                Err(SamplerError::InvalidAlpha {
                    iteration: it,
                    checkpoint,
                    value,
                })
            }
            Err((IterationError::Model(e), costs)) => {
                let msg = SamplerError::Model {
                    iteration: it,
                    source: e,
                }
                .to_string();
                log::warn!("{msg}");
                let cap = capture.then(|| CapturedIteration {
                    theta: theta.clone(),
                    u,
                    phis: Vec::new(),
                    stage_costs: costs.clone(),
                    distance: None,
                    aux: Vec::new(),
                    failed: true,
                });
                Ok((
                    WeightedSample {
                        theta,
                        weight: 0.0,
                        early_stopped: false,
                        stage_costs: costs,
                        distance: None,
                        continuation_prob: 1.0,
                    },
                    cap,
                    Some(msg),
                ))
            }
        }
    };
    let results = in_pool(opts.workers, || {
        (0..n).into_par_iter().map(work).collect::<Vec<_>>()
    })?;
    let (samples, captured) = collect_results(results, opts.failure_budget)?;
    let algorithm = if policy.is_some() {
        Algorithm::LazyAbc
    } else {
        Algorithm::AbcIs
    };
    Ok((
        SampleSet::new(samples, epsilon, base_seed, algorithm, model.id(), mode),
        captured,
    ))
}

/// ABC importance sampling: every simulation runs to completion and the
/// likelihood estimate is `1[d <= eps]`.
pub fn run_abc_is<M: StagedModel>(
    densities: &DensityPair,
    n: usize,
    model: &M,
    epsilon: f64,
    base_seed: u64,
    opts: &RunOptions,
) -> Result<SampleSet, SamplerError> {
    run_staged(densities, n, model, epsilon, None, base_seed, opts, false).map(|r| r.0)
}

/// ABC importance sampling that also records decision statistics at every
/// checkpoint, stage costs and model auxiliary values.
pub fn run_abc_is_capture<M: StagedModel>(
    densities: &DensityPair,
    n: usize,
    model: &M,
    epsilon: f64,
    base_seed: u64,
    opts: &RunOptions,
) -> Result<(SampleSet, Vec<CapturedIteration>), SamplerError> {
    run_staged(densities, n, model, epsilon, None, base_seed, opts, true)
}

/// Lazy ABC: after each checkpoint the simulation continues with
/// probability `alpha(phi)` and accepted weights are divided by the product
/// of the probabilities applied.
pub fn run_lazy_abc<M: StagedModel>(
    densities: &DensityPair,
    n: usize,
    model: &M,
    epsilon: f64,
    policy: &dyn ContinuationPolicy,
    base_seed: u64,
    opts: &RunOptions,
) -> Result<SampleSet, SamplerError> {
    run_staged(
        densities,
        n,
        model,
        epsilon,
        Some(policy),
        base_seed,
        opts,
        false,
    )
    .map(|r| r.0)
}

/// Random-weight importance sampling with a user likelihood estimator.
pub fn run_rw_is(
    densities: &DensityPair,
    n: usize,
    estimator: &dyn LikelihoodEstimator,
    base_seed: u64,
    opts: &RunOptions,
) -> Result<SampleSet, SamplerError> {
    check_common(n, 0.0)?;
    let streams = Streams::new(base_seed);
    let work = |i: usize| -> IterResult {
        let it = i as u64;
        let mut theta_rng = streams.rng(it, StreamId::Theta);
        let theta = densities.sample(&mut theta_rng);
        let u = densities
            .ratio(&theta)
            .map_err(|source| SamplerError::Ratio {
                iteration: it,
                source,
            })?;
        let mut rng = streams.rng(it, StreamId::Estimator);
        let clock = CostClock::start(opts.cost_mode);
        let ell = estimator.estimate(&theta, &mut rng);
        let cost = clock.stop(1.0);
        if !(ell >= 0.0 && ell.is_finite()) {
            return Err(SamplerError::InvalidEstimate {
                iteration: it,
                value: ell,
            });
        }
        Ok((
            WeightedSample {
                theta,
                weight: ell * u,
                early_stopped: false,
                stage_costs: vec![cost],
                distance: None,
                continuation_prob: 1.0,
            },
            None,
            None,
        ))
    };
    let results = in_pool(opts.workers, || {
        (0..n).into_par_iter().map(work).collect::<Vec<_>>()
    })?;
    let (samples, _) = collect_results(results, 0)?;
    Ok(SampleSet::new(
        samples,
        f64::INFINITY,
        base_seed,
        Algorithm::RwIs,
        "rw-is".into(),
        opts.cost_mode,
    ))
}
