//! Importance-sampling engines and weighted-sample bookkeeping.

mod clock;
mod engine;
mod estimators;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::DensityError;
use crate::models::ModelError;

pub use clock::{CostClock, CostMode};
pub use engine::{
    lazy_likelihood, run_abc_is, run_abc_is_capture, run_lazy_abc, run_rw_is, CapturedIteration,
    ConstantPolicy, ContinuationPolicy, FnEstimator, FnPolicy, IterationError, LazyOutcome,
    LikelihoodEstimator, RunOptions,
};
pub use estimators::{
    accepted_indices, combine, ess, ess_of_weights, evidence_estimate, posterior_estimate,
    posterior_mean_sd, posthoc_accept_count, posthoc_epsilon,
};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("iteration {iteration}: {source}")]
    Model {
        iteration: u64,
        #[source]
        source: ModelError,
    },
    #[error("{failures} failed iterations exceed the failure budget of {budget}; first failure: {first}")]
    FailureBudget {
        failures: usize,
        budget: usize,
        first: String,
    },
    #[error(
        "iteration {iteration}: continuation probability {value} at checkpoint {checkpoint} is outside (0, 1]"
    )]
    InvalidAlpha {
        iteration: u64,
        checkpoint: usize,
        value: f64,
    },
    #[error("iteration {iteration}: likelihood estimate {value} is negative or non-finite")]
    InvalidEstimate { iteration: u64, value: f64 },
    #[error("iteration {iteration}: importance ratio error: {source}")]
    Ratio {
        iteration: u64,
        #[source]
        source: DensityError,
    },
    #[error("degenerate sample: all weights are zero")]
    Degenerate,
    #[error(
        "cannot raise epsilon from {from} to {to}: large increases may introduce large weights and destabilise the importance sampling approximation"
    )]
    EpsilonIncrease { from: f64, to: f64 },
    #[error("incompatible sample sets: {0}")]
    Incompatible(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "rw-is")]
    RwIs,
    #[serde(rename = "abc-is")]
    AbcIs,
    #[serde(rename = "lazy-abc")]
    LazyAbc,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::RwIs => "rw-is",
            Algorithm::AbcIs => "abc-is",
            Algorithm::LazyAbc => "lazy-abc",
        }
    }
}

/// One importance-sampling draw.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample {
    pub theta: Vec<f64>,
    pub weight: f64,
    pub early_stopped: bool,
    /// Cost per stage; stages that never ran cost zero.
    pub stage_costs: Vec<f64>,
    /// Present iff the simulation completed.
    pub distance: Option<f64>,
    /// Product of continuation probabilities applied (1 for non-lazy runs).
    pub continuation_prob: f64,
}

impl WeightedSample {
    pub fn total_cost(&self) -> f64 {
        self.stage_costs.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<WeightedSample>,
    pub epsilon: f64,
    pub n_iterations: usize,
    pub base_seed: u64,
    pub algorithm: Algorithm,
    pub total_cost: f64,
    /// Identity of model and observed data.
    pub model_id: String,
    pub cost_mode: CostMode,
}

impl SampleSet {
    pub fn new(
        samples: Vec<WeightedSample>,
        epsilon: f64,
        base_seed: u64,
        algorithm: Algorithm,
        model_id: String,
        cost_mode: CostMode,
    ) -> Self {
        let total_cost = samples.iter().map(WeightedSample::total_cost).sum();
        Self {
            n_iterations: samples.len(),
            samples,
            epsilon,
            base_seed,
            algorithm,
            total_cost,
            model_id,
            cost_mode,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.weight).collect()
    }

    pub fn accepted_count(&self) -> usize {
        self.samples.iter().filter(|s| s.weight > 0.0).count()
    }

    pub fn stage_count(&self) -> usize {
        self.samples.first().map_or(0, |s| s.stage_costs.len())
    }

    pub fn theta_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.theta.len())
    }

    /// Mean cost of each stage over all iterations.
    pub fn mean_stage_costs(&self) -> Vec<f64> {
        let k = self.stage_count();
        let mut m = vec![0.0; k];
        for s in &self.samples {
            for (acc, c) in m.iter_mut().zip(&s.stage_costs) {
                *acc += c;
            }
        }
        let n = self.samples.len().max(1) as f64;
        m.iter().map(|v| v / n).collect()
    }
}
