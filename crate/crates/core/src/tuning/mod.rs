//! Pilot runs and the choice of continuation probabilities.
//!
//! A pilot run of ABC-IS records, per iteration, the importance ratio `u`,
//! decision statistics at every checkpoint, stage costs and the realised
//! distance. From it the acceptance probability `gamma(phi)` and expected
//! continuation cost `T2(phi)` are estimated, and
//! `alpha(phi) = clamp(lambda u sqrt(gamma / T2), floor, 1)` is tuned by
//! maximising the estimated efficiency `1 / (W2 T)` over `lambda`.

mod efficiency;
mod estimate;
mod multistop;
mod optimal_g;
mod policy;
mod record;
mod select;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::IoError;
use crate::sampler::SamplerError;
use crate::smoothers::SmootherError;

pub use efficiency::{efficiency_estimate, optimize_lambda, Efficiency, LambdaFit, StopProblem};
pub use estimate::{
    binomial_acceptance_prob, cell_acceptance_rates, conservative_epsilon, estimate_t2,
    gamma_binomial, gamma_boxcox, gamma_conservative, gamma_logistic, gamma_standard, t2_smoother,
    ConservativeGamma, GammaMethod, StandardPath, T2Mode,
};
pub use multistop::{
    discretize, optimize_discrete, tune_discrete_multistop, tune_one_continuous_multistop,
    DiscreteFit, DiscreteLevels, MultiStopFit, MultiStopProblem, DEFAULT_LEVEL_CAP,
};
pub use optimal_g::{asymptotic_efficiency, optimal_g};
pub use policy::{AlphaPolicy, AlphaRule, Provenance, DEFAULT_ALPHA_FLOOR};
pub use record::{run_pilot, PilotOptions, PilotRecord};
pub use select::{
    backwards_select_subset, select_configuration, tune_single_stop, Candidate, CandidateScore,
    Curves, SelectionStep, TuningReport,
};

#[derive(Debug, Error)]
pub enum TuningError {
    #[error(transparent)]
    Smoother(#[from] SmootherError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("pilot run too small: {0}")]
    InsufficientPilot(String),
    #[error("efficiency score is {value} at lambda = {lambda}; check gamma and T2 estimates")]
    NonFiniteScore { lambda: f64, value: f64 },
    #[error("continuation probability {value} at pilot row {row} is below the floor {floor}")]
    BelowFloor { row: usize, value: f64, floor: f64 },
    #[error(
        "decision statistic at checkpoint {checkpoint} takes {levels} values (cap {cap}); discretise it or tune it as the continuous statistic"
    )]
    TooManyLevels {
        checkpoint: usize,
        levels: usize,
        cap: usize,
    },
    #[error(
        "the importance ratio u is not a function of the decision statistics; use g = prior or include log u in the gamma fit"
    )]
    ConditionC3,
    #[error("invalid tuning input: {0}")]
    Invalid(String),
}

/// One component of the decision statistics at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiKey {
    pub checkpoint: usize,
    #[serde(default)]
    pub component: usize,
}

impl PhiKey {
    pub fn new(checkpoint: usize, component: usize) -> Self {
        Self {
            checkpoint,
            component,
        }
    }
}
