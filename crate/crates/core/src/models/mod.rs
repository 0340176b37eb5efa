//! Simulators decomposed into an initial stage and continuation stages.
//!
//! A model with `k` stages exposes `k - 1` checkpoints; checkpoint `c` sits
//! after stage `c` and offers decision statistics computed from the partial
//! state. Running every stage without stopping must reproduce the
//! unsegmented simulation: staging only brackets the work.

use rand::Rng;
use thiserror::Error;

pub mod extremal;
pub mod extremes;
pub mod finite;
pub mod matern;
pub mod schlather;
pub mod sir;

pub use extremes::{ExtremesConfig, ExtremesCostModel, ExtremesModel};
pub use finite::FiniteModel;
pub use sir::{SirConfig, SirModel, SirState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid parameter {theta:?}: {reason}")]
    Parameter { theta: Vec<f64>, reason: String },
    #[error("simulation failed at stage {stage}: {reason}")]
    Simulation { stage: usize, reason: String },
    #[error("invalid input: {0}")]
    Input(String),
}

/// Contract for staged simulators used by ABC importance sampling.
pub trait StagedModel: Sync {
    type State: Send;

    /// Identity used to refuse combining runs of different models or data.
    fn id(&self) -> String;

    /// Number of stages; checkpoints are `0..stage_count() - 1`.
    fn stage_count(&self) -> usize;

    /// Fresh state for parameters `theta`.
    fn start(&self, theta: &[f64]) -> Result<Self::State, ModelError>;

    /// Runs one stage in place and returns its declared cost units.
    fn run_stage<R: Rng + ?Sized>(
        &self,
        stage: usize,
        theta: &[f64],
        state: &mut Self::State,
        rng: &mut R,
    ) -> Result<f64, ModelError>;

    /// Decision statistics available at `checkpoint`.
    fn decision_statistics(
        &self,
        checkpoint: usize,
        theta: &[f64],
        state: &Self::State,
    ) -> Vec<f64>;

    fn decision_names(&self, checkpoint: usize) -> Vec<String>;

    /// Summary of a completed simulation.
    fn summary(&self, state: &Self::State) -> Vec<f64>;

    /// Distance between a simulated summary and the observed one.
    fn distance(&self, summary: &[f64]) -> f64;

    /// Extra per-iteration values recorded during pilot runs.
    fn pilot_aux(&self, _state: &Self::State) -> Vec<f64> {
        Vec::new()
    }

    fn aux_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn checkpoint_count(&self) -> usize {
        self.stage_count().saturating_sub(1)
    }
}
