//! Discrete-time Markov SIR epidemic with a subsampled final count.
//!
//! Each transition is an infection with probability proportional to
//! `(R0 / M) S I` or a recovery with probability proportional to `I`. The
//! chain stops when nobody is infectious; a simple random sample of the
//! population is then taken and the number recovered in it is the data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, StagedModel};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SirConfig {
    pub population: u64,
    pub initial_infectious: u64,
    pub initial_recovered: u64,
    /// Transition count at which the stopping decision is taken.
    pub checkpoint: u64,
    pub subsample: u64,
    /// Observed recovered count in the subsample.
    pub observed: Option<u64>,
}

impl Default for SirConfig {
    fn default() -> Self {
        Self {
            population: 100_000,
            initial_infectious: 1_000,
            initial_recovered: 0,
            checkpoint: 1_000,
            subsample: 100,
            observed: None,
        }
    }
}

impl SirConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let used = self.initial_infectious + self.initial_recovered;
        if used > self.population {
            return Err(ModelError::Config(format!(
                "I(0) + R(0) = {used} exceeds population {}",
                self.population
            )));
        }
        if self.subsample > self.population {
            return Err(ModelError::Config(format!(
                "subsample {} exceeds population {}",
                self.subsample, self.population
            )));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> SirState {
        SirState {
            s: self.population - self.initial_infectious - self.initial_recovered,
            i: self.initial_infectious,
            r: self.initial_recovered,
            transitions: 0,
            sampled_recovered: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SirState {
    pub s: u64,
    pub i: u64,
    pub r: u64,
    pub transitions: u64,
    pub sampled_recovered: Option<u64>,
}

/// Which transition occurred.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SirEvent {
    Infection,
    Recovery,
}

/// Probability that the next transition is an infection.
pub fn infection_probability(s: u64, r0: f64, population: u64) -> f64 {
    let rate = r0 * s as f64;
    rate / (rate + population as f64)
}

/// One transition of the chain. Returns `None` once `I = 0`.
pub fn sir_transition<R: Rng + ?Sized>(
    state: &mut SirState,
    r0: f64,
    population: u64,
    rng: &mut R,
) -> Option<SirEvent> {
    if state.i == 0 {
        return None;
    }
    let p = infection_probability(state.s, r0, population);
    state.transitions += 1;
    if rng.random::<f64>() < p {
        state.s -= 1;
        state.i += 1;
        Some(SirEvent::Infection)
    } else {
        state.i -= 1;
        state.r += 1;
        Some(SirEvent::Recovery)
    }
}

/// Runs the chain until `I = 0` or `limit` total transitions. Returns the
/// number of transitions performed.
pub fn run_chain<R: Rng + ?Sized>(
    state: &mut SirState,
    r0: f64,
    population: u64,
    limit: Option<u64>,
    rng: &mut R,
) -> u64 {
    let start = state.transitions;
    let m = population as f64;
    let mut p = infection_probability(state.s, r0, population);
    while state.i > 0 && limit.is_none_or(|l| state.transitions < l) {
        state.transitions += 1;
        if rng.random::<f64>() < p {
            state.s -= 1;
            state.i += 1;
            let rate = r0 * state.s as f64;
            p = rate / (rate + m);
        } else {
            state.i -= 1;
            state.r += 1;
        }
    }
    state.transitions - start
}

/// Recovered count in a simple random sample of `size` drawn without
/// replacement from a population containing `recovered` recovered people.
pub fn subsample_recovered<R: Rng + ?Sized>(
    population: u64,
    recovered: u64,
    size: u64,
    rng: &mut R,
) -> u64 {
    let mut hits = 0u64;
    for j in 0..size {
        let remaining = (population - j) as f64;
        let left = (recovered - hits) as f64;
        if rng.random::<f64>() * remaining < left {
            hits += 1;
        }
    }
    hits
}

/// The SIR model staged at a fixed transition count.
#[derive(Clone, Debug)]
pub struct SirModel {
    pub config: SirConfig,
    observed: f64,
}

impl SirModel {
    pub fn new(config: SirConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let observed = config
            .observed
            .ok_or_else(|| ModelError::Config("observed subsample count missing".into()))?;
        if observed > config.subsample {
            return Err(ModelError::Config(format!(
                "observed count {observed} exceeds subsample size {}",
                config.subsample
            )));
        }
        Ok(Self {
            observed: observed as f64,
            config,
        })
    }

    /// Simulates a full dataset in one pass, with the transitions before the
    /// checkpoint drawn from `initial_rng` and everything after from
    /// `continuation_rng`.
    pub fn simulate_unstaged<R: Rng + ?Sized, Q: Rng + ?Sized>(
        &self,
        r0: f64,
        initial_rng: &mut R,
        continuation_rng: &mut Q,
    ) -> SirState {
        let c = &self.config;
        let mut st = c.initial_state();
        let m = c.population as f64;
        let mut p = infection_probability(st.s, r0, c.population);
        while st.i > 0 {
            st.transitions += 1;
            let v: f64 = if st.transitions <= c.checkpoint {
                initial_rng.random()
            } else {
                continuation_rng.random()
            };
            if v < p {
                st.s -= 1;
                st.i += 1;
                p = r0 * st.s as f64 / (r0 * st.s as f64 + m);
            } else {
                st.i -= 1;
                st.r += 1;
            }
        }
        st.sampled_recovered = Some(subsample_recovered(
            c.population,
            st.r,
            c.subsample,
            continuation_rng,
        ));
        st
    }
}

impl StagedModel for SirModel {
    type State = SirState;

    fn id(&self) -> String {
        let c = &self.config;
        format!(
            "sir:M={}:I0={}:R0init={}:t={}:n={}:yobs={}",
            c.population,
            c.initial_infectious,
            c.initial_recovered,
            c.checkpoint,
            c.subsample,
            self.observed
        )
    }

    fn stage_count(&self) -> usize {
        2
    }

    fn start(&self, theta: &[f64]) -> Result<SirState, ModelError> {
        let r0 = theta[0];
        if !(r0 >= 0.0) || !r0.is_finite() {
            return Err(ModelError::Parameter {
                theta: theta.to_vec(),
                reason: "R0 must be finite and non-negative".into(),
            });
        }
        Ok(self.config.initial_state())
    }

    fn run_stage<R: Rng + ?Sized>(
        &self,
        stage: usize,
        theta: &[f64],
        state: &mut SirState,
        rng: &mut R,
    ) -> Result<f64, ModelError> {
        let c = &self.config;
        match stage {
            0 => Ok(run_chain(state, theta[0], c.population, Some(c.checkpoint), rng) as f64),
            1 => {
                let steps = run_chain(state, theta[0], c.population, None, rng);
                state.sampled_recovered =
                    Some(subsample_recovered(c.population, state.r, c.subsample, rng));
                Ok((steps + c.subsample) as f64)
            }
            _ => Err(ModelError::Simulation {
                stage,
                reason: "SIR model has two stages".into(),
            }),
        }
    }

    fn decision_statistics(
        &self,
        _checkpoint: usize,
        _theta: &[f64],
        state: &SirState,
    ) -> Vec<f64> {
        vec![state.i as f64]
    }

    fn decision_names(&self, _checkpoint: usize) -> Vec<String> {
        vec!["infectious".into()]
    }

    fn summary(&self, state: &SirState) -> Vec<f64> {
        vec![state.sampled_recovered.expect("completed simulation") as f64]
    }

    fn distance(&self, summary: &[f64]) -> f64 {
        (summary[0] - self.observed).abs()
    }

    fn pilot_aux(&self, state: &SirState) -> Vec<f64> {
        vec![state.sampled_recovered.unwrap_or(0) as f64, state.r as f64]
    }

    fn aux_names(&self) -> Vec<String> {
        vec!["subsample_recovered".into(), "final_recovered".into()]
    }
}
