//! Two-stage model with finitely many outcomes.
//!
//! `X | theta` and `Y | theta, x` are categorical; the summary is the value
//! attached to `y` and the distance is absolute difference to the observed
//! value. Small enough to enumerate every outcome exactly.

use rand::Rng;

use super::{ModelError, StagedModel};

#[derive(Clone, Debug)]
pub struct FiniteModel {
    /// Parameter values (scalars).
    pub thetas: Vec<f64>,
    /// `x_probs[t][x]`.
    pub x_probs: Vec<Vec<f64>>,
    /// `y_probs[t][x][y]`.
    pub y_probs: Vec<Vec<Vec<f64>>>,
    /// Summary value of each `y` outcome.
    pub y_values: Vec<f64>,
    pub observed: f64,
    /// Declared cost of the initial and continuation stages.
    pub stage_costs: [f64; 2],
}

#[derive(Clone, Debug, Default)]
pub struct FiniteState {
    pub theta_index: usize,
    pub x: Option<usize>,
    pub y: Option<usize>,
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let v: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if v < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl FiniteModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let nt = self.thetas.len();
        let ok_dist =
            |p: &[f64]| p.iter().all(|v| *v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-12;
        if nt == 0 || self.x_probs.len() != nt || self.y_probs.len() != nt {
            return Err(ModelError::Config(
                "table sizes disagree with parameter count".into(),
            ));
        }
        for t in 0..nt {
            if !ok_dist(&self.x_probs[t]) || self.y_probs[t].len() != self.x_probs[t].len() {
                return Err(ModelError::Config(format!(
                    "bad X table for theta index {t}"
                )));
            }
            for row in &self.y_probs[t] {
                if !ok_dist(row) || row.len() != self.y_values.len() {
                    return Err(ModelError::Config(format!(
                        "bad Y table for theta index {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn theta_index(&self, theta: &[f64]) -> Result<usize, ModelError> {
        self.thetas
            .iter()
            .position(|t| *t == theta[0])
            .ok_or_else(|| ModelError::Parameter {
                theta: theta.to_vec(),
                reason: "not in the finite parameter set".into(),
            })
    }
}

impl StagedModel for FiniteModel {
    type State = FiniteState;

    fn id(&self) -> String {
        format!(
            "finite:{:?}:{:?}:{}",
            self.thetas, self.y_values, self.observed
        )
    }

    fn stage_count(&self) -> usize {
        2
    }

    fn start(&self, theta: &[f64]) -> Result<FiniteState, ModelError> {
        Ok(FiniteState {
            theta_index: self.theta_index(theta)?,
            x: None,
            y: None,
        })
    }

    fn run_stage<R: Rng + ?Sized>(
        &self,
        stage: usize,
        _theta: &[f64],
        state: &mut FiniteState,
        rng: &mut R,
    ) -> Result<f64, ModelError> {
        let t = state.theta_index;
        match stage {
            0 => state.x = Some(categorical(&self.x_probs[t], rng)),
            1 => {
                let x = state.x.ok_or(ModelError::Simulation {
                    stage,
                    reason: "continuation before initial stage".into(),
                })?;
                state.y = Some(categorical(&self.y_probs[t][x], rng));
            }
            _ => {
                return Err(ModelError::Simulation {
                    stage,
                    reason: "no such stage".into(),
                })
            }
        }
        Ok(self.stage_costs[stage])
    }

    fn decision_statistics(
        &self,
        _checkpoint: usize,
        _theta: &[f64],
        state: &FiniteState,
    ) -> Vec<f64> {
        vec![state.x.map_or(f64::NAN, |x| x as f64)]
    }

    fn decision_names(&self, _checkpoint: usize) -> Vec<String> {
        vec!["x".into()]
    }

    fn summary(&self, state: &FiniteState) -> Vec<f64> {
        vec![self.y_values[state.y.expect("completed simulation")]]
    }

    fn distance(&self, summary: &[f64]) -> f64 {
        (summary[0] - self.observed).abs()
    }
}
