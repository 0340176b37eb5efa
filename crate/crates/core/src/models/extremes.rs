//! Spatial extremes model: Schlather data, tripletwise extremal coefficients
//! averaged within shape clusters, L1 distance between cluster means.
//!
//! The initial stage simulates all data and the coefficients of triples lying
//! inside the location subset `L`; its decision statistic `dhat` is the L1
//! distance over clusters that already have an estimate. The continuation
//! computes the remaining coefficients. With `fallback_checkpoint` set, an
//! extra checkpoint sits after the direct Cholesky attempt and exposes a
//! binary indicator of failure before the costly fallback simulation runs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::extremal::{
    cluster_means, cluster_triples, l1_distance, triple_coeff, TripleClustering,
};
use super::schlather::{
    fallback_factor, simulate_years, try_direct, FactorMethod, GaussianFactor, SchlatherSettings,
};
use super::{ModelError, StagedModel};

/// Declared cost units. Defaults follow a per-iteration profile of 7.1 for
/// data simulation, 17.9 for coefficients and 3.1 for everything else at
/// 20 locations and 100 years.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExtremesCostModel {
    pub sim_per_location_year: f64,
    pub coeff_per_triple_year: f64,
    /// Fixed per-iteration cost charged in the continuation stage.
    pub summary_overhead: f64,
    /// Cost of building and attempting to factor the correlation matrix.
    pub factor_cost: f64,
    /// Multiplier on data simulation when the fallback factor is used.
    pub fallback_multiplier: f64,
}

impl Default for ExtremesCostModel {
    fn default() -> Self {
        Self {
            sim_per_location_year: 7.1 / 2000.0,
            coeff_per_triple_year: 17.9 / 114_000.0,
            summary_overhead: 3.1,
            factor_cost: 0.01,
            fallback_multiplier: 150.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExtremesConfig {
    pub locations: Vec<[f64; 2]>,
    pub years: usize,
    pub cluster_count: usize,
    pub cluster_seed: u64,
    /// Location indices whose triples are computed in the initial stage;
    /// `None` means all locations.
    pub subset: Option<Vec<usize>>,
    pub simulation: SchlatherSettings,
    pub fallback_checkpoint: bool,
    pub cost: ExtremesCostModel,
    /// Observed `years x D` matrix.
    pub observed: Option<Vec<Vec<f64>>>,
}

impl Default for ExtremesConfig {
    fn default() -> Self {
        Self {
            locations: Vec::new(),
            years: 100,
            cluster_count: 100,
            cluster_seed: 0x5eed,
            subset: None,
            simulation: SchlatherSettings::default(),
            fallback_checkpoint: false,
            cost: ExtremesCostModel::default(),
            observed: None,
        }
    }
}

impl ExtremesConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.locations.len();
        if d < 3 {
            return Err(ModelError::Config(format!(
                "need at least 3 locations, got {d}"
            )));
        }
        if self.years == 0 {
            return Err(ModelError::Config("years must be positive".into()));
        }
        if self.locations.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::Config("non-finite location coordinate".into()));
        }
        if let Some(l) = &self.subset {
            if l.iter().any(|&i| i >= d) {
                return Err(ModelError::Config("subset index out of range".into()));
            }
        }
        if let Some(obs) = &self.observed {
            if obs.len() != self.years || obs.iter().any(|r| r.len() != d) {
                return Err(ModelError::Config(format!(
                    "observed data must be {} x {d}",
                    self.years
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExtremesState {
    pub fallback: Option<bool>,
    factor: Option<GaussianFactor>,
    pending: Option<(nalgebra::DMatrix<f64>, Vec<usize>)>,
    pub data: Option<Vec<Vec<f64>>>,
    /// Coefficient per triple, `NaN` until computed.
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ExtremesModel {
    pub config: ExtremesConfig,
    clustering: TripleClustering,
    observed_means: Vec<Option<f64>>,
    in_subset: Vec<bool>,
}

impl ExtremesModel {
    /// Builds the model; `config.observed` must be set.
    pub fn new(config: ExtremesConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let obs = config
            .observed
            .as_ref()
            .ok_or_else(|| ModelError::Config("observed data missing".into()))?;
        let clustering =
            cluster_triples(&config.locations, config.cluster_count, config.cluster_seed)?;
        let coeffs = clustering
            .triples
            .iter()
            .map(|t| triple_coeff(obs, *t))
            .collect::<Result<Vec<_>, _>>()?;
        let observed_means = cluster_means(&coeffs, &clustering, None);
        let mut model = Self {
            in_subset: Vec::new(),
            config,
            clustering,
            observed_means,
        };
        model.in_subset = model.subset_mask(model.config.subset.as_deref());
        Ok(model)
    }

    /// Same model and data with a different initial-stage subset.
    pub fn with_subset(&self, subset: Option<Vec<usize>>) -> Self {
        let mut m = self.clone();
        m.in_subset = m.subset_mask(subset.as_deref());
        m.config.subset = subset;
        m
    }

    pub fn clustering(&self) -> &TripleClustering {
        &self.clustering
    }

    pub fn observed_means(&self) -> &[Option<f64>] {
        &self.observed_means
    }

    /// Per-triple flag: all three locations lie in `subset`.
    pub fn subset_mask(&self, subset: Option<&[usize]>) -> Vec<bool> {
        let d = self.config.locations.len();
        let mut inside = vec![subset.is_none(); d];
        if let Some(l) = subset {
            for &i in l {
                inside[i] = true;
            }
        }
        self.clustering
            .triples
            .iter()
            .map(|t| t.iter().all(|&i| inside[i]))
            .collect()
    }

    /// `dhat` computed from per-triple coefficients restricted to `mask`.
    pub fn dhat(&self, coeffs: &[f64], mask: &[bool]) -> f64 {
        let partial = cluster_means(coeffs, &self.clustering, Some(mask));
        l1_distance(&self.observed_means, &partial)
    }

    /// Declared `(initial, continuation)` costs for a subset with
    /// `inside` triples, excluding the factor attempt.
    pub fn split_costs(&self, inside: usize, fallback: bool) -> (f64, f64) {
        let c = &self.config.cost;
        let m = self.config.years as f64;
        let total = self.clustering.triples.len();
        let mut sim = c.sim_per_location_year * self.config.locations.len() as f64 * m;
        if fallback {
            sim *= c.fallback_multiplier;
        }
        let t1 = sim + c.coeff_per_triple_year * m * inside as f64;
        let t2 = c.coeff_per_triple_year * m * (total - inside) as f64 + c.summary_overhead;
        (t1, t2)
    }

    fn sim_stage(&self) -> usize {
        usize::from(self.config.fallback_checkpoint)
    }

    fn theta_pair(theta: &[f64]) -> (f64, f64) {
        (theta[0], theta[1])
    }

    fn fill_coeffs(
        &self,
        state: &mut ExtremesState,
        want: bool,
        stage: usize,
    ) -> Result<usize, ModelError> {
        let data = state.data.as_ref().ok_or(ModelError::Simulation {
            stage,
            reason: "coefficients requested before data".into(),
        })?;
        let mut n = 0;
        for (i, t) in self.clustering.triples.iter().enumerate() {
            if self.in_subset[i] == want {
                state.coeffs[i] = triple_coeff(data, *t).map_err(|e| ModelError::Simulation {
                    stage,
                    reason: e.to_string(),
                })?;
                n += 1;
            }
        }
        Ok(n)
    }

    /// Full summary in one pass from the data stream alone.
    pub fn simulate_reference<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>, ModelError> {
        let (c, nu) = Self::theta_pair(theta);
        let factor = match try_direct(
            &self.config.locations,
            c,
            nu,
            self.config.simulation.pivot_tolerance,
        )? {
            Ok(f) => f,
            Err((sigma, unique_index)) => GaussianFactor {
                method: FactorMethod::Fallback,
                unique_index,
                factor: fallback_factor(&sigma)?,
            },
        };
        let data = simulate_years(&factor, self.config.years, &self.config.simulation, rng)?;
        let coeffs = self
            .clustering
            .triples
            .iter()
            .map(|t| triple_coeff(&data, *t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(cluster_means(&coeffs, &self.clustering, None)
            .into_iter()
            .map(|m| m.expect("clusters are nonempty"))
            .collect())
    }
}

impl StagedModel for ExtremesModel {
    type State = ExtremesState;

    fn id(&self) -> String {
        let c = &self.config;
        let obs_sum: f64 = c.observed.iter().flatten().flatten().sum();
        format!(
            "extremes:D={}:M={}:K={}:seed={}:fallback={}:obs={:.16e}",
            c.locations.len(),
            c.years,
            self.clustering.n_clusters,
            c.cluster_seed,
            c.fallback_checkpoint,
            obs_sum
        )
    }

    fn stage_count(&self) -> usize {
        2 + self.sim_stage()
    }

    fn start(&self, theta: &[f64]) -> Result<ExtremesState, ModelError> {
        if theta.len() != 2
            || !(theta[0] > 0.0 && theta[1] > 0.0)
            || theta.iter().any(|v| !v.is_finite())
        {
            return Err(ModelError::Parameter {
                theta: theta.to_vec(),
                reason: "expects positive finite (range, smoothness)".into(),
            });
        }
        Ok(ExtremesState {
            coeffs: vec![f64::NAN; self.clustering.triples.len()],
            ..ExtremesState::default()
        })
    }

    fn run_stage<R: Rng + ?Sized>(
        &self,
        stage: usize,
        theta: &[f64],
        state: &mut ExtremesState,
        rng: &mut R,
    ) -> Result<f64, ModelError> {
        let cost = &self.config.cost;
        let sim_stage = self.sim_stage();
        let (c, nu) = Self::theta_pair(theta);
        let mut spent = 0.0;
        if stage == 0 {
            match try_direct(
                &self.config.locations,
                c,
                nu,
                self.config.simulation.pivot_tolerance,
            )? {
                Ok(f) => {
                    state.fallback = Some(false);
                    state.factor = Some(f);
                }
                Err(pending) => {
                    state.fallback = Some(true);
                    state.pending = Some(pending);
                }
            }
            spent += cost.factor_cost;
        }
        if stage == sim_stage {
            if let Some((sigma, unique_index)) = state.pending.take() {
                state.factor = Some(GaussianFactor {
                    method: FactorMethod::Fallback,
                    unique_index,
                    factor: fallback_factor(&sigma)?,
                });
            }
            let factor = state.factor.as_ref().ok_or(ModelError::Simulation {
                stage,
                reason: "no Gaussian factor".into(),
            })?;
            let data = simulate_years(factor, self.config.years, &self.config.simulation, rng)
                .map_err(|e| ModelError::Simulation {
                    stage,
                    reason: e.to_string(),
                })?;
            state.data = Some(data);
            let inside = self.fill_coeffs(state, true, stage)?;
            spent += self.split_costs(inside, state.fallback == Some(true)).0;
            return Ok(spent);
        }
        if stage == sim_stage + 1 {
            let outside = self.fill_coeffs(state, false, stage)?;
            return Ok(
                cost.coeff_per_triple_year * self.config.years as f64 * outside as f64
                    + cost.summary_overhead,
            );
        }
        if stage == 0 {
            return Ok(spent);
        }
        Err(ModelError::Simulation {
            stage,
            reason: "no such stage".into(),
        })
    }

    fn decision_statistics(
        &self,
        checkpoint: usize,
        _theta: &[f64],
        state: &ExtremesState,
    ) -> Vec<f64> {
        if self.config.fallback_checkpoint && checkpoint == 0 {
            vec![if state.fallback == Some(true) {
                1.0
            } else {
                0.0
            }]
        } else {
            vec![self.dhat(&state.coeffs, &self.in_subset)]
        }
    }

    fn decision_names(&self, checkpoint: usize) -> Vec<String> {
        if self.config.fallback_checkpoint && checkpoint == 0 {
            vec!["fallback".into()]
        } else {
            vec!["dhat".into()]
        }
    }

    fn summary(&self, state: &ExtremesState) -> Vec<f64> {
        cluster_means(&state.coeffs, &self.clustering, None)
            .into_iter()
            .map(|m| m.unwrap_or(f64::NAN))
            .collect()
    }

    fn distance(&self, summary: &[f64]) -> f64 {
        summary
            .iter()
            .zip(&self.observed_means)
            .map(|(s, o)| (s - o.expect("clusters are nonempty")).abs())
            .sum()
    }

    fn pilot_aux(&self, state: &ExtremesState) -> Vec<f64> {
        let mut aux = Vec::with_capacity(1 + state.coeffs.len());
        aux.push(if state.fallback == Some(true) {
            1.0
        } else {
            0.0
        });
        aux.extend_from_slice(&state.coeffs);
        aux
    }

    fn aux_names(&self) -> Vec<String> {
        let mut names = vec!["fallback".to_string()];
        names.extend(
            self.clustering
                .triples
                .iter()
                .map(|t| format!("coef_{}_{}_{}", t[0], t[1], t[2])),
        );
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model(subset: Option<Vec<usize>>) -> ExtremesModel {
        let locations: Vec<[f64; 2]> =
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0], [5.0, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let factor = super::super::schlather::factorize(&locations, 1.0, 1.0, 0.0).unwrap();
        let obs = simulate_years(&factor, 20, &SchlatherSettings::default(), &mut rng).unwrap();
        ExtremesModel::new(ExtremesConfig {
            locations,
            years: 20,
            subset,
            observed: Some(obs),
            ..ExtremesConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn full_subset_dhat_equals_distance() {
        let m = small_model(None);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let th = [2.0, 0.7];
        let mut st = m.start(&th).unwrap();
        m.run_stage(0, &th, &mut st, &mut rng).unwrap();
        let dhat = m.decision_statistics(0, &th, &st)[0];
        m.run_stage(1, &th, &mut st, &mut rng).unwrap();
        let d = m.distance(&m.summary(&st));
        assert!((dhat - d).abs() < 1e-12);
    }

    #[test]
    fn subset_without_triples_gives_zero_dhat() {
        let m = small_model(Some(vec![0, 1]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let th = [2.0, 0.7];
        let mut st = m.start(&th).unwrap();
        m.run_stage(0, &th, &mut st, &mut rng).unwrap();
        assert_eq!(m.decision_statistics(0, &th, &st), vec![0.0]);
    }

    #[test]
    fn declared_costs_add_up() {
        let m = small_model(Some(vec![0, 1, 2]));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let th = [1.0, 1.0];
        let mut st = m.start(&th).unwrap();
        let a = m.run_stage(0, &th, &mut st, &mut rng).unwrap();
        let b = m.run_stage(1, &th, &mut st, &mut rng).unwrap();
        let c = &m.config.cost;
        let expect = c.factor_cost
            + c.sim_per_location_year * 5.0 * 20.0
            + c.coeff_per_triple_year * 20.0 * 10.0
            + c.summary_overhead;
        assert!((a + b - expect).abs() < 1e-12);
    }

    #[test]
    fn rejects_missing_observations() {
        let cfg = ExtremesConfig {
            locations: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            ..ExtremesConfig::default()
        };
        assert!(ExtremesModel::new(cfg).is_err());
    }
}
