#![allow(dead_code)]

use std::sync::Arc;

use lazyabc::density::{DensityPair, GammaDensity, UniformBox};
use lazyabc::models::schlather::{schlather_simulate, SchlatherSettings};
use lazyabc::models::{ExtremesConfig, ExtremesModel, FiniteModel, SirConfig, SirModel};
use lazyabc::sampler::{CostMode, RunOptions, SampleSet, WeightedSample};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator that always returns the same word, so `random::<f64>()` is a
/// chosen value. Used to drive a simulator down a specific branch.
pub struct FixedRng(pub u64);

impl FixedRng {
    /// `random::<f64>()` returns (approximately) `v`.
    pub fn uniform(v: f64) -> Self {
        FixedRng(((v * (1u64 << 53) as f64) as u64) << 11)
    }
}

impl RngCore for FixedRng {
    fn next_u32(&mut self) -> u32 {
        (self.0 >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.0
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for (i, b) in dst.iter_mut().enumerate() {
            *b = (self.0 >> (8 * (i % 8))) as u8;
        }
    }
}

pub fn opts(workers: Option<usize>) -> RunOptions {
    RunOptions {
        workers,
        cost_mode: CostMode::Sim,
        failure_budget: 0,
    }
}

pub fn finite_model() -> FiniteModel {
    FiniteModel {
        thetas: vec![0.0, 1.0],
        x_probs: vec![vec![0.6, 0.4], vec![0.25, 0.75]],
        y_probs: vec![
            vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            vec![vec![0.55, 0.45], vec![0.05, 0.95]],
        ],
        y_values: vec![0.0, 1.0],
        observed: 0.0,
        stage_costs: [1.0, 4.0],
    }
}

pub fn sir_model(observed: u64) -> SirModel {
    SirModel::new(SirConfig {
        observed: Some(observed),
        ..SirConfig::default()
    })
    .unwrap()
}

pub fn sir_prior() -> DensityPair {
    DensityPair::prior_only(Arc::new(GammaDensity::new(3.0, 1.0).unwrap()))
}

pub fn extremes_prior() -> DensityPair {
    DensityPair::prior_only(Arc::new(
        UniformBox::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap(),
    ))
}

/// Integer locations in `[0, 10]^2` and data simulated at `(c, nu)`.
pub fn extremes_model(
    d: usize,
    years: usize,
    c: f64,
    nu: f64,
    seed: u64,
    fallback_checkpoint: bool,
) -> ExtremesModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locations: Vec<[f64; 2]> = (0..d)
        .map(|_| {
            [
                rng.random_range(0..=10) as f64,
                rng.random_range(0..=10) as f64,
            ]
        })
        .collect();
    let settings = SchlatherSettings::default();
    let (observed, _) = schlather_simulate(c, nu, &locations, years, &settings, &mut rng).unwrap();
    ExtremesModel::new(ExtremesConfig {
        locations,
        years,
        simulation: settings,
        fallback_checkpoint,
        observed: Some(observed),
        ..ExtremesConfig::default()
    })
    .unwrap()
}

/// Sample set with unit parameters and the given weights and distances.
pub fn sample_set(weights: &[f64], distances: &[Option<f64>], epsilon: f64) -> SampleSet {
    let samples = weights
        .iter()
        .zip(distances)
        .map(|(&w, &d)| WeightedSample {
            theta: vec![0.0],
            weight: w,
            early_stopped: d.is_none(),
            stage_costs: vec![1.0],
            distance: d,
            continuation_prob: 1.0,
        })
        .collect();
    SampleSet::new(
        samples,
        epsilon,
        0,
        lazyabc::sampler::Algorithm::AbcIs,
        "test".into(),
        CostMode::Sim,
    )
}

/// ESS per unit cost.
pub fn efficiency(set: &SampleSet) -> f64 {
    lazyabc::sampler::ess(set).unwrap() / set.total_cost
}
