mod common;

use std::sync::Arc;

use common::*;
use lazyabc::density::{DensityPair, DiscreteDensity};
use lazyabc::models::StagedModel;
use lazyabc::rng::{derived_seed, StreamId, Streams};
use lazyabc::sampler::*;
use lazyabc::tuning::{run_pilot, PilotOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// `P(|Y - observed| <= eps | theta index t)` by summing the tables.
fn enumerate_likelihood(m: &lazyabc::models::FiniteModel, t: usize, eps: f64) -> f64 {
    let mut total = 0.0;
    for (x, px) in m.x_probs[t].iter().enumerate() {
        for (y, py) in m.y_probs[t][x].iter().enumerate() {
            if (m.y_values[y] - m.observed).abs() <= eps {
                total += px * py;
            }
        }
    }
    total
}

fn uniform_thetas(points: &[f64]) -> DensityPair {
    DensityPair::prior_only(Arc::new(
        DiscreteDensity::uniform(points.iter().map(|t| vec![*t]).collect()).unwrap(),
    ))
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn within_3se(sample: &[f64], truth: f64) -> bool {
    let (m, sd) = mean_sd(sample);
    (m - truth).abs() <= 3.0 * sd / (sample.len() as f64).sqrt()
}

#[test]
fn random_weight_bernoulli_mean_matches_enumeration() {
    let dens = uniform_thetas(&[1.0, 2.0]);
    let est = FnEstimator(|theta: &[f64], rng: &mut lazyabc::rng::StreamRng| {
        if rng.random::<f64>() < 0.3 * theta[0] {
            1.0
        } else {
            0.0
        }
    });
    let set = run_rw_is(&dens, 100_000, &est, 3, &opts(None)).unwrap();
    let truth = 0.5 * 0.3 + 0.5 * 0.6;
    assert!(within_3se(&set.weights(), truth));
}

#[test]
fn rejection_weights_are_zero_or_one_and_match_enumeration() {
    let model = finite_model();
    let dens = uniform_thetas(&model.thetas);
    let eps = 0.5;
    let set = run_abc_is(&dens, 100_000, &model, eps, 5, &opts(None)).unwrap();
    assert!(set
        .samples
        .iter()
        .all(|s| s.weight == 0.0 || s.weight == 1.0));
    for (t, theta) in model.thetas.iter().enumerate() {
        let w: Vec<f64> = set
            .samples
            .iter()
            .filter(|s| s.theta[0] == *theta)
            .map(|s| s.weight)
            .collect();
        assert!(
            within_3se(&w, enumerate_likelihood(&model, t, eps)),
            "theta {theta}"
        );
    }
}

#[test]
fn lazy_constant_policy_is_unbiased_per_theta() {
    let model = finite_model();
    let dens = uniform_thetas(&model.thetas);
    let eps = 0.5;
    let set = run_lazy_abc(
        &dens,
        100_000,
        &model,
        eps,
        &ConstantPolicy(0.5),
        6,
        &opts(None),
    )
    .unwrap();
    assert!(set
        .samples
        .iter()
        .all(|s| s.weight == 0.0 || s.weight == 2.0));
    for (t, theta) in model.thetas.iter().enumerate() {
        let w: Vec<f64> = set
            .samples
            .iter()
            .filter(|s| s.theta[0] == *theta)
            .map(|s| s.weight)
            .collect();
        assert!(
            within_3se(&w, enumerate_likelihood(&model, t, eps)),
            "theta {theta}"
        );
    }
}

#[test]
fn importance_proposal_mean_weight_matches_enumeration() {
    let model = finite_model();
    let prior = Arc::new(DiscreteDensity::uniform(vec![vec![0.0], vec![1.0]]).unwrap());
    let g = Arc::new(DiscreteDensity::new(vec![vec![0.0], vec![1.0]], vec![0.8, 0.2]).unwrap());
    let dens = DensityPair::with_proposal(prior, g).unwrap();
    let eps = 0.5;
    let set = run_lazy_abc(
        &dens,
        100_000,
        &model,
        eps,
        &ConstantPolicy(0.7),
        8,
        &opts(None),
    )
    .unwrap();
    // sum over theta of g * (pi / g) * L = sum of pi * L.
    let truth: f64 = (0..2)
        .map(|t| 0.5 * enumerate_likelihood(&model, t, eps))
        .sum();
    assert!(within_3se(&set.weights(), truth));
    assert!((evidence_estimate(&set) - set.weights().iter().sum::<f64>() / 1e5).abs() < 1e-12);
}

#[test]
fn combining_pilot_keeps_evidence_consistent() {
    let model = finite_model();
    let dens = uniform_thetas(&model.thetas);
    let eps = 0.5;
    let (pilot, record) = run_pilot(
        &dens,
        &model,
        2_000,
        eps,
        derived_seed(9, 1),
        &PilotOptions::default(),
    )
    .unwrap();
    assert_eq!(record.len(), 2_000);
    let main = run_lazy_abc(
        &dens,
        20_000,
        &model,
        eps,
        &ConstantPolicy(0.5),
        9,
        &opts(None),
    )
    .unwrap();
    let both = combine(&pilot, &main).unwrap();
    assert_eq!(both.n_iterations, 22_000);
    let (_, sd) = mean_sd(&both.weights());
    let se = sd / (both.n_iterations as f64).sqrt();
    let truth: f64 = (0..2)
        .map(|t| 0.5 * enumerate_likelihood(&model, t, eps))
        .sum();
    assert!((evidence_estimate(&both) - truth).abs() <= 3.0 * se);
    assert!((evidence_estimate(&both) - evidence_estimate(&main)).abs() <= 3.0 * se);
}

fn weighted_mean_se(theta: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let m = theta.iter().zip(w).map(|(t, w)| t * w).sum::<f64>() / sw;
    let var = theta
        .iter()
        .zip(w)
        .map(|(t, w)| w * (t - m).powi(2))
        .sum::<f64>()
        / sw;
    let ess = sw * sw / w.iter().map(|x| x * x).sum::<f64>();
    (m, (var / ess).sqrt())
}

#[test]
fn sir_lazy_posterior_mean_agrees_with_independent_rejection_reference() {
    let model = lazyabc::models::SirModel::new(lazyabc::models::SirConfig {
        population: 10_000,
        initial_infectious: 100,
        checkpoint: 100,
        subsample: 100,
        observed: Some(73),
        ..Default::default()
    })
    .unwrap();
    let eps = 2.0;
    // Reference: plain rejection with the unstaged simulator and its own
    // generators.
    let prior = Gamma::new(3.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    let mut accepted = Vec::new();
    for _ in 0..40_000 {
        let r0: f64 = prior.sample(&mut rng);
        let mut a = ChaCha8Rng::seed_from_u64(rng.random());
        let mut b = ChaCha8Rng::seed_from_u64(rng.random());
        let st = model.simulate_unstaged(r0, &mut a, &mut b);
        if (st.sampled_recovered.unwrap() as f64 - 73.0).abs() <= eps {
            accepted.push(r0);
        }
    }
    let (ref_mean, ref_se) = weighted_mean_se(&accepted, &vec![1.0; accepted.len()]);

    let policy = FnPolicy(
        |_: usize, _: &[f64], _: f64, phi: &[f64]| if phi[0] <= 100.0 { 0.2 } else { 1.0 },
    );
    let set = run_lazy_abc(&sir_prior(), 40_000, &model, eps, &policy, 77, &opts(None)).unwrap();
    let theta: Vec<f64> = set.samples.iter().map(|s| s.theta[0]).collect();
    let (lazy_mean, lazy_se) = weighted_mean_se(&theta, &set.weights());
    assert!(set.samples.iter().any(|s| s.early_stopped));
    let tol = 3.0 * (ref_se * ref_se + lazy_se * lazy_se).sqrt();
    assert!(
        (ref_mean - lazy_mean).abs() <= tol,
        "reference {ref_mean} +- {ref_se}, lazy {lazy_mean} +- {lazy_se}"
    );
}

#[test]
fn failure_budget_is_enforced() {
    let model = finite_model();
    // Parameter 5 is outside the model's parameter set, so every start fails.
    let dens = uniform_thetas(&[5.0]);
    let strict = run_abc_is(&dens, 10, &model, 0.5, 1, &opts(None));
    assert!(strict.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ess_lies_between_one_and_positive_count(w in prop::collection::vec(0.0f64..10.0, 1..60), extra in 0.01f64..10.0) {
        let mut w = w;
        w.push(extra);
        let e = ess_of_weights(&w).unwrap();
        let positive = w.iter().filter(|x| **x > 0.0).count() as f64;
        prop_assert!(e >= 1.0 - 1e-12 && e <= positive + 1e-9);
    }

    #[test]
    fn posthoc_only_removes_acceptances(
        d in prop::collection::vec(prop::option::of(0.0f64..10.0), 1..50),
        eps in 0.0f64..10.0,
        shrink in 0.0f64..1.0,
    ) {
        let w: Vec<f64> = d.iter().map(|x| if x.is_some_and(|v| v <= eps) { 1.5 } else { 0.0 }).collect();
        let set = sample_set(&w, &d, eps);
        let lower = posthoc_epsilon(&set, eps * shrink).unwrap();
        prop_assert!(lower.accepted_count() <= set.accepted_count());
        for (a, b) in set.samples.iter().zip(&lower.samples) {
            prop_assert!(b.weight == 0.0 || b.weight == a.weight);
            prop_assert_eq!(b.weight > 0.0, a.weight > 0.0 && b.distance.is_some_and(|v| v <= eps * shrink));
        }
        prop_assert!(posthoc_epsilon(&set, eps + 1.0).is_err());
    }

    #[test]
    fn lazy_estimate_is_zero_or_inverse_alpha(alpha in 0.001f64..=1.0, seed in any::<u64>(), t in 0usize..2) {
        let model = finite_model();
        let streams = Streams::new(seed);
        let mut stages = [streams.rng(0, StreamId::Stage(0)), streams.rng(0, StreamId::Stage(1))];
        let mut coin = streams.rng(0, StreamId::Coin);
        let policy = ConstantPolicy(alpha);
        let out = lazy_likelihood(&model, &[model.thetas[t]], 1.0, 0.5, Some(&policy), &mut stages, &mut coin, CostMode::Sim, false)
            .map_err(|e| TestCaseError::fail(format!("{:?}", e.0)))?;
        prop_assert!(out.estimate == 0.0 || (out.estimate - 1.0 / alpha).abs() <= 1e-12 / alpha);
        prop_assert_eq!(out.early_stopped, out.distance.is_none());
        let expected_cost = if out.early_stopped { model.stage_costs[0] } else { model.stage_costs[0] + model.stage_costs[1] };
        prop_assert_eq!(out.stage_costs.iter().sum::<f64>(), expected_cost);
        prop_assert_eq!(model.stage_count(), 2);
    }
}
