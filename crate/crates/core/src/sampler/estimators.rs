use super::{SampleSet, SamplerError};

/// `(sum w)^2 / sum w^2`.
pub fn ess_of_weights(weights: &[f64]) -> Result<f64, SamplerError> {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if !(s2 > 0.0) {
        return Err(SamplerError::Degenerate);
    }
    Ok(s * s / s2)
}

/// Effective sample size `n mean(w)^2 / mean(w^2)`.
pub fn ess(set: &SampleSet) -> Result<f64, SamplerError> {
    ess_of_weights(&set.weights())
}

/// Self-normalised estimate of `E[h(theta) | y_obs]`.
pub fn posterior_estimate(set: &SampleSet, h: impl Fn(&[f64]) -> f64) -> Result<f64, SamplerError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in set.samples.iter().filter(|s| s.weight > 0.0) {
        num += s.weight * h(&s.theta);
        den += s.weight;
    }
    if !(den > 0.0) {
        return Err(SamplerError::Degenerate);
    }
    Ok(num / den)
}

/// Posterior mean and standard deviation of one parameter component.
pub fn posterior_mean_sd(set: &SampleSet, component: usize) -> Result<(f64, f64), SamplerError> {
    let mean = posterior_estimate(set, |t| t[component])?;
    let var = posterior_estimate(set, |t| (t[component] - mean).powi(2))?;
    Ok((mean, var.sqrt()))
}

/// Mean weight, an unbiased estimate of the ABC evidence.
pub fn evidence_estimate(set: &SampleSet) -> f64 {
    if set.samples.is_empty() {
        return 0.0;
    }
    set.samples.iter().map(|s| s.weight).sum::<f64>() / set.samples.len() as f64
}

/// Indices of samples with positive weight.
pub fn accepted_indices(set: &SampleSet) -> Vec<usize> {
    set.samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.weight > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Lowers the acceptance threshold after the run. Raising it is refused.
pub fn posthoc_epsilon(set: &SampleSet, new_epsilon: f64) -> Result<SampleSet, SamplerError> {
    if !(new_epsilon >= 0.0) {
        return Err(SamplerError::InvalidArgument(format!(
            "epsilon must be >= 0, got {new_epsilon}"
        )));
    }
    if new_epsilon > set.epsilon {
        return Err(SamplerError::EpsilonIncrease {
            from: set.epsilon,
            to: new_epsilon,
        });
    }
    let mut out = set.clone();
    out.epsilon = new_epsilon;
    for s in &mut out.samples {
        if s.distance.is_none_or(|d| !(d <= new_epsilon)) {
            s.weight = 0.0;
        }
    }
    Ok(out)
}

/// Keeps exactly the `k` accepted samples of smallest distance (ties broken
/// by index) and sets epsilon to the largest kept distance.
pub fn posthoc_accept_count(set: &SampleSet, k: usize) -> Result<SampleSet, SamplerError> {
    let mut cand: Vec<(f64, usize)> = set
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.weight > 0.0)
        .map(|(i, s)| (s.distance.expect("accepted samples carry a distance"), i))
        .collect();
    if k == 0 || k > cand.len() {
        return Err(SamplerError::InvalidArgument(format!(
            "cannot keep {k} acceptances out of {}",
            cand.len()
        )));
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep = vec![false; set.samples.len()];
    for &(_, i) in &cand[..k] {
        keep[i] = true;
    }
    let mut out = set.clone();
    out.epsilon = cand[k - 1].0;
    for (s, kept) in out.samples.iter_mut().zip(keep) {
        if !kept {
            s.weight = 0.0;
        }
    }
    Ok(out)
}

/// Appends `main` to `pilot`. No reweighting constant is applied.
pub fn combine(pilot: &SampleSet, main: &SampleSet) -> Result<SampleSet, SamplerError> {
    if pilot.samples.is_empty() {
        return Ok(main.clone());
    }
    if pilot.epsilon.to_bits() != main.epsilon.to_bits() {
        return Err(SamplerError::Incompatible(format!(
            "epsilon {} vs {}",
            pilot.epsilon, main.epsilon
        )));
    }
    if pilot.model_id != main.model_id {
        return Err(SamplerError::Incompatible(format!(
            "model {} vs {}",
            pilot.model_id, main.model_id
        )));
    }
    if pilot.cost_mode != main.cost_mode {
        return Err(SamplerError::Incompatible("cost modes differ".into()));
    }
    if pilot.theta_dim() != main.theta_dim() || pilot.stage_count() != main.stage_count() {
        return Err(SamplerError::Incompatible(
            "parameter or stage dimensions differ".into(),
        ));
    }
    let mut out = pilot.clone();
    out.samples.extend(main.samples.iter().cloned());
    out.n_iterations += main.n_iterations;
    out.total_cost += main.total_cost;
    out.algorithm = main.algorithm;
    out.base_seed = main.base_seed;
    Ok(out)
}
