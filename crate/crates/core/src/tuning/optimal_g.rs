//! Importance density that maximises asymptotic efficiency of ABC-IS on a
//! finite parameter space.

use super::TuningError;

/// `g(theta)` proportional to `pi(theta) sqrt(gamma(theta) / T(theta))`.
pub fn optimal_g(prior: &[f64], gamma: &[f64], tbar: &[f64]) -> Result<Vec<f64>, TuningError> {
    if prior.is_empty() || gamma.len() != prior.len() || tbar.len() != prior.len() {
        return Err(TuningError::Invalid(
            "prior, gamma and T must have equal nonzero length".into(),
        ));
    }
    if tbar.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(TuningError::Invalid(
            "expected costs must be positive".into(),
        ));
    }
    let w: Vec<f64> = (0..prior.len())
        .map(|i| prior[i] * (gamma[i] / tbar[i]).sqrt())
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(TuningError::Invalid(
            "acceptance probability is zero wherever the prior has mass".into(),
        ));
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// `(sum pi gamma)^2 / ((sum pi^2 gamma / g) (sum g T))`, the inverse of
/// the asymptotic variance-cost product up to the target's variance.
pub fn asymptotic_efficiency(prior: &[f64], g: &[f64], gamma: &[f64], tbar: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut var = 0.0;
    let mut cost = 0.0;
    for i in 0..prior.len() {
        acc += prior[i] * gamma[i];
        if prior[i] * gamma[i] > 0.0 {
            var += prior[i] * prior[i] * gamma[i] / g[i];
        }
        cost += g[i] * tbar[i];
    }
    acc * acc / (var * cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beats_prior() {
        let prior = [0.25; 4];
        let gamma = [0.9, 0.1, 0.01, 0.5];
        let t = [1.0, 2.0, 4.0, 8.0];
        let g = optimal_g(&prior, &gamma, &t).unwrap();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let best = asymptotic_efficiency(&prior, &g, &gamma, &t);
        assert!(best >= asymptotic_efficiency(&prior, &prior, &gamma, &t));
        assert!(optimal_g(&prior, &[0.0; 4], &t).is_err());
    }
}
