//! Estimates of `T2(phi)` and `gamma(phi)` from pilot data.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use super::{PhiKey, PilotRecord, TuningError};
use crate::smoothers::{
    fit_binomial_mean, fit_kernel_logistic, fit_positive_mean, fit_tail_prob_boxcox, BoxCoxOptions,
    KernelOptions, Smoother, SmootherKind,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum T2Mode {
    #[default]
    Constant,
    Regression,
}

/// How the standard estimate models the distance given `phi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "kebab-case")]
pub enum StandardPath {
    /// The summary is a count out of `trials` whose success probability is
    /// smoothed against `phi`; the acceptance probability follows from the
    /// binomial pmf. `successes_aux` indexes the pilot auxiliary column
    /// holding the simulated count.
    Binomial {
        successes_aux: usize,
        trials: u64,
        observed: f64,
    },
    /// Windowed Box-Cox regressions of `d` on `phi`, optionally with `ln u`.
    BoxCox {
        #[serde(default)]
        options: BoxCoxOptions,
        #[serde(default)]
        log_u: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum GammaMethod {
    Standard {
        #[serde(flatten)]
        path: StandardPath,
    },
    Conservative {
        #[serde(default)]
        epsilon1: Option<f64>,
        #[serde(default = "default_min_acceptances")]
        min_acceptances: usize,
    },
}

fn default_min_acceptances() -> usize {
    30
}

fn phi_range(phi: &[f64]) -> (f64, f64) {
    let lo = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 0.0)
    }
}

fn check_columns(a: usize, b: usize) -> Result<(), TuningError> {
    if a == 0 || a != b {
        return Err(TuningError::Invalid(
            "pilot columns must be nonempty and of equal length".into(),
        ));
    }
    Ok(())
}

/// `T2(phi)` as the mean continuation cost or a log-link kernel regression.
pub fn t2_smoother(
    phi: &[f64],
    t2: &[f64],
    mode: T2Mode,
    opts: &KernelOptions,
) -> Result<Smoother, TuningError> {
    check_columns(phi.len(), t2.len())?;
    let (lo, hi) = phi_range(phi);
    let mean = t2.iter().sum::<f64>() / t2.len() as f64;
    let constant = |note: Option<&str>| {
        let mut s = Smoother::constant(SmootherKind::Interpolant, mean, lo, hi);
        s.flags.extend(note.map(String::from));
        s
    };
    match mode {
        T2Mode::Constant => Ok(constant(None)),
        T2Mode::Regression => {
            if t2.iter().any(|t| !(*t > 0.0)) {
                Ok(constant(Some(
                    "non-positive continuation costs; T2 taken as constant",
                )))
            } else if phi.len() < opts.min_points || !(hi > lo) {
                Ok(constant(Some(
                    "too little variation to regress T2; taken as constant",
                )))
            } else {
                Ok(fit_positive_mean(phi, t2, opts)?)
            }
        }
    }
}

pub fn estimate_t2(
    record: &PilotRecord,
    key: PhiKey,
    mode: T2Mode,
    opts: &KernelOptions,
) -> Result<Smoother, TuningError> {
    t2_smoother(&record.phi(key)?, &record.t2(key.checkpoint), mode, opts)
}

/// `P(|X - observed| <= epsilon)` for `X ~ Binomial(trials, p)`.
pub fn binomial_acceptance_prob(p: f64, trials: u64, observed: f64, epsilon: f64) -> f64 {
    let lo = (observed - epsilon).ceil().max(0.0);
    let hi = (observed + epsilon).floor().min(trials as f64);
    if hi < lo {
        return 0.0;
    }
    let dist = Binomial::new(p.clamp(0.0, 1.0), trials).expect("valid binomial");
    let s: f64 = (lo as u64..=hi as u64).map(|k| dist.pmf(k)).sum();
    s.min(1.0)
}

/// Standard estimate through a smoothed binomial success probability.
pub fn gamma_binomial(
    phi: &[f64],
    successes: &[f64],
    trials: u64,
    observed: f64,
    epsilon: f64,
    opts: &KernelOptions,
) -> Result<Smoother, TuningError> {
    check_columns(phi.len(), successes.len())?;
    let (lo, hi) = phi_range(phi);
    if epsilon == f64::INFINITY {
        return Ok(Smoother::constant(SmootherKind::Logistic, 1.0, lo, hi));
    }
    let p = fit_binomial_mean(phi, successes, trials, opts)?;
    let xs = p.knots().to_vec();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| binomial_acceptance_prob(p.eval(x), trials, observed, epsilon))
        .collect();
    let mut g = if xs.len() == 1 {
        Smoother::constant(SmootherKind::Logistic, ys[0], lo, hi)
    } else {
        Smoother::from_points(SmootherKind::Logistic, &xs, &ys)?
    };
    g.bandwidth = p.bandwidth;
    g.flags = p.flags;
    Ok(g)
}

/// Standard estimate from windowed Box-Cox regressions of `d` on `dhat`.
/// Zero distances are moved to half the smallest positive one.
pub fn gamma_boxcox(
    dhat: &[f64],
    d: &[f64],
    epsilon: f64,
    log_u: Option<&[f64]>,
    opts: &BoxCoxOptions,
) -> Result<Smoother, TuningError> {
    check_columns(dhat.len(), d.len())?;
    let (lo, hi) = phi_range(dhat);
    if epsilon == f64::INFINITY {
        return Ok(Smoother::constant(SmootherKind::Logistic, 1.0, lo, hi));
    }
    let min_pos = d
        .iter()
        .cloned()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min_pos.is_finite() {
        let v = if epsilon >= 0.0 { 1.0 } else { 0.0 };
        let mut s = Smoother::constant(SmootherKind::Logistic, v, lo, hi);
        s.flags.push("all pilot distances are zero".into());
        return Ok(s);
    }
    let zeros = d.iter().filter(|v| **v <= 0.0).count();
    let adjusted: Vec<f64> = d
        .iter()
        .map(|&v| if v > 0.0 { v } else { 0.5 * min_pos })
        .collect();
    let mut s = fit_tail_prob_boxcox(dhat, &adjusted, epsilon, log_u, opts)?;
    if zeros > 0 {
        s.flags
            .push(format!("{zeros} zero distances set to {}", 0.5 * min_pos));
    }
    Ok(s)
}

pub fn gamma_standard(
    record: &PilotRecord,
    key: PhiKey,
    epsilon: f64,
    path: &StandardPath,
    kernel: &KernelOptions,
) -> Result<Smoother, TuningError> {
    let phi = record.phi(key)?;
    match path {
        StandardPath::Binomial {
            successes_aux,
            trials,
            observed,
        } => {
            let successes = record.aux_column(*successes_aux)?;
            gamma_binomial(&phi, &successes, *trials, *observed, epsilon, kernel)
        }
        StandardPath::BoxCox { options, log_u } => {
            let lu: Option<Vec<f64>> = log_u.then(|| record.u.iter().map(|u| u.ln()).collect());
            gamma_boxcox(&phi, &record.distance, epsilon, lu.as_deref(), options)
        }
    }
}

/// `epsilon1` for the conservative estimate: the requested value, raised to
/// the `min_acceptances`-th smallest distance if it accepts fewer pilot
/// rows. Returns the value and whether it was raised.
pub fn conservative_epsilon(
    distances: &[f64],
    epsilon1: Option<f64>,
    min_acceptances: usize,
) -> Result<(f64, bool), TuningError> {
    let k = min_acceptances.max(1);
    if distances.len() < k {
        return Err(TuningError::InsufficientPilot(format!(
            "{} pilot rows cannot supply {k} acceptances",
            distances.len()
        )));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let kth = sorted[k - 1];
    match epsilon1 {
        Some(e) if distances.iter().filter(|d| **d <= e).count() >= k => Ok((e, false)),
        Some(e) => {
            log::info!("epsilon1 = {e} gives fewer than {k} pilot acceptances; raised to {kth}");
            Ok((kth, true))
        }
        None => Ok((kth, false)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConservativeGamma {
    pub smoother: Smoother,
    pub epsilon1: f64,
    pub raised: bool,
}

/// Logistic regression of `1[d <= epsilon1]` on `phi`.
pub fn gamma_logistic(
    phi: &[f64],
    distances: &[f64],
    epsilon1: Option<f64>,
    min_acceptances: usize,
    opts: &KernelOptions,
) -> Result<ConservativeGamma, TuningError> {
    check_columns(phi.len(), distances.len())?;
    let (e1, raised) = conservative_epsilon(distances, epsilon1, min_acceptances)?;
    let z: Vec<f64> = distances
        .iter()
        .map(|d| if *d <= e1 { 1.0 } else { 0.0 })
        .collect();
    let mut smoother = fit_kernel_logistic(phi, &z, opts)?;
    if raised {
        smoother.flags.push(format!("epsilon1 raised to {e1}"));
    }
    Ok(ConservativeGamma {
        smoother,
        epsilon1: e1,
        raised,
    })
}

pub fn gamma_conservative(
    record: &PilotRecord,
    key: PhiKey,
    epsilon1: Option<f64>,
    min_acceptances: usize,
    opts: &KernelOptions,
) -> Result<ConservativeGamma, TuningError> {
    gamma_logistic(
        &record.phi(key)?,
        &record.distance,
        epsilon1,
        min_acceptances,
        opts,
    )
}

/// Per-row acceptance rate within the cell of rows sharing the same values
/// of every statistic in `keys`.
pub fn cell_acceptance_rates(
    record: &PilotRecord,
    keys: &[PhiKey],
    epsilon: f64,
) -> Result<Vec<f64>, TuningError> {
    let cols = keys
        .iter()
        .map(|k| record.phi(*k))
        .collect::<Result<Vec<_>, _>>()?;
    let cell = |i: usize| -> Vec<u64> { cols.iter().map(|c| c[i].to_bits()).collect() };
    let mut tally: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
    for i in 0..record.len() {
        let e = tally.entry(cell(i)).or_insert((0.0, 0.0));
        e.0 += f64::from(u8::from(record.distance[i] <= epsilon));
        e.1 += 1.0;
    }
    Ok((0..record.len())
        .map(|i| {
            let (a, n) = tally[&cell(i)];
            a / n
        })
        .collect())
}
