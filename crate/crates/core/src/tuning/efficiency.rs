use serde::{Deserialize, Serialize};

use super::multistop::MultiStopProblem;
use super::{AlphaPolicy, PilotRecord, TuningError};
use crate::optim::maximize_log_scale;

pub const LAMBDA_GRID: (f64, f64, usize) = (1e-4, 1e4, 41);

/// Efficiency estimate up to proportionality: `score = 1 / (w2 t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub w2: f64,
    pub t: f64,
    pub score: f64,
}

impl Efficiency {
    pub fn new(w2: f64, t: f64) -> Self {
        Self {
            w2,
            t,
            score: 1.0 / (w2 * t),
        }
    }

    pub fn relative_to(&self, baseline: &Efficiency) -> f64 {
        self.score / baseline.score
    }
}

/// Pilot quantities for one stopping decision: per row `u`, the estimated
/// acceptance probability, the estimated expected continuation cost used by
/// the policy, and the realised initial and continuation costs.
#[derive(Clone, Debug, PartialEq)]
pub struct StopProblem {
    pub u: Vec<f64>,
    pub gamma: Vec<f64>,
    pub t2bar: Vec<f64>,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
}

impl StopProblem {
    pub fn new(
        u: Vec<f64>,
        gamma: Vec<f64>,
        t2bar: Vec<f64>,
        t1: Vec<f64>,
        t2: Vec<f64>,
    ) -> Result<Self, TuningError> {
        let n = u.len();
        if n == 0
            || [gamma.len(), t2bar.len(), t1.len(), t2.len()]
                .iter()
                .any(|&l| l != n)
        {
            return Err(TuningError::Invalid(
                "pilot columns must be nonempty and of equal length".into(),
            ));
        }
        if u.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(TuningError::Invalid("u must be positive and finite".into()));
        }
        if gamma.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(TuningError::Invalid(
                "gamma estimates must lie in [0, 1]".into(),
            ));
        }
        if t1
            .iter()
            .chain(&t2)
            .chain(&t2bar)
            .any(|t| !(*t >= 0.0 && t.is_finite()))
        {
            return Err(TuningError::Invalid(
                "costs must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            u,
            gamma,
            t2bar,
            t1,
            t2,
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn efficiency(&self, alphas: &[f64]) -> Efficiency {
        let n = self.len() as f64;
        let mut w2 = 0.0;
        let mut t = 0.0;
        for i in 0..self.len() {
            w2 += self.u[i] * self.u[i] * self.gamma[i] / alphas[i];
            t += self.t1[i] + alphas[i] * self.t2[i];
        }
        Efficiency::new(w2 / n, t)
    }

    /// Efficiency with every simulation completed.
    pub fn baseline(&self) -> Efficiency {
        self.efficiency(&vec![1.0; self.len()])
    }

    /// `clamp(lambda u sqrt(gamma / t2bar), floor, 1)` per row.
    pub fn alphas(&self, lambda: f64, floor: f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| optimal_alpha(lambda, self.u[i], self.gamma[i], self.t2bar[i], floor))
            .collect()
    }
}

pub(crate) fn optimal_alpha(lambda: f64, u: f64, gamma: f64, t2bar: f64, floor: f64) -> f64 {
    if !(t2bar > 0.0) {
        return 1.0;
    }
    let a = lambda * u * (gamma / t2bar).sqrt();
    if a.is_nan() {
        1.0
    } else {
        a.clamp(floor, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub lambda: f64,
    pub efficiency: Efficiency,
    pub baseline: Efficiency,
    pub relative_efficiency: f64,
    /// `(lambda, score)` on the search grid.
    pub grid: Vec<(f64, f64)>,
}

/// Maximises the efficiency score over `lambda` with a log grid followed by
/// golden-section refinement.
pub fn optimize_lambda(problem: &StopProblem, floor: f64) -> Result<LambdaFit, TuningError> {
    search_lambda(
        |lambda| problem.efficiency(&problem.alphas(lambda, floor)),
        problem.baseline(),
    )
}

pub(crate) fn search_lambda(
    mut eff: impl FnMut(f64) -> Efficiency,
    baseline: Efficiency,
) -> Result<LambdaFit, TuningError> {
    let (lo, hi, n) = LAMBDA_GRID;
    let found = maximize_log_scale(|l| eff(l).score, lo, hi, n)
        .map_err(|(lambda, value)| TuningError::NonFiniteScore { lambda, value })?;
    let efficiency = eff(found.x);
    Ok(LambdaFit {
        lambda: found.x,
        efficiency,
        baseline,
        relative_efficiency: efficiency.relative_to(&baseline),
        grid: found.grid,
    })
}

/// Estimated efficiency of `policy` on the pilot record and of ABC-IS on the
/// same record. `gamma[i]` estimates the acceptance probability of row `i`.
pub fn efficiency_estimate(
    record: &PilotRecord,
    policy: &AlphaPolicy,
    gamma: &[f64],
) -> Result<(Efficiency, Efficiency), TuningError> {
    if record.is_empty() || gamma.len() != record.len() {
        return Err(TuningError::Invalid(
            "gamma must have one entry per pilot row".into(),
        ));
    }
    let k = record.checkpoint_count();
    let problem =
        MultiStopProblem::new(record.u.clone(), gamma.to_vec(), record.stage_costs.clone())?;
    let mut alphas = Vec::with_capacity(record.len());
    for (i, phis) in record.phis.iter().enumerate() {
        let row: Vec<f64> = (0..k)
            .map(|c| policy.eval(c, record.u[i], &phis[c]))
            .collect();
        if let Some(&value) = row.iter().find(|a| !(**a >= policy.floor)) {
            return Err(TuningError::BelowFloor {
                row: i,
                value,
                floor: policy.floor,
            });
        }
        alphas.push(row);
    }
    Ok((problem.efficiency(&alphas), problem.baseline()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_rows() -> StopProblem {
        StopProblem::new(
            vec![1.0; 2],
            vec![0.5; 2],
            vec![1.0; 2],
            vec![1.0; 2],
            vec![1.0; 2],
        )
        .unwrap()
    }

    #[test]
    fn direct_formula() {
        let p = two_rows();
        let e = p.efficiency(&[1.0, 1.0]);
        assert_eq!((e.w2, e.t, e.score), (0.5, 4.0, 0.5));
        let h = p.efficiency(&[0.5, 0.5]);
        assert_eq!((h.w2, h.t), (1.0, 3.0));
        assert!((h.score - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.relative_to(&p.baseline()), 1.0);
    }

    #[test]
    fn large_lambda_saturates() {
        let p = two_rows();
        assert_eq!(p.alphas(1e9, 1e-3), vec![1.0, 1.0]);
        assert_eq!(p.efficiency(&p.alphas(1e9, 1e-3)), p.baseline());
    }
}
