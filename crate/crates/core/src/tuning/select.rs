//! Scoring candidate decision statistics, choosing among them and the tuning
//! report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::efficiency::{optimize_lambda, Efficiency, LambdaFit, StopProblem};
use super::estimate::{
    gamma_boxcox, gamma_logistic, t2_smoother, GammaMethod, StandardPath, T2Mode,
};
use super::{AlphaPolicy, AlphaRule, PhiKey, PilotRecord, Provenance, TuningError};
use crate::io::{self, float_or_string, IoError};
use crate::models::ExtremesModel;
use crate::smoothers::{KernelOptions, Smoother};

const CURVE_POINTS: usize = 101;

/// A decision statistic with its fitted `gamma` and `T2` and the per-row
/// quantities needed to score it on the pilot record.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub name: String,
    pub key: PhiKey,
    pub phi: Vec<f64>,
    pub gamma: Smoother,
    pub gamma_log_u: bool,
    pub t2: Smoother,
    pub t1_rows: Vec<f64>,
    pub t2_rows: Vec<f64>,
    pub subset: Option<Vec<usize>>,
    pub epsilon1: Option<f64>,
}

impl Candidate {
    /// Candidate using a recorded statistic and the recorded stage costs.
    pub fn from_record(
        record: &PilotRecord,
        key: PhiKey,
        gamma: Smoother,
        gamma_log_u: bool,
        t2: Smoother,
    ) -> Result<Self, TuningError> {
        Ok(Self {
            name: record.phi_name(key),
            key,
            phi: record.phi(key)?,
            gamma,
            gamma_log_u,
            t2,
            t1_rows: record.t1(key.checkpoint),
            t2_rows: record.t2(key.checkpoint),
            subset: None,
            epsilon1: None,
        })
    }

    pub fn gamma_rows(&self, u: &[f64]) -> Vec<f64> {
        self.phi
            .iter()
            .zip(u)
            .map(|(&x, &ui)| {
                let g = if self.gamma_log_u {
                    self.gamma.eval_with(x, Some(ui.ln()))
                } else {
                    self.gamma.eval(x)
                };
                g.clamp(0.0, 1.0)
            })
            .collect()
    }

    pub fn rule(&self, lambda: f64) -> AlphaRule {
        AlphaRule::Optimal {
            component: self.key.component,
            lambda,
            gamma: self.gamma.clone(),
            t2: self.t2.clone(),
            gamma_log_u: self.gamma_log_u,
            zeta: None,
        }
    }

    /// Maximises the estimated efficiency over `lambda`.
    pub fn score(&self, record: &PilotRecord, floor: f64) -> Result<LambdaFit, TuningError> {
        if !record.rejection && !self.gamma_log_u {
            return Err(TuningError::ConditionC3);
        }
        let t2bar = self.phi.iter().map(|&x| self.t2.eval(x)).collect();
        let problem = StopProblem::new(
            record.u.clone(),
            self.gamma_rows(&record.u),
            t2bar,
            self.t1_rows.clone(),
            self.t2_rows.clone(),
        )?;
        optimize_lambda(&problem, floor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub name: String,
    pub checkpoint: usize,
    pub component: usize,
    pub subset: Option<Vec<usize>>,
    pub lambda: f64,
    pub relative_efficiency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub removed: Option<usize>,
    pub subset: Vec<usize>,
    pub lambda: f64,
    pub relative_efficiency: f64,
}

/// Fitted curves on a grid of the chosen statistic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub phi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_lower: Vec<Option<f64>>,
    pub gamma_upper: Vec<Option<f64>>,
    pub t2: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub provenance: Provenance,
    #[serde(with = "float_or_string")]
    pub epsilon: f64,
    pub epsilon1: Option<f64>,
    pub checkpoint: usize,
    pub component: usize,
    pub phi_name: String,
    pub subset: Option<Vec<usize>>,
    pub lambda: Option<f64>,
    pub efficiency: Efficiency,
    pub baseline: Efficiency,
    pub relative_efficiency: f64,
    /// Estimated efficiency does not beat completing every simulation.
    pub recommend_standard: bool,
    pub candidates: Vec<CandidateScore>,
    pub selection_path: Vec<SelectionStep>,
    pub lambda_grid: Vec<(f64, f64)>,
    pub curves: Curves,
    pub policy: AlphaPolicy,
    pub flags: Vec<String>,
}

impl TuningReport {
    /// `tuning_report.json`, `policy.json`, `curves.csv` and
    /// `lambda_grid.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        io::write_json(&dir.join("tuning_report.json"), self)?;
        io::write_json(&dir.join("policy.json"), &self.policy)?;
        let header: Vec<String> = ["phi", "gamma", "gamma_lower", "gamma_upper", "t2", "alpha"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let c = &self.curves;
        let rows: Vec<Vec<f64>> = (0..c.phi.len())
            .map(|i| {
                vec![
                    c.phi[i],
                    c.gamma[i],
                    c.gamma_lower[i].unwrap_or(f64::NAN),
                    c.gamma_upper[i].unwrap_or(f64::NAN),
                    c.t2[i],
                    c.alpha[i],
                ]
            })
            .collect();
        io::write_table(&dir.join("curves.csv"), &header, &rows)?;
        let grid: Vec<Vec<f64>> = self.lambda_grid.iter().map(|(l, s)| vec![*l, *s]).collect();
        io::write_table(
            &dir.join("lambda_grid.csv"),
            &["lambda".into(), "score".into()],
            &grid,
        )
    }
}

fn curves(candidate: &Candidate, policy: &AlphaPolicy, u: &[f64]) -> Curves {
    let mut sorted_u = u.to_vec();
    sorted_u.sort_by(f64::total_cmp);
    let u_ref = sorted_u.get(sorted_u.len() / 2).copied().unwrap_or(1.0);
    let lo = candidate.phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = candidate
        .phi
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = Curves::default();
    if !lo.is_finite() {
        return out;
    }
    let n = if hi > lo { CURVE_POINTS } else { 1 };
    for i in 0..n {
        let x = if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        };
        let mut phi = vec![0.0; candidate.key.component + 1];
        phi[candidate.key.component] = x;
        let cov = candidate.gamma_log_u.then(|| u_ref.ln());
        out.phi.push(x);
        out.gamma.push(candidate.gamma.eval_with(x, cov));
        let iv = candidate.gamma.interval(x);
        out.gamma_lower.push(iv.map(|v| v.0));
        out.gamma_upper.push(iv.map(|v| v.1));
        out.t2.push(candidate.t2.eval(x));
        out.alpha
            .push(policy.eval(candidate.key.checkpoint, u_ref, &phi));
    }
    out
}

fn report(
    record: &PilotRecord,
    candidate: &Candidate,
    fit: LambdaFit,
    scores: Vec<CandidateScore>,
    floor: f64,
    provenance: Provenance,
) -> TuningReport {
    let policy = AlphaPolicy::single(
        candidate.key.checkpoint,
        candidate.rule(fit.lambda),
        floor,
        provenance,
    );
    let mut flags: Vec<String> = candidate.gamma.flags.clone();
    flags.extend(candidate.t2.flags.iter().cloned());
    let recommend_standard = fit.relative_efficiency <= 1.0;
    if recommend_standard {
        flags
            .push("estimated efficiency does not exceed ABC-IS; use the standard algorithm".into());
    }
    TuningReport {
        provenance,
        epsilon: record.epsilon,
        epsilon1: candidate.epsilon1,
        checkpoint: candidate.key.checkpoint,
        component: candidate.key.component,
        phi_name: candidate.name.clone(),
        subset: candidate.subset.clone(),
        lambda: Some(fit.lambda),
        efficiency: fit.efficiency,
        baseline: fit.baseline,
        relative_efficiency: fit.relative_efficiency,
        recommend_standard,
        candidates: scores,
        selection_path: Vec::new(),
        lambda_grid: fit.grid,
        curves: curves(candidate, &policy, &record.u),
        policy,
        flags,
    }
}

/// Tunes `lambda` for one statistic.
pub fn tune_single_stop(
    record: &PilotRecord,
    key: PhiKey,
    gamma: Smoother,
    gamma_log_u: bool,
    t2: Smoother,
    floor: f64,
    provenance: Provenance,
) -> Result<(AlphaPolicy, LambdaFit), TuningError> {
    let c = Candidate::from_record(record, key, gamma, gamma_log_u, t2)?;
    let fit = c.score(record, floor)?;
    Ok((
        AlphaPolicy::single(key.checkpoint, c.rule(fit.lambda), floor, provenance),
        fit,
    ))
}

/// Scores every candidate and keeps the one with the highest estimated
/// efficiency. Candidates that cannot be scored are reported in the flags.
pub fn select_configuration(
    record: &PilotRecord,
    candidates: &[Candidate],
    floor: f64,
    provenance: Provenance,
) -> Result<TuningReport, TuningError> {
    let mut scores = Vec::new();
    let mut failed = Vec::new();
    let mut best: Option<(usize, LambdaFit)> = None;
    for (i, c) in candidates.iter().enumerate() {
        match c.score(record, floor) {
            Ok(fit) => {
                scores.push(CandidateScore {
                    name: c.name.clone(),
                    checkpoint: c.key.checkpoint,
                    component: c.key.component,
                    subset: c.subset.clone(),
                    lambda: fit.lambda,
                    relative_efficiency: fit.relative_efficiency,
                });
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| fit.efficiency.score > b.efficiency.score)
                {
                    best = Some((i, fit));
                }
            }
            Err(TuningError::ConditionC3) => return Err(TuningError::ConditionC3),
            Err(e) => failed.push(format!("candidate {} not scored: {e}", c.name)),
        }
    }
    let (i, fit) = best
        .ok_or_else(|| TuningError::Invalid(format!("no candidate could be scored: {failed:?}")))?;
    let mut rep = report(record, &candidates[i], fit, scores, floor, provenance);
    rep.flags.extend(failed);
    Ok(rep)
}

/// Candidate for the extremes model with initial-stage subset `subset`:
/// `dhat` is recomputed from the recorded coefficients and costs come from
/// the declared cost model.
#[allow(clippy::too_many_arguments)]
fn extremes_candidate(
    model: &ExtremesModel,
    record: &PilotRecord,
    subset: &[usize],
    epsilon: f64,
    method: &GammaMethod,
    kernel: &KernelOptions,
    checkpoint: usize,
) -> Result<Candidate, TuningError> {
    let mask = model.subset_mask(Some(subset));
    let inside = mask.iter().filter(|m| **m).count();
    let factor_cost = if model.config.fallback_checkpoint {
        0.0
    } else {
        model.config.cost.factor_cost
    };
    let mut phi = Vec::with_capacity(record.len());
    let mut t1 = Vec::with_capacity(record.len());
    let mut t2 = Vec::with_capacity(record.len());
    for (i, aux) in record.aux.iter().enumerate() {
        if aux.len() != mask.len() + 1 {
            return Err(TuningError::Invalid(
                "pilot record lacks extremes coefficients".into(),
            ));
        }
        phi.push(model.dhat(&aux[1..], &mask));
        let (a, b) = model.split_costs(inside, aux[0] > 0.5);
        let before: f64 = record.stage_costs[i][..checkpoint].iter().sum();
        t1.push(before + a + factor_cost);
        t2.push(b);
    }
    let (gamma, log_u, epsilon1) = match method {
        GammaMethod::Standard {
            path: StandardPath::BoxCox { options, log_u },
        } => {
            let lu: Option<Vec<f64>> = log_u.then(|| record.u.iter().map(|u| u.ln()).collect());
            (
                gamma_boxcox(&phi, &record.distance, epsilon, lu.as_deref(), options)?,
                *log_u,
                None,
            )
        }
        GammaMethod::Conservative {
            epsilon1,
            min_acceptances,
        } => {
            let g = gamma_logistic(&phi, &record.distance, *epsilon1, *min_acceptances, kernel)?;
            (g.smoother, false, Some(g.epsilon1))
        }
        GammaMethod::Standard { .. } => {
            return Err(TuningError::Invalid(
                "subset selection needs the Box-Cox or conservative gamma".into(),
            ))
        }
    };
    let t2s = t2_smoother(&phi, &t2, T2Mode::Constant, kernel)?;
    Ok(Candidate {
        name: "dhat".into(),
        key: PhiKey::new(checkpoint, 0),
        phi,
        gamma,
        gamma_log_u: log_u,
        t2: t2s,
        t1_rows: t1,
        t2_rows: t2,
        subset: Some(subset.to_vec()),
        epsilon1,
    })
}

/// Greedy backwards selection of the initial-stage location subset: from
/// `start` (all locations by default) drop, one at a time, the location
/// whose removal gives the best estimated efficiency, down to three
/// locations. The best subset along the path is returned.
#[allow(clippy::too_many_arguments)]
pub fn backwards_select_subset(
    model: &ExtremesModel,
    record: &PilotRecord,
    epsilon: f64,
    method: &GammaMethod,
    kernel: &KernelOptions,
    floor: f64,
    provenance: Provenance,
    start: Option<Vec<usize>>,
) -> Result<TuningReport, TuningError> {
    let checkpoint = usize::from(model.config.fallback_checkpoint);
    let mut current = start.unwrap_or_else(|| (0..model.config.locations.len()).collect());
    current.sort_unstable();
    current.dedup();
    let first = extremes_candidate(model, record, &current, epsilon, method, kernel, checkpoint)?;
    let first_fit = first.score(record, floor)?;
    let mut path = vec![SelectionStep {
        removed: None,
        subset: current.clone(),
        lambda: first_fit.lambda,
        relative_efficiency: first_fit.relative_efficiency,
    }];
    let mut best = (first, first_fit);
    let mut flags = Vec::new();
    while current.len() > 3 {
        let mut round: Option<(usize, Candidate, LambdaFit)> = None;
        for (j, &loc) in current.iter().enumerate() {
            let trial: Vec<usize> = current.iter().copied().filter(|&l| l != loc).collect();
            let scored =
                extremes_candidate(model, record, &trial, epsilon, method, kernel, checkpoint)
                    .and_then(|c| c.score(record, floor).map(|f| (c, f)));
            match scored {
                Ok((c, f)) => {
                    if round
                        .as_ref()
                        .is_none_or(|r| f.efficiency.score > r.2.efficiency.score)
                    {
                        round = Some((j, c, f));
                    }
                }
                Err(e) => flags.push(format!("subset without location {loc} not scored: {e}")),
            }
        }
        let Some((j, c, f)) = round else { break };
        let loc = current.remove(j);
        path.push(SelectionStep {
            removed: Some(loc),
            subset: current.clone(),
            lambda: f.lambda,
            relative_efficiency: f.relative_efficiency,
        });
        if f.efficiency.score > best.1.efficiency.score {
            best = (c, f);
        }
    }
    let scores = path
        .iter()
        .map(|s| CandidateScore {
            name: "dhat".into(),
            checkpoint,
            component: 0,
            subset: Some(s.subset.clone()),
            lambda: s.lambda,
            relative_efficiency: s.relative_efficiency,
        })
        .collect();
    let (cand, fit) = best;
    let mut rep = report(record, &cand, fit, scores, floor, provenance);
    rep.selection_path = path;
    rep.flags.extend(flags);
    Ok(rep)
}
