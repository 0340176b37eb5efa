//! Several stopping decisions. The policy is a product of per-checkpoint
//! probabilities; the efficiency estimate charges each cost segment with the
//! product of the probabilities applied before it.

use serde::{Deserialize, Serialize};

use super::efficiency::{optimal_alpha, search_lambda, Efficiency, StopProblem};
use super::{
    optimize_lambda, AlphaPolicy, AlphaRule, PhiKey, PilotRecord, Provenance, TuningError,
};
use crate::smoothers::{fit_positive_mean, KernelOptions, Smoother};

pub const DEFAULT_LEVEL_CAP: usize = 16;

const MAX_SWEEPS: usize = 500;
const MAX_ROUNDS: usize = 10;

/// Per row: `u`, an acceptance-probability estimate and the costs of the
/// `s + 1` segments separated by `s` stopping decisions.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiStopProblem {
    pub u: Vec<f64>,
    pub gamma: Vec<f64>,
    pub costs: Vec<Vec<f64>>,
}

impl MultiStopProblem {
    pub fn new(u: Vec<f64>, gamma: Vec<f64>, costs: Vec<Vec<f64>>) -> Result<Self, TuningError> {
        let n = u.len();
        if n == 0 || gamma.len() != n || costs.len() != n {
            return Err(TuningError::Invalid(
                "pilot columns must be nonempty and of equal length".into(),
            ));
        }
        let s = costs[0].len();
        if s == 0 || costs.iter().any(|c| c.len() != s) {
            return Err(TuningError::Invalid(
                "every row needs the same number of cost segments".into(),
            ));
        }
        if u.iter().any(|v| !(*v > 0.0 && v.is_finite()))
            || gamma.iter().any(|g| !(*g >= 0.0 && g.is_finite()))
        {
            return Err(TuningError::Invalid(
                "u must be positive and gamma non-negative".into(),
            ));
        }
        if costs
            .iter()
            .flatten()
            .any(|c| !(*c >= 0.0 && c.is_finite()))
        {
            return Err(TuningError::Invalid(
                "costs must be finite and non-negative".into(),
            ));
        }
        Ok(Self { u, gamma, costs })
    }

    /// Builds segments from per-stage costs, splitting after each of the
    /// (increasing) `checkpoints`.
    pub fn from_stages(
        u: Vec<f64>,
        gamma: Vec<f64>,
        stage_costs: &[Vec<f64>],
        checkpoints: &[usize],
    ) -> Result<Self, TuningError> {
        let costs = stage_costs
            .iter()
            .map(|c| segment_costs(c, checkpoints))
            .collect();
        Self::new(u, gamma, costs)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn decisions(&self) -> usize {
        self.costs[0].len() - 1
    }

    /// `alphas[row][k]` is the probability applied at decision `k`.
    pub fn efficiency(&self, alphas: &[Vec<f64>]) -> Efficiency {
        let mut w2 = 0.0;
        let mut t = 0.0;
        for i in 0..self.len() {
            let mut prod = 1.0;
            for (seg, c) in self.costs[i].iter().enumerate() {
                if seg > 0 {
                    prod *= alphas[i][seg - 1];
                }
                t += prod * c;
            }
            w2 += self.u[i] * self.u[i] * self.gamma[i] / prod;
        }
        Efficiency::new(w2 / self.len() as f64, t)
    }

    pub fn baseline(&self) -> Efficiency {
        self.efficiency(&vec![vec![1.0; self.decisions()]; self.len()])
    }
}

fn segment_costs(stage_costs: &[f64], checkpoints: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(checkpoints.len() + 1);
    let mut start = 0;
    for &c in checkpoints {
        out.push(stage_costs[start..=c].iter().sum());
        start = c + 1;
    }
    out.push(stage_costs[start..].iter().sum());
    out
}

/// Distinct values of a discrete statistic and each row's level index.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLevels {
    pub levels: Vec<f64>,
    pub index: Vec<usize>,
}

pub fn discretize(
    column: &[f64],
    checkpoint: usize,
    cap: usize,
) -> Result<DiscreteLevels, TuningError> {
    let mut levels = column.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() > cap {
        return Err(TuningError::TooManyLevels {
            checkpoint,
            levels: levels.len(),
            cap,
        });
    }
    let index = column
        .iter()
        .map(|v| levels.partition_point(|l| l.total_cmp(v).is_lt()))
        .collect();
    Ok(DiscreteLevels { levels, index })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFit {
    /// Per decision: tuned value of every level, or `None` if held fixed.
    pub values: Vec<Option<Vec<f64>>>,
    pub efficiency: Efficiency,
}

fn fill(alphas: &mut [Vec<f64>], levels: &[Option<&DiscreteLevels>], values: &[Option<Vec<f64>>]) {
    for (k, lv) in levels.iter().enumerate() {
        if let (Some(lv), Some(vals)) = (lv, &values[k]) {
            for (row, a) in alphas.iter_mut().enumerate() {
                a[k] = vals[lv.index[row]];
            }
        }
    }
}

/// Coordinate ascent over the per-level probabilities of the decisions with
/// `Some` levels; the others keep their values in `fixed` (`rows x s`).
/// Each coordinate update is exact: the objective `(A/a + B)(C a + D)` is
/// minimised at `a = sqrt(AD / BC)`.
pub fn optimize_discrete(
    problem: &MultiStopProblem,
    levels: &[Option<&DiscreteLevels>],
    fixed: &[Vec<f64>],
    floor: f64,
) -> DiscreteFit {
    let s = problem.decisions();
    assert_eq!(levels.len(), s, "one level spec per decision");
    let n = problem.len();
    let mut best: Option<DiscreteFit> = None;
    for start in [1.0_f64, 0.5, 0.1, 0.01] {
        let mut values: Vec<Option<Vec<f64>>> = levels
            .iter()
            .map(|l| l.map(|lv| vec![start.max(floor); lv.levels.len()]))
            .collect();
        let mut alphas = fixed.to_vec();
        fill(&mut alphas, levels, &values);
        for _ in 0..MAX_SWEEPS {
            let mut change: f64 = 0.0;
            for k in 0..s {
                let Some(lv) = levels[k] else { continue };
                for v in 0..lv.levels.len() {
                    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
                    for i in 0..n {
                        let row = &alphas[i];
                        let mine = lv.index[i] == v;
                        let other: f64 = (0..s)
                            .filter(|&j| !(mine && j == k))
                            .map(|j| row[j])
                            .product();
                        let w = problem.u[i] * problem.u[i] * problem.gamma[i] / other;
                        let mut prod = 1.0;
                        for (seg, cost) in problem.costs[i].iter().enumerate() {
                            if seg > 0 && !(mine && seg - 1 == k) {
                                prod *= row[seg - 1];
                            }
                            if mine && seg > k {
                                c += prod * cost;
                            } else {
                                d += prod * cost;
                            }
                        }
                        if mine {
                            a += w;
                        } else {
                            b += w;
                        }
                    }
                    let next = if a == 0.0 {
                        floor
                    } else if b * c == 0.0 {
                        1.0
                    } else {
                        (a * d / (b * c)).sqrt().clamp(floor, 1.0)
                    };
                    let vals = values[k].as_mut().expect("tuned decision");
                    change = change.max((next - vals[v]).abs());
                    vals[v] = next;
                    for (i, row) in alphas.iter_mut().enumerate() {
                        if lv.index[i] == v {
                            row[k] = next;
                        }
                    }
                }
            }
            if change < 1e-13 {
                break;
            }
        }
        let efficiency = problem.efficiency(&alphas);
        if best
            .as_ref()
            .is_none_or(|b| efficiency.score > b.efficiency.score)
        {
            best = Some(DiscreteFit { values, efficiency });
        }
    }
    best.expect("at least one start")
}

fn sorted_unique_checkpoints(keys: &[PhiKey]) -> Result<Vec<usize>, TuningError> {
    let mut cps: Vec<usize> = keys.iter().map(|k| k.checkpoint).collect();
    cps.sort_unstable();
    let n = cps.len();
    cps.dedup();
    if cps.len() != n {
        return Err(TuningError::Invalid(
            "at most one decision statistic per checkpoint".into(),
        ));
    }
    Ok(cps)
}

/// Joint numeric optimisation of `alpha_k(phi_k)` for discrete statistics.
/// `gamma[i]` is the acceptance-probability estimate for pilot row `i`.
pub fn tune_discrete_multistop(
    record: &PilotRecord,
    keys: &[PhiKey],
    gamma: &[f64],
    floor: f64,
    cap: usize,
) -> Result<(AlphaPolicy, DiscreteFit), TuningError> {
    if keys.is_empty() {
        return Err(TuningError::Invalid("no decision statistics given".into()));
    }
    let cps = sorted_unique_checkpoints(keys)?;
    let mut ordered = keys.to_vec();
    ordered.sort_by_key(|k| k.checkpoint);
    let levels = ordered
        .iter()
        .map(|k| discretize(&record.phi(*k)?, k.checkpoint, cap))
        .collect::<Result<Vec<_>, _>>()?;
    let problem =
        MultiStopProblem::from_stages(record.u.clone(), gamma.to_vec(), &record.stage_costs, &cps)?;
    let refs: Vec<Option<&DiscreteLevels>> = levels.iter().map(Some).collect();
    let fit = optimize_discrete(
        &problem,
        &refs,
        &vec![vec![1.0; cps.len()]; problem.len()],
        floor,
    );
    let mut rules = vec![AlphaRule::Always; cps[cps.len() - 1] + 1];
    for (j, k) in ordered.iter().enumerate() {
        rules[k.checkpoint] = AlphaRule::Table {
            component: k.component,
            levels: levels[j].levels.clone(),
            values: fit.values[j].clone().expect("tuned"),
        };
    }
    Ok((
        AlphaPolicy::new(rules, floor, Provenance::DiscreteOptimized),
        fit,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiStopFit {
    pub policy: AlphaPolicy,
    pub efficiency: Efficiency,
    pub baseline: Efficiency,
    pub single_stop_best: Efficiency,
    pub single_stop_label: String,
    pub rounds: usize,
    pub converged: bool,
    pub flags: Vec<String>,
}

/// State of the alternating optimisation.
#[derive(Clone)]
struct Iterate {
    discrete: Vec<Vec<f64>>,
    /// `None` means the continuous decision always continues.
    lambda: Option<f64>,
    zeta: Option<Smoother>,
    efficiency: Efficiency,
}

/// One continuous statistic `cont` (with `u` determined by it) plus discrete
/// statistics. The continuous probability takes the single-stop form with
/// `gamma` multiplied by a smoothed `E[1 / beta | phi]`, `beta` being the
/// product of the discrete probabilities; discrete probabilities and the
/// continuous rule are refitted alternately for at most ten rounds and the
/// best iterate is returned.
#[allow(clippy::too_many_arguments)]
pub fn tune_one_continuous_multistop(
    record: &PilotRecord,
    cont: PhiKey,
    discrete: &[PhiKey],
    gamma: &Smoother,
    gamma_log_u: bool,
    t2: &Smoother,
    floor: f64,
    cap: usize,
    provenance: Provenance,
    kernel: &KernelOptions,
) -> Result<MultiStopFit, TuningError> {
    if !record.rejection && !gamma_log_u {
        return Err(TuningError::ConditionC3);
    }
    let mut all = vec![cont];
    all.extend_from_slice(discrete);
    let cps = sorted_unique_checkpoints(&all)?;
    let n = record.len();
    let phi1 = record.phi(cont)?;
    let g_rows: Vec<f64> = (0..n)
        .map(|i| {
            if gamma_log_u {
                gamma.eval_with(phi1[i], Some(record.u[i].ln()))
            } else {
                gamma.eval(phi1[i])
            }
        })
        .collect();
    let t2_rows: Vec<f64> = phi1.iter().map(|&x| t2.eval(x)).collect();
    let pos = |cp: usize| cps.iter().position(|c| *c == cp).expect("known checkpoint");
    let pc = pos(cont.checkpoint);
    let disc_pos: Vec<usize> = discrete.iter().map(|k| pos(k.checkpoint)).collect();
    let levels = discrete
        .iter()
        .map(|k| discretize(&record.phi(*k)?, k.checkpoint, cap))
        .collect::<Result<Vec<_>, _>>()?;
    let problem =
        MultiStopProblem::from_stages(record.u.clone(), g_rows.clone(), &record.stage_costs, &cps)?;
    let s = cps.len();

    let cont_alphas = |lambda: Option<f64>, zeta: &Option<Smoother>| -> Vec<f64> {
        (0..n)
            .map(|i| match lambda {
                None => 1.0,
                Some(l) => {
                    let z = zeta.as_ref().map_or(1.0, |z| z.eval(phi1[i]));
                    optimal_alpha(l, record.u[i], g_rows[i] * z, t2_rows[i], floor)
                }
            })
            .collect()
    };
    let matrix = |disc: &[Vec<f64>], cont_a: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let mut row = vec![1.0; s];
                row[pc] = cont_a[i];
                for (j, &p) in disc_pos.iter().enumerate() {
                    row[p] = disc[j][levels[j].index[i]];
                }
                row
            })
            .collect()
    };
    let ones: Vec<Vec<f64>> = levels.iter().map(|l| vec![1.0; l.levels.len()]).collect();
    let baseline = problem.baseline();

    // Single-stop candidates.
    let single_cont = StopProblem::new(
        record.u.clone(),
        g_rows.iter().map(|g| g.clamp(0.0, 1.0)).collect(),
        t2_rows.clone(),
        record.t1(cont.checkpoint),
        record.t2(cont.checkpoint),
    )
    .and_then(|p| optimize_lambda(&p, floor))?;
    let mut best = Iterate {
        discrete: ones.clone(),
        lambda: Some(single_cont.lambda),
        zeta: None,
        efficiency: problem.efficiency(&matrix(
            &ones,
            &cont_alphas(Some(single_cont.lambda), &None),
        )),
    };
    let mut single_label = format!("continuous statistic at checkpoint {}", cont.checkpoint);
    for j in 0..discrete.len() {
        let mut spec: Vec<Option<&DiscreteLevels>> = vec![None; s];
        spec[disc_pos[j]] = Some(&levels[j]);
        let fit = optimize_discrete(&problem, &spec, &vec![vec![1.0; s]; n], floor);
        if fit.efficiency.score > best.efficiency.score {
            let mut disc = ones.clone();
            disc[j] = fit.values[disc_pos[j]].clone().expect("tuned");
            best = Iterate {
                discrete: disc,
                lambda: None,
                zeta: None,
                efficiency: fit.efficiency,
            };
            single_label = format!(
                "discrete statistic at checkpoint {}",
                discrete[j].checkpoint
            );
        }
    }
    let single_stop_best = best.efficiency;
    let mut current = best.clone();
    let mut flags = Vec::new();
    let mut converged = discrete.is_empty();
    let mut rounds = 0;
    while !converged && rounds < MAX_ROUNDS {
        rounds += 1;
        let previous = current.efficiency.score;
        // Continuous rule given the discrete probabilities.
        let zeta_rows: Vec<f64> = (0..n)
            .map(|i| {
                let beta: f64 = (0..discrete.len())
                    .map(|j| current.discrete[j][levels[j].index[i]])
                    .product();
                1.0 / beta
            })
            .collect();
        let varies = zeta_rows
            .iter()
            .any(|z| (z - zeta_rows[0]).abs() > 1e-12 * zeta_rows[0]);
        let zeta = if varies {
            match fit_positive_mean(&phi1, &zeta_rows, kernel) {
                Ok(z) => Some(z),
                Err(e) => {
                    flags.push(format!(
                        "round {rounds}: could not smooth 1/beta ({e}); ignored"
                    ));
                    None
                }
            }
        } else {
            None
        };
        let disc = current.discrete.clone();
        let fit = search_lambda(
            |l| problem.efficiency(&matrix(&disc, &cont_alphas(Some(l), &zeta))),
            baseline,
        )?;
        current.lambda = Some(fit.lambda);
        current.zeta = zeta;
        // Discrete probabilities given the continuous ones.
        let ca = cont_alphas(current.lambda, &current.zeta);
        let fixed = matrix(&ones, &ca);
        let mut spec: Vec<Option<&DiscreteLevels>> = vec![None; s];
        for (j, &p) in disc_pos.iter().enumerate() {
            spec[p] = Some(&levels[j]);
        }
        let dfit = optimize_discrete(&problem, &spec, &fixed, floor);
        for (j, &p) in disc_pos.iter().enumerate() {
            current.discrete[j] = dfit.values[p].clone().expect("tuned");
        }
        current.efficiency = dfit.efficiency;
        if current.efficiency.score > best.efficiency.score {
            best = current.clone();
        }
        if (current.efficiency.score - previous).abs() <= 1e-9 * previous {
            converged = true;
        }
    }
    if !converged {
        flags.push(format!(
            "no convergence after {MAX_ROUNDS} rounds; best iterate returned"
        ));
    }
    let mut rules = vec![AlphaRule::Always; cps[s - 1] + 1];
    for (j, k) in discrete.iter().enumerate() {
        rules[k.checkpoint] = AlphaRule::Table {
            component: k.component,
            levels: levels[j].levels.clone(),
            values: best.discrete[j].clone(),
        };
    }
    if let Some(lambda) = best.lambda {
        rules[cont.checkpoint] = AlphaRule::Optimal {
            component: cont.component,
            lambda,
            gamma: gamma.clone(),
            t2: t2.clone(),
            gamma_log_u,
            zeta: best.zeta.clone(),
        };
    }
    Ok(MultiStopFit {
        policy: AlphaPolicy::new(rules, floor, provenance),
        efficiency: best.efficiency,
        baseline,
        single_stop_best,
        single_stop_label: single_label,
        rounds,
        converged,
        flags,
    })
}
