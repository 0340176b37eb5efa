use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PhiKey, TuningError};
use crate::density::DensityPair;
use crate::io::{self, float_or_string, IoError};
use crate::models::StagedModel;
use crate::sampler::{run_abc_is_capture, RunOptions, SampleSet};

#[derive(Clone, Debug)]
pub struct PilotOptions {
    pub run: RunOptions,
    pub min_iterations: usize,
}

impl Default for PilotOptions {
    fn default() -> Self {
        Self {
            run: RunOptions::default(),
            min_iterations: 100,
        }
    }
}

/// Per-iteration log of a pilot ABC-IS run. Failed iterations are left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotRecord {
    pub theta: Vec<Vec<f64>>,
    /// `prior / proposal` at `theta`.
    pub u: Vec<f64>,
    /// `phis[row][checkpoint]` is the decision-statistic vector.
    pub phis: Vec<Vec<Vec<f64>>>,
    pub stage_costs: Vec<Vec<f64>>,
    pub distance: Vec<f64>,
    pub aux: Vec<Vec<f64>>,
    pub decision_names: Vec<Vec<String>>,
    pub aux_names: Vec<String>,
    #[serde(with = "float_or_string")]
    pub epsilon: f64,
    /// Whether the proposal equals the prior, so `u` is constant.
    pub rejection: bool,
}

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    theta_dim: usize,
    stage_count: usize,
    decision_names: Vec<Vec<String>>,
    aux_names: Vec<String>,
    #[serde(with = "float_or_string")]
    epsilon: f64,
    rejection: bool,
    rows: usize,
}

/// Runs ABC-IS for `n` iterations, capturing everything tuning needs. The
/// returned sample set can later be combined with the main run.
pub fn run_pilot<M: StagedModel>(
    densities: &DensityPair,
    model: &M,
    n: usize,
    epsilon: f64,
    base_seed: u64,
    opts: &PilotOptions,
) -> Result<(SampleSet, PilotRecord), TuningError> {
    if n < opts.min_iterations {
        return Err(TuningError::InsufficientPilot(format!(
            "{n} iterations requested, at least {} required",
            opts.min_iterations
        )));
    }
    let (set, captured) = run_abc_is_capture(densities, n, model, epsilon, base_seed, &opts.run)?;
    let mut rec = PilotRecord {
        theta: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        phis: Vec::with_capacity(n),
        stage_costs: Vec::with_capacity(n),
        distance: Vec::with_capacity(n),
        aux: Vec::with_capacity(n),
        decision_names: (0..model.checkpoint_count())
            .map(|k| model.decision_names(k))
            .collect(),
        aux_names: model.aux_names(),
        epsilon,
        rejection: densities.is_rejection(),
    };
    let mut dropped = 0;
    for c in captured {
        let Some(d) = c.distance.filter(|_| !c.failed) else {
            dropped += 1;
            continue;
        };
        rec.theta.push(c.theta);
        rec.u.push(c.u);
        rec.phis.push(c.phis);
        rec.stage_costs.push(c.stage_costs);
        rec.distance.push(d);
        rec.aux.push(c.aux);
    }
    if dropped > 0 {
        log::warn!("pilot run: {dropped} failed iterations left out of the record");
    }
    Ok((set, rec))
}

impl PilotRecord {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn checkpoint_count(&self) -> usize {
        self.decision_names.len()
    }

    pub fn stage_count(&self) -> usize {
        self.stage_costs
            .first()
            .map_or(self.checkpoint_count() + 1, Vec::len)
    }

    pub fn phi(&self, key: PhiKey) -> Result<Vec<f64>, TuningError> {
        let ok = key.checkpoint < self.checkpoint_count()
            && self.decision_names[key.checkpoint].len() > key.component;
        if !ok {
            return Err(TuningError::Invalid(format!(
                "no decision statistic {} at checkpoint {}",
                key.component, key.checkpoint
            )));
        }
        Ok(self
            .phis
            .iter()
            .map(|p| p[key.checkpoint][key.component])
            .collect())
    }

    pub fn phi_name(&self, key: PhiKey) -> String {
        self.decision_names
            .get(key.checkpoint)
            .and_then(|n| n.get(key.component))
            .cloned()
            .unwrap_or_else(|| format!("phi_{}_{}", key.checkpoint, key.component))
    }

    /// Cost of stages up to and including `checkpoint`.
    pub fn t1(&self, checkpoint: usize) -> Vec<f64> {
        self.stage_costs
            .iter()
            .map(|c| c[..=checkpoint].iter().sum())
            .collect()
    }

    /// Cost of the stages after `checkpoint`.
    pub fn t2(&self, checkpoint: usize) -> Vec<f64> {
        self.stage_costs
            .iter()
            .map(|c| c[checkpoint + 1..].iter().sum())
            .collect()
    }

    pub fn accepted(&self, epsilon: f64) -> Vec<bool> {
        self.distance.iter().map(|d| *d <= epsilon).collect()
    }

    pub fn accepted_count(&self, epsilon: f64) -> usize {
        self.distance.iter().filter(|d| **d <= epsilon).count()
    }

    pub fn aux_column(&self, j: usize) -> Result<Vec<f64>, TuningError> {
        if self.aux.iter().any(|a| a.len() <= j) {
            return Err(TuningError::Invalid(format!(
                "auxiliary column {j} missing"
            )));
        }
        Ok(self.aux.iter().map(|a| a[j]).collect())
    }

    /// CSV with one row per iteration plus a JSON sidecar with names.
    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let p = self.theta.first().map_or(0, Vec::len);
        let k = self.stage_count();
        let mut header: Vec<String> = (0..p).map(|j| format!("theta_{j}")).collect();
        header.push("u".into());
        for (c, names) in self.decision_names.iter().enumerate() {
            header.extend(names.iter().map(|n| format!("phi{c}_{n}")));
        }
        header.extend((0..k).map(|j| format!("cost_{j}")));
        header.push("distance".into());
        header.extend(self.aux_names.iter().map(|n| format!("aux_{n}")));
        let rows: Vec<Vec<f64>> = (0..self.len())
            .map(|i| {
                let mut r = self.theta[i].clone();
                r.push(self.u[i]);
                for phi in &self.phis[i] {
                    r.extend(phi);
                }
                r.extend(&self.stage_costs[i]);
                r.push(self.distance[i]);
                r.extend(&self.aux[i]);
                r
            })
            .collect();
        io::write_table(path, &header, &rows)?;
        let meta = RecordMeta {
            theta_dim: p,
            stage_count: k,
            decision_names: self.decision_names.clone(),
            aux_names: self.aux_names.clone(),
            epsilon: self.epsilon,
            rejection: self.rejection,
            rows: self.len(),
        };
        io::write_json(&path.with_extension("json"), &meta)
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let meta: RecordMeta = io::read_json(&path.with_extension("json"))?;
        let (_, rows) = io::read_table(path, true)?;
        let phi_dims: Vec<usize> = meta.decision_names.iter().map(Vec::len).collect();
        let width = meta.theta_dim
            + 1
            + phi_dims.iter().sum::<usize>()
            + meta.stage_count
            + 1
            + meta.aux_names.len();
        if rows.len() != meta.rows || rows.iter().any(|r| r.len() != width) {
            return Err(IoError::Format {
                path: path.display().to_string(),
                reason: "pilot record shape disagrees with its sidecar".into(),
            });
        }
        let mut rec = PilotRecord {
            theta: Vec::new(),
            u: Vec::new(),
            phis: Vec::new(),
            stage_costs: Vec::new(),
            distance: Vec::new(),
            aux: Vec::new(),
            decision_names: meta.decision_names,
            aux_names: meta.aux_names,
            epsilon: meta.epsilon,
            rejection: meta.rejection,
        };
        for r in rows {
            let mut at = 0;
            let mut take = |n: usize| {
                let s = r[at..at + n].to_vec();
                at += n;
                s
            };
            rec.theta.push(take(meta.theta_dim));
            rec.u.push(take(1)[0]);
            rec.phis.push(phi_dims.iter().map(|&d| take(d)).collect());
            rec.stage_costs.push(take(meta.stage_count));
            rec.distance.push(take(1)[0]);
            rec.aux.push(take(rec.aux_names.len()));
        }
        Ok(rec)
    }
}
