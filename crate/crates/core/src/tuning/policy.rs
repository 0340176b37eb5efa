use serde::{Deserialize, Serialize};

use crate::sampler::ContinuationPolicy;
use crate::smoothers::Smoother;

pub const DEFAULT_ALPHA_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AdHoc,
    Standard,
    Conservative,
    DiscreteOptimized,
}

/// Continuation probability at one checkpoint, before clamping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum AlphaRule {
    Always,
    Constant {
        value: f64,
    },
    /// `values[j]` for the first `j` with `phi <= thresholds[j]`, otherwise
    /// the last value; `values` has one more entry than `thresholds`.
    Steps {
        component: usize,
        thresholds: Vec<f64>,
        values: Vec<f64>,
    },
    /// Value of the nearest level.
    Table {
        component: usize,
        levels: Vec<f64>,
        values: Vec<f64>,
    },
    /// `lambda u sqrt(gamma(phi) zeta(phi) / t2(phi))`.
    Optimal {
        component: usize,
        lambda: f64,
        gamma: Smoother,
        t2: Smoother,
        /// Evaluate `gamma` with `ln u` as second covariate.
        #[serde(default)]
        gamma_log_u: bool,
        /// Multiplier accounting for later stopping decisions.
        #[serde(default)]
        zeta: Option<Smoother>,
    },
}

impl AlphaRule {
    pub fn steps(component: usize, thresholds: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            thresholds.len() + 1,
            "steps need one more value than thresholds"
        );
        AlphaRule::Steps {
            component,
            thresholds,
            values,
        }
    }

    fn raw(&self, u: f64, phi: &[f64]) -> f64 {
        match self {
            AlphaRule::Always => 1.0,
            AlphaRule::Constant { value } => *value,
            AlphaRule::Steps {
                component,
                thresholds,
                values,
            } => {
                let x = phi[*component];
                let j = thresholds
                    .iter()
                    .position(|t| x <= *t)
                    .unwrap_or(thresholds.len());
                values[j]
            }
            AlphaRule::Table {
                component,
                levels,
                values,
            } => {
                let x = phi[*component];
                let j = (0..levels.len())
                    .min_by(|&a, &b| (levels[a] - x).abs().total_cmp(&(levels[b] - x).abs()))
                    .expect("nonempty table");
                values[j]
            }
            AlphaRule::Optimal {
                component,
                lambda,
                gamma,
                t2,
                gamma_log_u,
                zeta,
            } => {
                let x = phi[*component];
                let mut g = if *gamma_log_u {
                    gamma.eval_with(x, Some(u.ln()))
                } else {
                    gamma.eval(x)
                };
                if let Some(z) = zeta {
                    g *= z.eval(x);
                }
                let t = t2.eval(x);
                if !(t > 0.0) {
                    return 1.0;
                }
                lambda * u * (g / t).sqrt()
            }
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            AlphaRule::Optimal { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }
}

/// Product-form continuation policy: one rule per checkpoint, every output
/// clamped to `[floor, 1]`. Checkpoints without a rule always continue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaPolicy {
    pub rules: Vec<AlphaRule>,
    pub floor: f64,
    pub provenance: Provenance,
}

impl AlphaPolicy {
    pub fn new(rules: Vec<AlphaRule>, floor: f64, provenance: Provenance) -> Self {
        assert!(
            floor > 0.0 && floor <= 1.0,
            "alpha floor must lie in (0, 1]"
        );
        Self {
            rules,
            floor,
            provenance,
        }
    }

    /// Single rule at `checkpoint`, continuing everywhere else.
    pub fn single(checkpoint: usize, rule: AlphaRule, floor: f64, provenance: Provenance) -> Self {
        let mut rules = vec![AlphaRule::Always; checkpoint + 1];
        rules[checkpoint] = rule;
        Self::new(rules, floor, provenance)
    }

    /// `alpha = 0.1` for `phi <= 1000`, else 1, on component 0 of checkpoint 0.
    pub fn ad_hoc_threshold(threshold: f64, low: f64, floor: f64) -> Self {
        Self::single(
            0,
            AlphaRule::steps(0, vec![threshold], vec![low, 1.0]),
            floor,
            Provenance::AdHoc,
        )
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.rules.iter().filter_map(AlphaRule::lambda).collect()
    }

    pub fn rule(&self, checkpoint: usize) -> &AlphaRule {
        self.rules.get(checkpoint).unwrap_or(&AlphaRule::Always)
    }

    pub fn eval(&self, checkpoint: usize, u: f64, phi: &[f64]) -> f64 {
        let v = self.rule(checkpoint).raw(u, phi);
        if v.is_nan() {
            return 1.0;
        }
        v.clamp(self.floor, 1.0)
    }
}

impl ContinuationPolicy for AlphaPolicy {
    fn alpha(&self, checkpoint: usize, _theta: &[f64], u: f64, phi: &[f64]) -> f64 {
        self.eval(checkpoint, u, phi)
    }
}
