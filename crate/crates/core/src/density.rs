//! Prior and importance densities over parameter space.

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("invalid density parameters: {0}")]
    InvalidParameters(String),
    #[error("importance density vanishes at a point where the prior is positive: theta = {0:?}")]
    ProposalSupport(Vec<f64>),
    #[error("importance ratio pi/g overflows at theta = {0:?} (log ratio {1})")]
    RatioOverflow(Vec<f64>, f64),
}

/// A density that can be evaluated (on the log scale) and sampled.
pub trait Density: Send + Sync + Debug {
    fn dim(&self) -> usize;
    /// Log-density; `-inf` outside the support.
    fn ln_density(&self, theta: &[f64]) -> f64;
    /// Draw a point of the support.
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Gamma(shape, rate) on the positive half-line.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GammaDensity {
    pub shape: f64,
    pub rate: f64,
}

impl GammaDensity {
    pub fn new(shape: f64, rate: f64) -> Result<Self, DensityError> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(DensityError::InvalidParameters(format!(
                "gamma shape {shape} rate {rate}"
            )));
        }
        Ok(Self { shape, rate })
    }
}

impl Density for GammaDensity {
    fn dim(&self) -> usize {
        1
    }

    fn ln_density(&self, theta: &[f64]) -> f64 {
        let x = theta[0];
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * x.ln() - self.rate * x + self.shape * self.rate.ln()
            - ln_gamma(self.shape)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let g = Gamma::new(self.shape, 1.0 / self.rate).expect("validated gamma parameters");
        loop {
            let x: f64 = g.sample(rng);
            if x > 0.0 {
                return vec![x];
            }
        }
    }
}

/// Uniform density on an axis-aligned box.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct UniformBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl UniformBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DensityError> {
        if lower.len() != upper.len()
            || lower.is_empty()
            || lower
                .iter()
                .zip(&upper)
                .any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite())
        {
            return Err(DensityError::InvalidParameters(format!(
                "uniform box {lower:?} .. {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.lower.len()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| x >= l && x <= u)
    }

    fn ln_volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l).ln())
            .sum()
    }
}

impl Density for UniformBox {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn ln_density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            -self.ln_volume()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect()
    }
}

/// Finitely supported density, mainly for exact enumeration studies.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DiscreteDensity {
    pub points: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl DiscreteDensity {
    pub fn new(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self, DensityError> {
        let total: f64 = probs.iter().sum();
        if points.is_empty()
            || points.len() != probs.len()
            || probs.iter().any(|p| !(*p > 0.0))
            || (total - 1.0).abs() > 1e-12
        {
            return Err(DensityError::InvalidParameters(
                "discrete density needs positive probabilities summing to one".into(),
            ));
        }
        Ok(Self { points, probs })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self, DensityError> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }
}

impl Density for DiscreteDensity {
    fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn ln_density(&self, theta: &[f64]) -> f64 {
        self.points
            .iter()
            .position(|p| p.as_slice() == theta)
            .map_or(f64::NEG_INFINITY, |i| self.probs[i].ln())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let v: f64 = rng.random();
        let mut acc = 0.0;
        for (p, prob) in self.points.iter().zip(&self.probs) {
            acc += prob;
            if v < acc {
                return p.clone();
            }
        }
        self.points.last().cloned().expect("non-empty support")
    }
}

/// Equal-weight mixture of axis-aligned Gaussians truncated to a box.
///
/// Used as an importance density built from a previous run's better draws.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TruncatedGaussianMixture {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    pub support: UniformBox,
    ln_norm: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl TruncatedGaussianMixture {
    pub fn new(
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
        support: UniformBox,
    ) -> Result<Self, DensityError> {
        let d = support.dim();
        if means.is_empty()
            || variances.len() != d
            || means.iter().any(|m| m.len() != d)
            || variances.iter().any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(DensityError::InvalidParameters(
                "mixture needs means and positive variances matching the support dimension".into(),
            ));
        }
        let k = means.len() as f64;
        let mass: f64 = means
            .iter()
            .map(|m| {
                (0..d)
                    .map(|j| {
                        let s = variances[j].sqrt();
                        std_normal_cdf((support.upper[j] - m[j]) / s)
                            - std_normal_cdf((support.lower[j] - m[j]) / s)
                    })
                    .product::<f64>()
            })
            .sum::<f64>()
            / k;
        if !(mass > 0.0) {
            return Err(DensityError::InvalidParameters(
                "mixture places no mass on the support".into(),
            ));
        }
        Ok(Self {
            means,
            variances,
            support,
            ln_norm: mass.ln(),
        })
    }
}

impl Density for TruncatedGaussianMixture {
    fn dim(&self) -> usize {
        self.support.dim()
    }

    fn ln_density(&self, theta: &[f64]) -> f64 {
        if !self.support.contains(theta) {
            return f64::NEG_INFINITY;
        }
        let ln_comp: Vec<f64> = self
            .means
            .iter()
            .map(|m| {
                theta
                    .iter()
                    .zip(m)
                    .zip(&self.variances)
                    .map(|((x, mu), v)| {
                        -0.5 * (x - mu) * (x - mu) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
                    })
                    .sum::<f64>()
            })
            .collect();
        let max = ln_comp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        let sum: f64 = ln_comp.iter().map(|l| (l - max).exp()).sum();
        max + (sum / self.means.len() as f64).ln() - self.ln_norm
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        loop {
            let k = rng.random_range(0..self.means.len());
            let theta: Vec<f64> = self.means[k]
                .iter()
                .zip(&self.variances)
                .map(|(mu, v)| {
                    let z: f64 = StandardNormal.sample(rng);
                    mu + v.sqrt() * z
                })
                .collect();
            if self.support.contains(&theta) {
                return theta;
            }
        }
    }
}

/// Prior `pi` together with an importance density `g`.
///
/// A missing proposal means `g = pi`, in which case the ratio `u = pi/g` is
/// exactly one (rejection sampling).
#[derive(Clone, Debug)]
pub struct DensityPair {
    pub prior: Arc<dyn Density>,
    pub proposal: Option<Arc<dyn Density>>,
}

impl DensityPair {
    pub fn prior_only(prior: Arc<dyn Density>) -> Self {
        Self {
            prior,
            proposal: None,
        }
    }

    pub fn with_proposal(
        prior: Arc<dyn Density>,
        proposal: Arc<dyn Density>,
    ) -> Result<Self, DensityError> {
        if prior.dim() != proposal.dim() {
            return Err(DensityError::InvalidParameters(format!(
                "prior dimension {} differs from proposal dimension {}",
                prior.dim(),
                proposal.dim()
            )));
        }
        Ok(Self {
            prior,
            proposal: Some(proposal),
        })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn is_rejection(&self) -> bool {
        self.proposal.is_none()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match &self.proposal {
            Some(g) => g.sample(rng),
            None => self.prior.sample(rng),
        }
    }

    /// Importance ratio `pi(theta) / g(theta)`.
    pub fn ratio(&self, theta: &[f64]) -> Result<f64, DensityError> {
        let Some(g) = &self.proposal else {
            return Ok(1.0);
        };
        let lp = self.prior.ln_density(theta);
        if lp == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let lg = g.ln_density(theta);
        if lg == f64::NEG_INFINITY {
            return Err(DensityError::ProposalSupport(theta.to_vec()));
        }
        let lr = lp - lg;
        let r = lr.exp();
        if !r.is_finite() {
            return Err(DensityError::RatioOverflow(theta.to_vec(), lr));
        }
        Ok(r)
    }
}
