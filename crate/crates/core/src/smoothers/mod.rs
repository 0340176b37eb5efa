//! One-dimensional conditional estimators used by tuning.
//!
//! Every fit is stored as values on a knot grid spanning the training range
//! and evaluated by monotone cubic interpolation; outside the range the end
//! value is returned and the evaluation is flagged as extrapolation.

mod boxcox;
mod kernel;
mod pchip;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boxcox::{
    box_cox, fit_tail_prob_boxcox, normal_cdf, BoxCoxOptions, WindowFit, DEFAULT_LAMBDA_GRID,
};
pub use kernel::{fit_binomial_mean, fit_kernel_logistic, fit_positive_mean, KernelOptions};
pub use pchip::Pchip;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmootherError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmootherKind {
    /// Probability in `[0, 1]`.
    Logistic,
    /// Strictly positive mean.
    LogLink,
    /// Tail probability from windowed Box-Cox regressions.
    BoxCoxWindow,
    /// Plain monotone interpolant.
    Interpolant,
}

/// Value together with whether it came from outside the training range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub extrapolated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoother {
    pub kind: SmootherKind,
    pub bandwidth: Option<f64>,
    pub x_min: f64,
    pub x_max: f64,
    /// Interpolant on the stored scale (log scale for `LogLink`).
    curve: Pchip,
    /// Pointwise 95% interval on the natural scale, if available.
    interval: Option<(Pchip, Pchip)>,
    /// Per-window fits when a second covariate enters the Box-Cox fit.
    windows: Option<Vec<WindowFit>>,
    epsilon: Option<f64>,
    /// Fitting notes such as degenerate inputs or widened windows.
    pub flags: Vec<String>,
}

impl Smoother {
    fn from_curve(
        kind: SmootherKind,
        bandwidth: Option<f64>,
        x_min: f64,
        x_max: f64,
        curve: Pchip,
    ) -> Self {
        Self {
            kind,
            bandwidth,
            x_min,
            x_max,
            curve,
            interval: None,
            windows: None,
            epsilon: None,
            flags: Vec::new(),
        }
    }

    /// Constant smoother on `[x_min, x_max]`.
    pub fn constant(kind: SmootherKind, value: f64, x_min: f64, x_max: f64) -> Self {
        let stored = if kind == SmootherKind::LogLink {
            value.ln()
        } else {
            value
        };
        let curve = Pchip::new(vec![x_min], vec![stored]).expect("finite constant");
        Self::from_curve(kind, None, x_min, x_max, curve)
    }

    /// Shape-preserving interpolant through `(xs, ys)`.
    pub fn monotone_interpolate(xs: &[f64], ys: &[f64]) -> Result<Self, SmootherError> {
        let curve = Pchip::new(xs.to_vec(), ys.to_vec())?;
        Ok(Self::from_curve(
            SmootherKind::Interpolant,
            None,
            curve.lower(),
            curve.upper(),
            curve,
        ))
    }

    /// Interpolant through `(xs, ys)` given on the natural scale, finished as
    /// `kind` (probabilities clamped to `[0, 1]`, log-link values stored on
    /// the log scale).
    pub fn from_points(kind: SmootherKind, xs: &[f64], ys: &[f64]) -> Result<Self, SmootherError> {
        let stored: Vec<f64> = match kind {
            SmootherKind::LogLink => {
                if ys.iter().any(|v| !(*v > 0.0)) {
                    return Err(SmootherError::InvalidInput(
                        "log-link values must be positive".into(),
                    ));
                }
                ys.iter().map(|v| v.ln()).collect()
            }
            _ => ys.to_vec(),
        };
        let curve = Pchip::new(xs.to_vec(), stored)?;
        Ok(Self::from_curve(
            kind,
            None,
            curve.lower(),
            curve.upper(),
            curve,
        ))
    }

    pub fn is_extrapolation(&self, x: f64) -> bool {
        !(x >= self.x_min && x <= self.x_max)
    }

    fn finish(&self, stored: f64) -> f64 {
        match self.kind {
            SmootherKind::LogLink => stored.exp().max(f64::MIN_POSITIVE),
            SmootherKind::Logistic | SmootherKind::BoxCoxWindow => stored.clamp(0.0, 1.0),
            SmootherKind::Interpolant => stored,
        }
    }

    /// Fitted value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.finish(self.curve.eval(x))
    }

    /// Fitted value at `x` with a second covariate, for Box-Cox fits that
    /// included one. Other smoothers ignore the covariate.
    pub fn eval_with(&self, x: f64, covariate: Option<f64>) -> f64 {
        match (&self.windows, covariate, self.epsilon) {
            (Some(w), Some(c), Some(eps)) => {
                let ys: Vec<f64> = w
                    .iter()
                    .map(|f| f.tail_prob(eps, f.center, Some(c)))
                    .collect();
                let xs: Vec<f64> = w.iter().map(|f| f.center).collect();
                match Pchip::new(xs, ys) {
                    Ok(p) => p.eval(x).clamp(0.0, 1.0),
                    Err(_) => self.eval(x),
                }
            }
            _ => self.eval(x),
        }
    }

    pub fn evaluate(&self, x: f64) -> Evaluation {
        Evaluation {
            value: self.eval(x),
            extrapolated: self.is_extrapolation(x),
        }
    }

    pub fn has_covariate(&self) -> bool {
        self.windows.is_some()
    }

    /// Pointwise 95% interval, when the fit provides one.
    pub fn interval(&self, x: f64) -> Option<(f64, f64)> {
        self.interval
            .as_ref()
            .map(|(lo, hi)| (lo.eval(x), hi.eval(x)))
    }

    pub fn knots(&self) -> &[f64] {
        self.curve.xs()
    }

    pub fn windows(&self) -> Option<&[WindowFit]> {
        self.windows.as_deref()
    }

    /// `(x, value)` on `n` evenly spaced points of the training range.
    pub fn grid(&self, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let x = self.x_min + (self.x_max - self.x_min) * i as f64 / (n - 1) as f64;
                (x, self.eval(x))
            })
            .collect()
    }
}

/// Evenly spaced knots over `[lo, hi]` (a single knot if the range is empty).
pub(crate) fn knot_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

pub(crate) fn finite_range(xs: &[f64]) -> Result<(f64, f64), SmootherError> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(SmootherError::InvalidInput(
            "non-finite covariate value".into(),
        ));
    }
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_smoother_flags_outside_range() {
        let s = Smoother::constant(SmootherKind::LogLink, 2.0, 0.0, 1.0);
        assert!((s.eval(0.5) - 2.0).abs() < 1e-15);
        assert!(!s.evaluate(1.0).extrapolated);
        assert!(s.evaluate(1.5).extrapolated);
        assert!(s.evaluate(-0.1).extrapolated);
    }

    #[test]
    fn interpolate_two_points() {
        let s = Smoother::monotone_interpolate(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        let v = s.eval(0.5);
        assert!((0.0..=1.0).contains(&v));
        assert!(Smoother::monotone_interpolate(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }
}
