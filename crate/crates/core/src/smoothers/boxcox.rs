//! `P(d <= eps | dhat)` from local linear regressions of Box-Cox transformed
//! `d` on `dhat`, each using only points with nearby `dhat`, interpolated
//! monotonically across window centres.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{finite_range, Pchip, Smoother, SmootherError, SmootherKind};

pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [-1.0, -0.5, 0.0, 0.25, 0.5, 1.0];

/// Quantile levels used for default window centres.
const CENTER_LEVELS: [f64; 13] = [
    0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxCoxOptions {
    pub lambda_grid: Vec<f64>,
    /// Window centres; low quantiles and deciles of `dhat` when `None`.
    pub window_centers: Option<Vec<f64>>,
    /// Full window width; twice the average decile gap when `None`.
    pub window_width: Option<f64>,
    pub min_points: usize,
}

impl Default for BoxCoxOptions {
    fn default() -> Self {
        Self {
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            window_centers: None,
            window_width: None,
            min_points: 30,
        }
    }
}

pub fn box_cox(y: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        y.ln()
    } else {
        (y.powf(lambda) - 1.0) / lambda
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Regression in one window: `box_cox(d) = coef[0] + coef[1] (dhat - center)
/// [+ coef[2] covariate] + N(0, sigma^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub center: f64,
    pub lambda: f64,
    pub coef: Vec<f64>,
    pub uses_slope: bool,
    pub uses_covariate: bool,
    pub sigma: f64,
    pub n_points: usize,
    pub widened: bool,
}

impl WindowFit {
    pub fn mean(&self, x: f64, covariate: Option<f64>) -> f64 {
        let mut m = self.coef[0];
        let mut j = 1;
        if self.uses_slope {
            m += self.coef[j] * (x - self.center);
            j += 1;
        }
        if self.uses_covariate {
            m += self.coef[j] * covariate.unwrap_or(0.0);
        }
        m
    }

    pub fn tail_prob(&self, epsilon: f64, x: f64, covariate: Option<f64>) -> f64 {
        if epsilon == f64::INFINITY {
            return 1.0;
        }
        if epsilon <= 0.0 && self.lambda <= 0.0 {
            return 0.0;
        }
        let t = box_cox(epsilon.max(0.0), self.lambda);
        let mu = self.mean(x, covariate);
        if self.sigma > 0.0 {
            normal_cdf((t - mu) / self.sigma)
        } else if t >= mu {
            1.0
        } else {
            0.0
        }
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(y, 1e-12).ok()?;
    let rss = (y - x * &beta).norm_squared();
    Some((beta, rss))
}

fn fit_window(
    idx: &[usize],
    dhat: &[f64],
    d: &[f64],
    cov: Option<&[f64]>,
    center: f64,
    grid: &[f64],
    widened: bool,
) -> Option<WindowFit> {
    let n = idx.len();
    let xs: Vec<f64> = idx.iter().map(|&i| dhat[i] - center).collect();
    let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let uses_slope = spread > 0.0;
    let uses_covariate = cov.is_some_and(|c| {
        let v: Vec<f64> = idx.iter().map(|&i| c[i]).collect();
        v.iter().any(|x| *x != v[0])
    });
    let p = 1 + usize::from(uses_slope) + usize::from(uses_covariate);
    let mut design = DMatrix::zeros(n, p);
    for (r, &i) in idx.iter().enumerate() {
        design[(r, 0)] = 1.0;
        let mut j = 1;
        if uses_slope {
            design[(r, j)] = xs[r];
            j += 1;
        }
        if uses_covariate {
            design[(r, j)] = cov.expect("covariate present")[i];
        }
    }
    let log_jac: f64 = idx.iter().map(|&i| d[i].ln()).sum();
    let mut best: Option<(f64, WindowFit)> = None;
    for &lambda in grid {
        let y = DVector::from_iterator(n, idx.iter().map(|&i| box_cox(d[i], lambda)));
        if y.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let Some((beta, rss)) = least_squares(&design, &y) else {
            continue;
        };
        let scale = y.norm_squared() + 1e-300;
        let exact = rss <= 1e-24 * scale;
        let ll = if exact {
            f64::INFINITY
        } else {
            -0.5 * n as f64 * (rss / n as f64).ln() + (lambda - 1.0) * log_jac
        };
        let sigma = if exact || n <= p {
            0.0
        } else {
            (rss / (n - p) as f64).sqrt()
        };
        let fit = WindowFit {
            center,
            lambda,
            coef: beta.iter().cloned().collect(),
            uses_slope,
            uses_covariate,
            sigma,
            n_points: n,
            widened,
        };
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, fit));
        }
    }
    best.map(|b| b.1)
}

/// Tail-probability smoother `P(d <= epsilon | dhat [, covariate])`.
pub fn fit_tail_prob_boxcox(
    dhat: &[f64],
    d: &[f64],
    epsilon: f64,
    covariate: Option<&[f64]>,
    opts: &BoxCoxOptions,
) -> Result<Smoother, SmootherError> {
    let n = dhat.len();
    if d.len() != n || covariate.is_some_and(|c| c.len() != n) {
        return Err(SmootherError::InvalidInput("input lengths differ".into()));
    }
    if n < opts.min_points {
        return Err(SmootherError::InsufficientData {
            needed: opts.min_points,
            got: n,
        });
    }
    if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(SmootherError::InvalidInput(
            "distances must be positive and finite".into(),
        ));
    }
    if !(epsilon >= 0.0) {
        return Err(SmootherError::InvalidInput(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    if opts.lambda_grid.is_empty() {
        return Err(SmootherError::InvalidInput(
            "empty Box-Cox lambda grid".into(),
        ));
    }
    let (lo, hi) = finite_range(dhat)?;
    if let Some(c) = covariate {
        finite_range(c)?;
    }
    let mut sorted = dhat.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut centers = match &opts.window_centers {
        Some(c) => c.clone(),
        None => CENTER_LEVELS
            .iter()
            .map(|&p| quantile(&sorted, p))
            .collect(),
    };
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    let width = opts.window_width.unwrap_or(2.0 * (hi - lo) / 10.0);
    let mut flags = Vec::new();
    let mut windows = Vec::new();
    for &c in &centers {
        let mut idx: Vec<usize> = (0..n)
            .filter(|&i| (dhat[i] - c).abs() <= 0.5 * width)
            .collect();
        let widened = idx.len() < opts.min_points;
        if widened {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                (dhat[a] - c)
                    .abs()
                    .total_cmp(&(dhat[b] - c).abs())
                    .then(a.cmp(&b))
            });
            idx = order[..opts.min_points].to_vec();
            idx.sort_unstable();
            flags.push(format!(
                "window at {c} widened to {} points",
                opts.min_points
            ));
        }
        if let Some(w) = fit_window(&idx, dhat, d, covariate, c, &opts.lambda_grid, widened) {
            windows.push(w);
        }
    }
    if windows.is_empty() {
        return Err(SmootherError::InvalidInput(
            "no window could be fitted".into(),
        ));
    }
    let cov_mid = covariate.map(|c| {
        let mut s = c.to_vec();
        s.sort_by(f64::total_cmp);
        quantile(&s, 0.5)
    });
    let xs: Vec<f64> = windows.iter().map(|w| w.center).collect();
    let ys: Vec<f64> = windows
        .iter()
        .map(|w| w.tail_prob(epsilon, w.center, cov_mid))
        .collect();
    let mut s = Smoother::from_curve(
        SmootherKind::BoxCoxWindow,
        None,
        lo,
        hi,
        Pchip::new(xs, ys)?,
    );
    s.flags = flags;
    s.epsilon = Some(epsilon);
    if covariate.is_some() {
        s.windows = Some(windows);
    } else {
        s.windows = None;
        s.flags.push(format!(
            "lambdas by window: {:?}",
            windows.iter().map(|w| w.lambda).collect::<Vec<_>>()
        ));
    }
    Ok(s)
}
