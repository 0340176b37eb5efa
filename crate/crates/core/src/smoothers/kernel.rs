//! Local-linear local-likelihood fits with a Gaussian kernel: logistic,
//! binomial with known trials, and log-link quasi-Poisson for positive
//! means. Bandwidth defaults to the leave-one-out likelihood optimum over a
//! log-spaced grid.

use serde::{Deserialize, Serialize};

use super::{finite_range, knot_grid, Pchip, Smoother, SmootherError, SmootherKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelOptions {
    /// Fixed bandwidth; chosen by leave-one-out when `None`.
    pub bandwidth: Option<f64>,
    /// Number of candidate bandwidths.
    pub grid_size: usize,
    /// Candidate bandwidths span these fractions of the covariate range.
    pub grid_lo: f64,
    pub grid_hi: f64,
    /// Leave-one-out scoring uses at most this many evaluation points.
    pub max_eval_points: usize,
    pub knots: usize,
    pub min_points: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            bandwidth: None,
            grid_size: 15,
            grid_lo: 0.005,
            grid_hi: 1.0,
            max_eval_points: 400,
            knots: 256,
            min_points: 20,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Family {
    Binomial(f64),
    Poisson,
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl Family {
    /// `(log-likelihood term, mean, variance)` at linear predictor `eta`.
    fn terms(self, y: f64, eta: f64) -> (f64, f64, f64) {
        match self {
            Family::Binomial(m) => {
                let p = sigmoid(eta);
                (y * eta - m * softplus(eta), m * p, m * p * (1.0 - p))
            }
            Family::Poisson => {
                let mu = eta.min(700.0).exp();
                (y * eta - mu, mu, mu)
            }
        }
    }

    /// Negative log-likelihood of `y` under a prediction on the link scale.
    fn loss(self, y: f64, eta: f64) -> f64 {
        match self {
            Family::Binomial(m) => -(y * eta - m * softplus(eta)),
            Family::Poisson => eta.min(700.0).exp() - y * eta,
        }
    }
}

struct LocalFit {
    a: f64,
    var_a: f64,
}

/// Maximises the kernel-weighted log-likelihood of `a + b (x - x0)` with a
/// vanishing ridge toward `(a0, 0)` that keeps separated data finite.
#[allow(clippy::too_many_arguments)]
fn local_fit(
    xs: &[f64],
    ys: &[f64],
    fam: Family,
    x0: f64,
    h: f64,
    exclude: Option<usize>,
    a0: f64,
    want_var: bool,
) -> LocalFit {
    let n = xs.len();
    let mut w = vec![0.0; n];
    let mut sw = 0.0;
    for i in 0..n {
        if Some(i) == exclude {
            continue;
        }
        let z = (xs[i] - x0) / h;
        if z.abs() < 8.0 {
            w[i] = (-0.5 * z * z).exp();
            sw += w[i];
        }
    }
    let kappa = 1e-8 * sw.max(1e-300);
    let h2 = h * h;
    let objective = |a: f64, b: f64| -> f64 {
        let mut o = 0.0;
        for i in 0..n {
            if w[i] > 0.0 {
                o += w[i] * fam.terms(ys[i], a + b * (xs[i] - x0)).0;
            }
        }
        o - 0.5 * kappa * ((a - a0).powi(2) + h2 * b * b)
    };
    let (mut a, mut b) = (a0, 0.0);
    let mut obj = objective(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb) = (-kappa * (a - a0), -kappa * h2 * b);
        let (mut haa, mut hab, mut hbb) = (kappa, 0.0, kappa * h2);
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let dx = xs[i] - x0;
            let (_, mu, v) = fam.terms(ys[i], a + b * dx);
            let r = w[i] * (ys[i] - mu);
            ga += r;
            gb += r * dx;
            let wv = w[i] * v;
            haa += wv;
            hab += wv * dx;
            hbb += wv * dx * dx;
        }
        let det = haa * hbb - hab * hab;
        let (sa, sb) = if det > 0.0 && det.is_finite() {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga / haa, 0.0)
        };
        let mut t = 1.0;
        let mut next = objective(a + sa, b + sb);
        while !(next >= obj - 1e-12 * obj.abs()) && t > 1e-10 {
            t *= 0.5;
            next = objective(a + t * sa, b + t * sb);
        }
        a += t * sa;
        b += t * sb;
        obj = next;
        if (t * sa).abs() + (t * sb * h).abs() < 1e-10 {
            break;
        }
    }
    let mut var_a = f64::NAN;
    if want_var {
        // sandwich H^-1 M H^-1 with model-based middle term
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        let (mut f0, mut f1, mut f2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let dx = xs[i] - x0;
            let (_, _, v) = fam.terms(ys[i], a + b * dx);
            let ww = w[i] * w[i] * v;
            m0 += ww;
            m1 += ww * dx;
            m2 += ww * dx * dx;
            let wv = w[i] * v;
            f0 += wv;
            f1 += wv * dx;
            f2 += wv * dx * dx;
        }
        let det = f0 * f2 - f1 * f1;
        if det > 0.0 {
            // first row of H^-1
            let (r0, r1) = (f2 / det, -f1 / det);
            var_a = r0 * (r0 * m0 + r1 * m1) + r1 * (r0 * m1 + r1 * m2);
        } else if f0 > 0.0 {
            var_a = m0 / (f0 * f0);
        }
    }
    LocalFit { a, var_a }
}

fn eval_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        (0..n).collect()
    } else {
        (0..max).map(|k| k * n / max).collect()
    }
}

fn select_bandwidth(
    xs: &[f64],
    ys: &[f64],
    fam: Family,
    range: f64,
    a0: f64,
    opts: &KernelOptions,
) -> f64 {
    let k = opts.grid_size.max(1);
    let (l0, l1) = (opts.grid_lo.log10(), opts.grid_hi.log10());
    let idx = eval_indices(xs.len(), opts.max_eval_points);
    let mut best = (f64::INFINITY, range * opts.grid_hi);
    for j in 0..k {
        let frac = if k == 1 {
            l1
        } else {
            l0 + (l1 - l0) * j as f64 / (k - 1) as f64
        };
        let h = range * 10f64.powf(frac);
        let score: f64 = idx
            .iter()
            .map(|&i| {
                let fit = local_fit(xs, ys, fam, xs[i], h, Some(i), a0, false);
                fam.loss(ys[i], fit.a)
            })
            .sum();
        if score.is_finite() && score < best.0 {
            best = (score, h);
        }
    }
    best.1
}

fn fit(
    xs: &[f64],
    ys: &[f64],
    fam: Family,
    opts: &KernelOptions,
    with_interval: bool,
) -> Result<Smoother, SmootherError> {
    let n = xs.len();
    if n < opts.min_points {
        return Err(SmootherError::InsufficientData {
            needed: opts.min_points,
            got: n,
        });
    }
    if ys.len() != n {
        return Err(SmootherError::InvalidInput("x and y lengths differ".into()));
    }
    let (lo, hi) = finite_range(xs)?;
    let (kind, a0, degenerate) = match fam {
        Family::Binomial(m) => {
            let total: f64 = ys.iter().sum();
            let trials = m * n as f64;
            let rate = ((total + 1.0) / (trials + 2.0)).clamp(1e-12, 1.0 - 1e-12);
            let all_same = total == 0.0 || total == trials;
            let raw = if all_same { rate } else { total / trials };
            (
                SmootherKind::Logistic,
                (raw / (1.0 - raw)).ln(),
                all_same.then_some(rate),
            )
        }
        Family::Poisson => {
            let mean = ys.iter().sum::<f64>() / n as f64;
            (SmootherKind::LogLink, mean.ln(), None)
        }
    };
    if let Some(rate) = degenerate {
        let mut s = Smoother::constant(kind, rate, lo, hi);
        s.flags
            .push("all responses identical; constant fit at the clamped empirical rate".into());
        return Ok(s);
    }
    if !(hi > lo) {
        let value = match fam {
            Family::Binomial(_) => sigmoid(a0),
            Family::Poisson => a0.exp(),
        };
        let mut s = Smoother::constant(kind, value, lo, hi);
        s.flags
            .push("single covariate value; constant fit at the mean".into());
        return Ok(s);
    }
    let h = match opts.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => {
            return Err(SmootherError::InvalidInput(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => select_bandwidth(xs, ys, fam, hi - lo, a0, opts),
    };
    let knots = knot_grid(lo, hi, opts.knots.max(2));
    let fits: Vec<LocalFit> = knots
        .iter()
        .map(|&k| local_fit(xs, ys, fam, k, h, None, a0, with_interval))
        .collect();
    let stored: Vec<f64> = fits
        .iter()
        .map(|f| match fam {
            Family::Binomial(_) => sigmoid(f.a),
            Family::Poisson => f.a,
        })
        .collect();
    let mut s = Smoother::from_curve(kind, Some(h), lo, hi, Pchip::new(knots.clone(), stored)?);
    if with_interval {
        let (mut l, mut u) = (Vec::new(), Vec::new());
        for f in &fits {
            let se = if f.var_a.is_finite() {
                f.var_a.max(0.0).sqrt()
            } else {
                f64::INFINITY
            };
            l.push(sigmoid(f.a - 1.959_963_984_540_054 * se));
            u.push(sigmoid(f.a + 1.959_963_984_540_054 * se));
        }
        s.interval = Some((Pchip::new(knots.clone(), l)?, Pchip::new(knots, u)?));
    }
    Ok(s)
}

/// Kernel logistic regression of binary `z` on `x`.
pub fn fit_kernel_logistic(
    x: &[f64],
    z: &[f64],
    opts: &KernelOptions,
) -> Result<Smoother, SmootherError> {
    if z.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(SmootherError::InvalidInput(
            "indicators must be 0 or 1".into(),
        ));
    }
    fit(x, z, Family::Binomial(1.0), opts, false)
}

/// Kernel binomial regression of `successes` out of `trials` on `x`, with a
/// pointwise 95% interval.
pub fn fit_binomial_mean(
    x: &[f64],
    successes: &[f64],
    trials: u64,
    opts: &KernelOptions,
) -> Result<Smoother, SmootherError> {
    if trials == 0 {
        return Err(SmootherError::InvalidInput(
            "trials must be positive".into(),
        ));
    }
    let m = trials as f64;
    if successes
        .iter()
        .any(|s| !(*s >= 0.0 && *s <= m) || s.fract() != 0.0)
    {
        return Err(SmootherError::InvalidInput(format!(
            "successes must be integers in [0, {trials}]"
        )));
    }
    fit(x, successes, Family::Binomial(m), opts, true)
}

/// Kernel estimate of a positive conditional mean through a log link.
pub fn fit_positive_mean(
    x: &[f64],
    y: &[f64],
    opts: &KernelOptions,
) -> Result<Smoother, SmootherError> {
    if y.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(SmootherError::InvalidInput(
            "responses must be positive and finite".into(),
        ));
    }
    fit(x, y, Family::Poisson, opts, false)
}
