//! Scalar maximisation: evaluate on a log-spaced grid, then refine the best
//! bracket by golden-section search in log space.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// `n` points from `lo` to `hi`, equally spaced on the log scale.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2, "invalid log grid");
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Maximises `f` on `[a, b]` assuming unimodality. Returns `(x, f(x))`.
pub fn golden_section_max(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol * (1.0 + c.abs() + d.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearch {
    pub x: f64,
    pub value: f64,
    /// Every `(x, f(x))` evaluated on the grid.
    pub grid: Vec<(f64, f64)>,
}

/// Grid search over `log_grid(lo, hi, n)` followed by golden-section
/// refinement between the neighbours of the best grid point. Fails with the
/// offending point if `f` is non-finite anywhere on the grid.
pub fn maximize_log_scale(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<GridSearch, (f64, f64)> {
    let xs = log_grid(lo, hi, n);
    let mut grid = Vec::with_capacity(n);
    for &x in &xs {
        let v = f(x);
        if !v.is_finite() {
            return Err((x, v));
        }
        grid.push((x, v));
    }
    let best = (0..n).fold(0, |b, i| if grid[i].1 > grid[b].1 { i } else { b });
    let lo_i = best.saturating_sub(1);
    let hi_i = (best + 1).min(n - 1);
    let (lx, fx) = golden_section_max(|t| f(t.exp()), xs[lo_i].ln(), xs[hi_i].ln(), 1e-10, 200);
    let (x, value) = if fx.is_finite() && fx > grid[best].1 {
        (lx.exp(), fx)
    } else {
        grid[best]
    };
    Ok(GridSearch { x, value, grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-4, 1e4, 41);
        assert_eq!(g.len(), 41);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[40] - 1e4).abs() < 1e-9);
        assert!((g[20] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_section_max(|x| -(x - 0.3) * (x - 0.3), -1.0, 2.0, 1e-12, 500);
        assert!((x - 0.3).abs() < 1e-6);
        assert!(v <= 0.0 && v > -1e-11);
    }

    #[test]
    fn log_scale_refinement() {
        let r = maximize_log_scale(|x| -(x.ln() - 2.5f64.ln()).powi(2), 1e-4, 1e4, 41).unwrap();
        assert!((r.x - 2.5).abs() < 1e-4);
        assert!(maximize_log_scale(|x| if x > 1.0 { f64::NAN } else { x }, 1e-4, 1e4, 41).is_err());
    }
}
