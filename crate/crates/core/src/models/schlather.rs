//! Schlather max-stable process on a finite set of planar locations.
//!
//! Each year is `max_i s_i max(0, U_i(x))` where `s_i = 1 / (mu xi_i)` for
//! unit-rate Poisson arrivals `xi_i` and `U_i` are independent Gaussian
//! vectors with Whittle-Matérn correlation. Margins are unit Fréchet.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matern::matern_unchecked;
use super::ModelError;

/// `E[max(0, U)]` for a standard normal `U`.
pub const MU: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorMethod {
    /// Cholesky factor.
    Direct,
    /// Eigendecomposition with negative eigenvalues clipped to zero.
    Fallback,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SchlatherSettings {
    /// Stop adding spectral points once `s * tau` is below the smallest
    /// running maximum.
    pub tau: f64,
    /// The direct method is declared failed when a Cholesky pivot falls
    /// below this value.
    pub pivot_tolerance: f64,
    /// Hard cap on spectral points per year.
    pub max_points: usize,
}

impl Default for SchlatherSettings {
    fn default() -> Self {
        Self {
            tau: 5.0,
            pivot_tolerance: 0.0,
            max_points: 100_000,
        }
    }
}

/// Linear map from independent normals to correlated Gaussian values at
/// every location. Coincident locations share one row.
#[derive(Clone, Debug)]
pub struct GaussianFactor {
    pub method: FactorMethod,
    /// For each location, its row in `factor`.
    pub unique_index: Vec<usize>,
    pub factor: DMatrix<f64>,
}

/// Distinct locations and the map from each input location to them.
pub fn dedup_locations(locations: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut unique: Vec<[f64; 2]> = Vec::new();
    let mut index = Vec::with_capacity(locations.len());
    for loc in locations {
        match unique.iter().position(|u| u == loc) {
            Some(k) => index.push(k),
            None => {
                index.push(unique.len());
                unique.push(*loc);
            }
        }
    }
    (unique, index)
}

fn check_parameters(c: f64, nu: f64) -> Result<(), ModelError> {
    if !(c > 0.0 && c.is_finite() && nu > 0.0 && nu.is_finite()) {
        return Err(ModelError::Parameter {
            theta: vec![c, nu],
            reason: "range and smoothness must be positive and finite".into(),
        });
    }
    Ok(())
}

/// Whittle-Matérn correlation matrix of the given locations.
pub fn correlation_matrix(
    locations: &[[f64; 2]],
    c: f64,
    nu: f64,
) -> Result<DMatrix<f64>, ModelError> {
    check_parameters(c, nu)?;
    let n = locations.len();
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let h = (locations[i][0] - locations[j][0]).hypot(locations[i][1] - locations[j][1]);
            let r = matern_unchecked(h / c, nu);
            m[(i, j)] = r;
            m[(j, i)] = r;
        }
    }
    Ok(m)
}

/// Cholesky factor, or `None` if the direct method fails.
pub fn direct_factor(sigma: &DMatrix<f64>, pivot_tolerance: f64) -> Option<DMatrix<f64>> {
    let chol = sigma.clone().cholesky()?;
    let l = chol.unpack();
    let ok = (0..l.nrows()).all(|j| {
        let p = l[(j, j)] * l[(j, j)];
        p.is_finite() && p > pivot_tolerance
    });
    ok.then_some(l)
}

/// Robust factor `Q diag(sqrt(max(lambda, 0)))`.
pub fn fallback_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Simulation {
            stage: 0,
            reason: "non-finite correlation matrix".into(),
        });
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let mut f = eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}

/// Attempts the direct method; on failure returns the correlation matrix so
/// the caller can decide when to pay for the fallback.
pub fn try_direct(
    locations: &[[f64; 2]],
    c: f64,
    nu: f64,
    pivot_tolerance: f64,
) -> Result<Result<GaussianFactor, (DMatrix<f64>, Vec<usize>)>, ModelError> {
    let (unique, unique_index) = dedup_locations(locations);
    let sigma = correlation_matrix(&unique, c, nu)?;
    Ok(match direct_factor(&sigma, pivot_tolerance) {
        Some(factor) => Ok(GaussianFactor {
            method: FactorMethod::Direct,
            unique_index,
            factor,
        }),
        None => Err((sigma, unique_index)),
    })
}

/// Direct factor if possible, otherwise the fallback.
pub fn factorize(
    locations: &[[f64; 2]],
    c: f64,
    nu: f64,
    pivot_tolerance: f64,
) -> Result<GaussianFactor, ModelError> {
    match try_direct(locations, c, nu, pivot_tolerance)? {
        Ok(f) => Ok(f),
        Err((sigma, unique_index)) => Ok(GaussianFactor {
            method: FactorMethod::Fallback,
            unique_index,
            factor: fallback_factor(&sigma)?,
        }),
    }
}

/// One year of the process at every location.
pub fn simulate_year<R: Rng + ?Sized>(
    factor: &GaussianFactor,
    settings: &SchlatherSettings,
    rng: &mut R,
) -> Result<Vec<f64>, ModelError> {
    let n = factor.factor.nrows();
    let mut y = vec![0.0; n];
    let mut z = DVector::zeros(n);
    let mut xi = 0.0;
    for _ in 0..settings.max_points {
        let e: f64 = Exp1.sample(rng);
        xi += e;
        let s = 1.0 / (MU * xi);
        let floor = y.iter().cloned().fold(f64::INFINITY, f64::min);
        if s * settings.tau < floor {
            return Ok(factor.unique_index.iter().map(|&k| y[k]).collect());
        }
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let u = &factor.factor * &z;
        for (yk, uk) in y.iter_mut().zip(u.iter()) {
            let v = s * uk.max(0.0);
            if v > *yk {
                *yk = v;
            }
        }
    }
    Err(ModelError::Simulation {
        stage: 0,
        reason: format!(
            "spectral series did not terminate within {} points",
            settings.max_points
        ),
    })
}

/// `years x D` data matrix.
pub fn simulate_years<R: Rng + ?Sized>(
    factor: &GaussianFactor,
    years: usize,
    settings: &SchlatherSettings,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, ModelError> {
    (0..years)
        .map(|_| simulate_year(factor, settings, rng))
        .collect()
}

/// Builds the Gaussian factor and simulates `years` years.
pub fn schlather_simulate<R: Rng + ?Sized>(
    c: f64,
    nu: f64,
    locations: &[[f64; 2]],
    years: usize,
    settings: &SchlatherSettings,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, FactorMethod), ModelError> {
    let factor = factorize(locations, c, nu, settings.pivot_tolerance)?;
    let data = simulate_years(&factor, years, settings, rng)?;
    Ok((data, factor.method))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mu_is_half_normal_mean() {
        assert!((MU - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn coincident_locations_give_identical_columns() {
        let locs = [[0.0, 0.0], [0.0, 0.0], [3.0, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (data, method) =
            schlather_simulate(1.0, 1.0, &locs, 50, &SchlatherSettings::default(), &mut rng)
                .unwrap();
        assert_eq!(method, FactorMethod::Direct);
        for row in &data {
            assert_eq!(row[0], row[1]);
            assert!(row.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn huge_pivot_tolerance_forces_fallback() {
        let locs = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let settings = SchlatherSettings {
            pivot_tolerance: 2.0,
            ..SchlatherSettings::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (data, method) = schlather_simulate(1.0, 1.0, &locs, 5, &settings, &mut rng).unwrap();
        assert_eq!(method, FactorMethod::Fallback);
        assert_eq!(data.len(), 5);
    }

    #[test]
    fn fallback_reconstructs_psd_matrix() {
        let locs: Vec<[f64; 2]> = (0..6).map(|i| [i as f64, (i * i % 5) as f64]).collect();
        let sigma = correlation_matrix(&locs, 1.5, 0.8).unwrap();
        let f = fallback_factor(&sigma).unwrap();
        let back = &f * f.transpose();
        assert!((back - sigma).abs().max() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_fails_direct_method() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(direct_factor(&m, 0.0).is_none());
        let f = fallback_factor(&m).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(correlation_matrix(&[[0.0, 0.0]], 0.0, 1.0).is_err());
        assert!(correlation_matrix(&[[0.0, 0.0]], 1.0, f64::NAN).is_err());
    }
}
