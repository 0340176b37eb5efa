//! Observed data, model construction and the densities of a run.

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use lazyabc::density::{Density, DensityPair, GammaDensity, TruncatedGaussianMixture, UniformBox};
use lazyabc::io;
use lazyabc::models::schlather::{schlather_simulate, FactorMethod};
use lazyabc::models::{ExtremesModel, SirConfig, SirModel};
use lazyabc::rng::{derived_seed, StreamId, Streams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExtremesSpec, Loaded, ModelSpec, PriorSpec, ProposalSpec, RandomLocations};
use crate::workspace::DirLock;

pub enum Model {
    Sir(SirModel),
    Extremes(ExtremesModel),
}

/// Runs `$body` with `$m` bound to the concrete model.
macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            $crate::data::Model::Sir($m) => $body,
            $crate::data::Model::Extremes($m) => $body,
        }
    };
}
pub(crate) use with_model;

fn sir_observed(data_dir: &Path) -> Result<u64> {
    let path = data_dir.join("observed.csv");
    let (_, rows) = io::read_table(&path, true).with_context(|| {
        format!("no observed count in the config and none readable at {}; run `lazyabc simulate-data` first", path.display())
    })?;
    let v = rows
        .first()
        .and_then(|r| r.first())
        .copied()
        .ok_or_else(|| anyhow!("{} has no rows", path.display()))?;
    if !(v >= 0.0) || v.fract() != 0.0 {
        bail!(
            "{}: observed count {v} is not a non-negative integer",
            path.display()
        );
    }
    Ok(v as u64)
}

fn read_locations(data_dir: &Path) -> Result<Vec<[f64; 2]>> {
    let path = data_dir.join("locations.csv");
    let (_, rows) = io::read_table(&path, true).with_context(|| {
        format!(
            "reading {}; run `lazyabc simulate-data` first",
            path.display()
        )
    })?;
    rows.iter()
        .map(|r| match r.as_slice() {
            [x, y] => Ok([*x, *y]),
            _ => Err(anyhow!("{}: expected two columns", path.display())),
        })
        .collect()
}

fn locations_of(spec: &ExtremesSpec, data_dir: &Path) -> Result<Vec<[f64; 2]>> {
    if !spec.config.locations.is_empty() {
        return Ok(spec.config.locations.clone());
    }
    if data_dir.join("locations.csv").exists() {
        return read_locations(data_dir);
    }
    match &spec.random_locations {
        Some(r) => Ok(generate_locations(r)),
        None => bail!("extremes model needs locations, random_locations or a locations.csv in the data directory"),
    }
}

fn generate_locations(r: &RandomLocations) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    (0..r.count)
        .map(|_| {
            [
                rng.random_range(0..=r.extent) as f64,
                rng.random_range(0..=r.extent) as f64,
            ]
        })
        .collect()
}

pub fn build_model(l: &Loaded) -> Result<Model> {
    match &l.config.model {
        ModelSpec::Sir(c) => {
            let mut c = c.clone();
            if c.observed.is_none() {
                c.observed = Some(sir_observed(&l.data_dir)?);
            }
            Ok(Model::Sir(SirModel::new(c)?))
        }
        ModelSpec::Extremes(spec) => {
            let mut c = spec.config.clone();
            c.locations = locations_of(spec, &l.data_dir)?;
            if c.observed.is_none() {
                let path = l.data_dir.join("observed.csv");
                let (_, rows) = io::read_table(&path, true).with_context(|| {
                    format!(
                        "reading {}; run `lazyabc simulate-data` first",
                        path.display()
                    )
                })?;
                c.observed = Some(rows);
            }
            Ok(Model::Extremes(ExtremesModel::new(c)?))
        }
    }
}

pub fn prior(spec: &PriorSpec) -> Result<Arc<dyn Density>> {
    Ok(match spec {
        PriorSpec::Gamma { shape, rate } => Arc::new(GammaDensity::new(*shape, *rate)?),
        PriorSpec::UniformBox { lower, upper } => {
            Arc::new(UniformBox::new(lower.clone(), upper.clone())?)
        }
    })
}

pub fn densities(l: &Loaded) -> Result<DensityPair> {
    let pi = prior(&l.config.prior)?;
    match &l.config.proposal {
        ProposalSpec::Prior => Ok(DensityPair::prior_only(pi)),
        ProposalSpec::Mixture {
            run,
            components,
            variance_scale,
        } => {
            let PriorSpec::UniformBox { lower, upper } = &l.config.prior else {
                bail!("a mixture proposal is truncated to a uniform-box prior");
            };
            let set = io::read_sample_set(&run.join("samples.csv")).with_context(|| {
                format!(
                    "reading the run that seeds the mixture proposal ({})",
                    run.display()
                )
            })?;
            let support = UniformBox::new(lower.clone(), upper.clone())?;
            let g = mixture_from_samples(&set, *components, *variance_scale, support)?;
            Ok(DensityPair::with_proposal(pi, Arc::new(g))?)
        }
    }
}

/// Kernels at the `components` accepted draws of smallest distance, with
/// `variance_scale` times the weighted variance of all accepted draws.
pub fn mixture_from_samples(
    set: &lazyabc::sampler::SampleSet,
    components: usize,
    variance_scale: f64,
    support: UniformBox,
) -> Result<TruncatedGaussianMixture> {
    let mut acc: Vec<(f64, usize)> = set
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.weight > 0.0)
        .map(|(i, s)| (s.distance.unwrap_or(f64::INFINITY), i))
        .collect();
    if acc.len() < 2 {
        bail!("the source run has fewer than two accepted draws");
    }
    acc.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let d = set.theta_dim();
    let wsum: f64 = acc.iter().map(|&(_, i)| set.samples[i].weight).sum();
    let mut variances = Vec::with_capacity(d);
    for j in 0..d {
        let mean = acc
            .iter()
            .map(|&(_, i)| set.samples[i].weight * set.samples[i].theta[j])
            .sum::<f64>()
            / wsum;
        let var = acc
            .iter()
            .map(|&(_, i)| set.samples[i].weight * (set.samples[i].theta[j] - mean).powi(2))
            .sum::<f64>()
            / wsum;
        variances.push(variance_scale * var);
    }
    let means = acc
        .iter()
        .take(components.max(1))
        .map(|&(_, i)| set.samples[i].theta.clone())
        .collect();
    Ok(TruncatedGaussianMixture::new(means, variances, support)?)
}

#[derive(Serialize)]
struct DataProvenance<'a> {
    model: &'a str,
    truth: &'a [f64],
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    factor_method: Option<FactorMethod>,
}

#[derive(Serialize)]
struct MarginLocation {
    location: usize,
    /// Kolmogorov-Smirnov distance of `exp(-1/y)` from uniform.
    ks: f64,
    mean_transformed: f64,
}

#[derive(Serialize)]
struct MarginReport {
    years: usize,
    locations: Vec<MarginLocation>,
    max_ks: f64,
    /// One-sample 1% critical value `1.628 / sqrt(years)`.
    ks_critical_1pct: f64,
    exceedances: usize,
}

fn ks_uniform(mut z: Vec<f64>) -> f64 {
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
        .fold(0.0, f64::max)
}

fn margin_report(data: &[Vec<f64>]) -> MarginReport {
    let years = data.len();
    let d = data.first().map_or(0, Vec::len);
    let locations: Vec<MarginLocation> = (0..d)
        .map(|j| {
            let z: Vec<f64> = data.iter().map(|r| (-1.0 / r[j]).exp()).collect();
            MarginLocation {
                location: j,
                mean_transformed: z.iter().sum::<f64>() / years as f64,
                ks: ks_uniform(z),
            }
        })
        .collect();
    let crit = 1.628 / (years as f64).sqrt();
    MarginReport {
        years,
        max_ks: locations.iter().map(|m| m.ks).fold(0.0, f64::max),
        exceedances: locations.iter().filter(|m| m.ks > crit).count(),
        ks_critical_1pct: crit,
        locations,
    }
}

/// Simulates the observed dataset at the configured true parameters.
pub fn simulate_data(l: &Loaded, force: bool) -> Result<Vec<String>> {
    let truth = l
        .config
        .truth
        .as_deref()
        .ok_or_else(|| anyhow!("simulate-data needs `truth` in the config"))?;
    let seed = l.config.data_seed.unwrap_or(l.config.seed);
    let dir = &l.data_dir;
    let _lock = DirLock::acquire(dir)?;
    let observed = dir.join("observed.csv");
    if observed.exists() && !force {
        bail!("{} exists; pass --force to overwrite", observed.display());
    }
    let streams = Streams::new(derived_seed(seed, 0xda7a));
    let mut written = vec![observed.display().to_string()];
    match &l.config.model {
        ModelSpec::Sir(c) => {
            let [r0] = truth else {
                bail!("SIR truth is a single value R0");
            };
            let model = SirModel::new(SirConfig {
                observed: Some(0),
                ..c.clone()
            })?;
            let st = model.simulate_unstaged(
                *r0,
                &mut streams.rng(0, StreamId::Stage(0)),
                &mut streams.rng(0, StreamId::Stage(1)),
            );
            let y = st.sampled_recovered.expect("completed simulation") as f64;
            io::write_table(&observed, &["recovered".into()], &[vec![y]])?;
            io::write_json(
                &dir.join("provenance.json"),
                &DataProvenance {
                    model: "sir",
                    truth,
                    seed,
                    factor_method: None,
                },
            )?;
        }
        ModelSpec::Extremes(spec) => {
            let [c, nu] = truth else {
                bail!("extremes truth is (c, nu)");
            };
            // Random locations are regenerated rather than read back from a
            // possibly stale locations.csv.
            let locations = match (&spec.random_locations, spec.config.locations.is_empty()) {
                (Some(r), true) => generate_locations(r),
                _ => locations_of(&spec, dir)?,
            };
            let mut rng = streams.rng(0, StreamId::Stage(0));
            let (data, method) = schlather_simulate(
                *c,
                *nu,
                &locations,
                spec.config.years,
                &spec.config.simulation,
                &mut rng,
            )?;
            let header: Vec<String> = (0..locations.len()).map(|j| format!("loc_{j}")).collect();
            io::write_table(&observed, &header, &data)?;
            let loc_rows: Vec<Vec<f64>> = locations.iter().map(|p| p.to_vec()).collect();
            let loc_path = dir.join("locations.csv");
            io::write_table(&loc_path, &["x".into(), "y".into()], &loc_rows)?;
            written.push(loc_path.display().to_string());
            let margins = dir.join("margins.json");
            io::write_json(&margins, &margin_report(&data))?;
            written.push(margins.display().to_string());
            io::write_json(
                &dir.join("provenance.json"),
                &DataProvenance {
                    model: "extremes",
                    truth,
                    seed,
                    factor_method: Some(method),
                },
            )?;
        }
    }
    written.push(dir.join("provenance.json").display().to_string());
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_exact_grid_is_small() {
        let z: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_uniform(z) - 0.005).abs() < 1e-12);
    }
}
