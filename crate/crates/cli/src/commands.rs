//! pilot, tune, run, posthoc-epsilon and combine.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lazyabc::io;
use lazyabc::models::ExtremesModel;
use lazyabc::rng::derived_seed;
use lazyabc::sampler::{self, run_abc_is, run_lazy_abc, RunOptions, SampleSet};
use lazyabc::tuning::{
    backwards_select_subset, cell_acceptance_rates, estimate_t2, gamma_conservative,
    gamma_standard, run_pilot, select_configuration, tune_discrete_multistop,
    tune_one_continuous_multistop, AlphaPolicy, AlphaRule, Candidate, GammaMethod,
    MultiStopProblem, PhiKey, PilotOptions, PilotRecord, Provenance, StandardPath, T2Mode,
};
use serde::{Deserialize, Serialize};

use crate::config::{Loaded, TuningSpec};
use crate::data::{build_model, densities, with_model, Model};
use crate::workspace::{require, DirLock};

/// Label mixed into the base seed for the pilot run, so pilot and main run
/// streams never coincide.
pub const PILOT_SEED_LABEL: u64 = 1;

pub const SAMPLES: &str = "samples.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonChoice {
    #[serde(with = "io::float_or_string")]
    pub epsilon: f64,
    pub target_acceptances: Option<usize>,
    /// Pilot acceptances at `epsilon`.
    pub pilot_acceptances: usize,
}

/// What `tune` produced, read back by `run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub mode: String,
    #[serde(with = "io::float_or_string")]
    pub epsilon: f64,
    pub subset: Option<Vec<usize>>,
    pub estimated_relative_efficiency: Option<f64>,
    pub flags: Vec<String>,
}

/// Written next to every run's samples; paths are relative to the run
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub mode: String,
    #[serde(with = "io::float_or_string")]
    pub epsilon: f64,
    pub seed: u64,
    pub iterations: usize,
    pub pilot_dir: Option<String>,
    pub tune_dir: Option<String>,
    pub subset: Option<Vec<usize>>,
    pub estimated_relative_efficiency: Option<f64>,
    pub combined: Option<String>,
}

fn run_options(l: &Loaded) -> RunOptions {
    RunOptions {
        workers: l.config.workers,
        cost_mode: l.config.cost_mode,
        failure_budget: l.config.failure_budget,
    }
}

fn kth_smallest(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[k.clamp(1, v.len()) - 1]
}

pub fn pilot(l: &Loaded) -> Result<Vec<PathBuf>> {
    let dir = l.pilot_dir();
    let _lock = DirLock::acquire(&dir)?;
    let model = build_model(l)?;
    let dens = densities(l)?;
    let opts = PilotOptions {
        run: run_options(l),
        ..PilotOptions::default()
    };
    let seed = derived_seed(l.config.seed, PILOT_SEED_LABEL);
    let n = l.config.n_pilot;
    // Every pilot simulation completes, so the threshold only decides which
    // draws count as accepted and can be applied afterwards.
    let (set, mut record) =
        with_model!(&model, m => run_pilot(&dens, m, n, f64::INFINITY, seed, &opts))?;
    let epsilon = match (l.config.epsilon, l.config.target_acceptances) {
        (Some(e), _) => e,
        (None, Some(k)) => {
            let scaled = (k as f64 * n as f64 / l.config.n_main as f64).ceil() as usize;
            kth_smallest(&record.distance, scaled)
        }
        (None, None) => unreachable!("validated"),
    };
    let set = if epsilon < f64::INFINITY {
        sampler::posthoc_epsilon(&set, epsilon)?
    } else {
        set
    };
    record.epsilon = epsilon;
    let choice = EpsilonChoice {
        epsilon,
        target_acceptances: l.config.target_acceptances,
        pilot_acceptances: record.accepted_count(epsilon),
    };
    let samples = dir.join(SAMPLES);
    io::write_sample_set(&samples, &set)?;
    let rec = dir.join("record.csv");
    record.write(&rec)?;
    let eps = dir.join("epsilon.json");
    io::write_json(&eps, &choice)?;
    Ok(vec![samples, rec, eps])
}

fn read_choice(l: &Loaded) -> Result<EpsilonChoice> {
    let path = l.pilot_dir().join("epsilon.json");
    require(&path, "run `lazyabc pilot` with this config first")?;
    Ok(io::read_json(&path)?)
}

fn run_epsilon(l: &Loaded) -> Result<f64> {
    match l.config.epsilon {
        Some(e) => Ok(e),
        None => Ok(read_choice(l)
            .context("epsilon is set by target_acceptances, which is resolved by the pilot run")?
            .epsilon),
    }
}

fn read_record(l: &Loaded) -> Result<PilotRecord> {
    let path = l.pilot_dir().join("record.csv");
    require(
        &path,
        "tuning needs a pilot; run `lazyabc pilot` with this config first",
    )?;
    Ok(PilotRecord::read(&path)?)
}

fn gamma_log_u(path: &StandardPath) -> bool {
    matches!(path, StandardPath::BoxCox { log_u: true, .. })
}

fn sorted_checkpoints(keys: &[PhiKey]) -> Vec<usize> {
    let mut c: Vec<usize> = keys.iter().map(|k| k.checkpoint).collect();
    c.sort_unstable();
    c.dedup();
    c
}

fn extremes(model: &Model) -> Result<&ExtremesModel> {
    match model {
        Model::Extremes(m) => Ok(m),
        Model::Sir(_) => bail!("location subset selection needs the extremes model"),
    }
}

/// Candidate on a recorded statistic.
#[allow(clippy::too_many_arguments)]
fn single_stop(
    l: &Loaded,
    record: &PilotRecord,
    key: PhiKey,
    gamma: lazyabc::smoothers::Smoother,
    log_u: bool,
    t2: T2Mode,
    epsilon1: Option<f64>,
    provenance: Provenance,
    dir: &Path,
) -> Result<TuneSummary> {
    let t2 = estimate_t2(record, key, t2, &l.config.kernel)?;
    let mut cand = Candidate::from_record(record, key, gamma, log_u, t2)?;
    cand.epsilon1 = epsilon1;
    let report = select_configuration(record, &[cand], l.config.alpha_floor, provenance)?;
    report.write(dir)?;
    Ok(TuneSummary {
        mode: l.config.tuning.name().into(),
        epsilon: record.epsilon,
        subset: None,
        estimated_relative_efficiency: Some(report.relative_efficiency),
        flags: report.flags,
    })
}

fn subset_selection(
    l: &Loaded,
    model: &Model,
    record: &PilotRecord,
    method: GammaMethod,
    provenance: Provenance,
    dir: &Path,
) -> Result<TuneSummary> {
    let m = extremes(model)?;
    let report = backwards_select_subset(
        m,
        record,
        record.epsilon,
        &method,
        &l.config.kernel,
        l.config.alpha_floor,
        provenance,
        None,
    )?;
    report.write(dir)?;
    Ok(TuneSummary {
        mode: l.config.tuning.name().into(),
        epsilon: record.epsilon,
        subset: report.subset.clone(),
        estimated_relative_efficiency: Some(report.relative_efficiency),
        flags: report.flags,
    })
}

pub fn tune(l: &Loaded) -> Result<Vec<PathBuf>> {
    let dir = l.tune_dir();
    let kernel = &l.config.kernel;
    let floor = l.config.alpha_floor;
    if matches!(l.config.tuning, TuningSpec::None) {
        bail!("tuning mode \"none\" runs standard ABC-IS; nothing to tune");
    }
    let _lock = DirLock::acquire(&dir)?;
    let summary = match &l.config.tuning {
        TuningSpec::AdHoc { .. } => {
            let policy = ad_hoc_policy(l).expect("ad-hoc mode");
            io::write_json(&dir.join("policy.json"), &policy)?;
            TuneSummary {
                mode: l.config.tuning.name().into(),
                epsilon: run_epsilon(l)?,
                subset: None,
                estimated_relative_efficiency: None,
                flags: Vec::new(),
            }
        }
        spec => {
            let record = read_record(l)?;
            let model = build_model(l)?;
            match spec {
                TuningSpec::Standard {
                    key,
                    gamma,
                    t2,
                    select_subset,
                } => {
                    if *select_subset {
                        let method = GammaMethod::Standard {
                            path: gamma.clone(),
                        };
                        subset_selection(l, &model, &record, method, Provenance::Standard, &dir)?
                    } else {
                        let g = gamma_standard(&record, *key, record.epsilon, gamma, kernel)?;
                        single_stop(
                            l,
                            &record,
                            *key,
                            g,
                            gamma_log_u(gamma),
                            *t2,
                            None,
                            Provenance::Standard,
                            &dir,
                        )?
                    }
                }
                TuningSpec::Conservative {
                    key,
                    epsilon1,
                    min_acceptances,
                    t2,
                    select_subset,
                } => {
                    if *select_subset {
                        let method = GammaMethod::Conservative {
                            epsilon1: *epsilon1,
                            min_acceptances: *min_acceptances,
                        };
                        subset_selection(
                            l,
                            &model,
                            &record,
                            method,
                            Provenance::Conservative,
                            &dir,
                        )?
                    } else {
                        let g =
                            gamma_conservative(&record, *key, *epsilon1, *min_acceptances, kernel)?;
                        single_stop(
                            l,
                            &record,
                            *key,
                            g.smoother,
                            false,
                            *t2,
                            Some(g.epsilon1),
                            Provenance::Conservative,
                            &dir,
                        )?
                    }
                }
                TuningSpec::DiscreteMultistop { keys, cap } => {
                    let gamma = cell_acceptance_rates(&record, keys, record.epsilon)?;
                    let (policy, fit) =
                        tune_discrete_multistop(&record, keys, &gamma, floor, *cap)?;
                    let problem = MultiStopProblem::from_stages(
                        record.u.clone(),
                        gamma,
                        &record.stage_costs,
                        &sorted_checkpoints(keys),
                    )?;
                    io::write_json(&dir.join("policy.json"), &policy)?;
                    io::write_json(&dir.join("multistop.json"), &fit)?;
                    TuneSummary {
                        mode: l.config.tuning.name().into(),
                        epsilon: record.epsilon,
                        subset: None,
                        estimated_relative_efficiency: Some(
                            fit.efficiency.relative_to(&problem.baseline()),
                        ),
                        flags: Vec::new(),
                    }
                }
                TuningSpec::OneContinuousMultistop {
                    continuous,
                    discrete,
                    gamma,
                    t2,
                    cap,
                } => {
                    let (g, log_u, provenance) = match gamma {
                        GammaMethod::Standard { path } => (
                            gamma_standard(&record, *continuous, record.epsilon, path, kernel)?,
                            gamma_log_u(path),
                            Provenance::Standard,
                        ),
                        GammaMethod::Conservative {
                            epsilon1,
                            min_acceptances,
                        } => (
                            gamma_conservative(
                                &record,
                                *continuous,
                                *epsilon1,
                                *min_acceptances,
                                kernel,
                            )?
                            .smoother,
                            false,
                            Provenance::Conservative,
                        ),
                    };
                    let t2 = estimate_t2(&record, *continuous, *t2, kernel)?;
                    let fit = tune_one_continuous_multistop(
                        &record,
                        *continuous,
                        discrete,
                        &g,
                        log_u,
                        &t2,
                        floor,
                        *cap,
                        provenance,
                        kernel,
                    )?;
                    io::write_json(&dir.join("policy.json"), &fit.policy)?;
                    io::write_json(&dir.join("multistop.json"), &fit)?;
                    TuneSummary {
                        mode: l.config.tuning.name().into(),
                        epsilon: record.epsilon,
                        subset: None,
                        estimated_relative_efficiency: Some(
                            fit.efficiency.relative_to(&fit.baseline),
                        ),
                        flags: fit.flags.clone(),
                    }
                }
                TuningSpec::None | TuningSpec::AdHoc { .. } => unreachable!(),
            }
        }
    };
    let path = dir.join("tuning.json");
    io::write_json(&path, &summary)?;
    Ok(vec![path, dir.join("policy.json")])
}

fn ad_hoc_policy(l: &Loaded) -> Option<AlphaPolicy> {
    match &l.config.tuning {
        TuningSpec::AdHoc {
            checkpoint,
            component,
            thresholds,
            values,
        } => Some(AlphaPolicy::single(
            *checkpoint,
            AlphaRule::steps(*component, thresholds.clone(), values.clone()),
            l.config.alpha_floor,
            Provenance::AdHoc,
        )),
        _ => None,
    }
}

fn with_subset(model: Model, subset: Option<Vec<usize>>) -> Model {
    match (model, subset) {
        (Model::Extremes(m), Some(s)) => Model::Extremes(m.with_subset(Some(s))),
        (m, _) => m,
    }
}

pub fn run(l: &Loaded) -> Result<Vec<PathBuf>> {
    let epsilon = run_epsilon(l)?;
    let dens = densities(l)?;
    let mut model = build_model(l)?;
    let opts = run_options(l);
    let n = l.config.n_main;
    let seed = l.config.seed;
    let mut info = RunInfo {
        mode: l.config.tuning.name().into(),
        epsilon,
        seed,
        iterations: n,
        pilot_dir: l
            .pilot_dir()
            .join(SAMPLES)
            .exists()
            .then(|| "../pilot".into()),
        tune_dir: None,
        subset: None,
        estimated_relative_efficiency: None,
        combined: None,
    };
    let policy = match &l.config.tuning {
        TuningSpec::None => None,
        TuningSpec::AdHoc { .. } => ad_hoc_policy(l),
        _ => {
            let tdir = l.tune_dir();
            let summary_path = tdir.join("tuning.json");
            require(&summary_path, "run `lazyabc tune` with this config first")?;
            let summary: TuneSummary = io::read_json(&summary_path)?;
            if summary.epsilon.to_bits() != epsilon.to_bits() {
                bail!(
                    "the policy in {} was tuned for epsilon {} but this run uses {epsilon}; rerun `lazyabc tune`",
                    tdir.display(),
                    summary.epsilon
                );
            }
            model = with_subset(model, summary.subset.clone());
            info.tune_dir = Some("../tune".into());
            info.subset = summary.subset;
            info.estimated_relative_efficiency = summary.estimated_relative_efficiency;
            Some(io::read_json::<AlphaPolicy>(&tdir.join("policy.json"))?)
        }
    };
    let dir = l.run_dir();
    let _lock = DirLock::acquire(&dir)?;
    let set = with_model!(&model, m => match &policy {
        None => run_abc_is(&dens, n, m, epsilon, seed, &opts),
        Some(p) => run_lazy_abc(&dens, n, m, epsilon, p, seed, &opts),
    })?;
    let samples = dir.join(SAMPLES);
    io::write_sample_set(&samples, &set)?;
    let mut written = vec![samples];
    if l.config.combine_pilot {
        let pilot_path = l.pilot_dir().join(SAMPLES);
        require(
            &pilot_path,
            "combine_pilot needs the pilot run; run `lazyabc pilot` first",
        )?;
        let pilot = io::read_sample_set(&pilot_path)?;
        let combined = sampler::combine(&pilot, &set)?;
        let path = dir.join("combined.csv");
        io::write_sample_set(&path, &combined)?;
        info.combined = Some("combined.csv".into());
        written.push(path);
    }
    let info_path = dir.join("run.json");
    io::write_json(&info_path, &info)?;
    written.push(info_path);
    Ok(written)
}

pub fn read_run(dir: &Path) -> Result<SampleSet> {
    let path = dir.join(SAMPLES);
    require(&path, "expected a run directory containing samples.csv")?;
    io::read_sample_set(&path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct PosthocInfo {
    source: String,
    #[serde(with = "io::float_or_string")]
    epsilon: f64,
    accept_count: Option<usize>,
}

pub fn posthoc(
    run_dir: &Path,
    epsilon: Option<f64>,
    accept_count: Option<usize>,
    out: Option<PathBuf>,
) -> Result<Vec<PathBuf>> {
    let set = read_run(run_dir)?;
    let (new, suffix) = match (epsilon, accept_count) {
        (Some(e), None) => (sampler::posthoc_epsilon(&set, e)?, format!("eps-{e}")),
        (None, Some(k)) => (sampler::posthoc_accept_count(&set, k)?, format!("k{k}")),
        _ => bail!("give exactly one of --epsilon and --accept-count"),
    };
    let out = out.unwrap_or_else(|| {
        let name = run_dir
            .file_name()
            .map_or("run".into(), |s| s.to_string_lossy().into_owned());
        run_dir.with_file_name(format!("{name}-{suffix}"))
    });
    let _lock = DirLock::acquire(&out)?;
    let samples = out.join(SAMPLES);
    io::write_sample_set(&samples, &new)?;
    let info = out.join("posthoc.json");
    io::write_json(
        &info,
        &PosthocInfo {
            source: run_dir.display().to_string(),
            epsilon: new.epsilon,
            accept_count,
        },
    )?;
    Ok(vec![samples, info])
}

pub fn combine(pilot_dir: &Path, main_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let pilot = read_run(pilot_dir)?;
    let main = read_run(main_dir)?;
    let combined = sampler::combine(&pilot, &main).map_err(|e| anyhow!("cannot combine: {e}"))?;
    let _lock = DirLock::acquire(out)?;
    let samples = out.join(SAMPLES);
    io::write_sample_set(&samples, &combined)?;
    Ok(vec![samples])
}
