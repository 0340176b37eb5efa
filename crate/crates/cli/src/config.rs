//! Run configuration: one JSON document per experiment arm.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lazyabc::models::{ExtremesConfig, SirConfig};
use lazyabc::sampler::CostMode;
use lazyabc::smoothers::KernelOptions;
use lazyabc::tuning::{GammaMethod, PhiKey, StandardPath, T2Mode, DEFAULT_ALPHA_FLOOR};
use serde::{Deserialize, Deserializer, Serialize};

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_ROOT_ENV: &str = "LAZYABC_OUTPUT_ROOT";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Directory holding the observed dataset; `<output_dir>/data` if unset.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Parameters used by `simulate-data`.
    #[serde(default)]
    pub truth: Option<Vec<f64>>,
    /// Seed used by `simulate-data`; defaults to `seed`.
    #[serde(default)]
    pub data_seed: Option<u64>,
    pub prior: PriorSpec,
    #[serde(default)]
    pub proposal: ProposalSpec,
    #[serde(default = "default_n_pilot")]
    pub n_pilot: usize,
    pub n_main: usize,
    #[serde(default, deserialize_with = "opt_float")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub target_acceptances: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub cost_mode: CostMode,
    #[serde(default)]
    pub tuning: TuningSpec,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub failure_budget: usize,
    #[serde(default = "default_floor")]
    pub alpha_floor: f64,
    /// Append the pilot draws to the main run in `combined.csv`.
    #[serde(default)]
    pub combine_pilot: bool,
    #[serde(default)]
    pub kernel: KernelOptions,
    pub output_dir: PathBuf,
}

fn default_n_pilot() -> usize {
    1000
}

fn default_floor() -> f64 {
    DEFAULT_ALPHA_FLOOR
}

fn opt_float<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }
    match Option::<Repr>::deserialize(d)? {
        None => Ok(None),
        Some(Repr::Num(v)) => Ok(Some(v)),
        Some(Repr::Str(s)) => s.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Sir(SirConfig),
    Extremes(ExtremesSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtremesSpec {
    #[serde(flatten)]
    pub config: ExtremesConfig,
    /// Draw locations on an integer grid instead of listing them.
    #[serde(default)]
    pub random_locations: Option<RandomLocations>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomLocations {
    pub count: usize,
    /// Coordinates are integers in `[0, extent]`.
    #[serde(default = "default_extent")]
    pub extent: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_extent() -> u32 {
    10
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorSpec {
    Gamma { shape: f64, rate: f64 },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProposalSpec {
    #[default]
    Prior,
    /// Gaussian kernels at the best accepted draws of an earlier run,
    /// truncated to a uniform-box prior.
    Mixture {
        /// Run directory containing `samples.csv`.
        run: PathBuf,
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default = "default_variance_scale")]
        variance_scale: f64,
    },
}

fn default_components() -> usize {
    100
}

fn default_variance_scale() -> f64 {
    2.0
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TuningSpec {
    #[default]
    None,
    AdHoc {
        #[serde(default)]
        checkpoint: usize,
        #[serde(default)]
        component: usize,
        thresholds: Vec<f64>,
        values: Vec<f64>,
    },
    Standard {
        #[serde(default = "default_key")]
        key: PhiKey,
        gamma: StandardPath,
        #[serde(default)]
        t2: T2Mode,
        /// Backwards selection of the initial-stage locations (extremes).
        #[serde(default)]
        select_subset: bool,
    },
    Conservative {
        #[serde(default = "default_key")]
        key: PhiKey,
        #[serde(default)]
        epsilon1: Option<f64>,
        #[serde(default = "default_min_acceptances")]
        min_acceptances: usize,
        #[serde(default)]
        t2: T2Mode,
        #[serde(default)]
        select_subset: bool,
    },
    DiscreteMultistop {
        keys: Vec<PhiKey>,
        #[serde(default = "default_cap")]
        cap: usize,
    },
    OneContinuousMultistop {
        continuous: PhiKey,
        discrete: Vec<PhiKey>,
        gamma: GammaMethod,
        #[serde(default)]
        t2: T2Mode,
        #[serde(default = "default_cap")]
        cap: usize,
    },
}

fn default_key() -> PhiKey {
    PhiKey::new(0, 0)
}

fn default_min_acceptances() -> usize {
    30
}

fn default_cap() -> usize {
    lazyabc::tuning::DEFAULT_LEVEL_CAP
}

impl TuningSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TuningSpec::None => "none",
            TuningSpec::AdHoc { .. } => "ad-hoc",
            TuningSpec::Standard { .. } => "standard",
            TuningSpec::Conservative { .. } => "conservative",
            TuningSpec::DiscreteMultistop { .. } => "discrete-multistop",
            TuningSpec::OneContinuousMultistop { .. } => "one-continuous-multistop",
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub cost_mode: Option<CostMode>,
}

/// A validated configuration with its paths resolved.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub root: PathBuf,
    pub data_dir: PathBuf,
}

impl Loaded {
    pub fn pilot_dir(&self) -> PathBuf {
        self.root.join("pilot")
    }

    pub fn tune_dir(&self) -> PathBuf {
        self.root.join("tune")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.root.join("run")
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut config: RunConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(w) = overrides.workers {
        config.workers = Some(w);
    }
    if let Some(m) = overrides.cost_mode {
        config.cost_mode = m;
    }
    validate(&config)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let root = match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(r) if !r.is_empty() => PathBuf::from(r),
        _ => resolve(base, &config.output_dir),
    };
    let data_dir = match &config.data_dir {
        Some(d) => resolve(base, d),
        None => root.join("data"),
    };
    if let ProposalSpec::Mixture { run, .. } = &mut config.proposal {
        *run = resolve(base, run);
    }
    Ok(Loaded {
        config,
        root,
        data_dir,
    })
}

pub fn validate(c: &RunConfig) -> Result<()> {
    match (c.epsilon, c.target_acceptances) {
        (Some(_), Some(_)) | (None, None) => {
            bail!("set exactly one of epsilon and target_acceptances")
        }
        (Some(e), None) if !(e >= 0.0) => bail!("epsilon must be non-negative, got {e}"),
        (None, Some(0)) => bail!("target_acceptances must be positive"),
        _ => {}
    }
    if c.seed == 0 {
        bail!("seed must be positive");
    }
    if c.n_main == 0 || c.n_pilot == 0 {
        bail!("n_main and n_pilot must be positive");
    }
    if c.workers == Some(0) {
        bail!("workers must be positive");
    }
    if !(c.alpha_floor > 0.0 && c.alpha_floor <= 1.0) {
        bail!("alpha_floor must lie in (0, 1]");
    }
    if let TuningSpec::AdHoc {
        thresholds, values, ..
    } = &c.tuning
    {
        if values.len() != thresholds.len() + 1 {
            bail!("ad-hoc tuning needs one more value than thresholds");
        }
        if values.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            bail!("ad-hoc continuation probabilities must lie in (0, 1]");
        }
    }
    let select = matches!(
        c.tuning,
        TuningSpec::Standard {
            select_subset: true,
            ..
        } | TuningSpec::Conservative {
            select_subset: true,
            ..
        }
    );
    if select && !matches!(c.model, ModelSpec::Extremes(_)) {
        bail!("select_subset applies to the extremes model only");
    }
    Ok(())
}
