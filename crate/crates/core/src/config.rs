//! JSON run configurations, the shipped presets and export metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayes::BayesConfig;
use crate::data::{self, Dataset, Grid2D, MnistSplit, SpiralConfig};
use crate::error::{Error, Result};
use crate::heads::{Head, RplConfig};
use crate::layers::{Network, NetworkSpec, Regime};
use crate::metrics::AttackConfig;
use crate::trainer::{self, EpochRecord, TrainConfig};

/// Environment variable naming the MNIST directory when a config leaves it unset.
pub const MNIST_DIR_ENV: &str = "RPL_MNIST_DIR";
pub const DEFAULT_MNIST_DIR: &str = "data/mnist";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Spiral {
        #[serde(default = "SpiralDefaults::n_per_class")]
        n_per_class: usize,
        #[serde(default = "SpiralDefaults::classes")]
        classes: usize,
        #[serde(default = "SpiralDefaults::turns")]
        turns: f64,
        #[serde(default = "SpiralDefaults::noise_std")]
        noise_std: f64,
        /// Fraction of training labels replaced by random ones.
        #[serde(default)]
        noise_fraction: f64,
    },
    Mnist {
        /// Directory holding the IDX files; falls back to `RPL_MNIST_DIR`, then `data/mnist`.
        #[serde(default)]
        dir: Option<PathBuf>,
        /// Use only the first examples of each split (smoke runs).
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
}

struct SpiralDefaults;

impl SpiralDefaults {
    fn n_per_class() -> usize {
        SpiralConfig::default().n_per_class
    }
    fn classes() -> usize {
        SpiralConfig::default().classes
    }
    fn turns() -> f64 {
        SpiralConfig::default().turns
    }
    fn noise_std() -> f64 {
        SpiralConfig::default().noise_std
    }
}

/// Training and evaluation data for a run.
#[derive(Clone, Debug)]
pub struct RunData {
    pub train: Dataset,
    /// Clean-label version of the training set (differs only under label noise).
    pub train_clean: Dataset,
    pub test: Dataset,
}

pub fn mnist_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(MNIST_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_MNIST_DIR))
}

impl DatasetConfig {
    pub fn spiral(cfg: SpiralConfig, noise_fraction: f64) -> Self {
        DatasetConfig::Spiral {
            n_per_class: cfg.n_per_class,
            classes: cfg.classes,
            turns: cfg.turns,
            noise_std: cfg.noise_std,
            noise_fraction,
        }
    }

    pub fn spiral_config(&self) -> Option<SpiralConfig> {
        match *self {
            DatasetConfig::Spiral { n_per_class, classes, turns, noise_std, .. } => {
                Some(SpiralConfig { n_per_class, classes, turns, noise_std })
            }
            DatasetConfig::Mnist { .. } => None,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DatasetConfig::Spiral { classes, .. } => *classes,
            DatasetConfig::Mnist { .. } => 10,
        }
    }

    pub fn load(&self, seed: u64) -> Result<RunData> {
        match self {
            DatasetConfig::Spiral { noise_fraction, .. } => {
                let spiral = self.spiral_config().expect("spiral dataset");
                let clean = data::spiral_generate(&spiral, seed)?;
                let (noisy, _) = data::inject_label_noise(&clean, *noise_fraction, seed)?;
                Ok(RunData { train: noisy, test: clean.clone(), train_clean: clean })
            }
            DatasetConfig::Mnist { dir, train_limit, test_limit } => {
                let dir = mnist_dir(dir.as_deref());
                let mut train = data::load_mnist(&dir, MnistSplit::Train)?;
                let mut test = data::load_mnist(&dir, MnistSplit::Test)?;
                if let Some(n) = train_limit {
                    train = train.take(*n);
                }
                if let Some(n) = test_limit {
                    test = test.take(*n);
                }
                Ok(RunData { train_clean: train.clone(), train, test })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// FC-50, FC-50, FC-2 (ReLU), FC-K with a softmax head.
    SpiralSoftmax,
    /// Three FC-50 (ReLU), FC-K with an RPL head.
    SpiralRpl {
        rpl: RplConfig,
        #[serde(default)]
        regime: Regime,
    },
    /// The small CNN, with either head and optional dropout.
    Mnist {
        head: Head,
        #[serde(default)]
        dropout: Option<f64>,
    },
    Custom {
        spec: NetworkSpec,
    },
}

impl ModelConfig {
    pub fn network_spec(&self, classes: usize) -> Result<NetworkSpec> {
        let spec = match self {
            ModelConfig::SpiralSoftmax => NetworkSpec::dense(&[2, 50, 50, 2], Head::Softmax { classes }, Regime::Deterministic)?,
            ModelConfig::SpiralRpl { rpl, regime } => NetworkSpec::dense(&[2, 50, 50, 50], Head::Rpl(rpl.clone()), *regime)?,
            ModelConfig::Mnist { head, dropout } => {
                head.validate()?;
                if let Some(p) = dropout {
                    if !(0.0..1.0).contains(p) {
                        return Err(Error::Config(format!("model.dropout must lie in [0, 1), got {p}")));
                    }
                }
                NetworkSpec::mnist(head.clone(), *dropout)
            }
            ModelConfig::Custom { spec } => {
                spec.validate()?;
                spec.clone()
            }
        };
        Ok(spec)
    }

    /// Copy with the RPL β replaced (no effect on softmax heads).
    pub fn with_beta(&self, beta: f64) -> Self {
        let mut m = self.clone();
        match &mut m {
            ModelConfig::SpiralRpl { rpl, .. } => rpl.beta = beta,
            ModelConfig::Mnist { head: Head::Rpl(rpl), .. } => rpl.beta = beta,
            ModelConfig::Custom { spec } => {
                if let Head::Rpl(rpl) = &mut spec.head {
                    rpl.beta = beta;
                }
            }
            _ => {}
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    #[serde(default)]
    pub grid: Grid2D,
    /// Far-away probe for spiral experiments.
    #[serde(default = "default_probe")]
    pub probe: [f64; 2],
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_probe() -> [f64; 2] {
    [data::FAR_PROBE[0] as f64, data::FAR_PROBE[1] as f64]
}

fn default_bins() -> usize {
    20
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self { grid: Grid2D::default(), probe: default_probe(), histogram_bins: default_bins() }
    }
}

/// Everything needed to reproduce one training run and its exports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub export: ExportConfig,
}

pub const PRESET_NAMES: [&str; 6] =
    ["spiral_softmax", "spiral_rpl", "spiral_rpl_bayes", "mnist_softmax", "mnist_rpl", "mnist_rpl_dropout"];

fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "spiral_softmax" => include_str!("../presets/spiral_softmax.json"),
        "spiral_rpl" => include_str!("../presets/spiral_rpl.json"),
        "spiral_rpl_bayes" => include_str!("../presets/spiral_rpl_bayes.json"),
        "mnist_softmax" => include_str!("../presets/mnist_softmax.json"),
        "mnist_rpl" => include_str!("../presets/mnist_rpl.json"),
        "mnist_rpl_dropout" => include_str!("../presets/mnist_rpl_dropout.json"),
        _ => return None,
    })
}

/// Adds the JSON path to a serde error, e.g. `train.optimizer: unknown field ...`.
fn parse_error(e: serde_json::Error, source: &str) -> Error {
    Error::Config(format!("{source}: {e}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_named(text, "config")
    }

    fn from_json_named(text: &str, source: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                parse_error(inner, source)
            } else {
                Error::Config(format!("{source}: field `{path}`: {inner}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_named(&text, &path.display().to_string())
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_source(name).ok_or_else(|| {
            Error::Config(format!("unknown preset `{name}`; available: {}", PRESET_NAMES.join(", ")))
        })?;
        Self::from_json_named(text, &format!("preset {name}"))
    }

    /// Checks every field before any work starts; messages name the field.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("field `{name}`: {e}"));
        match &self.dataset {
            DatasetConfig::Spiral { noise_fraction, .. } => {
                let spiral = self.dataset.spiral_config().expect("spiral dataset");
                spiral.validate().map_err(|e| field("dataset", e))?;
                if !(0.0..=1.0).contains(noise_fraction) {
                    return Err(Error::Config(format!(
                        "field `dataset.noise_fraction`: must lie in [0, 1], got {noise_fraction}"
                    )));
                }
            }
            DatasetConfig::Mnist { train_limit, test_limit, .. } => {
                if *train_limit == Some(0) || *test_limit == Some(0) {
                    return Err(Error::Config("field `dataset`: limits must be at least 1".into()));
                }
            }
        }
        let spec = self.network_spec().map_err(|e| field("model", e))?;
        if spec.head.classes() != self.dataset.classes() {
            return Err(Error::Config(format!(
                "field `model`: head has {} classes but the dataset has {}",
                spec.head.classes(),
                self.dataset.classes()
            )));
        }
        let input_ok = match self.dataset {
            DatasetConfig::Spiral { .. } => spec.input_shape == [2],
            DatasetConfig::Mnist { .. } => spec.input_shape == [1, 28, 28],
        };
        if !input_ok {
            return Err(Error::Config(format!(
                "field `model`: input shape {:?} does not match the dataset",
                spec.input_shape
            )));
        }
        self.train.validate().map_err(|e| field("train", e))?;
        if spec.regime == Regime::Bayesian && self.train.bayes.is_none() {
            return Err(Error::Config("field `train.bayes`: required for a Bayesian model".into()));
        }
        self.attack.validate().map_err(|e| field("attack", e))?;
        self.export.grid.validate().map_err(|e| field("export.grid", e))?;
        if self.export.histogram_bins == 0 {
            return Err(Error::Config("field `export.histogram_bins`: must be at least 1".into()));
        }
        Ok(())
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        self.model.network_spec(self.dataset.classes())
    }

    /// Training configuration with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn bayes(&self) -> Option<BayesConfig> {
        self.train.bayes
    }

    /// SHA-256 of the canonical JSON of every field except `name`.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { name: String::new(), ..self.clone() };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        data::sha256_hex(&json)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Loads the data, builds the network and trains it, calling `on_epoch`
    /// after every epoch.
    pub fn execute(&self, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainedRun> {
        self.validate()?;
        let data = self.dataset.load(self.seed)?;
        let mut net = Network::build(self.network_spec()?, self.seed)?;
        let log = trainer::train_with(&mut net, &data.train, Some(&data.test), &self.train_config(), on_epoch)?;
        Ok(TrainedRun { net, data, log })
    }
}

/// Result of [`RunConfig::execute`].
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub net: Network,
    pub data: RunData,
    pub log: Vec<EpochRecord>,
}

/// Build version in `git describe` style, falling back to the crate version.
pub fn version() -> &'static str {
    option_env!("RPL_GIT_DESCRIBE").unwrap_or(concat!("v", env!("CARGO_PKG_VERSION")))
}

/// First line of every exported CSV: `# config_sha256=… seed=… version=…`.
pub fn metadata_line(config_hash: &str, seed: u64) -> String {
    format!("# config_sha256={config_hash} seed={seed} version={}\n", version())
}

/// Hash of an arbitrary serializable description (export flags plus checkpoint digest).
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(value).expect("value serializes"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
