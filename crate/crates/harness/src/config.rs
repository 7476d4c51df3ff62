//! Experiment configuration: a TOML document with nested sections. Unknown
//! keys are rejected so a typo cannot silently change an experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqcopy::copynet::TightenRule;
use seqcopy::datagen::Sampler;
use seqcopy::engine::{LambdaMode, RunConfig, Strategy};

use crate::error::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SEQCOPY_OUT";

fn default_seed() -> u64 {
    42
}

fn default_repetitions() -> usize {
    30
}

fn default_true() -> bool {
    true
}

fn default_toy_n() -> usize {
    2000
}

fn default_noise() -> f64 {
    0.05
}

fn default_test_fraction() -> f64 {
    0.25
}

/// Root of the experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every run seed derives from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Reproducible mode zeroes wall-clock fields so same-seed experiments
    /// produce byte-identical output files.
    #[serde(default = "default_true")]
    pub reproducible: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    /// Synthetic-sample distribution; defaults to a standard normal of the
    /// dataset dimension.
    #[serde(default)]
    pub sampler: Option<Sampler>,
    #[serde(default)]
    pub run: RunSection,
}

/// Which problem the oracle is built on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// One of the built-in 2-D toy generators.
    Toy {
        name: ToyName,
        #[serde(default = "default_toy_n")]
        n: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default = "default_true")]
        standardize: bool,
    },
    /// Any labeled CSV with a `label` column; copied through a 1-NN oracle.
    Csv {
        path: PathBuf,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default = "default_true")]
        standardize: bool,
    },
}

impl DatasetSpec {
    /// Short name used in report headers and the results CSV.
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::Toy { name, .. } => name.to_string(),
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
        }
    }

    pub fn test_fraction(&self) -> f64 {
        match self {
            DatasetSpec::Toy { test_fraction, .. } | DatasetSpec::Csv { test_fraction, .. } => {
                *test_fraction
            }
        }
    }

    pub fn standardize(&self) -> bool {
        match self {
            DatasetSpec::Toy { standardize, .. } | DatasetSpec::Csv { standardize, .. } => {
                *standardize
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyName {
    Spirals,
    Moons,
    Yinyang,
}

impl std::fmt::Display for ToyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ToyName::Spirals => "spirals",
            ToyName::Moons => "moons",
            ToyName::Yinyang => "yinyang",
        };
        f.write_str(name)
    }
}

/// How the black box answers queries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleSpec {
    /// 1-nearest-neighbor over the training split.
    #[default]
    NearestNeighbor,
    /// The exact generating rule; toy datasets only.
    Analytic,
}

/// Run parameters shared by every strategy of the experiment. Defaults match
/// the reference setup except the epoch caps, which are desk-scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub strategies: Vec<Strategy>,
    pub deltas: Vec<f64>,
    pub iterations: usize,
    pub samples_per_iter: usize,
    pub lambda0: f64,
    pub lambda_mode: LambdaMode,
    pub epsilon: f64,
    pub epsilon_init: f64,
    pub tighten_rule: TightenRule,
    pub learning_rate: f64,
    pub epochs_per_iter: usize,
    pub epoch_allowance: usize,
    pub allowance_growth: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        let template = RunConfig::new(
            Strategy::Sequential,
            Sampler::standard_normal(2).expect("valid builtin sampler"),
            0,
        );
        RunSection {
            strategies: vec![
                Strategy::Sequential,
                Strategy::PureSequential,
                Strategy::SinglePass,
                Strategy::Online,
            ],
            deltas: vec![1e-6],
            iterations: template.iterations,
            samples_per_iter: template.samples_per_iter,
            lambda0: template.lambda0,
            lambda_mode: template.lambda_mode,
            epsilon: template.epsilon,
            epsilon_init: template.epsilon_init,
            tighten_rule: template.tighten_rule,
            learning_rate: template.learning_rate,
            epochs_per_iter: template.epochs_per_iter,
            epoch_allowance: template.epoch_allowance,
            allowance_growth: template.allowance_growth,
            batch_size: template.batch_size,
            hidden: template.hidden,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::parse(path, e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.run.strategies.is_empty() {
            return Err(Error::Config("run.strategies must not be empty".into()));
        }
        for (i, s) in self.run.strategies.iter().enumerate() {
            if self.run.strategies[..i].contains(s) {
                return Err(Error::Config(format!(
                    "run.strategies lists \"{s}\" twice"
                )));
            }
        }
        if self.run.deltas.is_empty() {
            return Err(Error::Config("run.deltas must not be empty".into()));
        }
        for (i, d) in self.run.deltas.iter().enumerate() {
            if !(d.is_finite() && *d >= 0.0) {
                return Err(Error::Config(format!(
                    "run.deltas[{i}] must be finite and >= 0, got {d}"
                )));
            }
            if self.run.deltas[..i].contains(d) {
                return Err(Error::Config(format!("run.deltas lists {d} twice")));
            }
        }
        let frac = self.dataset.test_fraction();
        if !(frac > 0.0 && frac < 1.0) {
            return Err(Error::Config(format!(
                "dataset.test_fraction must lie in (0, 1), got {frac}"
            )));
        }
        match &self.dataset {
            DatasetSpec::Toy { n, noise, .. } => {
                if *n < 4 || n % 2 != 0 {
                    return Err(Error::Config(format!(
                        "dataset.n must be an even count >= 4, got {n}"
                    )));
                }
                if !(noise.is_finite() && *noise >= 0.0) {
                    return Err(Error::Config(format!(
                        "dataset.noise must be finite and >= 0, got {noise}"
                    )));
                }
            }
            DatasetSpec::Csv { path, .. } => {
                if path.as_os_str().is_empty() {
                    return Err(Error::Config("dataset.path must not be empty".into()));
                }
                if self.oracle == OracleSpec::Analytic {
                    return Err(Error::Config(
                        "oracle \"analytic\" only exists for toy datasets".into(),
                    ));
                }
            }
        }
        if let Some(sampler) = &self.sampler {
            sampler.validate()?;
        }
        // Assemble one run config so its validation can flag the remaining
        // numeric fields by name before any work starts.
        let probe_sampler = self
            .sampler
            .clone()
            .unwrap_or(Sampler::standard_normal(2).expect("valid builtin sampler"));
        self.run_config(self.run.strategies[0], self.run.deltas[0], 0, probe_sampler)
            .validate()
            .map_err(Error::Core)
    }

    /// Concrete engine configuration for one (strategy, delta, seed) cell.
    pub fn run_config(
        &self,
        strategy: Strategy,
        delta: f64,
        seed: u64,
        sampler: Sampler,
    ) -> RunConfig {
        RunConfig {
            strategy,
            iterations: self.run.iterations,
            samples_per_iter: self.run.samples_per_iter,
            delta,
            lambda0: self.run.lambda0,
            lambda_mode: self.run.lambda_mode,
            epsilon: self.run.epsilon,
            epsilon_init: self.run.epsilon_init,
            tighten_rule: self.run.tighten_rule,
            learning_rate: self.run.learning_rate,
            epochs_per_iter: self.run.epochs_per_iter,
            epoch_allowance: self.run.epoch_allowance,
            allowance_growth: self.run.allowance_growth,
            batch_size: self.run.batch_size,
            hidden: self.run.hidden.clone(),
            sampler,
            seed,
        }
    }

    /// Output directory precedence: CLI flag, then config, then the
    /// `SEQCOPY_OUT` environment variable, then `./results`.
    pub fn resolve_out_dir(&self, cli_out: Option<PathBuf>) -> PathBuf {
        cli_out
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }
}
