//! Run configuration: defaults, config file, command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use osp_core::net::{Activation, BackboneSpec, OptimizerKind};
use osp_core::select::{default_thresholds, linspace, wide_mu_grid, SelectionCriterion};
use osp_core::synth::{SyntheticKind, SyntheticSpec};
use osp_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

/// Hidden layer widths and activation; the input width comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
        }
    }
}

impl BackboneConfig {
    pub fn spec(&self, input_dim: usize) -> CliResult<BackboneSpec> {
        let mut widths = vec![input_dim];
        widths.extend(&self.hidden);
        Ok(BackboneSpec::new(widths, self.activation)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training seed; overrides `train.seed`.
    pub seed: u64,
    /// Seed of the train/val/test permutation, kept apart from the training seed.
    pub split_seed: u64,
    pub dataset: DatasetSource,
    /// Train, validation and test fractions.
    pub split: Vec<f64>,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub criterion: SelectionCriterion,
    pub mu_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Target errors for the coverage-error curve; empty skips the curve.
    pub curve_targets: Vec<f64>,
    /// Abstention payoffs for the gamblers baseline; empty skips it.
    pub dg_payoffs: Vec<f64>,
    pub output_dir: PathBuf,
    /// Worker threads for the μ-grid fan-out.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            split_seed: 0,
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                kind: SyntheticKind::AnalyticExample,
                n: 5000,
                seed: 0,
            }),
            split: vec![0.6, 0.2, 0.2],
            backbone: BackboneConfig::default(),
            train: TrainConfig::default(),
            criterion: SelectionCriterion::ErrorConstrained(0.02),
            mu_grid: wide_mu_grid(),
            t_grid: default_thresholds(),
            curve_targets: Vec::new(),
            dg_payoffs: Vec::new(),
            output_dir: PathBuf::from("runs/default"),
            workers: 1,
        }
    }
}

fn finite_nonneg(xs: &[f64]) -> bool {
    xs.iter().all(|v| v.is_finite() && *v >= 0.0)
}

impl RunConfig {
    /// Defaults overlaid with the TOML file at `path`, if any.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.split.len() != 3 {
            return Err(CliError::config("split needs train, validation and test fractions"));
        }
        if self.split.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(CliError::config("split fractions must be positive"));
        }
        let total: f64 = self.split.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CliError::config(format!("split fractions sum to {total}, not 1")));
        }
        let data_seed = match &self.dataset {
            DatasetSource::Synthetic(s) => s.seed,
            DatasetSource::Csv(_) => 0,
        };
        if [self.seed, self.split_seed, data_seed].iter().any(|&s| s > i64::MAX as u64) {
            return Err(CliError::config("seeds must fit in a signed 64-bit integer"));
        }
        match &self.dataset {
            DatasetSource::Csv(p) if !p.is_file() => {
                return Err(CliError::config(format!("dataset {} does not exist", p.display())));
            }
            DatasetSource::Synthetic(s) if s.n == 0 => {
                return Err(CliError::config("synthetic dataset needs n ≥ 1"));
            }
            _ => {}
        }
        if self.backbone.hidden.is_empty() || self.backbone.hidden.contains(&0) {
            return Err(CliError::config("backbone needs at least one hidden layer of positive width"));
        }
        if self.mu_grid.is_empty() {
            return Err(CliError::config("mu_grid is empty"));
        }
        if !finite_nonneg(&self.mu_grid) {
            return Err(CliError::config("mu_grid values must be finite and nonnegative"));
        }
        if self.t_grid.is_empty() {
            return Err(CliError::config("t_grid is empty"));
        }
        if self.t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(CliError::config("t_grid values must lie in [0, 1]"));
        }
        if self.curve_targets.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(CliError::config("curve targets must lie in (0, 1)"));
        }
        if self.curve_targets.windows(2).any(|w| w[0] > w[1]) {
            return Err(CliError::config("curve targets must be ascending"));
        }
        if self.dg_payoffs.iter().any(|o| !(*o >= 1.0) || !o.is_finite()) {
            return Err(CliError::config("gamblers payoffs must be finite and at least 1"));
        }
        if self.workers == 0 {
            return Err(CliError::config("workers must be positive"));
        }
        self.criterion.validate()?;
        for &mu in &self.mu_grid {
            self.train_config(mu).validate()?;
        }
        Ok(())
    }

    /// Training settings at one grid value of `μ`.
    pub fn train_config(&self, mu: f64) -> TrainConfig {
        TrainConfig {
            mu,
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// SHA-256 over everything that affects results (not the output location or worker count).
    pub fn config_hash(&self) -> String {
        let mut view = self.clone();
        view.output_dir = PathBuf::new();
        view.workers = 0;
        view.train.seed = self.seed;
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(o.seed, self.seed);
        set!(o.split_seed, self.split_seed);
        set!(o.output_dir, self.output_dir);
        set!(o.workers, self.workers);
        set!(o.data, self.dataset);
        set!(o.hidden, self.backbone.hidden);
        set!(o.activation, self.backbone.activation);
        set!(o.epochs, self.train.epochs);
        set!(o.batch_size, self.train.batch_size);
        set!(o.lr_min, self.train.lr_min);
        set!(o.lr_max, self.train.lr_max);
        set!(o.warm_start_epochs, self.train.warm_start_epochs);
        set!(o.warm_start_lr, self.train.warm_start_lr);
        set!(o.backbone_update_interval, self.train.backbone_update_interval);
        set!(o.optimizer, self.train.optimizer);
        set!(o.mu_grid, self.mu_grid);
        set!(o.curve_targets, self.curve_targets);
        if let Some(s) = &o.split {
            self.split = s.clone();
        }
        if let Some(n) = o.t_steps {
            self.t_grid = linspace(0.0, 1.0, n);
        }
        if o.no_lr_decay {
            self.train.lr_decay = None;
        }
        match (o.criterion, o.target) {
            (Some(c), Some(v)) => self.criterion = c.with_target(v),
            (Some(c), None) => self.criterion = c.with_target(self.criterion.target()),
            (None, Some(v)) => self.criterion = CriterionMode::of(self.criterion).with_target(v),
            (None, None) => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CriterionMode {
    Error,
    Coverage,
}

impl CriterionMode {
    fn of(c: SelectionCriterion) -> Self {
        match c {
            SelectionCriterion::ErrorConstrained(_) => CriterionMode::Error,
            SelectionCriterion::CoverageConstrained(_) => CriterionMode::Coverage,
        }
    }

    pub fn with_target(self, v: f64) -> SelectionCriterion {
        match self {
            CriterionMode::Error => SelectionCriterion::ErrorConstrained(v),
            CriterionMode::Coverage => SelectionCriterion::CoverageConstrained(v),
        }
    }
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    match s {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "identity" => Ok(Activation::Identity),
        _ => Err(format!("unknown activation `{s}` (relu, tanh, identity)")),
    }
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::Adam),
        _ => Err(format!("unknown optimizer `{s}` (sgd, adam)")),
    }
}

fn parse_source(s: &str) -> Result<DatasetSource, String> {
    Ok(DatasetSource::Csv(PathBuf::from(s)))
}

/// Flags that take precedence over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Dataset CSV (replaces the configured source).
    #[arg(long, value_parser = parse_source)]
    pub data: Option<DatasetSource>,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    #[arg(long)]
    pub warm_start_epochs: Option<usize>,
    #[arg(long)]
    pub warm_start_lr: Option<f64>,
    #[arg(long)]
    pub backbone_update_interval: Option<usize>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    /// Disable the learning-rate step decay.
    #[arg(long)]
    pub no_lr_decay: bool,
    #[arg(long, value_delimiter = ',')]
    pub mu_grid: Option<Vec<f64>>,
    /// Replace the threshold grid by this many equally spaced values in [0, 1].
    #[arg(long)]
    pub t_steps: Option<usize>,
    #[arg(long, value_enum)]
    pub criterion: Option<CriterionMode>,
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub curve_targets: Option<Vec<f64>>,
}
