//! Declarative experiment files (TOML). Every field is optional; missing
//! fields keep their defaults and command-line flags override the file.
//!
//! ```toml
//! dataset = "data/reference.txt"      # or a [generator] table
//! strategies = ["frequent_first", "pla"]
//! out = "runs/compare"
//!
//! [generator]
//! n_classes = 20
//! correlation_pairs = [[0, 5, 0.6]]
//!
//! [train]
//! epochs = 40
//! optimizer = "adam"
//! ```

use std::path::{Path, PathBuf};

use orderless_core::{GeneratorConfig, OptimizerKind, OrderingStrategy, TrainConfig};
use serde::Deserialize;

use crate::format::read_text;
use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<PathBuf>,
    pub strategies: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub generator: Option<GeneratorSection>,
    pub train: Option<TrainSection>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub n_classes: Option<usize>,
    pub n_samples: Option<usize>,
    pub zipf_exponent: Option<f64>,
    pub correlation_pairs: Option<Vec<(usize, usize, f64)>>,
    pub labels_per_sample: Option<(usize, usize)>,
    pub feature_dim: Option<usize>,
    pub grid_size: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub strategy: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub attention: Option<bool>,
    pub teacher_forcing: Option<bool>,
    /// `"adam"` or `"sgd"`.
    pub optimizer: Option<String>,
    pub momentum: Option<f64>,
    pub hidden: Option<usize>,
    pub embed: Option<usize>,
    pub attention_dim: Option<usize>,
    pub init_scale: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub max_decode_steps: Option<usize>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile, CliError> {
    toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
}

pub fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    parse_config(&read_text(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),*) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })*
    };
}

impl GeneratorSection {
    pub fn apply(&self, base: GeneratorConfig) -> GeneratorConfig {
        let mut c = base;
        overlay!(c, self, n_classes, n_samples, zipf_exponent, correlation_pairs,
            labels_per_sample, feature_dim, grid_size, noise_sigma, seed);
        c
    }
}

pub fn parse_strategy(name: &str) -> Result<OrderingStrategy, CliError> {
    name.parse()
        .map_err(|_| CliError::Validation(format!("unknown strategy {name:?} (expected one of {})", strategy_names())))
}

pub fn strategy_names() -> String {
    OrderingStrategy::ALL.map(|s| s.name()).join(", ")
}

impl TrainSection {
    pub fn apply(&self, base: TrainConfig) -> Result<TrainConfig, CliError> {
        let mut c = base;
        overlay!(c, self, epochs, batch_size, learning_rate, seed, teacher_forcing,
            hidden, embed, attention_dim, init_scale, validation_fraction, max_decode_steps);
        if let Some(s) = &self.strategy {
            c.strategy = parse_strategy(s)?;
        }
        if let Some(a) = self.attention {
            c.use_attention = a;
        }
        match (self.optimizer.as_deref(), self.momentum) {
            (None, None) => {}
            (Some("adam"), None) => c.optimizer = OptimizerKind::adam(),
            (Some("sgd"), m) => c.optimizer = OptimizerKind::Sgd { momentum: m.unwrap_or(0.0) },
            (None, Some(m)) if matches!(c.optimizer, OptimizerKind::Sgd { .. }) => {
                c.optimizer = OptimizerKind::Sgd { momentum: m }
            }
            (Some(other), _) if other != "adam" => {
                return Err(CliError::Validation(format!("unknown optimizer {other:?} (adam, sgd)")))
            }
            _ => return Err(CliError::Validation("momentum only applies to optimizer = \"sgd\"".into())),
        }
        Ok(c)
    }
}
