use std::path::{Path, PathBuf};

use fedora_core::baselines::{BaselineKind, BaselineSettings};
use fedora_core::data::{self, Dataset};
use fedora_core::evolution::EvolutionConfig;
use fedora_core::grammar::{default_grammar, Grammar};
use fedora_core::models::{ModelKind, ModelSettings};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on the number of evolved features.
pub const DEFAULT_MAX_FEATURES: usize = 60;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{0} does not exist")]
    MissingPath(PathBuf),
    #[error("dataset: {0}")]
    Dataset(#[from] data::DataError),
    #[error("grammar: {0}")]
    Grammar(#[from] fedora_core::grammar::GrammarError),
    #[error("external embedding: {0}")]
    Embedding(#[from] fedora_core::baselines::BaselineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        #[serde(default = "default_label")]
        label_column: String,
    },
    /// The product-interaction surrogate task.
    Synthetic {
        n: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_label() -> String {
    "label".into()
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset, ConfigError> {
        match self {
            DatasetSource::Csv { path, label_column } => Ok(data::load_csv(path, label_column)?),
            DatasetSource::Synthetic { n, noise, seed } => Ok(data::synth_interaction(*n, *noise, *seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub name: String,
    pub path: PathBuf,
}

impl std::str::FromStr for EmbeddingSource {
    type Err = String;

    /// Parses `NAME=path.csv`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, path) = s
            .split_once('=')
            .ok_or_else(|| format!("expected NAME=path.csv, got `{s}`"))?;
        if name.trim().is_empty() || path.trim().is_empty() {
            return Err(format!("expected NAME=path.csv, got `{s}`"));
        }
        Ok(Self {
            name: name.trim().to_string(),
            path: PathBuf::from(path.trim()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// BNF grammar file; the built-in grammar is used when absent.
    #[serde(default)]
    pub grammar: Option<PathBuf>,
    /// Feature-count bound of the built-in grammar; defaults to
    /// `min(60, number of input columns)`.
    #[serde(default)]
    pub max_features: Option<usize>,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub models: ModelSettings,
    #[serde(default = "default_testers")]
    pub testers: Vec<ModelKind>,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<BaselineKind>,
    #[serde(default)]
    pub baseline_settings: BaselineSettings,
    #[serde(default)]
    pub external_embeddings: Vec<EmbeddingSource>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub output_dir: PathBuf,
}

fn default_testers() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_baselines() -> Vec<BaselineKind> {
    BaselineKind::ALL.to_vec()
}

fn default_runs() -> usize {
    30
}

/// Reserved method names in the comparison table.
pub const RAW: &str = "raw";
pub const FEDORA: &str = "fedora";

impl ExperimentConfig {
    /// A config for `dataset` with every other field at its default.
    pub fn new(dataset: DatasetSource, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset,
            grammar: None,
            max_features: None,
            evolution: EvolutionConfig::default(),
            models: ModelSettings::default(),
            testers: default_testers(),
            baselines: default_baselines(),
            baseline_settings: BaselineSettings::default(),
            external_embeddings: Vec::new(),
            runs: default_runs(),
            base_seed: 0,
            output_dir: output_dir.into(),
        }
    }

    /// Reads a TOML config. Relative paths inside it are resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::Csv { path, .. } = &mut self.dataset {
            fix(path);
        }
        if let Some(g) = &mut self.grammar {
            fix(g);
        }
        for e in &mut self.external_embeddings {
            fix(&mut e.path);
        }
        fix(&mut self.output_dir);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs < 1 {
            return Err(ConfigError::Invalid("runs must be at least 1".into()));
        }
        if self.testers.is_empty() {
            return Err(ConfigError::Invalid("at least one testing model is required".into()));
        }
        if self.max_features == Some(0) {
            return Err(ConfigError::Invalid("max_features must be at least 1".into()));
        }
        self.evolution
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let DatasetSource::Csv { path, .. } = &self.dataset {
            if !path.exists() {
                return Err(ConfigError::MissingPath(path.clone()));
            }
        }
        if let Some(g) = &self.grammar {
            if !g.exists() {
                return Err(ConfigError::MissingPath(g.clone()));
            }
        }
        let mut names: Vec<&str> = vec![RAW, FEDORA];
        names.extend(self.baselines.iter().map(|b| b.name()));
        for e in &self.external_embeddings {
            if names.contains(&e.name.as_str()) {
                return Err(ConfigError::Invalid(format!("method name `{}` is used twice", e.name)));
            }
            if !e.path.exists() {
                return Err(ConfigError::MissingPath(e.path.clone()));
            }
            names.push(&e.name);
        }
        Ok(())
    }

    /// Method names in table order.
    pub fn methods(&self) -> Vec<String> {
        let mut out = vec![RAW.to_string(), FEDORA.to_string()];
        out.extend(self.baselines.iter().map(|b| b.name().to_string()));
        out.extend(self.external_embeddings.iter().map(|e| e.name.clone()));
        out
    }

    pub fn grammar_for(&self, n_columns: usize) -> Result<Grammar, ConfigError> {
        match &self.grammar {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.clone(),
                    source,
                })?;
                Ok(Grammar::parse(&text)?)
            }
            None => {
                let max = self.max_features.unwrap_or(DEFAULT_MAX_FEATURES.min(n_columns));
                Ok(default_grammar(n_columns, max)?)
            }
        }
    }
}
