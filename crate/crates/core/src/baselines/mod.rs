//! Dimension-matched comparison transforms. Each produces exactly `k` columns.

mod autoencoder;
mod pca;
mod som;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use autoencoder::{fit_autoencoder, AeModel, AeParams};
pub use pca::{fit_pca, PcaModel};
pub use som::{fit_som, fit_som_traced, SomModel, SomParams};

use crate::data::SplitManifest;
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("k = {k} is outside 1..={d}")]
    KTooLarge { k: usize, d: usize },
    #[error("target dimension must be at least 1")]
    ZeroDimension,
    #[error("input matrix is empty")]
    EmptyInput,
    #[error("input matrix contains non-finite values")]
    NonFiniteInput,
    #[error("autoencoder loss became non-finite at epoch {epoch} (learning rate {learning_rate})")]
    DivergenceDetected { epoch: usize, learning_rate: f64 },
    #[error("embedding has {found} rows, dataset has {expected}")]
    EmbeddingRows { expected: usize, found: usize },
    #[error("embedding: {0}")]
    Embedding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Pca,
    Som,
    Autoencoder,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Pca, BaselineKind::Som, BaselineKind::Autoencoder];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Pca => "pca",
            BaselineKind::Som => "som",
            BaselineKind::Autoencoder => "ae",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSettings {
    pub som: SomParams,
    pub autoencoder: AeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Baseline {
    Pca(PcaModel),
    Som(SomModel),
    Autoencoder(AeModel),
}

impl Baseline {
    pub fn transform(&self, x: &Matrix) -> Matrix {
        match self {
            Baseline::Pca(m) => m.transform(x),
            Baseline::Som(m) => m.transform(x),
            Baseline::Autoencoder(m) => m.transform(x),
        }
    }
}

pub fn fit_baseline(
    kind: BaselineKind,
    k: usize,
    x: &Matrix,
    settings: &BaselineSettings,
    seed: u64,
) -> Result<Baseline, BaselineError> {
    Ok(match kind {
        BaselineKind::Pca => Baseline::Pca(fit_pca(x, k)?),
        BaselineKind::Som => {
            let mut rng = seed::rng_from(seed);
            Baseline::Som(fit_som(x, k, &settings.som, &mut rng)?)
        }
        BaselineKind::Autoencoder => Baseline::Autoencoder(fit_autoencoder(x, k, &settings.autoencoder, seed)?),
    })
}

/// Pre-computed features, one row per dataset row in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEmbedding {
    pub name: String,
    pub features: Matrix,
}

impl ExternalEmbedding {
    /// Reads a headered, all-numeric CSV.
    pub fn load(name: &str, path: impl AsRef<Path>) -> Result<Self, BaselineError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| BaselineError::Embedding(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, BaselineError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let width = reader
            .headers()
            .map_err(|e| BaselineError::Embedding(e.to_string()))?
            .len();
        if width == 0 {
            return Err(BaselineError::ZeroDimension);
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| BaselineError::Embedding(e.to_string()))?;
            for cell in record.iter() {
                let v: f64 = cell.parse().map_err(|_| {
                    BaselineError::Embedding(format!("row {}: `{cell}` is not numeric", r + 2))
                })?;
                data.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(BaselineError::EmptyInput);
        }
        Ok(Self {
            name: name.to_string(),
            features: Matrix::from_vec(rows, width, data),
        })
    }

    /// Rows for fitting (train then validation) and for testing.
    pub fn split(&self, manifest: &SplitManifest, n_rows: usize) -> Result<(Matrix, Matrix), BaselineError> {
        if self.features.rows() != n_rows {
            return Err(BaselineError::EmbeddingRows {
                expected: n_rows,
                found: self.features.rows(),
            });
        }
        let fit_rows = self
            .features
            .select_rows(&manifest.train)
            .vstack(&self.features.select_rows(&manifest.validation));
        Ok((fit_rows, self.features.select_rows(&manifest.test)))
    }
}
