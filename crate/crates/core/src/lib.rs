//! Grammar-guided evolutionary feature engineering.
//!
//! Structured grammatical evolution builds lists of algebraic feature
//! expressions; each candidate is scored by the validation error of a
//! tree-based proxy classifier. Dimension-matched baselines and a
//! nonparametric statistics battery support method comparisons.

pub mod baselines;
pub mod data;
pub mod evolution;
pub mod expr;
pub mod grammar;
pub mod matrix;
pub mod models;
pub mod seed;
pub mod stats;

pub use data::{Dataset, SplitDataset};
pub use expr::{ComplexityReport, Expr, FeatureClass, FeatureProgram};
pub use grammar::{Genotype, Grammar};
pub use matrix::Matrix;
