//! Campaign orchestration, archives, summaries and statistical reports.

pub mod campaign;
pub mod config;
pub mod stats_cmd;
pub mod summary;
mod svg;

pub use campaign::{load_campaign, run_campaign, CampaignError, CampaignResult, ScoreCell};
pub use config::{ConfigError, DatasetSource, ExperimentConfig};
pub use stats_cmd::{stats_command, StatsCommandError};
pub use summary::emit_summary;
