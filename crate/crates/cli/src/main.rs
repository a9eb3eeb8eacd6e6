use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedora_cli::config::EmbeddingSource;
use fedora_cli::{emit_summary, load_campaign, run_campaign, stats_command, CampaignError, ExperimentConfig};
use log::{error, info, warn};

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "fedora", version, about = "Grammar-guided evolutionary feature engineering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-run campaign and write its archive and summaries.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        /// Override the grammar file.
        #[arg(long)]
        grammar: Option<PathBuf>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Add a precomputed embedding method, as NAME=path.csv.
        #[arg(long = "external-embedding", value_name = "NAME=PATH")]
        external_embedding: Vec<EmbeddingSource>,
        /// Skip the SVG charts.
        #[arg(long)]
        no_svg: bool,
    },
    /// Re-emit the summary files of an existing campaign directory.
    Summarize {
        #[arg(long)]
        campaign: PathBuf,
        #[arg(long)]
        no_svg: bool,
    },
    /// Kruskal-Wallis, Dunn and Cliff's delta for one tester of a comparison CSV.
    Stats {
        #[arg(long)]
        comparison: PathBuf,
        /// Defaults to the tester matching the campaign's proxy.
        #[arg(long)]
        tester: Option<String>,
        /// Output directory; defaults to `stats/` next to the comparison file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

fn proxy_near(comparison: &Path) -> Option<fedora_core::models::ModelKind> {
    let dir = comparison.parent()?;
    let cfg = ExperimentConfig::load(dir.join("campaign.toml")).ok()?;
    Some(cfg.evolution.proxy)
}

fn evolve(
    config: &Path,
    grammar: Option<PathBuf>,
    seed: Option<u64>,
    embeddings: Vec<EmbeddingSource>,
    no_svg: bool,
) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(g) = grammar {
        cfg.grammar = Some(g);
    }
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    cfg.external_embeddings.extend(embeddings);
    let campaign = match run_campaign(&cfg) {
        Ok(c) => c,
        Err(CampaignError::Config(e)) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_PARTIAL);
        }
    };
    match emit_summary(&campaign, &cfg.output_dir, !no_svg) {
        Ok(files) => info!("wrote {} summary files to {}", files.len(), cfg.output_dir.display()),
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_PARTIAL);
        }
    }
    let comparison = cfg.output_dir.join(fedora_cli::summary::COMPARISON);
    if let Err(e) = stats_command(&comparison, None, Some(cfg.evolution.proxy), &cfg.output_dir.join("stats"), 0.05) {
        warn!("statistics skipped: {e}");
    }
    for f in &campaign.failed {
        warn!("run {} failed: {}", f.run, f.error);
    }
    if campaign.is_partial() {
        ExitCode::from(EXIT_PARTIAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Evolve {
            config,
            grammar,
            seed,
            external_embedding,
            no_svg,
        } => evolve(&config, grammar, seed, external_embedding, no_svg),
        Command::Summarize { campaign, no_svg } => {
            let result = load_campaign(&campaign).and_then(|c| emit_summary(&c, &campaign, !no_svg).map(|_| c));
            match result {
                Ok(c) if c.is_partial() => ExitCode::from(EXIT_PARTIAL),
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => {
                    error!("{e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Stats {
            comparison,
            tester,
            out,
            alpha,
        } => {
            let out = out.unwrap_or_else(|| comparison.parent().unwrap_or(Path::new(".")).join("stats"));
            match stats_command(&comparison, tester.as_deref(), proxy_near(&comparison), &out, alpha) {
                Ok(o) => {
                    print!("{}", o.report.render_table(&o.tester));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    error!("{e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
    }
}
