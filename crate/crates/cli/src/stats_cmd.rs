use std::fs;
use std::path::{Path, PathBuf};

use fedora_core::models::ModelKind;
use fedora_core::stats::{comparison_report, ComparisonReport, ScoreGroups, StatsError};
use thiserror::Error;

use crate::campaign::{parse_scores_csv, ScoreCell};

pub const KRUSKAL: &str = "kruskal.csv";
pub const DUNN_TABLE: &str = "dunn_effects.txt";
pub const DUNN_PAIRS: &str = "dunn_effects.csv";

#[derive(Debug, Error)]
pub enum StatsCommandError {
    #[error("unknown tester `{name}`; the comparison holds: {}", available.join(", "))]
    UnknownTester { name: String, available: Vec<String> },
    #[error("several testers present ({}); pass one with --tester", .0.join(", "))]
    AmbiguousTester(Vec<String>),
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone)]
pub struct StatsOutput {
    pub tester: String,
    pub report: ComparisonReport,
    pub files: Vec<PathBuf>,
}

fn testers_in(cells: &[ScoreCell]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in cells {
        if !out.contains(&c.tester) {
            out.push(c.tester.clone());
        }
    }
    out
}

/// Scores of one tester grouped by method, methods in first-appearance order.
/// Failed cells are skipped.
pub fn groups_for_tester(cells: &[ScoreCell], tester: &str) -> Result<ScoreGroups, StatsError> {
    let mut names: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for c in cells.iter().filter(|c| c.tester == tester) {
        let idx = match names.iter().position(|m| m == &c.method) {
            Some(i) => i,
            None => {
                names.push(c.method.clone());
                groups.push(Vec::new());
                names.len() - 1
            }
        };
        if let Some(v) = c.balanced_accuracy {
            groups[idx].push(v);
        }
    }
    ScoreGroups::new(names, groups)
}

/// Resolves which tester to analyse: the explicit name, else the tester that
/// matches the proxy, else the only tester present.
pub fn resolve_tester(
    cells: &[ScoreCell],
    tester: Option<&str>,
    proxy: Option<ModelKind>,
) -> Result<String, StatsCommandError> {
    let available = testers_in(cells);
    let wanted = match (tester, proxy) {
        (Some(t), _) => t.to_string(),
        (None, Some(p)) => p.name().to_string(),
        (None, None) if available.len() == 1 => available[0].clone(),
        (None, None) => return Err(StatsCommandError::AmbiguousTester(available)),
    };
    if !available.contains(&wanted) {
        return Err(StatsCommandError::UnknownTester {
            name: wanted,
            available,
        });
    }
    Ok(wanted)
}

/// Runs the omnibus test, posthoc and effect sizes for one tester of a
/// comparison CSV, writing `kruskal.csv`, `dunn_effects.txt` and `dunn_effects.csv`.
pub fn stats_command(
    comparison_csv: &Path,
    tester: Option<&str>,
    proxy: Option<ModelKind>,
    out_dir: &Path,
    alpha: f64,
) -> Result<StatsOutput, StatsCommandError> {
    let read_err = |message: String| StatsCommandError::Read {
        path: comparison_csv.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(comparison_csv).map_err(|e| read_err(e.to_string()))?;
    let cells = parse_scores_csv(&text).map_err(read_err)?;
    let tester = resolve_tester(&cells, tester, proxy)?;
    let groups = groups_for_tester(&cells, &tester)?;
    let report = comparison_report(&groups, alpha)?;

    fs::create_dir_all(out_dir).map_err(|source| StatsCommandError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let experiment = proxy.map_or("-", ModelKind::name);
    let kw = &report.omnibus;
    let kruskal = format!(
        "experiment,tester,n_groups,h,df,p_value,all_identical,posthoc_performed\n{experiment},{tester},{},{},{},{},{},{}\n",
        groups.len(),
        kw.h,
        kw.df,
        kw.p,
        kw.all_identical,
        report.posthoc_performed()
    );
    let mut files = Vec::new();
    for (name, contents) in [
        (KRUSKAL, kruskal),
        (DUNN_TABLE, report.render_table(&tester)),
        (DUNN_PAIRS, report.to_csv()),
    ] {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|source| StatsCommandError::Write {
            path: path.clone(),
            source,
        })?;
        files.push(path);
    }
    Ok(StatsOutput { tester, report, files })
}
