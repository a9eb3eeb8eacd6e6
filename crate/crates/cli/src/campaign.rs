use std::fs;
use std::path::{Path, PathBuf};

use fedora_core::baselines::{fit_baseline, BaselineKind, ExternalEmbedding};
use fedora_core::data::{self, Dataset, SplitDataset, SplitManifest};
use fedora_core::evolution::{run_evolution, score_features, test_best, GenerationRecord, RunResult};
use fedora_core::models::{ModelError, ModelKind};
use fedora_core::seed;
use fedora_core::{ComplexityReport, Grammar};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, FEDORA, RAW};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot read campaign at {path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("no run completed")]
    NoCompletedRuns,
}

/// One test score; `balanced_accuracy` is absent when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub run: usize,
    pub method: String,
    pub tester: String,
    pub balanced_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletedRun {
    pub run: usize,
    pub seed: u64,
    pub result: RunResult,
    pub complexity: ComplexityReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedRun {
    pub run: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub config: ExperimentConfig,
    pub completed: Vec<CompletedRun>,
    pub failed: Vec<FailedRun>,
    /// `runs x methods x testers` cells in run, method, tester order.
    pub scores: Vec<ScoreCell>,
}

impl CampaignResult {
    pub fn is_partial(&self) -> bool {
        !self.failed.is_empty()
    }

    pub fn histories(&self) -> Vec<&[GenerationRecord]> {
        self.completed.iter().map(|r| r.result.history.as_slice()).collect()
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CampaignError> {
    fs::write(path, contents).map_err(|source| CampaignError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CampaignError> {
    fs::create_dir_all(path).map_err(|source| CampaignError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn run_dir(output_dir: &Path, run: usize) -> PathBuf {
    output_dir.join("runs").join(format!("run_{run:03}"))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("archive records serialize")
}

pub fn history_csv(history: &[GenerationRecord]) -> String {
    let mut out = String::from(
        "generation,best_fitness,mean_fitness,mean_feature_count,best_feature_count,min_feature_count,max_feature_count\n",
    );
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            h.generation,
            h.best_fitness,
            h.mean_fitness,
            h.mean_feature_count,
            h.best_feature_count,
            h.min_feature_count,
            h.max_feature_count
        ));
    }
    out
}

pub fn scores_csv(cells: &[ScoreCell]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["run", "method", "tester", "balanced_accuracy", "error"])
        .expect("in-memory write");
    for c in cells {
        w.write_record([
            c.run.to_string(),
            c.method.clone(),
            c.tester.clone(),
            c.balanced_accuracy.map(|v| v.to_string()).unwrap_or_default(),
            c.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn parse_scores_csv(text: &str) -> Result<Vec<ScoreCell>, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("missing column `{name}`"))
    };
    let (run, method, tester, ba) = (col("run")?, col("method")?, col("tester")?, col("balanced_accuracy")?);
    let error = headers.iter().position(|h| h == "error");
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let score = field(ba);
        out.push(ScoreCell {
            run: field(run)
                .parse()
                .map_err(|_| format!("line {}: bad run index", line + 2))?,
            method: field(method),
            tester: field(tester),
            balanced_accuracy: if score.is_empty() {
                None
            } else {
                Some(score.parse().map_err(|_| format!("line {}: bad score `{score}`", line + 2))?)
            },
            error: error.map(field).filter(|e| !e.is_empty()),
        });
    }
    Ok(out)
}

fn cells_from(run: usize, method: &str, scores: Vec<(ModelKind, Result<f64, ModelError>)>) -> Vec<ScoreCell> {
    scores
        .into_iter()
        .map(|(tester, score)| ScoreCell {
            run,
            method: method.to_string(),
            tester: tester.name().to_string(),
            balanced_accuracy: score.as_ref().ok().copied(),
            error: score.err().map(|e| e.to_string()),
        })
        .collect()
}

fn failed_cells(run: usize, method: &str, testers: &[ModelKind], error: &str) -> Vec<ScoreCell> {
    testers
        .iter()
        .map(|t| ScoreCell {
            run,
            method: method.to_string(),
            tester: t.name().to_string(),
            balanced_accuracy: None,
            error: Some(error.to_string()),
        })
        .collect()
}

struct Inputs {
    dataset: Dataset,
    grammar: Grammar,
    embeddings: Vec<ExternalEmbedding>,
}

fn load_inputs(config: &ExperimentConfig) -> Result<Inputs, ConfigError> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    let grammar = config.grammar_for(dataset.n_features())?;
    let embeddings = config
        .external_embeddings
        .iter()
        .map(|e| ExternalEmbedding::load(&e.name, &e.path))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Inputs {
        dataset,
        grammar,
        embeddings,
    })
}

enum Method<'a> {
    Raw,
    Fedora,
    Baseline(BaselineKind),
    External(&'a ExternalEmbedding),
}

fn score_method(
    method: &Method<'_>,
    name: &str,
    run: usize,
    run_seed: u64,
    config: &ExperimentConfig,
    split: &SplitDataset,
    result: &RunResult,
    n_rows: usize,
) -> Vec<ScoreCell> {
    let tester_seed = seed::mix(&[run_seed, 0x7e57]);
    let fit_rows = split.train.concat(&split.validation);
    let score = |train: &fedora_core::Matrix, test: &fedora_core::Matrix| {
        score_features(
            train,
            &fit_rows.labels,
            test,
            &split.test.labels,
            &config.testers,
            &config.models,
            tester_seed,
        )
    };
    match method {
        Method::Raw => cells_from(run, name, score(&fit_rows.features, &split.test.features)),
        Method::Fedora => match test_best(&result.best.program, split, &config.testers, &config.models, tester_seed) {
            Ok(scores) => cells_from(run, name, scores),
            Err(e) => failed_cells(run, name, &config.testers, &e.to_string()),
        },
        Method::Baseline(kind) => {
            let k = result.best.n_features();
            let fit_seed = seed::mix(&[run_seed, 0xba5e, *kind as u64]);
            match fit_baseline(*kind, k, &fit_rows.features, &config.baseline_settings, fit_seed) {
                Ok(model) => cells_from(
                    run,
                    name,
                    score(&model.transform(&fit_rows.features), &model.transform(&split.test.features)),
                ),
                Err(e) => {
                    warn!("run {run}: baseline {name} failed: {e}");
                    failed_cells(run, name, &config.testers, &e.to_string())
                }
            }
        }
        Method::External(embedding) => match embedding.split(&split.manifest, n_rows) {
            Ok((train, test)) => cells_from(run, name, score(&train, &test)),
            Err(e) => failed_cells(run, name, &config.testers, &e.to_string()),
        },
    }
}

/// Evolves, tests and archives one run.
fn execute_run(
    run: usize,
    config: &ExperimentConfig,
    inputs: &Inputs,
) -> Result<(CompletedRun, Vec<ScoreCell>), String> {
    let run_seed = config.base_seed + run as u64;
    let dir = run_dir(&config.output_dir, run);
    create_dir(&dir).map_err(|e| e.to_string())?;

    let split = data::split(&inputs.dataset, run_seed).map_err(|e| e.to_string())?;
    write_file(&dir.join("split.json"), json(&split.manifest)).map_err(|e| e.to_string())?;
    let mut evo = config.evolution.clone();
    evo.seed = run_seed;
    write_file(&dir.join("config.json"), json(&RunConfigEcho { run, seed: run_seed, evolution: &evo, campaign: config }))
        .map_err(|e| e.to_string())?;

    let result = run_evolution(&evo, &config.models, &inputs.grammar, &split).map_err(|e| e.to_string())?;
    let complexity = result.best.program.complexity_report().map_err(|e| e.to_string())?;
    write_file(&dir.join("history.csv"), history_csv(&result.history)).map_err(|e| e.to_string())?;
    write_file(&dir.join("best_phenotype.txt"), result.best.program.render()).map_err(|e| e.to_string())?;
    write_file(&dir.join("best.json"), json(&result.best)).map_err(|e| e.to_string())?;

    let mut methods: Vec<(String, Method<'_>)> = vec![(RAW.into(), Method::Raw), (FEDORA.into(), Method::Fedora)];
    methods.extend(config.baselines.iter().map(|&b| (b.name().to_string(), Method::Baseline(b))));
    methods.extend(inputs.embeddings.iter().map(|e| (e.name.clone(), Method::External(e))));
    let n_rows = inputs.dataset.n_rows();
    let scores: Vec<ScoreCell> = methods
        .par_iter()
        .map(|(name, m)| score_method(m, name, run, run_seed, config, &split, &result, n_rows))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    write_file(&dir.join("scores.csv"), scores_csv(&scores)).map_err(|e| e.to_string())?;

    let completed = CompletedRun {
        run,
        seed: run_seed,
        result,
        complexity,
    };
    write_file(&dir.join("run.json"), json(&completed)).map_err(|e| e.to_string())?;
    Ok((completed, scores))
}

#[derive(Serialize)]
struct RunConfigEcho<'a> {
    run: usize,
    seed: u64,
    evolution: &'a fedora_core::evolution::EvolutionConfig,
    campaign: &'a ExperimentConfig,
}

/// Runs every configured run. Config problems fail fast; a run that crashes
/// is recorded with its cause and the campaign continues.
pub fn run_campaign(config: &ExperimentConfig) -> Result<CampaignResult, CampaignError> {
    let inputs = load_inputs(config)?;
    create_dir(&config.output_dir)?;
    write_file(&config.output_dir.join("campaign.toml"), config.to_toml())?;

    let methods = config.methods();
    let mut completed = Vec::new();
    let mut failed = Vec::new();
    let mut scores = Vec::new();
    for run in 0..config.runs {
        let run_seed = config.base_seed + run as u64;
        match execute_run(run, config, &inputs) {
            Ok((done, cells)) => {
                info!(
                    "run {run}: best fitness {:.4} with {} features in {:.1}s",
                    done.result.best.fitness,
                    done.result.best.n_features(),
                    done.result.wall_time_secs
                );
                completed.push(done);
                scores.extend(cells);
            }
            Err(error) => {
                warn!("run {run} failed: {error}");
                let dir = run_dir(&config.output_dir, run);
                create_dir(&dir)?;
                write_file(&dir.join("error.txt"), &error)?;
                for m in &methods {
                    scores.extend(failed_cells(run, m, &config.testers, &error));
                }
                failed.push(FailedRun {
                    run,
                    seed: run_seed,
                    error,
                });
            }
        }
    }
    Ok(CampaignResult {
        config: config.clone(),
        completed,
        failed,
        scores,
    })
}

/// Rebuilds a campaign from its archive directory.
pub fn load_campaign(dir: &Path) -> Result<CampaignResult, CampaignError> {
    let load_err = |message: String| CampaignError::Load {
        path: dir.to_path_buf(),
        message,
    };
    let mut config = ExperimentConfig::load(dir.join("campaign.toml")).map_err(|e| load_err(e.to_string()))?;
    config.output_dir = dir.to_path_buf();
    let mut completed = Vec::new();
    let mut failed = Vec::new();
    let mut scores = Vec::new();
    for run in 0..config.runs {
        let rdir = run_dir(dir, run);
        let run_seed = config.base_seed + run as u64;
        if let Ok(error) = fs::read_to_string(rdir.join("error.txt")) {
            for m in config.methods() {
                scores.extend(failed_cells(run, &m, &config.testers, &error));
            }
            failed.push(FailedRun {
                run,
                seed: run_seed,
                error,
            });
            continue;
        }
        let text = fs::read_to_string(rdir.join("run.json")).map_err(|e| load_err(format!("run {run}: {e}")))?;
        let done: CompletedRun = serde_json::from_str(&text).map_err(|e| load_err(format!("run {run}: {e}")))?;
        let cells = fs::read_to_string(rdir.join("scores.csv")).map_err(|e| load_err(format!("run {run}: {e}")))?;
        scores.extend(parse_scores_csv(&cells).map_err(|e| load_err(format!("run {run}: {e}")))?);
        completed.push(done);
    }
    Ok(CampaignResult {
        config,
        completed,
        failed,
        scores,
    })
}

/// Re-tests an archived best individual from its run directory.
pub fn retest_archived_run(config: &ExperimentConfig, run: usize) -> Result<Vec<ScoreCell>, String> {
    let dir = run_dir(&config.output_dir, run);
    let manifest: SplitManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("split.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let program = fedora_core::FeatureProgram::parse(
        &fs::read_to_string(dir.join("best_phenotype.txt")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let dataset = config.dataset.load().map_err(|e| e.to_string())?;
    let split = SplitDataset::from_manifest(&dataset, manifest);
    let run_seed = config.base_seed + run as u64;
    let scores = test_best(&program, &split, &config.testers, &config.models, seed::mix(&[run_seed, 0x7e57]))
        .map_err(|e| e.to_string())?;
    Ok(cells_from(run, FEDORA, scores))
}
