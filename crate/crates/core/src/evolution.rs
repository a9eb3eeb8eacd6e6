//! Generational SGE with tournament selection, elitism and proxy-model fitness.

use std::cmp::Ordering;
use std::time::Instant;

use log::{debug, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SplitDataset;
use crate::expr::{ExprError, FeatureProgram};
use crate::grammar::{self, DepthBounds, Genotype, Grammar, GrammarError};
use crate::models::{balanced_accuracy, fit_classifier, ModelError, ModelKind, ModelSettings};
use crate::seed;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid evolution config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Transform(#[from] ExprError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub elitism_fraction: f64,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub depth_min: usize,
    pub depth_max: usize,
    pub proxy: ModelKind,
    pub seed: u64,
    /// Added to the validation error per feature when ranking individuals.
    /// Zero disables the parsimony pressure.
    pub feature_penalty: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 200,
            generations: 100,
            elitism_fraction: 0.10,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            tournament_size: 3,
            depth_min: 3,
            depth_max: 10,
            proxy: ModelKind::DecisionTree,
            seed: 0,
            feature_penalty: 0.0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let fail = |m: &str| Err(EvolutionError::ConfigInvalid(m.to_string()));
        if self.population_size < 2 {
            return fail("population_size must be at least 2");
        }
        if self.generations < 1 {
            return fail("generations must be at least 1");
        }
        if !(self.elitism_fraction > 0.0 && self.elitism_fraction < 1.0) {
            return fail("elitism_fraction must lie strictly between 0 and 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return fail("crossover_rate and mutation_rate must lie in [0, 1]");
        }
        if self.tournament_size < 1 {
            return fail("tournament_size must be at least 1");
        }
        if self.depth_min < 1 || self.depth_min > self.depth_max {
            return fail("depth bounds must satisfy 1 <= depth_min <= depth_max");
        }
        if self.proxy == ModelKind::Mlp {
            return fail("proxy must be a tree-based model");
        }
        if !(self.feature_penalty >= 0.0) {
            return fail("feature_penalty must be non-negative");
        }
        Ok(())
    }

    /// Number of individuals copied unchanged into each new generation.
    pub fn elite_count(&self) -> usize {
        ((self.elitism_fraction * self.population_size as f64).ceil() as usize).min(self.population_size)
    }

    fn depth_bounds(&self) -> DepthBounds {
        DepthBounds::new(self.depth_min, self.depth_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genotype: Genotype,
    pub program: FeatureProgram,
    /// `1 - balanced accuracy` on the validation subset.
    pub fitness: f64,
    /// Position in creation order across the whole run.
    pub created: u64,
}

impl Individual {
    pub fn n_features(&self) -> usize {
        self.program.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub mean_feature_count: f64,
    pub best_feature_count: usize,
    pub min_feature_count: usize,
    pub max_feature_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub best: Individual,
    pub history: Vec<GenerationRecord>,
    pub config: EvolutionConfig,
    pub wall_time_secs: f64,
}

/// Fits the proxy on the transformed training rows and returns
/// `1 - balanced accuracy` on the transformed validation rows.
pub fn evaluate_individual(
    program: &FeatureProgram,
    split: &SplitDataset,
    proxy: ModelKind,
    settings: &ModelSettings,
    seed: u64,
) -> Result<f64, EvolutionError> {
    let train = program.evaluate(&split.train.features)?;
    let validation = program.evaluate(&split.validation.features)?;
    let model = fit_classifier(proxy, settings, &train, &split.train.labels, seed)?;
    let predicted = model.predict(&validation);
    match balanced_accuracy(&split.validation.labels, &predicted) {
        Ok(ba) => Ok(1.0 - ba),
        Err(ModelError::SingleClassTruth) => {
            warn!("validation subset holds a single class; assigning worst fitness");
            Ok(1.0)
        }
        Err(e) => Err(e.into()),
    }
}

/// Per-tester test balanced accuracy of a feature program. Each tester is
/// trained on the transformed train and validation rows together.
pub fn test_best(
    program: &FeatureProgram,
    split: &SplitDataset,
    testers: &[ModelKind],
    settings: &ModelSettings,
    seed: u64,
) -> Result<Vec<(ModelKind, Result<f64, ModelError>)>, ExprError> {
    let fit_rows = split.train.concat(&split.validation);
    let train = program.evaluate(&fit_rows.features)?;
    let test = program.evaluate(&split.test.features)?;
    Ok(score_features(&train, &fit_rows.labels, &test, &split.test.labels, testers, settings, seed))
}

/// Trains every tester on `(train_x, train_y)` and scores it on the test rows.
pub fn score_features(
    train_x: &crate::Matrix,
    train_y: &[usize],
    test_x: &crate::Matrix,
    test_y: &[usize],
    testers: &[ModelKind],
    settings: &ModelSettings,
    seed: u64,
) -> Vec<(ModelKind, Result<f64, ModelError>)> {
    testers
        .iter()
        .map(|&kind| {
            let tester_seed = seed::mix(&[seed, kind as u64]);
            let score = fit_classifier(kind, settings, train_x, train_y, tester_seed)
                .and_then(|m| balanced_accuracy(test_y, &m.predict(test_x)));
            (kind, score)
        })
        .collect()
}

/// Ranking used by both elitism and tournaments: penalised fitness, then fewer
/// features, then earlier creation.
fn rank(a: &Individual, b: &Individual, penalty: f64) -> Ordering {
    let score = |i: &Individual| i.fitness + penalty * i.n_features() as f64;
    score(a)
        .total_cmp(&score(b))
        .then(a.n_features().cmp(&b.n_features()))
        .then(a.created.cmp(&b.created))
}

fn tournament<'p, R: Rng + ?Sized>(
    population: &'p [Individual],
    size: usize,
    penalty: f64,
    rng: &mut R,
) -> &'p Individual {
    let mut winner = &population[rng.random_range(0..population.len())];
    for _ in 1..size {
        let challenger = &population[rng.random_range(0..population.len())];
        if rank(challenger, winner, penalty) == Ordering::Less {
            winner = challenger;
        }
    }
    winner
}

fn record(generation: usize, population: &[Individual]) -> GenerationRecord {
    let n = population.len() as f64;
    let best = &population[0];
    GenerationRecord {
        generation,
        best_fitness: best.fitness,
        mean_fitness: population.iter().map(|i| i.fitness).sum::<f64>() / n,
        mean_feature_count: population.iter().map(|i| i.n_features() as f64).sum::<f64>() / n,
        best_feature_count: best.n_features(),
        min_feature_count: population.iter().map(Individual::n_features).min().unwrap_or(0),
        max_feature_count: population.iter().map(Individual::n_features).max().unwrap_or(0),
    }
}

/// Runs the generational loop. The initial population is generation 0 and
/// `config.generations` records are produced in total.
pub fn run_evolution(
    config: &EvolutionConfig,
    settings: &ModelSettings,
    grammar: &Grammar,
    split: &SplitDataset,
) -> Result<RunResult, EvolutionError> {
    config.validate()?;
    let started = Instant::now();
    let mut rng = seed::rng_from(seed::mix(&[config.seed, 0xe70]));
    let mut created: u64 = 0;

    let evaluate_all = |genotypes: Vec<(Genotype, FeatureProgram)>,
                        generation: usize,
                        first_created: u64|
     -> Result<Vec<Individual>, EvolutionError> {
        genotypes
            .into_par_iter()
            .enumerate()
            .map(|(idx, (genotype, program))| {
                let eval_seed = seed::mix(&[config.seed, generation as u64, idx as u64]);
                let fitness = evaluate_individual(&program, split, config.proxy, settings, eval_seed)?;
                Ok(Individual {
                    genotype,
                    program,
                    fitness,
                    created: first_created + idx as u64,
                })
            })
            .collect()
    };

    let mut initial = Vec::with_capacity(config.population_size);
    for _ in 0..config.population_size {
        let genotype = grammar::random_genotype(grammar, config.depth_bounds(), &mut rng)?;
        let program = grammar::map_genotype(grammar, &genotype)?;
        initial.push((genotype, program));
    }
    let mut population = evaluate_all(initial, 0, created)?;
    created += population.len() as u64;
    population.sort_by(|a, b| rank(a, b, config.feature_penalty));
    let mut history = vec![record(0, &population)];
    debug!("generation 0: best {:.4}", population[0].fitness);

    let n_elite = config.elite_count();
    for generation in 1..config.generations {
        let n_offspring = config.population_size - n_elite;
        let mut children: Vec<Genotype> = Vec::with_capacity(n_offspring + 1);
        while children.len() < n_offspring {
            let a = tournament(&population, config.tournament_size, config.feature_penalty, &mut rng);
            let b = tournament(&population, config.tournament_size, config.feature_penalty, &mut rng);
            let (c1, c2) = if rng.random::<f64>() < config.crossover_rate {
                grammar::crossover(&a.genotype, &b.genotype, &mut rng)?
            } else {
                (a.genotype.clone(), b.genotype.clone())
            };
            children.push(grammar::mutate(grammar, &c1, config.mutation_rate, &mut rng));
            children.push(grammar::mutate(grammar, &c2, config.mutation_rate, &mut rng));
        }
        children.truncate(n_offspring);

        let mut developed = Vec::with_capacity(children.len());
        for child in &children {
            let (genotype, _) = grammar::develop(grammar, child, &mut rng)?;
            let program = grammar::map_genotype(grammar, &genotype)?;
            developed.push((genotype, program));
        }
        let offspring = evaluate_all(developed, generation, created)?;
        created += offspring.len() as u64;

        population.truncate(n_elite);
        population.extend(offspring);
        population.sort_by(|a, b| rank(a, b, config.feature_penalty));
        history.push(record(generation, &population));
        debug!("generation {generation}: best {:.4}", population[0].fitness);
    }

    Ok(RunResult {
        best: population.swap_remove(0),
        history,
        config: config.clone(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth_interaction};
    use crate::expr::{parse_expr, Expr};
    use crate::grammar::default_grammar;

    fn small_config(seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            population_size: 12,
            generations: 4,
            seed,
            ..EvolutionConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(EvolutionConfig::default().validate().is_ok());
        let bad = [
            EvolutionConfig { elitism_fraction: 0.0, ..Default::default() },
            EvolutionConfig { elitism_fraction: 1.0, ..Default::default() },
            EvolutionConfig { tournament_size: 0, ..Default::default() },
            EvolutionConfig { crossover_rate: 1.5, ..Default::default() },
            EvolutionConfig { depth_min: 11, ..Default::default() },
            EvolutionConfig { proxy: ModelKind::Mlp, ..Default::default() },
            EvolutionConfig { generations: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(EvolutionError::ConfigInvalid(_))), "{c:?}");
        }
        assert_eq!(EvolutionConfig::default().elite_count(), 20);
        assert_eq!(EvolutionConfig { population_size: 4, ..Default::default() }.elite_count(), 1);
    }

    #[test]
    fn fitness_of_perfect_and_constant_programs() {
        let ds = synth_interaction(300, 0.0, 1);
        let s = split(&ds, 1).unwrap();
        let settings = ModelSettings::default();
        let product = FeatureProgram::new(vec![parse_expr("x0 * x1").unwrap()]);
        let f = evaluate_individual(&product, &s, ModelKind::DecisionTree, &settings, 0).unwrap();
        assert_eq!(f, 0.0);

        // x0 - x0 is constant, so the proxy predicts one class everywhere
        let constant = FeatureProgram::new(vec![parse_expr("x0 - x0").unwrap()]);
        let f = evaluate_individual(&constant, &s, ModelKind::DecisionTree, &settings, 0).unwrap();
        assert_eq!(f, 0.5);
    }

    #[test]
    fn product_feature_with_depth_five_tree() {
        let ds = synth_interaction(600, 0.05, 2);
        let s = split(&ds, 2).unwrap();
        let settings = ModelSettings {
            decision_tree: crate::models::TreeParams::with_max_depth(5),
            ..ModelSettings::default()
        };
        let product = FeatureProgram::new(vec![Expr::binary(crate::expr::BinOp::Mul, Expr::Var(0), Expr::Var(1))]);
        let f = evaluate_individual(&product, &s, ModelKind::DecisionTree, &settings, 0).unwrap();
        assert!(f <= 0.1, "fitness {f}");
    }

    #[test]
    fn single_generation_run_is_reproducible() {
        let ds = synth_interaction(200, 0.05, 3);
        let s = split(&ds, 3).unwrap();
        let g = default_grammar(6, 10).unwrap();
        let cfg = EvolutionConfig {
            population_size: 4,
            generations: 1,
            seed: 5,
            ..EvolutionConfig::default()
        };
        let a = run_evolution(&cfg, &ModelSettings::default(), &g, &s).unwrap();
        let b = run_evolution(&cfg, &ModelSettings::default(), &g, &s).unwrap();
        assert_eq!(a.history.len(), 1);
        assert_eq!(a.history, b.history);
        assert_eq!(a.best, b.best);
    }

    #[test]
    fn best_fitness_never_increases() {
        let ds = synth_interaction(200, 0.1, 4);
        let s = split(&ds, 4).unwrap();
        let g = default_grammar(6, 10).unwrap();
        for proxy in [ModelKind::DecisionTree, ModelKind::RandomForest] {
            let cfg = EvolutionConfig { proxy, ..small_config(8) };
            let r = run_evolution(&cfg, &ModelSettings::default(), &g, &s).unwrap();
            assert_eq!(r.history.len(), 4);
            for w in r.history.windows(2) {
                assert!(w[1].best_fitness <= w[0].best_fitness);
            }
            assert_eq!(r.best.fitness, r.history.last().unwrap().best_fitness);
            for h in &r.history {
                assert!(h.min_feature_count >= 1 && h.max_feature_count <= 10);
            }
        }
    }

    #[test]
    fn no_variation_keeps_best_genotype() {
        let ds = synth_interaction(200, 0.1, 5);
        let s = split(&ds, 5).unwrap();
        let g = default_grammar(6, 10).unwrap();
        let mut cfg = EvolutionConfig {
            crossover_rate: 0.0,
            mutation_rate: 0.0,
            ..small_config(9)
        };
        cfg.generations = 1;
        let first = run_evolution(&cfg, &ModelSettings::default(), &g, &s).unwrap();
        cfg.generations = 5;
        let last = run_evolution(&cfg, &ModelSettings::default(), &g, &s).unwrap();
        assert_eq!(first.best.genotype, last.best.genotype);
        assert!(last.history.iter().all(|h| h.best_fitness == first.best.fitness));
    }

    #[test]
    fn feature_penalty_prefers_smaller_programs() {
        let ds = synth_interaction(200, 0.1, 6);
        let s = split(&ds, 6).unwrap();
        let g = default_grammar(6, 10).unwrap();
        let cfg = EvolutionConfig {
            feature_penalty: 1.0,
            ..small_config(10)
        };
        let r = run_evolution(&cfg, &ModelSettings::default(), &g, &s).unwrap();
        assert_eq!(r.best.n_features(), r.history.last().unwrap().min_feature_count);
    }

    #[test]
    fn identity_program_matches_raw_testers() {
        let ds = synth_interaction(200, 0.1, 7);
        let s = split(&ds, 7).unwrap();
        let settings = ModelSettings::default();
        let testers = ModelKind::ALL;
        let via_program = test_best(&FeatureProgram::identity(6), &s, &testers, &settings, 3).unwrap();
        let fit_rows = s.train.concat(&s.validation);
        let raw = score_features(&fit_rows.features, &fit_rows.labels, &s.test.features, &s.test.labels, &testers, &settings, 3);
        assert_eq!(via_program, raw);
        let again = test_best(&FeatureProgram::identity(6), &s, &testers, &settings, 3).unwrap();
        assert_eq!(via_program, again);
    }
}
