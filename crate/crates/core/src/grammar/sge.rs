//! Structured grammatical evolution: one integer list per nonterminal, consumed
//! left to right during a leftmost derivation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Grammar, GrammarError, Symbol, FEATURE_SEPARATOR};
use crate::expr::{parse_expr, ExprError, FeatureProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthBounds {
    pub min: usize,
    pub max: usize,
}

impl DepthBounds {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }
}

impl Default for DepthBounds {
    fn default() -> Self {
        Self { min: 3, max: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genotype {
    /// `genes[n][i]` selects the production used at the i-th expansion of nonterminal `n`.
    pub genes: Vec<Vec<usize>>,
    /// Maximum derivation tree height.
    pub depth_bound: usize,
}

impl Genotype {
    pub fn new(genes: Vec<Vec<usize>>, depth_bound: usize) -> Self {
        Self { genes, depth_bound }
    }

    pub fn gene_count(&self) -> usize {
        self.genes.iter().map(Vec::len).sum()
    }

    /// Stable 64-bit FNV-1a fingerprint of the genes.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(self.depth_bound as u64);
        for list in &self.genes {
            feed(u64::MAX);
            for &g in list {
                feed(g as u64);
            }
        }
        h
    }

    /// Checks list count and gene ranges against `grammar`.
    pub fn validate(&self, grammar: &Grammar) -> Result<(), GrammarError> {
        if self.genes.len() != grammar.nonterminals().len() {
            return Err(GrammarError::GrammarMismatch);
        }
        for (nt, list) in self.genes.iter().enumerate() {
            let options = grammar.productions(nt).len();
            if let Some(&value) = list.iter().find(|&&g| g >= options) {
                return Err(GrammarError::InvalidGene {
                    nonterminal: grammar.nonterminals()[nt].clone(),
                    value,
                    options,
                });
            }
        }
        Ok(())
    }
}

/// Result of mapping a genotype through the grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub tokens: Vec<String>,
    /// Height of the derivation tree (a nonterminal expanding to terminals only has height 1).
    pub depth: usize,
    /// Genes that selected a production too deep for the remaining budget and were remapped.
    pub repairs: usize,
    /// Genes consumed per nonterminal.
    pub consumed: Vec<usize>,
}

impl Derivation {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Draws a genotype whose derivation height lies inside `bounds`.
///
/// Each expansion picks uniformly among the productions that can still finish
/// within the remaining budget; while the minimum height is unmet, one child is
/// designated to carry the remaining requirement.
pub fn random_genotype<R: Rng + ?Sized>(
    grammar: &Grammar,
    bounds: DepthBounds,
    rng: &mut R,
) -> Result<Genotype, GrammarError> {
    let unsatisfiable = GrammarError::UnsatisfiableDepth {
        min: bounds.min,
        max: bounds.max,
    };
    if bounds.min < 1 || bounds.min > bounds.max {
        return Err(unsatisfiable);
    }
    let table = MaxHeightTable::new(grammar, bounds.max);
    let start = grammar.start_symbol();
    match table.get(start, bounds.max) {
        Some(h) if h >= bounds.min => {}
        _ => return Err(unsatisfiable),
    }
    let mut genes = vec![Vec::new(); grammar.nonterminals().len()];
    grow(grammar, &table, start, bounds.max, bounds.min, &mut genes, rng);
    Ok(Genotype::new(genes, bounds.max))
}

/// `heights[nt][budget]`: tallest derivation of `nt` that fits in `budget`, if any fits.
struct MaxHeightTable {
    heights: Vec<Vec<Option<usize>>>,
}

impl MaxHeightTable {
    fn new(grammar: &Grammar, max_budget: usize) -> Self {
        let n = grammar.nonterminals().len();
        let mut heights = vec![vec![None; max_budget + 1]; n];
        for budget in 1..=max_budget {
            for nt in 0..n {
                let mut best = None;
                for p in 0..grammar.productions(nt).len() {
                    if grammar.production_min_height(nt, p) > budget {
                        continue;
                    }
                    let h = production_max_height(grammar, &heights, nt, p, budget);
                    best = best.max(Some(h));
                }
                heights[nt][budget] = best;
            }
        }
        Self { heights }
    }

    fn get(&self, nt: usize, budget: usize) -> Option<usize> {
        self.heights[nt].get(budget).copied().flatten()
    }

    fn production(&self, grammar: &Grammar, nt: usize, p: usize, budget: usize) -> usize {
        production_max_height(grammar, &self.heights, nt, p, budget)
    }
}

fn production_max_height(
    grammar: &Grammar,
    heights: &[Vec<Option<usize>>],
    nt: usize,
    p: usize,
    budget: usize,
) -> usize {
    let mut h = 1;
    for sym in &grammar.productions(nt)[p] {
        if let Symbol::NonTerminal(c) = sym {
            let child = heights[*c][budget - 1].expect("feasible production has feasible children");
            h = h.max(child + 1);
        }
    }
    h
}

fn grow<R: Rng + ?Sized>(
    grammar: &Grammar,
    table: &MaxHeightTable,
    nt: usize,
    budget: usize,
    need: usize,
    genes: &mut [Vec<usize>],
    rng: &mut R,
) {
    let candidates: Vec<usize> = (0..grammar.productions(nt).len())
        .filter(|&p| {
            grammar.production_min_height(nt, p) <= budget
                && (need <= 1 || table.production(grammar, nt, p, budget) >= need)
        })
        .collect();
    let p = candidates[rng.random_range(0..candidates.len())];
    genes[nt].push(p);

    let production = &grammar.productions(nt)[p];
    let carrier = if need > 1 {
        let eligible: Vec<usize> = production
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                Symbol::NonTerminal(c) if table.get(*c, budget - 1).is_some_and(|h| h >= need - 1) => Some(i),
                _ => None,
            })
            .collect();
        Some(eligible[rng.random_range(0..eligible.len())])
    } else {
        None
    };
    for (i, sym) in production.iter().enumerate() {
        if let Symbol::NonTerminal(c) = sym {
            let child_need = if Some(i) == carrier { need - 1 } else { 0 };
            grow(grammar, table, *c, budget - 1, child_need, genes, rng);
        }
    }
}

struct Mapper<'a, R: ?Sized> {
    grammar: &'a Grammar,
    genes: Vec<Vec<usize>>,
    cursor: Vec<usize>,
    tokens: Vec<String>,
    repairs: usize,
    extend: Option<&'a mut R>,
}

impl<R: Rng + ?Sized> Mapper<'_, R> {
    fn expand(&mut self, nt: usize, budget: usize) -> Result<usize, GrammarError> {
        let grammar = self.grammar;
        let options = grammar.productions(nt).len();
        let feasible: Vec<usize> = (0..options)
            .filter(|&p| grammar.production_min_height(nt, p) <= budget)
            .collect();
        debug_assert!(!feasible.is_empty());

        let pos = self.cursor[nt];
        let chosen = if pos < self.genes[nt].len() {
            let g = self.genes[nt][pos];
            if g >= options {
                return Err(GrammarError::InvalidGene {
                    nonterminal: grammar.nonterminals()[nt].clone(),
                    value: g,
                    options,
                });
            }
            if grammar.production_min_height(nt, g) <= budget {
                g
            } else {
                let repaired = feasible[g % feasible.len()];
                self.genes[nt][pos] = repaired;
                self.repairs += 1;
                repaired
            }
        } else if let Some(rng) = self.extend.as_deref_mut() {
            let g = feasible[rng.random_range(0..feasible.len())];
            self.genes[nt].push(g);
            g
        } else {
            return Err(GrammarError::GenesExhausted(grammar.nonterminals()[nt].clone()));
        };
        self.cursor[nt] += 1;

        let mut height = 1;
        for sym in &grammar.productions(nt)[chosen] {
            match sym {
                Symbol::Terminal(t) => self.tokens.push(t.clone()),
                Symbol::NonTerminal(c) => {
                    let h = self.expand(*c, budget - 1)?;
                    height = height.max(h + 1);
                }
            }
        }
        Ok(height)
    }
}

fn run_mapper<R: Rng + ?Sized>(
    grammar: &Grammar,
    genotype: &Genotype,
    extend: Option<&mut R>,
) -> Result<(Vec<Vec<usize>>, Derivation), GrammarError> {
    if genotype.genes.len() != grammar.nonterminals().len() {
        return Err(GrammarError::GrammarMismatch);
    }
    let start = grammar.start_symbol();
    if grammar.min_height(start) > genotype.depth_bound {
        return Err(GrammarError::UnsatisfiableDepth {
            min: grammar.min_height(start),
            max: genotype.depth_bound,
        });
    }
    let n = grammar.nonterminals().len();
    let mut mapper = Mapper {
        grammar,
        genes: genotype.genes.clone(),
        cursor: vec![0; n],
        tokens: Vec::new(),
        repairs: 0,
        extend,
    };
    let depth = mapper.expand(start, genotype.depth_bound)?;
    let derivation = Derivation {
        tokens: mapper.tokens,
        depth,
        repairs: mapper.repairs,
        consumed: mapper.cursor,
    };
    Ok((mapper.genes, derivation))
}

/// Deterministic leftmost derivation. Genes selecting a production that no longer
/// fits the depth budget are remapped to `feasible[gene % feasible.len()]` and
/// counted in [`Derivation::repairs`]. Never reads past the end of a gene list.
pub fn map_derivation(grammar: &Grammar, genotype: &Genotype) -> Result<Derivation, GrammarError> {
    run_mapper::<rand_chacha::ChaCha8Rng>(grammar, genotype, None).map(|(_, d)| d)
}

/// Maps a genotype on a feature grammar to its feature program.
pub fn map_genotype(grammar: &Grammar, genotype: &Genotype) -> Result<FeatureProgram, GrammarError> {
    let derivation = map_derivation(grammar, genotype)?;
    let mut program = program_from_tokens(&derivation.tokens)?;
    program.source_genotype_hash = genotype.fingerprint();
    Ok(program)
}

/// Maps `genotype`, drawing fresh genes from `rng` wherever a list runs out, then
/// writes repairs back and trims unused genes. The returned genotype maps without
/// repairs or extension.
pub fn develop<R: Rng + ?Sized>(
    grammar: &Grammar,
    genotype: &Genotype,
    rng: &mut R,
) -> Result<(Genotype, Derivation), GrammarError> {
    let (mut genes, mut derivation) = run_mapper(grammar, genotype, Some(rng))?;
    for (list, &used) in genes.iter_mut().zip(&derivation.consumed) {
        list.truncate(used);
    }
    derivation.repairs = 0;
    Ok((Genotype::new(genes, genotype.depth_bound), derivation))
}

/// Splits a derivation on the feature separator and parses each feature.
pub fn program_from_tokens(tokens: &[String]) -> Result<FeatureProgram, GrammarError> {
    let mut features = Vec::new();
    for chunk in tokens.split(|t| t == FEATURE_SEPARATOR) {
        if chunk.is_empty() {
            return Err(ExprError::Syntax {
                position: 0,
                message: "empty feature".into(),
            }
            .into());
        }
        features.push(parse_expr(&chunk.join(" "))?);
    }
    Ok(FeatureProgram::new(features))
}

/// Uniform per-nonterminal list exchange. `mask[n] == true` sends parent `a`'s
/// list for nonterminal `n` to the first child.
pub fn crossover_with_mask(
    a: &Genotype,
    b: &Genotype,
    mask: &[bool],
) -> Result<(Genotype, Genotype), GrammarError> {
    if a.genes.len() != b.genes.len() || mask.len() != a.genes.len() {
        return Err(GrammarError::GrammarMismatch);
    }
    let mut first = Vec::with_capacity(mask.len());
    let mut second = Vec::with_capacity(mask.len());
    for (n, &from_a) in mask.iter().enumerate() {
        let (x, y) = if from_a { (&a.genes[n], &b.genes[n]) } else { (&b.genes[n], &a.genes[n]) };
        first.push(x.clone());
        second.push(y.clone());
    }
    Ok((
        Genotype::new(first, a.depth_bound),
        Genotype::new(second, b.depth_bound),
    ))
}

pub fn crossover<R: Rng + ?Sized>(
    a: &Genotype,
    b: &Genotype,
    rng: &mut R,
) -> Result<(Genotype, Genotype), GrammarError> {
    if a.genes.len() != b.genes.len() {
        return Err(GrammarError::GrammarMismatch);
    }
    let mask: Vec<bool> = (0..a.genes.len()).map(|_| rng.random_bool(0.5)).collect();
    crossover_with_mask(a, b, &mask)
}

/// Resamples each gene uniformly over its nonterminal's productions with
/// probability `rate`.
pub fn mutate<R: Rng + ?Sized>(grammar: &Grammar, genotype: &Genotype, rate: f64, rng: &mut R) -> Genotype {
    let mut out = genotype.clone();
    for (nt, list) in out.genes.iter_mut().enumerate() {
        let options = grammar.productions(nt).len();
        for g in list.iter_mut() {
            if rng.random::<f64>() < rate {
                *g = rng.random_range(0..options);
            }
        }
    }
    out
}
