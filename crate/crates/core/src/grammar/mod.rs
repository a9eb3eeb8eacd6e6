//! BNF grammars and the structured grammatical evolution (SGE) engine.
//!
//! Grammar files are plain BNF: `<sym> ::= alt1 | alt2`, nonterminals in angle
//! brackets, terminals as bare tokens. A line without `::=` continues the
//! previous rule. Lines starting with `#` are comments. The first rule defines
//! the start symbol and production order defines gene semantics.

mod default;
mod sge;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use default::{default_grammar, default_grammar_text, FEATURE_SEPARATOR};
pub use sge::{
    crossover, crossover_with_mask, develop, map_derivation, map_genotype, mutate, program_from_tokens,
    random_genotype, DepthBounds, Derivation, Genotype,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("nonterminal <{0}> is referenced but never defined")]
    UndefinedNonterminal(String),
    #[error("nonterminal <{0}> has an empty production")]
    EmptyProduction(String),
    #[error("nonterminal <{0}> is defined more than once")]
    DuplicateDefinition(String),
    #[error("nonterminal <{0}> cannot derive a finite string")]
    NonTerminating(String),
    #[error("grammar is empty")]
    Empty,
    #[error("no derivation fits the depth window [{min}, {max}]")]
    UnsatisfiableDepth { min: usize, max: usize },
    #[error("gene {value} for <{nonterminal}> is out of range (only {options} productions)")]
    InvalidGene {
        nonterminal: String,
        value: usize,
        options: usize,
    },
    #[error("genotype ran out of genes for <{0}>")]
    GenesExhausted(String),
    #[error("genotypes were built for different grammars")]
    GrammarMismatch,
    #[error("derivation does not form a feature program: {0}")]
    Phenotype(#[from] crate::expr::ExprError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Terminal(String),
    NonTerminal(usize),
}

/// A parsed context-free grammar. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    nonterminals: Vec<String>,
    productions: Vec<Vec<Vec<Symbol>>>,
    start: usize,
    recursive: Vec<bool>,
    min_height: Vec<usize>,
    production_min_height: Vec<Vec<usize>>,
}

impl Grammar {
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        // (line number, lhs, rhs text)
        let mut rules: Vec<(usize, String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.find("::=") {
                Some(at) => {
                    let lhs = line[..at].trim();
                    let name = lhs
                        .strip_prefix('<')
                        .and_then(|s| s.strip_suffix('>'))
                        .filter(|s| !s.is_empty() && !s.contains(['<', '>']))
                        .ok_or_else(|| GrammarError::Syntax {
                            line: line_no,
                            message: format!("left-hand side `{lhs}` is not a <nonterminal>"),
                        })?;
                    rules.push((line_no, name.to_string(), line[at + 3..].to_string()));
                }
                None => match rules.last_mut() {
                    Some((_, _, rhs)) => {
                        rhs.push(' ');
                        rhs.push_str(line);
                    }
                    None => {
                        return Err(GrammarError::Syntax {
                            line: line_no,
                            message: "continuation line before any rule".into(),
                        })
                    }
                },
            }
        }
        if rules.is_empty() {
            return Err(GrammarError::Empty);
        }

        let mut nonterminals: Vec<String> = Vec::with_capacity(rules.len());
        for (_, name, _) in &rules {
            if nonterminals.contains(name) {
                return Err(GrammarError::DuplicateDefinition(name.clone()));
            }
            nonterminals.push(name.clone());
        }

        let mut productions = Vec::with_capacity(rules.len());
        for (line, name, rhs) in &rules {
            let mut alts = Vec::new();
            for alt in split_alternatives(rhs) {
                let tokens = tokenize(&alt, *line)?;
                if tokens.is_empty() {
                    return Err(GrammarError::EmptyProduction(name.clone()));
                }
                let symbols = tokens
                    .into_iter()
                    .map(|t| match t {
                        Token::NonTerminal(n) => nonterminals
                            .iter()
                            .position(|x| *x == n)
                            .map(Symbol::NonTerminal)
                            .ok_or(GrammarError::UndefinedNonterminal(n)),
                        Token::Terminal(t) => Ok(Symbol::Terminal(t)),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                alts.push(symbols);
            }
            productions.push(alts);
        }
        Self::from_parts(nonterminals, productions, 0)
    }

    fn from_parts(
        nonterminals: Vec<String>,
        productions: Vec<Vec<Vec<Symbol>>>,
        start: usize,
    ) -> Result<Self, GrammarError> {
        let n = nonterminals.len();

        // Reachability closure over the production graph.
        let mut reach = vec![vec![false; n]; n];
        for (a, alts) in productions.iter().enumerate() {
            for sym in alts.iter().flatten() {
                if let Symbol::NonTerminal(b) = sym {
                    reach[a][*b] = true;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        let recursive = (0..n).map(|i| reach[i][i]).collect();

        // Least derivation height per nonterminal (fixpoint).
        let mut min_height = vec![usize::MAX; n];
        loop {
            let mut changed = false;
            for (a, alts) in productions.iter().enumerate() {
                for alt in alts {
                    if let Some(h) = production_height(alt, &min_height) {
                        if h < min_height[a] {
                            min_height[a] = h;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(a) = min_height.iter().position(|&h| h == usize::MAX) {
            return Err(GrammarError::NonTerminating(nonterminals[a].clone()));
        }
        let production_min_height = productions
            .iter()
            .map(|alts| {
                alts.iter()
                    .map(|alt| production_height(alt, &min_height).expect("all heights finite"))
                    .collect()
            })
            .collect();

        Ok(Self {
            nonterminals,
            productions,
            start,
            recursive,
            min_height,
            production_min_height,
        })
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn nonterminal_index(&self, name: &str) -> Option<usize> {
        self.nonterminals.iter().position(|n| n == name)
    }

    pub fn productions(&self, nt: usize) -> &[Vec<Symbol>] {
        &self.productions[nt]
    }

    pub fn start_symbol(&self) -> usize {
        self.start
    }

    /// True iff the nonterminal can derive itself.
    pub fn is_recursive(&self, nt: usize) -> bool {
        self.recursive[nt]
    }

    pub fn recursion_flags(&self) -> &[bool] {
        &self.recursive
    }

    /// Height of the shallowest derivation tree rooted at `nt`.
    pub fn min_height(&self, nt: usize) -> usize {
        self.min_height[nt]
    }

    pub(crate) fn production_min_height(&self, nt: usize, production: usize) -> usize {
        self.production_min_height[nt][production]
    }

    /// Canonical text form; `Grammar::parse(&g.serialize()) == g`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (a, alts) in self.productions.iter().enumerate() {
            out.push('<');
            out.push_str(&self.nonterminals[a]);
            out.push_str("> ::=");
            for (i, alt) in alts.iter().enumerate() {
                if i > 0 {
                    out.push_str(" |");
                }
                for sym in alt {
                    out.push(' ');
                    match sym {
                        Symbol::Terminal(t) => out.push_str(t),
                        Symbol::NonTerminal(b) => {
                            out.push('<');
                            out.push_str(&self.nonterminals[*b]);
                            out.push('>');
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl std::str::FromStr for Grammar {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Grammar::parse(s)
    }
}

fn production_height(alt: &[Symbol], heights: &[usize]) -> Option<usize> {
    let mut deepest = 0;
    for sym in alt {
        if let Symbol::NonTerminal(b) = sym {
            let h = heights[*b];
            if h == usize::MAX {
                return None;
            }
            deepest = deepest.max(h);
        }
    }
    Some(deepest + 1)
}

/// Splits on `|` outside angle brackets.
fn split_alternatives(rhs: &str) -> Vec<String> {
    let mut alts = vec![String::new()];
    let mut in_angle = false;
    for c in rhs.chars() {
        match c {
            '<' => in_angle = true,
            '>' => in_angle = false,
            '|' if !in_angle => {
                alts.push(String::new());
                continue;
            }
            _ => {}
        }
        alts.last_mut().unwrap().push(c);
    }
    alts
}

enum Token {
    Terminal(String),
    NonTerminal(String),
}

fn tokenize(alt: &str, line: usize) -> Result<Vec<Token>, GrammarError> {
    let mut tokens = Vec::new();
    let mut chars = alt.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '<' {
            chars.next();
            let mut name = String::new();
            loop {
                match chars.next() {
                    Some('>') => break,
                    Some(ch) => name.push(ch),
                    None => {
                        return Err(GrammarError::Syntax {
                            line,
                            message: format!("unterminated nonterminal `<{name}`"),
                        })
                    }
                }
            }
            if name.is_empty() {
                return Err(GrammarError::Syntax {
                    line,
                    message: "empty nonterminal name `<>`".into(),
                });
            }
            tokens.push(Token::NonTerminal(name));
        } else {
            let mut term = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '<' {
                    break;
                }
                term.push(ch);
                chars.next();
            }
            tokens.push(Token::Terminal(term));
        }
    }
    Ok(tokens)
}
