//! Kruskal-Wallis omnibus test, Dunn posthoc with Bonferroni correction and
//! Cliff's delta effect sizes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("at least two groups are required, got {0}")]
    TooFewGroups(usize),
    #[error("group `{0}` is empty")]
    EmptyGroup(String),
    #[error("at least 5 observations are required, got {0}")]
    TooFewObservations(usize),
    #[error("group `{0}` contains a non-finite score")]
    NonFinite(String),
    #[error("{names} names for {groups} groups")]
    NameMismatch { names: usize, groups: usize },
}

/// Named samples, one per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGroups {
    names: Vec<String>,
    groups: Vec<Vec<f64>>,
}

impl ScoreGroups {
    pub fn new(names: Vec<String>, groups: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        if names.len() != groups.len() {
            return Err(StatsError::NameMismatch {
                names: names.len(),
                groups: groups.len(),
            });
        }
        if groups.len() < 2 {
            return Err(StatsError::TooFewGroups(groups.len()));
        }
        for (name, g) in names.iter().zip(&groups) {
            if g.is_empty() {
                return Err(StatsError::EmptyGroup(name.clone()));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite(name.clone()));
            }
        }
        Ok(Self { names, groups })
    }

    /// Groups named `g0`, `g1`, ...
    pub fn unnamed(groups: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let names = (0..groups.len()).map(|i| format!("g{i}")).collect();
        Self::new(names, groups)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

/// Midranks (1-based) of `values` plus the tie term `sum(t^3 - t)`.
pub fn ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            out[idx] = rank;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (out, ties)
}

struct Pooled {
    mean_ranks: Vec<f64>,
    rank_sums: Vec<f64>,
    sizes: Vec<f64>,
    n: f64,
    ties: f64,
}

fn pool(groups: &ScoreGroups) -> Pooled {
    let values: Vec<f64> = groups.groups.iter().flatten().copied().collect();
    let (r, ties) = ranks(&values);
    let mut rank_sums = Vec::with_capacity(groups.len());
    let mut sizes = Vec::with_capacity(groups.len());
    let mut start = 0;
    for g in &groups.groups {
        rank_sums.push(r[start..start + g.len()].iter().sum::<f64>());
        sizes.push(g.len() as f64);
        start += g.len();
    }
    Pooled {
        mean_ranks: rank_sums.iter().zip(&sizes).map(|(s, n)| s / n).collect(),
        rank_sums,
        sizes,
        n: values.len() as f64,
        ties,
    }
}

/// Upper tail of the chi-squared distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(df / 2.0, x / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub p: f64,
    pub df: usize,
    /// Every score is equal, so `h` is undefined; reported as 0 with p = 1.
    pub all_identical: bool,
}

pub fn kruskal_wallis(groups: &ScoreGroups) -> Result<KruskalWallis, StatsError> {
    let total = groups.total();
    if total < 5 {
        return Err(StatsError::TooFewObservations(total));
    }
    let df = groups.len() - 1;
    let pooled = pool(groups);
    let n = pooled.n;
    let correction = 1.0 - pooled.ties / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KruskalWallis {
            h: 0.0,
            p: 1.0,
            df,
            all_identical: true,
        });
    }
    let sum: f64 = pooled
        .rank_sums
        .iter()
        .zip(&pooled.sizes)
        .map(|(r, size)| r * r / size)
        .sum();
    let h = (12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction;
    Ok(KruskalWallis {
        h,
        p: chi2_sf(h, df as f64),
        df,
        all_identical: false,
    })
}

/// Symmetric pairwise Dunn results; diagonals are z = 0 and p = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnMatrix {
    pub names: Vec<String>,
    pub z: Vec<Vec<f64>>,
    pub p_raw: Vec<Vec<f64>>,
    pub p_adjusted: Vec<Vec<f64>>,
}

pub fn dunn_posthoc(groups: &ScoreGroups) -> Result<DunnMatrix, StatsError> {
    let total = groups.total();
    if total < 5 {
        return Err(StatsError::TooFewObservations(total));
    }
    let k = groups.len();
    let pooled = pool(groups);
    let n = pooled.n;
    let variance = n * (n + 1.0) / 12.0 - pooled.ties / (12.0 * (n - 1.0));
    let pairs = (k * (k - 1) / 2) as f64;
    let mut z = vec![vec![0.0; k]; k];
    let mut p_raw = vec![vec![1.0; k]; k];
    let mut p_adjusted = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let se = (variance * (1.0 / pooled.sizes[i] + 1.0 / pooled.sizes[j])).sqrt();
            let diff = (pooled.mean_ranks[i] - pooled.mean_ranks[j]).abs();
            // all-identical scores give se = 0 and no evidence of a difference
            let zij = if se > 0.0 { diff / se } else { 0.0 };
            let p = erfc(zij / std::f64::consts::SQRT_2);
            z[i][j] = zij;
            z[j][i] = zij;
            p_raw[i][j] = p;
            p_raw[j][i] = p;
            p_adjusted[i][j] = (p * pairs).min(1.0);
            p_adjusted[j][i] = p_adjusted[i][j];
        }
    }
    Ok(DunnMatrix {
        names: groups.names.clone(),
        z,
        p_raw,
        p_adjusted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub const SMALL: f64 = 0.147;
    pub const MEDIUM: f64 = 0.33;
    pub const LARGE: f64 = 0.474;

    pub fn of(delta: f64) -> Self {
        let d = delta.abs();
        if d < Self::SMALL {
            Magnitude::Negligible
        } else if d < Self::MEDIUM {
            Magnitude::Small
        } else if d < Self::LARGE {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Magnitude::Negligible => "~",
            Magnitude::Small => "+",
            Magnitude::Medium => "++",
            Magnitude::Large => "+++",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub delta: f64,
    pub magnitude: Magnitude,
}

impl EffectSize {
    pub fn from_delta(delta: f64) -> Self {
        Self {
            delta,
            magnitude: Magnitude::of(delta),
        }
    }
}

/// Cliff's delta of `a` over `b`; positive when `a` tends to be larger.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<EffectSize, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyGroup(if a.is_empty() { "a" } else { "b" }.into()));
    }
    // count via a sorted copy of b: O((m + n) log n)
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &x in a {
        let below = sorted.partition_point(|&y| y < x) as i64;
        let not_above = sorted.partition_point(|&y| y <= x) as i64;
        let above = sorted.len() as i64 - not_above;
        dominance += below - above;
    }
    Ok(EffectSize::from_delta(dominance as f64 / (a.len() * b.len()) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posthoc {
    pub dunn: DunnMatrix,
    /// `effects[i][j]` is Cliff's delta of group i over group j.
    pub effects: Vec<Vec<EffectSize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub names: Vec<String>,
    pub alpha: f64,
    pub omnibus: KruskalWallis,
    /// Present only when the omnibus test is significant.
    pub posthoc: Option<Posthoc>,
}

pub fn comparison_report(groups: &ScoreGroups, alpha: f64) -> Result<ComparisonReport, StatsError> {
    let omnibus = kruskal_wallis(groups)?;
    let posthoc = if omnibus.p < alpha {
        let dunn = dunn_posthoc(groups)?;
        let mut effects = Vec::with_capacity(groups.len());
        for a in &groups.groups {
            let row = groups
                .groups
                .iter()
                .map(|b| cliffs_delta(a, b))
                .collect::<Result<Vec<_>, _>>()?;
            effects.push(row);
        }
        Some(Posthoc { dunn, effects })
    } else {
        None
    };
    Ok(ComparisonReport {
        names: groups.names.clone(),
        alpha,
        omnibus,
        posthoc,
    })
}

impl ComparisonReport {
    /// Effect-size symbol for a significant pair, `None` otherwise.
    pub fn symbol(&self, i: usize, j: usize) -> Option<&'static str> {
        let post = self.posthoc.as_ref()?;
        if i == j || post.dunn.p_adjusted[i][j] >= self.alpha {
            return None;
        }
        Some(post.effects[i][j].magnitude.symbol())
    }

    pub fn posthoc_performed(&self) -> bool {
        self.posthoc.is_some()
    }

    /// One row per unordered pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group_a,group_b,z,p_raw,p_adjusted,delta,magnitude,symbol\n");
        let Some(post) = &self.posthoc else {
            return out;
        };
        for i in 0..self.names.len() {
            for j in 0..i {
                let e = post.effects[i][j];
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    self.names[i],
                    self.names[j],
                    post.dunn.z[i][j],
                    post.dunn.p_raw[i][j],
                    post.dunn.p_adjusted[i][j],
                    e.delta,
                    e.magnitude.name(),
                    self.symbol(i, j).unwrap_or("")
                );
            }
        }
        out
    }

    /// Lower-triangular table: rows are methods 2..g, columns methods 1..g-1.
    /// Cells on or above the diagonal are shaded with `#`.
    pub fn render_table(&self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Kruskal-Wallis H = {:.4}, df = {}, p = {:.4e}",
            self.omnibus.h, self.omnibus.df, self.omnibus.p
        );
        if self.posthoc.is_none() {
            let _ = writeln!(out, "no posthoc performed (p >= {})", self.alpha);
            return out;
        }
        let k = self.names.len();
        let mut header = vec![title.to_string()];
        header.extend(self.names[..k - 1].iter().cloned());
        let mut rows = vec![header];
        for i in 1..k {
            let mut row = vec![self.names[i].clone()];
            for j in 0..k - 1 {
                let cell = if j >= i { "#" } else { self.symbol(i, j).unwrap_or("") };
                row.push(cell.to_string());
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..k)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        for (ri, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
            if ri == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "| {} |", rule.join(" | "));
            }
        }
        out
    }
}
