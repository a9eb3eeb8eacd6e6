use std::fs;
use std::path::{Path, PathBuf};

use crate::campaign::{scores_csv, CampaignError, CampaignResult};
use crate::svg;

pub const FITNESS_CURVES: &str = "fitness_curves.csv";
pub const FEATURE_EVOLUTION: &str = "feature_evolution.csv";
pub const COMPLEXITY_RATIOS: &str = "complexity_ratios.csv";
pub const FEATURE_COUNTS: &str = "feature_counts.csv";
pub const COMPARISON: &str = "comparison.csv";

/// Per-generation means across runs; generation `g` averages `history[g]`
/// over every completed run that reached it.
fn per_generation(campaign: &CampaignResult, f: impl Fn(&fedora_core::evolution::GenerationRecord) -> f64) -> Vec<f64> {
    let histories = campaign.histories();
    let len = histories.iter().map(|h| h.len()).max().unwrap_or(0);
    (0..len)
        .map(|g| {
            let vals: Vec<f64> = histories.iter().filter_map(|h| h.get(g)).map(&f).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect()
}

fn write(out_dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), CampaignError> {
    let path = out_dir.join(name);
    fs::write(&path, contents).map_err(|source| CampaignError::Write {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

/// Writes the five summary CSVs and, when `with_svg` is set, a chart for each.
pub fn emit_summary(campaign: &CampaignResult, out_dir: &Path, with_svg: bool) -> Result<Vec<PathBuf>, CampaignError> {
    if campaign.completed.is_empty() {
        return Err(CampaignError::NoCompletedRuns);
    }
    fs::create_dir_all(out_dir).map_err(|source| CampaignError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();

    let mean_fitness = per_generation(campaign, |h| h.mean_fitness);
    let best_fitness = per_generation(campaign, |h| h.best_fitness);
    let mut curves = String::from("generation,mean_population_fitness,mean_best_fitness\n");
    for (g, (m, b)) in mean_fitness.iter().zip(&best_fitness).enumerate() {
        curves.push_str(&format!("{g},{m},{b}\n"));
    }
    write(out_dir, FITNESS_CURVES, &curves, &mut written)?;

    let pop = per_generation(campaign, |h| h.mean_feature_count);
    let best = per_generation(campaign, |h| h.best_feature_count as f64);
    let min = per_generation(campaign, |h| h.min_feature_count as f64);
    let max = per_generation(campaign, |h| h.max_feature_count as f64);
    let mut features = String::from("generation,population_mean,best_mean,min_mean,max_mean\n");
    for g in 0..pop.len() {
        features.push_str(&format!("{g},{},{},{},{}\n", pop[g], best[g], min[g], max[g]));
    }
    write(out_dir, FEATURE_EVOLUTION, &features, &mut written)?;

    let mut ratios = String::from("run,n_total,n_original,n_engineered,n_complex,r_o,r_e,r_c\n");
    let mut counts = String::from("run,n_features\n");
    for r in &campaign.completed {
        let c = &r.complexity;
        ratios.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.run, c.n_total, c.n_selected, c.n_engineered, c.n_complex, c.r_o, c.r_e, c.r_c
        ));
        counts.push_str(&format!("{},{}\n", r.run, c.n_total));
    }
    write(out_dir, COMPLEXITY_RATIOS, &ratios, &mut written)?;
    write(out_dir, FEATURE_COUNTS, &counts, &mut written)?;
    write(out_dir, COMPARISON, &scores_csv(&campaign.scores), &mut written)?;

    if with_svg {
        let chart = svg::line_chart(
            "Fitness over generations",
            &[("population mean", mean_fitness.clone()), ("best", best_fitness.clone())],
        );
        write(out_dir, "fitness_curves.svg", &chart, &mut written)?;
        let chart = svg::line_chart(
            "Feature count over generations",
            &[("population", pop), ("best", best), ("min", min), ("max", max)],
        );
        write(out_dir, "feature_evolution.svg", &chart, &mut written)?;
        let pick = |f: fn(&fedora_core::ComplexityReport) -> f64| {
            campaign.completed.iter().map(|r| f(&r.complexity)).collect::<Vec<f64>>()
        };
        let chart = svg::line_chart(
            "Feature classes of the best individual per run",
            &[("R_O", pick(|c| c.r_o)), ("R_E", pick(|c| c.r_e)), ("R_C", pick(|c| c.r_c))],
        );
        write(out_dir, "complexity_ratios.svg", &chart, &mut written)?;
        let chart = svg::line_chart(
            "Features of the best individual per run",
            &[("features", pick(|c| c.n_total as f64))],
        );
        write(out_dir, "feature_counts.svg", &chart, &mut written)?;
        let methods = campaign.config.methods();
        let mut groups = Vec::new();
        for tester in &campaign.config.testers {
            for m in &methods {
                let values = campaign
                    .scores
                    .iter()
                    .filter(|c| &c.method == m && c.tester == tester.name())
                    .filter_map(|c| c.balanced_accuracy)
                    .collect();
                groups.push((format!("{m}/{tester}"), values));
            }
        }
        write(out_dir, "comparison.svg", &svg::box_chart("Test balanced accuracy", &groups), &mut written)?;
    }
    Ok(written)
}
