//! End-to-end acceptance suite. Run with
//! `cargo test -p fedora-cli --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use fedora_cli::config::EmbeddingSource;
use fedora_cli::summary::COMPARISON;
use fedora_cli::{emit_summary, run_campaign, stats_command, DatasetSource, ExperimentConfig};
use fedora_core::baselines::{fit_autoencoder, fit_pca, AeParams};
use fedora_core::data::{split, synth_interaction};
use fedora_core::evolution::{run_evolution, EvolutionConfig};
use fedora_core::expr::{parse_expr, FeatureClass};
use fedora_core::grammar::{default_grammar, map_derivation, map_genotype, random_genotype, DepthBounds};
use fedora_core::models::nn::finite_difference_error;
use fedora_core::models::{fit_mlp, MlpParams, ModelKind, ModelSettings};
use fedora_core::seed::rng_from;
use fedora_core::stats::{cliffs_delta, dunn_posthoc, kruskal_wallis, Magnitude, ScoreGroups};
use fedora_core::{ComplexityReport, FeatureProgram, Matrix};
use serde::Deserialize;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn surrogate_config(out: &Path, runs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        DatasetSource::Synthetic {
            n: 600,
            noise: 0.05,
            seed: 0,
        },
        out,
    );
    cfg.runs = runs;
    cfg.evolution.population_size = 50;
    cfg.evolution.generations = 30;
    cfg.evolution.proxy = ModelKind::DecisionTree;
    cfg
}

/// A stand-in for a precomputed external embedding: two fixed nonlinear
/// projections of the surrogate inputs, aligned row by row.
fn write_embedding(path: &Path) {
    let ds = synth_interaction(600, 0.05, 0);
    let mut text = String::from("e0,e1\n");
    for r in 0..ds.n_rows() {
        let row = ds.features.row(r);
        text.push_str(&format!("{},{}\n", (row[0] * row[1]).tanh(), row[2] - 0.5 * row[3]));
    }
    fs::write(path, text).unwrap();
}

fn criterion_1() -> Outcome {
    let grammar = default_grammar(6, 6).unwrap();
    let mut passing = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let ds = synth_interaction(600, 0.05, seed);
        let s = split(&ds, seed).map_err(|e| e.to_string())?;
        let cfg = EvolutionConfig {
            population_size: 50,
            generations: 30,
            proxy: ModelKind::DecisionTree,
            seed,
            ..EvolutionConfig::default()
        };
        let started = Instant::now();
        let r = run_evolution(&cfg, &ModelSettings::default(), &grammar, &s).map_err(|e| e.to_string())?;
        let secs = started.elapsed().as_secs_f64();
        check(secs < 120.0, || format!("seed {seed} took {secs:.1}s"))?;
        let constructed = r.best.program.features.iter().any(|f| f.classify() != FeatureClass::Original);
        let fitness = r.best.fitness;
        if fitness <= 0.15 && constructed {
            passing += 1;
        }
        lines.push(format!("seed {seed}: {fitness:.4} ({secs:.1}s)"));
    }
    check(passing >= 4, || format!("{passing}/5 seeds reached <= 0.15: {}", lines.join(", ")))?;
    Ok(format!("{passing}/5 seeds; {}", lines.join(", ")))
}

fn criterion_2(histories: &[Vec<f64>]) -> Outcome {
    for (run, h) in histories.iter().enumerate() {
        for (g, w) in h.windows(2).enumerate() {
            check(w[1] <= w[0], || format!("run {run} generation {}: {} > {}", g + 1, w[1], w[0]))?;
        }
    }
    Ok(format!("{} runs, every generation non-increasing", histories.len()))
}

fn criterion_3() -> Outcome {
    let grammar = default_grammar(6, 60).unwrap();
    let mut rng = rng_from(3);
    let probe = Matrix::from_vec(2, 6, (0..12).map(f64::from).collect());
    let mut max_len = 0;
    for i in 0..10_000 {
        let genotype = random_genotype(&grammar, DepthBounds::default(), &mut rng).map_err(|e| e.to_string())?;
        let program = map_genotype(&grammar, &genotype).map_err(|e| format!("genotype {i}: {e}"))?;
        check((1..=60).contains(&program.len()), || format!("genotype {i}: {} features", program.len()))?;
        let depth = map_derivation(&grammar, &genotype).map_err(|e| e.to_string())?.depth;
        check(depth <= 10, || format!("genotype {i}: depth {depth}"))?;
        let again = map_genotype(&grammar, &genotype.clone()).map_err(|e| e.to_string())?;
        check(again == program, || format!("genotype {i}: remapping differs"))?;
        program.evaluate(&probe).map_err(|e| format!("genotype {i}: {e}"))?;
        max_len = max_len.max(program.len());
    }
    Ok(format!("10000 genotypes valid, largest program {max_len} features"))
}

fn criterion_4() -> Outcome {
    let text = "x29 − x22×x22 + (x8×x42 ÷ (x35×x9 + x53))";
    let program = FeatureProgram::new(vec![parse_expr(text).map_err(|e| e.to_string())?]);
    let report = program.complexity_report().map_err(|e| e.to_string())?;
    check((report.n_total, report.n_complex) == (1, 1), || format!("{report:?}"))?;

    let classes = std::iter::repeat_n(FeatureClass::Original, 45)
        .chain(std::iter::repeat_n(FeatureClass::Engineered, 6))
        .chain(std::iter::repeat_n(FeatureClass::Complex, 6));
    let r = ComplexityReport::from_classes(classes).map_err(|e| e.to_string())?;
    check(
        r.r_o == 45.0 / 57.0 && r.r_e == 6.0 / 57.0 && r.r_c == 6.0 / 57.0,
        || format!("{r:?}"),
    )?;
    Ok("single Complex feature; ratios 45/57, 6/57, 6/57 exact".into())
}

#[derive(Deserialize)]
struct OracleCase {
    groups: Vec<Vec<f64>>,
    h: f64,
    p: f64,
    dunn_p: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

fn criterion_5() -> Outcome {
    let cases: Vec<OracleCase> =
        serde_json::from_str(include_str!("../../core/tests/fixtures/stats_oracle.json")).map_err(|e| e.to_string())?;
    check(cases.len() >= 20, || format!("only {} fixtures", cases.len()))?;
    let mut worst: f64 = 0.0;
    for (i, c) in cases.iter().enumerate() {
        let groups = ScoreGroups::unnamed(c.groups.clone()).map_err(|e| e.to_string())?;
        let kw = kruskal_wallis(&groups).map_err(|e| e.to_string())?;
        let dunn = dunn_posthoc(&groups).map_err(|e| e.to_string())?;
        worst = worst.max((kw.h - c.h).abs()).max((kw.p - c.p).abs());
        for a in 0..c.groups.len() {
            for b in 0..c.groups.len() {
                let d = cliffs_delta(&c.groups[a], &c.groups[b]).map_err(|e| e.to_string())?.delta;
                worst = worst
                    .max((dunn.p_adjusted[a][b] - c.dunn_p[a][b]).abs())
                    .max((d - c.delta[a][b]).abs());
            }
        }
        check(worst < 1e-9, || format!("case {i}: deviation {worst:e}"))?;
    }
    let edges = [
        (0.147, Magnitude::Small),
        (0.33, Magnitude::Medium),
        (0.474, Magnitude::Large),
        (-0.474, Magnitude::Large),
    ];
    for (edge, expected) in edges {
        check(Magnitude::of(edge) == expected, || format!("{edge} binned as {:?}", Magnitude::of(edge)))?;
        let below = edge.abs().next_down();
        check(Magnitude::of(below) != expected, || format!("{below} binned as {expected:?}"))?;
    }
    Ok(format!("{} fixtures, max deviation {worst:e}; bin edges exact", cases.len()))
}

fn criterion_6(out: &Path) -> Result<(String, Vec<Vec<f64>>), String> {
    let emb = out.join("embedding.csv");
    fs::create_dir_all(out).unwrap();
    write_embedding(&emb);
    let mut cfg = surrogate_config(&out.join("campaign"), 10);
    cfg.external_embeddings.push(EmbeddingSource {
        name: "umap".into(),
        path: emb,
    });
    let started = Instant::now();
    let campaign = run_campaign(&cfg).map_err(|e| e.to_string())?;
    emit_summary(&campaign, &cfg.output_dir, false).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    check(secs < 900.0, || format!("campaign took {secs:.0}s"))?;
    check(campaign.completed.len() == 10, || format!("{} runs completed", campaign.completed.len()))?;

    let methods = cfg.methods();
    check(methods.len() == 6, || format!("methods {methods:?}"))?;
    for m in &methods {
        for t in &cfg.testers {
            let n = campaign
                .scores
                .iter()
                .filter(|c| &c.method == m && c.tester == t.name() && c.balanced_accuracy.is_some())
                .count();
            check(n == 10, || format!("{m}/{t}: {n} scored runs"))?;
        }
    }
    check(cfg.testers.len() == 4, || format!("{} testers", cfg.testers.len()))?;

    let stats = stats_command(
        &cfg.output_dir.join(COMPARISON),
        None,
        Some(cfg.evolution.proxy),
        &cfg.output_dir.join("stats"),
        0.05,
    )
    .map_err(|e| e.to_string())?;
    let table = fs::read_to_string(&stats.files[1]).map_err(|e| e.to_string())?;
    check(table.starts_with("Kruskal-Wallis H"), || table.clone())?;
    if stats.report.posthoc_performed() {
        let cells = |line: &str| line.trim().split('|').count().saturating_sub(2);
        let mut rows = table.lines().skip(1).filter(|l| l.starts_with('|') && !l.contains("---"));
        let header = rows.next().unwrap_or_default();
        check(cells(header) == 6, || format!("header `{header}`"))?;
        check(rows.all(|r| cells(r) == 6), || "malformed comparison row".into())?;
        check(table.lines().filter(|l| l.starts_with('|') && !l.contains("---")).count() == 6, || {
            "expected five comparison rows".into()
        })?;
    }
    println!("{table}");
    let histories = campaign
        .completed
        .iter()
        .map(|r| r.result.history.iter().map(|h| h.best_fitness).collect())
        .collect();
    Ok((
        format!("6 methods x 4 testers x 10 runs in {secs:.0}s; H = {:.2}, p = {:.2e}", stats.report.omnibus.h, stats.report.omnibus.p),
        histories,
    ))
}

fn criterion_7() -> Outcome {
    let ds = synth_interaction(60, 0.0, 7);
    let x12 = ds.features.select_rows(&(0..12).collect::<Vec<_>>());
    let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let params = MlpParams {
        hidden_units: 7,
        epochs: 3,
        batch_size: 4,
        learning_rate: 0.05,
        seed: 2,
        ..MlpParams::default()
    };
    let mlp = fit_mlp(&x12, &y, &params).map_err(|e| e.to_string())?;
    let z = mlp.standardizer().transform(&x12);
    let (_, grad) = mlp.loss_and_gradient(&z, &y);
    let mlp_err = finite_difference_error(
        |p| {
            let mut m = mlp.clone();
            m.set_parameters(p);
            m.loss_and_gradient(&z, &y).0
        },
        &mlp.parameters(),
        &grad,
        1e-6,
        1e-4,
    );
    check(mlp_err < 1e-4, || format!("mlp relative error {mlp_err:e}"))?;

    let x20 = ds.features.select_rows(&(0..20).collect::<Vec<_>>());
    let ae_params = AeParams {
        hidden_units: 6,
        epochs: 2,
        batch_size: 8,
        ..AeParams::default()
    };
    let ae = fit_autoencoder(&x20, 2, &ae_params, 3).map_err(|e| e.to_string())?;
    let z = ae.standardizer().transform(&x20);
    let (_, grad) = ae.loss_and_gradient(&z);
    let ae_err = finite_difference_error(
        |p| {
            let mut m = ae.clone();
            m.set_parameters(p);
            m.loss_and_gradient(&z).0
        },
        &ae.parameters(),
        &grad,
        1e-5,
        1e-4,
    );
    check(ae_err < 1e-4, || format!("autoencoder relative error {ae_err:e}"))?;

    // correlated columns so the spectrum is not flat
    let (n, d) = (ds.n_rows(), 6);
    let mut data = Vec::with_capacity(n * d);
    for r in 0..n {
        let row = ds.features.row(r);
        data.extend([row[0], row[0] + 0.3 * row[1], row[2], row[2] - row[3], 0.5 * row[4], row[5] + row[1]]);
    }
    let x = Matrix::from_vec(n, d, data);
    let pca = fit_pca(&x, d).map_err(|e| e.to_string())?;
    let oracle = jacobi_eigenvalues(covariance(&x));
    let pca_err = pca
        .explained_variance()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(pca_err < 1e-8, || format!("pca variance deviation {pca_err:e}"))?;

    let adversarial = [0.0, -0.0, 1e300, -1e300, 1e-300, 1.0];
    let rows: Vec<Vec<f64>> = (0..36)
        .map(|i| (0..6).map(|j| adversarial[(i * 7 + j * 5 + i / 6) % adversarial.len()]).collect())
        .collect();
    let hostile = Matrix::from_rows(&rows);
    let grammar = default_grammar(6, 20).unwrap();
    let mut rng = rng_from(77);
    for i in 0..500 {
        let g = random_genotype(&grammar, DepthBounds::default(), &mut rng).map_err(|e| e.to_string())?;
        let program = map_genotype(&grammar, &g).map_err(|e| e.to_string())?;
        let out = program.evaluate(&hostile).map_err(|e| e.to_string())?;
        check(out.is_finite(), || format!("program {i} `{}` produced non-finite values", program.render()))?;
    }
    let fixed = FeatureProgram::parse("x0 / x1\nx2 * x3 * x2\n(x2 + x3) / (x0 - x1)").map_err(|e| e.to_string())?;
    check(fixed.evaluate(&hostile).map_err(|e| e.to_string())?.is_finite(), || "fixed program not finite".into())?;
    Ok(format!("mlp {mlp_err:.1e}, ae {ae_err:.1e}, pca {pca_err:.1e}, 501 programs finite"))
}

fn criterion_8(out: &Path) -> Outcome {
    let emb = out.join("embedding.csv");
    fs::create_dir_all(out).unwrap();
    write_embedding(&emb);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = surrogate_config(&out.join(name), 3);
        cfg.evolution.population_size = 20;
        cfg.evolution.generations = 10;
        cfg.external_embeddings.push(EmbeddingSource {
            name: "umap".into(),
            path: emb.clone(),
        });
        let campaign = run_campaign(&cfg).map_err(|e| e.to_string())?;
        emit_summary(&campaign, &cfg.output_dir, false).map_err(|e| e.to_string())?;
        outputs.push(fs::read(cfg.output_dir.join(COMPARISON)).map_err(|e| e.to_string())?);
    }
    check(outputs[0] == outputs[1], || "comparison.csv differs between executions".into())?;
    Ok(format!("identical comparison.csv ({} bytes)", outputs[0].len()))
}

fn covariance(x: &Matrix) -> Vec<Vec<f64>> {
    let (n, d) = (x.rows(), x.cols());
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|r| x.row(r)[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in 0..n {
        let row = x.row(r);
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    c
}

fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (arp, arq) = (row[p], row[q]);
                    row[p] = c * arp - s * arq;
                    row[q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    results.push((1, "surrogate evolution efficacy", guarded(criterion_1)));
    let c6 = guarded(|| criterion_6(&dir.path().join("c6")));
    let (c6_outcome, histories) = match c6 {
        Ok((msg, h)) => (Ok(msg), Some(h)),
        Err(e) => (Err(e), None),
    };
    let c2 = match histories {
        Some(h) => guarded(|| criterion_2(&h)),
        None => Err("campaign did not complete".into()),
    };
    results.push((2, "monotone elitism", c2));
    results.push((3, "mapping determinism and closure", guarded(criterion_3)));
    results.push((4, "taxonomy fidelity", guarded(criterion_4)));
    results.push((5, "statistics oracle equivalence", guarded(criterion_5)));
    results.push((6, "pipeline shape", c6_outcome));
    results.push((7, "numerical soundness", guarded(criterion_7)));
    results.push((8, "determinism", guarded(|| criterion_8(&dir.path().join("c8")))));

    let mut failed = Vec::new();
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail}"),
            Err(why) => {
                println!("criterion {n} ({name}): FAIL - {why}");
                failed.push(*n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
