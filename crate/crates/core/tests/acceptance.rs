//! Acceptance suite. One line per criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use stackdetect::corpus::{
    corpus_stats, remove_generators, substitute_generators, Label, Split, SubstituteOptions, Substitution,
};
use stackdetect::ensemble::{
    decide, fit_ensemble, fit_ensemble_rows, hinge_objective_subgradient, EnsembleConfig, StackedFeatures,
    StackedRow,
};
use stackdetect::harness::{load_config, run_experiment, Run};
use stackdetect::math::logistic_loss_grad;
use stackdetect::metrics::{evaluate, render_table, TableRow};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn curation_arithmetic() -> Outcome {
    let start = Instant::now();
    let corpus = common::autext_corpus();
    let raw = corpus_stats(&corpus);
    ensure(raw.split_total(Split::Train) == 33_845, format!("raw train {}", raw.split_total(Split::Train)))?;
    ensure(raw.split_total(Split::Test) == 21_832, format!("raw test {}", raw.split_total(Split::Test)))?;

    let train: BTreeSet<Split> = [Split::Train].into();
    let d1 = remove_generators(&corpus, &set(&common::GPT), &train, true).map_err(|e| e.to_string())?;
    let d1_train = d1.split_len(Split::Train);
    ensure(d1_train == 25_309, format!("removal left {d1_train} train samples"))?;
    ensure(d1.split_len(Split::Test) == 21_832, "removal touched the test split")?;

    let removed: usize = common::AUTEXT_COUNTS
        .iter()
        .filter(|(g, ..)| common::GPT.contains(g))
        .map(|&(_, n, _)| n)
        .sum();
    let sub = Substitution {
        generators: set(&common::GPT),
        replacement: common::replacement_corpus("llama2", removed),
    };
    let d2 = substitute_generators(&corpus, &[sub], SubstituteOptions::default()).map_err(|e| e.to_string())?;
    let d2_stats = corpus_stats(&d2);
    let d2_train = d2.split_len(Split::Train);
    ensure(d2_train == 33_845, format!("substitution gave {d2_train} train samples"))?;
    ensure(d2_stats.generator_count(Split::Train, "llama2") == removed, "replacement count")?;
    ensure(d2_stats.count(Split::Train, Label::Human) == 17_046, "human train count changed")?;

    let short = Substitution {
        generators: set(&common::GPT),
        replacement: common::replacement_corpus("llama2", removed - 1),
    };
    ensure(
        substitute_generators(&corpus, &[short], SubstituteOptions::default()).is_err(),
        "strict substitution accepted a short replacement",
    )?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("33845 -> {d1_train} after removal, {d2_train} after substitution"))
}

/// Independent per-class counting.
fn oracle(truth: &[Label], pred: &[Label]) -> [f64; 4] {
    let n = truth.len() as f64;
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64;
    let safe = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let mut f = 0.0;
    let mut pre = 0.0;
    let mut rec = 0.0;
    for class in [Label::Human, Label::Ai] {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        let mut actual = 0.0;
        for (t, p) in truth.iter().zip(pred) {
            if *t == class && *p == class {
                tp += 1.0;
            }
            if *p == class {
                predicted += 1.0;
            }
            if *t == class {
                actual += 1.0;
            }
        }
        let p = safe(tp, predicted);
        let r = safe(tp, actual);
        pre += p;
        rec += r;
        f += safe(2.0 * p * r, p + r);
    }
    [correct / n, f / 2.0, pre / 2.0, rec / 2.0]
}

fn metrics_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst: f64 = 0.0;
    let draw = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { Label::Ai } else { Label::Human };
    for case in 0..1000 {
        let n = rng.random_range(1..=50);
        let truth: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        let pred: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        let r = evaluate(&truth, &pred).map_err(|e| e.to_string())?;
        let got = [r.acc, r.f_macro, r.precision_macro, r.recall_macro];
        let want = oracle(&truth, &pred);
        for (g, w) in got.iter().zip(&want) {
            let err = (g - w).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, format!("case {case}: got {got:?}, oracle {want:?}"))?;
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("1000 cases, max abs error {worst:.1e}"))
}

fn blob_rows(n_per_class: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Label>) {
    let noise = Normal::new(0.0, 0.15).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * n_per_class {
        let label = if i % 2 == 0 { Label::Ai } else { Label::Human };
        let mean = if label == Label::Ai { 0.3 } else { -0.3 };
        rows.push((0..4).map(|_| mean + noise.sample(rng)).collect());
        labels.push(label);
    }
    (rows, labels)
}

fn blobs() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (train, train_labels) = blob_rows(200, &mut rng);
    let (test, test_labels) = blob_rows(200, &mut rng);
    let cfg = EnsembleConfig {
        seed: 7,
        ..Default::default()
    };
    let model = fit_ensemble_rows(vec!["s1".into(), "s2".into()], &train, &train_labels, &cfg)
        .map_err(|e| e.to_string())?;
    let mut hits = [0usize; 5];
    for (row, label) in test.iter().zip(&test_labels) {
        let v = model.predict(row).map_err(|e| e.to_string())?;
        let preds = [
            decide(&v.per_learner.lr),
            decide(&v.per_learner.gnb),
            decide(&v.per_learner.svm),
            decide(&v.per_learner.rf),
            v.label,
        ];
        for (h, p) in hits.iter_mut().zip(preds) {
            *h += usize::from(p == *label);
        }
    }
    let acc: Vec<f64> = hits.iter().map(|&h| h as f64 / test.len() as f64).collect();
    let detail = format!(
        "lr {:.4} gnb {:.4} svm {:.4} rf {:.4} ensemble {:.4}",
        acc[0], acc[1], acc[2], acc[3], acc[4]
    );
    let floors = [0.95, 0.95, 0.95, 0.93, 0.95];
    ensure(acc.iter().zip(floors).all(|(a, f)| *a >= f), detail.clone())?;
    within(start.elapsed(), 10.0)?;
    Ok(detail)
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|b| b * b).sum::<f64>().sqrt())
        .max(1e-12);
    diff / scale
}

/// Central differences of `f` over weights then bias.
fn numeric_grad(f: impl Fn(&[f64], f64) -> f64, w: &[f64], b: f64) -> Vec<f64> {
    let h = 1e-6;
    let mut out = Vec::with_capacity(w.len() + 1);
    for j in 0..w.len() {
        let mut plus = w.to_vec();
        let mut minus = w.to_vec();
        plus[j] += h;
        minus[j] -= h;
        out.push((f(&plus, b) - f(&minus, b)) / (2.0 * h));
    }
    out.push((f(w, b + h) - f(w, b - h)) / (2.0 * h));
    out
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst_lr: f64 = 0.0;
    let mut worst_svm: f64 = 0.0;
    let mut svm_checked = 0;
    for _ in 0..200 {
        let d = rng.random_range(1..=20);
        let n = rng.random_range(1..=30);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| normal.sample(&mut rng)).collect()).collect();
        let labels: Vec<Label> = (0..n).map(|_| if rng.random() { Label::Ai } else { Label::Human }).collect();
        let targets: Vec<f64> = labels.iter().map(|l| l.indicator()).collect();
        let w: Vec<f64> = (0..d).map(|_| 0.5 * normal.sample(&mut rng)).collect();
        let b = 0.5 * normal.sample(&mut rng);
        let l2 = rng.random_range(0.0..0.1);

        let (_, gw, gb) = logistic_loss_grad(&rows, &targets, &w, b, l2);
        let analytic: Vec<f64> = gw.into_iter().chain([gb]).collect();
        let numeric = numeric_grad(|w, b| logistic_loss_grad(&rows, &targets, w, b, l2).0, &w, b);
        worst_lr = worst_lr.max(rel_err(&analytic, &numeric));

        let near_kink = rows.iter().zip(&labels).any(|(r, l)| {
            let y = if *l == Label::Ai { 1.0 } else { -1.0 };
            let z: f64 = r.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() + b;
            (y * z - 1.0).abs() < 1e-3
        });
        if near_kink {
            continue;
        }
        svm_checked += 1;
        let (_, gw, gb) = hinge_objective_subgradient(&rows, &labels, &w, b, l2);
        let analytic: Vec<f64> = gw.into_iter().chain([gb]).collect();
        let numeric = numeric_grad(|w, b| hinge_objective_subgradient(&rows, &labels, w, b, l2).0, &w, b);
        worst_svm = worst_svm.max(rel_err(&analytic, &numeric));
    }
    let detail = format!(
        "max rel err lr {worst_lr:.2e} (200 instances), svm {worst_svm:.2e} ({svm_checked} instances off the kink)"
    );
    ensure(worst_lr <= 1e-5 && worst_svm <= 1e-5 && svm_checked >= 100, detail.clone())?;
    Ok(detail)
}

fn perfect_rows(n: usize, rng: &mut ChaCha8Rng, offset: usize) -> StackedFeatures {
    let rows = (0..n)
        .map(|i| {
            let label = if rng.random::<bool>() { Label::Ai } else { Label::Human };
            let mut probs = vec![label.indicator()];
            probs.push(rng.random());
            probs.push(rng.random());
            let features = probs.iter().flat_map(|&p| [1.0 - p, p]).collect();
            StackedRow {
                id: format!("r{}", offset + i),
                label,
                features,
            }
        })
        .collect();
    StackedFeatures {
        manifest: vec!["oracle".into(), "noise-1".into(), "noise-2".into()],
        rows,
    }
}

fn perfect_constituent() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let train = perfect_rows(500, &mut rng, 0);
    let test = perfect_rows(500, &mut rng, 500);
    let model = fit_ensemble(&train, &EnsembleConfig::default()).map_err(|e| e.to_string())?;
    let verdicts = model.predict_all(&test).map_err(|e| e.to_string())?;
    let correct = verdicts.iter().zip(&test.rows).filter(|(v, r)| v.label == r.label).count();
    let acc = correct as f64 / test.len() as f64;
    ensure(acc >= 0.98, format!("accuracy {acc:.4}"))?;
    Ok(format!("accuracy {acc:.4} on 500 held-out rows"))
}

fn write_experiment(dir: &Path, n: usize, config: &serde_json::Value) -> std::path::PathBuf {
    common::write_corpus(&common::planted_corpus(n, 42), &dir.join("data.jsonl"));
    common::write_config(dir, config)
}

fn determinism() -> Outcome {
    let config = common::builtin_config("determinism", 11);
    let mut outputs = Vec::new();
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &dirs {
        let path = write_experiment(dir.path(), 300, &config);
        let loaded = load_config(&path, &[]).map_err(|e| e.to_string())?;
        run_experiment(&loaded).map_err(|e| e.to_string())?;
        let out = dir.path().join("out");
        let read = |name: &str| std::fs::read(out.join(name)).map_err(|e| format!("{name}: {e}"));
        outputs.push((read("report.json")?, read("model.json")?));
    }
    ensure(outputs[0].0 == outputs[1].0, "report.json differs between runs")?;
    ensure(outputs[0].1 == outputs[1].1, "model.json differs between runs")?;
    Ok(format!(
        "report.json ({} bytes) and model.json ({} bytes) identical",
        outputs[0].0.len(),
        outputs[0].1.len()
    ))
}

fn report_format() -> Outcome {
    let golden = include_str!("fixtures/results_table.txt");
    let rows = [
        ("AuText", 0.750, 0.732, 0.822, 0.744),
        ("D1", 0.775, 0.769, 0.796, 0.771),
        ("D2", 0.784, 0.774, 0.828, 0.779),
        ("D3", 0.760, 0.747, 0.812, 0.755),
    ]
    .map(|(dataset, acc, f_macro, precision, recall)| TableRow {
        dataset: dataset.into(),
        acc,
        f_macro,
        precision,
        recall,
    });
    let rendered = render_table(&rows);
    ensure(rendered == golden, format!("rendered table differs from golden:\n{rendered}"))?;

    let dir = tempfile::tempdir().unwrap();
    let path = write_experiment(dir.path(), 200, &common::builtin_config("AuText", 3));
    let loaded = load_config(&path, &[]).map_err(|e| e.to_string())?;
    let mut run = Run::open(&loaded).map_err(|e| e.to_string())?;
    let report = run.evaluate().map_err(|e| e.to_string())?;
    let table = render_table(&report.table_rows());
    let lines: Vec<&str> = table.lines().collect();
    let gold: Vec<&str> = golden.lines().collect();
    ensure(lines.len() == 4, format!("evaluate table has {} lines", lines.len()))?;
    ensure(lines[0] == gold[0] && lines[1] == gold[1], format!("evaluate header differs:\n{table}"))?;
    ensure(Some(&lines[3]) == gold.last(), "evaluate footnote differs")?;
    ensure(lines[2].starts_with("| AuText  | "), format!("evaluate row: {}", lines[2]))?;
    Ok("golden table matches; evaluate output shares its header, separator and footnote".into())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = write_experiment(dir.path(), 2000, &common::builtin_config("planted", 1));
    let start = Instant::now();
    let loaded = load_config(&path, &[]).map_err(|e| e.to_string())?;
    let (report, _) = run_experiment(&loaded).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let acc = report.test.acc;
    let detail = format!(
        "test accuracy {acc:.4} on {} samples in {:.2} s",
        report.test.n,
        elapsed.as_secs_f64()
    );
    ensure(acc >= 0.9, detail.clone())?;
    within(elapsed, 60.0)?;
    Ok(detail)
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("curation arithmetic", curation_arithmetic),
        ("metrics oracle", metrics_oracle),
        ("meta-learners on gaussian blobs", blobs),
        ("gradient checks", gradient_checks),
        ("perfect constituent", perfect_constituent),
        ("determinism", determinism),
        ("report format", report_format),
        ("end-to-end pipeline", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.2} s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2} s): {reason}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
