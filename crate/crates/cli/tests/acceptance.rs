//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

#![allow(clippy::needless_range_loop)]

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s3a::autoencoder::{decode_model, encode_model, encode_stack, init_params, ModelHeader, TrainingStage};
use s3a::classifier::{roc_area, roc_points, svm_objective, train_svm, Label, SvmConfig};
use s3a::datakit::*;
use s3a::partition::{build_partition, slice_columns, GroupPartition};
use s3a::protocol::*;
use s3a::sparsity::{penalty_value, PenaltyKind, PenaltySpec};
use s3a::trainer::*;
use s3a::{Error, Matrix};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))?;
    Ok(t)
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn e<T: std::fmt::Debug>(x: T) -> String {
    format!("{x:?}")
}

const GRAD_TOL: f64 = 1e-5;

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let partition = build_partition(&[0, 0, 0, 1, 1, 1], &[0, 1, 0, 1, 0, 1]).map_err(e)?;
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(4, 6, &mut rng);
        let p = init_params(4, &[3, 2], seed).map_err(e)?;
        for lambda in [0.0, 0.1, 1.0] {
            let cfg = TrainConfig { lambda, ..TrainConfig::default() };
            worst = worst.max(grad_check(&p, &x, &partition, &cfg).map_err(e)?);
        }
    }
    ensure(worst < GRAD_TOL, || format!("max relative error {worst:.3e} >= {GRAD_TOL:e}"))?;
    let t = within_time(start, Duration::from_secs(10))?;
    Ok(format!("max relative error {worst:.2e} in {t:.1?}"))
}

const PENALTY_TOL: f64 = 1e-12;

fn l21_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (h, d, n) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..12));
        let w = random(h, d, &mut rng);
        let x = random(d, n, &mut rng);
        let classes: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let subs: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let partition = build_partition(&classes, &subs).map_err(e)?;
        let lambda = rng.random_range(0.0..2.0);
        let got = penalty_value(&PenaltySpec::grouped(PenaltyKind::SubclassL21, lambda, &partition), &w, &x).map_err(e)?;
        // Brute force: every (class, subclass) label pair, every row.
        let mut expected = 0.0;
        for c in 0..2 {
            for s in 0..3 {
                let cols: Vec<usize> = (0..n).filter(|&i| classes[i] == c && subs[i] == s).collect();
                for r in 0..h {
                    let mut sq = 0.0;
                    for &col in &cols {
                        let z: f64 = (0..d).map(|k| w.get(r, k) * x.get(k, col)).sum();
                        sq += z * z;
                    }
                    expected += sq.sqrt();
                }
            }
        }
        expected *= lambda;
        worst = worst.max((got - expected).abs() / expected.abs().max(1.0));
    }
    ensure(worst <= PENALTY_TOL, || format!("max error {worst:.3e}"))?;
    Ok(format!("50 instances, max error {worst:.2e}"))
}

const IRLS_SLACK: f64 = 1e-9;

fn irls_descent() -> Outcome {
    let start = Instant::now();
    let mut rises = 0;
    let mut rounds = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 24;
        let x = random(10, n, &mut rng);
        let classes: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let subs: Vec<usize> = (0..n).map(|i| (i / 2) % 3).collect();
        let partition = build_partition(&classes, &subs).map_err(e)?;
        let cfg = TrainConfig {
            seed,
            irls_refresh_every: 10,
            finetune_epochs: 50,
            tolerance: 0.0,
            learning_rate: 0.05,
            lambda: 0.5,
            ..TrainConfig::default()
        };
        let p = init_params(10, &[6], seed).map_err(e)?;
        let (_, report) = finetune(p, &x, &partition, &cfg).map_err(e)?;
        let totals = &report.layers[0].round_totals;
        ensure(totals.len() == 6, || format!("seed {seed}: {} round values", totals.len()))?;
        for w in totals.windows(2) {
            rounds += 1;
            if w[1] > w[0] + IRLS_SLACK {
                rises += 1;
            }
        }
    }
    ensure(rises == 0, || format!("{rises} of {rounds} rounds increased the objective"))?;
    let t = within_time(start, Duration::from_secs(30))?;
    Ok(format!("{rounds} rounds non-increasing in {t:.1?}"))
}

fn hierarchy_collapse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(5, 10, &mut rng);
    let single = build_partition(&[0; 10], &[0; 10]).map_err(e)?;
    let cfg = TrainConfig {
        finetune_epochs: 30,
        learning_rate: 0.05,
        tolerance: 0.0,
        ..TrainConfig::default()
    };
    let start = init_params(5, &[4, 3], 1).map_err(e)?;
    let sub = finetune(start.clone(), &x, &single, &cfg).map_err(e)?;
    let class_cfg = TrainConfig { finetune_penalty: PenaltyKind::ClassL21, ..cfg.clone() };
    let class = finetune(start.clone(), &x, &single, &class_cfg).map_err(e)?;
    ensure(sub == class, || "single-group run differs from class-level run".into())?;

    let groups = build_partition(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]).map_err(e)?;
    let zero = TrainConfig { lambda: 0.0, ..cfg.clone() };
    let (a, ra) = finetune(start.clone(), &x, &groups, &zero).map_err(e)?;
    let plain = TrainConfig { pretrain_epochs: zero.finetune_epochs, ..zero };
    let (b, rb) = pretrain_from(start, &x, &plain).map_err(e)?;
    ensure(a == b, || "lambda = 0 parameters differ from unregularized training".into())?;
    ensure(
        ra.records().collect::<Vec<_>>() == rb.records().collect::<Vec<_>>(),
        || "lambda = 0 trajectory differs from unregularized training".into(),
    )?;
    Ok("bit-identical trajectories".into())
}

/// Mean Jaccard overlap of hidden-row supports: between the two halves of
/// each subclass group, and between groups of different classes.
fn signature_overlaps(codes: &Matrix, partition: &GroupPartition, threshold: f64) -> (f64, f64) {
    let groups: Vec<((usize, usize), &[usize])> = partition.groups().collect();
    let mut within = Vec::new();
    for (_, idx) in &groups {
        let half = idx.len() / 2;
        within.push(jaccard(
            &sparsity_signature(codes, &idx[..half], threshold),
            &sparsity_signature(codes, &idx[half..], threshold),
        ));
    }
    let mut cross = Vec::new();
    for (a, ia) in &groups {
        for (b, ib) in &groups {
            if a.0 < b.0 {
                cross.push(jaccard(
                    &sparsity_signature(codes, ia, threshold),
                    &sparsity_signature(codes, ib, threshold),
                ));
            }
        }
    }
    (mean_std(&within).0, mean_std(&cross).0)
}

const SIGNATURE_THRESHOLD: f64 = 1e-3;

fn sparsity_signature_property() -> Outcome {
    let synth = SynthConfig::default();
    let (raw, manifest) = generate_synthetic(&synth).map_err(e)?;
    let x = Centering::fit(&raw).and_then(|c| c.apply(&raw)).map_err(e)?;
    let partition = manifest.partition().map_err(e)?;
    let (mut within, mut cross) = (0.0, 0.0);
    for seed in 0..5u64 {
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let dims = PipelineConfig::default().hidden_dims_for(x.rows());
        let (p, _) = pretrain(&x, &dims, &cfg).map_err(e)?;
        let (p, _) = finetune(p, &x, &partition, &cfg).map_err(e)?;
        let codes = encode_stack(&p, &x).map_err(e)?;
        let (w, c) = signature_overlaps(&codes, &partition, SIGNATURE_THRESHOLD);
        within += w / 5.0;
        cross += c / 5.0;
    }
    ensure(within > cross, || format!("within {within:.4} <= cross {cross:.4}"))?;
    Ok(format!("within-subclass {within:.4} > cross-class {cross:.4}"))
}

fn directional_claim() -> Outcome {
    let start = Instant::now();
    let (mut s3a, mut l1) = (0.0, 0.0);
    let mut trials = 0.0;
    for seed in 0..5u64 {
        let synth = SynthConfig {
            subclasses_per_class: 3,
            class_shift: 1.0,
            subclass_shift: 4.0,
            noise_sigma: 0.5,
            seed: 100 + seed,
            ..SynthConfig::default()
        };
        let (x, m) = generate_synthetic(&synth).map_err(e)?;
        let cfg = PipelineConfig {
            train: TrainConfig {
                seed,
                lambda: 1.0,
                learning_rate: 0.1,
                pretrain_epochs: 1000,
                finetune_epochs: 1000,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        };
        for held in m.ethnicities() {
            let train: Vec<usize> = (0..m.len()).filter(|&i| m.records[i].ethnicity != held).collect();
            let test: Vec<usize> = (0..m.len()).filter(|&i| m.records[i].ethnicity == held).collect();
            let xt = slice_columns(&x, &train).map_err(e)?;
            let xs = slice_columns(&x, &test).map_err(e)?;
            let truth: Vec<ClassLabel> = test.iter().map(|&i| m.records[i].class_label).collect();
            let score = |alg| -> Result<f64, String> {
                let d = train_detector(&xt, &m.select(&train), alg, &cfg, None).map_err(e)?;
                accuracy(&d.predict(&xs).map_err(e)?, &truth).map_err(e)
            };
            s3a += score(Algorithm::S3a)?;
            l1 += score(Algorithm::SparseAe)?;
            trials += 1.0;
        }
    }
    let (s3a, l1) = (s3a / trials, l1 / trials);
    ensure(s3a >= l1, || format!("S3A {s3a:.4} < L1-only {l1:.4}"))?;
    let t = within_time(start, Duration::from_secs(300))?;
    Ok(format!("held-out subclass accuracy S3A {s3a:.4} >= L1-only {l1:.4} in {t:.1?}"))
}

fn protocol_structure() -> Outcome {
    let synth = SynthConfig {
        subclasses_per_class: 3,
        samples_per_group: 10,
        noise_sigma: 0.5,
        ..SynthConfig::default()
    };
    let (x, m) = generate_synthetic(&synth).map_err(e)?;
    let cfg = PipelineConfig {
        train: TrainConfig {
            pretrain_epochs: 20,
            finetune_epochs: 20,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    };
    let report = run_cross_ethnicity(&m, &x, &cfg, None).map_err(e)?;
    ensure(report.cells.len() == 9, || format!("{} cells", report.cells.len()))?;
    for c in &report.cells {
        let want = if c.train_group == c.test_group { 5 } else { 25 };
        ensure(c.n_trials == want && c.trials.len() == want, || {
            format!("{}→{}: {} trials", c.train_group, c.test_group, c.n_trials)
        })?;
    }
    let trials = cross_ethnicity_trials(&m, &cfg).map_err(e)?;
    for t in &trials {
        let train: std::collections::BTreeSet<&str> = t.train.iter().map(|&i| m.records[i].subject_id.as_str()).collect();
        ensure(t.test.iter().all(|&i| !train.contains(m.records[i].subject_id.as_str())), || {
            format!("trial {}#{} → {}#{} shares subjects", t.train_group, t.held_out, t.test_group, t.test_fold)
        })?;
    }
    let again = run_cross_ethnicity(&m, &x, &cfg, None).map_err(e)?;
    let (a, b) = (report.to_json().map_err(e)?, again.to_json().map_err(e)?);
    ensure(a == b, || "reports differ between identical runs".into())?;
    Ok(format!("9 cells, {} subject-disjoint trials, byte-identical rerun", trials.len()))
}

fn pairwise_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, a) in labels.iter().enumerate() {
        for (j, b) in labels.iter().enumerate() {
            if *a == Label::Positive && *b == Label::Negative {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]) {
                    Some(std::cmp::Ordering::Greater) => 1.0,
                    Some(std::cmp::Ordering::Equal) => 0.5,
                    _ => 0.0,
                };
            }
        }
    }
    wins / pairs
}

const CLASSIFIER_TOL: f64 = 1e-12;

fn classifier_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // Separable: labels from a hyperplane with a margin.
    let normal = [0.8, -0.5, 0.3];
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    while cols.len() < 60 {
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s: f64 = v.iter().zip(normal).map(|(a, b)| a * b).sum();
        if s.abs() > 0.5 {
            labels.push(if s > 0.0 { Label::Positive } else { Label::Negative });
            cols.push(v);
        }
    }
    let x = Matrix::from_columns(&cols).map_err(e)?;
    let cfg = SvmConfig { cost_pos: 10.0, cost_neg: 10.0, epochs: 3000 };
    let svm = train_svm(&x, &labels, &cfg).map_err(e)?;
    let errors = (0..x.cols())
        .filter(|&c| svm.predict(&x.column(c)).map_or(true, |p| p != labels[c]))
        .count();
    ensure(errors == 0, || format!("{errors} training errors on separable data"))?;

    let mut worst_dup: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..20);
        let x = random(3, n, &mut rng);
        let labels: Vec<Label> = (0..n).map(|_| if rng.random_bool(0.5) { Label::Positive } else { Label::Negative }).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let k = rng.random_range(1..4);
        let mut dup_cols: Vec<Vec<f64>> = (0..n).map(|c| x.column(c)).collect();
        let mut dup_labels = labels.clone();
        for c in 0..n {
            if labels[c] == Label::Positive {
                for _ in 1..k {
                    dup_cols.push(x.column(c));
                    dup_labels.push(Label::Positive);
                }
            }
        }
        let dup = Matrix::from_columns(&dup_cols).map_err(e)?;
        let weighted = svm_objective(&w, b, &x, &labels, k as f64, 1.0).map_err(e)?;
        let copied = svm_objective(&w, b, &dup, &dup_labels, 1.0, 1.0).map_err(e)?;
        worst_dup = worst_dup.max((weighted - copied).abs() / weighted.abs().max(1.0));
    }
    ensure(worst_dup <= CLASSIFIER_TOL, || format!("duplication identity off by {worst_dup:.3e}"))?;

    let mut worst_auc: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 * 0.25).collect();
        let labels: Vec<Label> = (0..n).map(|_| if rng.random_bool(0.5) { Label::Positive } else { Label::Negative }).collect();
        if !labels.contains(&Label::Positive) || !labels.contains(&Label::Negative) {
            continue;
        }
        let area = roc_area(&roc_points(&scores, &labels).map_err(e)?);
        worst_auc = worst_auc.max((area - pairwise_auc(&scores, &labels)).abs());
    }
    ensure(worst_auc <= CLASSIFIER_TOL, || format!("ROC area off by {worst_auc:.3e}"))?;
    Ok(format!("zero training error, duplication {worst_dup:.1e}, AUC {worst_auc:.1e}"))
}

fn format_round_trips() -> Outcome {
    let (x, m) = generate_synthetic(&SynthConfig { samples_per_group: 5, ..SynthConfig::default() }).map_err(e)?;
    let bytes = encode_features(&x).map_err(e)?;
    ensure(encode_features(&decode_features(&bytes).map_err(e)?).map_err(e)? == bytes, || "S3AF round trip".into())?;
    let cut = bytes.len() - 3;
    let want = cut - (cut - 16) % 8;
    match decode_features(&bytes[..cut]) {
        Err(Error::TruncatedFile { offset, .. }) if offset == want => {}
        other => return Err(format!("truncated S3AF: {other:?}, expected offset {want}")),
    }
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0, 0]);
    match decode_features(&extra) {
        Err(Error::TrailingBytes { offset, count: 2 }) if offset == bytes.len() => {}
        other => return Err(format!("trailing S3AF bytes: {other:?}")),
    }

    let p = init_params(16, &[10, 8], 3).map_err(e)?;
    let header = ModelHeader::for_params(&p, 0.1, 3, TrainingStage::Pretrained);
    let model = encode_model(&header, &p).map_err(e)?;
    let (h2, p2) = decode_model(&model).map_err(e)?;
    ensure(encode_model(&h2, &p2).map_err(e)? == model, || "model round trip".into())?;
    match decode_model(&model[..model.len() - 1]) {
        Err(Error::TruncatedFile { offset, .. }) if offset == model.len() - 8 => {}
        other => return Err(format!("truncated model: {other:?}")),
    }

    let text = m.to_csv_string().map_err(e)?;
    let back = parse_manifest(text.as_bytes()).map_err(e)?;
    ensure(back.to_csv_string().map_err(e)? == text, || "manifest round trip".into())?;

    let report = EvalReport {
        protocol: ProtocolKind::Combined,
        groups: vec![COMBINED_GROUP.into()],
        cells: vec![Cell {
            train_group: COMBINED_GROUP.into(),
            test_group: COMBINED_GROUP.into(),
            algorithm: Algorithm::S3a,
            mean_accuracy: 0.1 + 0.2,
            std_accuracy: 0.0,
            n_trials: 1,
            trials: vec![0.1 + 0.2],
        }],
        breakdowns: Vec::new(),
        roc: vec![RocCurve { algorithm: Algorithm::S3a, points: vec![(0.0, 0.0), (1.0 / 3.0, 0.7), (1.0, 1.0)] }],
    };
    let json = report.to_json().map_err(e)?;
    ensure(EvalReport::from_json(&json).and_then(|r| r.to_json()).map_err(e)? == json, || "report round trip".into())?;
    Ok("S3AF, model, manifest and report byte-identical; corruption offsets match".into())
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_s3a"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(e)?;
    if !out.status.success() {
        return Err(format!("`s3a {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn end_to_end_cli() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(e)?;
    let d = dir.path();
    run_cli(&["synth", "--out-dir", "data", "--input-dim", "64", "--samples-per-group", "200"], d)?;
    let manifest = std::fs::read_to_string(d.join("data/manifest.csv")).map_err(e)?;
    ensure(manifest.lines().count() == 801, || format!("{} manifest lines", manifest.lines().count()))?;
    let m = ["--manifest", "data/manifest.csv"];
    run_cli(&[&["pretrain"][..], &m, &["--out", "out/pre.s3am"]].concat(), d)?;
    run_cli(&[&["finetune"][..], &m, &["--model", "out/pre.s3am", "--out", "out/fine.s3am"]].concat(), d)?;
    run_cli(&[&["extract"][..], &m, &["--model", "out/fine.s3am", "--out", "out/codes.s3af"]].concat(), d)?;
    run_cli(&[&["train-svm"][..], &m, &["--features", "out/codes.s3af", "--out", "out/svm.json"]].concat(), d)?;
    run_cli(&[&["evaluate"][..], &m, &["--model", "out/pre.s3am", "--out", "out/report.json"]].concat(), d)?;
    let table = run_cli(&["report", "--report", "out/report.json", "--out-dir", "out"], d)?;
    let saved = std::fs::read_to_string(d.join("out/report.txt")).map_err(e)?;
    ensure(table.contains(&saved), || "printed table differs from report.txt".into())?;
    let rows: Vec<&str> = saved.lines().filter(|l| l.starts_with("E0") || l.starts_with("E1")).collect();
    ensure(saved.contains("Train\\Test") && rows.len() == 2, || format!("unexpected table:\n{saved}"))?;
    ensure(rows.iter().all(|r| r.matches('±').count() == 2), || format!("unexpected rows:\n{saved}"))?;
    let t = within_time(start, Duration::from_secs(600))?;
    Ok(format!("2×2 accuracy table in {t:.1?}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradient_correctness),
        ("l2,1 oracle equivalence", l21_oracle),
        ("IRLS descent", irls_descent),
        ("hierarchy collapse", hierarchy_collapse),
        ("sparsity signature", sparsity_signature_property),
        ("S3A vs L1-only on held-out subclasses", directional_claim),
        ("protocol structure", protocol_structure),
        ("classifier suite", classifier_suite),
        ("format round trips", format_round_trips),
        ("end-to-end CLI", end_to_end_cli),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
