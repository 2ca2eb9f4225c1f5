//! Evaluation protocols: the combined subject-disjoint split, per-ethnicity
//! k-fold cross validation, metric aggregation and text reports.
//!
//! Retouched images are the positive detection target. Every feature matrix
//! passed in here is aligned with its manifest: column `i` holds record `i`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{default_hidden_dims, encode_stack, AutoencoderParams};
use crate::classifier::{roc_points, train_svm, Label, SvmConfig, SvmModel};
use crate::datakit::{Centering, ClassLabel, DatasetManifest, Gender, SampleRecord, Tool};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::partition::slice_columns;
use crate::trainer::{finetune, pretrain, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Algorithm {
    /// Unsupervised L1 pretraining followed by subclass-supervised fine-tuning.
    S3a,
    /// L1 pretraining only.
    SparseAe,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::S3a => "S3A",
            Algorithm::SparseAe => "SparseAE",
        }
    }
}

/// Which images a (gender, tool) breakdown cell scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BreakdownRule {
    /// Originals of the gender plus retouched images of the gender and tool.
    #[default]
    OriginalsAndTool,
    /// Retouched images of the gender and tool only.
    RetouchedOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    /// Hidden sizes; `None` picks the default two-layer shape.
    pub hidden_dims: Option<Vec<usize>>,
    pub svm: SvmConfig,
    pub folds: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub breakdown: BreakdownRule,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden_dims: None,
            svm: SvmConfig::default(),
            folds: 5,
            seed: 0,
            algorithms: vec![Algorithm::S3a],
            breakdown: BreakdownRule::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be at least 2".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("no algorithms selected".into()));
        }
        Ok(())
    }

    pub fn hidden_dims_for(&self, input_dim: usize) -> Vec<usize> {
        self.hidden_dims
            .clone()
            .unwrap_or_else(|| default_hidden_dims(input_dim))
    }
}

pub fn svm_label(c: ClassLabel) -> Label {
    match c {
        ClassLabel::Retouched => Label::Positive,
        ClassLabel::Original => Label::Negative,
    }
}

pub fn class_of(l: Label) -> ClassLabel {
    match l {
        Label::Positive => ClassLabel::Retouched,
        Label::Negative => ClassLabel::Original,
    }
}

/// Centering, encoder and SVM trained together on one training set.
#[derive(Debug, Clone)]
pub struct Detector {
    pub centering: Centering,
    pub params: AutoencoderParams,
    pub svm: SvmModel,
}

impl Detector {
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        encode_stack(&self.params, &self.centering.apply(x)?)
    }

    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.svm.decision_values(&self.features(x)?)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<ClassLabel>> {
        Ok(self
            .scores(x)?
            .into_iter()
            .map(|s| if s >= 0.0 { ClassLabel::Retouched } else { ClassLabel::Original })
            .collect())
    }
}

/// Trains a detector on `x` (one column per record of `manifest`). The
/// encoder starts from `pretrained` when given and is otherwise pretrained
/// on `x` itself.
pub fn train_detector(
    x: &Matrix,
    manifest: &DatasetManifest,
    algorithm: Algorithm,
    cfg: &PipelineConfig,
    pretrained: Option<&AutoencoderParams>,
) -> Result<Detector> {
    if x.cols() != manifest.len() {
        return Err(Error::LengthMismatch {
            left: x.cols(),
            right: manifest.len(),
        });
    }
    let centering = Centering::fit(x)?;
    let xc = centering.apply(x)?;
    let params = match pretrained {
        Some(p) => p.clone(),
        None => pretrain(&xc, &cfg.hidden_dims_for(x.rows()), &cfg.train)?.0,
    };
    let params = match algorithm {
        Algorithm::S3a => finetune(params, &xc, &manifest.partition()?, &cfg.train)?.0,
        Algorithm::SparseAe => params,
    };
    let features = encode_stack(&params, &xc)?;
    let labels: Vec<Label> = manifest.records.iter().map(|r| svm_label(r.class_label)).collect();
    let svm = train_svm(&features, &labels, &cfg.svm)?;
    Ok(Detector {
        centering,
        params,
        svm,
    })
}

/// Pretrains once on the whole of `x`, as a shared starting point.
pub fn pretrain_shared(x: &Matrix, cfg: &PipelineConfig) -> Result<AutoencoderParams> {
    let xc = Centering::fit(x)?.apply(x)?;
    Ok(pretrain(&xc, &cfg.hidden_dims_for(x.rows()), &cfg.train)?.0)
}

pub fn accuracy<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().fold(0.0, |a, v| a + v) / n;
    let var = values.iter().fold(0.0, |a, v| a + (v - mean).powi(2)) / n;
    (mean, var.sqrt())
}

/// Ethnicity and gender of every subject, checked for consistency.
pub fn subject_tags(manifest: &DatasetManifest) -> Result<BTreeMap<&str, (&str, Gender)>> {
    let mut tags: BTreeMap<&str, (&str, Gender)> = BTreeMap::new();
    for r in &manifest.records {
        let t = (r.ethnicity.as_str(), r.gender);
        if *tags.entry(&r.subject_id).or_insert(t) != t {
            return Err(Error::InconsistentSubjectTags(r.subject_id.clone()));
        }
    }
    Ok(tags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StratumCount {
    pub train: usize,
    pub test: usize,
}

/// Subject-disjoint two-way split. Indices refer to manifest records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Subjects per side for every `ethnicity/gender` stratum.
    pub strata: BTreeMap<String, StratumCount>,
}

fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Splits the subjects of every (ethnicity, gender) stratum in half, the
/// larger half going to training.
pub fn combined_split(manifest: &DatasetManifest, seed: u64) -> Result<SplitPlan> {
    let tags = subject_tags(manifest)?;
    let mut strata: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for (subject, (eth, gender)) in &tags {
        strata
            .entry(format!("{eth}/{}", gender.as_str()))
            .or_default()
            .push(subject);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_set = BTreeSet::new();
    let mut counts = BTreeMap::new();
    for (key, mut subjects) in strata {
        subjects.shuffle(&mut rng);
        let n_train = subjects.len().div_ceil(2);
        train_set.extend(subjects[..n_train].iter().copied());
        counts.insert(
            key,
            StratumCount {
                train: n_train,
                test: subjects.len() - n_train,
            },
        );
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..manifest.len())
        .partition(|&i| train_set.contains(manifest.records[i].subject_id.as_str()));
    Ok(SplitPlan {
        train_subjects: train_set.iter().map(|s| s.to_string()).collect(),
        test_subjects: tags
            .keys()
            .filter(|s| !train_set.contains(*s))
            .map(|s| s.to_string())
            .collect(),
        train,
        test,
        strata: counts,
    })
}

/// Subject folds of one ethnicity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub ethnicity: String,
    pub k: usize,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    fn fold_of(&self, subject: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|s| s == subject))
    }

    /// Every image of the subjects in fold `f`.
    pub fn test_records(&self, manifest: &DatasetManifest, f: usize) -> Vec<usize> {
        (0..manifest.len())
            .filter(|&i| {
                let r = &manifest.records[i];
                r.ethnicity == self.ethnicity && self.fold_of(&r.subject_id) == Some(f)
            })
            .collect()
    }

    /// Training images when fold `t` is held out: per subject up to two
    /// originals and one retouched image per tool, then trimmed (latest
    /// records first) to equal original and retouched counts.
    pub fn train_records(&self, manifest: &DatasetManifest, t: usize) -> Vec<usize> {
        let mut per_subject: BTreeMap<&str, (usize, BTreeSet<Tool>)> = BTreeMap::new();
        let mut originals = Vec::new();
        let mut retouched = Vec::new();
        for (i, r) in manifest.records.iter().enumerate() {
            if r.ethnicity != self.ethnicity {
                continue;
            }
            match self.fold_of(&r.subject_id) {
                Some(f) if f != t => {}
                _ => continue,
            }
            let (n_orig, tools) = per_subject.entry(&r.subject_id).or_default();
            match (r.class_label, r.tool) {
                (ClassLabel::Original, _) if *n_orig < 2 => {
                    *n_orig += 1;
                    originals.push(i);
                }
                (ClassLabel::Retouched, Some(tool)) if tools.insert(tool) => retouched.push(i),
                _ => {}
            }
        }
        let n = originals.len().min(retouched.len());
        originals.truncate(n);
        retouched.truncate(n);
        let mut out = originals;
        out.extend(retouched);
        out.sort_unstable();
        out
    }

    pub fn train_subjects(&self, t: usize) -> BTreeSet<&str> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != t)
            .flat_map(|(_, s)| s.iter().map(String::as_str))
            .collect()
    }
}

/// Deals the shuffled subjects of `ethnicity` round-robin into `k` folds.
pub fn ethnicity_folds(manifest: &DatasetManifest, ethnicity: &str, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    let tags = subject_tags(manifest)?;
    let mut subjects: Vec<&str> = tags
        .iter()
        .filter(|(_, (e, _))| *e == ethnicity)
        .map(|(s, _)| *s)
        .collect();
    if subjects.len() < k {
        return Err(Error::TooFewSubjects {
            ethnicity: ethnicity.to_owned(),
            found: subjects.len(),
            needed: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(ethnicity));
    subjects.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, s) in subjects.into_iter().enumerate() {
        folds[i % k].push(s.to_owned());
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(FoldPlan {
        ethnicity: ethnicity.to_owned(),
        k,
        folds,
    })
}

/// One train/test pairing of the cross-ethnicity protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub train_group: String,
    pub held_out: usize,
    pub test_group: String,
    pub test_fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Fold plans for every ethnicity, in sorted tag order.
pub fn cross_ethnicity_plans(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<Vec<FoldPlan>> {
    let groups = manifest.ethnicities();
    if groups.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "cross-ethnicity evaluation needs at least 2 ethnicities, found {}",
            groups.len()
        )));
    }
    groups
        .iter()
        .map(|g| ethnicity_folds(manifest, g, cfg.folds, cfg.seed))
        .collect()
}

/// All trials: for each ethnicity and held-out fold, the held-out fold
/// itself and then every fold of every other ethnicity.
pub fn cross_ethnicity_trials(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<Vec<Trial>> {
    let plans = cross_ethnicity_plans(manifest, cfg)?;
    let mut trials = Vec::new();
    for plan in &plans {
        for t in 0..plan.k {
            let train = plan.train_records(manifest, t);
            for other in &plans {
                let folds: Vec<usize> = if other.ethnicity == plan.ethnicity {
                    vec![t]
                } else {
                    (0..other.k).collect()
                };
                for f in folds {
                    trials.push(Trial {
                        train_group: plan.ethnicity.clone(),
                        held_out: t,
                        test_group: other.ethnicity.clone(),
                        test_fold: f,
                        train: train.clone(),
                        test: other.test_records(manifest, f),
                    });
                }
            }
        }
    }
    Ok(trials)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub train_group: String,
    pub test_group: String,
    pub algorithm: Algorithm,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub n_trials: usize,
    pub trials: Vec<f64>,
}

impl Cell {
    fn from_trials(train_group: &str, test_group: &str, algorithm: Algorithm, trials: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&trials);
        Self {
            train_group: train_group.to_owned(),
            test_group: test_group.to_owned(),
            algorithm,
            mean_accuracy: mean,
            std_accuracy: std,
            n_trials: trials.len(),
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakdownCell {
    pub algorithm: Algorithm,
    pub gender: Gender,
    pub tool: Tool,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RocCurve {
    pub algorithm: Algorithm,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Combined,
    CrossEthnicity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub protocol: ProtocolKind,
    pub groups: Vec<String>,
    pub cells: Vec<Cell>,
    pub breakdowns: Vec<BreakdownCell>,
    pub roc: Vec<RocCurve>,
}

impl EvalReport {
    pub fn cell(&self, train: &str, test: &str, algorithm: Algorithm) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.train_group == train && c.test_group == test && c.algorithm == algorithm)
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        let set: BTreeSet<Algorithm> = self.cells.iter().map(|c| c.algorithm).collect();
        set.into_iter().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        for c in &self.cells {
            if c.n_trials != c.trials.len() || c.n_trials == 0 {
                return bad(format!("cell {}/{} trial count mismatch", c.train_group, c.test_group));
            }
            if !unit(c.mean_accuracy) || !c.trials.iter().all(|v| unit(*v)) {
                return bad(format!("cell {}/{} accuracy outside [0, 1]", c.train_group, c.test_group));
            }
            if c.std_accuracy.is_nan() || c.std_accuracy < 0.0 {
                return bad(format!("cell {}/{} has negative std", c.train_group, c.test_group));
            }
        }
        if !self.breakdowns.iter().all(|b| unit(b.accuracy)) {
            return bad("breakdown accuracy outside [0, 1]".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: EvalReport = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }
}

/// Accuracy per (gender, tool) cell; cells without images are omitted.
pub fn breakdown_by_gender_tool(
    records: &[&SampleRecord],
    predictions: &[ClassLabel],
    rule: BreakdownRule,
) -> Result<BTreeMap<(Gender, Tool), f64>> {
    if records.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: predictions.len(),
        });
    }
    let mut tally: BTreeMap<(Gender, Tool), (usize, usize)> = BTreeMap::new();
    for (r, p) in records.iter().zip(predictions) {
        let tools = match (r.class_label, r.tool) {
            (ClassLabel::Retouched, Some(t)) => vec![t],
            (ClassLabel::Retouched, None) => {
                return Err(Error::MissingTag {
                    id: r.id.clone(),
                    field: "tool",
                })
            }
            (ClassLabel::Original, _) if rule == BreakdownRule::OriginalsAndTool => vec![Tool::Tool1, Tool::Tool2],
            (ClassLabel::Original, _) => vec![],
        };
        for t in tools {
            let e = tally.entry((r.gender, t)).or_default();
            e.1 += 1;
            if *p == r.class_label {
                e.0 += 1;
            }
        }
    }
    Ok(tally
        .into_iter()
        .map(|(k, (c, n))| (k, c as f64 / n as f64))
        .collect())
}

fn labels_of(manifest: &DatasetManifest, indices: &[usize]) -> Vec<ClassLabel> {
    indices.iter().map(|&i| manifest.records[i].class_label).collect()
}

fn fit_and_score(
    manifest: &DatasetManifest,
    x: &Matrix,
    train: &[usize],
    algorithm: Algorithm,
    cfg: &PipelineConfig,
    pretrained: Option<&AutoencoderParams>,
) -> Result<Detector> {
    let xt = slice_columns(x, train)?;
    train_detector(&xt, &manifest.select(train), algorithm, cfg, pretrained)
}

/// Same- and cross-ethnicity evaluation. Diagonal cells hold `k` trials,
/// off-diagonal cells `k × k`.
pub fn run_cross_ethnicity(
    manifest: &DatasetManifest,
    x: &Matrix,
    cfg: &PipelineConfig,
    pretrained: Option<&AutoencoderParams>,
) -> Result<EvalReport> {
    cfg.validate()?;
    if x.cols() != manifest.len() {
        return Err(Error::LengthMismatch {
            left: x.cols(),
            right: manifest.len(),
        });
    }
    let trials = cross_ethnicity_trials(manifest, cfg)?;
    let groups = manifest.ethnicities();
    let mut acc: BTreeMap<(String, String, Algorithm), Vec<f64>> = BTreeMap::new();
    for &algorithm in &cfg.algorithms {
        let mut current: Option<((String, usize), Detector)> = None;
        for trial in &trials {
            let key = (trial.train_group.clone(), trial.held_out);
            if current.as_ref().map(|(k, _)| k) != Some(&key) {
                let det = fit_and_score(manifest, x, &trial.train, algorithm, cfg, pretrained)?;
                current = Some((key, det));
            }
            let det = &current.as_ref().expect("trained").1;
            let predictions = det.predict(&slice_columns(x, &trial.test)?)?;
            let a = accuracy(&predictions, &labels_of(manifest, &trial.test))?;
            acc.entry((trial.train_group.clone(), trial.test_group.clone(), algorithm))
                .or_default()
                .push(a);
        }
    }
    let mut cells = Vec::new();
    for &algorithm in &cfg.algorithms {
        for train in &groups {
            for test in &groups {
                let trials = acc
                    .remove(&(train.clone(), test.clone(), algorithm))
                    .unwrap_or_default();
                cells.push(Cell::from_trials(train, test, algorithm, trials));
            }
        }
    }
    Ok(EvalReport {
        protocol: ProtocolKind::CrossEthnicity,
        groups,
        cells,
        breakdowns: Vec::new(),
        roc: Vec::new(),
    })
}

/// Group name used for the single cell of the combined protocol.
pub const COMBINED_GROUP: &str = "ALL";

/// Trains on one half of a subject-disjoint stratified split and reports
/// accuracy, the gender/tool breakdown and the ROC curve on the other half.
pub fn run_combined(
    manifest: &DatasetManifest,
    x: &Matrix,
    cfg: &PipelineConfig,
    pretrained: Option<&AutoencoderParams>,
) -> Result<EvalReport> {
    cfg.validate()?;
    if x.cols() != manifest.len() {
        return Err(Error::LengthMismatch {
            left: x.cols(),
            right: manifest.len(),
        });
    }
    let split = combined_split(manifest, cfg.seed)?;
    let xtest = slice_columns(x, &split.test)?;
    let truth = labels_of(manifest, &split.test);
    let test_records: Vec<&SampleRecord> = split.test.iter().map(|&i| &manifest.records[i]).collect();
    let mut report = EvalReport {
        protocol: ProtocolKind::Combined,
        groups: vec![COMBINED_GROUP.to_owned()],
        cells: Vec::new(),
        breakdowns: Vec::new(),
        roc: Vec::new(),
    };
    for &algorithm in &cfg.algorithms {
        let det = fit_and_score(manifest, x, &split.train, algorithm, cfg, pretrained)?;
        let scores = det.scores(&xtest)?;
        let predictions: Vec<ClassLabel> = scores
            .iter()
            .map(|&s| if s >= 0.0 { ClassLabel::Retouched } else { ClassLabel::Original })
            .collect();
        let a = accuracy(&predictions, &truth)?;
        report
            .cells
            .push(Cell::from_trials(COMBINED_GROUP, COMBINED_GROUP, algorithm, vec![a]));
        for ((gender, tool), accuracy) in breakdown_by_gender_tool(&test_records, &predictions, cfg.breakdown)? {
            report.breakdowns.push(BreakdownCell {
                algorithm,
                gender,
                tool,
                accuracy,
            });
        }
        let labels: Vec<Label> = truth.iter().map(|&c| svm_label(c)).collect();
        report.roc.push(RocCurve {
            algorithm,
            points: roc_points(&scores, &labels)?,
        });
    }
    Ok(report)
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Train-by-test accuracy matrix per algorithm, as `mean ± std` percentages.
pub fn render_cross_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let width = report.groups.iter().map(String::len).max().unwrap_or(0).max(10);
    for algorithm in report.algorithms() {
        let _ = writeln!(out, "Cross-ethnicity accuracy (%), {}: rows train, columns test", algorithm.name());
        let _ = write!(out, "{:<width$}", "Train\\Test");
        for g in &report.groups {
            let _ = write!(out, "  {g:>13}");
        }
        out.push('\n');
        for train in &report.groups {
            let _ = write!(out, "{train:<width$}");
            for test in &report.groups {
                let text = match report.cell(train, test, algorithm) {
                    Some(c) => format!("{} ± {}", pct(c.mean_accuracy), pct(c.std_accuracy)),
                    None => "-".to_owned(),
                };
                let _ = write!(out, "  {text:>13}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Accuracy per gender and tool, one row per algorithm, with the overall
/// accuracy last.
pub fn render_breakdown_table(report: &EvalReport) -> String {
    let columns = [
        (Gender::Male, Tool::Tool1),
        (Gender::Male, Tool::Tool2),
        (Gender::Female, Tool::Tool1),
        (Gender::Female, Tool::Tool2),
    ];
    let mut out = String::from("Accuracy (%) by gender and tool\n");
    let _ = write!(out, "{:<10}", "Algorithm");
    for (g, t) in columns {
        let _ = write!(out, "  {:>12}", format!("{}/{}", g.as_str(), t.as_str()));
    }
    let _ = writeln!(out, "  {:>8}", "Overall");
    for algorithm in report.algorithms() {
        let _ = write!(out, "{:<10}", algorithm.name());
        for (g, t) in columns {
            let v = report
                .breakdowns
                .iter()
                .find(|b| b.algorithm == algorithm && b.gender == g && b.tool == t)
                .map_or("-".to_owned(), |b| pct(b.accuracy));
            let _ = write!(out, "  {v:>12}");
        }
        let overall = report
            .cells
            .iter()
            .find(|c| c.algorithm == algorithm)
            .map_or("-".to_owned(), |c| pct(c.mean_accuracy));
        let _ = writeln!(out, "  {overall:>8}");
    }
    out
}

pub fn render_report(report: &EvalReport) -> String {
    match report.protocol {
        ProtocolKind::CrossEthnicity => render_cross_table(report),
        ProtocolKind::Combined => render_breakdown_table(report),
    }
}

pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (f, t) in points {
        let _ = writeln!(out, "{f},{t}");
    }
    out
}
