//! Cost-sensitive linear SVM and ROC utilities.
//!
//! The classifier minimises `½‖w‖² + Σ_k c(y_k)·max(0, 1 − y_k(w·x_k + b))`
//! with separate hinge costs for the two classes, by deterministic
//! full-batch subgradient descent. Inputs are standardised with training
//! statistics that are stored alongside the weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub cost_pos: f64,
    pub cost_neg: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            cost_pos: 1.0,
            cost_neg: 1.0,
            epochs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub cost_pos: f64,
    pub cost_neg: f64,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

impl SvmModel {
    pub fn feature_dim(&self) -> usize {
        self.w.len()
    }

    /// `w·z + b` for the standardised input `z`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "feature vector of length {}, model expects {}",
                x.len(),
                self.feature_dim()
            )));
        }
        let z: Vec<f64> = x
            .iter()
            .zip(&self.feature_means)
            .zip(&self.feature_stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        Ok(dot(&self.w, &z) + self.b)
    }

    /// Ties go to the positive class.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(if self.decision_value(x)? >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        })
    }

    /// Decision values for every column of `features`.
    pub fn decision_values(&self, features: &Matrix) -> Result<Vec<f64>> {
        (0..features.cols())
            .map(|c| self.decision_value(&features.column(c)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SvmModel = serde_json::from_str(text)?;
        let d = m.w.len();
        if m.feature_means.len() != d || m.feature_stds.len() != d {
            return Err(Error::Shape("standardisation vectors do not match w".into()));
        }
        if !(m.cost_pos > 0.0 && m.cost_neg > 0.0) {
            return Err(Error::InvalidConfig("costs must be positive".into()));
        }
        if m.feature_stds.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::InvalidConfig("feature_stds must be positive".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn check_labels(features: &Matrix, labels: &[Label]) -> Result<()> {
    if labels.len() != features.cols() {
        return Err(Error::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            features.cols()
        )));
    }
    Ok(())
}

/// `½‖w‖² + Σ_k c(y_k)·hinge(y_k(w·x_k + b))` over the columns of `features`.
pub fn svm_objective(
    w: &[f64],
    b: f64,
    features: &Matrix,
    labels: &[Label],
    cost_pos: f64,
    cost_neg: f64,
) -> Result<f64> {
    check_labels(features, labels)?;
    let xt = features.transpose();
    let mut total = 0.5 * dot(w, w);
    for (k, label) in labels.iter().enumerate() {
        let cost = match label {
            Label::Positive => cost_pos,
            Label::Negative => cost_neg,
        };
        let margin = label.sign() * (dot(w, xt.row(k)) + b);
        total += cost * (1.0 - margin).max(0.0);
    }
    Ok(total)
}

/// Per-feature mean and population standard deviation over the columns.
/// Constant features get a standard deviation of 1.
pub fn feature_moments(features: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = features.cols() as f64;
    let means: Vec<f64> = (0..features.rows())
        .map(|r| features.row(r).iter().fold(0.0, |a, v| a + v) / n)
        .collect();
    let stds = (0..features.rows())
        .map(|r| {
            let var = features
                .row(r)
                .iter()
                .fold(0.0, |a, v| a + (v - means[r]).powi(2))
                / n;
            let s = var.sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (means, stds)
}

/// Trains on the columns of `features` (one sample per column).
///
/// Step size `1/t` at iteration `t`; the iterate with the lowest objective
/// is returned.
pub fn train_svm(features: &Matrix, labels: &[Label], cfg: &SvmConfig) -> Result<SvmModel> {
    check_labels(features, labels)?;
    if !(cfg.cost_pos > 0.0 && cfg.cost_neg > 0.0) {
        return Err(Error::InvalidConfig("costs must be positive".into()));
    }
    if !(labels.contains(&Label::Positive) && labels.contains(&Label::Negative)) {
        return Err(Error::SingleClassData);
    }
    let (means, stds) = feature_moments(features);
    let z = Matrix::from_fn(features.rows(), features.cols(), |r, c| {
        (features.get(r, c) - means[r]) / stds[r]
    });
    let zt = z.transpose();
    let d = z.rows();
    let cost = |l: Label| match l {
        Label::Positive => cfg.cost_pos,
        Label::Negative => cfg.cost_neg,
    };

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (svm_objective(&w, b, &z, labels, cfg.cost_pos, cfg.cost_neg)?, w.clone(), b);
    for t in 1..=cfg.epochs {
        let eta = 1.0 / t as f64;
        let mut g_w = w.clone();
        let mut g_b = 0.0;
        for (k, &label) in labels.iter().enumerate() {
            let x = zt.row(k);
            let y = label.sign();
            if y * (dot(&w, x) + b) < 1.0 {
                let c = cost(label);
                for (g, v) in g_w.iter_mut().zip(x) {
                    *g -= c * y * v;
                }
                g_b -= c * y;
            }
        }
        for (wi, g) in w.iter_mut().zip(&g_w) {
            *wi -= eta * g;
        }
        b -= eta * g_b;
        let obj = svm_objective(&w, b, &z, labels, cfg.cost_pos, cfg.cost_neg)?;
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }
    Ok(SvmModel {
        w: best.1,
        b: best.2,
        cost_pos: cfg.cost_pos,
        cost_neg: cfg.cost_neg,
        feature_means: means,
        feature_stds: stds,
    })
}

/// ROC curve from a descending sweep over the distinct scores. A sample is
/// called positive when its score is at least the threshold. The curve
/// starts at (0, 0) and ends at (1, 1).
pub fn roc_points(scores: &[f64], labels: &[Label]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let pos = labels.iter().filter(|l| **l == Label::Positive).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassData);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                Label::Positive => tp += 1,
                Label::Negative => fp += 1,
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn roc_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .fold(0.0, |acc, w| acc + (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
}
