//! Greedy layer-wise training: L1-regularised pretraining followed by
//! subclass-supervised fine-tuning with IRLS reweighting.
//!
//! Every layer is trained by full-batch gradient descent on its own
//! autoencoder objective `‖X − W′σ(WX)‖² + penalty(WX)` with `X` the codes of
//! the previous layer. The step is `learning_rate / n` for a batch of `n`
//! samples. During fine-tuning the IRLS weights are refreshed every
//! `irls_refresh_every` steps, and each encoder row's step is divided by
//! `1 + 2η·c_r`, where `c_r` bounds the curvature of that row's surrogate
//! term. Rows whose weights sit on the `ε` floor are otherwise far too stiff
//! for a fixed step.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{init_params, AutoencoderParams, LayerParams};
use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, sum_sq, Matrix};
use crate::partition::{slice_columns, GroupPartition};
use crate::sparsity::{
    irls_weights_from_codes, l1_code_subgradient, penalty_on_codes, surrogate_code_gradient,
    surrogate_on_codes, IrlsState, PenaltyKind, PenaltySpec, DEFAULT_EPSILON,
};

/// Consecutive small-change epochs that trigger an early stop.
const PATIENCE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    /// Gradient steps between IRLS weight updates.
    pub irls_refresh_every: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Maximum gradient norm per layer step.
    pub grad_clip: Option<f64>,
    /// Relative objective change below which an epoch counts as converged.
    pub tolerance: f64,
    /// Grouping used during fine-tuning; `CLASS_L21` gives class-level
    /// (CSSE) encoding.
    pub finetune_penalty: PenaltyKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            learning_rate: 0.01,
            pretrain_epochs: 200,
            finetune_epochs: 200,
            irls_refresh_every: 10,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            grad_clip: None,
            tolerance: 1e-7,
            finetune_penalty: PenaltyKind::SubclassL21,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.irls_refresh_every == 0 {
            return bad("irls_refresh_every must be >= 1".into());
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return bad(format!("tolerance must be >= 0, got {}", self.tolerance));
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("grad_clip must be > 0, got {c}"));
            }
        }
        if self.finetune_penalty == PenaltyKind::L1 {
            return bad("finetune_penalty must be a grouped penalty".into());
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoEpochs,
    EpochBudget,
    Converged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    /// Objective before the first step.
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    /// True objective at every IRLS refresh, followed by the final value.
    /// Empty for ungrouped training.
    pub round_totals: Vec<f64>,
    pub stop_reason: StopReason,
}

impl LayerReport {
    pub fn final_total(&self) -> f64 {
        self.epochs.last().unwrap_or(&self.initial).total
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub layers: Vec<LayerReport>,
}

impl TrainReport {
    pub fn records(&self) -> impl Iterator<Item = &EpochRecord> {
        self.layers.iter().flat_map(|l| l.epochs.iter())
    }

    pub fn epochs_run(&self) -> usize {
        self.layers.iter().map(|l| l.epochs.len()).sum()
    }

    /// Sum over layers of each layer's final objective.
    pub fn final_objective(&self) -> f64 {
        self.layers.iter().map(LayerReport::final_total).sum()
    }

    /// One JSON object per epoch: `{epoch, recon, penalty, total}`.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for rec in self.records() {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Gradient of a single layer's objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub w: Matrix,
    pub w_prime: Matrix,
}

struct Forward {
    z: Matrix,
    h: Matrix,
    resid: Matrix,
}

fn forward(layer: &LayerParams, x: &Matrix) -> Result<Forward> {
    let z = layer.w.matmul(x)?;
    let h = z.map(crate::numerics::sigmoid_scalar);
    let resid = layer.w_prime.matmul(&h)?.sub(x)?;
    Ok(Forward { z, h, resid })
}

/// Penalty handling for one layer.
enum LayerPenalty<'a> {
    L1(f64),
    Grouped {
        spec: PenaltySpec<'a>,
        partition: Cow<'a, GroupPartition>,
    },
}

impl<'a> LayerPenalty<'a> {
    fn new(spec: PenaltySpec<'a>) -> Result<Self> {
        Ok(match spec.effective_partition()? {
            None => LayerPenalty::L1(spec.lambda),
            Some(partition) => LayerPenalty::Grouped { spec, partition },
        })
    }

    fn lambda(&self) -> f64 {
        match self {
            LayerPenalty::L1(l) => *l,
            LayerPenalty::Grouped { spec, .. } => spec.lambda,
        }
    }

    fn value(&self, z: &Matrix) -> Result<f64> {
        match self {
            LayerPenalty::L1(l) => penalty_on_codes(&PenaltySpec::l1(*l), z),
            LayerPenalty::Grouped { spec, .. } => penalty_on_codes(spec, z),
        }
    }
}

/// Gradients of the reconstruction term: `(∂/∂Z, ∂/∂W′)`.
fn recon_gradients(layer: &LayerParams, fwd: &Forward) -> Result<(Matrix, Matrix)> {
    let d_wp = fwd.resid.matmul_t(&fwd.h)?.scale(2.0);
    let d_h = layer.w_prime.t_matmul(&fwd.resid)?;
    let d_z = d_h.zip_map(&fwd.h, |g, s| 2.0 * g * s * (1.0 - s))?;
    Ok((d_z, d_wp))
}

/// Analytic gradient of `‖X − W′σ(WX)‖² + surrogate(WX)` at a fixed IRLS
/// state (reconstruction backprop plus the surrogate penalty gradient).
pub fn layer_surrogate_gradient(
    layer: &LayerParams,
    x: &Matrix,
    state: &IrlsState,
    spec: &PenaltySpec<'_>,
) -> Result<LayerGradient> {
    let fwd = forward(layer, x)?;
    let (mut d_z, d_wp) = recon_gradients(layer, &fwd)?;
    d_z.axpy(1.0, &surrogate_code_gradient(state, spec, &fwd.z)?)?;
    Ok(LayerGradient {
        w: d_z.matmul_t(x)?,
        w_prime: d_wp,
    })
}

/// `‖X − W′σ(WX)‖² + surrogate(WX)` at a fixed IRLS state.
pub fn layer_surrogate_objective(
    layer: &LayerParams,
    x: &Matrix,
    state: &IrlsState,
    spec: &PenaltySpec<'_>,
) -> Result<f64> {
    let fwd = forward(layer, x)?;
    Ok(frobenius_sq(&fwd.resid) + surrogate_on_codes(state, spec, &fwd.z)?)
}

/// Largest eigenvalue of `X·Xᵀ` by power iteration from a fixed start.
fn spectral_norm_sq(x: &Matrix) -> Result<f64> {
    let mut v = Matrix::filled(x.rows(), 1, 1.0);
    let mut estimate = 0.0;
    for _ in 0..50 {
        let u = x.matmul(&x.t_matmul(&v)?)?;
        let norm = sum_sq(u.data()).sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = u.scale(1.0 / norm);
        if (norm - estimate).abs() <= 1e-9 * norm {
            estimate = norm;
            break;
        }
        estimate = norm;
    }
    // The iteration approaches from below; pad slightly.
    Ok(estimate * 1.01)
}

fn clip(d_w: &mut Matrix, d_wp: &mut Matrix, max_norm: Option<f64>) {
    if let Some(max) = max_norm {
        let norm = (sum_sq(d_w.data()) + sum_sq(d_wp.data())).sqrt();
        if norm > max {
            let s = max / norm;
            d_w.data_mut().iter_mut().for_each(|v| *v *= s);
            d_wp.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn record(epoch: usize, recon: f64, penalty: f64) -> EpochRecord {
    EpochRecord {
        epoch,
        recon,
        penalty,
        total: recon + penalty,
    }
}

/// Trains one layer in place and returns its log. `epoch_offset` numbers the
/// records globally across layers.
fn train_layer(
    layer: &mut LayerParams,
    x: &Matrix,
    penalty: &LayerPenalty<'_>,
    epochs: usize,
    cfg: &TrainConfig,
    layer_index: usize,
    epoch_offset: usize,
) -> Result<LayerReport> {
    let n = x.cols();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let eta = cfg.learning_rate / n as f64;
    let lambda = penalty.lambda();

    let group_curvature: Vec<f64> = match penalty {
        LayerPenalty::Grouped { partition, .. } if lambda > 0.0 => {
            if partition.len() != n {
                return Err(Error::Shape(format!(
                    "partition covers {} samples, batch has {n}",
                    partition.len()
                )));
            }
            partition
                .groups()
                .map(|(_, idx)| spectral_norm_sq(&slice_columns(x, idx)?))
                .collect::<Result<_>>()?
        }
        _ => Vec::new(),
    };

    let mut fwd = forward(layer, x)?;
    let mut current = record(epoch_offset, frobenius_sq(&fwd.resid), penalty.value(&fwd.z)?);
    let initial = current;
    let mut records = Vec::with_capacity(epochs);
    let mut round_totals = Vec::new();
    let mut state: Option<IrlsState> = None;
    let mut row_steps = vec![eta; layer.hidden_dim()];
    let mut calm = 0;
    let mut stop_reason = if epochs == 0 {
        StopReason::NoEpochs
    } else {
        StopReason::EpochBudget
    };

    for e in 0..epochs {
        let (mut d_z, mut d_wp) = recon_gradients(layer, &fwd)?;
        if lambda > 0.0 {
            match penalty {
                LayerPenalty::L1(l) => d_z.axpy(1.0, &l1_code_subgradient(&fwd.z, *l))?,
                LayerPenalty::Grouped { spec, partition } => {
                    if e % cfg.irls_refresh_every == 0 {
                        let s = irls_weights_from_codes(&fwd.z, partition, cfg.epsilon)?;
                        for (r, step) in row_steps.iter_mut().enumerate() {
                            let c = partition
                                .groups()
                                .zip(&group_curvature)
                                .fold(0.0, |acc, ((key, _), g)| {
                                    let b = s.betas[&key][r];
                                    acc + b * b * g
                                });
                            *step = eta / (1.0 + 2.0 * eta * lambda * c);
                        }
                        state = Some(s);
                        round_totals.push(current.total);
                    }
                    let s = state.as_ref().expect("refreshed at epoch 0");
                    d_z.axpy(1.0, &surrogate_code_gradient(s, spec, &fwd.z)?)?;
                }
            }
        }
        let mut d_w = d_z.matmul_t(x)?;
        clip(&mut d_w, &mut d_wp, cfg.grad_clip);

        for (r, step) in row_steps.iter().enumerate() {
            for (w, g) in layer.w.row_mut(r).iter_mut().zip(d_w.row(r)) {
                *w -= step * g;
            }
        }
        layer.w_prime.axpy(-eta, &d_wp)?;

        fwd = forward(layer, x)?;
        let next = record(
            epoch_offset + e + 1,
            frobenius_sq(&fwd.resid),
            penalty.value(&fwd.z)?,
        );
        if !next.total.is_finite() {
            return Err(Error::NonFiniteObjective {
                epoch: epoch_offset + e + 1,
            });
        }
        let change = (current.total - next.total).abs() / current.total.abs().max(f64::MIN_POSITIVE);
        records.push(next);
        current = next;
        if change < cfg.tolerance {
            calm += 1;
            if calm >= PATIENCE {
                stop_reason = StopReason::Converged;
                break;
            }
        } else {
            calm = 0;
        }
    }
    if !round_totals.is_empty() {
        round_totals.push(current.total);
    }
    Ok(LayerReport {
        layer: layer_index,
        initial,
        epochs: records,
        round_totals,
        stop_reason,
    })
}

fn train_stack(
    params: &mut AutoencoderParams,
    x: &Matrix,
    spec: PenaltySpec<'_>,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if x.cols() == 0 {
        return Err(Error::EmptyBatch);
    }
    if x.rows() != params.input_dim {
        return Err(Error::Shape(format!(
            "data has {} rows, model expects {}",
            x.rows(),
            params.input_dim
        )));
    }
    let penalty = LayerPenalty::new(spec)?;
    let mut report = TrainReport::default();
    let mut input = Cow::Borrowed(x);
    let mut offset = 0;
    let depth = params.layers.len();
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let lr = train_layer(layer, &input, &penalty, epochs, cfg, k, offset)?;
        offset += lr.epochs.len();
        report.layers.push(lr);
        if k + 1 < depth {
            input = Cow::Owned(crate::autoencoder::encode_layer(layer, &input)?);
        }
    }
    Ok(report)
}

/// Initialises a stack and pretrains it without labels (L1 penalty).
pub fn pretrain(x: &Matrix, hidden_dims: &[usize], cfg: &TrainConfig) -> Result<(AutoencoderParams, TrainReport)> {
    if x.cols() == 0 || x.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let params = init_params(x.rows(), hidden_dims, cfg.seed)?;
    pretrain_from(params, x, cfg)
}

/// Continues unsupervised (L1) training from existing parameters.
pub fn pretrain_from(
    mut params: AutoencoderParams,
    x: &Matrix,
    cfg: &TrainConfig,
) -> Result<(AutoencoderParams, TrainReport)> {
    let report = train_stack(&mut params, x, PenaltySpec::l1(cfg.lambda), cfg.pretrain_epochs, cfg)?;
    Ok((params, report))
}

/// Subclass-supervised fine-tuning of every layer in turn.
pub fn finetune(
    mut params: AutoencoderParams,
    x: &Matrix,
    partition: &GroupPartition,
    cfg: &TrainConfig,
) -> Result<(AutoencoderParams, TrainReport)> {
    let spec = PenaltySpec::grouped(cfg.finetune_penalty, cfg.lambda, partition);
    let report = train_stack(&mut params, x, spec, cfg.finetune_epochs, cfg)?;
    Ok((params, report))
}

/// Objective of the stack: the sum over layers of each layer's
/// reconstruction term and penalty term, every layer fed the codes of the
/// layer below. Without a partition the penalty is the L1 pretraining term.
pub fn objective(
    params: &AutoencoderParams,
    x: &Matrix,
    partition: Option<&GroupPartition>,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let spec = match partition {
        Some(p) => PenaltySpec::grouped(cfg.finetune_penalty, cfg.lambda, p),
        None => PenaltySpec::l1(cfg.lambda),
    };
    let penalty = LayerPenalty::new(spec)?;
    let mut input = Cow::Borrowed(x);
    let (mut recon, mut pen) = (0.0, 0.0);
    for layer in &params.layers {
        let fwd = forward(layer, &input)?;
        recon += frobenius_sq(&fwd.resid);
        pen += penalty.value(&fwd.z)?;
        input = Cow::Owned(fwd.h);
    }
    Ok((recon, pen))
}

/// Step of the central differences used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-6;
/// Magnitude below which gradient entries are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative disagreement between the analytic gradient and central
/// finite differences of every layer's surrogate objective.
///
/// Each layer is checked on the codes its training pass sees (inputs held
/// fixed), with the IRLS state frozen at the current weights. Relative error
/// is `|a − f| / max(|a|, |f|, GRAD_CHECK_FLOOR)`.
pub fn grad_check(
    params: &AutoencoderParams,
    x: &Matrix,
    partition: &GroupPartition,
    cfg: &TrainConfig,
) -> Result<f64> {
    let spec = PenaltySpec::grouped(cfg.finetune_penalty, cfg.lambda, partition);
    let effective = spec.effective_partition()?.expect("grouped");
    let mut input = x.clone();
    let mut worst: f64 = 0.0;
    for layer in &params.layers {
        let z = layer.w.matmul(&input)?;
        let state = irls_weights_from_codes(&z, &effective, cfg.epsilon)?;
        let grad = layer_surrogate_gradient(layer, &input, &state, &spec)?;
        let f = |l: &LayerParams| layer_surrogate_objective(l, &input, &state, &spec);
        for (which, analytic) in [(0, &grad.w), (1, &grad.w_prime)] {
            for i in 0..analytic.data().len() {
                let mut plus = layer.clone();
                let mut minus = layer.clone();
                let (p, m) = if which == 0 {
                    (&mut plus.w, &mut minus.w)
                } else {
                    (&mut plus.w_prime, &mut minus.w_prime)
                };
                p.data_mut()[i] += GRAD_CHECK_STEP;
                m.data_mut()[i] -= GRAD_CHECK_STEP;
                let fd = (f(&plus)? - f(&minus)?) / (2.0 * GRAD_CHECK_STEP);
                let a = analytic.data()[i];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_CHECK_FLOOR);
                worst = worst.max(rel);
            }
        }
        input = crate::autoencoder::encode_layer(layer, &input)?;
    }
    Ok(worst)
}

/// Hidden rows whose mean `|activation − 0.5|` over the listed samples
/// exceeds `threshold`.
pub fn sparsity_signature(codes: &Matrix, samples: &[usize], threshold: f64) -> Vec<bool> {
    (0..codes.rows())
        .map(|r| {
            let row = codes.row(r);
            let mean = samples.iter().fold(0.0, |acc, &c| acc + (row[c] - 0.5).abs())
                / samples.len().max(1) as f64;
            mean > threshold
        })
        .collect()
}

/// Jaccard overlap of two support sets; two empty supports overlap fully.
pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
