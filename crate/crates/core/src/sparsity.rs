//! Sparsity penalties on the pre-activation codes `Z = W·X` and the IRLS
//! machinery used to optimise the grouped ones.
//!
//! The grouped penalty is `λ Σ_g ‖W·X_g‖_{2,1}` where `g` runs over the
//! (class, subclass) groups of a [`GroupPartition`] (or over classes only for
//! [`PenaltyKind::ClassL21`]). IRLS replaces every row norm `‖z_r‖` by the
//! quadratic majoriser `‖z_r‖²/(2m) + m/2` with `m = max(‖z⁰_r‖, ε)` taken at
//! the anchor iterate; `b = (2m)^(−1/2)` is the stored per-row weight.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::partition::{GroupKey, GroupPartition};

pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PenaltyKind {
    /// Entrywise `λ Σ|W·X|`.
    L1,
    /// One l2,1 block per class.
    ClassL21,
    /// One l2,1 block per (class, subclass) group.
    SubclassL21,
}

#[derive(Debug, Clone, Copy)]
pub struct PenaltySpec<'a> {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub partition: Option<&'a GroupPartition>,
}

impl<'a> PenaltySpec<'a> {
    pub fn l1(lambda: f64) -> Self {
        Self {
            kind: PenaltyKind::L1,
            lambda,
            partition: None,
        }
    }

    pub fn grouped(kind: PenaltyKind, lambda: f64, partition: &'a GroupPartition) -> Self {
        Self {
            kind,
            lambda,
            partition: Some(partition),
        }
    }

    pub fn is_grouped(&self) -> bool {
        self.kind != PenaltyKind::L1
    }

    /// The column grouping the penalty sums over; `None` for L1.
    pub fn effective_partition(&self) -> Result<Option<Cow<'a, GroupPartition>>> {
        match self.kind {
            PenaltyKind::L1 => Ok(None),
            PenaltyKind::SubclassL21 => Ok(Some(Cow::Borrowed(
                self.partition.ok_or(Error::MissingPartition)?,
            ))),
            PenaltyKind::ClassL21 => Ok(Some(Cow::Owned(
                self.partition
                    .ok_or(Error::MissingPartition)?
                    .collapse_subclasses(),
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Per-group, per-row weights of the IRLS surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsState {
    /// Diagonal of `β_g` for every non-empty group.
    pub betas: BTreeMap<GroupKey, Vec<f64>>,
    pub epsilon: f64,
    group_sizes: BTreeMap<GroupKey, usize>,
}

impl IrlsState {
    /// `Σ_g Σ_r m_gr / 2 = Σ 1/(4 b²)`: the constant that turns the
    /// surrogate into a majoriser of the unscaled l2,1 sum, tight at the
    /// anchor.
    pub fn majorizer_constant(&self) -> f64 {
        self.betas
            .values()
            .flatten()
            .fold(0.0, |acc, b| acc + 1.0 / (4.0 * b * b))
    }

    fn check(&self, partition: &GroupPartition, rows: usize) -> Result<()> {
        let matches = partition.group_count() == self.group_sizes.len()
            && partition.groups().all(|(key, idx)| {
                self.group_sizes.get(&key) == Some(&idx.len())
                    && self.betas.get(&key).is_some_and(|b| b.len() == rows)
            });
        if matches {
            Ok(())
        } else {
            Err(Error::StaleState(format!(
                "state covers {} groups, penalty has {} over {rows} rows",
                self.group_sizes.len(),
                partition.group_count()
            )))
        }
    }
}

fn codes(w: &Matrix, x: &Matrix) -> Result<Matrix> {
    w.matmul(x)
}

fn check_cover(partition: &GroupPartition, cols: usize) -> Result<()> {
    if partition.len() != cols {
        return Err(Error::Shape(format!(
            "partition covers {} samples, batch has {cols}",
            partition.len()
        )));
    }
    Ok(())
}

/// Row norms of `Z` restricted to the columns of each group.
pub fn group_row_norms(z: &Matrix, partition: &GroupPartition) -> Vec<(GroupKey, Vec<f64>)> {
    partition
        .groups()
        .map(|(key, idx)| {
            let norms = (0..z.rows())
                .map(|r| {
                    let row = z.row(r);
                    idx.iter().fold(0.0, |acc, &c| acc + row[c] * row[c]).sqrt()
                })
                .collect();
            (key, norms)
        })
        .collect()
}

/// True penalty value `λ·R(W, X)`.
pub fn penalty_value(spec: &PenaltySpec<'_>, w: &Matrix, x: &Matrix) -> Result<f64> {
    spec.validate()?;
    let z = codes(w, x)?;
    penalty_on_codes(spec, &z)
}

/// Penalty evaluated on precomputed codes `Z = W·X`.
pub fn penalty_on_codes(spec: &PenaltySpec<'_>, z: &Matrix) -> Result<f64> {
    match spec.effective_partition()? {
        None => Ok(spec.lambda * z.sum_abs()),
        Some(partition) => {
            check_cover(&partition, z.cols())?;
            let total = group_row_norms(z, &partition)
                .iter()
                .flat_map(|(_, norms)| norms)
                .fold(0.0, |acc, n| acc + n);
            Ok(spec.lambda * total)
        }
    }
}

/// Recomputes the IRLS weights at the current iterate:
/// `b_gr = (2·max(‖row_r(W·X_g)‖, ε))^(−1/2)`.
pub fn update_irls_weights(
    w: &Matrix,
    x: &Matrix,
    partition: &GroupPartition,
    epsilon: f64,
) -> Result<IrlsState> {
    let z = codes(w, x)?;
    irls_weights_from_codes(&z, partition, epsilon)
}

pub fn irls_weights_from_codes(
    z: &Matrix,
    partition: &GroupPartition,
    epsilon: f64,
) -> Result<IrlsState> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    check_cover(partition, z.cols())?;
    let betas = group_row_norms(z, partition)
        .into_iter()
        .map(|(key, norms)| {
            let b = norms
                .into_iter()
                .map(|n| (2.0 * n.max(epsilon)).powf(-0.5))
                .collect();
            (key, b)
        })
        .collect();
    let group_sizes = partition.groups().map(|(k, idx)| (k, idx.len())).collect();
    Ok(IrlsState {
        betas,
        epsilon,
        group_sizes,
    })
}

fn grouped_partition<'a>(
    state: &IrlsState,
    spec: &PenaltySpec<'a>,
    z: &Matrix,
) -> Result<Cow<'a, GroupPartition>> {
    spec.validate()?;
    let partition = spec.effective_partition()?.ok_or_else(|| {
        Error::InvalidConfig("IRLS surrogate needs a grouped penalty".into())
    })?;
    check_cover(&partition, z.cols())?;
    state.check(&partition, z.rows())?;
    Ok(partition)
}

/// Quadratic surrogate `λ Σ_g Σ_r b_gr² ‖row_r(W·X_g)‖²`.
pub fn surrogate_penalty(state: &IrlsState, spec: &PenaltySpec<'_>, w: &Matrix, x: &Matrix) -> Result<f64> {
    surrogate_on_codes(state, spec, &codes(w, x)?)
}

pub fn surrogate_on_codes(state: &IrlsState, spec: &PenaltySpec<'_>, z: &Matrix) -> Result<f64> {
    let partition = grouped_partition(state, spec, z)?;
    let mut total = 0.0;
    for (key, idx) in partition.groups() {
        let betas = &state.betas[&key];
        for (r, b) in betas.iter().enumerate() {
            let row = z.row(r);
            let sq = idx.iter().fold(0.0, |acc, &c| acc + row[c] * row[c]);
            total += b * b * sq;
        }
    }
    Ok(spec.lambda * total)
}

/// Gradient of the surrogate with respect to the codes `Z`:
/// `2λ·b_gr²·z_rc` for column `c` in group `g`.
pub fn surrogate_code_gradient(state: &IrlsState, spec: &PenaltySpec<'_>, z: &Matrix) -> Result<Matrix> {
    let partition = grouped_partition(state, spec, z)?;
    let mut grad = Matrix::zeros(z.rows(), z.cols());
    for (key, idx) in partition.groups() {
        for (r, b) in state.betas[&key].iter().enumerate() {
            let scale = 2.0 * spec.lambda * b * b;
            for &c in idx {
                grad.set(r, c, scale * z.get(r, c));
            }
        }
    }
    Ok(grad)
}

/// Gradient of the surrogate with respect to `W`:
/// `2λ Σ_g D_g (W·X_g) X_gᵀ`.
pub fn penalty_gradient(state: &IrlsState, spec: &PenaltySpec<'_>, w: &Matrix, x: &Matrix) -> Result<Matrix> {
    let z = codes(w, x)?;
    surrogate_code_gradient(state, spec, &z)?.matmul_t(x)
}

/// Subgradient of `λ Σ|z|` with respect to the codes, taking 0 at 0.
pub fn l1_code_subgradient(z: &Matrix, lambda: f64) -> Matrix {
    z.map(|v| {
        if v > 0.0 {
            lambda
        } else if v < 0.0 {
            -lambda
        } else {
            0.0
        }
    })
}

/// Entrywise-column closed form of the grouped penalty when every sample is
/// its own group: `λ Σ_c Σ_r |z_rc|`.
pub fn singleton_closed_form(lambda: f64, z: &Matrix) -> f64 {
    lambda
        * (0..z.cols()).fold(0.0, |acc, c| {
            acc + (0..z.rows()).fold(0.0, |a, r| a + z.get(r, c).abs())
        })
}
