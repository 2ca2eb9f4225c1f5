//! Class/subclass hierarchy over the columns of a batch.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Key of a (class, subclass) group.
pub type GroupKey = (usize, usize);

/// Partition of the sample columns `0..n` into (class, subclass) groups.
///
/// Class and subclass labels are small opaque integers. Every class carries
/// the same number of subclass slots (one past the largest subclass label
/// seen); slots without samples are kept in [`GroupPartition::empty_slots`]
/// and contribute nothing to grouped penalties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    class_count: usize,
    subclass_counts: Vec<usize>,
    groups: BTreeMap<GroupKey, Vec<usize>>,
    empty: Vec<GroupKey>,
    len: usize,
}

impl GroupPartition {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn subclass_counts(&self) -> &[usize] {
        &self.subclass_counts
    }

    /// Non-empty groups in (class, subclass) order.
    pub fn groups(&self) -> impl Iterator<Item = (GroupKey, &[usize])> {
        self.groups.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn group(&self, key: GroupKey) -> Option<&[usize]> {
        self.groups.get(&key).map(Vec::as_slice)
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn empty_slots(&self) -> &[GroupKey] {
        &self.empty
    }

    /// Batch size covered by the partition.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Merges every class's subclasses into a single group `(class, 0)`,
    /// which is the class-level grouping of the CSSE penalty.
    pub fn collapse_subclasses(&self) -> GroupPartition {
        let mut groups: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
        for ((class, _), idx) in &self.groups {
            groups.entry((*class, 0)).or_default().extend_from_slice(idx);
        }
        let mut empty = Vec::new();
        for class in 0..self.class_count {
            match groups.get_mut(&(class, 0)) {
                Some(idx) => idx.sort_unstable(),
                None => empty.push((class, 0)),
            }
        }
        GroupPartition {
            class_count: self.class_count,
            subclass_counts: vec![1; self.class_count],
            groups,
            empty,
            len: self.len,
        }
    }

    /// Relabels columns: sample `i` moves to column `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<GroupPartition> {
        if perm.len() != self.len {
            return Err(Error::LengthMismatch {
                left: perm.len(),
                right: self.len,
            });
        }
        let mut groups = self.groups.clone();
        for idx in groups.values_mut() {
            for i in idx.iter_mut() {
                *i = perm[*i];
            }
            idx.sort_unstable();
        }
        Ok(GroupPartition {
            groups,
            ..self.clone()
        })
    }
}

/// Groups sample indices by their (class, subclass) label pair.
pub fn build_partition(class_labels: &[usize], subclass_labels: &[usize]) -> Result<GroupPartition> {
    if class_labels.len() != subclass_labels.len() {
        return Err(Error::InvalidLabels(format!(
            "{} class labels but {} subclass labels",
            class_labels.len(),
            subclass_labels.len()
        )));
    }
    if class_labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let class_count = class_labels.iter().max().map_or(0, |m| m + 1);
    let slots = subclass_labels.iter().max().map_or(0, |m| m + 1);
    let mut groups: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (i, (&c, &s)) in class_labels.iter().zip(subclass_labels).enumerate() {
        groups.entry((c, s)).or_default().push(i);
    }
    let mut empty = Vec::new();
    for c in 0..class_count {
        for s in 0..slots {
            if !groups.contains_key(&(c, s)) {
                empty.push((c, s));
            }
        }
    }
    Ok(GroupPartition {
        class_count,
        subclass_counts: vec![slots; class_count],
        groups,
        empty,
        len: class_labels.len(),
    })
}

/// Gathers the listed columns, in the listed order.
pub fn slice_columns(m: &Matrix, indices: &[usize]) -> Result<Matrix> {
    if indices.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= m.cols()) {
        return Err(Error::Index {
            index: bad,
            cols: m.cols(),
        });
    }
    Ok(Matrix::from_fn(m.rows(), indices.len(), |r, c| {
        m.get(r, indices[c])
    }))
}
