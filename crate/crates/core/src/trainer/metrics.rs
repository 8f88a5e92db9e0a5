//! Cluster-quality metrics on a filter's slot output.
//!
//! Both distances are `1 − cos`, which ranges over `[0, 2]`.

use alloc::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::filter::SlotOutput;
use crate::linalg::{cosine_sim, Matrix};

/// Mean over non-empty slots of the mean `1 − cos(x_i, b_k)` within the slot.
/// Lower is tighter.
pub fn compactness(x: &Matrix, slots: &SlotOutput) -> Result<f64> {
    let mut total = 0.0;
    let mut active = 0usize;
    for (k, group) in slots.groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let mut acc = 0.0;
        for &i in group {
            acc += 1.0 - cosine_sim(x.row(i), slots.bases.row(k))?;
        }
        total += acc / group.len() as f64;
        active += 1;
    }
    if active == 0 {
        return Err(Error::invalid("compactness: every slot is empty"));
    }
    Ok(total / active as f64)
}

/// Mean `1 − cos(b_j, b_k)` over unordered pairs of non-empty slots.
/// 1 means orthogonal bases, 2 antipodal.
pub fn separability(slots: &SlotOutput) -> Result<f64> {
    let active: alloc::vec::Vec<usize> = (0..slots.num_slots()).filter(|&k| !slots.groups[k].is_empty()).collect();
    if active.len() < 2 {
        return Err(Error::invalid("separability: need at least two non-empty slots"));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &j) in active.iter().enumerate() {
        for &k in &active[a + 1..] {
            total += 1.0 - cosine_sim(slots.bases.row(j), slots.bases.row(k))?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// `Σ_k max_c |{i : I[i] = k, label[i] = c}| / N`.
pub fn purity(hard_index: &[usize], labels: &[usize]) -> Result<f64> {
    if hard_index.len() != labels.len() {
        return Err(Error::invalid("purity: length mismatch"));
    }
    if hard_index.is_empty() {
        return Ok(1.0);
    }
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&k, &c) in hard_index.iter().zip(labels) {
        *counts.entry((k, c)).or_default() += 1;
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(k, _), &n) in &counts {
        let b = best.entry(k).or_default();
        *b = (*b).max(n);
    }
    Ok(best.values().sum::<usize>() as f64 / hard_index.len() as f64)
}
