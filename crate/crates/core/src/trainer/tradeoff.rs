//! Slot-count sweep of the description-length trade-off.
//!
//! For each candidate `M` an allocator is trained on the first training
//! sample. Every sample is then reconstructed from its hard assignment: `A` is
//! one-hot on the routed slot and `B` holds the per-slot token means (the
//! least-squares optimal bases for that `A`). The empirical loss, the code
//! length `|h|` of `(A, B)` and the resulting bound are reported per `M`,
//! together with a held-out estimate of the expected loss on fresh samples.

use alloc::vec::Vec;

use super::synthetic::{gen_samples_from, SyntheticSpec};
use super::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::filter::{gate, AllocatorParams, FilterConfig};
use crate::linalg::Matrix;
use crate::mdl::{self, CodeUnit, ReconSample};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub data: SyntheticSpec,
    pub slot_counts: Vec<usize>,
    pub train_samples: usize,
    pub heldout_samples: usize,
    /// Training template; `filter.num_slots` is overridden per sweep point.
    pub train: TrainConfig,
    pub value_bits: u32,
    pub delta: f64,
    pub unit: CodeUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub num_slots: usize,
    pub empirical_loss: f64,
    /// Held-out mean; an estimate of the expected loss, not the expectation.
    pub heldout_estimate: f64,
    pub description: mdl::DescriptionLength,
    pub bound: mdl::BoundReport,
    pub active_slots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Index into `points` of the smallest upper bound (first on ties).
    pub argmin: usize,
}

impl SweepReport {
    pub fn interior_minimum(&self) -> bool {
        self.argmin > 0 && self.argmin + 1 < self.points.len()
    }
}

/// Hard one-hot assignment and per-slot mean bases.
fn hard_factorization(params: &AllocatorParams, x: &Matrix, m: usize) -> Result<(Matrix, Matrix, usize)> {
    let g = gate(params, x)?;
    let (n, d) = x.shape();
    let mut a = Matrix::zeros(n, m);
    let mut b = Matrix::zeros(m, d);
    let mut counts = alloc::vec![0usize; m];
    for (i, &k) in g.hard_index.iter().enumerate() {
        a[(i, k)] = 1.0;
        counts[k] += 1;
        for (o, &v) in b.row_mut(k).iter_mut().zip(x.row(i)) {
            *o += v;
        }
    }
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 {
            for v in b.row_mut(k) {
                *v /= c as f64;
            }
        }
    }
    let active = counts.iter().filter(|&&c| c > 0).count();
    Ok((a, b, active))
}

fn mean_loss(params: &AllocatorParams, samples: &[(Matrix, Vec<usize>)], m: usize) -> Result<(f64, usize)> {
    let facts: Vec<(Matrix, Matrix, usize)> = samples
        .iter()
        .map(|(x, _)| hard_factorization(params, x, m))
        .collect::<Result<_>>()?;
    let recon: Vec<ReconSample<'_>> = samples
        .iter()
        .zip(&facts)
        .map(|((x, _), (a, b, _))| ReconSample { x, a, b })
        .collect();
    let active = facts.first().map_or(0, |f| f.2);
    Ok((mdl::empirical_recon_loss(&recon)?.empirical, active))
}

pub fn mdl_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.slot_counts.is_empty() || cfg.train_samples == 0 || cfg.heldout_samples == 0 {
        return Err(Error::invalid("mdl_sweep: need slot counts and at least one sample of each kind"));
    }
    let train_set = gen_samples_from(&cfg.data, 0..cfg.train_samples as u64)?;
    let heldout = gen_samples_from(
        &cfg.data,
        cfg.train_samples as u64..(cfg.train_samples + cfg.heldout_samples) as u64,
    )?;
    let (x0, labels0) = &train_set[0];
    let (n, d) = x0.shape();

    let mut points = Vec::with_capacity(cfg.slot_counts.len());
    for &m in &cfg.slot_counts {
        let mut tc = cfg.train.clone();
        tc.filter = FilterConfig {
            num_slots: m,
            token_dim: d,
            ..cfg.train.filter.clone()
        };
        let report = train(x0, Some(labels0), &tc)?;
        let (ls, active) = mean_loss(&report.final_params, &train_set, m)?;
        let (ld, _) = mean_loss(&report.final_params, &heldout, m)?;
        let description = mdl::description_length(n, m, d, cfg.value_bits)?;
        let bound = mdl::generalization_bound(
            ls,
            description.total_bits,
            cfg.train_samples as u64,
            cfg.delta,
            cfg.unit,
        )?;
        points.push(SweepPoint {
            num_slots: m,
            empirical_loss: ls,
            heldout_estimate: ld,
            description,
            bound,
            active_slots: active,
        });
    }
    let argmin = points
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.bound.upper_bound < points[best].bound.upper_bound { i } else { best });
    Ok(SweepReport { points, argmin })
}
