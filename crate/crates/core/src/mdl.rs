//! Reconstruction losses, description lengths and the MDL generalization
//! bound `L_D ≤ L_S + sqrt((|h| + ln(2/δ)) / 2m)`.
//!
//! `|h|` is counted with a fixed-width code: `value_bits` per basis entry and
//! `ceil(log2 M)` bits per hard token assignment. Because the bound adds `|h|`
//! to a natural log, [`CodeUnit::Bits`] converts bits to nats first;
//! [`CodeUnit::Raw`] uses the count as-is.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{matmul, Matrix};

/// One `(X, A, B)` triple.
#[derive(Debug, Clone, Copy)]
pub struct ReconSample<'a> {
    pub x: &'a Matrix,
    pub a: &'a Matrix,
    pub b: &'a Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconLoss {
    pub empirical: f64,
    pub per_sample: Vec<f64>,
}

/// Squared Frobenius error of each `X − A·B` and their mean.
pub fn empirical_recon_loss(samples: &[ReconSample<'_>]) -> Result<ReconLoss> {
    if samples.is_empty() {
        return Err(Error::invalid("empirical_recon_loss: need at least one sample"));
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    for s in samples {
        let xh = matmul(s.a, s.b)?;
        if xh.shape() != s.x.shape() {
            return Err(Error::dims("empirical_recon_loss", s.x.shape(), xh.shape()));
        }
        let sq = s
            .x
            .as_slice()
            .iter()
            .zip(xh.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        per_sample.push(sq);
    }
    let empirical = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(ReconLoss {
        empirical,
        per_sample,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptionLength {
    pub basis_bits: u64,
    pub assignment_bits: u64,
    pub total_bits: u64,
}

/// `ceil(log2 m)` for `m ≥ 1`.
pub fn ceil_log2(m: u64) -> u64 {
    debug_assert!(m >= 1);
    (u64::BITS - (m - 1).leading_zeros()) as u64
}

pub fn description_length(n: usize, m: usize, d: usize, value_bits: u32) -> Result<DescriptionLength> {
    if n == 0 || m == 0 || d == 0 || value_bits == 0 {
        return Err(Error::invalid("description_length: arguments must be positive"));
    }
    let basis_bits = (m as u64) * (d as u64) * value_bits as u64;
    let assignment_bits = (n as u64) * ceil_log2(m as u64);
    Ok(DescriptionLength {
        basis_bits,
        assignment_bits,
        total_bits: basis_bits + assignment_bits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CodeUnit {
    /// Multiply `|h|` by `ln 2` before adding `ln(2/δ)`.
    #[default]
    Bits,
    /// Use `|h|` unconverted.
    Raw,
}

impl CodeUnit {
    pub fn name(self) -> &'static str {
        match self {
            CodeUnit::Bits => "bits",
            CodeUnit::Raw => "raw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub empirical_loss: f64,
    pub penalty: f64,
    pub upper_bound: f64,
    pub m: u64,
    pub delta: f64,
    pub h_bits: u64,
    pub unit: CodeUnit,
}

/// Complexity penalty `sqrt((|h| + ln(2/δ)) / 2m)`.
pub fn bound_penalty(h_bits: u64, m: u64, delta: f64, unit: CodeUnit) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("generalization_bound: m must be at least 1"));
    }
    if !(delta > 0.0 && delta <= 2.0) {
        return Err(Error::invalid("generalization_bound: delta must lie in (0, 2]"));
    }
    let h = match unit {
        CodeUnit::Bits => h_bits as f64 * core::f64::consts::LN_2,
        CodeUnit::Raw => h_bits as f64,
    };
    Ok(libm::sqrt((h + libm::log(2.0 / delta)) / (2.0 * m as f64)))
}

pub fn generalization_bound(
    empirical_loss: f64,
    h_bits: u64,
    m: u64,
    delta: f64,
    unit: CodeUnit,
) -> Result<BoundReport> {
    if !empirical_loss.is_finite() {
        return Err(Error::NonFinite("generalization_bound"));
    }
    let penalty = bound_penalty(h_bits, m, delta, unit)?;
    Ok(BoundReport {
        empirical_loss,
        penalty,
        upper_bound: empirical_loss + penalty,
        m,
        delta,
        h_bits,
        unit,
    })
}
