//! Per-slot contrastive log-likelihood, the orthogonal loss, and exact
//! reverse-mode gradients of the training objective.
//!
//! For a token `x_i` routed to slot `k`, the per-token term is
//!
//! ```text
//! s_ik / τ − log Σ_{j ∈ D_k} exp(s_ij / τ),    s_ij = cos(x_i, b_j)
//! ```
//!
//! where `D_k` is every slot except `k` by default (the positive is left out of
//! the denominator). Slot `k`'s log-likelihood averages the term over its
//! group; the loss is `−(1/M) Σ_k l_k` over non-empty slots.
//!
//! Gradient graph: logits → softmax `A` → routing weights `W` (hard indices
//! are constants) → fused bases `B` → cosine similarities → loss. Noise rows
//! of empty slots are constants.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filter::{self, AllocatorParams, FilterConfig, SlotOutput};
use crate::linalg::{self, dot, log_sum_exp, Matrix, EPS_NORM};

pub const DEFAULT_TAU: f64 = 0.07;
pub const DEFAULT_TAU_MIN: f64 = 1e-3;
pub const DEFAULT_TAU_MAX: f64 = 10.0;

/// Normalization of the sum over slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlotAverage {
    /// `1/M`, empty slots contribute zero.
    #[default]
    AllSlots,
    /// `1/|active slots|`.
    ActiveSlots,
}

/// Which slots enter the log-likelihood denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    /// `j ≠ k` only.
    #[default]
    ExcludePositive,
    /// All slots, as in InfoNCE.
    IncludePositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossParams {
    pub tau: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub average: SlotAverage,
    pub denominator: Denominator,
    /// Treat the bases as constants inside the orthogonal loss.
    pub detach_bases: bool,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            tau: DEFAULT_TAU,
            tau_min: DEFAULT_TAU_MIN,
            tau_max: DEFAULT_TAU_MAX,
            average: SlotAverage::AllSlots,
            denominator: Denominator::ExcludePositive,
            detach_bases: false,
        }
    }
}

impl LossParams {
    pub fn with_tau(tau: f64) -> Result<Self> {
        let lp = LossParams {
            tau,
            ..LossParams::default()
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau_max) || !self.tau_max.is_finite() {
            return Err(Error::invalid("require 0 < tau_min <= tau_max"));
        }
        if !(self.tau >= self.tau_min && self.tau <= self.tau_max) {
            return Err(Error::invalid("tau outside [tau_min, tau_max]"));
        }
        Ok(())
    }

    pub fn clamp_tau(&mut self) {
        self.tau = self.tau.clamp(self.tau_min, self.tau_max);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// `l(E_k, B)`, zero for empty slots.
    pub per_slot: Vec<f64>,
    pub active_slots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub d_gate_weight: Matrix,
    pub d_gate_bias: Vec<f64>,
    pub d_tau: f64,
}

impl GradientBundle {
    /// `[d_gate_weight, d_gate_bias, d_tau]`, matching
    /// [`AllocatorParams::to_flat`] followed by `tau`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.d_gate_weight.as_slice().to_vec();
        v.extend_from_slice(&self.d_gate_bias);
        v.push(self.d_tau);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.d_gate_weight.is_finite()
            && self.d_gate_bias.iter().all(|v| v.is_finite())
            && self.d_tau.is_finite()
    }
}

/// Unit rows plus their original norms.
fn unit_rows(m: &Matrix, context: &'static str) -> Result<(Matrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = linalg::norm(m.row(i));
        if !(n > EPS_NORM) {
            return Err(Error::DegenerateVector(context));
        }
        for v in out.row_mut(i) {
            *v /= n;
        }
        norms.push(n);
    }
    Ok((out, norms))
}

#[inline]
fn in_denominator(j: usize, k: usize, denom: Denominator) -> bool {
    j != k || denom == Denominator::IncludePositive
}

/// Per-token term given its similarity row.
fn token_term(sims: &[f64], k: usize, tau: f64, denom: Denominator) -> f64 {
    let lse = log_sum_exp(
        sims.iter()
            .enumerate()
            .filter(move |&(j, _)| in_denominator(j, k, denom))
            .map(move |(_, &s)| s / tau),
    );
    sims[k] / tau - lse
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau must be positive and finite"));
    }
    Ok(())
}

fn similarity_row(xhat: &[f64], bhat: &Matrix) -> Vec<f64> {
    bhat.iter_rows().map(|b| dot(xhat, b).clamp(-1.0, 1.0)).collect()
}

/// `l(E_k, B)` with the positive excluded from the denominator.
pub fn slot_log_likelihood(
    x: &Matrix,
    group: &[usize],
    bases: &Matrix,
    k: usize,
    tau: f64,
) -> Result<f64> {
    slot_log_likelihood_with(x, group, bases, k, tau, Denominator::ExcludePositive)
}

pub fn slot_log_likelihood_with(
    x: &Matrix,
    group: &[usize],
    bases: &Matrix,
    k: usize,
    tau: f64,
    denom: Denominator,
) -> Result<f64> {
    check_tau(tau)?;
    if group.is_empty() {
        return Err(Error::invalid("slot_log_likelihood: empty group"));
    }
    if bases.rows() < 2 || k >= bases.rows() {
        return Err(Error::invalid("slot_log_likelihood: need M >= 2 and k < M"));
    }
    if x.cols() != bases.cols() {
        return Err(Error::dims("slot_log_likelihood", (x.rows(), bases.cols()), x.shape()));
    }
    let (bhat, _) = unit_rows(bases, "slot_log_likelihood: basis")?;
    let mut acc = 0.0;
    for &i in group {
        let xhat = linalg::normalized(x.row(i), "slot_log_likelihood: token")?;
        acc += token_term(&similarity_row(&xhat, &bhat), k, tau, denom);
    }
    Ok(acc / group.len() as f64)
}

/// The orthogonal loss over all non-empty slots.
pub fn orthogonal_loss(x: &Matrix, slots: &SlotOutput, lp: &LossParams) -> Result<LossBreakdown> {
    check_tau(lp.tau)?;
    let m = slots.num_slots();
    if m < 2 {
        return Err(Error::invalid("orthogonal_loss: need at least two slots"));
    }
    let mut per_slot = vec![0.0; m];
    let mut active = 0;
    for (k, group) in slots.groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        active += 1;
        per_slot[k] = slot_log_likelihood_with(x, group, &slots.bases, k, lp.tau, lp.denominator)?;
    }
    if active == 0 {
        return Err(Error::UndefinedLoss);
    }
    let norm = match lp.average {
        SlotAverage::AllSlots => m as f64,
        SlotAverage::ActiveSlots => active as f64,
    };
    let total = -per_slot.iter().sum::<f64>() / norm;
    Ok(LossBreakdown {
        total,
        per_slot,
        active_slots: active,
    })
}

/// Mixing weights of the training objective
/// `orth · L_orth + recon · ‖X − A·B‖² / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub orth: f64,
    pub recon: f64,
}

impl ObjectiveWeights {
    pub const ORTH_ONLY: ObjectiveWeights = ObjectiveWeights { orth: 1.0, recon: 0.0 };
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights { orth: 1.0, recon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub orth: LossBreakdown,
    /// `‖X − A·B‖_F² / N`
    pub recon: f64,
}

/// Mean squared reconstruction error `‖X − A·B‖_F² / N`.
pub fn recon_error(x: &Matrix, a: &Matrix, bases: &Matrix) -> Result<f64> {
    let xh = linalg::matmul(a, bases)?;
    if xh.shape() != x.shape() {
        return Err(Error::dims("recon_error", x.shape(), xh.shape()));
    }
    let sq: f64 = x
        .as_slice()
        .iter()
        .zip(xh.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / x.rows() as f64)
}

/// Objective value by plain forward composition (no gradient bookkeeping).
pub fn objective(
    params: &AllocatorParams,
    x: &Matrix,
    cfg: &FilterConfig,
    lp: &LossParams,
    weights: ObjectiveWeights,
    noise: Option<&Matrix>,
) -> Result<ObjectiveValue> {
    params.check(cfg)?;
    let g = filter::gate(params, x)?;
    let slots = filter::fuse_slots_with_noise(x, &g, cfg, noise)?;
    let orth = orthogonal_loss(x, &slots, lp)?;
    let recon = recon_error(x, &g.soft_assignment, &slots.bases)?;
    Ok(ObjectiveValue {
        total: weights.orth * orth.total + weights.recon * recon,
        orth,
        recon,
    })
}

/// `L_orth` and its gradients with respect to the gate and `τ`.
pub fn loss_and_gradients(
    params: &AllocatorParams,
    x: &Matrix,
    cfg: &FilterConfig,
    lp: &LossParams,
    frozen_noise: Option<&Matrix>,
) -> Result<(f64, GradientBundle)> {
    let (value, grads) =
        objective_and_gradients(params, x, cfg, lp, ObjectiveWeights::ORTH_ONLY, frozen_noise)?;
    Ok((value.total, grads))
}

/// Objective value and its exact gradients.
pub fn objective_and_gradients(
    params: &AllocatorParams,
    x: &Matrix,
    cfg: &FilterConfig,
    lp: &LossParams,
    weights: ObjectiveWeights,
    frozen_noise: Option<&Matrix>,
) -> Result<(ObjectiveValue, GradientBundle)> {
    cfg.validate()?;
    params.check(cfg)?;
    check_tau(lp.tau)?;
    let (n, d) = x.shape();
    let m = cfg.num_slots;
    let tau = lp.tau;

    // Forward.
    let g = filter::gate(params, x)?;
    let a = &g.soft_assignment;
    let slots = filter::fuse_slots_with_noise(x, &g, cfg, frozen_noise)?;
    let tokens = filter::fusion_tokens(x, cfg.normalize_tokens)?;
    let (xhat, _) = unit_rows(x, "loss: token")?;
    let (bhat, bnorm) = unit_rows(&slots.bases, "loss: basis")?;
    let sims: Vec<Vec<f64>> = xhat.iter_rows().map(|r| similarity_row(r, &bhat)).collect();

    let active = slots.active_slots();
    if active == 0 {
        return Err(Error::UndefinedLoss);
    }
    let slot_norm = match lp.average {
        SlotAverage::AllSlots => m as f64,
        SlotAverage::ActiveSlots => active as f64,
    };

    // Orthogonal loss and dL/ds, dL/dτ.
    let mut per_slot = vec![0.0; m];
    let mut d_sims = Matrix::zeros(n, m);
    let mut d_tau = 0.0;
    let mut probs = vec![0.0; m];
    for (i, s) in sims.iter().enumerate() {
        let k = g.hard_index[i];
        let size = slots.groups[k].len() as f64;
        let term = token_term(s, k, tau, lp.denominator);
        per_slot[k] += term / size;

        // Softmax over the denominator set.
        let lse = log_sum_exp(
            s.iter()
                .enumerate()
                .filter(|&(j, _)| in_denominator(j, k, lp.denominator))
                .map(|(_, &v)| v / tau),
        );
        let mut expected_sim = 0.0;
        for j in 0..m {
            probs[j] = if in_denominator(j, k, lp.denominator) {
                libm::exp(s[j] / tau - lse)
            } else {
                0.0
            };
            expected_sim += probs[j] * s[j];
        }
        // d(loss)/d(term_i)
        let c = -weights.orth / (slot_norm * size);
        let row = d_sims.row_mut(i);
        row[k] += c / tau;
        for j in 0..m {
            row[j] -= c * probs[j] / tau;
        }
        d_tau += c * (expected_sim - s[k]) / (tau * tau);
    }
    let orth_total = -per_slot.iter().sum::<f64>() / slot_norm;

    // Reconstruction term.
    let xh = linalg::matmul(a, &slots.bases)?;
    let mut resid = x.clone();
    for (r, v) in resid.as_mut_slice().iter_mut().zip(xh.as_slice()) {
        *r -= v;
    }
    let recon = resid.as_slice().iter().map(|v| v * v).sum::<f64>() / n as f64;

    // dObjective/dB for the fused (non-noise) rows, and dObjective/dA.
    let mut d_bases = Matrix::zeros(m, d);
    if !lp.detach_bases && weights.orth != 0.0 {
        for i in 0..n {
            for k in 0..m {
                if slots.noise_mask[k] {
                    continue;
                }
                let gs = d_sims[(i, k)];
                if gs == 0.0 {
                    continue;
                }
                let sik = sims[i][k];
                let scale = gs / bnorm[k];
                let out = d_bases.row_mut(k);
                for ((o, &xv), &bv) in out.iter_mut().zip(xhat.row(i)).zip(bhat.row(k)) {
                    *o += scale * (xv - sik * bv);
                }
            }
        }
    }
    let mut d_a = Matrix::zeros(n, m);
    if weights.recon != 0.0 {
        let c = -2.0 * weights.recon / n as f64;
        for i in 0..n {
            let r = resid.row(i);
            for k in 0..m {
                d_a[(i, k)] = c * dot(r, slots.bases.row(k));
                if !slots.noise_mask[k] {
                    let aik = a[(i, k)];
                    for (o, &rv) in d_bases.row_mut(k).iter_mut().zip(r) {
                        *o += c * aik * rv;
                    }
                }
            }
        }
    }

    // Through the routing weights: b_k = Σ_{i∈E_k} w_i t_i, w_i = A[i, I_i].
    for i in 0..n {
        let k = g.hard_index[i];
        d_a[(i, k)] += dot(d_bases.row(k), tokens.row(i));
    }

    // Softmax backward, then the linear gate.
    let mut d_logits = Matrix::zeros(n, m);
    for i in 0..n {
        let ai = a.row(i);
        let gi = d_a.row(i);
        let inner = dot(ai, gi);
        for (o, (&av, &gv)) in d_logits.row_mut(i).iter_mut().zip(ai.iter().zip(gi)) {
            *o = av * (gv - inner);
        }
    }
    let d_gate_weight = linalg::matmul(&x.transpose(), &d_logits)?;
    let mut d_gate_bias = vec![0.0; m];
    for row in d_logits.iter_rows() {
        for (b, v) in d_gate_bias.iter_mut().zip(row) {
            *b += v;
        }
    }

    let grads = GradientBundle {
        d_gate_weight,
        d_gate_bias,
        d_tau,
    };
    let total = weights.orth * orth_total + weights.recon * recon;
    if !total.is_finite() || !grads.is_finite() {
        return Err(Error::NumericalFailure {
            step: 0,
            detail: "non-finite objective or gradient".into(),
        });
    }
    Ok((
        ObjectiveValue {
            total,
            orth: LossBreakdown {
                total: orth_total,
                per_slot,
                active_slots: active,
            },
            recon,
        },
        grads,
    ))
}
