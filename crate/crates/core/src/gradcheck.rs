//! Central finite-difference validation of the analytic gradients.
//!
//! Each trainable scalar (gate weights, gate bias, `τ`) is perturbed by `±h`
//! with empty-slot noise frozen, and `(f(θ+h) − f(θ−h)) / 2h` is compared
//! against the analytic gradient. The hard argmax makes the objective
//! piecewise smooth, so instances whose smallest top-two logit gap could be
//! crossed by a perturbation are excluded rather than scored.

use alloc::vec::Vec;

use crate::error::Result;
use crate::filter::{self, draw_slot_noise, AllocatorParams, FilterConfig};
use crate::linalg::{seeded_gaussian, Matrix, RngState};
use crate::loss::{self, LossParams, ObjectiveWeights};

/// Floor of the relative-error denominator.
pub const RELATIVE_FLOOR: f64 = 1e-8;

pub const DEFAULT_STEP: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffComparison {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub numeric: Vec<f64>,
}

/// Compares `analytic` with central differences of `f` around `theta`.
pub fn central_difference_check<F>(theta: &[f64], analytic: &[f64], h: f64, mut f: F) -> Result<DiffComparison>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    assert_eq!(theta.len(), analytic.len());
    let mut probe = theta.to_vec();
    let mut numeric = Vec::with_capacity(theta.len());
    let mut worst = (0.0, 0);
    for idx in 0..theta.len() {
        probe[idx] = theta[idx] + h;
        let plus = f(&probe)?;
        probe[idx] = theta[idx] - h;
        let minus = f(&probe)?;
        probe[idx] = theta[idx];
        let num = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[idx], num);
        if err > worst.0 {
            worst = (err, idx);
        }
        numeric.push(num);
    }
    Ok(DiffComparison {
        max_relative_error: worst.0,
        worst_index: worst.1,
        numeric,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffReport {
    /// Worst relative error; zero when the instance was excluded.
    pub max_relative_error: f64,
    /// Smallest top-two logit gap over the tokens.
    pub min_logit_gap: f64,
    /// The instance sits too close to an argmax decision boundary.
    pub excluded: bool,
    pub num_parameters: usize,
}

/// Smallest `top1 − top2` logit gap over all tokens.
pub fn min_logit_gap(params: &AllocatorParams, x: &Matrix) -> Result<f64> {
    let z = filter::logits(params, x)?;
    let mut gap = f64::INFINITY;
    for row in z.iter_rows() {
        let k = filter::argmax(row);
        let second = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        gap = gap.min(row[k] - second);
    }
    Ok(gap)
}

/// Gradient check of `L_orth` with noise frozen from `seed`.
pub fn finite_diff_check(
    params: &AllocatorParams,
    x: &Matrix,
    cfg: &FilterConfig,
    lp: &LossParams,
    seed: u64,
    h: f64,
) -> Result<FiniteDiffReport> {
    finite_diff_check_weighted(params, x, cfg, lp, ObjectiveWeights::ORTH_ONLY, seed, h)
}

/// Gradient check of an arbitrary objective mix.
pub fn finite_diff_check_weighted(
    params: &AllocatorParams,
    x: &Matrix,
    cfg: &FilterConfig,
    lp: &LossParams,
    weights: ObjectiveWeights,
    seed: u64,
    h: f64,
) -> Result<FiniteDiffReport> {
    if !(h > 0.0) {
        return Err(crate::Error::invalid("finite difference step must be positive"));
    }
    let noise = draw_slot_noise(cfg, &mut RngState::new(seed))?;
    let gap = min_logit_gap(params, x)?;
    let num_parameters = cfg.token_dim * cfg.num_slots + cfg.num_slots + 1;
    // A weight perturbation moves a logit by at most h·|x_ip|.
    let x_max = x.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if gap < 10.0 * h * x_max {
        return Ok(FiniteDiffReport {
            max_relative_error: 0.0,
            min_logit_gap: gap,
            excluded: true,
            num_parameters,
        });
    }
    let (_, grads) = loss::objective_and_gradients(params, x, cfg, lp, weights, Some(&noise))?;
    let mut theta = params.to_flat();
    theta.push(lp.tau);
    let (d, m) = (cfg.token_dim, cfg.num_slots);
    let cmp = central_difference_check(&theta, &grads.to_flat(), h, |t| {
        let p = AllocatorParams::from_flat(d, m, &t[..t.len() - 1])?;
        let lp = LossParams {
            tau: t[t.len() - 1],
            ..lp.clone()
        };
        Ok(loss::objective(&p, x, cfg, &lp, weights, Some(&noise))?.total)
    })?;
    Ok(FiniteDiffReport {
        max_relative_error: cmp.max_relative_error,
        min_logit_gap: gap,
        excluded: false,
        num_parameters,
    })
}

/// One randomized gradient-check instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckInstance {
    pub x: Matrix,
    pub params: AllocatorParams,
    pub cfg: FilterConfig,
    pub loss: LossParams,
}

/// Draws `N ∈ [2, max_n]`, `M ∈ [2, max_slots]`, `d ∈ [2, max_dim]`, Gaussian
/// tokens and gate, and `τ ∈ [0.1, 1)`.
pub fn random_instance(seed: u64, max_n: usize, max_slots: usize, max_dim: usize) -> Result<CheckInstance> {
    if max_n < 2 || max_slots < 2 || max_dim < 2 {
        return Err(crate::Error::invalid("random_instance: bounds must be at least 2"));
    }
    let mut rng = RngState::new(seed);
    let n = rng.next_range(2, max_n);
    let m = rng.next_range(2, max_slots);
    let d = rng.next_range(2, max_dim);
    let x = seeded_gaussian(&mut rng, n, d, 0.0, 1.0)?;
    let mut params = AllocatorParams::random(d, m, 1.0, &mut rng)?;
    for b in params.gate_bias.iter_mut() {
        *b = rng.next_uniform(-0.5, 0.5);
    }
    let tau = rng.next_uniform(0.1, 1.0);
    Ok(CheckInstance {
        x,
        params,
        cfg: FilterConfig::new(m, d)?,
        loss: LossParams::with_tau(tau)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub max_relative_error: f64,
    pub checked: usize,
    pub excluded: usize,
    /// `(seed, max relative error)` per checked instance.
    pub per_instance: Vec<(u64, f64)>,
}

/// Runs `finite_diff_check` on seeds `0..seeds`.
pub fn run_suite(
    seeds: u64,
    max_n: usize,
    max_slots: usize,
    max_dim: usize,
    h: f64,
    weights: ObjectiveWeights,
) -> Result<SuiteReport> {
    let mut report = SuiteReport {
        max_relative_error: 0.0,
        checked: 0,
        excluded: 0,
        per_instance: Vec::new(),
    };
    for seed in 0..seeds {
        let inst = random_instance(seed, max_n, max_slots, max_dim)?;
        let r = finite_diff_check_weighted(&inst.params, &inst.x, &inst.cfg, &inst.loss, weights, seed, h)?;
        if r.excluded {
            report.excluded += 1;
            continue;
        }
        report.checked += 1;
        report.max_relative_error = report.max_relative_error.max(r.max_relative_error);
        report.per_instance.push((seed, r.max_relative_error));
    }
    Ok(report)
}
