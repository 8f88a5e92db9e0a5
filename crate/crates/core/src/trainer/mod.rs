//! Desk-scale training of the allocator on planted-cluster tokens.
//!
//! The objective is `λ_orth · L_orth + λ_recon · ‖X − A·B‖² / N`, minimized
//! over the gate weights, gate bias and `τ` by gradient descent with heavy-ball
//! momentum. Empty-slot noise is redrawn every step from stream `t` of the
//! config seed and held fixed while that step's gradient is taken.

mod metrics;
mod synthetic;
mod tradeoff;

pub use metrics::{compactness, purity, separability};
pub use synthetic::{gen_synthetic, gen_synthetic_samples, SyntheticSpec};
pub use tradeoff::{mdl_sweep, SweepConfig, SweepPoint, SweepReport};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filter::{self, draw_slot_noise, AllocatorParams, FilterConfig};
use crate::linalg::{Matrix, RngState};
use crate::loss::{self, LossParams, ObjectiveWeights};

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_INIT_STD: f64 = 0.1;
pub const DEFAULT_PROTOTYPE_GAIN: f64 = 5.0;

/// Starting point for the gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateInit {
    /// i.i.d. Gaussian weights, zero bias.
    Gaussian { std: f64 },
    /// Farthest-point prototype tokens scaled by `gain`, zero bias.
    Prototypes { gain: f64 },
}

impl GateInit {
    pub fn name(&self) -> &'static str {
        match self {
            GateInit::Gaussian { .. } => "gaussian",
            GateInit::Prototypes { .. } => "prototypes",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lambda_orth: f64,
    pub lambda_recon: f64,
    pub filter: FilterConfig,
    pub loss: LossParams,
    pub init: GateInit,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(filter: FilterConfig, steps: usize, learning_rate: f64, seed: u64) -> Self {
        TrainConfig {
            steps,
            learning_rate,
            momentum: DEFAULT_MOMENTUM,
            lambda_orth: 1.0,
            lambda_recon: 1.0,
            filter,
            loss: LossParams::default(),
            init: GateInit::Prototypes { gain: DEFAULT_PROTOTYPE_GAIN },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.loss.validate()?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.lambda_orth >= 0.0 && self.lambda_recon >= 0.0) || self.lambda_orth + self.lambda_recon <= 0.0 {
            return Err(Error::invalid("loss weights must be non-negative with a positive sum"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        match self.init {
            GateInit::Gaussian { std } if !(std >= 0.0) || !std.is_finite() => {
                return Err(Error::invalid("init std must be finite and non-negative"));
            }
            GateInit::Prototypes { gain } if !gain.is_finite() => {
                return Err(Error::invalid("prototype gain must be finite"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            orth: self.lambda_orth,
            recon: self.lambda_recon,
        }
    }

    /// Noise stream for step `t`.
    pub fn step_rng(&self, step: usize) -> RngState {
        RngState::new(self.seed).split(1 + step as u64)
    }

    /// Initial gate, drawn from stream 0.
    pub fn initial_params(&self, x: &Matrix) -> Result<AllocatorParams> {
        let mut rng = RngState::new(self.seed).split(0);
        let (d, m) = (self.filter.token_dim, self.filter.num_slots);
        match self.init {
            GateInit::Gaussian { std } => AllocatorParams::random(d, m, std, &mut rng),
            GateInit::Prototypes { gain } => AllocatorParams::prototypes(x, m, gain, &mut rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub compactness: Option<f64>,
    pub separability: Option<f64>,
    pub purity: Option<f64>,
    pub active_slots: usize,
    pub group_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Objective before each update.
    pub loss_curve: Vec<f64>,
    /// Objective at the final parameters.
    pub final_loss: f64,
    pub final_params: AllocatorParams,
    pub final_tau: f64,
    pub metrics: Metrics,
}

/// Forward pass with the given noise stream and the three metrics.
/// Metrics that are undefined for the slot layout are `None`.
pub fn evaluate(
    params: &AllocatorParams,
    x: &Matrix,
    labels: Option<&[usize]>,
    cfg: &FilterConfig,
    rng: &mut RngState,
) -> Result<Metrics> {
    let out = filter::forward(params, x, cfg, rng, None)?;
    Ok(Metrics {
        compactness: compactness(x, &out.slots).ok(),
        separability: separability(&out.slots).ok(),
        purity: labels.map(|l| purity(&out.gating.hard_index, l)).transpose()?,
        active_slots: out.slots.active_slots(),
        group_sizes: out.slots.group_sizes(),
    })
}

pub fn train(x: &Matrix, labels: Option<&[usize]>, tc: &TrainConfig) -> Result<TrainReport> {
    tc.validate()?;
    if x.cols() != tc.filter.token_dim {
        return Err(Error::dims("train", (x.rows(), tc.filter.token_dim), x.shape()));
    }
    if let Some(l) = labels {
        if l.len() != x.rows() {
            return Err(Error::invalid("train: labels length differs from token count"));
        }
    }
    let cfg = &tc.filter;
    let weights = tc.weights();
    let mut params = tc.initial_params(x)?;
    let mut lp = tc.loss.clone();
    let mut velocity = alloc::vec![0.0; params.to_flat().len() + 1];
    let mut curve = Vec::with_capacity(tc.steps);

    for step in 0..tc.steps {
        let noise = draw_slot_noise(cfg, &mut tc.step_rng(step))?;
        let (value, grads) = loss::objective_and_gradients(&params, x, cfg, &lp, weights, Some(&noise))
            .map_err(|e| diverged(step, &params, lp.tau, &e))?;
        curve.push(value.total);

        let grad = grads.to_flat();
        let mut theta = params.to_flat();
        theta.push(lp.tau);
        for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = tc.momentum * *v + g;
            *t -= tc.learning_rate * *v;
        }
        lp.tau = theta.pop().unwrap_or(lp.tau);
        lp.clamp_tau();
        params = AllocatorParams::from_flat(cfg.token_dim, cfg.num_slots, &theta)
            .map_err(|e| diverged(step, &params, lp.tau, &e))?;
    }

    let mut final_rng = tc.step_rng(tc.steps);
    let final_noise = draw_slot_noise(cfg, &mut final_rng.clone())?;
    let final_loss = loss::objective(&params, x, cfg, &lp, weights, Some(&final_noise))?.total;
    let metrics = evaluate(&params, x, labels, cfg, &mut final_rng)?;
    Ok(TrainReport {
        loss_curve: curve,
        final_loss,
        final_params: params,
        final_tau: lp.tau,
        metrics,
    })
}

fn diverged(step: usize, params: &AllocatorParams, tau: f64, cause: &Error) -> Error {
    let wn = params.gate_weight.frobenius_norm();
    let bn = libm::sqrt(params.gate_bias.iter().map(|v| v * v).sum());
    Error::NumericalFailure {
        step,
        detail: format!("{cause}; |gate_weight|={wn:.6e} |gate_bias|={bn:.6e} tau={tau:.6e}"),
    }
}
