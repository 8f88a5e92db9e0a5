//! Command implementations. Each returns the `results` object of its report.

use std::path::Path;
use std::time::Instant;

use orthofilt_core::filter::{self, FilterConfig};
use orthofilt_core::gradcheck::run_suite;
use orthofilt_core::linalg::cosine_sim;
use orthofilt_core::loss::{LossParams, ObjectiveWeights};
use orthofilt_core::mdl::{self, CodeUnit};
use orthofilt_core::scaling::{self, FlopConvention};
use orthofilt_core::trainer::{self, GateInit, SweepConfig, SyntheticSpec, TrainConfig};
use orthofilt_core::{AllocatorParams, Matrix, RngState};
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::params::{read_params, write_params, ParamsFile};
use crate::report::{ErrorInfo, RunReport, SCHEMA_VERSION};
use crate::table::read_scaling_csv;
use crate::tokens::{read_tokens, write_tokens, Dtype};

/// Stream of the command seed that yields the trainer seed, keeping training
/// randomness independent of the data streams.
const TRAIN_STREAM: u64 = 0x74_7261_696e;

/// A failed command, optionally with the results computed before failing.
#[derive(Debug)]
pub struct Failure {
    pub error: CliError,
    pub partial: Option<Value>,
}

impl<E: Into<CliError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            error: e.into(),
            partial: None,
        }
    }
}

type Outcome = Result<Value, Failure>;

/// Runs a parsed command and assembles its report. The second value is the
/// process exit code (0 or 1).
pub fn execute(command: &Command, config: Value) -> (RunReport, u8) {
    let start = Instant::now();
    let outcome = match command {
        Command::Filter(a) => filter_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::GradCheck(a) => grad_check_cmd(a),
        Command::FitLpep(a) => fit_lpep_cmd(a),
        Command::InferMdl(a) => infer_mdl_cmd(a),
        Command::Bound(a) => bound_cmd(a),
        Command::Flops(a) => flops_cmd(a),
        Command::FlopsEstimate(a) => flops_estimate_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    };
    let timing_ms = start.elapsed().as_secs_f64() * 1e3;
    let (results, error, code) = match outcome {
        Ok(v) => (Some(v), None, 0),
        Err(f) => (f.partial, Some(ErrorInfo::from(&f.error)), 1),
    };
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        command: command.name().to_string(),
        config,
        results,
        error,
        timing_ms,
    };
    (report, code)
}

fn unit(u: Unit) -> CodeUnit {
    match u {
        Unit::Bits => CodeUnit::Bits,
        Unit::Raw => CodeUnit::Raw,
    }
}

fn synthetic(spec: &DataSpec, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_clusters: spec.clusters,
        tokens_per_cluster: spec.per_cluster,
        dim: spec.dim,
        signal_scale: spec.scale,
        noise_sigma: spec.sigma,
        seed,
    }
}

fn trainer_seed(seed: u64) -> u64 {
    RngState::new(seed).split(TRAIN_STREAM).next_u64()
}

fn filter_cmd(a: &FilterArgs) -> Outcome {
    let (x, dtype) = read_tokens(&a.tokens)?;
    let cfg = FilterConfig::new(a.slots, x.cols())?
        .with_noise_std(a.noise_std)
        .with_normalize(a.normalize);
    cfg.validate()?;
    let root = RngState::new(a.seed);
    let (params, stored_tau) = match &a.params {
        Some(p) => {
            let file = read_params(p)?;
            (file.to_params()?, file.tau)
        }
        None => (AllocatorParams::random(x.cols(), a.slots, a.init_std, &mut root.split(0))?, None),
    };
    let lp = if a.training {
        Some(LossParams::with_tau(stored_tau.unwrap_or(a.tau))?)
    } else {
        None
    };
    let out = filter::forward(&params, &x, &cfg, &mut root.split(1), lp.as_ref())?;
    if let Some(path) = &a.bases_out {
        write_tokens(path, &out.slots.bases, Dtype::F64)?;
    }
    Ok(json!({
        "num_tokens": x.rows(),
        "token_dim": x.cols(),
        "input_dtype": dtype,
        "num_slots": a.slots,
        "active_slots": out.slots.active_slots(),
        "group_sizes": out.slots.group_sizes(),
        "noise_mask": out.slots.noise_mask,
        "hard_index": out.gating.hard_index,
        "routing_weight": out.gating.routing_weight,
        "tau": lp.as_ref().map(|l| l.tau),
        "loss": out.loss.map(|l| json!({
            "total": l.total,
            "per_slot": l.per_slot,
            "active_slots": l.active_slots,
        })),
    }))
}

/// Purity of assigning every token to its nearest planted direction.
fn nearest_direction_purity(x: &Matrix, dirs: &Matrix, labels: &[usize]) -> CliResult<f64> {
    let mut assign = Vec::with_capacity(x.rows());
    for row in x.iter_rows() {
        let mut best = (0, f64::NEG_INFINITY);
        for (c, dir) in dirs.iter_rows().enumerate() {
            let s = cosine_sim(row, dir)?;
            if s > best.1 {
                best = (c, s);
            }
        }
        assign.push(best.0);
    }
    Ok(trainer::purity(&assign, labels)?)
}

fn train_cmd(a: &TrainArgs) -> Outcome {
    let spec = synthetic(&a.spec, a.seed);
    let (x, labels) = trainer::gen_synthetic(&spec)?;
    let mut tc = TrainConfig::new(FilterConfig::new(a.slots, spec.dim)?, a.steps, a.lr, trainer_seed(a.seed));
    tc.momentum = a.momentum;
    tc.lambda_orth = a.lambda_orth;
    tc.lambda_recon = a.lambda_recon;
    tc.loss = LossParams::with_tau(a.tau)?;
    tc.init = match a.init {
        Init::Prototypes => GateInit::Prototypes {
            gain: a.init_scale.unwrap_or(trainer::DEFAULT_PROTOTYPE_GAIN),
        },
        Init::Gaussian => GateInit::Gaussian {
            std: a.init_scale.unwrap_or(trainer::DEFAULT_INIT_STD),
        },
    };
    let report = trainer::train(&x, Some(&labels), &tc)?;
    let oracle = nearest_direction_purity(&x, &spec.directions()?, &labels)?;
    if let Some(path) = &a.curve_out {
        let mut csv = String::from("step,loss\n");
        for (t, v) in report.loss_curve.iter().enumerate() {
            csv.push_str(&format!("{t},{v:.16e}\n"));
        }
        std::fs::write(path, csv).map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = &a.params_out {
        write_params(path, &ParamsFile::from_params(&report.final_params, Some(report.final_tau)))?;
    }
    let m = &report.metrics;
    Ok(json!({
        "num_tokens": x.rows(),
        "trainer_seed": tc.seed,
        "init": tc.init.name(),
        "initial_loss": report.loss_curve.first(),
        "final_loss": report.final_loss,
        "final_tau": report.final_tau,
        "loss_curve": report.loss_curve,
        "metrics": {
            "compactness": m.compactness,
            "separability": m.separability,
            "purity": m.purity,
            "active_slots": m.active_slots,
            "group_sizes": m.group_sizes,
        },
        "oracle_purity": oracle,
    }))
}

fn grad_check_cmd(a: &GradCheckArgs) -> Outcome {
    let weights = ObjectiveWeights {
        orth: a.lambda_orth,
        recon: a.lambda_recon,
    };
    let r = run_suite(a.seeds, a.max_n, a.max_slots, a.max_dim, a.h, weights)?;
    let results = json!({
        "max_relative_error": r.max_relative_error,
        "checked": r.checked,
        "excluded": r.excluded,
        "tolerance": a.tolerance,
        "per_instance": r.per_instance.iter().map(|(s, e)| json!({"seed": s, "max_relative_error": e})).collect::<Vec<_>>(),
    });
    if r.checked == 0 {
        return Err(Failure {
            error: CliError::CheckFailed("every instance was excluded near a decision boundary".into()),
            partial: Some(results),
        });
    }
    if !(r.max_relative_error < a.tolerance) {
        return Err(Failure {
            error: CliError::CheckFailed(format!(
                "max relative error {:e} is not below {:e}",
                r.max_relative_error, a.tolerance
            )),
            partial: Some(results),
        });
    }
    Ok(results)
}

fn fit_lpep_cmd(a: &FitLpepArgs) -> Outcome {
    let samples = read_scaling_csv(&a.csv)?;
    let used: Vec<_> = samples.iter().filter(|s| s.mdl.is_some()).collect();
    let points: Vec<(f64, f64)> = used.iter().map(|s| (s.params_m, s.mdl.unwrap_or_default())).collect();
    let fit = scaling::fit_power_law(&points)?;
    Ok(json!({
        "c": fit.c,
        "alpha": fit.alpha,
        "r_squared": fit.r_squared,
        "residuals": fit.residuals,
        "models": used.iter().map(|s| s.model.clone()).collect::<Vec<_>>(),
        "points": points.iter().map(|(t, e)| json!({"params_m": t, "mdl": e})).collect::<Vec<_>>(),
    }))
}

fn infer_mdl_cmd(a: &InferMdlArgs) -> Outcome {
    let samples = read_scaling_csv(&a.csv)?;
    let points: Vec<(f64, f64)> = samples
        .iter()
        .filter_map(|s| Some((s.slots? as f64, s.accuracy?)))
        .collect();
    let fit = scaling::fit_saturation(&points)?;
    let fit_json = json!({
        "a": fit.a,
        "b": fit.b,
        "c": fit.c,
        "rmse": fit.rmse,
        "degenerate": fit.degenerate,
    });
    match scaling::infer_mdl(&fit, a.delta_sat) {
        Ok(m) => Ok(json!({
            "fit": fit_json,
            "delta_sat": a.delta_sat,
            "num_points": points.len(),
            "m_star": m,
        })),
        Err(e) => Err(Failure {
            error: e.into(),
            partial: Some(json!({"fit": fit_json, "delta_sat": a.delta_sat, "num_points": points.len(), "m_star": null})),
        }),
    }
}

fn bound_cmd(a: &BoundArgs) -> Outcome {
    let r = mdl::generalization_bound(a.ls, a.h_bits, a.m, a.delta, unit(a.unit))?;
    Ok(json!({
        "empirical_loss": r.empirical_loss,
        "penalty": r.penalty,
        "upper_bound": r.upper_bound,
        "m": r.m,
        "delta": r.delta,
        "h_bits": r.h_bits,
        "unit": r.unit.name(),
    }))
}

fn flops_cmd(a: &FlopsArgs) -> Outcome {
    let (p, q) = (a.anchor[0], a.anchor[1]);
    let model = scaling::calibrate_affine((p.slots, p.cost), (q.slots, q.cost), &a.unit)?;
    Ok(json!({
        "intercept": model.intercept,
        "slope": model.slope,
        "unit": model.unit,
        "predictions": a.predict.iter().map(|&m| json!({"slots": m, "cost": model.predict(m)})).collect::<Vec<_>>(),
    }))
}

fn flops_estimate_cmd(a: &FlopsEstimateArgs) -> Outcome {
    let convention = match a.convention {
        Convention::Mac => FlopConvention::MultiplyAccumulate,
        Convention::TwoFlops => FlopConvention::TwoFlopsPerMac,
    };
    let g = scaling::transformer_flops_estimate(a.layers, a.hidden, a.ffn_mult, a.tokens, convention)?;
    Ok(json!({"flops_g": g, "convention": convention.name()}))
}

fn sweep_cmd(a: &SweepArgs) -> Outcome {
    let data = synthetic(&a.spec, a.seed);
    let mut train = TrainConfig::new(FilterConfig::new(2, a.spec.dim)?, a.steps, a.lr, trainer_seed(a.seed));
    train.lambda_orth = a.lambda_orth;
    train.lambda_recon = a.lambda_recon;
    let cfg = SweepConfig {
        data,
        slot_counts: a.slots.clone(),
        train_samples: a.train_samples,
        heldout_samples: a.heldout_samples,
        train,
        value_bits: a.value_bits,
        delta: a.delta,
        unit: unit(a.unit),
    };
    let r = trainer::mdl_sweep(&cfg)?;
    let points: Vec<Value> = r
        .points
        .iter()
        .map(|p| {
            json!({
                "num_slots": p.num_slots,
                "active_slots": p.active_slots,
                "empirical_loss": p.empirical_loss,
                "heldout_estimate": p.heldout_estimate,
                "basis_bits": p.description.basis_bits,
                "assignment_bits": p.description.assignment_bits,
                "total_bits": p.description.total_bits,
                "penalty": p.bound.penalty,
                "upper_bound": p.bound.upper_bound,
            })
        })
        .collect();
    Ok(json!({
        "points": points,
        "argmin_slots": r.points[r.argmin].num_slots,
        "interior_minimum": r.interior_minimum(),
        "unit": cfg.unit.name(),
    }))
}

fn synth_cmd(a: &SynthArgs) -> Outcome {
    let (x, labels) = trainer::gen_synthetic(&synthetic(&a.spec, a.seed))?;
    write_tokens(&a.tokens_out, &x, a.dtype)?;
    Ok(json!({
        "rows": x.rows(),
        "cols": x.cols(),
        "dtype": a.dtype,
        "labels": labels,
        "tokens_file": path_str(&a.tokens_out),
    }))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}
