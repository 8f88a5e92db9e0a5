//! Command-line surface.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::tokens::Dtype;

#[derive(Debug, Parser)]
#[command(name = "orthofilt", version, about = "Orthogonal token filtering: training, checks and scaling fits")]
pub struct Cli {
    /// Write the JSON run report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gate and fuse a token file into slot bases.
    Filter(FilterArgs),
    /// Train the allocator on planted-cluster tokens.
    Train(TrainArgs),
    /// Compare analytic gradients with central differences on random instances.
    GradCheck(GradCheckArgs),
    /// Fit MDL = C·params^(−α) to a scaling table.
    FitLpep(FitLpepArgs),
    /// Fit a saturating accuracy curve and infer the minimal slot count.
    InferMdl(InferMdlArgs),
    /// Evaluate the MDL generalization bound.
    Bound(BoundArgs),
    /// Two-anchor affine cost model in the slot count.
    Flops(FlopsArgs),
    /// A-priori transformer cost estimate.
    FlopsEstimate(FlopsEstimateArgs),
    /// Sweep the slot count and report the description-length trade-off.
    Sweep(SweepArgs),
    /// Write planted-cluster tokens to an OTKN file.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Filter(_) => "filter",
            Command::Train(_) => "train",
            Command::GradCheck(_) => "grad-check",
            Command::FitLpep(_) => "fit-lpep",
            Command::InferMdl(_) => "infer-mdl",
            Command::Bound(_) => "bound",
            Command::Flops(_) => "flops",
            Command::FlopsEstimate(_) => "flops-estimate",
            Command::Sweep(_) => "sweep",
            Command::Synth(_) => "synth",
        }
    }
}

/// `K,per,d,scale,sigma`
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    pub dim: usize,
    pub scale: f64,
    pub sigma: f64,
}

impl FromStr for DataSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(format!("expected K,per,d,scale,sigma, got `{s}`"));
        }
        let int = |v: &str| v.parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
        let real = |v: &str| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        Ok(DataSpec {
            clusters: int(parts[0])?,
            per_cluster: int(parts[1])?,
            dim: int(parts[2])?,
            scale: real(parts[3])?,
            sigma: real(parts[4])?,
        })
    }
}

/// `M,cost`
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anchor {
    pub slots: f64,
    pub cost: f64,
}

impl FromStr for Anchor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, c) = s.split_once(',').ok_or_else(|| format!("expected M,cost, got `{s}`"))?;
        Ok(Anchor {
            slots: m.trim().parse().map_err(|e| format!("`{m}`: {e}"))?,
            cost: c.trim().parse().map_err(|e| format!("`{c}`: {e}"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Bits,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Prototypes,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    Mac,
    #[value(name = "2flops")]
    TwoFlops,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FilterArgs {
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long)]
    pub slots: usize,
    #[arg(long, default_value_t = 0.02)]
    pub noise_std: f64,
    /// Normalize tokens and noise before fusion.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub normalize: bool,
    #[arg(long)]
    pub seed: u64,
    /// Allocator parameters (JSON); Gaussian weights from the seed otherwise.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Std of the Gaussian gate when no parameter file is given.
    #[arg(long, default_value_t = 0.1)]
    pub init_std: f64,
    /// Also evaluate the orthogonal loss.
    #[arg(long)]
    pub training: bool,
    /// Temperature for --training; a tau stored in --params takes precedence.
    #[arg(long, default_value_t = 0.07)]
    pub tau: f64,
    /// Write the fused bases (OTKN, f64).
    #[arg(long)]
    pub bases_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Planted clusters as `K,per_cluster,dim,scale,sigma`.
    #[arg(long)]
    pub spec: DataSpec,
    #[arg(long)]
    pub slots: usize,
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_orth: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_recon: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Init::Prototypes)]
    pub init: Init,
    /// Prototype gain (default 5) or Gaussian std (default 0.1).
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long, default_value_t = 0.07)]
    pub tau: f64,
    /// Loss curve as CSV `step,loss`.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[arg(long)]
    pub params_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradCheckArgs {
    /// Number of random instances (seeds 0..N).
    #[arg(long)]
    pub seeds: u64,
    #[arg(long, default_value_t = 16)]
    pub max_n: usize,
    #[arg(long, default_value_t = 4)]
    pub max_slots: usize,
    #[arg(long, default_value_t = 8)]
    pub max_dim: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub h: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_orth: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_recon: f64,
    /// Fail when the maximum relative error reaches this value.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitLpepArgs {
    #[arg(long)]
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InferMdlArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long, default_value_t = orthofilt_core::scaling::DEFAULT_DELTA_SAT)]
    pub delta_sat: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub ls: f64,
    #[arg(long)]
    pub h_bits: u64,
    #[arg(long)]
    pub m: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = Unit::Bits)]
    pub unit: Unit,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlopsArgs {
    /// `M,cost`; give exactly two.
    #[arg(long, required = true, num_args = 1, allow_negative_numbers = true)]
    pub anchor: Vec<Anchor>,
    #[arg(long, value_delimiter = ',')]
    pub predict: Vec<f64>,
    #[arg(long, default_value = "G")]
    pub unit: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlopsEstimateArgs {
    #[arg(long)]
    pub layers: usize,
    #[arg(long)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4.0)]
    pub ffn_mult: f64,
    #[arg(long)]
    pub tokens: usize,
    #[arg(long, value_enum, default_value_t = Convention::Mac)]
    pub convention: Convention,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Planted clusters as `K,per_cluster,dim,scale,sigma`.
    #[arg(long)]
    pub spec: DataSpec,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    pub slots: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub train_samples: usize,
    #[arg(long, default_value_t = 4)]
    pub heldout_samples: usize,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_orth: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_recon: f64,
    #[arg(long, default_value_t = 32)]
    pub value_bits: u32,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = Unit::Bits)]
    pub unit: Unit,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Planted clusters as `K,per_cluster,dim,scale,sigma`.
    #[arg(long)]
    pub spec: DataSpec,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub tokens_out: PathBuf,
    #[arg(long, value_enum, default_value_t = Dtype::F64)]
    pub dtype: Dtype,
}
