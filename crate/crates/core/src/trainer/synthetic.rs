//! Planted-cluster tokens: `K` orthonormal directions, each token a scaled
//! direction plus isotropic Gaussian noise.
//!
//! `noise_sigma` is the RMS norm of the noise vector (per-coordinate standard
//! deviation `noise_sigma / sqrt(d)`), so the signal-to-noise ratio
//! `signal_scale / noise_sigma` does not depend on the dimension.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, seeded_gaussian, Matrix, RngState};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_clusters: usize,
    pub tokens_per_cluster: usize,
    pub dim: usize,
    pub signal_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn num_tokens(&self) -> usize {
        self.num_clusters * self.tokens_per_cluster
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 || self.tokens_per_cluster == 0 || self.dim == 0 {
            return Err(Error::invalid("synthetic spec sizes must be positive"));
        }
        if self.num_clusters > self.dim {
            return Err(Error::invalid(alloc::format!(
                "cannot plant {} orthonormal directions in dimension {}",
                self.num_clusters, self.dim
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.signal_scale.is_finite() || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("signal_scale must be finite and noise_sigma non-negative"));
        }
        Ok(())
    }

    /// The planted unit directions, `K x d`.
    pub fn directions(&self) -> Result<Matrix> {
        self.validate()?;
        let mut rng = RngState::new(self.seed).split(0);
        orthonormalize(&seeded_gaussian(&mut rng, self.num_clusters, self.dim, 0.0, 1.0)?)
    }
}

/// Tokens in cluster-major order with their cluster labels.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(Matrix, Vec<usize>)> {
    let mut samples = gen_synthetic_samples(spec, 1)?;
    Ok(samples.remove(0))
}

/// `count` independent token sets sharing the same planted directions.
/// Sample `s` draws its noise from stream `s + 1` of `SyntheticSpec::seed`.
pub fn gen_synthetic_samples(spec: &SyntheticSpec, count: usize) -> Result<Vec<(Matrix, Vec<usize>)>> {
    gen_samples_from(spec, 0..count as u64)
}

pub(crate) fn gen_samples_from(
    spec: &SyntheticSpec,
    streams: impl Iterator<Item = u64>,
) -> Result<Vec<(Matrix, Vec<usize>)>> {
    let dirs = spec.directions()?;
    let root = RngState::new(spec.seed);
    let (k, per, d) = (spec.num_clusters, spec.tokens_per_cluster, spec.dim);
    let mut out = Vec::new();
    for s in streams {
        let mut rng = root.split(s + 1);
        let std = spec.noise_sigma / libm::sqrt(d as f64);
        let noise = seeded_gaussian(&mut rng, k * per, d, 0.0, std)?;
        let mut x = Matrix::zeros(k * per, d);
        let mut labels = Vec::with_capacity(k * per);
        for c in 0..k {
            for t in 0..per {
                let i = c * per + t;
                for (p, v) in x.row_mut(i).iter_mut().enumerate() {
                    *v = spec.signal_scale * dirs[(c, p)] + noise[(i, p)];
                }
                labels.push(c);
            }
        }
        out.push((x, labels));
    }
    Ok(out)
}
