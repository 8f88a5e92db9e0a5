//! Allocator parameters as JSON.

use std::path::Path;

use orthofilt_core::{AllocatorParams, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::report::to_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub token_dim: usize,
    pub num_slots: usize,
    /// `token_dim` rows of `num_slots` entries.
    pub gate_weight: Vec<Vec<f64>>,
    pub gate_bias: Vec<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
}

impl ParamsFile {
    pub fn from_params(p: &AllocatorParams, tau: Option<f64>) -> Self {
        ParamsFile {
            token_dim: p.token_dim(),
            num_slots: p.num_slots(),
            gate_weight: p.gate_weight.iter_rows().map(|r| r.to_vec()).collect(),
            gate_bias: p.gate_bias.clone(),
            tau,
        }
    }

    pub fn to_params(&self) -> orthofilt_core::Result<AllocatorParams> {
        let flat: Vec<f64> = self.gate_weight.iter().flatten().copied().collect();
        if self.gate_weight.iter().any(|r| r.len() != self.num_slots) || self.gate_weight.len() != self.token_dim {
            return Err(orthofilt_core::Error::InvalidArgument(format!(
                "gate_weight must be {}x{}",
                self.token_dim, self.num_slots
            )));
        }
        AllocatorParams::new(Matrix::new(self.token_dim, self.num_slots, flat)?, self.gate_bias.clone())
    }
}

pub fn read_params(path: &Path) -> CliResult<ParamsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn write_params(path: &Path, p: &ParamsFile) -> CliResult<()> {
    std::fs::write(path, to_json(p)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use orthofilt_core::RngState;

    #[test]
    fn json_round_trip_is_exact() {
        let p = AllocatorParams::random(5, 3, 0.7, &mut RngState::new(4)).unwrap();
        let file = ParamsFile::from_params(&p, Some(0.07));
        let back: ParamsFile = serde_json::from_str(&to_json(&file)).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_params().unwrap(), p);
    }

    #[test]
    fn ragged_weights_rejected() {
        let file = ParamsFile {
            token_dim: 2,
            num_slots: 2,
            gate_weight: vec![vec![1.0, 2.0], vec![3.0]],
            gate_bias: vec![0.0, 0.0],
            tau: None,
        };
        assert!(file.to_params().is_err());
    }
}
