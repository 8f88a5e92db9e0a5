//! Scaling tables as CSV with header `model,params_m,flops_g,slots,accuracy,mdl`.
//! Empty cells are absent values.

use std::path::Path;

use orthofilt_core::scaling::ScalingSample;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const HEADER: [&str; 6] = ["model", "params_m", "flops_g", "slots", "accuracy", "mdl"];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    model: String,
    params_m: f64,
    flops_g: Option<f64>,
    slots: Option<u64>,
    accuracy: Option<f64>,
    mdl: Option<f64>,
}

pub fn parse_scaling_csv(text: &str, path: &str) -> CliResult<Vec<ScalingSample>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let csv_err = |line: u64, detail: String| CliError::Csv {
        path: path.to_string(),
        line,
        detail,
    };
    let header = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(csv_err(1, format!("header must be `{}`", HEADER.join(","))));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record.deserialize(Some(&header)).map_err(|e| csv_err(line, e.to_string()))?;
        let sample = ScalingSample {
            model: row.model,
            params_m: row.params_m,
            flops_g: row.flops_g,
            slots: row.slots,
            accuracy: row.accuracy,
            mdl: row.mdl,
        };
        sample.validate().map_err(|e| csv_err(line, e.to_string()))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn read_scaling_csv(path: &Path) -> CliResult<Vec<ScalingSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_scaling_csv(&text, &path.display().to_string())
}

pub fn format_scaling_csv(samples: &[ScalingSample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(Row {
            model: s.model.clone(),
            params_m: s.params_m,
            flops_g: s.flops_g,
            slots: s.slots,
            accuracy: s.accuracy,
            mdl: s.mdl,
        })
        .expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV output is UTF-8")
}

pub fn write_scaling_csv(path: &Path, samples: &[ScalingSample]) -> CliResult<()> {
    std::fs::write(path, format_scaling_csv(samples)).map_err(|e| CliError::io(path, e))
}
