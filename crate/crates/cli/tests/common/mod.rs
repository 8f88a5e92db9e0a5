#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;

pub struct Run {
    pub code: i32,
    pub report: Option<Value>,
    pub stderr: String,
    pub elapsed: Duration,
}

impl Run {
    pub fn results(&self) -> &Value {
        &self.report.as_ref().expect("report on stdout")["results"]
    }

    pub fn num(&self, key: &str) -> f64 {
        self.results()[key].as_f64().unwrap_or_else(|| panic!("results.{key} missing"))
    }
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn data(name: &str) -> String {
    workspace_root().join("data").join(name).display().to_string()
}

pub fn run<S: AsRef<str>>(args: &[S]) -> Run {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_orthofilt"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs");
    let elapsed = start.elapsed();
    let stdout = String::from_utf8(out.stdout).unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        report: serde_json::from_str(&stdout).ok(),
        stderr: String::from_utf8(out.stderr).unwrap(),
        elapsed,
    }
}

/// Independent log-log least squares via the 2x2 normal equations.
pub fn loglog_ols(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(t, e) in points {
        let (x, y) = (t.ln(), e.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy * sxx - sx * sxy) / det;
    let ym = sy / n;
    let (mut ssr, mut sst) = (0.0, 0.0);
    for &(t, e) in points {
        ssr += (e.ln() - intercept - slope * t.ln()).powi(2);
        sst += (e.ln() - ym).powi(2);
    }
    (intercept.exp(), -slope, 1.0 - ssr / sst)
}

/// Smallest M in [1, 10^4] with b·M^(−c) ≤ δ.
pub fn brute_force_mdl(b: f64, c: f64, delta: f64) -> Option<u64> {
    (1..=10_000u64).find(|&m| b * (m as f64).powf(-c) <= delta)
}
