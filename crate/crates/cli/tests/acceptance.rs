//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p orthofilt --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_force_mdl, data, loglog_ols, run};
use orthofilt_core::filter::{gate, soft_reconstruct};
use orthofilt_core::linalg::{cosine_sim, row_softmax, seeded_gaussian};
use orthofilt_core::trainer::{gen_synthetic, purity, SyntheticSpec};
use orthofilt_core::{AllocatorParams, GatingOutput, Matrix, RngState};
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_budget(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64()),
    )
}

fn ok_run(args: &[&str]) -> Result<common::Run, String> {
    let r = run(args);
    if r.code != 0 {
        return Err(format!("`{}` exited {}: {}", args.join(" "), r.code, r.stderr.trim()));
    }
    Ok(r)
}

fn lpep_fit() -> Outcome {
    let r = ok_run(&["fit-lpep", "--csv", &data("table3_lpep.csv")])?;
    within_budget(r.elapsed, 1.0)?;
    let pts = [(16.06, 139.0), (60.56, 130.0), (224.89, 117.0), (495.43, 91.0), (831.99, 61.0)];
    let (c, alpha, r2) = loglog_ols(&pts);
    let (gc, ga, gr) = (r.num("c"), r.num("alpha"), r.num("r_squared"));
    ensure((ga - alpha).abs() <= 0.005, format!("alpha {ga} vs oracle {alpha}"))?;
    ensure((gc / c - 1.0).abs() <= 0.02, format!("C {gc} vs oracle {c}"))?;
    ensure((gr - r2).abs() <= 0.005, format!("R² {gr} vs oracle {r2}"))?;
    ensure((ga - 0.181).abs() < 0.005 && (gr - 0.755).abs() < 0.005, "fit far from the tabulated estimates")?;
    Ok(format!("alpha={ga:.6} C={gc:.3} R²={gr:.6} (oracle {alpha:.6}/{c:.3}/{r2:.6}), {:?}", r.elapsed))
}

fn affine_tables() -> Outcome {
    let slots = [16.0, 32.0, 64.0, 96.0, 128.0, 160.0];
    let flops = [1.72, 3.10, 5.87, 8.62, 11.39, 14.15];
    let params = [105.35, 124.29, 162.16, 200.03, 237.90, 275.78];
    let mut worst: f64 = 0.0;
    let mut elapsed = Duration::ZERO;
    for (row, unit) in [(&flops, "G"), (&params, "M")] {
        let a1 = format!("16,{}", row[0]);
        let a2 = format!("160,{}", row[5]);
        let r = ok_run(&["flops", "--anchor", &a1, "--anchor", &a2, "--predict", "16,32,64,96,128,160", "--unit", unit])?;
        elapsed = elapsed.max(r.elapsed);
        let preds = r.results()["predictions"].as_array().unwrap();
        for ((p, &m), &want) in preds.iter().zip(&slots).zip(row.iter()) {
            let got = p["cost"].as_f64().unwrap();
            let rel = (got / want - 1.0).abs();
            ensure(rel < 0.005, format!("{unit} at M={m}: {got} vs {want} ({:.3}%)", rel * 100.0))?;
            worst = worst.max(rel);
        }
    }
    within_budget(elapsed, 1.0)?;
    Ok(format!("max relative error {:.4}% over 12 rows", worst * 100.0))
}

fn bound_arithmetic() -> Outcome {
    let base = ["bound", "--ls", "0.1", "--h-bits", "100", "--delta", "0.05", "--unit", "raw", "--m"];
    let mut a: Vec<&str> = base.to_vec();
    a.push("1000");
    let r1 = ok_run(&a)?;
    let mut b: Vec<&str> = base.to_vec();
    b.push("4000");
    let r4 = ok_run(&b)?;
    let oracle = ((100.0 + (2.0f64 / 0.05).ln()) / 2000.0).sqrt();
    let p1 = r1.num("penalty");
    ensure((p1 - oracle).abs() <= 1e-6, format!("penalty {p1} vs direct evaluation {oracle}"))?;
    ensure(p1 == 2.0 * r4.num("penalty"), format!("halving identity: {p1} vs 2×{}", r4.num("penalty")))?;
    ensure(r1.num("upper_bound") == 0.1 + p1, "upper bound is not L_S + penalty")?;
    Ok(format!(
        "penalty {p1:.9} (direct evaluation {oracle:.9}; the printed 0.227691 is off by {:.1e}), m×4 halves it exactly",
        (oracle - 0.227691f64).abs()
    ))
}

fn gradient_check() -> Outcome {
    let r = ok_run(&["grad-check", "--seeds", "20"])?;
    within_budget(r.elapsed, 30.0)?;
    let e = r.num("max_relative_error");
    ensure(e < 1e-4, format!("max relative error {e:e}"))?;
    Ok(format!(
        "max relative error {e:.3e} over {} instances ({} excluded near a boundary), {:?}",
        r.results()["checked"], r.results()["excluded"], r.elapsed
    ))
}

fn gating_invariants() -> Outcome {
    let mut rng = RngState::new(0x6a7e);
    let (mut evaluations, mut violations, mut ties) = (0usize, 0usize, 0usize);
    for case in 0..1200 {
        let n = rng.next_range(1, 24);
        let m = rng.next_range(2, 8);
        let d = rng.next_range(1, 8);
        let coarse = case % 2 == 0;
        let mut draw = |rows: usize, cols: usize| -> Matrix {
            let data = (0..rows * cols)
                .map(|_| {
                    if coarse {
                        rng.next_range(0, 6) as f64 * 0.5 - 1.5
                    } else {
                        rng.next_uniform(-3.0, 3.0)
                    }
                })
                .collect();
            Matrix::new(rows, cols, data).unwrap()
        };
        let x = draw(n, d);
        let w = draw(d, m);
        let bias = draw(1, m).into_vec();
        let g = gate(&AllocatorParams::new(w, bias).unwrap(), &x).map_err(|e| e.to_string())?;
        for i in 0..n {
            evaluations += 1;
            let row = g.soft_assignment.row(i);
            let k = g.hard_index[i];
            let sum: f64 = row.iter().sum();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first_max = row.iter().position(|&v| v == max).unwrap();
            if row.iter().filter(|&&v| v == max).count() > 1 {
                ties += 1;
            }
            let ok = (sum - 1.0).abs() <= 1e-10
                && row.iter().all(|v| (0.0..=1.0).contains(v))
                && g.routing_weight[i] == row[k]
                && k == first_max;
            violations += usize::from(!ok);
        }
    }
    ensure(evaluations >= 1000, "too few evaluations")?;
    ensure(violations == 0, format!("{violations} violations"))?;
    Ok(format!("{evaluations} token rows, {ties} with tied maxima, 0 violations"))
}

/// Residual of projecting `v` onto the row span of `b` (normal equations,
/// Gauss–Jordan with partial pivoting).
#[allow(clippy::needless_range_loop)]
fn projection_residual(b: &Matrix, v: &[f64]) -> f64 {
    let (m, d) = b.shape();
    let mut g = vec![vec![0.0; m + 1]; m];
    for r in 0..m {
        for c in 0..m {
            g[r][c] = (0..d).map(|p| b[(r, p)] * b[(c, p)]).sum();
        }
        g[r][m] = (0..d).map(|p| b[(r, p)] * v[p]).sum();
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| g[i][col].abs().total_cmp(&g[j][col].abs())).unwrap();
        g.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = g[r][col] / g[col][col];
                for c in col..=m {
                    g[r][c] -= f * g[col][c];
                }
            }
        }
    }
    (0..d)
        .map(|p| {
            let proj: f64 = (0..m).map(|r| g[r][m] / g[r][r] * b[(r, p)]).sum();
            (v[p] - proj).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

fn low_rank_certificate() -> Outcome {
    let mut rng = RngState::new(0x10e4);
    let mut worst: f64 = 0.0;
    let cases = 200;
    for _ in 0..cases {
        let n = rng.next_range(1, 128);
        let m = rng.next_range(2, 16);
        let d = rng.next_range(m, m + 32);
        let a = row_softmax(&seeded_gaussian(&mut rng, n, m, 0.0, 3.0).unwrap()).unwrap();
        let b = seeded_gaussian(&mut rng, m, d, 0.0, 1.0).unwrap();
        let g = GatingOutput {
            hard_index: vec![0; n],
            routing_weight: vec![0.0; n],
            soft_assignment: a,
        };
        let xh = soft_reconstruct(&g, &b).map_err(|e| e.to_string())?;
        let scale = xh.frobenius_norm();
        for i in 0..n {
            let ratio = projection_residual(&b, xh.row(i)) / scale;
            ensure(ratio < 1e-8, format!("row residual ratio {ratio:e} (N={n}, M={m}, d={d})"))?;
            worst = worst.max(ratio);
        }
    }
    Ok(format!("{cases} instances up to N=128, M=16; worst residual/‖X̂‖_F = {worst:.2e}"))
}

fn nearest_direction_purity(spec: &SyntheticSpec) -> f64 {
    let (x, labels) = gen_synthetic(spec).unwrap();
    let dirs = spec.directions().unwrap();
    let assign: Vec<usize> = x
        .iter_rows()
        .map(|row| {
            (0..dirs.rows())
                .max_by(|&a, &b| cosine_sim(row, dirs.row(a)).unwrap().total_cmp(&cosine_sim(row, dirs.row(b)).unwrap()))
                .unwrap()
        })
        .collect();
    purity(&assign, &labels).unwrap()
}

const TRAIN_ARGS: [&str; 13] = [
    "train", "--spec", "8,32,64,1,0.05", "--slots", "8", "--steps", "500", "--lr", "0.05", "--seed", "7", "--lambda-orth", "1",
];

fn cluster_recovery() -> Outcome {
    let mut args = TRAIN_ARGS.to_vec();
    args.extend(["--lambda-recon", "0"]);
    let r = ok_run(&args)?;
    within_budget(r.elapsed, 30.0)?;
    let res = r.results();
    let metric = |k: &str| res["metrics"][k].as_f64().ok_or(format!("metric {k} undefined"));
    let (init, fin) = (r.num("initial_loss"), r.num("final_loss"));
    let (pur, comp, sep) = (metric("purity")?, metric("compactness")?, metric("separability")?);
    let spec = SyntheticSpec {
        num_clusters: 8,
        tokens_per_cluster: 32,
        dim: 64,
        signal_scale: 1.0,
        noise_sigma: 0.05,
        seed: 7,
    };
    let oracle = nearest_direction_purity(&spec);
    ensure(oracle == 1.0, format!("nearest-direction oracle purity {oracle}"))?;
    ensure(fin < init, format!("final loss {fin} not below initial {init}"))?;
    ensure(pur >= 0.95, format!("purity {pur}"))?;
    ensure(comp < 0.3, format!("compactness {comp}"))?;
    ensure(sep > 0.9, format!("separability {sep}"))?;
    ensure(comp < sep, "compactness not below separability")?;
    Ok(format!(
        "loss {init:.3} -> {fin:.3}, purity {pur} (oracle {oracle}), compactness {comp:.4}, separability {sep:.4}, {:?}",
        r.elapsed
    ))
}

/// The same run with the default composite weights, reported for context.
fn cluster_recovery_default_weights() -> String {
    match ok_run(&TRAIN_ARGS) {
        Ok(r) => {
            let m = &r.results()["metrics"];
            format!(
                "lambda_recon=1: loss {:.3} -> {:.3}, purity {}, active slots {}",
                r.num("initial_loss"),
                r.num("final_loss"),
                m["purity"],
                m["active_slots"]
            )
        }
        Err(e) => e,
    }
}

fn saturation_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b, c) = (83.0, 120.0, 1.1);
    let mut fits: Vec<(f64, f64, f64)> = Vec::new();
    for seed in 0..20u64 {
        let mut rng = RngState::new(1000 + seed);
        let mut csv = String::from("model,params_m,flops_g,slots,accuracy,mdl\n");
        for m in 16..=160u32 {
            let mut e = [0.0];
            rng.fill_standard_normal(&mut e);
            let acc = a - b * (m as f64).powf(-c) + 0.1 * e[0];
            csv.push_str(&format!("planted,100,,{m},{acc:e},\n"));
        }
        let path = dir.path().join(format!("sat{seed}.csv"));
        std::fs::write(&path, csv).map_err(|e| e.to_string())?;
        let r = ok_run(&["infer-mdl", "--csv", path.to_str().unwrap(), "--delta-sat", "0.5"])?;
        let fit: &Value = &r.results()["fit"];
        let (fa, fb, fc) = (fit["a"].as_f64().unwrap(), fit["b"].as_f64().unwrap(), fit["c"].as_f64().unwrap());
        let m_star = r.results()["m_star"].as_u64().unwrap();
        let scan = brute_force_mdl(fb, fc, 0.5).ok_or("brute-force scan found no threshold below 10^4")?;
        ensure(m_star == scan, format!("seed {seed}: infer-mdl {m_star} vs scan {scan}"))?;
        fits.push((fa, fb, fc));
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[9] + v[10]) / 2.0
    };
    let ma = median(fits.iter().map(|f| f.0).collect());
    let mb = median(fits.iter().map(|f| f.1).collect());
    let mc = median(fits.iter().map(|f| f.2).collect());
    for (name, got, want) in [("a", ma, a), ("b", mb, b), ("c", mc, c)] {
        ensure((got / want - 1.0).abs() < 0.05, format!("median {name} {got} vs {want}"))?;
    }
    Ok(format!("median a={ma:.4} b={mb:.3} c={mc:.4}; 20/20 M* match the scan"))
}

fn mdl_tradeoff() -> Outcome {
    let r = ok_run(&[
        "sweep", "--spec", "8,16,16,1,0.05", "--slots", "2,4,8,16,32", "--lambda-recon", "0", "--seed", "0",
    ])?;
    let points = r.results()["points"].as_array().unwrap();
    let ls: Vec<f64> = points.iter().map(|p| p["empirical_loss"].as_f64().unwrap()).collect();
    let h: Vec<u64> = points.iter().map(|p| p["total_bits"].as_u64().unwrap()).collect();
    for (p, m) in points.iter().zip([2u64, 4, 8, 16, 32]) {
        let want = m * 16 * 32 + 128 * (64 - (m - 1).leading_zeros() as u64);
        ensure(p["total_bits"].as_u64() == Some(want), format!("|h| at M={m} is not {want}"))?;
    }
    ensure(ls.windows(2).all(|w| w[1] <= w[0]), format!("L_S not non-increasing: {ls:?}"))?;
    ensure(h.windows(2).all(|w| w[1] > w[0]), format!("|h| not increasing: {h:?}"))?;
    let argmin = r.results()["argmin_slots"].as_u64().unwrap();
    ensure(r.results()["interior_minimum"] == true, format!("bound minimized at boundary M={argmin}"))?;
    Ok(format!("L_S {ls:.3?}, |h| {h:?}, bound minimized at M={argmin}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let tokens = dir.path().join("x.otkn");
    let t = tokens.to_str().unwrap();
    ok_run(&["synth", "--spec", "4,8,8,1,0.05", "--seed", "3", "--tokens-out", t])?;
    let lpep = data("table3_lpep.csv");
    let commands: Vec<Vec<&str>> = vec![
        vec!["synth", "--spec", "4,8,8,1,0.05", "--seed", "3", "--tokens-out", t],
        vec!["filter", "--tokens", t, "--slots", "4", "--seed", "11", "--training"],
        vec!["train", "--spec", "4,8,8,1,0.05", "--slots", "4", "--steps", "60", "--lr", "0.05", "--seed", "2"],
        vec!["grad-check", "--seeds", "5"],
        vec!["fit-lpep", "--csv", &lpep],
        vec!["bound", "--ls", "0.1", "--h-bits", "100", "--m", "1000", "--delta", "0.05"],
        vec!["flops", "--anchor", "16,1.72", "--anchor", "160,14.15", "--predict", "96"],
        vec!["flops-estimate", "--layers", "12", "--hidden", "768", "--tokens", "96"],
        vec!["sweep", "--spec", "4,6,8,1,0.05", "--slots", "2,4,8", "--steps", "30", "--seed", "1"],
    ];
    for args in &commands {
        let first = ok_run(args)?;
        let second = ok_run(args)?;
        let (a, b) = (first.results().to_string(), second.results().to_string());
        ensure(a == b, format!("`{}` results differ between runs", args.join(" ")))?;
    }
    Ok(format!("{} commands, results bit-identical across two runs", commands.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("LPEP fit on Table 3", lpep_fit),
        ("Table 2 affine linearity", affine_tables),
        ("bound arithmetic", bound_arithmetic),
        ("gradient correctness", gradient_check),
        ("gating constraint invariants", gating_invariants),
        ("low-rank certificate", low_rank_certificate),
        ("cluster recovery", cluster_recovery),
        ("saturation fitter", saturation_recovery),
        ("MDL trade-off shape", mdl_tradeoff),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{:.2?}]", i + 1, start.elapsed()),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail} [{:.2?}]", i + 1, start.elapsed());
            }
        }
        if i == 6 {
            println!("INFO  7 cluster recovery, default weights: {}", cluster_recovery_default_weights());
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
