//! Scaling-law fits.
//!
//! - [`fit_power_law`]: `η(θ) = C·θ^(−α)` by OLS in log–log space.
//! - [`fit_saturation`]: `acc(M) = a − b·M^(−c)` by a grid over `c` with
//!   closed-form `(a, b)`, refined with golden-section search.
//! - [`infer_mdl`]: smallest slot count whose fitted accuracy is within
//!   `δ_sat` of the asymptote.
//! - [`calibrate_affine`]: two-anchor linear cost model in the slot count.
//! - [`transformer_flops_estimate`]: a-priori per-layer transformer cost.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const DEFAULT_DELTA_SAT: f64 = 0.5;

/// One row of a scaling table. Optional columns are `None` when absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSample {
    pub model: String,
    pub params_m: f64,
    pub flops_g: Option<f64>,
    pub slots: Option<u64>,
    pub accuracy: Option<f64>,
    pub mdl: Option<f64>,
}

impl ScalingSample {
    pub fn validate(&self) -> Result<()> {
        if !(self.params_m > 0.0) || !self.params_m.is_finite() {
            return Err(Error::invalid("params_m must be positive"));
        }
        if self.slots.is_none() && self.accuracy.is_none() && self.flops_g.is_none() && self.mdl.is_none() {
            return Err(Error::invalid("sample carries no observation besides params_m"));
        }
        if let Some(f) = self.flops_g {
            if !(f > 0.0) {
                return Err(Error::invalid("flops_g must be positive"));
            }
        }
        if self.slots == Some(0) {
            return Err(Error::invalid("slots must be positive"));
        }
        if let Some(a) = self.accuracy {
            if !(0.0..=100.0).contains(&a) {
                return Err(Error::invalid("accuracy must lie in [0, 100]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub c: f64,
    pub alpha: f64,
    /// Coefficient of determination in log space.
    pub r_squared: f64,
    /// `ln η − (ln C − α ln θ)` per point.
    pub residuals: Vec<f64>,
}

impl PowerLawFit {
    pub fn predict(&self, theta: f64) -> f64 {
        self.c * libm::pow(theta, -self.alpha)
    }
}

/// Ordinary least squares `y = intercept + slope·x` with centered (two-pass)
/// sums.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - xm) * (b - ym);
        sxx += (a - xm) * (a - xm);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (ym - slope * xm, slope)
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::invalid("fit_power_law: need at least 3 points"));
    }
    if points.iter().any(|&(t, e)| !(t > 0.0 && e > 0.0) || !t.is_finite() || !e.is_finite()) {
        return Err(Error::invalid("fit_power_law: values must be positive and finite"));
    }
    let lx: Vec<f64> = points.iter().map(|p| libm::log(p.0)).collect();
    let ly: Vec<f64> = points.iter().map(|p| libm::log(p.1)).collect();
    if lx.iter().all(|&v| v == lx[0]) {
        return Err(Error::invalid("fit_power_law: all parameter counts are equal"));
    }
    let (intercept, slope) = ols(&lx, &ly);
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - (intercept + slope * x)).collect();
    let ym = ly.iter().sum::<f64>() / ly.len() as f64;
    let ss_tot: f64 = ly.iter().map(|y| (y - ym) * (y - ym)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PowerLawFit {
        c: libm::exp(intercept),
        alpha: -slope,
        r_squared,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationFit {
    /// Asymptotic accuracy.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rmse: f64,
    /// No increasing power-law approach could be resolved.
    pub degenerate: bool,
}

impl SaturationFit {
    pub fn predict(&self, m: f64) -> f64 {
        self.a - self.b * libm::pow(m, -self.c)
    }
}

pub const SATURATION_C_MIN: f64 = 0.1;
pub const SATURATION_C_MAX: f64 = 3.0;

/// Best `(a, b, rmse)` for a fixed exponent.
fn saturation_at(points: &[(f64, f64)], c: f64) -> (f64, f64, f64) {
    let f: Vec<f64> = points.iter().map(|p| libm::pow(p.0, -c)).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (a, slope) = ols(&f, &y);
    let b = -slope;
    let sse: f64 = f.iter().zip(&y).map(|(fv, yv)| { let r = yv - (a - b * fv); r * r }).sum();
    (a, b, libm::sqrt(sse / points.len() as f64))
}

pub fn fit_saturation(points: &[(f64, f64)]) -> Result<SaturationFit> {
    if points.len() < 4 {
        return Err(Error::invalid("fit_saturation: need at least 4 points"));
    }
    if points.iter().any(|&(m, acc)| !(m > 0.0) || !m.is_finite() || !acc.is_finite()) {
        return Err(Error::invalid("fit_saturation: slot counts must be positive"));
    }
    // Grid c = 0.1, 0.2, ..., 3.0; strict improvement keeps the lowest c on ties.
    let mut best_c = SATURATION_C_MIN;
    let mut best = saturation_at(points, best_c);
    for step in 2..=30 {
        let c = step as f64 / 10.0;
        let cand = saturation_at(points, c);
        if cand.2 < best.2 {
            best = cand;
            best_c = c;
        }
    }

    // Golden-section refinement on [c − 0.1, c + 0.1].
    let inv_phi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let (mut lo, mut hi) = ((best_c - 0.1).max(1e-3), best_c + 0.1);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = saturation_at(points, x1).2;
    let mut f2 = saturation_at(points, x2).2;
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = saturation_at(points, x1).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = saturation_at(points, x2).2;
        }
    }
    let refined_c = 0.5 * (lo + hi);
    let refined = saturation_at(points, refined_c);
    let (a, b, rmse, c) = if refined.2 < best.2 {
        (refined.0, refined.1, refined.2, refined_c)
    } else {
        (best.0, best.1, best.2, best_c)
    };

    let span = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
        - points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let degenerate = !(b > 1e-9 * (1.0 + a.abs())) || span == 0.0 || c >= SATURATION_C_MAX + 0.1 - 1e-9;
    Ok(SaturationFit {
        a,
        b,
        c,
        rmse,
        degenerate,
    })
}

/// Smallest integer `M ≥ 1` with `b·M^(−c) ≤ δ_sat`.
pub fn infer_mdl(fit: &SaturationFit, delta_sat: f64) -> Result<u64> {
    if fit.degenerate || !(fit.b > 0.0 && fit.c > 0.0) {
        return Err(Error::DegenerateInput("saturation fit is degenerate".into()));
    }
    if !(delta_sat > 0.0) || !delta_sat.is_finite() {
        return Err(Error::invalid("delta_sat must be positive"));
    }
    if delta_sat >= fit.b {
        return Ok(1);
    }
    let gap = |m: u64| fit.b * libm::pow(m as f64, -fit.c);
    let estimate = libm::ceil(libm::pow(fit.b / delta_sat, 1.0 / fit.c));
    if !(estimate < 1e18) {
        return Err(Error::invalid("inferred slot count overflows"));
    }
    let mut m = (estimate as u64).max(1);
    // Correct the closed form for rounding in pow/ceil.
    while m > 1 && gap(m - 1) <= delta_sat {
        m -= 1;
    }
    while gap(m) > delta_sat {
        m += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineCostModel {
    pub intercept: f64,
    pub slope: f64,
    pub unit: String,
}

impl AffineCostModel {
    pub fn predict(&self, slots: f64) -> f64 {
        self.intercept + self.slope * slots
    }
}

/// Exact line through two `(slots, cost)` anchors.
pub fn calibrate_affine(anchor1: (f64, f64), anchor2: (f64, f64), unit: &str) -> Result<AffineCostModel> {
    let ((m1, c1), (m2, c2)) = (anchor1, anchor2);
    if [m1, c1, m2, c2].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("calibrate_affine"));
    }
    if m1 == m2 {
        return Err(Error::invalid("calibrate_affine: anchors need distinct slot counts"));
    }
    let slope = (c2 - c1) / (m2 - m1);
    if !(slope > 0.0) {
        return Err(Error::invalid("calibrate_affine: cost must increase with slot count"));
    }
    Ok(AffineCostModel {
        intercept: c1 - slope * m1,
        slope,
        unit: unit.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlopConvention {
    /// One multiply-accumulate counts as one operation, as in most published
    /// ViT tables.
    #[default]
    MultiplyAccumulate,
    /// One multiply-accumulate counts as two floating-point operations.
    TwoFlopsPerMac,
}

impl FlopConvention {
    pub fn name(self) -> &'static str {
        match self {
            FlopConvention::MultiplyAccumulate => "mac",
            FlopConvention::TwoFlopsPerMac => "2flops-per-mac",
        }
    }
}

/// Transformer cost in G-operations:
/// `L·N·d²·(4 + 2·ffn_mult) + 2·L·N²·d` multiply-accumulates (the first term
/// is `12·L·N·d²` at `ffn_mult = 4`). Excludes the patch embedding, the head
/// and any token filter.
pub fn transformer_flops_estimate(
    layers: usize,
    hidden: usize,
    ffn_mult: f64,
    n_tokens: usize,
    convention: FlopConvention,
) -> Result<f64> {
    if layers == 0 || hidden == 0 || n_tokens == 0 || !(ffn_mult > 0.0) {
        return Err(Error::invalid("transformer_flops_estimate: arguments must be positive"));
    }
    let (l, d, n) = (layers as f64, hidden as f64, n_tokens as f64);
    let projections = l * n * d * d * (4.0 + 2.0 * ffn_mult);
    let attention = 2.0 * l * n * n * d;
    let macs = projections + attention;
    let factor = match convention {
        FlopConvention::MultiplyAccumulate => 1.0,
        FlopConvention::TwoFlopsPerMac => 2.0,
    };
    Ok(macs * factor / 1e9)
}
