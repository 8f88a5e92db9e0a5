//! The orthogonal filter forward pass.
//!
//! A linear allocator produces slot logits, a row softmax turns them into the
//! soft assignment `A`, and each token is routed to its most probable slot
//! (lowest index on ties). Each slot fuses its tokens as a routing-weighted
//! sum, optionally after L2-normalizing them; there is no per-slot feature
//! extractor. Slots that receive no token are filled with Gaussian noise drawn
//! from a seeded stream.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, matmul, seeded_gaussian, Matrix, RngState};
use crate::loss::{self, LossBreakdown, LossParams};

pub const DEFAULT_NOISE_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub num_slots: usize,
    pub token_dim: usize,
    pub noise_std: f64,
    /// L2-normalize tokens before fusing them.
    pub normalize_tokens: bool,
    /// L2-normalize the noise vector of empty slots.
    pub normalize_noise: bool,
}

impl FilterConfig {
    /// Defaults: noise std 0.02, tokens and noise normalized.
    pub fn new(num_slots: usize, token_dim: usize) -> Result<Self> {
        let cfg = FilterConfig {
            num_slots,
            token_dim,
            noise_std: DEFAULT_NOISE_STD,
            normalize_tokens: true,
            normalize_noise: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_noise_std(mut self, std: f64) -> Self {
        self.noise_std = std;
        self
    }

    /// Sets both token and noise normalization.
    pub fn with_normalize(mut self, on: bool) -> Self {
        self.normalize_tokens = on;
        self.normalize_noise = on;
        self
    }

    pub fn with_normalize_noise(mut self, on: bool) -> Self {
        self.normalize_noise = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_slots < 2 {
            return Err(Error::invalid("num_slots must be at least 2"));
        }
        if self.token_dim == 0 {
            return Err(Error::invalid("token_dim must be positive"));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::invalid("noise_std must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Learnable allocator: `logits = x · gate_weight + gate_bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorParams {
    /// `d x M`
    pub gate_weight: Matrix,
    /// length `M`
    pub gate_bias: Vec<f64>,
}

impl AllocatorParams {
    pub fn new(gate_weight: Matrix, gate_bias: Vec<f64>) -> Result<Self> {
        if gate_bias.len() != gate_weight.cols() {
            return Err(Error::dims(
                "AllocatorParams::new",
                (1, gate_weight.cols()),
                (1, gate_bias.len()),
            ));
        }
        if gate_bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("AllocatorParams::new"));
        }
        Ok(AllocatorParams { gate_weight, gate_bias })
    }

    pub fn zeros(token_dim: usize, num_slots: usize) -> Self {
        AllocatorParams {
            gate_weight: Matrix::zeros(token_dim, num_slots),
            gate_bias: vec![0.0; num_slots],
        }
    }

    /// Gaussian weights with the given std, zero bias.
    pub fn random(token_dim: usize, num_slots: usize, std: f64, rng: &mut RngState) -> Result<Self> {
        Ok(AllocatorParams {
            gate_weight: seeded_gaussian(rng, token_dim, num_slots, 0.0, std)?,
            gate_bias: vec![0.0; num_slots],
        })
    }

    /// Gate columns set to `gain` times unit-norm prototype tokens chosen by
    /// farthest-point traversal in cosine distance, starting from a seeded
    /// random token. Zero bias. Needs at least `num_slots` tokens.
    pub fn prototypes(x: &Matrix, num_slots: usize, gain: f64, rng: &mut RngState) -> Result<Self> {
        let (n, d) = x.shape();
        if n < num_slots || num_slots == 0 {
            return Err(Error::invalid(alloc::format!(
                "prototype init needs at least {num_slots} tokens, got {n}"
            )));
        }
        let unit = fusion_tokens(x, true)?;
        let mut picks = vec![rng.next_range(0, n - 1)];
        // Largest cosine to any pick so far; the next pick minimizes it.
        let mut nearest: Vec<f64> = (0..n).map(|i| linalg::dot(unit.row(i), unit.row(picks[0]))).collect();
        while picks.len() < num_slots {
            let mut next = 0;
            for i in 1..n {
                if nearest[i] < nearest[next] {
                    next = i;
                }
            }
            picks.push(next);
            for (i, v) in nearest.iter_mut().enumerate() {
                *v = v.max(linalg::dot(unit.row(i), unit.row(next)));
            }
        }
        let mut gate_weight = Matrix::zeros(d, num_slots);
        for (k, &p) in picks.iter().enumerate() {
            for (r, v) in unit.row(p).iter().enumerate() {
                gate_weight[(r, k)] = gain * v;
            }
        }
        Ok(AllocatorParams {
            gate_weight,
            gate_bias: vec![0.0; num_slots],
        })
    }

    pub fn token_dim(&self) -> usize {
        self.gate_weight.rows()
    }

    pub fn num_slots(&self) -> usize {
        self.gate_weight.cols()
    }

    pub fn check(&self, cfg: &FilterConfig) -> Result<()> {
        if self.gate_weight.shape() != (cfg.token_dim, cfg.num_slots) {
            return Err(Error::dims(
                "AllocatorParams",
                (cfg.token_dim, cfg.num_slots),
                self.gate_weight.shape(),
            ));
        }
        Ok(())
    }

    /// Flattened `[gate_weight (row-major), gate_bias]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.gate_weight.as_slice().to_vec();
        v.extend_from_slice(&self.gate_bias);
        v
    }

    pub fn from_flat(token_dim: usize, num_slots: usize, flat: &[f64]) -> Result<Self> {
        let nw = token_dim * num_slots;
        if flat.len() != nw + num_slots {
            return Err(Error::invalid("flat parameter vector has wrong length"));
        }
        AllocatorParams::new(
            Matrix::new(token_dim, num_slots, flat[..nw].to_vec())?,
            flat[nw..].to_vec(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatingOutput {
    /// `N x M`, row-stochastic.
    pub soft_assignment: Matrix,
    /// Selected slot for each token.
    pub hard_index: Vec<usize>,
    /// `A[i, hard_index[i]]`.
    pub routing_weight: Vec<f64>,
}

impl GatingOutput {
    pub fn num_tokens(&self) -> usize {
        self.hard_index.len()
    }

    pub fn num_slots(&self) -> usize {
        self.soft_assignment.cols()
    }

    /// Token indices per slot, in increasing token order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_slots()];
        for (i, &k) in self.hard_index.iter().enumerate() {
            groups[k].push(i);
        }
        groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutput {
    /// `M x d` fused bases.
    pub bases: Matrix,
    pub groups: Vec<Vec<usize>>,
    pub noise_mask: Vec<bool>,
}

impl SlotOutput {
    pub fn num_slots(&self) -> usize {
        self.bases.rows()
    }

    pub fn active_slots(&self) -> usize {
        self.noise_mask.iter().filter(|&&m| !m).count()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub gating: GatingOutput,
    pub slots: SlotOutput,
    /// Present only in training mode.
    pub loss: Option<LossBreakdown>,
}

/// Index of the largest entry; the lowest index wins ties.
#[inline]
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn logits(params: &AllocatorParams, x: &Matrix) -> Result<Matrix> {
    if x.cols() != params.token_dim() {
        return Err(Error::dims(
            "gate",
            (x.rows(), params.token_dim()),
            x.shape(),
        ));
    }
    let mut z = matmul(x, &params.gate_weight)?;
    for i in 0..z.rows() {
        for (v, b) in z.row_mut(i).iter_mut().zip(&params.gate_bias) {
            *v += b;
        }
    }
    Ok(z)
}

/// Soft assignment, hard routing and routing weights for every token.
pub fn gate(params: &AllocatorParams, x: &Matrix) -> Result<GatingOutput> {
    let z = logits(params, x)?;
    let a = linalg::row_softmax(&z)?;
    let hard_index: Vec<usize> = a.iter_rows().map(argmax).collect();
    let routing_weight = hard_index
        .iter()
        .enumerate()
        .map(|(i, &k)| a[(i, k)])
        .collect();
    Ok(GatingOutput {
        soft_assignment: a,
        hard_index,
        routing_weight,
    })
}

/// One `M x d` noise draw per call; row `k` is used if slot `k` ends up empty.
pub fn draw_slot_noise(cfg: &FilterConfig, rng: &mut RngState) -> Result<Matrix> {
    seeded_gaussian(rng, cfg.num_slots, cfg.token_dim, 0.0, cfg.noise_std)
}

/// Token `i` as it enters fusion: unit-normalized or raw.
pub(crate) fn fusion_tokens(x: &Matrix, normalize: bool) -> Result<Matrix> {
    if !normalize {
        return Ok(x.clone());
    }
    let mut out = x.clone();
    for i in 0..x.rows() {
        let n = linalg::norm(x.row(i));
        if !(n > linalg::EPS_NORM) {
            return Err(Error::DegenerateVector("fuse_slots: token"));
        }
        for v in out.row_mut(i) {
            *v /= n;
        }
    }
    Ok(out)
}

/// Slot fusion with an explicit noise matrix (`M x d`). `noise` may be
/// omitted when no slot is empty.
pub fn fuse_slots_with_noise(
    x: &Matrix,
    g: &GatingOutput,
    cfg: &FilterConfig,
    noise: Option<&Matrix>,
) -> Result<SlotOutput> {
    let (n, d) = x.shape();
    let m = cfg.num_slots;
    if d != cfg.token_dim || g.num_tokens() != n || g.num_slots() != m {
        return Err(Error::dims("fuse_slots", (n, d), (g.num_tokens(), cfg.token_dim)));
    }
    let tokens = fusion_tokens(x, cfg.normalize_tokens)?;
    let groups = g.groups();
    let mut bases = Matrix::zeros(m, d);
    let mut noise_mask = vec![false; m];
    for (k, group) in groups.iter().enumerate() {
        if group.is_empty() {
            noise_mask[k] = true;
            let noise = noise.ok_or(Error::MissingNoise { slot: k })?;
            if noise.shape() != (m, d) {
                return Err(Error::dims("fuse_slots: noise", (m, d), noise.shape()));
            }
            let row = if cfg.normalize_noise {
                linalg::normalized(noise.row(k), "fuse_slots: noise")?
            } else {
                noise.row(k).to_vec()
            };
            bases.row_mut(k).copy_from_slice(&row);
            continue;
        }
        let out = bases.row_mut(k);
        for &i in group {
            let w = g.routing_weight[i];
            for (o, &t) in out.iter_mut().zip(tokens.row(i)) {
                *o += w * t;
            }
        }
    }
    Ok(SlotOutput {
        bases,
        groups,
        noise_mask,
    })
}

/// Slot fusion; noise for empty slots is drawn from `rng`.
pub fn fuse_slots(
    x: &Matrix,
    g: &GatingOutput,
    cfg: &FilterConfig,
    rng: &mut RngState,
) -> Result<SlotOutput> {
    let noise = draw_slot_noise(cfg, rng)?;
    fuse_slots_with_noise(x, g, cfg, Some(&noise))
}

/// Gate, fuse and, when `training` carries loss parameters, evaluate the
/// orthogonal loss on the fused bases.
pub fn forward(
    params: &AllocatorParams,
    x: &Matrix,
    cfg: &FilterConfig,
    rng: &mut RngState,
    training: Option<&LossParams>,
) -> Result<ForwardOutput> {
    cfg.validate()?;
    params.check(cfg)?;
    let gating = gate(params, x)?;
    let slots = fuse_slots(x, &gating, cfg, rng)?;
    let loss = match training {
        Some(lp) => Some(loss::orthogonal_loss(x, &slots, lp)?),
        None => None,
    };
    Ok(ForwardOutput { gating, slots, loss })
}

/// `X̂ = A · B`, whose rank is at most `M`.
pub fn soft_reconstruct(g: &GatingOutput, bases: &Matrix) -> Result<Matrix> {
    matmul(&g.soft_assignment, bases)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn random_tokens(seed: u64, n: usize, d: usize) -> Matrix {
        seeded_gaussian(&mut RngState::new(seed), n, d, 0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_params_uniform_and_lowest_index() {
        let x = random_tokens(1, 5, 3);
        let g = gate(&AllocatorParams::zeros(3, 4), &x).unwrap();
        assert!(g.soft_assignment.as_slice().iter().all(|&v| v == 0.25));
        assert!(g.hard_index.iter().all(|&k| k == 0));
        assert!(g.routing_weight.iter().all(|&w| w == 0.25));
    }

    #[test]
    fn dominant_bias_selects_slot() {
        let x = random_tokens(2, 4, 2);
        let params = AllocatorParams::new(Matrix::zeros(2, 3), vec![0.0, 10.0, 0.0]).unwrap();
        let g = gate(&params, &x).unwrap();
        assert!(g.hard_index.iter().all(|&k| k == 1));
        let expected = 1.0 / (1.0 + 2.0 * (-10.0f64).exp());
        for &w in &g.routing_weight {
            assert!((w - expected).abs() < 1e-15);
            assert!(w > 0.9999);
        }
    }

    #[test]
    fn gate_matches_scalar_oracle() {
        let x = random_tokens(3, 6, 3);
        let params = AllocatorParams::new(
            random_tokens(4, 3, 5),
            vec![0.1, -0.2, 0.3, 0.0, 0.5],
        )
        .unwrap();
        let g = gate(&params, &x).unwrap();
        for i in 0..6 {
            let mut z = [0.0f64; 5];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = params.gate_bias[j];
                for p in 0..3 {
                    *zj += x[(i, p)] * params.gate_weight[(p, j)];
                }
            }
            let mx = z.iter().cloned().fold(f64::MIN, f64::max);
            let s: f64 = z.iter().map(|v| (v - mx).exp()).sum();
            let mut best = 0;
            for j in 0..5 {
                let a = (z[j] - mx).exp() / s;
                assert!((g.soft_assignment[(i, j)] - a).abs() < 1e-14);
                if z[j] > z[best] {
                    best = j;
                }
            }
            assert_eq!(g.hard_index[i], best);
            assert_eq!(g.routing_weight[i], g.soft_assignment[(i, best)]);
            assert!((g.soft_assignment.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_rejects_dimension_mismatch() {
        let x = random_tokens(5, 3, 4);
        assert!(matches!(
            gate(&AllocatorParams::zeros(3, 2), &x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn manual_gating(a_rows: &[&[f64]]) -> GatingOutput {
        let a = Matrix::from_rows(a_rows).unwrap();
        let hard_index: Vec<usize> = a.iter_rows().map(argmax).collect();
        let routing_weight = hard_index.iter().enumerate().map(|(i, &k)| a[(i, k)]).collect();
        GatingOutput {
            soft_assignment: a,
            hard_index,
            routing_weight,
        }
    }

    #[test]
    fn singleton_fusion() {
        let x = Matrix::from_rows(&[&[0.5, -2.0, 3.0]]).unwrap();
        let g = manual_gating(&[&[1.0, 0.0, 0.0]]);
        let cfg = FilterConfig::new(3, 3).unwrap().with_normalize(false);
        let s = fuse_slots(&x, &g, &cfg, &mut RngState::new(0)).unwrap();
        assert_eq!(s.bases.row(0), x.row(0));
        assert_eq!(s.noise_mask, vec![false, true, true]);
    }

    #[test]
    fn duplicate_tokens_average() {
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[1.0, 2.0]]).unwrap();
        let g = manual_gating(&[&[0.5, 0.3, 0.2], &[0.5, 0.25, 0.25]]);
        let cfg = FilterConfig::new(3, 2).unwrap().with_normalize(false);
        let s = fuse_slots(&x, &g, &cfg, &mut RngState::new(0)).unwrap();
        assert_eq!(s.bases.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn fusion_matches_accumulation_oracle() {
        let x = random_tokens(6, 8, 4);
        let params = AllocatorParams::new(random_tokens(7, 4, 3), vec![0.0; 3]).unwrap();
        let g = gate(&params, &x).unwrap();
        for normalize in [false, true] {
            let cfg = FilterConfig::new(3, 4).unwrap().with_normalize(normalize);
            let s = fuse_slots(&x, &g, &cfg, &mut RngState::new(42)).unwrap();
            let again = fuse_slots(&x, &g, &cfg, &mut RngState::new(42)).unwrap();
            assert_eq!(s, again);
            for k in 0..3 {
                if s.noise_mask[k] {
                    continue;
                }
                let mut acc = [0.0f64; 4];
                for i in 0..8 {
                    if g.hard_index[i] != k {
                        continue;
                    }
                    let n: f64 = if normalize {
                        x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
                    } else {
                        1.0
                    };
                    for p in 0..4 {
                        acc[p] += g.routing_weight[i] * x[(i, p)] / n;
                    }
                }
                assert!(max_abs_diff(s.bases.row(k), &acc) < 1e-12);
            }
        }
    }

    #[test]
    fn noise_rows_follow_normalization_flags() {
        let x = Matrix::from_rows(&[&[1.0, 0.0]]).unwrap();
        let g = manual_gating(&[&[0.9, 0.1]]);
        let raw = FilterConfig::new(2, 2).unwrap().with_normalize_noise(false);
        let noise = Matrix::from_rows(&[&[9.0, 9.0], &[0.03, -0.04]]).unwrap();
        let s = fuse_slots_with_noise(&x, &g, &raw, Some(&noise)).unwrap();
        assert_eq!(s.bases.row(1), &[0.03, -0.04]);
        let unit = FilterConfig::new(2, 2).unwrap();
        let s = fuse_slots_with_noise(&x, &g, &unit, Some(&noise)).unwrap();
        assert!(max_abs_diff(s.bases.row(1), &[0.6, -0.8]) < 1e-15);
        assert_eq!(
            fuse_slots_with_noise(&x, &g, &unit, None),
            Err(Error::MissingNoise { slot: 1 })
        );
    }

    #[test]
    fn zero_token_rejected_when_normalizing() {
        let x = Matrix::from_rows(&[&[0.0, 0.0]]).unwrap();
        let g = manual_gating(&[&[0.9, 0.1]]);
        let cfg = FilterConfig::new(2, 2).unwrap();
        assert!(matches!(
            fuse_slots(&x, &g, &cfg, &mut RngState::new(0)),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn forward_eval_and_training() {
        let x = random_tokens(8, 12, 8);
        let cfg = FilterConfig::new(4, 8).unwrap();
        let params = AllocatorParams::random(8, 4, 0.5, &mut RngState::new(9)).unwrap();
        let eval = forward(&params, &x, &cfg, &mut RngState::new(10), None).unwrap();
        assert!(eval.loss.is_none());
        let g = gate(&params, &x).unwrap();
        let s = fuse_slots(&x, &g, &cfg, &mut RngState::new(10)).unwrap();
        assert_eq!(eval.gating, g);
        assert_eq!(eval.slots, s);

        let lp = LossParams::default();
        let train = forward(&params, &x, &cfg, &mut RngState::new(10), Some(&lp)).unwrap();
        let manual = loss::orthogonal_loss(&x, &s, &lp).unwrap();
        assert_eq!(train.loss.as_ref().unwrap(), &manual);
        assert!(manual.total.is_finite());
    }

    #[test]
    fn soft_reconstruct_cases() {
        let b = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[-1.0, 0.5]]).unwrap();
        let onehot = manual_gating(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let xh = soft_reconstruct(&onehot, &b).unwrap();
        assert_eq!(xh.row(0), b.row(1));
        assert_eq!(xh.row(1), b.row(2));
        let t = 1.0 / 3.0;
        let uniform = manual_gating(&[&[t, t, t]]);
        let xh = soft_reconstruct(&uniform, &b).unwrap();
        assert!(max_abs_diff(xh.row(0), &[1.0, 6.5 / 3.0]) < 1e-15);
    }

    #[test]
    fn prototypes_cover_every_planted_direction() {
        // Four orthogonal directions, three copies each: farthest-point
        // traversal must pick one token per direction.
        let mut rows = Vec::new();
        for c in 0..4 {
            for _ in 0..3 {
                let mut r = vec![0.0; 5];
                r[c] = 2.0;
                rows.push(r);
            }
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let x = Matrix::from_rows(&refs).unwrap();
        let p = AllocatorParams::prototypes(&x, 4, 5.0, &mut RngState::new(3)).unwrap();
        let g = gate(&p, &x).unwrap();
        for c in 0..4 {
            let slot = g.hard_index[3 * c];
            assert!(g.hard_index[3 * c..3 * c + 3].iter().all(|&k| k == slot));
            assert!(g.hard_index[..3 * c].iter().all(|&k| k != slot));
        }
        for k in 0..4 {
            let col: f64 = (0..5).map(|r| p.gate_weight[(r, k)].powi(2)).sum();
            assert!((col.sqrt() - 5.0).abs() < 1e-12);
        }
        assert!(AllocatorParams::prototypes(&x, 13, 1.0, &mut RngState::new(0)).is_err());
    }
}
