//! Orthogonal token filtering.
//!
//! An allocator routes each of `N` tokens to one of `M` slots; each slot fuses
//! its tokens into a basis vector, and empty slots are filled with seeded noise.
//! The allocator is trained with a contrastive orthogonality loss. Around that
//! forward pass this crate provides:
//!
//! - [`linalg`]: the dense matrix substrate and a counter-based seeded RNG,
//! - [`filter`]: gating, slot fusion and the low-rank reconstruction `A·B`,
//! - [`loss`]: the per-slot log-likelihood, the orthogonal loss and exact
//!   reverse-mode gradients, plus [`gradcheck`] to validate them,
//! - [`mdl`]: reconstruction losses, description lengths and the MDL
//!   generalization bound,
//! - [`trainer`]: synthetic planted-cluster data, a momentum-GD training loop
//!   and the compactness / separability / purity metrics,
//! - [`scaling`]: power-law and saturation-curve fitting, empirical MDL
//!   inference and slot-count cost models.
//!
//! The crate is `no_std` and only needs `alloc`. Every transcendental function
//! goes through `libm`, so results are bit-identical across platforms.
#![cfg_attr(not(test), no_std)]
// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod filter;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod mdl;
pub mod scaling;
pub mod trainer;

pub use error::{Error, Result};
pub use filter::{AllocatorParams, FilterConfig, ForwardOutput, GatingOutput, SlotOutput};
pub use linalg::{Matrix, RngState};
pub use loss::{GradientBundle, LossBreakdown, LossParams};
