//! Spectral-edge predictions for random symmetric matrices with a variance
//! profile.
//!
//! The crate is organised bottom-up:
//!
//! * [`profiles`] and [`graphon`] describe variance profiles `s_ij^(N)` and the
//!   kernels on `[0,1]^2` they induce;
//! * [`trees`] enumerates plane trees and classifies index cycles of the trace
//!   expansion;
//! * [`moments`] turns a kernel into even moments `m_2k = sum_T t(T, W)` and an
//!   estimate of the right edge of the limiting spectral measure, and carries
//!   the exact toy-scale identities of the trace expansion;
//! * [`sampler`] draws matrices `Sigma ⊙ A'` with counter-based per-entry
//!   streams;
//! * [`spectra`] computes operator norms and empirical spectral distributions;
//! * [`checkers`] evaluates the structural conditions (tail conditions,
//!   doubling inequality, L1 convergence rate, partition geometry) on concrete
//!   inputs.
//!
//! Data-parallel loops go through [`exec::Exec`]; with the `parallel` feature
//! disabled every loop runs sequentially and produces bit-identical results.

// `!(x > 0.0)` is used on purpose to reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkers;
pub mod error;
pub mod exec;
pub mod graphon;
pub mod moments;
pub mod profiles;
pub mod sampler;
pub mod spectra;
pub mod trees;

pub use error::{Error, Result};
pub use exec::Exec;
pub use graphon::{Graphon, GraphonKernel, StepGraphon};
pub use profiles::{Kernel, ProfileSpec, RectProfile, StepProfile, VarianceMatrix};
pub use sampler::EntryDistribution;
pub use trees::OrderedTree;

/// Schema version stamped into every JSON document the crate emits.
pub const SCHEMA_VERSION: u32 = 1;
