//! Sequential off-policy learning for contextual bandits.
//!
//! This crate implements the full deploy–log–retrain loop for learning
//! policies from logged bandit feedback:
//!
//! - [`env`] — synthetic and table-backed bandit environments built from the
//!   multiclass-to-bandit conversion, with exact risk oracles.
//! - [`policy`] — linear Gaussian policies: action sampling, propensities
//!   (Monte Carlo and Gauss–Hermite quadrature), analytic gradients, KL.
//! - [`estimators`] — the regularized-IPS family `h(p, q, c)`: IPS, clipped
//!   IPS, logarithmic smoothing (LS) and adjusted LS, plus dataset risks.
//! - [`objectives`] — PAC-Bayes learning objectives and certified bound
//!   values assembled from empirical risks and KL terms.
//! - [`optimizer`] — a self-contained Adam loop with reproducible noise.
//! - [`learner`] — the sequential algorithms (SeqLS, SeqAdjLS, the
//!   chained-prior variant for drifting contexts, the SCRM baseline) and the
//!   λ schedules that come with their guarantees.
//! - [`diagnostics`] — oracle computation of the theory quantities
//!   (pseudo-variance, L, coverage, margin quantiles, γ) and empirical
//!   verification of the acceleration inequality.
//!
//! The crate is `no_std` + `alloc`: all file formats, CLI plumbing and
//! wall-clock timing live in the `seqops` companion crate. Sampling always
//! takes an explicit RNG or seed owned by the caller; there is no hidden
//! global state.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod diagnostics;
pub mod env;
pub mod estimators;
pub mod learner;
pub mod math;
pub mod objectives;
pub mod optimizer;
pub mod policy;
pub mod seeding;

mod error;

pub use error::{CoreError, Result};

/// Wall-clock source injected into the learner loops.
///
/// The core crate cannot read time; callers that want per-round timings in
/// a [`learner::RunTrace`] supply a clock (the `seqops` crate provides one
/// backed by `std::time::Instant`). [`NullClock`] reports zero and keeps
/// runs bit-for-bit reproducible.
pub trait Clock {
    /// Milliseconds elapsed since an arbitrary fixed origin.
    fn now_ms(&self) -> u64;
}

/// A clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ms(&self) -> u64 {
        0
    }
}
