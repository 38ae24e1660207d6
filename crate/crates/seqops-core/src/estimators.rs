//! The regularized-IPS estimator family.
//!
//! Every estimator here is a choice of regularizer `h(p, q, c)` applied per
//! logged record, where `p` is the target policy's propensity, `q` the
//! frozen logged propensity and `c ∈ [-1, 0]` the cost. The family contract
//! is `pc/q ≤ h(p, q, c) ≤ 0`: vanilla IPS sits at the lower edge, the
//! smoothed members trade upward bias for concentration. All four kinds are
//! linear in `p`, which the gradient code exploits.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use crate::env::LoggedInteraction;
use crate::{CoreError, Result};

/// Which regularizer `h(p, q, c)` to apply, with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerSpec {
    /// `h = pc/q`, the unbiased inverse-propensity estimator.
    Ips,
    /// `h = p · max(c/q, -M)`: importance weights clipped at `M ≥ 1`.
    ClippedIps { max_weight: f64 },
    /// Logarithmic smoothing `h = -(p/λ) log(1 - λc/q)`, `λ > 0`.
    Ls { lambda: f64 },
    /// Adjusted logarithmic smoothing
    /// `h = -(p/λ) log(1 - λc/(q(1 + λc)))`, `λ ∈ (0, 1)` so that
    /// `1 + λc > 0` for all admissible costs.
    AdjLs { lambda: f64 },
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegularizerSpec::Ips => Ok(()),
            RegularizerSpec::ClippedIps { max_weight } => {
                if max_weight >= 1.0 && max_weight.is_finite() {
                    Ok(())
                } else {
                    Err(CoreError::InvalidArgument {
                        what: "clip threshold",
                        detail: format!("need M >= 1, got {max_weight}"),
                    })
                }
            }
            RegularizerSpec::Ls { lambda } => {
                if lambda > 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(CoreError::LambdaOutOfRange { lambda, kind: "ls (needs λ > 0)" })
                }
            }
            RegularizerSpec::AdjLs { lambda } => {
                if lambda > 0.0 && lambda < 1.0 {
                    Ok(())
                } else {
                    Err(CoreError::LambdaOutOfRange { lambda, kind: "adj_ls (needs λ ∈ (0,1))" })
                }
            }
        }
    }

    /// The smoothing parameter, when this kind has one.
    pub fn lambda(&self) -> Option<f64> {
        match *self {
            RegularizerSpec::Ls { lambda } | RegularizerSpec::AdjLs { lambda } => Some(lambda),
            _ => None,
        }
    }

    /// `h(p, q, c)`; validates the regularizer and `q > 0`.
    pub fn h(&self, p: f64, q: f64, c: f64) -> Result<f64> {
        self.validate()?;
        if q <= 0.0 {
            return Err(CoreError::NonPositivePropensity(q));
        }
        Ok(p * self.h_unit(q, c))
    }

    /// `h(1, q, c)`: the per-record value shared by the estimator and its
    /// gradient in `p` (all kinds are linear in `p`). Assumes validated
    /// inputs; the dataset operations check once up front.
    #[inline]
    pub fn h_unit(&self, q: f64, c: f64) -> f64 {
        match *self {
            RegularizerSpec::Ips => c / q,
            RegularizerSpec::ClippedIps { max_weight } => (c / q).max(-max_weight),
            RegularizerSpec::Ls { lambda } => -(-lambda * c / q).ln_1p() / lambda,
            RegularizerSpec::AdjLs { lambda } => {
                -(-lambda * c / (q * (1.0 + lambda * c))).ln_1p() / lambda
            }
        }
    }
}

/// Logged interactions grouped by deployment round, with `N_k` bookkeeping.
///
/// Rounds must be contiguous; cumulative datasets built by the sequential
/// learners start at round 0, while the shifting-context algorithm uses
/// single-round windows that may start anywhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogDataset {
    records: Vec<LoggedInteraction>,
    round_sizes: Vec<usize>,
    first_round: usize,
}

impl LogDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append one round's batch. The batch's round index must extend the
    /// stored rounds contiguously, every logged propensity must be positive
    /// and every cost must lie in `[-1, 0]`.
    pub fn push_round(&mut self, batch: Vec<LoggedInteraction>) -> Result<()> {
        if batch.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        let expected_round = if self.round_sizes.is_empty() {
            batch[0].round
        } else {
            self.first_round + self.round_sizes.len()
        };
        for rec in &batch {
            if rec.round != expected_round {
                return Err(CoreError::InvalidArgument {
                    what: "round index",
                    detail: format!("expected contiguous round {expected_round}, got {}", rec.round),
                });
            }
            if rec.logged_propensity <= 0.0 {
                return Err(CoreError::NonPositivePropensity(rec.logged_propensity));
            }
            if !(-1.0..=0.0).contains(&rec.cost) {
                return Err(CoreError::InvalidArgument {
                    what: "cost",
                    detail: format!("must lie in [-1, 0], got {}", rec.cost),
                });
            }
        }
        if self.round_sizes.is_empty() {
            self.first_round = batch[0].round;
        }
        self.round_sizes.push(batch.len());
        self.records.extend(batch);
        Ok(())
    }

    /// Build from a flat record list (grouped by their `round` fields).
    pub fn from_records(records: Vec<LoggedInteraction>) -> Result<Self> {
        let mut ds = LogDataset::new();
        let mut batch: Vec<LoggedInteraction> = Vec::new();
        for rec in records {
            if let Some(last) = batch.last() {
                if rec.round != last.round {
                    ds.push_round(core::mem::take(&mut batch))?;
                }
            }
            batch.push(rec);
        }
        if !batch.is_empty() {
            ds.push_round(batch)?;
        }
        Ok(ds)
    }

    pub fn records(&self) -> &[LoggedInteraction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_rounds(&self) -> usize {
        self.round_sizes.len()
    }

    pub fn first_round(&self) -> usize {
        self.first_round
    }

    /// Per-round batch sizes `n_j`.
    pub fn round_sizes(&self) -> &[usize] {
        &self.round_sizes
    }

    /// Cumulative sizes `N_k = Σ_{j≤k} n_j`.
    pub fn cumulative_sizes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.round_sizes.len());
        let mut acc = 0;
        for &n in &self.round_sizes {
            acc += n;
            out.push(acc);
        }
        out
    }
}

/// Sequentially-weighted empirical risk
/// `R̂ = (1/N_k) Σ_j Σ_{i∈I_j} h(p_i, q_i, c_i)` with one target propensity
/// `p_i` per record (computed by the caller with its declared propensity
/// configuration) and frozen logged propensities `q_i`.
pub fn empirical_risk(
    spec: &RegularizerSpec,
    dataset: &LogDataset,
    target_propensities: &[f64],
) -> Result<f64> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    if target_propensities.len() != dataset.len() {
        return Err(CoreError::MissingPerRecordInput {
            expected: dataset.len(),
            got: target_propensities.len(),
        });
    }
    let mut total = 0.0;
    for (rec, &p) in dataset.records().iter().zip(target_propensities.iter()) {
        total += p * spec.h_unit(rec.logged_propensity, rec.cost);
    }
    Ok(total / dataset.len() as f64)
}

/// Policy-independent correction term of the adjusted estimator's bound:
/// `Ĉ = (1/N_k) Σ (1/λ) log(1/(1 + λ c_i)) ≥ 0`.
pub fn c_hat_term(dataset: &LogDataset, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(CoreError::LambdaOutOfRange { lambda, kind: "c_hat (needs λ ∈ (0,1))" });
    }
    if dataset.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let total: f64 = dataset
        .records()
        .iter()
        .map(|rec| -(lambda * rec.cost).ln_1p() / lambda)
        .sum();
    Ok(total / dataset.len() as f64)
}
