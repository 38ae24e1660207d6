//! Contextual-bandit environments with exact oracles.
//!
//! Environments follow the multiclass-to-bandit conversion: a label function
//! assigns each context an optimal action `a*(x)`, and costs are Bernoulli
//! with success probability `p = eps + 1[a = a*(x)](1 - 2 eps)`, negated so
//! costs live in `{-1, 0}` and expected costs in `[-1, 0]`. Because the cost
//! model is two-level, every policy's exact risk reduces to the mean
//! propensity it puts on the optimal action, which keeps the oracles cheap.
//!
//! Environments are immutable after construction and safe to share across
//! threads; all sampling takes a caller-owned RNG.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math::{dot, Matrix};
use crate::policy::{GaussianPolicyParams, Propensities, PropensityConfig};
use crate::{CoreError, Result};

/// Default number of held-out contexts used by the risk oracles.
pub const DEFAULT_EVAL_CONTEXTS: usize = 2000;

/// Fraction of a feature/label table held out as oracle contexts.
pub const TABLE_EVAL_FRACTION: f64 = 0.2;

/// Tolerance for propensity rows handed to [`Environment::true_risk`].
pub const RISK_ROW_TOLERANCE: f64 = 1e-3;

/// One logged interaction: the atomic unit of off-policy data.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedInteraction {
    pub context: Vec<f64>,
    pub action: usize,
    /// Realized cost, `-1` or `0` under the Bernoulli model.
    pub cost: f64,
    /// Probability the deployed policy assigned to `action`, frozen at
    /// collection time.
    pub logged_propensity: f64,
    /// Deployment round that produced this record.
    pub round: usize,
}

#[derive(Debug, Clone)]
enum LabelModel {
    /// `a*(x) = argmax_a anchor_a · x` over K random unit anchors.
    Anchors(Matrix),
    /// Labels attached to an explicit context table, keyed by the exact bit
    /// pattern of the context vector.
    Table { index: BTreeMap<Vec<u64>, usize> },
}

#[derive(Debug, Clone)]
enum ContextModel {
    /// Standard Gaussian on `R^d`.
    Gaussian,
    /// Uniform over the training rows of a feature table.
    Rows(Vec<Vec<f64>>),
}

/// Per-round mean translations applied to the context sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSchedule {
    offsets: Vec<Vec<f64>>,
}

impl DriftSchedule {
    /// Explicit per-round mean offsets; `offsets[k]` shifts round `k`.
    pub fn from_offsets(offsets: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        for o in &offsets {
            if o.len() != dim {
                return Err(CoreError::DimensionMismatch { expected: dim, got: o.len() });
            }
        }
        Ok(DriftSchedule { offsets })
    }

    /// Cumulative linear drift: round `k` is shifted by `k * delta`.
    pub fn linear(delta: &[f64], rounds: usize) -> Self {
        let offsets = (0..rounds)
            .map(|k| delta.iter().map(|v| v * k as f64).collect())
            .collect();
        DriftSchedule { offsets }
    }

    /// A schedule of zero offsets (useful to exercise the drift code path).
    pub fn identity(dim: usize, rounds: usize) -> Self {
        DriftSchedule { offsets: alloc::vec![alloc::vec![0.0; dim]; rounds] }
    }

    pub fn rounds(&self) -> usize {
        self.offsets.len()
    }

    fn offset(&self, round: usize) -> Result<&[f64]> {
        self.offsets
            .get(round)
            .map(|v| v.as_slice())
            .ok_or(CoreError::DriftRoundOutOfRange { round, defined: self.offsets.len() })
    }
}

/// Ground-truth cost model, context sampler and exact-risk oracle.
#[derive(Debug, Clone)]
pub struct Environment {
    dim: usize,
    num_actions: usize,
    eps: f64,
    labels: LabelModel,
    contexts: ContextModel,
    drift: Option<DriftSchedule>,
    eval_contexts: Vec<Vec<f64>>,
}

fn bit_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

impl Environment {
    /// Synthetic environment: K random unit anchors define the label
    /// function, contexts are standard Gaussian, eval set of
    /// [`DEFAULT_EVAL_CONTEXTS`] contexts.
    pub fn synthetic(dim: usize, num_actions: usize, eps: f64, seed: u64) -> Result<Self> {
        Self::synthetic_with_eval(dim, num_actions, eps, seed, DEFAULT_EVAL_CONTEXTS)
    }

    /// Synthetic environment with an explicit eval-context count.
    pub fn synthetic_with_eval(
        dim: usize,
        num_actions: usize,
        eps: f64,
        seed: u64,
        eval_contexts: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::InvalidArgument {
                what: "context dimension",
                detail: format!("need d >= 1, got {dim}"),
            });
        }
        if num_actions < 2 {
            return Err(CoreError::InvalidArgument {
                what: "action count",
                detail: format!("need K >= 2, got {num_actions}"),
            });
        }
        check_eps(eps)?;
        let mut rng = crate::seeding::rng_from(&[seed, crate::seeding::stream::ENV_LABELS]);
        let mut anchors = Matrix::zeros(num_actions, dim);
        for a in 0..num_actions {
            let row = anchors.row_mut(a);
            loop {
                let mut norm_sq = 0.0;
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                    norm_sq += *v * *v;
                }
                if norm_sq > 1e-24 {
                    let inv = 1.0 / norm_sq.sqrt();
                    row.iter_mut().for_each(|v| *v *= inv);
                    break;
                }
            }
        }
        let mut eval_rng = crate::seeding::rng_from(&[seed, crate::seeding::stream::ENV_EVAL]);
        let eval = (0..eval_contexts)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut eval_rng)).collect())
            .collect();
        Ok(Environment {
            dim,
            num_actions,
            eps,
            labels: LabelModel::Anchors(anchors),
            contexts: ContextModel::Gaussian,
            drift: None,
            eval_contexts: eval,
        })
    }

    /// Environment backed by parsed feature/label rows (the loader for the
    /// on-disk format lives in the companion crate). The last
    /// `ceil(0.2 n)` rows become the held-out eval contexts; training
    /// contexts are sampled uniformly from the remaining rows.
    pub fn from_feature_rows(rows: Vec<(Vec<f64>, usize)>, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if rows.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        let dim = rows[0].0.len();
        if dim == 0 {
            return Err(CoreError::InvalidArgument {
                what: "feature row",
                detail: "rows must have at least one feature".into(),
            });
        }
        let mut max_label = 0usize;
        for (i, (x, label)) in rows.iter().enumerate() {
            if x.len() != dim {
                return Err(CoreError::InvalidArgument {
                    what: "feature row",
                    detail: format!("row {i} has {} features, expected {dim}", x.len()),
                });
            }
            max_label = max_label.max(*label);
        }
        let num_actions = max_label + 1;
        if num_actions < 2 {
            return Err(CoreError::InvalidArgument {
                what: "label column",
                detail: "need at least two distinct action labels".into(),
            });
        }
        let n = rows.len();
        let eval_size = ((TABLE_EVAL_FRACTION * n as f64).ceil() as usize).max(1);
        let train_size = n - eval_size;
        if train_size == 0 {
            return Err(CoreError::InvalidArgument {
                what: "feature table",
                detail: format!("{n} rows leave no training split after holding out {eval_size}"),
            });
        }
        let mut index = BTreeMap::new();
        for (x, label) in &rows {
            index.insert(bit_key(x), *label);
        }
        let eval_contexts = rows[train_size..].iter().map(|(x, _)| x.clone()).collect();
        let train = rows[..train_size].iter().map(|(x, _)| x.clone()).collect();
        Ok(Environment {
            dim,
            num_actions,
            eps,
            labels: LabelModel::Table { index },
            contexts: ContextModel::Rows(train),
            drift: None,
            eval_contexts,
        })
    }

    /// Attach a per-round context-drift schedule; the cost model is
    /// unchanged. Sampling past the schedule's last round is an error.
    pub fn with_drift(mut self, schedule: DriftSchedule) -> Result<Self> {
        for offsets in &schedule.offsets {
            if offsets.len() != self.dim {
                return Err(CoreError::DimensionMismatch {
                    expected: self.dim,
                    got: offsets.len(),
                });
            }
        }
        self.drift = Some(schedule);
        Ok(self)
    }

    pub fn dim_context(&self) -> usize {
        self.dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn noise_eps(&self) -> f64 {
        self.eps
    }

    pub fn has_drift(&self) -> bool {
        self.drift.is_some()
    }

    pub fn eval_contexts(&self) -> &[Vec<f64>] {
        &self.eval_contexts
    }

    /// The anchor matrix of a synthetic environment (the label function's
    /// parameters), if this environment has one.
    pub fn anchors(&self) -> Option<&Matrix> {
        match &self.labels {
            LabelModel::Anchors(m) => Some(m),
            LabelModel::Table { .. } => None,
        }
    }

    /// Optimal action `a*(x)`; ties broken by lowest index (ties have
    /// probability zero for Gaussian anchors).
    pub fn optimal_action(&self, x: &[f64]) -> Result<usize> {
        match &self.labels {
            LabelModel::Anchors(anchors) => {
                if x.len() != self.dim {
                    return Err(CoreError::DimensionMismatch { expected: self.dim, got: x.len() });
                }
                let mut best = 0;
                let mut best_score = dot(anchors.row(0), x);
                for a in 1..self.num_actions {
                    let s = dot(anchors.row(a), x);
                    if s > best_score {
                        best_score = s;
                        best = a;
                    }
                }
                Ok(best)
            }
            LabelModel::Table { index } => {
                index.get(&bit_key(x)).copied().ok_or(CoreError::UnknownContext)
            }
        }
    }

    /// Probability that action `a` in context `x` yields cost `-1`.
    fn success_probability(&self, x: &[f64], a: usize) -> Result<f64> {
        if a >= self.num_actions {
            return Err(CoreError::ActionOutOfRange { action: a, num_actions: self.num_actions });
        }
        let optimal = self.optimal_action(x)?;
        Ok(if a == optimal { 1.0 - self.eps } else { self.eps })
    }

    /// Exact expected cost `c(a, x) = -(eps + 1[a = a*(x)](1 - 2 eps))`.
    pub fn expected_cost(&self, x: &[f64], a: usize) -> Result<f64> {
        Ok(-self.success_probability(x, a)?)
    }

    /// Draw a Bernoulli cost: `-1` with probability
    /// `eps + 1[a = a*(x)](1 - 2 eps)`, else `0`.
    pub fn sample_cost<R: Rng>(&self, x: &[f64], a: usize, rng: &mut R) -> Result<f64> {
        let p = self.success_probability(x, a)?;
        Ok(if rng.random::<f64>() < p { -1.0 } else { 0.0 })
    }

    /// Sample a context for the given round. Without a drift schedule the
    /// round index is ignored; with one, the round's mean offset is applied
    /// and out-of-schedule rounds are rejected.
    pub fn sample_context<R: Rng>(&self, round: usize, rng: &mut R) -> Result<Vec<f64>> {
        let mut x = match &self.contexts {
            ContextModel::Gaussian => {
                (0..self.dim).map(|_| StandardNormal.sample(rng)).collect::<Vec<f64>>()
            }
            ContextModel::Rows(rows) => rows[rng.random_range(0..rows.len())].clone(),
        };
        if let Some(schedule) = &self.drift {
            let offset = schedule.offset(round)?;
            for (v, o) in x.iter_mut().zip(offset.iter()) {
                *v += o;
            }
        }
        Ok(x)
    }

    /// Exact risk of the policy described by per-eval-context propensity
    /// rows: `(1/|eval|) Σ_x Σ_a π(a|x) c(a, x)`. Rows must align with
    /// [`Environment::eval_contexts`] and each sum to one within
    /// [`RISK_ROW_TOLERANCE`].
    pub fn true_risk(&self, rows: &[Vec<f64>]) -> Result<f64> {
        if rows.len() != self.eval_contexts.len() {
            return Err(CoreError::MissingPerRecordInput {
                expected: self.eval_contexts.len(),
                got: rows.len(),
            });
        }
        let mut total = 0.0;
        for (x, row) in self.eval_contexts.iter().zip(rows.iter()) {
            if row.len() != self.num_actions {
                return Err(CoreError::DimensionMismatch {
                    expected: self.num_actions,
                    got: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > RISK_ROW_TOLERANCE {
                return Err(CoreError::PropensityRowSum { sum, tolerance: RISK_ROW_TOLERANCE });
            }
            let optimal = self.optimal_action(x)?;
            // Σ_a π(a|x) c(a,x) collapses under the two-level cost model.
            total += -self.eps * sum - (1.0 - 2.0 * self.eps) * row[optimal];
        }
        Ok(total / self.eval_contexts.len() as f64)
    }

    /// Per-eval-context propensity of the optimal action under a Gaussian
    /// policy, evaluated by quadrature. This single scan drives the exact
    /// risk, the coverage infimum and the optimal-policy diagnostics.
    pub fn optimal_propensity_scan(
        &self,
        params: &GaussianPolicyParams,
        num_nodes: usize,
    ) -> Result<OptimalPropensityScan> {
        let cfg = PropensityConfig::quadrature(num_nodes);
        let mut eval = Propensities::new(&cfg)?;
        let mut per_context = Vec::with_capacity(self.eval_contexts.len());
        for x in &self.eval_contexts {
            let a_star = self.optimal_action(x)?;
            per_context.push(eval.value(params, x, a_star, 0)?);
        }
        let mean = per_context.iter().sum::<f64>() / per_context.len().max(1) as f64;
        let min = per_context.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(OptimalPropensityScan { per_context, mean, min })
    }

    /// Exact risk of a Gaussian policy via the optimal-propensity scan:
    /// `R = -eps - (1 - 2 eps) E_x[π(a*(x)|x)]`.
    pub fn true_risk_gaussian(&self, params: &GaussianPolicyParams, num_nodes: usize) -> Result<f64> {
        let scan = self.optimal_propensity_scan(params, num_nodes)?;
        Ok(self.risk_from_mean_optimal_propensity(scan.mean))
    }

    /// Risk implied by a mean optimal-action propensity.
    pub fn risk_from_mean_optimal_propensity(&self, mean_opt: f64) -> f64 {
        -self.eps - (1.0 - 2.0 * self.eps) * mean_opt
    }

    /// Exact risk of the deterministic policy `d_θ` given by the argmax of
    /// `params.mu` scores.
    pub fn true_risk_deterministic(&self, params: &GaussianPolicyParams) -> Result<f64> {
        let mut total = 0.0;
        for x in &self.eval_contexts {
            let a = crate::policy::deterministic_action(params, x)?;
            total += self.expected_cost(x, a)?;
        }
        Ok(total / self.eval_contexts.len() as f64)
    }

    /// Risk of the optimal policy, `-(1 - eps)`.
    pub fn optimal_risk(&self) -> f64 {
        -(1.0 - self.eps)
    }

    /// Risk of the uniform policy, `-((1-eps)/K + (K-1) eps / K)`.
    pub fn uniform_risk(&self) -> f64 {
        let k = self.num_actions as f64;
        -((1.0 - self.eps) / k + (k - 1.0) * self.eps / k)
    }

    /// Draw a supervised set of `(context, optimal label)` pairs from the
    /// base (round-0, undrifted) context distribution.
    pub fn supervised_set<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<(Vec<f64>, usize)>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let x = match &self.contexts {
                ContextModel::Gaussian => {
                    (0..self.dim).map(|_| StandardNormal.sample(rng)).collect::<Vec<f64>>()
                }
                ContextModel::Rows(rows) => rows[rng.random_range(0..rows.len())].clone(),
            };
            let label = self.optimal_action(&x)?;
            out.push((x, label));
        }
        Ok(out)
    }
}

/// Result of [`Environment::optimal_propensity_scan`].
#[derive(Debug, Clone)]
pub struct OptimalPropensityScan {
    /// `π(a*(x)|x)` for each eval context.
    pub per_context: Vec<f64>,
    pub mean: f64,
    /// The coverage infimum `C* = min_x π(a*(x)|x)` over eval contexts.
    pub min: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..0.5).contains(&eps) {
        return Err(CoreError::NoiseOutOfRange(eps));
    }
    Ok(())
}
