//! PAC-Bayes learning objectives and certified bound values.
//!
//! Training objectives pair a regularized empirical risk with a KL
//! complexity term, `R̂(π_Q) + KL(Q‖P)/(λ N_k)`; the `log(1/δ)` slack is a
//! constant in `Q` and only enters reported bound values. For the adjusted
//! estimator the certified bound additionally carries the policy-independent
//! correction `Ĉ` and the deployment-weighted behavior risks.

use alloc::vec::Vec;

use num_traits::Float;

use crate::estimators::{c_hat_term, empirical_risk, LogDataset, RegularizerSpec};
use crate::math::Matrix;
use crate::policy::{kl_gaussian, GaussianPolicyParams, Propensities, PropensityConfig};
use crate::seeding;
use crate::{CoreError, Result};

/// Everything needed to evaluate an objective or bound on a dataset.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    pub estimator: RegularizerSpec,
    /// Smoothing/temperature parameter; must match the estimator's λ when
    /// it has one (it also scales the KL term).
    pub lambda: f64,
    /// PAC-Bayes prior (the initial policy for the sequential learners).
    pub prior: GaussianPolicyParams,
    /// Confidence level for bound values.
    pub delta: f64,
    /// Whether adjusted bound reports include the `Ĉ` correction. Training
    /// objectives never include it (it is constant in `Q`). Dropping it
    /// from reports shows the uncorrected pieces but voids the certificate.
    pub include_c_hat: bool,
    pub propensity: PropensityConfig,
}

impl ObjectiveSpec {
    pub const DEFAULT_DELTA: f64 = 0.05;

    pub fn ls(lambda: f64, prior: GaussianPolicyParams, propensity: PropensityConfig) -> Self {
        ObjectiveSpec {
            estimator: RegularizerSpec::Ls { lambda },
            lambda,
            prior,
            delta: Self::DEFAULT_DELTA,
            include_c_hat: true,
            propensity,
        }
    }

    pub fn adj_ls(lambda: f64, prior: GaussianPolicyParams, propensity: PropensityConfig) -> Self {
        ObjectiveSpec {
            estimator: RegularizerSpec::AdjLs { lambda },
            lambda,
            prior,
            delta: Self::DEFAULT_DELTA,
            include_c_hat: true,
            propensity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.propensity.validate()?;
        if let Some(l) = self.estimator.lambda() {
            if l != self.lambda {
                return Err(CoreError::InvalidArgument {
                    what: "objective lambda",
                    detail: alloc::format!(
                        "spec lambda {} disagrees with estimator lambda {l}",
                        self.lambda
                    ),
                });
            }
        } else if !(self.lambda > 0.0) {
            return Err(CoreError::LambdaOutOfRange { lambda: self.lambda, kind: "objective" });
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(CoreError::InvalidArgument {
                what: "delta",
                detail: alloc::format!("must lie in (0, 1], got {}", self.delta),
            });
        }
        Ok(())
    }
}

/// Reusable evaluator binding a dataset to an objective. Owns the
/// propensity scratch space so epoch loops do not reallocate; build one per
/// thread.
pub struct DatasetObjective<'a> {
    dataset: &'a LogDataset,
    spec: &'a ObjectiveSpec,
    eval: Propensities,
    /// Distinguishes noise streams of different optimization contexts
    /// (the learner passes the round index).
    noise_tag: u64,
}

impl<'a> DatasetObjective<'a> {
    pub fn new(dataset: &'a LogDataset, spec: &'a ObjectiveSpec, noise_tag: u64) -> Result<Self> {
        spec.validate()?;
        if dataset.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        Ok(DatasetObjective { dataset, spec, eval: Propensities::new(&spec.propensity)?, noise_tag })
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    fn noise_key(&self, epoch: u64, idx: usize) -> u64 {
        seeding::mix(&[seeding::stream::PROPENSITY_NOISE, self.noise_tag, epoch, idx as u64])
    }

    /// Target propensities `π_Q(a_i|x_i)` for every record, with per-record
    /// common-random-number streams keyed by `(noise_tag, epoch, index)`.
    pub fn target_propensities(
        &mut self,
        q: &GaussianPolicyParams,
        epoch: u64,
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dataset.len());
        for (idx, rec) in self.dataset.records().iter().enumerate() {
            let key = self.noise_key(epoch, idx);
            out.push(self.eval.value(q, &rec.context, rec.action, key)?);
        }
        Ok(out)
    }

    /// Full objective: empirical risk plus `KL(Q‖P)/(λ N_k)`.
    pub fn value(&mut self, q: &GaussianPolicyParams, epoch: u64) -> Result<f64> {
        let props = self.target_propensities(q, epoch)?;
        let emp = empirical_risk(&self.spec.estimator, self.dataset, &props)?;
        Ok(emp + self.kl_term(q)?)
    }

    fn kl_term(&self, q: &GaussianPolicyParams) -> Result<f64> {
        Ok(kl_gaussian(q, &self.spec.prior)?
            / (self.spec.lambda * self.dataset.len() as f64))
    }

    /// Gradient over `μ` and objective value for one minibatch. The risk
    /// part averages over the batch (an unbiased estimate of the full mean);
    /// the KL term always enters at full weight.
    pub fn value_and_grad(
        &mut self,
        q: &GaussianPolicyParams,
        batch: &[usize],
        epoch: u64,
    ) -> Result<(Matrix, f64)> {
        if batch.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        let records = self.dataset.records();
        let mut grad = Matrix::zeros(q.num_actions(), q.dim());
        let mut risk = 0.0;
        for &idx in batch {
            let rec = &records[idx];
            let key = self.noise_key(epoch, idx);
            let (p, coeffs) = self.eval.value_and_coeffs(q, &rec.context, rec.action, key)?;
            // h is linear in p, so ∂h/∂p = h(1, q_i, c_i).
            let h_unit = self.spec.estimator.h_unit(rec.logged_propensity, rec.cost);
            risk += p * h_unit;
            for (b, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let scale = h_unit * c;
                for (g, &xv) in grad.row_mut(b).iter_mut().zip(rec.context.iter()) {
                    *g += scale * xv;
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grad.scale(inv);
        risk *= inv;
        // KL gradient: (μ_q - μ_p) / (σ_p² λ N_k).
        let kl_scale =
            1.0 / (self.spec.prior.sigma * self.spec.prior.sigma * self.spec.lambda * self.dataset.len() as f64);
        let mut kl_grad = q.mu.clone();
        kl_grad.axpy(-1.0, &self.spec.prior.mu);
        grad.axpy(kl_scale, &kl_grad);
        Ok((grad, risk + self.kl_term(q)?))
    }
}

/// The SeqLS training objective `R̂^{λ-LS} + KL(Q‖P)/(λ N_k)`.
pub fn ls_objective(
    dataset: &LogDataset,
    q: &GaussianPolicyParams,
    spec: &ObjectiveSpec,
) -> Result<f64> {
    expect_kind(spec, Kind::Ls)?;
    objective_value(dataset, q, spec)
}

/// The SeqAdjLS training objective `R̂^{λ-adj} + KL(Q‖P)/(λ N_k)`.
pub fn adj_objective(
    dataset: &LogDataset,
    q: &GaussianPolicyParams,
    spec: &ObjectiveSpec,
) -> Result<f64> {
    expect_kind(spec, Kind::AdjLs)?;
    objective_value(dataset, q, spec)
}

/// Objective for any estimator kind: empirical risk + `KL/(λ N_k)`.
pub fn objective_value(
    dataset: &LogDataset,
    q: &GaussianPolicyParams,
    spec: &ObjectiveSpec,
) -> Result<f64> {
    DatasetObjective::new(dataset, spec, 0)?.value(q, 0)
}

/// Full-batch gradient of the objective over `μ`.
pub fn objective_grad(
    dataset: &LogDataset,
    q: &GaussianPolicyParams,
    spec: &ObjectiveSpec,
) -> Result<Matrix> {
    let mut obj = DatasetObjective::new(dataset, spec, 0)?;
    let idxs: Vec<usize> = (0..dataset.len()).collect();
    Ok(obj.value_and_grad(q, &idxs, 0)?.0)
}

/// Certified upper bound on (a reference point of) the risk of `π_Q`.
///
/// - LS kind: `R(π_Q) ≤ R̂^{λ-LS} + (KL + log(1/δ))/(λ N_k)`.
/// - Adjusted kind: `R(π_Q) ≤ Σ_j (n_j/N_k) R(π_j) + R̂^{λ-adj} + Ĉ +
///   (KL + log(1/δ))/(λ N_k)`; `behavior_risks` must supply the oracle risk
///   of each deployed round policy (diagnostics input).
pub fn bound_value(
    dataset: &LogDataset,
    q: &GaussianPolicyParams,
    spec: &ObjectiveSpec,
    behavior_risks: Option<&[f64]>,
) -> Result<f64> {
    spec.validate()?;
    let mut obj = DatasetObjective::new(dataset, spec, 0)?;
    let props = obj.target_propensities(q, 0)?;
    let emp = empirical_risk(&spec.estimator, dataset, &props)?;
    let n = dataset.len() as f64;
    let slack = (kl_gaussian(q, &spec.prior)? + (1.0 / spec.delta).ln()) / (spec.lambda * n);
    match spec.estimator {
        RegularizerSpec::Ls { .. } => Ok(emp + slack),
        RegularizerSpec::AdjLs { lambda } => {
            let risks = behavior_risks.ok_or(CoreError::MissingPerRecordInput {
                expected: dataset.num_rounds(),
                got: 0,
            })?;
            if risks.len() != dataset.num_rounds() {
                return Err(CoreError::MissingPerRecordInput {
                    expected: dataset.num_rounds(),
                    got: risks.len(),
                });
            }
            let weighted: f64 = dataset
                .round_sizes()
                .iter()
                .zip(risks.iter())
                .map(|(&nj, &r)| nj as f64 / n * r)
                .sum();
            let correction = if spec.include_c_hat { c_hat_term(dataset, lambda)? } else { 0.0 };
            Ok(weighted + emp + correction + slack)
        }
        _ => Err(CoreError::InvalidArgument {
            what: "bound estimator",
            detail: "certified bounds exist for the ls and adj_ls kinds only".into(),
        }),
    }
}

enum Kind {
    Ls,
    AdjLs,
}

fn expect_kind(spec: &ObjectiveSpec, kind: Kind) -> Result<()> {
    let ok = matches!(
        (&spec.estimator, kind),
        (RegularizerSpec::Ls { .. }, Kind::Ls) | (RegularizerSpec::AdjLs { .. }, Kind::AdjLs)
    );
    if ok {
        Ok(())
    } else {
        Err(CoreError::InvalidArgument {
            what: "estimator kind",
            detail: "objective called with a mismatched estimator".into(),
        })
    }
}
