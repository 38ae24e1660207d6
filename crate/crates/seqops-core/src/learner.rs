//! Sequential deploy–collect–retrain loops.
//!
//! Four learners share the same skeleton — deploy the current policy,
//! log a batch with frozen propensities, retrain, repeat:
//!
//! - `SeqLs`: cumulative data, LS objective, prior fixed at π_0.
//! - `SeqAdjLs`: cumulative data, adjusted-LS objective (λ ∈ (0,1)),
//!   prior fixed at π_0, supports non-uniform batch sizes.
//! - `NonIidLs`: shifting context distributions; trains on the latest
//!   batch only with the prior chained to the previous posterior.
//! - `Scrm`: baseline with exponentially growing batches trained on the
//!   most recent batch via clipped IPS plus an empirical variance penalty.
//! - `BatchLs`: the one-shot procedure; `SeqLs` with a single round must
//!   reproduce it bit for bit.
//!
//! Every stream of randomness is keyed by `(seed, purpose, round, ...)`, so
//! traces are reproducible and independent runs can execute concurrently.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use crate::env::{Environment, LoggedInteraction};
use crate::estimators::{c_hat_term, empirical_risk, LogDataset, RegularizerSpec};
use crate::math::Matrix;
use crate::objectives::{DatasetObjective, ObjectiveSpec};
use crate::optimizer::{minimize, OptimizerConfig};
use crate::policy::{
    kl_gaussian, sample_action, GaussianPolicyParams, Propensities, PropensityConfig,
};
use crate::seeding::{self, stream};
use crate::{Clock, CoreError, Result};

/// Floor applied to logged propensities so the importance-weight
/// denominator stays positive even when a Monte Carlo estimate underflows.
pub const MIN_LOGGED_PROPENSITY: f64 = 1e-12;

/// λ substituted when a schedule emits a value ≥ 1 for the adjusted
/// estimator (which requires λ < 1); each substitution is recorded.
pub const ADJ_LAMBDA_CLAMP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    SeqLs,
    SeqAdjLs,
    NonIidLs,
    Scrm,
    BatchLs,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::SeqLs => "seq_ls",
            Algorithm::SeqAdjLs => "seq_adj_ls",
            Algorithm::NonIidLs => "noniid_ls",
            Algorithm::Scrm => "scrm",
            Algorithm::BatchLs => "batch_ls",
        }
    }
}

/// Per-round interaction budgets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatchSchedule {
    Uniform { per_round: usize },
    Explicit(Vec<usize>),
}

/// How λ is set each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Fixed(f64),
    /// `λ = 1/√m` (the per-run experimental default).
    InvSqrtM,
    /// `λ = 1/√((k+1) m)`, evaluated at the current round.
    InvSqrtKm,
    /// `λ_m = (1-α)/(8 γ √m)` for the uniform-batch accelerated rate.
    Thm44 { alpha: f64, gamma: f64 },
    /// `λ = 1/(1 + 2^{2+α} γ β₁ β₂ B(α))`, `B(α) = 1/(1-α)`, for varying
    /// batch sizes.
    Cor45 { alpha: f64, gamma: f64, beta1: f64, beta2: f64 },
}

/// Evaluate a λ rule for batch size `m` at round `k`.
pub fn lambda_schedule(rule: &LambdaRule, m: usize, k: usize) -> Result<f64> {
    if m == 0 {
        return Err(CoreError::InvalidArgument {
            what: "batch size",
            detail: "lambda schedules need m >= 1".into(),
        });
    }
    let mf = m as f64;
    let lambda = match *rule {
        LambdaRule::Fixed(l) => l,
        LambdaRule::InvSqrtM => 1.0 / mf.sqrt(),
        LambdaRule::InvSqrtKm => 1.0 / ((k as f64 + 1.0) * mf).sqrt(),
        LambdaRule::Thm44 { alpha, gamma } => {
            check_alpha_gamma(alpha, gamma)?;
            (1.0 - alpha) / (8.0 * gamma * mf.sqrt())
        }
        LambdaRule::Cor45 { alpha, gamma, beta1, beta2 } => {
            check_alpha_gamma(alpha, gamma)?;
            let b = 1.0 / (1.0 - alpha);
            1.0 / (1.0 + (2.0f64).powf(2.0 + alpha) * gamma * beta1 * beta2 * b)
        }
    };
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(CoreError::LambdaOutOfRange { lambda, kind: "schedule" });
    }
    Ok(lambda)
}

fn check_alpha_gamma(alpha: f64, gamma: f64) -> result_alias::R {
    if !(0.0..1.0).contains(&alpha) {
        return Err(CoreError::InvalidArgument {
            what: "alpha",
            detail: format!("rate exponent must lie in [0, 1), got {alpha}"),
        });
    }
    if !(gamma > 0.0) {
        return Err(CoreError::InvalidArgument {
            what: "gamma",
            detail: format!("acceleration constant must be positive, got {gamma}"),
        });
    }
    Ok(())
}

mod result_alias {
    pub type R = crate::Result<()>;
}

/// Configuration of one learning run.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// Number of deployment rounds `k_max`.
    pub rounds: usize,
    pub batches: BatchSchedule,
    pub lambda_rule: LambdaRule,
    pub optimizer: OptimizerConfig,
    /// π_0: the initial behavior policy and the PAC-Bayes prior.
    pub prior_policy: GaussianPolicyParams,
    /// Shared posterior scale; must match `prior_policy.sigma`.
    pub sigma: f64,
    /// Propensity evaluation used for training (and for freezing logged
    /// propensities at collection time). Reported risks always use
    /// quadrature with `propensity.num_nodes` nodes.
    pub propensity: PropensityConfig,
    pub delta: f64,
    /// Initialize each round at the previous posterior mean instead of at
    /// the prior.
    pub warm_start: bool,
    /// Clip threshold for the SCRM baseline's estimator.
    pub clip_max_weight: f64,
    /// Total interaction budget; required by SCRM, which derives its
    /// doubling schedule from it.
    pub total_budget: Option<usize>,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn new(
        algorithm: Algorithm,
        rounds: usize,
        batches: BatchSchedule,
        lambda_rule: LambdaRule,
        prior_policy: GaussianPolicyParams,
        propensity: PropensityConfig,
        seed: u64,
    ) -> Self {
        let sigma = prior_policy.sigma;
        LearnerConfig {
            algorithm,
            rounds,
            batches,
            lambda_rule,
            optimizer: OptimizerConfig::default(),
            prior_policy,
            sigma,
            propensity,
            delta: ObjectiveSpec::DEFAULT_DELTA,
            warm_start: true,
            clip_max_weight: 10.0,
            total_budget: None,
            seed,
        }
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        if self.rounds == 0 {
            return Err(CoreError::InvalidArgument {
                what: "rounds",
                detail: "need at least one round".into(),
            });
        }
        if self.algorithm == Algorithm::BatchLs && self.rounds != 1 {
            return Err(CoreError::InvalidArgument {
                what: "rounds",
                detail: "batch_ls is the single-round procedure; set rounds = 1".into(),
            });
        }
        if self.prior_policy.num_actions() != env.num_actions()
            || self.prior_policy.dim() != env.dim_context()
        {
            return Err(CoreError::DimensionMismatch {
                expected: env.num_actions() * env.dim_context(),
                got: self.prior_policy.num_actions() * self.prior_policy.dim(),
            });
        }
        if self.sigma != self.prior_policy.sigma {
            return Err(CoreError::InvalidArgument {
                what: "sigma",
                detail: format!(
                    "config sigma {} disagrees with prior policy sigma {}",
                    self.sigma, self.prior_policy.sigma
                ),
            });
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(CoreError::InvalidArgument {
                what: "delta",
                detail: format!("must lie in (0, 1], got {}", self.delta),
            });
        }
        self.optimizer.validate()?;
        self.propensity.validate()?;
        match &self.batches {
            BatchSchedule::Uniform { per_round } => {
                if *per_round == 0 {
                    return Err(CoreError::InvalidArgument {
                        what: "batch size",
                        detail: "uniform batch size must be positive".into(),
                    });
                }
            }
            BatchSchedule::Explicit(sizes) => {
                if sizes.len() != self.rounds || sizes.iter().any(|&n| n == 0) {
                    return Err(CoreError::InvalidArgument {
                        what: "batch sizes",
                        detail: format!(
                            "need {} positive sizes, got {:?}",
                            self.rounds, sizes
                        ),
                    });
                }
                if self.algorithm == Algorithm::NonIidLs {
                    return Err(CoreError::InvalidArgument {
                        what: "batch sizes",
                        detail: "noniid_ls assumes uniform sub-batches".into(),
                    });
                }
            }
        }
        if self.algorithm == Algorithm::Scrm && self.total_budget.is_none() {
            return Err(CoreError::InvalidArgument {
                what: "total budget",
                detail: "scrm derives its doubling schedule from a total budget".into(),
            });
        }
        if self.algorithm == Algorithm::NonIidLs && !env.has_drift() {
            return Err(CoreError::InvalidArgument {
                what: "environment",
                detail: "noniid_ls expects a drift schedule (identity drift for the stationary case)"
                    .into(),
            });
        }
        Ok(())
    }

    /// Per-round batch sizes the run will use (SCRM uses its own schedule).
    pub fn planned_batches(&self) -> Vec<usize> {
        match &self.batches {
            BatchSchedule::Uniform { per_round } => alloc::vec![*per_round; self.rounds],
            BatchSchedule::Explicit(sizes) => sizes.clone(),
        }
    }
}

/// SCRM's doubling schedule: `n_j = n_0 2^j` with `n_0 = ceil(N / 2^k)`,
/// truncated so the cumulative count never exceeds the budget `N`.
pub fn scrm_schedule(total: usize, rounds: usize) -> Result<Vec<usize>> {
    if total == 0 || rounds == 0 || rounds > 40 {
        return Err(CoreError::InvalidArgument {
            what: "scrm schedule",
            detail: format!("need total >= 1 and 1 <= rounds <= 40, got N={total}, k={rounds}"),
        });
    }
    let pow = 1usize << rounds;
    let n0 = total.div_ceil(pow);
    let mut spent = 0usize;
    let mut sizes = Vec::with_capacity(rounds);
    for j in 0..rounds {
        let planned = n0 << j;
        let remaining = total - spent;
        let n = planned.min(remaining);
        sizes.push(n);
        spent += n;
    }
    Ok(sizes)
}

/// λ substitution event (requested value was invalid for the estimator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaClamp {
    pub round: usize,
    pub requested: f64,
    pub used: f64,
}

/// Metrics for one policy in the deployment sequence. Record `j` describes
/// π_j: its oracle risk and coverage, plus the round that produced it
/// (`batch_collected` records consumed, λ used, empirical risk, KL against
/// the round's prior, certified bound). Record 0 is the initial policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Interactions collected in the round that trained this policy.
    pub batch_collected: usize,
    /// Total records the policy was trained on (`N_k`).
    pub cumulative: usize,
    pub lambda: Option<f64>,
    /// Oracle risk `R(π_j)` from the environment's eval contexts.
    pub true_risk: f64,
    pub emp_risk: Option<f64>,
    pub kl: f64,
    pub bound: Option<f64>,
    /// Coverage of the optimal actions, `min_x π(a*(x)|x)`.
    pub cstar: f64,
    pub wall_ms: u64,
}

/// Full output of a learning run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub records: Vec<RoundRecord>,
    /// π_0 ..= π_{k_max}, aligned with `records`.
    pub policies: Vec<GaussianPolicyParams>,
    /// All collected interactions (cumulative algorithms) or the union of
    /// the per-round windows (latest-batch algorithms).
    pub dataset: LogDataset,
    pub clamps: Vec<LambdaClamp>,
}

impl RunTrace {
    pub fn final_policy(&self) -> &GaussianPolicyParams {
        self.policies.last().expect("trace holds at least the initial policy")
    }

    pub fn final_risk(&self) -> f64 {
        self.records.last().expect("trace holds at least one record").true_risk
    }
}

/// Run the configured algorithm.
pub fn run<C: Clock>(env: &Environment, cfg: &LearnerConfig, clock: &C) -> Result<RunTrace> {
    match cfg.algorithm {
        Algorithm::SeqLs => run_seq_ls(env, cfg, clock),
        Algorithm::SeqAdjLs => run_seq_adj_ls(env, cfg, clock),
        Algorithm::NonIidLs => run_noniid_ls(env, cfg, clock),
        Algorithm::Scrm => run_scrm(env, cfg, clock),
        Algorithm::BatchLs => run_batch_ls(env, cfg, clock),
    }
}

/// Sequential policy learning with the LS objective on cumulative data.
pub fn run_seq_ls<C: Clock>(env: &Environment, cfg: &LearnerConfig, clock: &C) -> Result<RunTrace> {
    run_seq_core(env, cfg, clock, false, Algorithm::SeqLs)
}

/// Sequential policy learning with the adjusted-LS objective.
pub fn run_seq_adj_ls<C: Clock>(
    env: &Environment,
    cfg: &LearnerConfig,
    clock: &C,
) -> Result<RunTrace> {
    run_seq_core(env, cfg, clock, true, Algorithm::SeqAdjLs)
}

fn run_seq_core<C: Clock>(
    env: &Environment,
    cfg: &LearnerConfig,
    clock: &C,
    adjusted: bool,
    tag: Algorithm,
) -> Result<RunTrace> {
    cfg.validate(env)?;
    let report_nodes = cfg.propensity.num_nodes;
    let planned = cfg.planned_batches();
    let mut trace = trace_with_initial(env, cfg, tag)?;
    let mut dataset = LogDataset::new();
    let mut current = cfg.prior_policy.clone();
    for round in 0..cfg.rounds {
        let t0 = clock.now_ms();
        let (lambda, clamp) = round_lambda(cfg, &planned, round, adjusted)?;
        if let Some(c) = clamp {
            trace.clamps.push(c);
        }
        let batch = collect_batch(env, cfg, &current, round, planned[round], dataset.len())?;
        dataset.push_round(batch)?;

        let estimator = if adjusted {
            RegularizerSpec::AdjLs { lambda }
        } else {
            RegularizerSpec::Ls { lambda }
        };
        let train_spec = ObjectiveSpec {
            estimator,
            lambda,
            prior: cfg.prior_policy.clone(),
            delta: cfg.delta,
            include_c_hat: true,
            propensity: cfg.propensity,
        };
        current = optimize_round(cfg, &dataset, &train_spec, &current, round)?;

        let record = report_round(
            env,
            cfg,
            &dataset,
            &current,
            &train_spec,
            round,
            report_nodes,
            if adjusted { Some(&trace.records) } else { None },
        )?;
        trace.policies.push(current.clone());
        trace.records.push(RoundRecord { wall_ms: clock.now_ms().saturating_sub(t0), ..record });
    }
    trace.dataset = dataset;
    Ok(trace)
}

/// The one-shot batch procedure: collect the whole budget with π_0 and
/// optimize the LS objective once. A single-round `SeqLs` run with the same
/// seed reproduces this output bit for bit.
pub fn run_batch_ls<C: Clock>(
    env: &Environment,
    cfg: &LearnerConfig,
    clock: &C,
) -> Result<RunTrace> {
    cfg.validate(env)?;
    let planned = cfg.planned_batches();
    let mut trace = trace_with_initial(env, cfg, Algorithm::BatchLs)?;
    let t0 = clock.now_ms();
    let (lambda, _) = round_lambda(cfg, &planned, 0, false)?;
    let batch = collect_batch(env, cfg, &cfg.prior_policy, 0, planned[0], 0)?;
    let mut dataset = LogDataset::new();
    dataset.push_round(batch)?;
    let train_spec = ObjectiveSpec {
        estimator: RegularizerSpec::Ls { lambda },
        lambda,
        prior: cfg.prior_policy.clone(),
        delta: cfg.delta,
        include_c_hat: true,
        propensity: cfg.propensity,
    };
    let learned = optimize_round(cfg, &dataset, &train_spec, &cfg.prior_policy, 0)?;
    let record = report_round(
        env,
        cfg,
        &dataset,
        &learned,
        &train_spec,
        0,
        cfg.propensity.num_nodes,
        None,
    )?;
    trace.policies.push(learned);
    trace.records.push(RoundRecord { wall_ms: clock.now_ms().saturating_sub(t0), ..record });
    trace.dataset = dataset;
    Ok(trace)
}

/// Shifting-context learner: each round trains on the latest batch only,
/// with the PAC-Bayes prior chained to the previous posterior.
pub fn run_noniid_ls<C: Clock>(
    env: &Environment,
    cfg: &LearnerConfig,
    clock: &C,
) -> Result<RunTrace> {
    cfg.validate(env)?;
    let report_nodes = cfg.propensity.num_nodes;
    let planned = cfg.planned_batches();
    let m = planned[0];
    let mut trace = trace_with_initial(env, cfg, Algorithm::NonIidLs)?;
    let mut all_records = LogDataset::new();
    let mut current = cfg.prior_policy.clone();
    // Running pieces of the chained bound on the average risk:
    // (1/(k+1)) Σ R̂_j + (Σ KL_j + log(1/δ)) / (λ (k+1) m).
    let mut emp_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut collected = 0usize;
    for round in 0..cfg.rounds {
        let t0 = clock.now_ms();
        let lambda = lambda_schedule(&cfg.lambda_rule, m, round)?;
        let batch = collect_batch(env, cfg, &current, round, m, collected)?;
        collected += batch.len();
        let mut window = LogDataset::new();
        window.push_round(batch.clone())?;
        all_records.push_round(batch)?;

        let train_spec = ObjectiveSpec {
            estimator: RegularizerSpec::Ls { lambda },
            lambda,
            prior: current.clone(),
            delta: cfg.delta,
            include_c_hat: true,
            propensity: cfg.propensity,
        };
        let next = optimize_round(cfg, &window, &train_spec, &current, round)?;

        let scan = env.optimal_propensity_scan(&next, report_nodes)?;
        let report_spec =
            ObjectiveSpec { propensity: PropensityConfig::quadrature(report_nodes), ..train_spec };
        let mut robj = DatasetObjective::new(&window, &report_spec, round as u64)?;
        let props = robj.target_propensities(&next, 0)?;
        let emp = empirical_risk(&report_spec.estimator, &window, &props)?;
        let kl = kl_gaussian(&next, &current)?;
        emp_sum += emp;
        kl_sum += kl;
        let rounds_so_far = (round + 1) as f64;
        let bound = emp_sum / rounds_so_far
            + (kl_sum + (1.0 / cfg.delta).ln()) / (lambda * rounds_so_far * m as f64);
        current = next;
        trace.policies.push(current.clone());
        trace.records.push(RoundRecord {
            round: round + 1,
            batch_collected: m,
            cumulative: collected,
            lambda: Some(lambda),
            true_risk: env.risk_from_mean_optimal_propensity(scan.mean),
            emp_risk: Some(emp),
            kl,
            bound: Some(bound),
            cstar: scan.min,
            wall_ms: clock.now_ms().saturating_sub(t0),
        });
    }
    trace.dataset = all_records;
    Ok(trace)
}

/// The SCRM baseline: doubling batches, latest batch only, clipped IPS
/// with an empirical variance penalty scaled by `√(1/n_j)`.
pub fn run_scrm<C: Clock>(env: &Environment, cfg: &LearnerConfig, clock: &C) -> Result<RunTrace> {
    cfg.validate(env)?;
    let total = cfg.total_budget.expect("validated above");
    let sizes = scrm_schedule(total, cfg.rounds)?;
    let report_nodes = cfg.propensity.num_nodes;
    let mut trace = trace_with_initial(env, cfg, Algorithm::Scrm)?;
    let mut all_records = LogDataset::new();
    let mut current = cfg.prior_policy.clone();
    let mut collected = 0usize;
    let estimator = RegularizerSpec::ClippedIps { max_weight: cfg.clip_max_weight };
    for (round, &n) in sizes.iter().enumerate() {
        let t0 = clock.now_ms();
        if n == 0 {
            // Budget exhausted: the policy is carried forward unchanged.
            let scan = env.optimal_propensity_scan(&current, report_nodes)?;
            trace.policies.push(current.clone());
            trace.records.push(RoundRecord {
                round: round + 1,
                batch_collected: 0,
                cumulative: collected,
                lambda: None,
                true_risk: env.risk_from_mean_optimal_propensity(scan.mean),
                emp_risk: None,
                kl: kl_gaussian(&current, &cfg.prior_policy)?,
                bound: None,
                cstar: scan.min,
                wall_ms: clock.now_ms().saturating_sub(t0),
            });
            continue;
        }
        let batch = collect_batch(env, cfg, &current, round, n, collected)?;
        collected += n;
        let mut window = LogDataset::new();
        window.push_round(batch.clone())?;
        all_records.push_round(batch)?;

        let opt_cfg = OptimizerConfig {
            seed: seeding::mix(&[cfg.seed, stream::OPTIMIZER, round as u64]),
            ..cfg.optimizer
        };
        let mut objective = ScrmObjective::new(&window, &estimator, &cfg.propensity, round as u64)?;
        let report = minimize(&current, window.len(), &opt_cfg, |p, batch, epoch| {
            objective.value_and_grad(p, batch, epoch)
        })?;
        current = report.params;

        let scan = env.optimal_propensity_scan(&current, report_nodes)?;
        let mut reval = Propensities::new(&PropensityConfig::quadrature(report_nodes))?;
        let mut props = Vec::with_capacity(window.len());
        for rec in window.records() {
            props.push(reval.value(&current, &rec.context, rec.action, 0)?);
        }
        let emp = empirical_risk(&estimator, &window, &props)?;
        trace.policies.push(current.clone());
        trace.records.push(RoundRecord {
            round: round + 1,
            batch_collected: n,
            cumulative: collected,
            lambda: None,
            true_risk: env.risk_from_mean_optimal_propensity(scan.mean),
            emp_risk: Some(emp),
            kl: kl_gaussian(&current, &cfg.prior_policy)?,
            bound: None,
            cstar: scan.min,
            wall_ms: clock.now_ms().saturating_sub(t0),
        });
    }
    trace.dataset = all_records;
    Ok(trace)
}

/// Clipped-IPS mean plus `√(Var̂ / n_round)`; the variance is estimated on
/// the evaluated minibatch.
struct ScrmObjective<'a> {
    window: &'a LogDataset,
    estimator: &'a RegularizerSpec,
    eval: Propensities,
    noise_tag: u64,
    n_round: f64,
}

impl<'a> ScrmObjective<'a> {
    fn new(
        window: &'a LogDataset,
        estimator: &'a RegularizerSpec,
        propensity: &PropensityConfig,
        noise_tag: u64,
    ) -> Result<Self> {
        Ok(ScrmObjective {
            window,
            estimator,
            eval: Propensities::new(propensity)?,
            noise_tag,
            n_round: window.len() as f64,
        })
    }

    fn value_and_grad(
        &mut self,
        q: &GaussianPolicyParams,
        batch: &[usize],
        epoch: u64,
    ) -> Result<(Matrix, f64)> {
        let records = self.window.records();
        let nb = batch.len() as f64;
        let mut values = Vec::with_capacity(batch.len());
        let mut grads: Vec<(usize, f64)> = Vec::new(); // (record idx, h_unit)
        let mut grad = Matrix::zeros(q.num_actions(), q.dim());
        let mut mean = 0.0;
        // First pass: per-record estimator values and the mean gradient.
        for &idx in batch {
            let rec = &records[idx];
            let key = seeding::mix(&[
                stream::PROPENSITY_NOISE,
                self.noise_tag,
                epoch,
                idx as u64,
            ]);
            let (p, coeffs) = self.eval.value_and_coeffs(q, &rec.context, rec.action, key)?;
            let h_unit = self.estimator.h_unit(rec.logged_propensity, rec.cost);
            let h = p * h_unit;
            values.push(h);
            mean += h;
            for (b, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let scale = h_unit * c / nb;
                for (g, &xv) in grad.row_mut(b).iter_mut().zip(rec.context.iter()) {
                    *g += scale * xv;
                }
            }
            grads.push((idx, h_unit));
        }
        mean /= nb;
        // Second pass: variance penalty √(Var̂/n_round) and its gradient
        // (2/(nb-1)) Σ (h_i - mean) dh_i, scaled by 1/(2 √(Var̂ n_round)).
        let mut var = 0.0;
        for &v in &values {
            var += (v - mean) * (v - mean);
        }
        if batch.len() > 1 {
            var /= nb - 1.0;
        }
        let penalty = (var / self.n_round).sqrt();
        if var > 1e-18 && batch.len() > 1 {
            let outer = 1.0 / (2.0 * (var * self.n_round).sqrt());
            for ((&idx, &h), _) in batch.iter().zip(values.iter()).zip(0..) {
                let rec = &records[idx];
                let key = seeding::mix(&[
                    stream::PROPENSITY_NOISE,
                    self.noise_tag,
                    epoch,
                    idx as u64,
                ]);
                let (_, coeffs) = self.eval.value_and_coeffs(q, &rec.context, rec.action, key)?;
                let h_unit = grads.iter().find(|(i, _)| *i == idx).expect("filled above").1;
                let weight = outer * 2.0 / (nb - 1.0) * (h - mean) * h_unit;
                for (b, &c) in coeffs.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    for (g, &xv) in grad.row_mut(b).iter_mut().zip(rec.context.iter()) {
                        *g += weight * c * xv;
                    }
                }
            }
        }
        Ok((grad, mean + penalty))
    }
}

fn trace_with_initial(env: &Environment, cfg: &LearnerConfig, tag: Algorithm) -> Result<RunTrace> {
    let scan = env.optimal_propensity_scan(&cfg.prior_policy, cfg.propensity.num_nodes)?;
    let record = RoundRecord {
        round: 0,
        batch_collected: 0,
        cumulative: 0,
        lambda: None,
        true_risk: env.risk_from_mean_optimal_propensity(scan.mean),
        emp_risk: None,
        kl: 0.0,
        bound: None,
        cstar: scan.min,
        wall_ms: 0,
    };
    Ok(RunTrace {
        algorithm: tag,
        records: alloc::vec![record],
        policies: alloc::vec![cfg.prior_policy.clone()],
        dataset: LogDataset::new(),
        clamps: Vec::new(),
    })
}

fn round_lambda(
    cfg: &LearnerConfig,
    planned: &[usize],
    round: usize,
    adjusted: bool,
) -> Result<(f64, Option<LambdaClamp>)> {
    let lambda = lambda_schedule(&cfg.lambda_rule, planned[round], round)?;
    if adjusted && lambda >= 1.0 {
        return Ok((
            ADJ_LAMBDA_CLAMP,
            Some(LambdaClamp { round, requested: lambda, used: ADJ_LAMBDA_CLAMP }),
        ));
    }
    Ok((lambda, None))
}

/// Deploy `params` for one round: sample contexts, actions and costs, and
/// freeze the logged propensities with the configured evaluation method.
fn collect_batch(
    env: &Environment,
    cfg: &LearnerConfig,
    params: &GaussianPolicyParams,
    round: usize,
    n: usize,
    global_offset: usize,
) -> Result<Vec<LoggedInteraction>> {
    let mut rng = seeding::rng_from(&[cfg.seed, stream::COLLECT, round as u64]);
    let mut eval = Propensities::new(&cfg.propensity)?;
    let mut batch = Vec::with_capacity(n);
    for i in 0..n {
        let context = env.sample_context(round, &mut rng)?;
        let action = sample_action(params, &context, &mut rng)?;
        let cost = env.sample_cost(&context, action, &mut rng)?;
        let key =
            seeding::mix(&[stream::LOGGED_PROPENSITY, (global_offset + i) as u64]);
        let logged_propensity =
            eval.value(params, &context, action, key)?.max(MIN_LOGGED_PROPENSITY);
        batch.push(LoggedInteraction { context, action, cost, logged_propensity, round });
    }
    Ok(batch)
}

fn optimize_round(
    cfg: &LearnerConfig,
    dataset: &LogDataset,
    train_spec: &ObjectiveSpec,
    current: &GaussianPolicyParams,
    round: usize,
) -> Result<GaussianPolicyParams> {
    let init = if cfg.warm_start { current.clone() } else { cfg.prior_policy.clone() };
    let opt_cfg = OptimizerConfig {
        seed: seeding::mix(&[cfg.seed, stream::OPTIMIZER, round as u64]),
        ..cfg.optimizer
    };
    let mut objective = DatasetObjective::new(dataset, train_spec, round as u64)?;
    let report = minimize(&init, dataset.len(), &opt_cfg, |p, batch, epoch| {
        objective.value_and_grad(p, batch, epoch)
    })?;
    Ok(report.params)
}

#[allow(clippy::too_many_arguments)]
fn report_round(
    env: &Environment,
    cfg: &LearnerConfig,
    dataset: &LogDataset,
    policy: &GaussianPolicyParams,
    train_spec: &ObjectiveSpec,
    round: usize,
    report_nodes: usize,
    behavior_records: Option<&[RoundRecord]>,
) -> Result<RoundRecord> {
    let scan = env.optimal_propensity_scan(policy, report_nodes)?;
    let report_spec =
        ObjectiveSpec { propensity: PropensityConfig::quadrature(report_nodes), ..train_spec.clone() };
    let mut robj = DatasetObjective::new(dataset, &report_spec, round as u64)?;
    let props = robj.target_propensities(policy, 0)?;
    let emp = empirical_risk(&report_spec.estimator, dataset, &props)?;
    let kl = kl_gaussian(policy, &cfg.prior_policy)?;
    let n = dataset.len() as f64;
    let slack = (kl + (1.0 / cfg.delta).ln()) / (train_spec.lambda * n);
    let bound = match behavior_records {
        None => emp + slack,
        Some(records) => {
            // Deployment-weighted oracle risks of the behavior policies
            // π_0..π_round, already recorded in the trace.
            let weighted: f64 = dataset
                .round_sizes()
                .iter()
                .zip(records.iter())
                .map(|(&nj, rec)| nj as f64 / n * rec.true_risk)
                .sum();
            weighted + emp + c_hat_term(dataset, train_spec.lambda)? + slack
        }
    };
    Ok(RoundRecord {
        round: round + 1,
        batch_collected: *dataset.round_sizes().last().expect("round pushed"),
        cumulative: dataset.len(),
        lambda: Some(train_spec.lambda),
        true_risk: env.risk_from_mean_optimal_propensity(scan.mean),
        emp_risk: Some(emp),
        kl,
        bound: Some(bound),
        cstar: scan.min,
        wall_ms: 0,
    })
}
