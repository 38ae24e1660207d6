//! Self-contained Adam optimizer with reproducible minibatch order.

use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;

use crate::math::Matrix;
use crate::policy::GaussianPolicyParams;
use crate::seeding;
use crate::{CoreError, Result};

/// Optimization settings for one `minimize` call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Minibatch size; `None` runs full-batch (one step per epoch).
    /// Minibatches are drawn by shuffling, i.e. uniformly without
    /// replacement within an epoch.
    pub batch_size: Option<usize>,
    /// Seed for the epoch shuffles and the per-epoch noise handed to the
    /// gradient callback.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            epochs: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            batch_size: None,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::InvalidArgument {
                what: "learning rate",
                detail: alloc::format!("must be positive, got {}", self.learning_rate),
            });
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(CoreError::InvalidArgument {
                    what: name,
                    detail: alloc::format!("must lie in [0, 1), got {beta}"),
                });
            }
        }
        if self.batch_size == Some(0) {
            return Err(CoreError::InvalidArgument {
                what: "batch size",
                detail: "minibatch size must be positive".into(),
            });
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Matrix,
    v: Matrix,
    t: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState { m: Matrix::zeros(rows, cols), v: Matrix::zeros(rows, cols), t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update; returns the parameter delta to add.
    pub fn step(&mut self, cfg: &OptimizerConfig, grad: &Matrix) -> Result<Matrix> {
        if grad.rows() != self.m.rows() || grad.cols() != self.m.cols() {
            return Err(CoreError::DimensionMismatch {
                expected: self.m.rows() * self.m.cols(),
                got: grad.rows() * grad.cols(),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let mut delta = Matrix::zeros(grad.rows(), grad.cols());
        let (ms, vs, gs, ds) =
            (self.m.as_mut_slice(), self.v.as_mut_slice(), grad.as_slice(), delta.as_mut_slice());
        for i in 0..gs.len() {
            let g = gs[i];
            ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * g;
            vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = ms[i] / bc1;
            let v_hat = vs[i] / bc2;
            ds[i] = -cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps_adam);
        }
        Ok(delta)
    }
}

/// Output of [`minimize`].
#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub params: GaussianPolicyParams,
    /// Mean batch objective per epoch (running training loss).
    pub epoch_objectives: Vec<f64>,
}

/// Minimize an objective over the policy mean `μ` (`σ` held fixed).
///
/// `value_and_grad(params, batch_indices, epoch)` returns the gradient with
/// respect to `μ` and the objective value on that batch (both evaluated with
/// whatever per-epoch common-random-number noise the callback derives from
/// `epoch`). Items are indices `0..n_items`; with a configured batch size
/// each epoch shuffles them and visits every chunk once, otherwise each
/// epoch is a single full-batch step. A non-finite batch objective aborts.
pub fn minimize<F>(
    init: &GaussianPolicyParams,
    n_items: usize,
    cfg: &OptimizerConfig,
    mut value_and_grad: F,
) -> Result<MinimizeReport>
where
    F: FnMut(&GaussianPolicyParams, &[usize], u64) -> Result<(Matrix, f64)>,
{
    cfg.validate()?;
    let mut params = init.clone();
    let mut state = AdamState::new(params.mu.rows(), params.mu.cols());
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut epoch_objectives = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let chunk = cfg.batch_size.unwrap_or(n_items).max(1).min(n_items.max(1));
        if cfg.batch_size.is_some() {
            let mut rng = seeding::rng_from(&[cfg.seed, seeding::stream::SHUFFLE, epoch as u64]);
            order.shuffle(&mut rng);
        }
        let mut epoch_total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(chunk) {
            let (grad, value) = value_and_grad(&params, batch, epoch as u64)?;
            if !value.is_finite() {
                return Err(CoreError::NonFiniteObjective { epoch, value });
            }
            let delta = state.step(cfg, &grad)?;
            params.mu.axpy(1.0, &delta);
            epoch_total += value;
            batches += 1;
        }
        if !params.mu.is_finite() {
            return Err(CoreError::NonFiniteObjective { epoch, value: f64::NAN });
        }
        epoch_objectives.push(epoch_total / batches.max(1) as f64);
    }
    Ok(MinimizeReport { params, epoch_objectives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Matrix;
    use alloc::vec;

    fn params_from(data: Vec<f64>, rows: usize, cols: usize) -> GaussianPolicyParams {
        GaussianPolicyParams::new(Matrix::from_vec(rows, cols, data).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn zero_gradient_gives_zero_delta() {
        let mut state = AdamState::new(2, 2);
        let cfg = OptimizerConfig::default();
        let delta = state.step(&cfg, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(delta.frobenius_norm(), 0.0);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn constant_gradient_approaches_signed_learning_rate() {
        let mut state = AdamState::new(1, 2);
        let cfg = OptimizerConfig { learning_rate: 0.05, ..OptimizerConfig::default() };
        let grad = Matrix::from_vec(1, 2, vec![3.0, -0.2]).unwrap();
        let mut delta = Matrix::zeros(1, 2);
        for _ in 0..500 {
            delta = state.step(&cfg, &grad).unwrap();
        }
        assert!((delta.get(0, 0) - (-0.05)).abs() < 1e-4, "{}", delta.get(0, 0));
        assert!((delta.get(0, 1) - 0.05).abs() < 1e-4, "{}", delta.get(0, 1));
    }

    #[test]
    fn identical_seeds_identical_states() {
        let grads = [vec![0.5, -1.0], vec![2.0, 0.1], vec![-0.3, 0.4]];
        let cfg = OptimizerConfig::default();
        let run = || {
            let mut state = AdamState::new(1, 2);
            let mut out = Vec::new();
            for g in &grads {
                let delta = state.step(&cfg, &Matrix::from_vec(1, 2, g.clone()).unwrap()).unwrap();
                out.push((delta.get(0, 0).to_bits(), delta.get(0, 1).to_bits()));
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn minimizes_convex_quadratic() {
        // 0.5‖μ - μ*‖² with μ* = (1, -2, 0.5, 3).
        let target = params_from(vec![1.0, -2.0, 0.5, 3.0], 2, 2);
        let init = params_from(vec![0.0; 4], 2, 2);
        let cfg = OptimizerConfig {
            learning_rate: 1e-2,
            epochs: 2000,
            ..OptimizerConfig::default()
        };
        let report = minimize(&init, 1, &cfg, |params, _batch, _epoch| {
            let mut grad = params.mu.clone();
            grad.axpy(-1.0, &target.mu);
            let value = 0.5 * params.mu.distance_sq(&target.mu);
            Ok((grad, value))
        })
        .unwrap();
        let dist = report.params.mu.distance_sq(&target.mu).sqrt();
        assert!(dist <= 1e-2, "distance {dist}");
        assert_eq!(report.epoch_objectives.len(), 2000);
        assert!(report.epoch_objectives.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_epochs_returns_init() {
        let init = params_from(vec![0.3, -0.7], 1, 2);
        let cfg = OptimizerConfig { epochs: 0, ..OptimizerConfig::default() };
        let report = minimize(&init, 10, &cfg, |_, _, _| unreachable!()).unwrap();
        assert_eq!(report.params, init);
        assert!(report.epoch_objectives.is_empty());
    }

    #[test]
    fn non_finite_objective_aborts() {
        let init = params_from(vec![0.0], 1, 1);
        let cfg = OptimizerConfig::default();
        let err = minimize(&init, 1, &cfg, |_, _, _| {
            Ok((Matrix::zeros(1, 1), f64::INFINITY))
        })
        .unwrap_err();
        assert!(matches!(err, CoreError::NonFiniteObjective { .. }));
    }

    #[test]
    fn minibatch_visits_every_item_once_per_epoch() {
        let init = params_from(vec![0.0], 1, 1);
        let cfg = OptimizerConfig {
            batch_size: Some(3),
            epochs: 2,
            ..OptimizerConfig::default()
        };
        let mut seen: Vec<usize> = Vec::new();
        minimize(&init, 10, &cfg, |_, batch, _| {
            seen.extend_from_slice(batch);
            Ok((Matrix::zeros(1, 1), 0.0))
        })
        .unwrap();
        assert_eq!(seen.len(), 20);
        let mut first: Vec<usize> = seen[..10].to_vec();
        first.sort_unstable();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
    }
}
