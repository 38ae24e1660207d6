//! Linear Gaussian policies.
//!
//! A policy is parametrized by per-action mean vectors `μ_a` and a shared
//! scale `σ`: drawing `θ ~ N(μ, σ² I)` and playing `argmax_a x·θ_a` induces
//! the propensity
//!
//! ```text
//! π(a|x) = E_{ε~N(0,1)} [ Π_{a'≠a} Φ(ε + x·(μ_a - μ_{a'}) / (σ‖x‖)) ]
//! ```
//!
//! a one-dimensional integral evaluated either by Monte Carlo (the
//! estimator used during training, with common random numbers so gradients
//! and values share draws) or by Gauss–Hermite quadrature (the
//! deterministic oracle used for reported risks and tests).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::Environment;
use crate::math::{dot, norm2, normal_cdf, normal_pdf, GaussHermite, Matrix};
use crate::optimizer::{minimize, OptimizerConfig};
use crate::seeding;
use crate::{CoreError, Result};

/// L2 weight used when fitting the supervised logging policy.
const LOGGING_L2: f64 = 1e-4;

/// Mean matrix (K×d) and shared scale of a linear Gaussian policy; doubles
/// as the PAC-Bayes posterior/prior parametrization.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyParams {
    pub mu: Matrix,
    pub sigma: f64,
}

impl GaussianPolicyParams {
    pub fn new(mu: Matrix, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(CoreError::InvalidArgument {
                what: "sigma",
                detail: format!("must be positive and finite, got {sigma}"),
            });
        }
        if !mu.is_finite() {
            return Err(CoreError::InvalidArgument {
                what: "policy mean",
                detail: "mu contains non-finite entries".into(),
            });
        }
        Ok(GaussianPolicyParams { mu, sigma })
    }

    /// Zero means: the exactly uniform policy at any `σ`.
    pub fn uniform(num_actions: usize, dim: usize, sigma: f64) -> Result<Self> {
        Self::new(Matrix::zeros(num_actions, dim), sigma)
    }

    pub fn num_actions(&self) -> usize {
        self.mu.rows()
    }

    pub fn dim(&self) -> usize {
        self.mu.cols()
    }
}

/// How propensities are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensityMethod {
    MonteCarlo,
    GaussHermite,
}

/// Propensity evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropensityConfig {
    pub method: PropensityMethod,
    /// Monte Carlo sample count `S`.
    pub num_samples: usize,
    /// Quadrature node count.
    pub num_nodes: usize,
    /// Base seed for the common-random-number ε draws; per-record streams
    /// are derived from `(shared_noise_seed, noise_key)`.
    pub shared_noise_seed: u64,
}

impl PropensityConfig {
    pub const DEFAULT_SAMPLES: usize = 32;
    pub const DEFAULT_NODES: usize = 64;

    pub fn monte_carlo(shared_noise_seed: u64) -> Self {
        PropensityConfig {
            method: PropensityMethod::MonteCarlo,
            num_samples: Self::DEFAULT_SAMPLES,
            num_nodes: Self::DEFAULT_NODES,
            shared_noise_seed,
        }
    }

    pub fn quadrature(num_nodes: usize) -> Self {
        PropensityConfig {
            method: PropensityMethod::GaussHermite,
            num_samples: Self::DEFAULT_SAMPLES,
            num_nodes,
            shared_noise_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 1 {
            return Err(CoreError::InvalidArgument {
                what: "num_samples",
                detail: "need at least one Monte Carlo sample".into(),
            });
        }
        if self.num_nodes < 8 {
            return Err(CoreError::InvalidArgument {
                what: "num_nodes",
                detail: format!("need at least 8 quadrature nodes, got {}", self.num_nodes),
            });
        }
        Ok(())
    }
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig::monte_carlo(0)
    }
}

/// Reusable propensity evaluator. Owns the quadrature rule and scratch
/// buffers, so dataset-sized loops do not reallocate per record. Each
/// thread builds its own; the underlying computation is pure.
#[derive(Debug, Clone)]
pub struct Propensities {
    cfg: PropensityConfig,
    rule: Option<GaussHermite>,
    points: Vec<(f64, f64)>,
    scores: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
    suffix: Vec<f64>,
    coeff: Vec<f64>,
}

impl Propensities {
    pub fn new(cfg: &PropensityConfig) -> Result<Self> {
        cfg.validate()?;
        let rule = match cfg.method {
            PropensityMethod::GaussHermite => Some(GaussHermite::new(cfg.num_nodes)?),
            PropensityMethod::MonteCarlo => None,
        };
        Ok(Propensities {
            cfg: *cfg,
            rule,
            points: Vec::new(),
            scores: Vec::new(),
            cdf: Vec::new(),
            pdf: Vec::new(),
            suffix: Vec::new(),
            coeff: Vec::new(),
        })
    }

    pub fn config(&self) -> &PropensityConfig {
        &self.cfg
    }

    /// Fill `self.points` with `(ε, weight)` evaluation points for the
    /// stream identified by `noise_key` (ignored in quadrature mode).
    fn refresh_points(&mut self, noise_key: u64) {
        self.points.clear();
        match &self.rule {
            Some(rule) => self.points.extend(rule.standard_normal_points()),
            None => {
                let mut rng =
                    seeding::rng_from(&[self.cfg.shared_noise_seed, noise_key]);
                let w = 1.0 / self.cfg.num_samples as f64;
                for _ in 0..self.cfg.num_samples {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    self.points.push((eps, w));
                }
            }
        }
    }

    fn prepare_scores(&mut self, params: &GaussianPolicyParams, x: &[f64]) -> Result<f64> {
        if x.len() != params.dim() {
            return Err(CoreError::DimensionMismatch { expected: params.dim(), got: x.len() });
        }
        let k = params.num_actions();
        self.scores.clear();
        for a in 0..k {
            self.scores.push(dot(params.mu.row(a), x));
        }
        Ok(norm2(x))
    }

    /// `π(a|x)` with draws from `(shared_noise_seed, noise_key)`.
    pub fn value(
        &mut self,
        params: &GaussianPolicyParams,
        x: &[f64],
        action: usize,
        noise_key: u64,
    ) -> Result<f64> {
        let k = params.num_actions();
        if action >= k {
            return Err(CoreError::ActionOutOfRange { action, num_actions: k });
        }
        let norm = self.prepare_scores(params, x)?;
        if norm == 0.0 {
            return Ok(1.0 / k as f64);
        }
        self.refresh_points(noise_key);
        let inv_scale = 1.0 / (params.sigma * norm);
        let mut value = 0.0;
        for pi in 0..self.points.len() {
            let (eps, w) = self.points[pi];
            let mut prod = 1.0;
            for a in 0..k {
                if a == action {
                    continue;
                }
                let t = eps + (self.scores[action] - self.scores[a]) * inv_scale;
                prod *= normal_cdf(t);
                if prod == 0.0 {
                    break;
                }
            }
            value += w * prod;
        }
        Ok(value.clamp(0.0, 1.0))
    }

    /// Propensities of every action with shared draws per `(x, noise_key)`.
    pub fn row(
        &mut self,
        params: &GaussianPolicyParams,
        x: &[f64],
        noise_key: u64,
    ) -> Result<Vec<f64>> {
        let k = params.num_actions();
        let norm = self.prepare_scores(params, x)?;
        if norm == 0.0 {
            return Ok(vec![1.0 / k as f64; k]);
        }
        self.refresh_points(noise_key);
        let inv_scale = 1.0 / (params.sigma * norm);
        let mut out = vec![0.0; k];
        for pi in 0..self.points.len() {
            let (eps, w) = self.points[pi];
            for (action, slot) in out.iter_mut().enumerate() {
                let mut prod = 1.0;
                for a in 0..k {
                    if a == action {
                        continue;
                    }
                    let t = eps + (self.scores[action] - self.scores[a]) * inv_scale;
                    prod *= normal_cdf(t);
                    if prod == 0.0 {
                        break;
                    }
                }
                *slot += w * prod;
            }
        }
        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(out)
    }

    /// `π(a|x)` together with per-action gradient coefficients: the
    /// returned `coeffs[b]` satisfy `∂π(a|x)/∂μ_b = coeffs[b] · x`, with
    /// `Σ_b coeffs[b] = 0` (argmax probabilities are shift invariant).
    /// Value and coefficients share the exact same ε draws.
    pub fn value_and_coeffs(
        &mut self,
        params: &GaussianPolicyParams,
        x: &[f64],
        action: usize,
        noise_key: u64,
    ) -> Result<(f64, &[f64])> {
        let k = params.num_actions();
        if action >= k {
            return Err(CoreError::ActionOutOfRange { action, num_actions: k });
        }
        let norm = self.prepare_scores(params, x)?;
        self.coeff.clear();
        self.coeff.resize(k, 0.0);
        if norm == 0.0 {
            // Exchangeable contexts: uniform propensity, zero gradient.
            return Ok((1.0 / k as f64, &self.coeff));
        }
        self.refresh_points(noise_key);
        let inv_scale = 1.0 / (params.sigma * norm);
        let m = k - 1; // factors per point
        self.cdf.resize(m, 0.0);
        self.pdf.resize(m, 0.0);
        self.suffix.resize(m + 1, 0.0);
        let mut value = 0.0;
        for pi in 0..self.points.len() {
            let (eps, w) = self.points[pi];
            let mut idx = 0;
            for a in 0..k {
                if a == action {
                    continue;
                }
                let t = eps + (self.scores[action] - self.scores[a]) * inv_scale;
                self.cdf[idx] = normal_cdf(t);
                self.pdf[idx] = normal_pdf(t);
                idx += 1;
            }
            // Suffix products let each factor be excluded without division.
            self.suffix[m] = 1.0;
            for j in (0..m).rev() {
                self.suffix[j] = self.suffix[j + 1] * self.cdf[j];
            }
            value += w * self.suffix[0];
            let mut prefix = 1.0;
            let mut idx = 0;
            for a in 0..k {
                if a == action {
                    continue;
                }
                let excl = prefix * self.suffix[idx + 1];
                let contrib = w * self.pdf[idx] * excl * inv_scale;
                self.coeff[a] -= contrib;
                self.coeff[action] += contrib;
                prefix *= self.cdf[idx];
                idx += 1;
            }
        }
        Ok((value.clamp(0.0, 1.0), &self.coeff))
    }
}

/// Per-action scores `(x·μ_a)_a`.
pub fn scores(params: &GaussianPolicyParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.dim() {
        return Err(CoreError::DimensionMismatch { expected: params.dim(), got: x.len() });
    }
    Ok((0..params.num_actions()).map(|a| dot(params.mu.row(a), x)).collect())
}

/// Argmax of scores; ties broken by lowest action index.
pub fn deterministic_action(params: &GaussianPolicyParams, x: &[f64]) -> Result<usize> {
    let s = scores(params, x)?;
    let mut best = 0;
    for (a, &v) in s.iter().enumerate().skip(1) {
        if v > s[best] {
            best = a;
        }
    }
    Ok(best)
}

/// Sample an action from the policy: perturb each score by `σ‖x‖ ε_a` with
/// i.i.d. standard normal `ε_a` and take the argmax — the exact law of
/// `argmax_a x·θ_a` for `θ ~ N(μ, σ² I)`. A zero context makes all actions
/// exchangeable, so it falls back to a uniform draw.
pub fn sample_action<R: Rng>(
    params: &GaussianPolicyParams,
    x: &[f64],
    rng: &mut R,
) -> Result<usize> {
    let s = scores(params, x)?;
    let norm = norm2(x);
    if norm == 0.0 {
        return Ok(rng.random_range(0..params.num_actions()));
    }
    let scale = params.sigma * norm;
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (a, &v) in s.iter().enumerate() {
        let eps: f64 = StandardNormal.sample(rng);
        let perturbed = v + scale * eps;
        if perturbed > best_score {
            best_score = perturbed;
            best = a;
        }
    }
    Ok(best)
}

/// `π(a|x)` under `cfg` (noise stream 0 in Monte Carlo mode). For
/// dataset-sized loops prefer a [`Propensities`] evaluator, which reuses the
/// quadrature rule and scratch space.
pub fn propensity(
    params: &GaussianPolicyParams,
    x: &[f64],
    action: usize,
    cfg: &PropensityConfig,
) -> Result<f64> {
    Propensities::new(cfg)?.value(params, x, action, 0)
}

/// `π(a|x)` with an explicit common-random-number stream key (typically the
/// record index within a dataset).
pub fn propensity_indexed(
    params: &GaussianPolicyParams,
    x: &[f64],
    action: usize,
    cfg: &PropensityConfig,
    noise_key: u64,
) -> Result<f64> {
    Propensities::new(cfg)?.value(params, x, action, noise_key)
}

/// All-action propensity row with shared draws.
pub fn propensity_row(
    params: &GaussianPolicyParams,
    x: &[f64],
    cfg: &PropensityConfig,
) -> Result<Vec<f64>> {
    Propensities::new(cfg)?.row(params, x, 0)
}

/// `∂π(a|x)/∂μ` as a K×d matrix, reusing the same ε draws as
/// [`propensity`]. Rows over all actions sum to the zero vector.
pub fn propensity_grad_mu(
    params: &GaussianPolicyParams,
    x: &[f64],
    action: usize,
    cfg: &PropensityConfig,
) -> Result<Matrix> {
    propensity_grad_mu_indexed(params, x, action, cfg, 0)
}

/// As [`propensity_grad_mu`] with an explicit noise stream key.
pub fn propensity_grad_mu_indexed(
    params: &GaussianPolicyParams,
    x: &[f64],
    action: usize,
    cfg: &PropensityConfig,
    noise_key: u64,
) -> Result<Matrix> {
    let mut eval = Propensities::new(cfg)?;
    let (_, coeffs) = eval.value_and_coeffs(params, x, action, noise_key)?;
    let mut grad = Matrix::zeros(params.num_actions(), params.dim());
    for (b, &c) in coeffs.iter().enumerate() {
        for (g, &xv) in grad.row_mut(b).iter_mut().zip(x.iter()) {
            *g = c * xv;
        }
    }
    Ok(grad)
}

/// Closed-form KL divergence between two shared-scale isotropic Gaussians
/// on `R^{Kd}`:
///
/// ```text
/// KL(Q‖P) = Kd/2 (σq²/σp² - 1 - log σq²/σp²) + ‖μq - μp‖²_F / (2 σp²)
/// ```
pub fn kl_gaussian(q: &GaussianPolicyParams, p: &GaussianPolicyParams) -> Result<f64> {
    if q.num_actions() != p.num_actions() || q.dim() != p.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: p.num_actions() * p.dim(),
            got: q.num_actions() * q.dim(),
        });
    }
    let n = (q.num_actions() * q.dim()) as f64;
    let ratio = (q.sigma * q.sigma) / (p.sigma * p.sigma);
    let mean_term = q.mu.distance_sq(&p.mu) / (2.0 * p.sigma * p.sigma);
    Ok(0.5 * n * (ratio - 1.0 - ratio.ln()) + mean_term)
}

/// Fit a logging policy on supervised `(context, label)` pairs by
/// minimizing multinomial logistic loss with L2 weight `1e-4`, then apply
/// the inverse temperature `alpha` to the fitted scores (`μ ← α μ`), so
/// `α = 0` is exactly uniform and `α = 1` the trained policy.
pub fn make_logging_policy(
    env: &Environment,
    supervised: &[(Vec<f64>, usize)],
    alpha: f64,
    train_cfg: &OptimizerConfig,
    sigma: f64,
) -> Result<GaussianPolicyParams> {
    if supervised.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CoreError::InvalidArgument {
            what: "alpha",
            detail: format!("inverse temperature must lie in [0, 1], got {alpha}"),
        });
    }
    let k = env.num_actions();
    let d = env.dim_context();
    for (x, label) in supervised {
        if x.len() != d {
            return Err(CoreError::DimensionMismatch { expected: d, got: x.len() });
        }
        if *label >= k {
            return Err(CoreError::ActionOutOfRange { action: *label, num_actions: k });
        }
    }
    let init = GaussianPolicyParams::uniform(k, d, sigma)?;
    if alpha == 0.0 {
        return Ok(init);
    }
    let mut probs = vec![0.0; k];
    let report = minimize(&init, supervised.len(), train_cfg, |params, idxs, _epoch| {
        let mut grad = Matrix::zeros(k, d);
        let mut loss = 0.0;
        for &i in idxs {
            let (x, label) = &supervised[i];
            softmax_into(params, x, &mut probs)?;
            loss -= probs[*label].max(1e-300).ln();
            for a in 0..k {
                let coeff = probs[a] - if a == *label { 1.0 } else { 0.0 };
                for (g, &xv) in grad.row_mut(a).iter_mut().zip(x.iter()) {
                    *g += coeff * xv;
                }
            }
        }
        let inv = 1.0 / idxs.len() as f64;
        grad.scale(inv);
        loss *= inv;
        // L2 term: loss += (w/2)‖μ‖², grad += w μ.
        let mut norm_sq = 0.0;
        for v in params.mu.as_slice() {
            norm_sq += v * v;
        }
        loss += 0.5 * LOGGING_L2 * norm_sq;
        grad.axpy(LOGGING_L2, &params.mu);
        Ok((grad, loss))
    })?;
    let mut mu = report.params.mu;
    mu.scale(alpha);
    GaussianPolicyParams::new(mu, sigma)
}

fn softmax_into(params: &GaussianPolicyParams, x: &[f64], out: &mut [f64]) -> Result<()> {
    let s = scores(params, x)?;
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(s.iter()) {
        *o = (v - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn random_params(k: usize, d: usize, sigma: f64, seed: u64) -> GaussianPolicyParams {
        let mut rng = seeding::rng_from(&[seed, 0xAB]);
        let data: Vec<f64> = (0..k * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        GaussianPolicyParams::new(Matrix::from_vec(k, d, data).unwrap(), sigma).unwrap()
    }

    fn random_context(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeding::rng_from(&[seed, 0xCD]);
        (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn scores_match_naive_loop() {
        let params = random_params(6, 4, 1.0, 1);
        let x = random_context(4, 2);
        let got = scores(&params, &x).unwrap();
        for a in 0..6 {
            let mut want = 0.0;
            for j in 0..4 {
                want += params.mu.get(a, j) * x[j];
            }
            assert!((got[a] - want).abs() < 1e-15);
        }
        assert!(scores(&params, &[0.0; 3]).is_err());
    }

    #[test]
    fn deterministic_action_tie_break_and_shift_invariance() {
        let mu = Matrix::from_vec(3, 1, vec![0.0, 0.0, 0.0]).unwrap();
        let params = GaussianPolicyParams::new(mu, 1.0).unwrap();
        assert_eq!(deterministic_action(&params, &[1.0]).unwrap(), 0);

        let mu = Matrix::from_vec(3, 1, vec![0.0, 3.0, 1.0]).unwrap();
        let params = GaussianPolicyParams::new(mu, 1.0).unwrap();
        assert_eq!(deterministic_action(&params, &[1.0]).unwrap(), 1);

        // Adding a constant to every score leaves the argmax unchanged.
        let mu = Matrix::from_vec(3, 1, vec![5.0, 8.0, 6.0]).unwrap();
        let shifted = GaussianPolicyParams::new(mu, 1.0).unwrap();
        assert_eq!(deterministic_action(&shifted, &[1.0]).unwrap(), 1);
    }

    #[test]
    fn sample_action_is_uniform_for_equal_means() {
        let params = GaussianPolicyParams::uniform(4, 3, 1.0).unwrap();
        let x = random_context(3, 5);
        let mut rng = seeding::rng_from(&[11]);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_action(&params, &x, &mut rng).unwrap()] += 1;
        }
        let tol = 3.0 * (4.0 / n as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < tol, "freq {freq}");
        }
    }

    #[test]
    fn sample_action_two_actions_matches_normal_cdf() {
        let mu = Matrix::from_vec(2, 2, vec![0.9, 0.0, 0.0, 0.0]).unwrap();
        let params = GaussianPolicyParams::new(mu, 0.7).unwrap();
        let x = vec![1.0, 1.0];
        let norm = norm2(&x);
        let want = normal_cdf(0.9 / (core::f64::consts::SQRT_2 * 0.7 * norm));
        let mut rng = seeding::rng_from(&[13]);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| sample_action(&params, &x, &mut rng).unwrap() == 0)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - want).abs() < 3.0 * (want * (1.0 - want) / n as f64).sqrt() + 1e-3);
    }

    #[test]
    fn sample_action_sigma_to_zero_becomes_deterministic() {
        let params = random_params(5, 3, 1e-9, 21);
        let x = random_context(3, 22);
        let det = deterministic_action(&params, &x).unwrap();
        let mut rng = seeding::rng_from(&[23]);
        for _ in 0..200 {
            assert_eq!(sample_action(&params, &x, &mut rng).unwrap(), det);
        }
    }

    #[test]
    fn propensity_equal_means_is_uniform() {
        for k in [2usize, 3, 10] {
            let params = GaussianPolicyParams::uniform(k, 4, 1.0).unwrap();
            let x = random_context(4, k as u64);
            let cfg = PropensityConfig::quadrature(64);
            for a in 0..k {
                let p = propensity(&params, &x, a, &cfg).unwrap();
                assert!((p - 1.0 / k as f64).abs() < 1e-8, "K={k} a={a}: {p}");
            }
        }
    }

    #[test]
    fn propensity_two_action_closed_form() {
        // π(0|x) = Φ(Δm/(√2 σ‖x‖)) when K = 2.
        let mut rng = seeding::rng_from(&[31]);
        for trial in 0..20u64 {
            let d = 3;
            let params = random_params(2, d, 0.5 + rng.random::<f64>(), 100 + trial);
            let x = random_context(d, 200 + trial);
            let s = scores(&params, &x).unwrap();
            let want =
                normal_cdf((s[0] - s[1]) / (core::f64::consts::SQRT_2 * params.sigma * norm2(&x)));
            let got = propensity(&params, &x, 0, &PropensityConfig::quadrature(64)).unwrap();
            assert!((got - want).abs() < 1e-6, "trial {trial}: {got} vs {want}");
        }
    }

    #[test]
    fn propensity_special_case_phi_of_inv_sqrt2() {
        // Score gap equal to σ‖x‖ gives Φ(1/√2) ≈ 0.7602.
        let x = vec![2.0];
        let sigma = 1.3;
        // (μ_0 - μ_1)·x = σ‖x‖ needs μ_0 - μ_1 = σ here.
        let mu = Matrix::from_vec(2, 1, vec![sigma, 0.0]).unwrap();
        let params = GaussianPolicyParams::new(mu, sigma).unwrap();
        let got = propensity(&params, &x, 0, &PropensityConfig::quadrature(64)).unwrap();
        let want = normal_cdf(core::f64::consts::FRAC_1_SQRT_2);
        assert!((got - want).abs() < 1e-6);
        assert!((want - 0.760_249_938_9).abs() < 1e-9);
    }

    #[test]
    fn propensity_rows_sum_to_one() {
        let cfg = PropensityConfig::quadrature(64);
        for k in [2usize, 5, 10] {
            let params = random_params(k, 6, 1.0, 300 + k as u64);
            let x = random_context(6, 400 + k as u64);
            let row = propensity_row(&params, &x, &cfg).unwrap();
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "K={k}: sum {sum}");
        }
        // Monte Carlo mode: looser tolerance 3K/√S with shared draws.
        let cfg = PropensityConfig::monte_carlo(77);
        let k = 6;
        let params = random_params(k, 6, 1.0, 55);
        let x = random_context(6, 56);
        let row = propensity_row(&params, &x, &cfg).unwrap();
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 3.0 * k as f64 / (32.0f64).sqrt());
    }

    #[test]
    fn zero_context_is_exchangeable() {
        let params = random_params(5, 3, 1.0, 61);
        let x = vec![0.0; 3];
        let p = propensity(&params, &x, 2, &PropensityConfig::quadrature(64)).unwrap();
        assert_eq!(p, 0.2);
        let grad = propensity_grad_mu(&params, &x, 2, &PropensityConfig::quadrature(64)).unwrap();
        assert_eq!(grad.frobenius_norm(), 0.0);
        let mut counts = [0usize; 5];
        let mut rng = seeding::rng_from(&[62]);
        for _ in 0..5000 {
            counts[sample_action(&params, &x, &mut rng).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| c > 700));
    }

    fn finite_difference_grad(
        params: &GaussianPolicyParams,
        x: &[f64],
        action: usize,
        cfg: &PropensityConfig,
        step: f64,
    ) -> Matrix {
        let k = params.num_actions();
        let d = params.dim();
        let mut fd = Matrix::zeros(k, d);
        for b in 0..k {
            for j in 0..d {
                let mut plus = params.clone();
                plus.mu.set(b, j, plus.mu.get(b, j) + step);
                let mut minus = params.clone();
                minus.mu.set(b, j, minus.mu.get(b, j) - step);
                let fp = propensity(&plus, x, action, cfg).unwrap();
                let fm = propensity(&minus, x, action, cfg).unwrap();
                fd.set(b, j, (fp - fm) / (2.0 * step));
            }
        }
        fd
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = PropensityConfig::quadrature(64);
        let mut rng = seeding::rng_from(&[71]);
        for trial in 0..20u64 {
            let k = 2 + (trial as usize % 4);
            let d = 2 + (trial as usize % 3);
            let params = random_params(k, d, 0.6 + rng.random::<f64>(), 500 + trial);
            let x = random_context(d, 600 + trial);
            let action = trial as usize % k;
            let analytic = propensity_grad_mu(&params, &x, action, &cfg).unwrap();
            let fd = finite_difference_grad(&params, &x, action, &cfg, 1e-5);
            let diff = {
                let mut d2 = 0.0;
                for (a, b) in analytic.as_slice().iter().zip(fd.as_slice().iter()) {
                    d2 += (a - b) * (a - b);
                }
                d2.sqrt()
            };
            let scale = fd.frobenius_norm().max(1e-8);
            assert!(diff / scale < 1e-4, "trial {trial}: rel err {}", diff / scale);
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let cfg = PropensityConfig::quadrature(32);
        let params = random_params(5, 4, 1.0, 81);
        let x = random_context(4, 82);
        let grad = propensity_grad_mu(&params, &x, 3, &cfg).unwrap();
        for j in 0..4 {
            let col: f64 = (0..5).map(|b| grad.get(b, j)).sum();
            assert!(col.abs() < 1e-12, "column {j} sums to {col}");
        }
    }

    #[test]
    fn gradient_of_total_mass_vanishes() {
        let cfg = PropensityConfig::quadrature(64);
        let params = random_params(4, 3, 1.0, 91);
        let x = random_context(3, 92);
        let mut total = Matrix::zeros(4, 3);
        for a in 0..4 {
            total.axpy(1.0, &propensity_grad_mu(&params, &x, a, &cfg).unwrap());
        }
        assert!(total.frobenius_norm() < 1e-7, "norm {}", total.frobenius_norm());
    }

    #[test]
    fn monte_carlo_common_random_numbers_are_shared() {
        let cfg = PropensityConfig::monte_carlo(7);
        let params = random_params(4, 3, 1.0, 101);
        let x = random_context(3, 102);
        let v1 = propensity_indexed(&params, &x, 1, &cfg, 5).unwrap();
        let v2 = propensity_indexed(&params, &x, 1, &cfg, 5).unwrap();
        assert_eq!(v1, v2);
        let mut eval = Propensities::new(&cfg).unwrap();
        let (v3, _) = eval.value_and_coeffs(&params, &x, 1, 5).unwrap();
        assert_eq!(v1, v3);
        let other = propensity_indexed(&params, &x, 1, &cfg, 6).unwrap();
        assert_ne!(v1, other);
    }

    #[test]
    fn kl_gaussian_closed_forms() {
        let p = random_params(3, 2, 1.0, 111);
        assert_eq!(kl_gaussian(&p, &p).unwrap(), 0.0);

        // Unit mean shift in one entry at σq = σp = 1 gives 1/2.
        let mut q = p.clone();
        q.mu.set(1, 1, q.mu.get(1, 1) + 1.0);
        assert!((kl_gaussian(&q, &p).unwrap() - 0.5).abs() < 1e-15);

        // σq = 2, σp = 1, equal means, Kd = 1: 0.5 (4 - 1 - log 4).
        let mu = Matrix::from_vec(1, 1, vec![0.3]).unwrap();
        let p1 = GaussianPolicyParams::new(mu.clone(), 1.0).unwrap();
        let q1 = GaussianPolicyParams::new(mu, 2.0).unwrap();
        let want = 0.5 * (4.0 - 1.0 - 4.0f64.ln());
        assert!((kl_gaussian(&q1, &p1).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.806_852_819_440_054_7).abs() < 1e-12);
    }

    #[test]
    fn kl_matches_monte_carlo_log_ratio() {
        // E_Q[log dQ/dP] estimated from draws; Kd = 1 keeps it cheap.
        let p = GaussianPolicyParams::new(Matrix::from_vec(1, 1, vec![0.0]).unwrap(), 1.0).unwrap();
        let q = GaussianPolicyParams::new(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), 2.0).unwrap();
        let closed = kl_gaussian(&q, &p).unwrap();
        let mut rng = seeding::rng_from(&[121]);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let theta = 1.0 + 2.0 * eps;
            let log_q = -0.5 * ((theta - 1.0) / 2.0).powi(2) - (2.0f64).ln();
            let log_p = -0.5 * theta * theta;
            acc += log_q - log_p;
        }
        let mc = acc / n as f64;
        assert!((mc - closed).abs() < 0.01, "mc {mc} vs closed {closed}");
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        for seed in 0..30u64 {
            let q = random_params(3, 2, 0.5 + (seed as f64) * 0.1 % 2.0, 200 + seed);
            let p = random_params(3, 2, 0.4 + (seed as f64) * 0.07 % 1.5, 300 + seed);
            let kl = kl_gaussian(&q, &p).unwrap();
            assert!(kl >= 0.0, "seed {seed}: {kl}");
        }
    }

    #[test]
    fn sampling_frequencies_match_quadrature_propensities() {
        let params = random_params(4, 3, 1.0, 131);
        let x = random_context(3, 132);
        let cfg = PropensityConfig::quadrature(64);
        let row = propensity_row(&params, &x, &cfg).unwrap();
        let mut rng = seeding::rng_from(&[133]);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_action(&params, &x, &mut rng).unwrap()] += 1;
        }
        for a in 0..4 {
            let freq = counts[a] as f64 / n as f64;
            let sd = (row[a] * (1.0 - row[a]) / n as f64).sqrt();
            assert!(
                (freq - row[a]).abs() < 3.0 * sd + 1e-3,
                "a={a}: freq {freq} vs prop {}",
                row[a]
            );
        }
    }

    #[test]
    fn logging_policy_alpha_zero_is_uniform() {
        let env = Environment::synthetic(4, 3, 0.1, 9).unwrap();
        let mut rng = seeding::rng_from(&[141]);
        let set = env.supervised_set(50, &mut rng).unwrap();
        let params =
            make_logging_policy(&env, &set, 0.0, &OptimizerConfig::default(), 1.0).unwrap();
        assert_eq!(params.mu.frobenius_norm(), 0.0);
        let x = random_context(4, 142);
        let p = propensity(&params, &x, 0, &PropensityConfig::quadrature(64)).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn logging_policy_alpha_one_fits_separable_data() {
        let env = Environment::synthetic(6, 4, 0.0, 19).unwrap();
        let mut rng = seeding::rng_from(&[151]);
        let set = env.supervised_set(400, &mut rng).unwrap();
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            epochs: 10,
            batch_size: Some(32),
            ..OptimizerConfig::default()
        };
        let params = make_logging_policy(&env, &set, 1.0, &cfg, 1.0).unwrap();
        let holdout = env.supervised_set(300, &mut rng).unwrap();
        let correct = holdout
            .iter()
            .filter(|(x, label)| deterministic_action(&params, x).unwrap() == *label)
            .count();
        let acc = correct as f64 / holdout.len() as f64;
        assert!(acc >= 0.95, "holdout accuracy {acc}");
    }

    #[test]
    fn logging_policy_risk_monotone_in_alpha() {
        let env = Environment::synthetic_with_eval(6, 4, 0.2, 29, 400).unwrap();
        let mut rng = seeding::rng_from(&[161]);
        let set = env.supervised_set(400, &mut rng).unwrap();
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            epochs: 10,
            batch_size: Some(32),
            ..OptimizerConfig::default()
        };
        let mut risks = Vec::new();
        for alpha in [0.0, 0.2, 1.0] {
            let params = make_logging_policy(&env, &set, alpha, &cfg, 1.0).unwrap();
            risks.push(env.true_risk_gaussian(&params, 64).unwrap());
        }
        assert!(risks[2] <= risks[1] && risks[1] <= risks[0], "risks {risks:?}");
    }

    #[test]
    fn point_mass_duality_with_deterministic_risk() {
        let env = Environment::synthetic_with_eval(5, 4, 0.2, 39, 300).unwrap();
        let params = random_params(4, 5, 1e-4, 171);
        let via_props = env.true_risk_gaussian(&params, 64).unwrap();
        let det = env.true_risk_deterministic(&params).unwrap();
        assert!((via_props - det).abs() < 1e-3, "{via_props} vs {det}");
    }
}
