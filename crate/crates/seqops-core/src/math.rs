//! Small numeric building blocks: a dense row-major matrix, the standard
//! normal CDF/PDF, and a Gauss–Hermite quadrature rule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::{CoreError, Result};

/// Dense row-major `rows x cols` matrix of `f64`.
///
/// Policy means are `K x d` matrices; this is deliberately minimal — just
/// the handful of operations the optimizer and gradient accumulation need.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Build from a flat row-major buffer. Errors if the length is off.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Squared Frobenius distance to `other`.
    pub fn distance_sq(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Standard normal CDF `Φ(z)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density `φ(z)`.
pub fn normal_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Gauss–Hermite quadrature rule for the physicists' weight `exp(-x^2)`.
///
/// Nodes are the roots of the degree-`n` Hermite polynomial, found by Newton
/// iteration on the orthonormal recurrence (which keeps intermediate values
/// O(1) and avoids the overflow of the raw recurrence at large `n`).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Compute an `n`-point rule. Callers on hot paths should build the rule
    /// once and reuse it; construction costs O(n^2).
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(CoreError::InvalidArgument {
                what: "quadrature order",
                detail: format!("need at least 2 nodes, got {n}"),
            });
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        // Largest roots first; each refined by Newton, seeded from the
        // previous root (classic initial guesses for Hermite zeros).
        let mut z = 0.0_f64;
        for i in 0..(n + 1) / 2 {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                // Orthonormal Hermite recurrence: p1 holds p_n(z), p2 holds
                // p_{n-1}(z) after the loop.
                let mut p1 = core::f64::consts::PI.powf(-0.25);
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-14 {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Ok(GaussHermite { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Evaluation points `(ε_i, ω_i)` such that `E_{ε~N(0,1)}[f(ε)] ≈ Σ ω_i f(ε_i)`
    /// (the change of variable `ε = √2 x` absorbs the `exp(-x^2)` weight).
    pub fn standard_normal_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(&x, &w)| (core::f64::consts::SQRT_2 * x, w * INV_SQRT_PI))
    }

    /// `E_{ε~N(0,1)}[f(ε)]` by quadrature.
    pub fn gaussian_expectation(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.standard_normal_points().map(|(e, w)| w * f(e)).sum()
    }
}

/// Largest threshold `t` drawn from `values` such that at least a `mass`
/// fraction of the values are `>= t`. Used for the margin quantile Δ_u with
/// `mass = 1 - u`; conservative in the sense that the returned threshold is
/// guaranteed to be covered by the requested probability mass.
pub fn upper_mass_threshold(values: &[f64], mass: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN values"));
    let n = sorted.len();
    // Fraction of values >= sorted[i] is (n - i) / n; find the largest
    // sorted[i] with (n - i) / n >= mass.
    let mut best = sorted[0];
    for (i, &v) in sorted.iter().enumerate() {
        if ((n - i) as f64) / (n as f64) >= mass {
            best = v;
        } else {
            break;
        }
    }
    Ok(best)
}
