//! Offspring laws and the quantities derived from them.
//!
//! A supercritical law `p` with `p_0 > 0` has extinction probability `q`.
//! Conditioning on survival splits the tree into a backbone, whose degrees
//! follow the `g` law, and finite traps, which are Galton-Watson trees with
//! the subcritical `h` law `q_k = p_k q^(k-1)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OffspringError {
    #[error("offspring law is empty")]
    Empty,
    #[error("negative probability {p} at k = {k}")]
    NegativeProbability { k: usize, p: f64 },
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("p_0 must be positive for the tree to have leaves")]
    NoLeaves,
    #[error("mean offspring {mean} is not above 1")]
    NotSupercritical { mean: f64 },
    #[error("beta = {beta} must exceed 1")]
    BetaTooSmall { beta: f64 },
    #[error("beta = {beta} is not below the critical bias {beta_c}; the walk is ballistic")]
    NotSubballistic { beta: f64, beta_c: f64 },
    #[error("backbone degree {j} has probability zero")]
    DegreeImpossible { j: usize },
}

/// A probability law on the nonnegative integers with finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    probs: Vec<f64>,
}

impl OffspringLaw {
    /// Builds a law from dense probabilities `probs[k] = P[Z = k]`.
    pub fn new(probs: Vec<f64>) -> Result<Self, OffspringError> {
        let law = Self::from_dense_unchecked(probs);
        law.check_probability()?;
        if law.p(0) <= 0.0 {
            return Err(OffspringError::NoLeaves);
        }
        let mean = law.mean();
        if mean <= 1.0 {
            return Err(OffspringError::NotSupercritical { mean });
        }
        Ok(law)
    }

    /// Builds a law from a sparse map such as `{"0": 0.2, "2": 0.8}`.
    pub fn from_map(map: &BTreeMap<usize, f64>) -> Result<Self, OffspringError> {
        let max = *map.keys().next_back().ok_or(OffspringError::Empty)?;
        let mut probs = vec![0.0; max + 1];
        for (&k, &p) in map {
            probs[k] = p;
        }
        Self::new(probs)
    }

    /// Any probability vector, without the supercritical-with-leaves checks.
    /// Used for the derived laws `h` and `g`.
    pub fn probability(probs: Vec<f64>) -> Result<Self, OffspringError> {
        let law = Self::from_dense_unchecked(probs);
        law.check_probability()?;
        Ok(law)
    }

    fn from_dense_unchecked(mut probs: Vec<f64>) -> Self {
        while probs.len() > 1 && probs.last() == Some(&0.0) {
            probs.pop();
        }
        Self { probs }
    }

    fn check_probability(&self) -> Result<(), OffspringError> {
        if self.probs.is_empty() {
            return Err(OffspringError::Empty);
        }
        for (k, &p) in self.probs.iter().enumerate() {
            if !(p >= 0.0) {
                return Err(OffspringError::NegativeProbability { k, p });
            }
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(OffspringError::NotNormalized { sum });
        }
        Ok(())
    }

    pub fn p(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_degree(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, p)| p > 0.0)
    }

    pub fn to_map(&self) -> BTreeMap<usize, f64> {
        self.support().collect()
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(k, p)| k as f64 * p).sum()
    }

    /// Generating function `f(s) = sum_k p_k s^k`.
    pub fn pgf(&self, s: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }

    /// Derivative `f'(s)`.
    pub fn pgf_derivative(&self, s: f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &p)| acc * s + k as f64 * p)
    }

    /// `1 - f(1 - x)`, accurate for small `x`.
    pub fn pgf_complement(&self, x: f64) -> f64 {
        let l = (-x).ln_1p();
        self.support()
            .filter(|&(k, _)| k > 0)
            .map(|(k, p)| p * -(k as f64 * l).exp_m1())
            .sum()
    }

    /// `f(s) - f(s - x)`, accurate for small `x`.
    pub fn pgf_decrement(&self, s: f64, x: f64) -> f64 {
        if s <= 0.0 {
            return self.pgf(s) - self.pgf(s - x);
        }
        let l = (-x / s).ln_1p();
        self.support()
            .filter(|&(k, _)| k > 0)
            .map(|(k, p)| p * s.powi(k as i32) * -(k as f64 * l).exp_m1())
            .sum()
    }

    /// Cumulative distribution, for inverse-CDF sampling.
    pub fn cdf(&self) -> Vec<f64> {
        crate::rng::cumulative(&self.probs)
    }
}

/// Smallest root of `f(s) = s` in `[0, 1)`, by bisection to `1e-14`.
pub fn extinction_probability(law: &OffspringLaw) -> f64 {
    let phi = |s: f64| law.pgf(s) - s;
    let mut lo = 0.0;
    let mut width = 0.5;
    let mut hi = 1.0 - width;
    while phi(hi) >= 0.0 {
        lo = hi;
        width *= 0.5;
        hi = 1.0 - width;
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Subcritical law of a trap: `q_k = p_k q^(k-1)`.
pub fn h_law(law: &OffspringLaw, q: f64) -> OffspringLaw {
    let probs = law
        .probs()
        .iter()
        .enumerate()
        .map(|(k, &p)| p * q.powi(k as i32 - 1))
        .collect::<Vec<_>>();
    let sum: f64 = probs.iter().sum();
    let probs = probs.into_iter().map(|p| p / sum).collect();
    OffspringLaw::probability(probs).expect("h law is a probability vector")
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Backbone degree law `g_j = sum_{k>=j} p_k C(k,j) (1-q)^(j-1) q^(k-j)`, `j >= 1`.
pub fn g_law(law: &OffspringLaw, q: f64) -> OffspringLaw {
    let kmax = law.max_degree();
    let mut probs = vec![0.0; kmax + 1];
    for (j, slot) in probs.iter_mut().enumerate().skip(1) {
        *slot = (j..=kmax)
            .map(|k| law.p(k) * binom(k, j) * (1.0 - q).powi(j as i32 - 1) * q.powi((k - j) as i32))
            .sum();
    }
    let sum: f64 = probs.iter().sum();
    let probs = probs.into_iter().map(|p| p / sum).collect();
    OffspringLaw::probability(probs).expect("g law is a probability vector")
}

/// Number of buds at a backbone vertex with `j` backbone children:
/// `P[i buds] ∝ p_(i+j) C(i+j, j) q^i (1-q)^j`.
pub fn backbone_bud_law(
    law: &OffspringLaw,
    q: f64,
    j: usize,
) -> Result<OffspringLaw, OffspringError> {
    if j == 0 || j > law.max_degree() {
        return Err(OffspringError::DegreeImpossible { j });
    }
    let probs: Vec<f64> = (0..=law.max_degree() - j)
        .map(|i| law.p(i + j) * binom(i + j, j) * q.powi(i as i32) * (1.0 - q).powi(j as i32))
        .collect();
    let sum: f64 = probs.iter().sum();
    if sum <= 0.0 {
        return Err(OffspringError::DegreeImpossible { j });
    }
    OffspringLaw::probability(probs.into_iter().map(|p| p / sum).collect())
}

/// Parameters derived from the offspring law and the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub q: f64,
    pub m: f64,
    pub fprime_q: f64,
    pub beta_c: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Escape probability `1 - 1/beta` of the biased walk on the half-line.
    pub p_inf: f64,
}

impl DerivedParams {
    pub fn new(law: &OffspringLaw, beta: f64) -> Result<Self, OffspringError> {
        if !(beta > 1.0) {
            return Err(OffspringError::BetaTooSmall { beta });
        }
        let q = extinction_probability(law);
        let fprime_q = law.pgf_derivative(q);
        let gamma = gamma_exponent(fprime_q, beta)?;
        Ok(Self {
            q,
            m: law.mean(),
            fprime_q,
            beta_c: 1.0 / fprime_q,
            beta,
            gamma,
            p_inf: 1.0 - 1.0 / beta,
        })
    }

    /// `-ln f'(q)`, the decay rate of trap heights.
    pub fn height_rate(&self) -> f64 {
        -self.fprime_q.ln()
    }
}

/// `gamma = -ln f'(q) / ln beta`, defined for `beta > 1/f'(q)`.
pub fn gamma_exponent(fprime_q: f64, beta: f64) -> Result<f64, OffspringError> {
    let beta_c = 1.0 / fprime_q;
    if !(beta > beta_c) {
        return Err(OffspringError::NotSubballistic { beta, beta_c });
    }
    Ok(-fprime_q.ln() / beta.ln())
}

/// Tail of the height of an `h`-Galton-Watson tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightTail {
    /// `values[n] = Q[H >= n]`; may underflow to zero, see `log_values`.
    pub values: Vec<f64>,
    pub log_values: Vec<f64>,
    /// Estimate of `alpha = lim Q[H >= n] / f'(q)^n`.
    pub alpha: f64,
    pub alpha_error: f64,
}

impl HeightTail {
    pub fn eta(&self, n: usize) -> f64 {
        self.values[n]
    }

    /// `Q[H = n]`.
    pub fn point(&self, n: usize) -> f64 {
        self.values[n] - self.values[n + 1]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Iterates `s_(n+1) = h(s_n)` from `s_0 = 0` in complement form, so that
/// `1 - s_n` keeps full relative precision. Values below `1e-300` continue
/// in the logarithmic domain using the linear regime `t_(n+1) ≈ h'(1) t_n`.
pub fn height_tail(h: &OffspringLaw, n_max: usize) -> HeightTail {
    let slope = h.mean();
    let mut values = Vec::with_capacity(n_max + 2);
    let mut log_values = Vec::with_capacity(n_max + 2);
    let mut t: f64 = 1.0;
    let mut log_t = 0.0;
    for _ in 0..=n_max + 1 {
        values.push(t);
        log_values.push(log_t);
        if t > 1e-300 {
            t = h.pgf_complement(t);
            log_t = t.ln();
        } else {
            log_t += slope.ln();
            t = log_t.exp();
        }
    }
    let ratio = |n: usize| (log_values[n] - n as f64 * slope.ln()).exp();
    let alpha = ratio(n_max);
    let alpha_error = (alpha - ratio(n_max - 1)).abs();
    HeightTail {
        values,
        log_values,
        alpha,
        alpha_error,
    }
}

/// `c_n = Q[H = n] / Q[H = n + 1]`.
pub fn geiger_cn(tail: &HeightTail, n: usize) -> f64 {
    tail.point(n) / tail.point(n + 1)
}

/// Probability that a backbone vertex carries a trap of height at least `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BigTrapProbability {
    pub exact: f64,
    /// `C_a f'(q)^h` with `C_a = alpha q (m - f'(q)) / (1 - q)`.
    pub asymptotic: f64,
}

/// `1 - (f((1-eta)q + 1 - q) - f((1-eta)q)) / (1 - q)` with `eta = Q[H >= h]`.
pub fn big_trap_root_probability(
    law: &OffspringLaw,
    params: &DerivedParams,
    tail: &HeightTail,
    h: usize,
) -> BigTrapProbability {
    let q = params.q;
    let eta = tail.eta(h);
    let x = eta * q;
    let exact = (law.pgf_complement(x) - law.pgf_decrement(q, x)) / (1.0 - q);
    let asymptotic = trap_constant(params, tail) * params.fprime_q.powi(h as i32);
    BigTrapProbability { exact, asymptotic }
}

/// `C_a = alpha q (m - f'(q)) / (1 - q)`.
pub fn trap_constant(params: &DerivedParams, tail: &HeightTail) -> f64 {
    tail.alpha * params.q * (params.m - params.fprime_q) / (1.0 - params.q)
}
