//! Triangular arrays `Y = Z beta^X` with lattice exponents, and the toy sum
//! `S_n = sum beta^(G_i)` with geometric `G_i`.

use std::convert::Infallible;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::offspring::HeightTail;
use crate::parallel::{parallel_mc, ParallelError};
use crate::rng::{self, domain};
use crate::trap::ChiStarSampler;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IidError {
    #[error("alpha = {alpha} must lie in (0, 1)")]
    AlphaOutOfRange { alpha: f64 },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("unrecognised cutoff {0:?}; expected \"l - c*log(l)\", \"l - c\" or a constant")]
    Cutoff(String),
}

/// `alpha = -ln(1 - a) / ln beta`.
pub fn toy_alpha(beta: f64, a: f64) -> f64 {
    -(1.0 - a).ln() / beta.ln()
}

/// Geometric variable on `1, 2, ...` with `P[G >= k] = (1-a)^(k-1)`.
pub fn sample_geometric<R: RngCore + ?Sized>(a: f64, rng: &mut R) -> u64 {
    1 + rng::geometric_failures(a, rng)
}

/// The toy sum of `n` terms `beta^G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySum {
    pub beta: f64,
    pub a: f64,
    pub alpha: f64,
}

impl ToySum {
    pub fn new(beta: f64, a: f64) -> Result<Self, IidError> {
        if !(beta > 1.0) || !(a > 0.0 && a < 1.0) {
            return Err(IidError::Invalid(format!("beta = {beta}, a = {a}")));
        }
        let alpha = toy_alpha(beta, a);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(IidError::AlphaOutOfRange { alpha });
        }
        Ok(Self { beta, a, alpha })
    }

    /// The toy sum with a prescribed `alpha`.
    pub fn with_alpha(beta: f64, alpha: f64) -> Result<Self, IidError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(IidError::AlphaOutOfRange { alpha });
        }
        Self::new(beta, 1.0 - beta.powf(-alpha))
    }

    /// `n(k) = floor(lambda beta^(alpha k))`.
    pub fn subsequence(&self, lambda: f64, k: u32) -> u64 {
        (lambda * self.beta.powf(self.alpha * k as f64)).floor() as u64
    }

    pub fn sum<R: RngCore + ?Sized>(&self, n: u64, rng: &mut R) -> f64 {
        (0..n)
            .map(|_| self.beta.powi(sample_geometric(self.a, rng) as i32))
            .sum()
    }

    /// Same law as [`ToySum::sum`], through the level counts
    /// `c_j ~ Bin(n - c_1 - ... - c_(j-1), a)` of `G = j`.
    pub fn sum_by_levels<R: RngCore + ?Sized>(&self, n: u64, rng: &mut R) -> f64 {
        let mut left = n;
        let mut total = 0.0;
        let mut j = 1;
        while left > 0 {
            let c = Binomial::new(left, self.a)
                .expect("a in (0, 1)")
                .sample(rng);
            total += c as f64 * self.beta.powi(j);
            left -= c;
            j += 1;
        }
        total
    }

    /// `replicas` draws of `S_n / n^(1/alpha)`.
    pub fn rescaled(&self, n: u64, replicas: u64, seed: u64, workers: usize) -> Vec<f64> {
        let scale = (n as f64).powf(1.0 / self.alpha);
        run(replicas, workers, |i| {
            let mut r = rng::stream(seed, rng::key(domain::ARRAY, rng::mix64(n, i)));
            self.sum_by_levels(n, &mut r) / scale
        })
    }

    /// `n Var(Y 1{Y <= tau K}) / K^2` with `K = n^(1/alpha)`, in closed form.
    pub fn truncated_variance(&self, n: u64, tau: f64) -> f64 {
        let k = (n as f64).powf(1.0 / self.alpha);
        let (mut m1, mut m2) = (0.0, 0.0);
        let mut j = 1;
        loop {
            let y = self.beta.powi(j);
            if y > tau * k {
                break;
            }
            let p = self.a * (1.0 - self.a).powi(j - 1);
            m1 += p * y;
            m2 += p * y * y;
            j += 1;
        }
        n as f64 * (m2 - m1 * m1) / (k * k)
    }

    /// The toy sum as an array: `X = G - 1`, `Z = beta`, no cutoff.
    pub fn as_array(&self, lambda: f64) -> ArraySpec {
        ArraySpec {
            beta: self.beta,
            gamma: self.alpha,
            cutoff: Cutoff::Constant(0),
            lambda,
            x: Box::new(GeometricLattice::new(self.beta, self.alpha)),
            z: Box::new(ConstantZ(self.beta)),
        }
    }
}

fn run<T: Send>(replicas: u64, workers: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    parallel_mc(replicas, workers, |i| Ok::<_, Infallible>(f(i))).unwrap_or_else(|e| match e {
        ParallelError::Pool { message, .. } => panic!("{message}"),
        ParallelError::ReplicaFailed { error, .. } => match error {},
    })
}

/// The cutoff `f(l)` below which exponents are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cutoff {
    /// `f(l) = floor(l - c ln l)`.
    LogGap(f64),
    /// `f(l) = l - c`; the gap does not grow, so this only serves fixed-size
    /// checks.
    FixedGap(u32),
    /// `f(l) = c`.
    Constant(u32),
}

impl Cutoff {
    pub fn at(&self, l: u32) -> u32 {
        match *self {
            Cutoff::LogGap(c) => {
                let lf = l as f64;
                (lf - c * lf.max(1.0).ln()).floor().max(0.0) as u32
            }
            Cutoff::FixedGap(c) => l.saturating_sub(c),
            Cutoff::Constant(c) => c.min(l),
        }
    }

    /// Whether `l - f(l)` grows without bound.
    pub fn gap_diverges(&self) -> bool {
        match *self {
            Cutoff::LogGap(c) => c > 0.0,
            Cutoff::FixedGap(_) => false,
            Cutoff::Constant(_) => true,
        }
    }
}

impl FromStr for Cutoff {
    type Err = IidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let err = || IidError::Cutoff(s.to_string());
        if let Some(rest) = compact.strip_prefix("l-") {
            if let Some(c) = rest.strip_suffix("*log(l)") {
                return c.parse().map(Cutoff::LogGap).map_err(|_| err());
            }
            if rest == "log(l)" {
                return Ok(Cutoff::LogGap(1.0));
            }
            return rest.parse().map(Cutoff::FixedGap).map_err(|_| err());
        }
        compact.parse().map(Cutoff::Constant).map_err(|_| err())
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::LogGap(c) => write!(f, "l - {c}*log(l)"),
            Cutoff::FixedGap(c) => write!(f, "l - {c}"),
            Cutoff::Constant(c) => write!(f, "{c}"),
        }
    }
}

/// Integer exponent law with `P[X >= n] ~ C_X beta^(-gamma n)`.
pub trait LatticeLaw: Send + Sync {
    /// `P[X >= n]`.
    fn tail(&self, n: u32) -> f64;
    /// A draw of `X` conditioned on `X >= m`.
    fn sample_at_least(&self, m: u32, rng: &mut dyn RngCore) -> u32;
}

/// Law of `Z` given `X = x`.
pub trait ConditionalZ: Send + Sync {
    fn sample(&self, x: u32, rng: &mut dyn RngCore) -> f64;
}

/// `P[X >= n] = beta^(-gamma n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricLattice {
    pub beta: f64,
    pub gamma: f64,
}

impl GeometricLattice {
    pub fn new(beta: f64, gamma: f64) -> Self {
        Self { beta, gamma }
    }
}

impl LatticeLaw for GeometricLattice {
    fn tail(&self, n: u32) -> f64 {
        self.beta.powf(-self.gamma * n as f64)
    }

    fn sample_at_least(&self, m: u32, rng: &mut dyn RngCore) -> u32 {
        m + rng::geometric_failures(1.0 - self.beta.powf(-self.gamma), rng) as u32
    }
}

/// Trap heights: `P[H >= n]` from the height tail of the `h` law.
#[derive(Debug, Clone)]
pub struct HeightLattice {
    pub tail: HeightTail,
}

impl LatticeLaw for HeightLattice {
    fn tail(&self, n: u32) -> f64 {
        self.tail.values[n as usize]
    }

    fn sample_at_least(&self, m: u32, rng: &mut dyn RngCore) -> u32 {
        let lv = &self.tail.log_values;
        let target = lv[m as usize] + rng::open_uniform(rng).ln();
        let mut n = m as usize;
        while n + 1 < lv.len() && lv[n + 1] > target {
            n += 1;
        }
        n as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantZ(pub f64);

impl ConditionalZ for ConstantZ {
    fn sample(&self, _x: u32, _rng: &mut dyn RngCore) -> f64 {
        self.0
    }
}

/// Exponential with the given mean, independent of `X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialZ(pub f64);

impl ConditionalZ for ExponentialZ {
    fn sample(&self, _x: u32, rng: &mut dyn RngCore) -> f64 {
        self.0 * rng::exponential(rng)
    }
}

/// `chi* / beta^H` for a trap of height `H`.
#[derive(Debug, Clone)]
pub struct TrapZ {
    pub sampler: ChiStarSampler,
}

impl ConditionalZ for TrapZ {
    fn sample(&self, x: u32, rng: &mut dyn RngCore) -> f64 {
        self.sampler.sample(x, &mut &mut *rng).chi_star / self.sampler.beta.powi(x as i32)
    }
}

/// A triangular array `Y_i = Z_i beta^(X_i)` with `X_i` conditioned on
/// `X_i >= f(l)`, summed over `N_l = floor(lambda^gamma beta^(gamma (l - f(l))))`
/// terms and divided by `K_l = lambda beta^l`.
pub struct ArraySpec {
    pub beta: f64,
    pub gamma: f64,
    pub cutoff: Cutoff,
    pub lambda: f64,
    pub x: Box<dyn LatticeLaw>,
    pub z: Box<dyn ConditionalZ>,
}

impl ArraySpec {
    pub fn terms(&self, l: u32) -> u64 {
        let gap = (l - self.cutoff.at(l)) as f64;
        (self.lambda.powf(self.gamma) * self.beta.powf(self.gamma * gap)).floor() as u64
    }

    pub fn scale(&self, l: u32) -> f64 {
        self.lambda * self.beta.powi(l as i32)
    }

    /// One term `Y^(l)`.
    pub fn term(&self, l: u32, rng: &mut dyn RngCore) -> f64 {
        let x = self.x.sample_at_least(self.cutoff.at(l), rng);
        self.z.sample(x, rng) * self.beta.powi(x as i32)
    }

    /// `replicas` draws of `S_(N_l) / K_l`.
    pub fn triangular_sum(&self, l: u32, replicas: u64, seed: u64, workers: usize) -> Vec<f64> {
        let n = self.terms(l);
        let k = self.scale(l);
        run(replicas, workers, |i| {
            let mut r = rng::stream(seed, rng::key(domain::ARRAY, rng::mix64(l as u64, i)));
            (0..n).map(|_| self.term(l, &mut r)).sum::<f64>() / k
        })
    }

    /// Empirical `P[Y^(l) / K_l > eps]`.
    pub fn single_term_tail(&self, l: u32, eps: f64, draws: u64, seed: u64) -> f64 {
        let mut r = rng::stream(
            seed,
            rng::key(domain::ARRAY, rng::mix64(u64::MAX - l as u64, 0)),
        );
        let k = self.scale(l);
        let hits = (0..draws)
            .filter(|_| self.term(l, &mut r) / k > eps)
            .count();
        hits as f64 / draws as f64
    }

    /// Monte Carlo `N_l Var(Y 1{Y <= tau K_l}) / K_l^2`.
    pub fn truncated_variance(&self, l: u32, tau: f64, draws: u64, seed: u64) -> f64 {
        let mut r = rng::stream(
            seed,
            rng::key(domain::ARRAY, rng::mix64(u64::MAX / 2 - l as u64, 1)),
        );
        let k = self.scale(l);
        let xs: Vec<f64> = (0..draws)
            .map(|_| {
                let y = self.term(l, &mut r) / k;
                if y <= tau {
                    y
                } else {
                    0.0
                }
            })
            .collect();
        let m = xs.iter().sum::<f64>() / draws as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
        self.terms(l) as f64 * v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_range() {
        assert!(matches!(
            ToySum::new(20.0, 0.99),
            Err(IidError::AlphaOutOfRange { .. })
        ));
        let t = ToySum::with_alpha(20.0, 0.5).unwrap();
        assert!((t.alpha - 0.5).abs() < 1e-12);
        assert_eq!(
            (1..=6).map(|k| t.subsequence(1.0, k)).collect::<Vec<_>>(),
            vec![4, 20, 89, 400, 1788, 8000]
        );
    }

    #[test]
    fn degenerate_geometric_is_one() {
        let mut r = rng::stream(1, 1);
        assert!((0..100).all(|_| sample_geometric(1.0, &mut r) == 1));
    }

    #[test]
    fn geometric_tail() {
        let mut r = rng::stream(2, 1);
        let a = 0.3;
        let n = 200_000;
        let ge3 = (0..n).filter(|_| sample_geometric(a, &mut r) >= 3).count() as f64 / n as f64;
        assert!((ge3 - 0.49).abs() < 0.005, "{ge3}");
    }

    #[test]
    fn cutoff_parsing() {
        assert_eq!(
            "l - 2*log(l)".parse::<Cutoff>().unwrap(),
            Cutoff::LogGap(2.0)
        );
        assert_eq!("l - 3".parse::<Cutoff>().unwrap(), Cutoff::FixedGap(3));
        assert_eq!("0".parse::<Cutoff>().unwrap(), Cutoff::Constant(0));
        assert!("l^2".parse::<Cutoff>().is_err());
        assert_eq!(
            Cutoff::LogGap(2.0).at(20),
            (20.0 - 2.0 * 20f64.ln()).floor() as u32
        );
        assert!(!Cutoff::FixedGap(3).gap_diverges());
    }

    #[test]
    fn constant_array_is_deterministic() {
        let spec = ArraySpec {
            beta: 5.0,
            gamma: 0.5,
            cutoff: Cutoff::Constant(0),
            lambda: 1.0,
            x: Box::new(ZeroLattice),
            z: Box::new(ConstantZ(1.0)),
        };
        let s = spec.triangular_sum(6, 10, 1, 2);
        let expect = spec.terms(6) as f64 / spec.scale(6);
        assert!(s.iter().all(|&v| (v - expect).abs() < 1e-12));
    }

    struct ZeroLattice;

    impl LatticeLaw for ZeroLattice {
        fn tail(&self, n: u32) -> f64 {
            if n == 0 {
                1.0
            } else {
                0.0
            }
        }

        fn sample_at_least(&self, m: u32, _rng: &mut dyn RngCore) -> u32 {
            m
        }
    }

    #[test]
    fn toy_matches_array_form() {
        let t = ToySum::with_alpha(20.0, 0.5).unwrap();
        let spec = t.as_array(1.0);
        assert_eq!(spec.terms(4), 400);
        assert_eq!(spec.scale(4), 160_000.0);
        assert_eq!(t.subsequence(1.0, 4), 400);
    }

    #[test]
    fn level_counts_match_direct_sum() {
        let t = ToySum::with_alpha(20.0, 0.5).unwrap();
        let mut r = rng::stream(4, 0);
        let a: Vec<f64> = (0..20_000).map(|_| t.sum(89, &mut r)).collect();
        let b: Vec<f64> = (0..20_000).map(|_| t.sum_by_levels(89, &mut r)).collect();
        let d = crate::stats::ks_distance(&a, &b);
        assert!(d < 0.02, "KS {d}");
        assert_eq!(t.sum_by_levels(0, &mut r), 0.0);
    }

    #[test]
    fn height_lattice_conditioning() {
        use crate::offspring::{h_law, height_tail, OffspringLaw};
        let law = OffspringLaw::new(vec![0.2, 0.0, 0.8]).unwrap();
        let lat = HeightLattice {
            tail: height_tail(&h_law(&law, 0.25), 100),
        };
        let mut r = rng::stream(3, 0);
        let n = 100_000;
        let xs: Vec<u32> = (0..n).map(|_| lat.sample_at_least(2, &mut r)).collect();
        assert!(xs.iter().all(|&x| x >= 2));
        let p3 = xs.iter().filter(|&&x| x >= 3).count() as f64 / n as f64;
        let expect = lat.tail(3) / lat.tail(2);
        assert!((p3 - expect).abs() < 0.006, "{p3} vs {expect}");
    }
}
