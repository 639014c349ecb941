//! The limit objects: `Z_inf`, its tail, the Levy spectral function
//! `L_lambda`, the drift `d_lambda`, the characteristic function of the
//! infinitely divisible limit and the density of `Z_inf`.
//!
//! All evaluators work on one sorted sample of `Z_inf`, so identities such
//! as `L_1(x) = beta^gamma L_1(beta x)` hold exactly on it.

use std::convert::Infallible;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::offspring::{
    extinction_probability, h_law, DerivedParams, OffspringError, OffspringLaw,
};
use crate::parallel::parallel_mc;
use crate::rng::{self, domain};
use crate::trap::{GeigerSampler, SInfinitySampler};

pub const MODEL_SCHEMA: u32 = 1;

/// Everything needed to rebuild a `Z_inf` sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub schema: u32,
    pub offspring: Vec<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub p_inf: f64,
    /// Law of `W_inf` on `0, 1, 2, ...`.
    pub w_pmf: Vec<f64>,
    /// Truncation tolerance of the `S_inf` series.
    pub s_tolerance: f64,
    pub seed: u64,
}

/// One draw of `Z_inf` with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZDraw {
    pub z: f64,
    pub w: u64,
    pub reaching: u64,
    /// `S_inf / p_inf`.
    pub s_tilde: f64,
}

#[derive(Debug, Clone)]
pub struct ZInfinityModel {
    pub spec: ModelSpec,
    pub s: SInfinitySampler,
    w_cdf: Vec<f64>,
}

impl ZInfinityModel {
    pub fn new(
        law: &OffspringLaw,
        beta: f64,
        w_pmf: Vec<f64>,
        s_tolerance: f64,
        seed: u64,
    ) -> Result<Self, OffspringError> {
        let params = DerivedParams::new(law, beta)?;
        Self::from_spec(ModelSpec {
            schema: MODEL_SCHEMA,
            offspring: law.probs().to_vec(),
            beta,
            gamma: params.gamma,
            p_inf: params.p_inf,
            w_pmf,
            s_tolerance,
            seed,
        })
    }

    pub fn from_spec(spec: ModelSpec) -> Result<Self, OffspringError> {
        let law = OffspringLaw::new(spec.offspring.clone())?;
        let q = extinction_probability(&law);
        let geiger = GeigerSampler::new(&h_law(&law, q), 60);
        let s = SInfinitySampler::new(geiger, spec.beta, law.pgf_derivative(q));
        let w_cdf = rng::cumulative(&spec.w_pmf);
        Ok(Self { spec, s, w_cdf })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).expect("model spec serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if spec.schema != MODEL_SCHEMA {
            return Err(format!("unsupported model schema {}", spec.schema));
        }
        Self::from_spec(spec).map_err(|e| e.to_string())
    }

    /// `alpha_k = P[Bin(W_inf, p_inf) = k]`.
    pub fn binomial_mixture(&self) -> Vec<f64> {
        let p = self.spec.p_inf;
        let mut out = vec![0.0; self.spec.w_pmf.len()];
        for (w, &pw) in self.spec.w_pmf.iter().enumerate() {
            if pw == 0.0 {
                continue;
            }
            let mut term = (1.0 - p).powi(w as i32);
            for (k, slot) in out.iter_mut().enumerate().take(w + 1) {
                *slot += pw * term;
                term *= p / (1.0 - p) * (w - k) as f64 / (k + 1) as f64;
            }
        }
        out
    }

    /// Mass of the atom at 0.
    pub fn atom(&self) -> f64 {
        self.binomial_mixture()[0]
    }

    /// Draw number `index`.
    pub fn draw(&self, index: u64) -> ZDraw {
        let mut r = rng::stream(self.spec.seed, rng::key(domain::LIMIT, index));
        let w = rng::invert_cdf(&self.w_cdf, rng::uniform(&mut r)) as u64;
        let reaching = rng::binomial(w, self.spec.p_inf, &mut r);
        let s = self
            .s
            .sample(self.spec.seed, index, self.spec.s_tolerance)
            .value;
        let s_tilde = s / self.spec.p_inf;
        let gamma_sum: f64 = (0..reaching).map(|_| rng::exponential(&mut r)).sum();
        ZDraw {
            z: s_tilde * gamma_sum,
            w,
            reaching,
            s_tilde,
        }
    }

    pub fn draws(&self, n: u64, workers: usize) -> Vec<ZDraw> {
        parallel_mc(n, workers, |i| Ok::<_, Infallible>(self.draw(i))).unwrap_or_else(|e| match e {
            crate::parallel::ParallelError::Pool { message, .. } => panic!("{message}"),
            crate::parallel::ParallelError::ReplicaFailed { error, .. } => match error {},
        })
    }

    /// Shared-cache law of `n` draws.
    pub fn empirical(&self, n: u64, workers: usize) -> EmpiricalLaw {
        let z = self.draws(n, workers).into_iter().map(|d| d.z).collect();
        EmpiricalLaw::new(z, self.spec.beta, self.spec.gamma)
    }
}

/// A tail estimate with a 95% normal interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub low: f64,
    pub high: f64,
}

/// A truncated series with a bound on what was cut off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub remainder: f64,
    pub k_min: i32,
    pub k_max: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfValue {
    pub value: Complex64,
    /// Bound on the modulus of the omitted part of the exponent.
    pub remainder: f64,
}

/// Sorted sample of `Z_inf` with every evaluator built on it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    pub sorted: Vec<f64>,
    pub beta: f64,
    pub gamma: f64,
    first_positive: usize,
    mean: f64,
}

const DEFAULT_WINDOW: i32 = 40;
const MAX_WINDOW: i32 = 300;
const RELATIVE_REMAINDER: f64 = 1e-4;

impl EmpiricalLaw {
    pub fn new(mut sample: Vec<f64>, beta: f64, gamma: f64) -> Self {
        sample.sort_unstable_by(f64::total_cmp);
        let first_positive = sample.partition_point(|&z| z <= 0.0);
        let mean = sample.iter().sum::<f64>() / sample.len() as f64;
        Self {
            sorted: sample,
            beta,
            gamma,
            first_positive,
            mean,
        }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    fn positive(&self) -> &[f64] {
        &self.sorted[self.first_positive..]
    }

    pub fn atom(&self) -> f64 {
        self.first_positive as f64 / self.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `P[Z > x]` on the cached sample.
    pub fn tail_value(&self, x: f64) -> f64 {
        let above = self.len() - self.sorted.partition_point(|&z| z <= x);
        above as f64 / self.len() as f64
    }

    pub fn tail(&self, x: f64) -> Estimate {
        let p = self.tail_value(x);
        let half = 1.96 * (p * (1.0 - p) / self.len() as f64).sqrt();
        Estimate {
            value: p,
            low: (p - half).max(0.0),
            high: (p + half).min(1.0),
        }
    }

    /// `E[Z^r]` with a 95% interval.
    pub fn moment(&self, r: f64) -> Estimate {
        if r == 0.0 {
            return Estimate {
                value: 1.0,
                low: 1.0,
                high: 1.0,
            };
        }
        let xs: Vec<f64> = self.sorted.iter().map(|z| z.powf(r)).collect();
        let (m, se) = crate::stats::mean_se(&xs);
        Estimate {
            value: m,
            low: m - 1.96 * se,
            high: m + 1.96 * se,
        }
    }

    /// `L_1(x)` as the sum over `k` in a window, widened until the analytic
    /// remainder is below `1e-4` of the partial sum.
    pub fn spectral_l1(&self, x: f64) -> SeriesValue {
        assert!(x > 0.0, "the spectral function is evaluated on x > 0");
        let (b, g) = (self.beta, self.gamma);
        let c = 1.0 - b.powf(-g);
        let mut k = DEFAULT_WINDOW;
        loop {
            let partial: f64 = (-k..=k)
                .map(|j| b.powf(g * j as f64) * self.tail_value(x * b.powi(j)))
                .sum();
            let low = (1.0 - self.atom()) * b.powf(-g * (k + 1) as f64);
            let high =
                c * self.mean / x * b.powf((g - 1.0) * (k + 1) as f64) / (1.0 - b.powf(g - 1.0));
            let remainder = low + high;
            if remainder <= RELATIVE_REMAINDER * c * partial || k >= MAX_WINDOW {
                return SeriesValue {
                    value: -c * partial,
                    remainder,
                    k_min: -k,
                    k_max: k,
                };
            }
            k += 20;
        }
    }

    /// `L_1(x)` summed in closed form per sample: a sample `z` contributes
    /// `beta^(gamma K)` with `K` the largest `k` such that `x beta^k < z`.
    pub fn spectral_l1_exact(&self, x: f64) -> f64 {
        assert!(x > 0.0, "the spectral function is evaluated on x > 0");
        let (b, g) = (self.beta, self.gamma);
        let total: f64 = self
            .positive()
            .iter()
            .map(|&z| b.powf(g * top_level(z, x, b) as f64))
            .sum();
        -total / self.len() as f64
    }

    /// `L_lambda(x) = lambda^gamma L_1(lambda x)`.
    pub fn spectral_llambda(&self, lambda: f64, x: f64) -> f64 {
        lambda.powf(self.gamma) * self.spectral_l1_exact(lambda * x)
    }

    /// `d_lambda` over `k` in a window widened until the remainder is small.
    pub fn drift(&self, lambda: f64) -> SeriesValue {
        let (b, g) = (self.beta, self.gamma);
        let c = 1.0 - b.powf(-g);
        let scale = lambda.powf(1.0 + g) * c;
        let n = self.len() as f64;
        let mut k = DEFAULT_WINDOW;
        loop {
            let mut partial = 0.0;
            for j in -k..=k {
                let a = lambda * b.powi(j);
                let a2 = a * a;
                let m: f64 = self
                    .positive()
                    .iter()
                    .map(|&z| z / (a2 + z * z))
                    .sum::<f64>()
                    / n;
                partial += b.powf((1.0 + g) * j as f64) * m;
            }
            let high = self.mean / (lambda * lambda) * b.powf((g - 1.0) * (k + 1) as f64)
                / (1.0 - b.powf(g - 1.0));
            let low = (1.0 - self.atom()) / (2.0 * lambda) * b.powf(-g * (k + 1) as f64)
                / (1.0 - b.powf(-g));
            let remainder = scale * (high + low);
            if remainder <= RELATIVE_REMAINDER * scale * partial || k >= MAX_WINDOW {
                return SeriesValue {
                    value: scale * partial,
                    remainder,
                    k_min: -k,
                    k_max: k,
                };
            }
            k += 20;
        }
    }

    /// Exponent `(1 - beta^-gamma) lambda^gamma sum_k beta^(gamma k)
    /// E[exp(i t Z / (lambda beta^k)) - 1]` over `|k| <= window`.
    fn cf_exponent(&self, lambda: f64, t: f64, window: i32, compensated: bool) -> (Complex64, f64) {
        let (b, g) = (self.beta, self.gamma);
        let scale = (1.0 - b.powf(-g)) * lambda.powf(g);
        let n = self.len() as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in -window..=window {
            let a = lambda * b.powi(j);
            let (mut re, mut im) = (0.0, 0.0);
            for &z in self.positive() {
                let x = z / a;
                let (s, co) = (t * x).sin_cos();
                re += co - 1.0;
                im += if compensated {
                    s - t * x / (1.0 + x * x)
                } else {
                    s
                };
            }
            acc += Complex64::new(re, im) * (b.powf(g * j as f64) / n);
        }
        let high = t.abs() * self.mean / lambda * b.powf((g - 1.0) * (window + 1) as f64)
            / (1.0 - b.powf(g - 1.0));
        let low = 2.0 * (1.0 - self.atom()) * b.powf(-g * (window + 1) as f64) / (1.0 - b.powf(-g));
        (acc * scale, scale * (high + low))
    }

    /// Characteristic function of the infinitely divisible law with drift
    /// `d_lambda` and spectral function `L_lambda`. The compensator of the
    /// Levy integral cancels the drift, so the exponent is summed directly.
    pub fn char_function(&self, lambda: f64, t: f64, window: i32) -> CfValue {
        let (e, remainder) = self.cf_exponent(lambda, t.abs(), window, false);
        let v = e.exp();
        CfValue {
            value: if t < 0.0 { v.conj() } else { v },
            remainder,
        }
    }

    /// The same characteristic function assembled as
    /// `exp(i d t + int (e^(itx) - 1 - itx/(1+x^2)) dL_lambda(x))`.
    pub fn char_function_levy(&self, lambda: f64, t: f64, window: i32) -> CfValue {
        let d = self.drift(lambda);
        let (e, remainder) = self.cf_exponent(lambda, t.abs(), window, true);
        let v = (e + Complex64::new(0.0, d.value * t.abs())).exp();
        CfValue {
            value: if t < 0.0 { v.conj() } else { v },
            remainder: remainder + d.remainder * t.abs(),
        }
    }

    /// Characteristic function of the limit `Y_lambda` of
    /// `Delta_n / n^(1/gamma)` along `n_lambda(k)`, where
    /// `Y_lambda = (rho C_a)^(1/gamma) Y~_L` with `L = (rho C_a lambda)^(1/gamma)`.
    pub fn hitting_char_function(
        &self,
        rho: f64,
        c_a: f64,
        lambda: f64,
        t: f64,
        window: i32,
    ) -> CfValue {
        let c = (rho * c_a).powf(1.0 / self.gamma);
        let l = (rho * c_a * lambda).powf(1.0 / self.gamma);
        self.char_function(l, c * t, window)
    }

    /// `x^gamma L_1(x)` on `x in [1, beta]`, constant only if the limit laws
    /// along different subsequences coincide.
    pub fn normalised_spectral(&self, points: usize) -> Vec<(f64, f64)> {
        (0..points)
            .map(|i| {
                let x = self.beta.powf(i as f64 / (points - 1) as f64);
                (x, x.powf(self.gamma) * self.spectral_l1_exact(x))
            })
            .collect()
    }
}

/// Largest `k` with `x beta^k < z`.
fn top_level(z: f64, x: f64, b: f64) -> i32 {
    let mut k = ((z / x).ln() / b.ln()).ceil() as i32 - 1;
    while x * b.powi(k + 1) < z {
        k += 1;
    }
    while x * b.powi(k) >= z {
        k -= 1;
    }
    k
}

/// Density of the continuous part of `Z_inf` on `grid`, averaged over draws
/// of `S~ = S_inf / p_inf`:
/// `psi(v) = E[ (1/S~) e^(-v/S~) sum_(k>=1) alpha_k (v/S~)^(k-1) / (k-1)! ]`.
pub fn density_psi(alpha: &[f64], s_tilde: &[f64], grid: &[f64]) -> Vec<f64> {
    let ln_alpha: Vec<(usize, f64)> = alpha
        .iter()
        .enumerate()
        .skip(1)
        .filter(|&(_, &a)| a > 0.0)
        .map(|(k, &a)| (k, a.ln() - ln_gamma(k as f64)))
        .collect();
    grid.iter()
        .map(|&v| {
            let total: f64 = s_tilde
                .iter()
                .map(|&s| {
                    let u = v / s;
                    let lu = u.ln();
                    ln_alpha
                        .iter()
                        .map(|&(k, la)| {
                            if k == 1 {
                                (la - u).exp()
                            } else if u == 0.0 {
                                0.0
                            } else {
                                (la + (k - 1) as f64 * lu - u).exp()
                            }
                        })
                        .sum::<f64>()
                        / s
                })
                .sum();
            total / s_tilde.len() as f64
        })
        .collect()
}

/// Composite Simpson rule on an evenly spaced grid with an even number of
/// intervals.
pub fn simpson(values: &[f64], step: f64) -> f64 {
    assert!(
        values.len() % 2 == 1,
        "Simpson's rule needs an odd number of points"
    );
    let n = values.len() - 1;
    let mut s = values[0] + values[n];
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * step / 3.0
}
