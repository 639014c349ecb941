//! Counter-based random streams and inverse-CDF samplers.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream selected
//! by a `(seed, stream id)` pair, so results never depend on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain tags used to separate independent stream families.
pub mod domain {
    pub const ENVIRONMENT: u64 = 0x656e_7669;
    pub const WALK: u64 = 0x7761_6c6b;
    pub const BACKBONE: u64 = 0x6261_636b;
    pub const TRAP: u64 = 0x7472_6170;
    pub const LIMIT: u64 = 0x6c69_6d74;
    pub const ARRAY: u64 = 0x6172_7279;
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
}

/// SplitMix64-style finaliser combining two words into one key.
#[inline]
pub fn mix64(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key for replica `index` inside the stream family `domain`.
#[inline]
pub fn key(domain: u64, index: u64) -> u64 {
    mix64(domain, index)
}

/// ChaCha8 generator keyed by `seed`, positioned at the start of `stream`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(0);
    rng
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Uniform on `(0, 1]`, safe to take logarithms of.
#[inline]
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Standard exponential by inversion.
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    -open_uniform(rng).ln()
}

/// Number of failures before the first success, success probability `p`.
#[inline]
pub fn geometric_failures<R: RngCore + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    let u = open_uniform(rng);
    let g = (u.ln() / (-p).ln_1p()).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

/// Binomial(n, p) by sequential inversion of the pmf.
pub fn binomial<R: RngCore + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let u = uniform(rng);
    let ratio = p / (1.0 - p);
    let mut pmf = (n as f64 * (-p).ln_1p()).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    while u >= cdf && k < n {
        pmf *= ratio * (n - k) as f64 / (k + 1) as f64;
        k += 1;
        cdf += pmf;
    }
    k
}

/// Standard normal by the Box-Muller transform.
pub fn normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u1 = open_uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Smallest index `i` with `u < cdf[i]`; the last index absorbs rounding.
#[inline]
pub fn invert_cdf(cdf: &[f64], u: f64) -> usize {
    let i = cdf.partition_point(|&c| c <= u);
    i.min(cdf.len() - 1)
}

/// Cumulative sums of a probability vector.
pub fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream(7, 3);
        let mut b = stream(7, 3);
        let mut c = stream(7, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn binomial_mean_and_variance() {
        let mut rng = stream(1, 1);
        let n = 12;
        let p = 0.3;
        let m = 200_000;
        let xs: Vec<f64> = (0..m).map(|_| binomial(n, p, &mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
        assert!((mean - 3.6).abs() < 0.02, "{mean}");
        assert!((var - 2.52).abs() < 0.05, "{var}");
    }

    #[test]
    fn geometric_failures_mean() {
        let mut rng = stream(2, 1);
        let p = 0.2;
        let m = 200_000;
        let mean = (0..m)
            .map(|_| geometric_failures(p, &mut rng) as f64)
            .sum::<f64>()
            / m as f64;
        assert!((mean - 4.0).abs() < 0.05, "{mean}");
        assert_eq!(geometric_failures(1.0, &mut rng), 0);
    }

    #[test]
    fn invert_cdf_edges() {
        let cdf = cumulative(&[0.2, 0.0, 0.8]);
        assert_eq!(invert_cdf(&cdf, 0.0), 0);
        assert_eq!(invert_cdf(&cdf, 0.2), 2);
        assert_eq!(invert_cdf(&cdf, 0.999_999), 2);
    }
}
