//! Super-regeneration times of the backbone walk.
//!
//! The backbone walk is driven by a stream of uniforms `U_i`. The coupled
//! nearest-neighbour walk on the integers steps down exactly when
//! `U_i <= 1/(beta + 1)`. Whenever the backbone walk steps towards the root
//! the integer walk does too, so the depth of the backbone walk dominates the
//! integer walk increment by increment. A time at which the integer walk
//! reaches a strict running maximum and never returns to that value is a
//! super-regeneration time.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::rng;

/// Probability that time 0 is a super-regeneration time, `(beta-1)/(beta+1)`.
pub fn p_zero_super_regeneration(beta: f64) -> f64 {
    (beta - 1.0) / (beta + 1.0)
}

/// Confirmation window `10 (beta+1)/(beta-1) ln(replicas)`, at least 20 steps.
pub fn confirm_window(beta: f64, replicas: usize) -> u64 {
    let w = 10.0 * (beta + 1.0) / (beta - 1.0) * (replicas.max(2) as f64).ln();
    (w.ceil() as u64).max(20)
}

/// Chernoff bound on the probability that a time which stayed above its
/// level for `window` steps returns later.
pub fn misclassification_bound(beta: f64, window: u64) -> f64 {
    let p = beta / (beta + 1.0);
    let r = 2.0 * (p * (1.0 - p)).sqrt();
    r.powf(window as f64 + 1.0) / (1.0 - r)
}

#[inline]
pub(crate) fn coupled_increment(u: f64, beta: f64) -> i64 {
    if u <= 1.0 / (beta + 1.0) {
        -1
    } else {
        1
    }
}

/// Super-regeneration analysis of a finite stretch of uniforms.
#[derive(Debug, Clone, PartialEq)]
pub struct RegenerationTrace {
    /// Integer walk `Y~_0 = 0, ..., Y~_T`.
    pub path: Vec<i64>,
    /// Times whose confirmation window fits in the stretch.
    pub confirmed: Vec<usize>,
    /// Times not refuted, but whose window extends past the stretch.
    pub tentative: Vec<usize>,
    pub misclassification_bound: f64,
}

pub fn detect_super_regenerations(uniforms: &[f64], beta: f64, window: u64) -> RegenerationTrace {
    let mut path = Vec::with_capacity(uniforms.len() + 1);
    path.push(0i64);
    for &u in uniforms {
        let last = *path.last().unwrap();
        path.push(last + coupled_increment(u, beta));
    }
    let horizon = path.len() - 1;
    let mut suffix_min = vec![i64::MAX; path.len() + 1];
    for t in (0..path.len()).rev() {
        suffix_min[t] = suffix_min[t + 1].min(path[t]);
    }
    let w = window as usize;
    let mut confirmed = Vec::new();
    let mut tentative = Vec::new();
    let mut running_max = i64::MIN;
    for t in 0..=horizon {
        if path[t] > running_max {
            running_max = path[t];
            let end = t + w;
            if end <= horizon {
                if path[t + 1..=end].iter().all(|&y| y > path[t]) {
                    confirmed.push(t);
                }
            } else if suffix_min[t + 1] > path[t] {
                tentative.push(t);
            }
        }
    }
    RegenerationTrace {
        path,
        confirmed,
        tentative,
        misclassification_bound: misclassification_bound(beta, window),
    }
}

/// Uniforms driving backbone moves: a checked prefix, then the raw stream.
#[derive(Debug, Clone)]
pub struct UniformStream {
    prefix: Vec<f64>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self {
            prefix: Vec::new(),
            pos: 0,
            rng,
        }
    }

    /// A stream whose first `window` integer steps stay strictly above 0,
    /// obtained by rejection over independent substreams. Returns the stream
    /// and the number of attempts.
    pub fn conditioned_on_zero_regeneration(
        seed: u64,
        key: u64,
        beta: f64,
        window: u64,
    ) -> (Self, u64) {
        let mut attempt = 0u64;
        loop {
            attempt += 1;
            let mut r = rng::stream(seed, rng::mix64(key, attempt));
            let mut prefix = Vec::with_capacity(window as usize);
            let mut level = 0i64;
            let mut ok = true;
            for _ in 0..window {
                let u = rng::uniform(&mut r);
                prefix.push(u);
                level += coupled_increment(u, beta);
                if level <= 0 {
                    ok = false;
                    break;
                }
            }
            if ok {
                return (
                    Self {
                        prefix,
                        pos: 0,
                        rng: r,
                    },
                    attempt,
                );
            }
        }
    }

    #[inline]
    pub fn next(&mut self) -> f64 {
        if self.pos < self.prefix.len() {
            self.pos += 1;
            self.prefix[self.pos - 1]
        } else {
            rng::uniform(&mut self.rng)
        }
    }

    pub fn rng_mut(&mut self) -> &mut impl RngCore {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_regeneration_probability_matches_gamblers_ruin() {
        let beta = 5.0;
        let p = p_zero_super_regeneration(beta);
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        let up = beta / (beta + 1.0);
        let escape_from_one = 1.0 - (1.0 - up) / up;
        assert!((p - up * escape_from_one).abs() < 1e-15);
        let reps = 40_000;
        let mut hits = 0;
        let w = confirm_window(beta, reps);
        for i in 0..reps {
            let mut r = rng::stream(5, i as u64);
            let us: Vec<f64> = (0..w).map(|_| rng::uniform(&mut r)).collect();
            let tr = detect_super_regenerations(&us, beta, w - 1);
            if tr.confirmed.first() == Some(&0) {
                hits += 1;
            }
        }
        let est = hits as f64 / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((est - p).abs() < 4.0 * se, "{est} vs {p}");
    }

    #[test]
    fn confirmed_times_are_strict_running_maxima() {
        let mut r = rng::stream(9, 9);
        let us: Vec<f64> = (0..5000).map(|_| rng::uniform(&mut r)).collect();
        let tr = detect_super_regenerations(&us, 3.0, 100);
        assert!(!tr.confirmed.is_empty());
        for &t in &tr.confirmed {
            assert!(tr.path[..t].iter().all(|&y| y < tr.path[t]));
            assert!(tr.path[t + 1..=t + 100].iter().all(|&y| y > tr.path[t]));
        }
        for &t in &tr.tentative {
            assert!(t + 100 > 5000);
        }
        assert!(tr.misclassification_bound < 1e-3);
    }

    #[test]
    fn conditioned_stream_has_positive_prefix() {
        let (mut s, attempts) = UniformStream::conditioned_on_zero_regeneration(1, 2, 5.0, 50);
        assert!(attempts >= 1);
        let mut level = 0;
        for _ in 0..50 {
            level += coupled_increment(s.next(), 5.0);
            assert!(level > 0);
        }
    }
}
