//! Empirical distribution tools: two-sample Kolmogorov-Smirnov distance,
//! empirical characteristic functions, quantiles and bootstrap intervals.

use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::rng::{self, domain};

/// Two-sample KS distance `sup_x |F_a(x) - F_b(x)|`. Ties are handled by
/// advancing through equal values in both samples before comparing.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    ks_sorted(&a, &b)
}

/// KS distance for samples that are already sorted.
pub fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS distance between two probability vectors on `0, 1, 2, ...`.
pub fn ks_pmf(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let (mut fp, mut fq, mut d) = (0.0, 0.0, 0.0f64);
    for k in 0..n {
        fp += p.get(k).copied().unwrap_or(0.0);
        fq += q.get(k).copied().unwrap_or(0.0);
        d = d.max((fp - fq).abs());
    }
    d
}

/// Asymptotic p-value of the two-sample KS statistic.
pub fn ks_pvalue(d: f64, na: usize, nb: usize) -> f64 {
    let (a, b) = (na as f64, nb as f64);
    kolmogorov_tail(d, a * b / (a + b))
}

/// Asymptotic p-value of the one-sample KS statistic against a fixed law.
pub fn ks_pvalue_one_sample(d: f64, n: usize) -> f64 {
    kolmogorov_tail(d, n as f64)
}

fn kolmogorov_tail(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Bootstrap p-value of the KS distance under the pooled null: both samples
/// are redrawn with replacement from their union.
pub fn ks_bootstrap_pvalue(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> f64 {
    let observed = ks_distance(a, b);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut r = rng::stream(seed, rng::key(domain::BOOTSTRAP, 0));
    let n = pooled.len();
    let mut hits = 0usize;
    let mut xa = vec![0.0; a.len()];
    let mut xb = vec![0.0; b.len()];
    for _ in 0..resamples {
        for x in xa.iter_mut().chain(xb.iter_mut()) {
            *x = pooled[((rng::uniform(&mut r) * n as f64) as usize).min(n - 1)];
        }
        if ks_distance(&xa, &xb) >= observed {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (resamples + 1) as f64
}

/// Empirical CDF at `x` of a sorted sample.
pub fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// Empirical characteristic function `mean(exp(i t x))`.
pub fn ecf(sample: &[f64], t: f64) -> Complex64 {
    let (mut re, mut im) = (0.0, 0.0);
    for &x in sample {
        let (s, c) = (t * x).sin_cos();
        re += c;
        im += s;
    }
    let n = sample.len() as f64;
    Complex64::new(re / n, im / n)
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

pub fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Mean and its standard error.
pub fn mean_se(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let m = mean(sample);
    let var = sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Percentile bootstrap interval of a statistic computed from resampled
/// indices `0..n`.
pub fn bootstrap_ci<F>(n: usize, resamples: usize, level: f64, seed: u64, stat: F) -> (f64, f64)
where
    F: Fn(&[usize]) -> f64,
{
    let mut r = rng::stream(seed, rng::key(domain::BOOTSTRAP, 1));
    let mut idx = vec![0usize; n];
    let mut values: Vec<f64> = (0..resamples)
        .map(|_| {
            for i in idx.iter_mut() {
                *i = ((rng::uniform(&mut r) * n as f64) as usize).min(n - 1);
            }
            stat(&idx)
        })
        .collect();
    values.sort_unstable_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    (
        quantile_sorted(&values, a),
        quantile_sorted(&values, 1.0 - a),
    )
}

/// Pearson chi-square goodness of fit; returns the statistic and p-value.
/// Cells with expected count below 5 are pooled into their neighbour.
pub fn chi_square(observed: &[u64], expected_probs: &[f64]) -> (f64, f64) {
    let total: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (i, &p) in expected_probs.iter().enumerate() {
        o += observed.get(i).copied().unwrap_or(0) as f64;
        e += p * total as f64;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        if let Some(last) = cells.last_mut() {
            last.0 += o;
            last.1 += e;
        } else {
            cells.push((o, e));
        }
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (cells.len() as f64 - 1.0).max(1.0);
    let p = 1.0
        - ChiSquared::new(df)
            .expect("positive degrees of freedom")
            .cdf(stat);
    (stat, p)
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
