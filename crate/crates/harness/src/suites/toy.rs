//! The `toy-iid` suite: `S_n = sum beta^(G_i)` with geometric `G_i`, and the
//! lattice array built on it.

use gwrw_core::iidsum::{ArraySpec, Cutoff, ExponentialZ, GeometricLattice, ToySum};
use gwrw_core::limitlaw::EmpiricalLaw;
use gwrw_core::rng;
use gwrw_core::stats;

use super::{list4, nonincreasing, sub_seed, tag};
use crate::{ExperimentConfig, HarnessError, Suite, SuiteReport};

fn toy(beta: f64, alpha: f64) -> Result<ToySum, HarnessError> {
    ToySum::with_alpha(beta, alpha).map_err(|e| HarnessError::Config(e.to_string()))
}

/// KS between rescaled laws at `n(k)` and `n(k+1)`, and between the laws at
/// `n_1(k)` and `n_(beta^(alpha/2))(k)`.
struct Sweep {
    consecutive: Vec<f64>,
    off: Vec<f64>,
}

fn sweep(
    rep: &mut SuiteReport,
    t: &ToySum,
    lambda: f64,
    ks_list: &[u32],
    replicas: u64,
    seed: u64,
    workers: usize,
) -> Sweep {
    let shifted = lambda * t.beta.powf(t.alpha / 2.0);
    let mut on = Vec::new();
    let mut off = Vec::new();
    for &k in ks_list {
        let n = t.subsequence(lambda, k);
        let m = t.subsequence(shifted, k);
        let a = t.rescaled(n, replicas, seed, workers);
        let b = t.rescaled(m, replicas, rng::mix64(seed, 1), workers);
        let d = stats::ks_distance(&a, &b);
        rep.table.push_note(
            "off_subsequence",
            &format!("ks_beta_{}", t.beta),
            k,
            d,
            &format!("n = {n} against n = {m}"),
        );
        off.push(d);
        on.push((k, n, a));
    }
    let mut consecutive = Vec::new();
    for w in on.windows(2) {
        let d = stats::ks_distance(&w[0].2, &w[1].2);
        rep.table.push_note(
            "subsequence",
            &format!("ks_beta_{}", t.beta),
            format!("k={}->{}", w[0].0, w[1].0),
            d,
            &format!("n = {} against n = {}", w[0].1, w[1].1),
        );
        consecutive.push(d);
    }
    Sweep { consecutive, off }
}

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<SuiteReport, HarnessError> {
    let p = &cfg.toy;
    let t = toy(p.beta, p.alpha)?;
    let mut rep = SuiteReport::new(Suite::ToyIid, cfg);
    rep.table.meta("beta", p.beta);
    rep.table.meta("alpha", p.alpha);
    rep.table.meta("a", t.a);
    rep.table.meta("toy_replicas", p.replicas);
    rep.table.meta(
        "subsequence",
        "n(k) = floor(lambda beta^(alpha k)), rescaled by n^(1/alpha)",
    );
    for &k in &p.k {
        rep.table
            .push("subsequence", "n", k, t.subsequence(p.lambda, k) as f64);
    }

    // Variance of the truncated terms. With 1 - a = beta^(-alpha) and
    // K = n^(1/alpha), n E[Y^2 1{Y <= tau K}] / K^2 <= C tau^(2 - alpha).
    let c = t.a / ((1.0 - t.a) * (1.0 - p.beta.powf(p.alpha - 2.0)));
    rep.table.push("variance", "constant_c", "", c);
    let mut bound_ok = true;
    for &k in &p.k {
        let n = t.subsequence(p.lambda, k);
        for &tau in &p.tau {
            let v = t.truncated_variance(n, tau);
            let bound = c * tau.powf(2.0 - p.alpha - p.variance_slack);
            rep.table.push_note(
                "variance",
                &format!("truncated_k_{k}"),
                tau,
                v,
                &format!("bound {bound:.6e}"),
            );
            if v > c * tau.powf(2.0 - p.alpha) * (1.0 + 1e-12) || v > bound {
                bound_ok = false;
            }
        }
    }
    rep.check(
        "truncated_variance_bounded",
        bound_ok,
        format!(
            "n Var(Y 1{{Y <= tau K}}) / K^2 <= C tau^(2 - alpha - {}) with C = {c:.6}",
            p.variance_slack
        ),
    );
    let array = t.as_array(p.lambda);
    for &k in p.k.iter().filter(|&&k| array.terms(k) > 1) {
        for &tau in &p.tau {
            let v =
                array.truncated_variance(k, tau, p.tail_draws / 10, sub_seed(cfg.seed, tag::ARRAY));
            rep.table.push_note(
                "variance",
                &format!("array_monte_carlo_l_{k}"),
                tau,
                v,
                "reported only",
            );
        }
    }

    // Single terms vanish after scaling.
    let mut tails_ok = true;
    for eps in [0.1, 1.0] {
        let tails: Vec<f64> =
            p.k.iter()
                .map(|&l| {
                    array.single_term_tail(l, eps, p.tail_draws, sub_seed(cfg.seed, tag::ARRAY + 1))
                })
                .collect();
        for (&l, v) in p.k.iter().zip(&tails) {
            rep.table
                .push("single_term", &format!("p_above_{eps}"), l, *v);
        }
        tails_ok &= nonincreasing(&tails);
    }
    rep.check(
        "single_term_tail_vanishing",
        tails_ok,
        "P[Y^(l) / K_l > eps] nonincreasing in l for eps in {0.1, 1}".to_string(),
    );

    if p.replicas > 0 {
        let main = sweep(
            &mut rep,
            &t,
            p.lambda,
            &p.k,
            p.replicas,
            sub_seed(cfg.seed, tag::TOY),
            workers,
        );
        let last = *main.consecutive.last().unwrap_or(&f64::NAN);
        rep.check(
            "subsequence_ks_below",
            last < p.subsequence_ks,
            format!(
                "consecutive KS {}, final below {}",
                list4(&main.consecutive),
                p.subsequence_ks
            ),
        );
        let min_off = main.off.iter().copied().fold(f64::INFINITY, f64::min);
        rep.check(
            "off_subsequence_ks_above_floor",
            min_off > p.floor,
            format!("KS at every k {}, floor {}", list4(&main.off), p.floor),
        );
        let mut floors = Vec::new();
        for (j, &b) in p.floor_betas.iter().enumerate() {
            let sweep_b = if b == p.beta {
                min_off
            } else {
                let tb = toy(b, p.alpha)?;
                let s = sweep(
                    &mut rep,
                    &tb,
                    p.lambda,
                    &p.k,
                    p.replicas,
                    sub_seed(cfg.seed, tag::TOY + 16 * (j as u64 + 1)),
                    workers,
                );
                s.off.iter().copied().fold(f64::INFINITY, f64::min)
            };
            rep.table.push("off_subsequence", "floor", b, sweep_b);
            floors.push(sweep_b);
        }
        rep.check(
            "floor_increases_with_beta",
            floors.windows(2).all(|w| w[0] < w[1]),
            format!("floors {} at beta {:?}", list4(&floors), p.floor_betas),
        );
    }

    // Two routes to the law of the array with exponential Z.
    if cfg.replicas > 0 {
        let spec = ArraySpec {
            beta: p.beta,
            gamma: p.alpha,
            cutoff: Cutoff::Constant(0),
            lambda: 1.0,
            x: Box::new(GeometricLattice::new(p.beta, p.alpha)),
            z: Box::new(ExponentialZ(1.0)),
        };
        let l = ((1000f64).ln() / (p.alpha * p.beta.ln())).round().max(1.0) as u32;
        let s = spec.triangular_sum(l, cfg.replicas, sub_seed(cfg.seed, tag::ARRAY + 2), workers);
        let mut r = rng::stream(sub_seed(cfg.seed, tag::ARRAY + 3), 0);
        let z: Vec<f64> = (0..p.cf_pool).map(|_| rng::exponential(&mut r)).collect();
        let law = EmpiricalLaw::new(z, p.beta, p.alpha);
        let mut worst = 0.0f64;
        for i in -50..=50 {
            let tt = i as f64 / 10.0;
            worst = worst.max((law.char_function(1.0, tt, 40).value - stats::ecf(&s, tt)).norm());
        }
        rep.table.push_note(
            "two_route",
            "sup_cf_difference",
            l,
            worst,
            &format!("{} terms, t in [-5, 5]", spec.terms(l)),
        );
        rep.check(
            "exponential_array_matches_series_cf",
            worst < 0.05,
            format!("sup |ECF - CF| = {worst:.4}"),
        );
    }
    Ok(rep)
}
