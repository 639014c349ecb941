//! The `nonconvergence` suite: limit laws along different subsequences.
//!
//! Along `n_lambda(k)` the hitting time satisfies
//! `Delta_n / n^(1/gamma) -> (rho C_a)^(1/gamma) Y~_L` with
//! `L = (rho C_a lambda)^(1/gamma)`, where `Y~_L` is the limit of the lattice
//! array `S_(N_l) / K_l` with `N_l = L^gamma beta^(gamma l)` and `K_l = L beta^l`.
//! The common factor does not change KS distances, so the suite compares
//! draws of `Y~_L` for several `lambda`.

use std::sync::Arc;

use gwrw_core::iidsum::{ArraySpec, ConditionalZ, Cutoff, GeometricLattice};
use gwrw_core::limitlaw::{EmpiricalLaw, ZInfinityModel};
use gwrw_core::rng;
use gwrw_core::stats;
use gwrw_core::walk::{rho_estimate, w_law_from_blocks};
use rand::RngCore;

use super::{blocks, sub_seed, tag};
use crate::{ExperimentConfig, HarnessError, Setup, Suite, SuiteReport};

/// `Z` drawn uniformly from a fixed pool, whatever the exponent.
#[derive(Debug, Clone)]
pub struct PoolZ(pub Arc<Vec<f64>>);

impl ConditionalZ for PoolZ {
    fn sample(&self, _x: u32, rng: &mut dyn RngCore) -> f64 {
        let n = self.0.len();
        self.0[((rng::uniform(rng) * n as f64) as usize).min(n - 1)]
    }
}

/// Array of terms `Z beta^X` with `P[X >= n] = beta^(-gamma n)` and `Z` from
/// the pool.
pub fn pool_array(beta: f64, gamma: f64, lambda: f64, pool: Arc<Vec<f64>>) -> ArraySpec {
    ArraySpec {
        beta,
        gamma,
        cutoff: Cutoff::Constant(0),
        lambda,
        x: Box::new(GeometricLattice::new(beta, gamma)),
        z: Box::new(PoolZ(pool)),
    }
}

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<SuiteReport, HarnessError> {
    let p = &cfg.nonconvergence;
    let setup = Setup::new(cfg, p.beta)?;
    let (beta, gamma) = (setup.params.beta, setup.params.gamma);
    let mut rep = SuiteReport::new(Suite::Nonconvergence, cfg);
    rep.table.meta("beta", beta);
    rep.table.meta("gamma", gamma);
    rep.table.meta(
        "method",
        "limit laws sampled through the lattice array fed with Z_inf draws; W_inf and rho from regeneration blocks",
    );
    let blocks = blocks(
        &setup,
        p.block_moves,
        p.block_runs,
        sub_seed(cfg.seed, tag::BLOCKS),
        workers,
    )?;
    let rho = rho_estimate(&blocks, 200, sub_seed(cfg.seed, tag::BOOTSTRAP));
    let w_inf = w_law_from_blocks(&blocks, 0.0);
    let model = ZInfinityModel::new(
        &setup.law,
        beta,
        w_inf,
        p.s_tolerance,
        sub_seed(cfg.seed, tag::MODEL),
    )
    .map_err(|e| HarnessError::Run(e.to_string()))?;
    let pool: Vec<f64> = model
        .draws(p.pool, workers)
        .into_iter()
        .map(|d| d.z)
        .collect();
    rep.table.push_ci(
        "constants",
        "rho",
        "",
        rho.rho,
        Some((rho.ci_low, rho.ci_high)),
        "ratio of block sums",
    );
    rep.table.push("constants", "c_a", "", setup.c_a);
    rep.table.push("constants", "z_inf_atom", "", model.atom());
    rep.table
        .push("constants", "regeneration_blocks", "", blocks.len() as f64);
    let base = (rho.rho * setup.c_a).powf(1.0 / gamma);
    let pool = Arc::new(pool);
    // Row index l fixed by the lambda = 1 array; the others run at the same l.
    let l = (((p.terms as f64).ln() - gamma * base.ln()) / (gamma * beta.ln()))
        .round()
        .max(1.0) as u32;
    rep.table.push("array", "row_l", "", l as f64);
    let cases = [
        ("1", 1.0, "reference"),
        (
            "beta^(gamma/2)",
            beta.powf(gamma / 2.0),
            "off the subsequence",
        ),
        (
            "beta^gamma",
            beta.powf(gamma),
            "same limit: L grows by the factor beta",
        ),
        ("beta", beta, "reported only: L grows by beta^(1/gamma)"),
    ];
    let mut samples = Vec::new();
    for (j, (label, lambda, note)) in cases.iter().enumerate() {
        let big_l = (rho.rho * setup.c_a * lambda).powf(1.0 / gamma);
        let spec = pool_array(beta, gamma, big_l, pool.clone());
        rep.table.push_note("array", "L", label, big_l, note);
        rep.table
            .push("array", "terms", label, spec.terms(l) as f64);
        let s = spec.triangular_sum(
            l,
            cfg.replicas,
            sub_seed(cfg.seed, tag::ARRAY + 16 * j as u64),
            workers,
        );
        if !s.is_empty() {
            rep.table.push("array", "median", label, stats::median(&s));
        }
        samples.push((label, big_l, s));
    }
    if cfg.replicas == 0 {
        return Ok(rep);
    }
    let law = EmpiricalLaw::new(pool.to_vec(), beta, gamma);
    let reference = &samples[0].2;
    let median = stats::median(reference);
    let mut ks = Vec::new();
    for (j, (label, big_l, s)) in samples.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in -10..=10 {
            let t = i as f64 / (2.0 * median);
            let cf = law.char_function(*big_l, t, 40).value;
            worst = worst.max((cf - stats::ecf(s, t)).norm());
        }
        rep.table.push_note(
            "two_route",
            "sup_cf_difference",
            label,
            worst,
            "empirical CF of the array against the series CF on |t| <= 5/median",
        );
        if j > 0 {
            let d = stats::ks_distance(reference, s);
            let pv = stats::ks_bootstrap_pvalue(
                reference,
                s,
                p.bootstrap,
                sub_seed(cfg.seed, tag::BOOTSTRAP + 16 * j as u64),
            );
            rep.table.push_ci(
                "ks",
                "against_lambda_1",
                label,
                d,
                None,
                &format!("bootstrap p = {pv:.4}"),
            );
            let theory = (0..=20)
                .map(|i| {
                    let t = i as f64 / (2.0 * median);
                    (law.char_function(samples[0].1, t, 40).value
                        - law.char_function(*big_l, t, 40).value)
                        .norm()
                })
                .fold(0.0, f64::max);
            rep.table.push_note(
                "two_route",
                "series_cf_distance_to_lambda_1",
                label,
                theory,
                "no Monte Carlo noise beyond the pool",
            );
            ks.push((d, pv, worst));
        }
    }
    let (off, off_p, _) = ks[0];
    let (same, _, _) = ks[1];
    rep.check(
        "off_subsequence_ks_above_floor",
        off > p.floor && off_p < p.pvalue,
        format!(
            "KS {off:.4} (floor {}), bootstrap p {off_p:.4} (level {})",
            p.floor, p.pvalue
        ),
    );
    rep.check(
        "same_limit_ks_below",
        same < p.control,
        format!("lambda = beta^gamma: KS {same:.4} vs {}", p.control),
    );
    Ok(rep)
}
