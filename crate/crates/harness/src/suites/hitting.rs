//! Suites built on hitting times of levels: `scaling`, `subsequence` and
//! `trap-time`.

use gwrw_core::environment::Environment;
use gwrw_core::limitlaw::ZInfinityModel;
use gwrw_core::rng::{self, domain};
use gwrw_core::stats;
use gwrw_core::trap::{ChiStarSampler, GeigerSampler};
use gwrw_core::walk::{
    run_levels, trap_threshold, typical_height, w_law_from_blocks, LevelOutcome,
};

use super::{blocks, decreasing, list, list4, mc, nonincreasing, sub_seed, tag};
use crate::{ExperimentConfig, HarnessError, Setup, Suite, SuiteReport};

/// Walks followed until the deepest of a set of levels, one per replica.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub levels: Vec<u64>,
    pub budget: u64,
    /// `outcomes[replica][level]`.
    pub outcomes: Vec<Vec<LevelOutcome>>,
    pub steps: u64,
}

impl Campaign {
    pub fn run(
        cfg: &ExperimentConfig,
        levels: &[u64],
        budget: u64,
        workers: usize,
    ) -> Result<Self, HarnessError> {
        let setup = Setup::new(cfg, cfg.beta)?;
        let mut levels = levels.to_vec();
        levels.sort_unstable();
        levels.dedup();
        let runs = mc(cfg.replicas, workers, |r| {
            let mut env = Environment::new(
                setup.laws.clone(),
                rng::mix64(cfg.seed, rng::key(domain::ENVIRONMENT, r)),
            );
            let mut s = rng::stream(cfg.seed, rng::key(domain::WALK, r));
            run_levels(
                &mut env,
                &setup.params,
                &levels,
                cfg.epsilon,
                budget,
                false,
                &mut s,
            )
            .map_err(|e| format!("replica {r}: {e}"))
        })?;
        Ok(Self {
            steps: runs.iter().map(|r| r.steps).sum(),
            outcomes: runs.into_iter().map(|r| r.levels).collect(),
            levels,
            budget,
        })
    }

    fn index(&self, n: u64) -> usize {
        self.levels
            .binary_search(&n)
            .unwrap_or_else(|_| panic!("level {n} was not part of the campaign"))
    }

    pub fn outcomes_at(&self, n: u64) -> Vec<LevelOutcome> {
        let i = self.index(n);
        self.outcomes.iter().map(|o| o[i]).collect()
    }

    /// `Delta_n` per replica, `+inf` when censored by the budget.
    pub fn deltas(&self, n: u64) -> Vec<f64> {
        self.outcomes_at(n)
            .iter()
            .map(|o| o.delta().map_or(f64::INFINITY, |d| d as f64))
            .collect()
    }

    pub fn censored(&self, n: u64) -> usize {
        self.outcomes_at(n)
            .iter()
            .filter(|o| o.record().is_none())
            .count()
    }

    fn covers(&self, levels: &[u64], budget: u64) -> bool {
        self.budget == budget && levels.iter().all(|n| self.levels.binary_search(n).is_ok())
    }
}

fn campaign_for<'a>(
    cfg: &ExperimentConfig,
    levels: &[u64],
    budget: u64,
    workers: usize,
    shared: Option<&'a Campaign>,
    own: &'a mut Option<Campaign>,
) -> Result<&'a Campaign, HarnessError> {
    match shared {
        Some(c) if c.covers(levels, budget) => Ok(c),
        Some(_) => Err(HarnessError::Run(
            "shared campaign does not cover the requested levels".into(),
        )),
        None => Ok(own.insert(Campaign::run(cfg, levels, budget, workers)?)),
    }
}

fn median_log_slope(levels: &[u64], columns: &[Vec<f64>], idx: Option<&[usize]>) -> f64 {
    let x: Vec<f64> = levels.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = columns
        .iter()
        .map(|c| match idx {
            Some(idx) => stats::median(&idx.iter().map(|&i| c[i]).collect::<Vec<_>>()).ln(),
            None => stats::median(c).ln(),
        })
        .collect();
    stats::ols_slope(&x, &y)
}

pub fn scaling(
    cfg: &ExperimentConfig,
    workers: usize,
    shared: Option<&Campaign>,
) -> Result<SuiteReport, HarnessError> {
    let p = &cfg.scaling;
    let params = cfg.params()?;
    let mut own = None;
    let camp = campaign_for(cfg, &p.n, p.budget, workers, shared, &mut own)?;
    let mut rep = SuiteReport::new(Suite::Scaling, cfg);
    rep.table.meta("beta", cfg.beta);
    rep.table.meta("gamma", params.gamma);
    rep.table.meta("budget", p.budget);
    rep.table.meta(
        "censoring",
        "a censored replica counts as +inf in the median",
    );
    let inv = 1.0 / params.gamma;
    let columns: Vec<Vec<f64>> = p.n.iter().map(|&n| camp.deltas(n)).collect();
    for (&n, c) in p.n.iter().zip(&columns) {
        let m = stats::median(c);
        rep.table.push("median", "delta_n", n, m);
        rep.table.push("median", "ln_delta_n", n, m.ln());
        rep.table
            .push("median", "delta_n_over_n_pow", n, m / (n as f64).powf(inv));
        rep.table.push(
            "censoring",
            "censored_fraction",
            n,
            camp.censored(n) as f64 / cfg.replicas.max(1) as f64,
        );
    }
    if cfg.replicas == 0 {
        return Ok(rep);
    }
    let slope = median_log_slope(&p.n, &columns, None);
    let ci = stats::bootstrap_ci(
        cfg.replicas as usize,
        p.bootstrap,
        0.95,
        sub_seed(cfg.seed, tag::BOOTSTRAP),
        |idx| median_log_slope(&p.n, &columns, Some(idx)),
    );
    rep.table.push_ci(
        "regression",
        "slope",
        "ln median delta_n on ln n",
        slope,
        Some(ci),
        "percentile bootstrap over replicas",
    );
    rep.table
        .push_note("regression", "target", "1/gamma", inv, "");
    rep.table
        .push("cost", "walk_steps", "total", camp.steps as f64);
    rep.check(
        "slope_within_tolerance",
        (slope - inv).abs() <= p.slope_tolerance,
        format!(
            "slope {slope:.4} vs 1/gamma {inv:.4} +- {}",
            p.slope_tolerance
        ),
    );
    Ok(rep)
}

/// `n_lambda(k) = floor(lambda f'(q)^(-k))`.
pub fn subsequence_levels(fprime_q: f64, lambda: f64, ks: &[u32]) -> Vec<u64> {
    ks.iter()
        .map(|&k| (lambda * fprime_q.powi(-(k as i32))).floor() as u64)
        .collect()
}

pub fn subsequence(
    cfg: &ExperimentConfig,
    workers: usize,
    shared: Option<&Campaign>,
) -> Result<SuiteReport, HarnessError> {
    let p = &cfg.subsequence;
    let params = cfg.params()?;
    let levels = subsequence_levels(params.fprime_q, p.lambda, &p.k);
    let mut own = None;
    let camp = campaign_for(cfg, &levels, p.budget, workers, shared, &mut own)?;
    let mut rep = SuiteReport::new(Suite::Subsequence, cfg);
    let inv = 1.0 / params.gamma;
    let cap = p.budget as f64 / (*levels.last().unwrap() as f64).powf(inv);
    rep.table.meta("beta", cfg.beta);
    rep.table.meta("gamma", params.gamma);
    rep.table.meta("lambda", p.lambda);
    rep.table.meta("budget", p.budget);
    rep.table.meta(
        "censoring",
        format!("rescaled values clipped at budget / n_max^(1/gamma) = {cap}; every censored value lies above the cap"),
    );
    let rescaled: Vec<Vec<f64>> = levels
        .iter()
        .map(|&n| {
            let s = (n as f64).powf(inv);
            camp.deltas(n).iter().map(|d| (d / s).min(cap)).collect()
        })
        .collect();
    for ((&k, &n), r) in p.k.iter().zip(&levels).zip(&rescaled) {
        rep.table.push("levels", "n_lambda", k, n as f64);
        rep.table
            .push("median", "rescaled_delta", n, stats::median(r));
        rep.table.push(
            "censoring",
            "censored_fraction",
            n,
            camp.censored(n) as f64 / cfg.replicas.max(1) as f64,
        );
        rep.table.push(
            "censoring",
            "clipped_fraction",
            n,
            r.iter().filter(|&&x| x >= cap).count() as f64 / cfg.replicas.max(1) as f64,
        );
    }
    if cfg.replicas == 0 {
        return Ok(rep);
    }
    let ks: Vec<f64> = rescaled
        .windows(2)
        .map(|w| stats::ks_distance(&w[0], &w[1]))
        .collect();
    for (i, d) in ks.iter().enumerate() {
        let label = format!("k={}->{}", p.k[i], p.k[i + 1]);
        let pv = stats::ks_pvalue(*d, rescaled[i].len(), rescaled[i + 1].len());
        rep.table.push_ci(
            "ks",
            "consecutive",
            label,
            *d,
            None,
            &format!("asymptotic p = {pv:.4}"),
        );
    }
    rep.check(
        "ks_nonincreasing",
        nonincreasing(&ks),
        format!("consecutive KS {}", list4(&ks)),
    );
    let last = *ks.last().unwrap_or(&f64::NAN);
    rep.check(
        "final_ks_below",
        last < p.final_ks,
        format!("final KS {last:.4} vs {}", p.final_ks),
    );
    Ok(rep)
}

/// All walk levels used by the `trap-time` suite.
pub fn trap_time_levels(cfg: &ExperimentConfig) -> Vec<u64> {
    let mut v: Vec<u64> = cfg
        .trap_time
        .n
        .iter()
        .chain(&cfg.trap_time.report_n)
        .copied()
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub fn trap_time(
    cfg: &ExperimentConfig,
    workers: usize,
    shared: Option<&Campaign>,
) -> Result<SuiteReport, HarnessError> {
    let p = &cfg.trap_time;
    let setup = Setup::new(cfg, cfg.beta)?;
    let params = &setup.params;
    let levels = trap_time_levels(cfg);
    let mut own = None;
    let camp = campaign_for(cfg, &levels, p.budget, workers, shared, &mut own)?;
    let mut rep = SuiteReport::new(Suite::TrapTime, cfg);
    rep.table.meta("beta", cfg.beta);
    rep.table.meta("gamma", params.gamma);
    rep.table.meta("epsilon", cfg.epsilon);
    rep.table.meta("budget", p.budget);
    rep.table.meta(
        "censoring",
        "a censored replica has unknown Delta_n - chi(n); medians are bracketed by counting it as 0 and as +inf",
    );
    let inv = 1.0 / params.gamma;
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &n in &levels {
        let s = (n as f64).powf(inv);
        let outcomes = camp.outcomes_at(n);
        let gap = |censored: f64| -> Vec<f64> {
            outcomes
                .iter()
                .map(|o| {
                    o.record()
                        .map_or(censored, |r| (r.delta_n - r.chi_n) as f64 / s)
                })
                .collect()
        };
        let (hi, lo) = (stats::median(&gap(f64::INFINITY)), stats::median(&gap(0.0)));
        let asserted = p.n.contains(&n);
        let note = if asserted { "asserted" } else { "reported" };
        rep.table
            .push_note("outside_big_traps", "median_upper", n, hi, note);
        rep.table
            .push_note("outside_big_traps", "median_lower", n, lo, note);
        rep.table.push(
            "outside_big_traps",
            "threshold_h_n",
            n,
            trap_threshold(params, n, cfg.epsilon) as f64,
        );
        let hits: Vec<_> = outcomes.iter().filter_map(|o| o.record()).collect();
        let frac = |f: &dyn Fn(&gwrw_core::walk::HittingRecord) -> u64| {
            stats::median(
                &hits
                    .iter()
                    .map(|r| f(r) as f64 / r.delta_n.max(1) as f64)
                    .collect::<Vec<_>>(),
            )
        };
        if !hits.is_empty() {
            rep.table
                .push("fractions", "median_chi_over_delta", n, frac(&|r| r.chi_n));
            rep.table.push(
                "fractions",
                "median_chi_star_over_delta",
                n,
                frac(&|r| r.chi_star_n),
            );
            rep.table.push(
                "fractions",
                "median_backbone_steps_over_delta",
                n,
                frac(&|r| r.delta_n_y),
            );
        }
        rep.table.push(
            "censoring",
            "censored_fraction",
            n,
            camp.censored(n) as f64 / cfg.replicas.max(1) as f64,
        );
        if asserted {
            upper.push(hi);
            lower.push(lo);
        }
    }
    if cfg.replicas > 0 {
        rep.check(
            "median_outside_big_traps_decreasing",
            decreasing(&upper) && decreasing(&lower),
            format!(
                "n {}: upper medians {}, lower medians {}",
                list(&p.n),
                list4(&upper),
                list4(&lower)
            ),
        );
    }
    chi_star_comparison(cfg, &setup, workers, &mut rep)?;
    Ok(rep)
}

/// `chi_1*(n) / beta^H` for a trap of height `H = h_n^0`, against `Z_inf`.
fn chi_star_comparison(
    cfg: &ExperimentConfig,
    setup: &Setup,
    workers: usize,
    rep: &mut SuiteReport,
) -> Result<(), HarnessError> {
    let p = &cfg.trap_time;
    let params = &setup.params;
    let beta = params.beta;
    let blocks = blocks(
        setup,
        p.block_moves,
        p.block_runs,
        sub_seed(cfg.seed, tag::BLOCKS),
        workers,
    )?;
    let w_inf = w_law_from_blocks(&blocks, 0.0);
    rep.table
        .push("chi_star", "regeneration_blocks", "", blocks.len() as f64);
    let seed_a = sub_seed(cfg.seed, tag::TRAPS);
    let seed_b = sub_seed(cfg.seed, tag::MODEL);
    let run = |seed: u64| -> Result<Vec<f64>, HarnessError> {
        let model = ZInfinityModel::new(&setup.law, beta, w_inf.clone(), p.s_tolerance, seed)
            .map_err(|e| HarnessError::Run(e.to_string()))?;
        Ok(model
            .draws(p.chi_star_replicas, workers)
            .into_iter()
            .map(|d| d.z)
            .collect())
    };
    let independent = run(seed_b)?;
    let coupled = run(seed_a)?;
    let (zm, zse) = stats::mean_se(&independent);
    rep.table.push_ci(
        "chi_star",
        "z_inf_mean",
        "",
        zm,
        Some((zm - 1.96 * zse, zm + 1.96 * zse)),
        "",
    );
    let geiger = GeigerSampler::new(&setup.h, 60);
    let mut ks_ind = Vec::new();
    let mut ks_cpl = Vec::new();
    for &n in &p.chi_star_n {
        let h_n = trap_threshold(params, n, cfg.epsilon);
        let height = typical_height(params, n);
        let w_n = w_law_from_blocks(&blocks, setup.tail.eta(h_n as usize));
        let sampler = ChiStarSampler::new(geiger.clone(), beta, &w_n, p.direct_threshold);
        let draws = mc(p.chi_star_replicas, workers, |i| {
            Ok::<_, HarnessError>(sampler.sample_indexed(height, seed_a, i))
        })?;
        let scale = beta.powi(height as i32);
        let z: Vec<f64> = draws.iter().map(|d| d.chi_star / scale).collect();
        let simulated = draws
            .iter()
            .filter(|d| d.excursions <= p.direct_threshold)
            .count();
        let a = stats::ks_distance(&z, &independent);
        let b = stats::ks_distance(&z, &coupled);
        let (m, se) = stats::mean_se(&z);
        rep.table.push("chi_star", "height_H", n, height as f64);
        rep.table.push("chi_star", "w_threshold_h_n", n, h_n as f64);
        rep.table.push_ci(
            "chi_star",
            "mean",
            n,
            m,
            Some((m - 1.96 * se, m + 1.96 * se)),
            "",
        );
        rep.table.push_note(
            "chi_star",
            "ks_independent",
            n,
            a,
            &format!(
                "asymptotic p = {:.4}",
                stats::ks_pvalue(a, z.len(), independent.len())
            ),
        );
        rep.table.push_note(
            "chi_star",
            "ks_common_random_numbers",
            n,
            b,
            "Z_inf drawn from the same substreams",
        );
        rep.table.push_note(
            "chi_star",
            "simulated_fraction",
            n,
            simulated as f64 / draws.len().max(1) as f64,
            "share of draws with excursions simulated step by step; the rest use the normal approximation",
        );
        ks_ind.push(a);
        ks_cpl.push(b);
    }
    if p.chi_star_replicas > 0 {
        rep.check(
            "chi_star_ks_decreasing",
            decreasing(&ks_cpl),
            format!(
                "common-random-number KS {} at n {}",
                list4(&ks_cpl),
                list(&p.chi_star_n)
            ),
        );
        let last = *ks_ind.last().unwrap_or(&f64::NAN);
        rep.check(
            "chi_star_final_ks_below",
            last < p.final_ks,
            format!(
                "independent KS {} at n {}; final {last:.4} vs {}",
                list4(&ks_ind),
                list(&p.chi_star_n),
                p.final_ks
            ),
        );
    }
    Ok(())
}
