//! The `w-law` suite: entries into the designated big trap.

use gwrw_core::stats;
use gwrw_core::walk::{sample_wn, trap_threshold, w_law_from_blocks, WnConfig};

use super::{block_window, blocks, decreasing, list, mc, sub_seed, tag, wilson_lower};
use crate::{ExperimentConfig, HarnessError, Setup, Suite, SuiteReport};

/// `sup_k |F_sample(k) - F_pmf(k)|` over the integers.
pub fn ks_sample_pmf(sample: &[u64], pmf: &[f64]) -> f64 {
    let top = sample.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; top.max(pmf.len()) + 1];
    for &w in sample {
        counts[w as usize] += 1;
    }
    let n = sample.len() as f64;
    let (mut fs, mut fp, mut d) = (0.0, 0.0, 0.0f64);
    for (k, &c) in counts.iter().enumerate() {
        fs += c as f64 / n;
        fp += pmf.get(k).copied().unwrap_or(0.0);
        d = d.max((fs - fp).abs());
    }
    d
}

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<SuiteReport, HarnessError> {
    let p = &cfg.w_law;
    let setup = Setup::new(cfg, cfg.beta)?;
    let params = &setup.params;
    let window = block_window(&setup);
    let mut rep = SuiteReport::new(Suite::WLaw, cfg);
    rep.table.meta("beta", cfg.beta);
    rep.table.meta("epsilon", cfg.epsilon);
    rep.table.meta("confirmation_window", window);
    rep.table.meta(
        "routes",
        "direct: walk to the first big trap after a super-regeneration time; blocks: reweighted regeneration blocks",
    );
    let g_param = params.p_inf / 3.0;
    let blocks = blocks(
        &setup,
        p.block_moves,
        p.block_runs,
        sub_seed(cfg.seed, tag::BLOCKS),
        workers,
    )?;
    rep.table
        .push("blocks", "regeneration_blocks", "", blocks.len() as f64);
    let w_inf = w_law_from_blocks(&blocks, 0.0);
    let mut dominated = true;
    let mut floor_ok = true;
    let mut routes_ok = true;
    let mut details = Vec::new();
    let mut pmfs: Vec<(u32, Vec<f64>)> = Vec::new();
    for &n in &p.n {
        let h = trap_threshold(params, n, cfg.epsilon);
        let wcfg = WnConfig {
            h,
            window,
            budget: p.budget,
        };
        let draws = mc(cfg.replicas, workers, |r| {
            sample_wn(
                setup.laws.clone(),
                params,
                &wcfg,
                sub_seed(cfg.seed, tag::DIRECT_W),
                r,
            )
            .map_err(|e| format!("replica {r}: {e}"))
        })?;
        let w: Vec<u64> = draws.iter().map(|d| d.w).collect();
        let total = w.len() as u64;
        rep.table.push("direct", "threshold_h_n", n, h as f64);
        if total == 0 {
            continue;
        }
        let top = *w.iter().max().unwrap();
        for k in 1..=top.max(1) {
            let hits = w.iter().filter(|&&x| x >= k).count() as u64;
            let lo = wilson_lower(hits, total);
            let bound = (1.0 - g_param).powi(k as i32 - 1);
            rep.table.push_ci(
                "direct",
                &format!("tail_ge_{k}"),
                n,
                hits as f64 / total as f64,
                Some((lo, 1.0)),
                &format!("geometric bound {bound:.6}"),
            );
            if lo > bound {
                dominated = false;
                details.push(format!("n={n} k={k}: lower {lo:.4} > {bound:.4}"));
            }
        }
        let at_least_one = w.iter().filter(|&&x| x >= 1).count() as u64;
        let lo1 = wilson_lower(at_least_one, total);
        if lo1 <= p.floor {
            floor_ok = false;
        }
        rep.table.push_ci(
            "direct",
            "p_w_at_least_1",
            n,
            at_least_one as f64 / total as f64,
            Some((lo1, 1.0)),
            "",
        );
        let (mean_w, se_w) = stats::mean_se(&w.iter().map(|&x| x as f64).collect::<Vec<_>>());
        rep.table.push_ci(
            "direct",
            "mean_w",
            n,
            mean_w,
            Some((mean_w - 1.96 * se_w, mean_w + 1.96 * se_w)),
            "",
        );
        rep.table.push(
            "direct",
            "mean_backbone_moves",
            n,
            stats::mean(
                &draws
                    .iter()
                    .map(|d| d.backbone_moves as f64)
                    .collect::<Vec<_>>(),
            ),
        );
        let pmf = w_law_from_blocks(&blocks, setup.tail.eta(h as usize));
        let d = ks_sample_pmf(&w, &pmf);
        let pv = stats::ks_pvalue_one_sample(d, w.len());
        rep.table.push_note(
            "routes",
            "ks_direct_vs_blocks",
            n,
            d,
            &format!("asymptotic p = {pv:.4}"),
        );
        if pv < p.route_pvalue {
            routes_ok = false;
        }
        rep.table
            .push("blocks", "ks_to_w_inf", n, stats::ks_pmf(&pmf, &w_inf));
        if pmfs.last().map(|x| x.0) != Some(h) {
            pmfs.push((h, pmf));
        }
    }
    let ks_steps: Vec<f64> = pmfs
        .windows(2)
        .map(|w| stats::ks_pmf(&w[0].1, &w[1].1))
        .collect();
    for (pair, d) in pmfs.windows(2).zip(&ks_steps) {
        rep.table.push_note(
            "blocks",
            "ks_consecutive_thresholds",
            format!("h={}->{}", pair[0].0, pair[1].0),
            *d,
            "levels with equal h_n have identical W_n laws",
        );
    }
    for &n in &p.n {
        let (h1, h2) = (
            trap_threshold(params, n, cfg.epsilon),
            trap_threshold(params, 2 * n, cfg.epsilon),
        );
        let d = stats::ks_pmf(
            &w_law_from_blocks(&blocks, setup.tail.eta(h1 as usize)),
            &w_law_from_blocks(&blocks, setup.tail.eta(h2 as usize)),
        );
        rep.table.push("blocks", "ks_n_2n", n, d);
    }
    if cfg.replicas > 0 {
        rep.check(
            "tail_dominated_by_geometric",
            dominated,
            if details.is_empty() {
                format!(
                    "every one-sided lower bound of P[W_n >= k] is below (1 - p_inf/3)^(k-1), n {}",
                    list(&p.n)
                )
            } else {
                details.join("; ")
            },
        );
        rep.check(
            "entry_probability_bounded_below",
            floor_ok,
            format!("lower bounds of P[W_n >= 1] exceed {}", p.floor),
        );
        rep.check(
            "direct_matches_blocks",
            routes_ok,
            format!(
                "KS p-values of direct draws against block laws are at least {}",
                p.route_pvalue
            ),
        );
    }
    rep.check(
        "ks_consecutive_thresholds_decreasing",
        decreasing(&ks_steps),
        format!(
            "KS between W_n laws at consecutive thresholds {}",
            ks_steps
                .iter()
                .map(|d| format!("{d:.3e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    );
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_pmf_distance() {
        assert_eq!(ks_sample_pmf(&[0, 1], &[0.5, 0.5]), 0.0);
        assert!((ks_sample_pmf(&[0, 0], &[0.5, 0.5]) - 0.5).abs() < 1e-15);
        assert!((ks_sample_pmf(&[3], &[1.0]) - 1.0).abs() < 1e-15);
    }
}
