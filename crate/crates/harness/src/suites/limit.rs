//! The `limit-law` suite: `Z_inf`, its density and the spectral function.

use gwrw_core::limitlaw::{density_psi, simpson, EmpiricalLaw, ZInfinityModel};
use gwrw_core::stats;
use gwrw_core::walk::w_law_from_blocks;

use super::{blocks, sub_seed, tag};
use crate::{ExperimentConfig, HarnessError, Setup, Suite, SuiteReport};

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<SuiteReport, HarnessError> {
    let p = &cfg.limit_law;
    let setup = Setup::new(cfg, cfg.beta)?;
    let (beta, gamma) = (setup.params.beta, setup.params.gamma);
    let mut rep = SuiteReport::new(Suite::LimitLaw, cfg);
    rep.table.meta("beta", beta);
    rep.table.meta("gamma", gamma);
    rep.table.meta("draws", p.draws);
    rep.table.meta("s_tolerance", p.s_tolerance);
    let blocks = blocks(
        &setup,
        p.block_moves,
        p.block_runs,
        sub_seed(cfg.seed, tag::BLOCKS),
        workers,
    )?;
    let w_inf = w_law_from_blocks(&blocks, 0.0);
    let model = ZInfinityModel::new(
        &setup.law,
        beta,
        w_inf,
        p.s_tolerance,
        sub_seed(cfg.seed, tag::MODEL),
    )
    .map_err(|e| HarnessError::Run(e.to_string()))?;
    rep.exports
        .push(("model.json".to_string(), model.to_json()));
    rep.table
        .push("model", "regeneration_blocks", "", blocks.len() as f64);
    rep.table.push("model", "atom_exact", "", model.atom());
    rep.table.push(
        "model",
        "s_inf_remainder_bound",
        "",
        model.s.remainder_bound(model.s.levels_for(p.s_tolerance)),
    );
    if p.draws == 0 {
        return Ok(rep);
    }
    let draws = model.draws(p.draws, workers);
    let law = EmpiricalLaw::new(draws.iter().map(|d| d.z).collect(), beta, gamma);
    rep.table.push("model", "atom_empirical", "", law.atom());

    // Monotonicity on a logarithmic grid, by the per-sample closed form.
    let grid: Vec<f64> = (0..400)
        .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 399.0))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&x| law.spectral_l1_exact(x)).collect();
    let monotone = values.windows(2).all(|w| w[0] <= w[1]);
    rep.check(
        "l1_monotone",
        monotone,
        format!("L_1 nondecreasing on {} points of [0.01, 100]", grid.len()),
    );

    let mut scaling_err = 0.0f64;
    let mut series_ok = true;
    let mut bounds_ok = true;
    let m = law.moment(gamma);
    rep.table.push_ci(
        "moments",
        "e_z_gamma",
        "",
        m.value,
        Some((m.low, m.high)),
        "",
    );
    for &x in grid.iter().step_by(20).chain(&p.x) {
        let a = law.spectral_l1_exact(x);
        let b = beta.powf(gamma) * law.spectral_l1_exact(beta * x);
        scaling_err = scaling_err.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
    }
    for &x in &p.x {
        let exact = law.spectral_l1_exact(x);
        let series = law.spectral_l1(x);
        rep.table.push("spectral", "l1_exact", x, exact);
        rep.table.push_note(
            "spectral",
            "l1_series",
            x,
            series.value,
            &format!(
                "window {}..{}, remainder {:.3e}",
                series.k_min, series.k_max, series.remainder
            ),
        );
        if (series.value - exact).abs() > series.remainder + 1e-12 * exact.abs() {
            series_ok = false;
        }
        let scaled = -exact * x.powf(gamma);
        let (lo, hi) = (m.low / beta.powf(gamma), m.high);
        rep.table.push_ci(
            "bounds",
            "minus_l1_times_x_pow_gamma",
            x,
            scaled,
            Some((lo, hi)),
            "bounds E[Z^gamma] beta^-gamma and E[Z^gamma]",
        );
        if scaled < lo || scaled > hi {
            bounds_ok = false;
        }
        let t = law.tail(x);
        rep.table
            .push_ci("tail", "p_z_above", x, t.value, Some((t.low, t.high)), "");
    }
    for (x, v) in law.normalised_spectral(41) {
        rep.table.push("periodic", "x_pow_gamma_l1", x, v);
    }
    rep.table
        .push("spectral", "max_relative_scaling_error", "", scaling_err);
    rep.check(
        "l1_scaling_identity",
        scaling_err <= p.scaling_tolerance,
        format!("max |L_1(x) - beta^gamma L_1(beta x)| / |L_1(x)| = {scaling_err:.3e}"),
    );
    rep.check(
        "l1_series_matches_closed_form",
        series_ok,
        "windowed series within its remainder bound".to_string(),
    );
    rep.check(
        "l1_bounds_hold",
        bounds_ok,
        format!("bounds at x = {:?}", p.x),
    );

    // Density of the continuous part.
    let alpha = model.binomial_mixture();
    let k_max = alpha.iter().rposition(|&a| a > 0.0).unwrap_or(1).max(1) as f64;
    let s_sub: Vec<f64> = draws.iter().take(p.psi_draws).map(|d| d.s_tilde).collect();
    let s_max = s_sub.iter().copied().fold(0.0, f64::max);
    let z_max = s_max * (k_max + 10.0 * k_max.sqrt() + 40.0);
    let step = z_max / (p.grid_points - 1) as f64;
    let zgrid: Vec<f64> = (0..p.grid_points).map(|i| i as f64 * step).collect();
    let psi = density_psi(&alpha, &s_sub, &zgrid);
    let mass = simpson(&psi, step);
    let first_moment = simpson(
        &psi.iter()
            .zip(&zgrid)
            .map(|(f, z)| f * z)
            .collect::<Vec<_>>(),
        step,
    );
    let total = model.atom() + mass;
    rep.table.push_note(
        "density",
        "atom_plus_integral",
        "",
        total,
        &format!("Simpson on [0, {z_max:.1}] with {} points", p.grid_points),
    );
    rep.check(
        "density_mass_is_one",
        (total - 1.0).abs() <= p.mass_tolerance,
        format!("alpha_0 + int psi = {total:.6}"),
    );
    let (mc_mean, mc_se) = stats::mean_se(&law_values(&draws));
    let mean_k: f64 = alpha.iter().enumerate().map(|(k, a)| k as f64 * a).sum();
    let (_, s_se) = stats::mean_se(&s_sub);
    let se = (mc_se * mc_se + (mean_k * s_se).powi(2)).sqrt();
    rep.table.push_ci(
        "density",
        "mean_from_psi",
        "",
        first_moment,
        Some((first_moment - 1.96 * se, first_moment + 1.96 * se)),
        "",
    );
    rep.table.push_ci(
        "density",
        "mean_monte_carlo",
        "",
        mc_mean,
        Some((mc_mean - 1.96 * mc_se, mc_mean + 1.96 * mc_se)),
        "",
    );
    rep.check(
        "density_mean_matches_monte_carlo",
        (first_moment - mc_mean).abs() <= 1.96 * se,
        format!("{first_moment:.5} vs {mc_mean:.5}, combined standard error {se:.5}"),
    );
    for i in (0..p.grid_points).step_by((p.grid_points / 200).max(1)) {
        rep.table.push("density", "psi", zgrid[i], psi[i]);
    }
    Ok(rep)
}

fn law_values(draws: &[gwrw_core::limitlaw::ZDraw]) -> Vec<f64> {
    draws.iter().map(|d| d.z).collect()
}
