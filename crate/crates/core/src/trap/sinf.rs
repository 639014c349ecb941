//! The mean return time `S_inf = 2 sum_i beta^(-i) (1 + Lambda_i)` to the
//! deepest vertex of the infinite spine-plus-subtraps tree.

use super::GeigerSampler;
use crate::rng::{self, domain};

/// A truncated draw of `S_inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SInfinitySample {
    pub value: f64,
    /// Last spine index whose subtraps were sampled.
    pub levels: u32,
    /// Bound on the mean of the omitted subtrap part.
    pub error_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SInfinitySampler {
    pub geiger: GeigerSampler,
    pub beta: f64,
    pub fprime_q: f64,
    /// `sup_n E[psi_n]` over the tabulated levels.
    pub psi_bound: f64,
}

impl SInfinitySampler {
    pub fn new(geiger: GeigerSampler, beta: f64, fprime_q: f64) -> Self {
        let psi_bound = (0..=geiger.max_height())
            .map(|n| geiger.mean_subtraps(n) + 1.0)
            .fold(0.0, f64::max);
        Self {
            geiger,
            beta,
            fprime_q,
            psi_bound,
        }
    }

    /// Constant `C` with `beta^(-i) E[Lambda_i] <= C f'(q)^i`.
    pub fn lambda_constant(&self) -> f64 {
        self.psi_bound / (1.0 - 1.0 / (self.beta * self.fprime_q))
    }

    /// Bound on `E[Lambda_i]`.
    pub fn lambda_bound(&self, i: u32) -> f64 {
        self.lambda_constant() * (self.beta * self.fprime_q).powi(i as i32)
    }

    /// Bound on the mean of `2 sum_(i > levels) beta^(-i) Lambda_i`.
    pub fn remainder_bound(&self, levels: u32) -> f64 {
        2.0 * self.lambda_constant() * self.fprime_q.powi(levels as i32 + 1) / (1.0 - self.fprime_q)
    }

    /// Smallest truncation level whose remainder bound is below `tol`.
    pub fn levels_for(&self, tol: f64) -> u32 {
        let mut i = 0;
        while self.remainder_bound(i) >= tol {
            i += 1;
        }
        i
    }

    /// Upper bound on `E[S_inf]`.
    pub fn mean_bound(&self) -> f64 {
        let b = self.beta;
        2.0 * self.psi_bound / (1.0 - 1.0 / (b * self.fprime_q))
            * (b / (b - 1.0) + 1.0 / (1.0 - self.fprime_q))
    }

    /// `Lambda_i` for the infinite spine, drawn from its own substream so
    /// that draws at different truncations share their common levels.
    pub fn lambda(&self, seed: u64, index: u64, i: u32) -> f64 {
        if i == 0 {
            return 0.0;
        }
        let mut r = rng::stream(seed, rng::key(domain::TRAP, rng::mix64(index, i as u64)));
        let n = i as usize - 1;
        let (phi, psi) = self.geiger.sample_phi_psi(n, &mut r);
        let mut total = 0.0;
        for slot in 1..=psi {
            if slot == phi {
                continue;
            }
            let bound = if slot < phi { n as u32 } else { n as u32 + 1 };
            let (t, _) = self.geiger.conditioned_subtree(bound, &mut r);
            total += t.subtrap_weight(self.beta);
        }
        total
    }

    /// Draw number `index` of `S_inf`, truncated where the remainder bound
    /// falls below `tol`. The spine term `2 sum beta^(-i)` is summed exactly.
    pub fn sample(&self, seed: u64, index: u64, tol: f64) -> SInfinitySample {
        assert!(tol > 0.0, "tolerance must be positive");
        let levels = self.levels_for(tol);
        let inv = 1.0 / self.beta;
        let mut value = 2.0 / (1.0 - inv);
        for i in 1..=levels {
            value += 2.0 * inv.powi(i as i32) * self.lambda(seed, index, i);
        }
        SInfinitySample {
            value,
            levels,
            error_bound: self.remainder_bound(levels),
        }
    }
}
