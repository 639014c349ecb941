//! The `beta`-biased walk on the lazily grown tree.
//!
//! From a non-root vertex with `k` children the walk moves to the parent with
//! probability `1/(1 + beta k)` and to each child with probability
//! `beta/(1 + beta k)`; from the root it picks a child uniformly. One uniform
//! is consumed per step.

mod backbone;
mod hitting;
mod regeneration;

pub use backbone::{
    rho_estimate, sample_wn, simulate_blocks, w_law_from_blocks, Block, BlockRun, RhoEstimate,
    WSample, WnConfig,
};
pub use hitting::{
    embedded_backbone, recompute_chi, run_hitting, run_levels, EmbeddedBackbone, HittingRecord,
    LevelOutcome, LevelRun,
};
pub use regeneration::{
    confirm_window, detect_super_regenerations, p_zero_super_regeneration, RegenerationTrace,
    UniformStream,
};

use thiserror::Error;

use crate::environment::{EnvError, Environment, VertexId};
use crate::offspring::DerivedParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("step budget of {budget} exhausted")]
    BudgetExceeded { budget: u64, partial: Box<LevelRun> },
    #[error(transparent)]
    Environment(#[from] EnvError),
    #[error("epsilon = {epsilon} must lie in (0, {bound})")]
    EpsilonOutOfRange { epsilon: f64, bound: f64 },
    #[error("no trap of height {h} found within {budget} backbone steps")]
    NoBigTrap { h: u32, budget: u64 },
}

/// Largest admissible `epsilon` for the trap threshold, `min(1/4, 2 gamma / 3)`.
pub fn epsilon_bound(params: &DerivedParams) -> f64 {
    (0.25f64).min(2.0 * params.gamma / 3.0)
}

pub fn validate_epsilon(params: &DerivedParams, epsilon: f64) -> Result<(), WalkError> {
    let bound = epsilon_bound(params);
    if epsilon > 0.0 && epsilon < bound {
        Ok(())
    } else {
        Err(WalkError::EpsilonOutOfRange { epsilon, bound })
    }
}

/// Trap threshold `h_n = ceil((1 - epsilon) ln n / (-ln f'(q)))`.
pub fn trap_threshold(params: &DerivedParams, n: u64, epsilon: f64) -> u32 {
    ((1.0 - epsilon) * (n as f64).ln() / params.height_rate())
        .ceil()
        .max(0.0) as u32
}

/// Typical height of the deepest trap met before level `n`, `ceil(ln n / (-ln f'(q)))`.
pub fn typical_height(params: &DerivedParams, n: u64) -> u32 {
    ((n as f64).ln() / params.height_rate()).ceil().max(0.0) as u32
}

/// Precomputed transition probabilities for each number of children.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub beta: f64,
    to_parent: Vec<f64>,
    child_scale: Vec<f64>,
}

impl Kernel {
    pub fn new(beta: f64, max_children: usize) -> Self {
        let to_parent = (0..=max_children)
            .map(|k| 1.0 / (1.0 + beta * k as f64))
            .collect();
        let child_scale = (0..=max_children)
            .map(|k| (1.0 + beta * k as f64) / beta)
            .collect();
        Self {
            beta,
            to_parent,
            child_scale,
        }
    }

    pub fn for_env(beta: f64, env: &Environment) -> Self {
        Self::new(beta, env.laws().law.max_degree())
    }

    /// Next position from `v` given the uniform `u`.
    #[inline]
    pub fn step(&self, env: &mut Environment, v: VertexId, u: f64) -> VertexId {
        env.expand(v);
        let k = env.n_children(v);
        let first = env.children(v).start;
        match env.parent(v) {
            None => first + ((u * k as f64) as u32).min(k as u32 - 1),
            Some(p) => {
                let pp = self.to_parent[k];
                if u < pp {
                    p
                } else {
                    let i = ((u - pp) * self.child_scale[k]) as u32;
                    first + i.min(k as u32 - 1)
                }
            }
        }
    }
}

/// A single transition of the walk.
pub fn step(env: &mut Environment, v: VertexId, u: f64, beta: f64) -> VertexId {
    Kernel::for_env(beta, env).step(env, v, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvLaws;
    use crate::offspring::{extinction_probability, OffspringLaw};
    use std::sync::Arc;

    fn setup() -> (Environment, DerivedParams) {
        let law = OffspringLaw::new(vec![0.2, 0.0, 0.8]).unwrap();
        let q = extinction_probability(&law);
        let env = Environment::new(Arc::new(EnvLaws::new(&law, q)), 17);
        (env, DerivedParams::new(&law, 5.0).unwrap())
    }

    #[test]
    fn thresholds() {
        let (_, p) = setup();
        assert_eq!(typical_height(&p, 1000), 8);
        assert_eq!(typical_height(&p, 10_000), 11);
        assert_eq!(trap_threshold(&p, 1000, 0.1), 7);
        assert_eq!(trap_threshold(&p, 10_000, 0.1), 10);
        assert!(validate_epsilon(&p, 0.1).is_ok());
        assert!(validate_epsilon(&p, 0.3).is_err());
        assert!(validate_epsilon(&p, 0.0).is_err());
    }

    #[test]
    fn step_probabilities_follow_conductances() {
        let (mut env, _) = setup();
        let kernel = Kernel::for_env(5.0, &env);
        env.expand(0);
        let v = env.children(0).start;
        env.expand(v);
        let k = env.n_children(v);
        let first = env.children(v).start;
        let m = 200_000;
        let mut counts = vec![0usize; k + 1];
        for i in 0..m {
            let u = (i as f64 + 0.5) / m as f64;
            let w = kernel.step(&mut env, v, u);
            if w == 0 {
                counts[k] += 1;
            } else {
                counts[(w - first) as usize] += 1;
            }
        }
        let z = 1.0 + 5.0 * k as f64;
        assert!((counts[k] as f64 / m as f64 - 1.0 / z).abs() < 1e-4);
        for c in &counts[..k] {
            assert!((*c as f64 / m as f64 - 5.0 / z).abs() < 1e-4);
        }
        let root_first = env.children(0).start;
        let kr = env.n_children(0);
        for i in 0..kr {
            let u = (i as f64 + 0.5) / kr as f64;
            assert_eq!(kernel.step(&mut env, 0, u), root_first + i as u32);
        }
    }
}
