//! Hitting times of levels and the decomposition of the time spent in traps.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{trap_threshold, Kernel, WalkError};
use crate::environment::{Environment, VertexId};
use crate::offspring::DerivedParams;
use crate::rng;

/// Statistics of the walk at the first hitting time `Delta_n` of level `n`.
///
/// `delta_n_y` counts steps between two backbone vertices, so that
/// `delta_n = delta_n_y + (steps along trap edges)`. `chi_n` counts steps
/// along edges of traps of height at least `h_n`, including the edge from the
/// backbone to the bud. `chi_star_n` adds up, over every visit to such a trap,
/// the time between the first and the last visit to its deepest vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HittingRecord {
    pub seed: u64,
    pub n: u64,
    pub delta_n: u64,
    pub chi_n: u64,
    pub chi_star_n: u64,
    pub delta_n_y: u64,
    pub max_backtrack: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelOutcome {
    Hit(HittingRecord),
    /// The step budget ran out before the level was reached.
    Censored {
        n: u64,
        budget: u64,
    },
}

impl LevelOutcome {
    pub fn record(&self) -> Option<&HittingRecord> {
        match self {
            LevelOutcome::Hit(r) => Some(r),
            LevelOutcome::Censored { .. } => None,
        }
    }

    /// Hitting time, or `None` when it is only known to exceed the budget.
    pub fn delta(&self) -> Option<u64> {
        self.record().map(|r| r.delta_n)
    }
}

/// Result of one walk followed until the deepest requested level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRun {
    pub levels: Vec<LevelOutcome>,
    pub steps: u64,
    pub trajectory: Option<Vec<VertexId>>,
}

struct TrapClock {
    by_height: Vec<u64>,
    star_by_height: Vec<u64>,
    current: Option<(VertexId, usize)>,
    seen_delta: bool,
    since_delta: u64,
}

impl TrapClock {
    fn add(v: &mut Vec<u64>, h: usize, x: u64) {
        if v.len() <= h {
            v.resize(h + 1, 0);
        }
        v[h] += x;
    }

    fn tail(v: &[u64], h: usize) -> u64 {
        v.iter().skip(h).sum()
    }
}

/// Runs the walk until it first reaches `n`.
pub fn run_hitting<R: RngCore>(
    env: &mut Environment,
    params: &DerivedParams,
    n: u64,
    epsilon: f64,
    budget: u64,
    rng: &mut R,
) -> Result<HittingRecord, WalkError> {
    let run = run_levels(env, params, &[n], epsilon, budget, false, rng)?;
    match run.levels[0] {
        LevelOutcome::Hit(r) => Ok(r),
        LevelOutcome::Censored { .. } => Err(WalkError::BudgetExceeded {
            budget,
            partial: Box::new(run),
        }),
    }
}

/// Runs one walk until the deepest of `levels` is reached or `budget` steps
/// are spent, recording the hitting statistics of every level on the way.
/// Levels must be increasing. Exhausting the budget is reported through
/// `LevelOutcome::Censored`, not as an error.
pub fn run_levels<R: RngCore>(
    env: &mut Environment,
    params: &DerivedParams,
    levels: &[u64],
    epsilon: f64,
    budget: u64,
    keep_trajectory: bool,
    rng: &mut R,
) -> Result<LevelRun, WalkError> {
    debug_assert!(levels.windows(2).all(|w| w[0] < w[1]));
    let kernel = Kernel::for_env(params.beta, env);
    let thresholds: Vec<usize> = levels
        .iter()
        .map(|&n| trap_threshold(params, n, epsilon) as usize)
        .collect();
    let mut outcomes = Vec::with_capacity(levels.len());
    let mut trajectory = keep_trajectory.then(|| vec![Environment::ROOT]);
    let mut clock = TrapClock {
        by_height: Vec::new(),
        star_by_height: Vec::new(),
        current: None,
        seen_delta: false,
        since_delta: 0,
    };
    let mut x = Environment::ROOT;
    let mut steps = 0u64;
    let mut backbone_steps = 0u64;
    let mut max_depth = 0u32;
    let mut max_backtrack = 0u32;
    let mut next_level = 0usize;
    while next_level < levels.len() && levels[next_level] == 0 {
        outcomes.push(LevelOutcome::Hit(HittingRecord {
            seed: env.seed(),
            n: 0,
            delta_n: 0,
            chi_n: 0,
            chi_star_n: 0,
            delta_n_y: 0,
            max_backtrack: 0,
        }));
        next_level += 1;
    }
    while next_level < levels.len() {
        if steps == budget {
            for &n in &levels[next_level..] {
                outcomes.push(LevelOutcome::Censored { n, budget });
            }
            break;
        }
        let u = rng::uniform(rng);
        let y = kernel.step(env, x, u);
        steps += 1;
        let from_backbone = env.kind(x).on_backbone();
        let to_backbone = env.kind(y).on_backbone();
        if from_backbone && to_backbone {
            backbone_steps += 1;
        } else {
            let inner = if to_backbone { x } else { y };
            let t = env.ensure_trap(inner)?;
            let info = *env.trap(t);
            let h = info.height as usize;
            TrapClock::add(&mut clock.by_height, h, 1);
            if from_backbone {
                clock.current = Some((info.delta, h));
                clock.seen_delta = false;
                clock.since_delta = 0;
            }
            if to_backbone {
                clock.current = None;
            } else if let Some((delta, h)) = clock.current {
                if clock.seen_delta {
                    clock.since_delta += 1;
                }
                if y == delta {
                    if clock.seen_delta {
                        TrapClock::add(&mut clock.star_by_height, h, clock.since_delta);
                    }
                    clock.seen_delta = true;
                    clock.since_delta = 0;
                }
            }
        }
        if let Some(tr) = trajectory.as_mut() {
            tr.push(y);
        }
        let d = env.depth(y);
        if d > max_depth {
            max_depth = d;
            if d as u64 == levels[next_level] {
                let h = thresholds[next_level];
                outcomes.push(LevelOutcome::Hit(HittingRecord {
                    seed: env.seed(),
                    n: levels[next_level],
                    delta_n: steps,
                    chi_n: TrapClock::tail(&clock.by_height, h),
                    chi_star_n: TrapClock::tail(&clock.star_by_height, h),
                    delta_n_y: backbone_steps,
                    max_backtrack,
                }));
                next_level += 1;
            }
        }
        max_backtrack = max_backtrack.max(max_depth - d);
        x = y;
    }
    Ok(LevelRun {
        levels: outcomes,
        steps,
        trajectory,
    })
}

/// `chi_n` recomputed from a stored trajectory, for cross-checking the
/// online counter.
pub fn recompute_chi(env: &Environment, trajectory: &[VertexId], delta_n: u64, h_n: u32) -> u64 {
    trajectory[..=delta_n as usize]
        .windows(2)
        .filter(|w| {
            let inner = if env.kind(w[1]).on_backbone() {
                w[0]
            } else {
                w[1]
            };
            !env.kind(inner).on_backbone()
                && env
                    .trap_of(inner)
                    .is_some_and(|t| env.trap(t).height >= h_n)
        })
        .count() as u64
}

/// The walk observed at its backbone-to-backbone transitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddedBackbone {
    /// Times `sigma_i`, with `sigma_0 = 0`.
    pub sigma: Vec<u64>,
    /// Positions `Y_i = X_(sigma_i)`.
    pub y: Vec<VertexId>,
}

impl EmbeddedBackbone {
    /// Number of backbone steps completed by time `t`.
    pub fn steps_by(&self, t: u64) -> u64 {
        (self.sigma.partition_point(|&s| s <= t) - 1) as u64
    }
}

pub fn embedded_backbone(env: &Environment, trajectory: &[VertexId]) -> EmbeddedBackbone {
    let mut sigma = vec![0];
    let mut y = vec![trajectory[0]];
    for (k, w) in trajectory.windows(2).enumerate() {
        if env.kind(w[0]).on_backbone() && env.kind(w[1]).on_backbone() {
            sigma.push(k as u64 + 1);
            y.push(w[1]);
        }
    }
    EmbeddedBackbone { sigma, y }
}
