//! The walk seen from the backbone.
//!
//! Between two backbone moves the walk makes excursions into buds, each of
//! which returns to the backbone vertex it started from. Here a backbone move
//! consumes one uniform of the super-regeneration stream and the bud
//! excursions are decided by a separate local stream; the excursions
//! themselves are never simulated. Together this is the same Markov chain as
//! the walk of [`super::Kernel`] observed on backbone vertices and buds.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::regeneration::{coupled_increment, detect_super_regenerations, UniformStream};
use super::WalkError;
use crate::environment::{EnvLaws, Environment, VertexId};
use crate::offspring::DerivedParams;
use crate::rng::{self, domain};
use crate::stats;

struct BackboneEngine<'a> {
    env: &'a mut Environment,
    beta: f64,
    u: UniformStream,
    local: ChaCha8Rng,
    y: VertexId,
    level: i64,
}

impl BackboneEngine<'_> {
    /// Bud excursions made from the current backbone vertex before the next
    /// backbone move; `f` is called with each bud entered.
    fn bud_excursions(&mut self, mut f: impl FnMut(VertexId)) {
        let y = self.y;
        self.env.expand(y);
        let buds = self.env.buds(y);
        let b = buds.len() as f64;
        if b == 0.0 {
            return;
        }
        let z = self.env.backbone_children(y).len() as f64;
        let p_bud = if self.env.parent(y).is_none() {
            b / (z + b)
        } else {
            self.beta * b / (1.0 + self.beta * (z + b))
        };
        loop {
            let u = rng::uniform(&mut self.local);
            if u >= p_bud {
                break;
            }
            let i = ((u / p_bud * b) as u32).min(buds.len() as u32 - 1);
            f(buds.start + i);
        }
    }

    /// One backbone move driven by the regeneration stream.
    fn backbone_move(&mut self) -> f64 {
        let u = self.u.next();
        self.level += coupled_increment(u, self.beta);
        let y = self.y;
        let kids = self.env.backbone_children(y);
        let z = kids.len() as f64;
        self.y = match self.env.parent(y) {
            None => kids.start + ((u * z) as u32).min(kids.len() as u32 - 1),
            Some(p) => {
                let denom = z * self.beta + 1.0;
                if u <= 1.0 / denom {
                    p
                } else {
                    let j = ((1.0 - u) * denom / self.beta).ceil().clamp(1.0, z) as u32;
                    kids.start + j - 1
                }
            }
        };
        u
    }
}

fn env_seed(seed: u64, replica: u64) -> u64 {
    rng::mix64(seed, rng::key(domain::ENVIRONMENT, replica))
}

/// Settings of the direct sampler of `W_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WnConfig {
    /// Trap threshold `h_n`.
    pub h: u32,
    /// Confirmation window for super-regeneration times.
    pub window: u64,
    /// Maximum number of backbone moves.
    pub budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WSample {
    /// Number of transitions from the backbone into the designated bud.
    pub w: u64,
    /// Attempts used to condition time 0 to be a super-regeneration time.
    pub attempts: u64,
    /// Backbone time at which the designated trap's root is first visited.
    pub k_time: u64,
    pub trap_height: u32,
    pub backbone_moves: u64,
}

/// One draw of `W_n`: under the condition that time 0 is a super-regeneration
/// time, walk to the first backbone vertex carrying a trap of height at least
/// `h`, designate its first such bud and count the transitions into it until
/// a confirmed super-regeneration time after the first visit.
pub fn sample_wn(
    laws: Arc<EnvLaws>,
    params: &DerivedParams,
    cfg: &WnConfig,
    seed: u64,
    replica: u64,
) -> Result<WSample, WalkError> {
    let mut env = Environment::new(laws, env_seed(seed, replica));
    let (u, attempts) = UniformStream::conditioned_on_zero_regeneration(
        seed,
        rng::key(domain::BACKBONE, replica),
        params.beta,
        cfg.window,
    );
    let mut eng = BackboneEngine {
        env: &mut env,
        beta: params.beta,
        u,
        local: rng::stream(seed, rng::key(domain::WALK, replica)),
        y: Environment::ROOT,
        level: 0,
    };
    let mut checked: Vec<bool> = Vec::new();
    let mut designated: Option<(VertexId, VertexId, u64, u32)> = None;
    let mut running_max = i64::MIN;
    let mut candidate: Option<(u64, i64)> = None;
    let mut w = 0u64;
    for t in 0..=cfg.budget {
        let y = eng.y;
        if designated.is_none() {
            let idx = y as usize;
            if checked.len() <= idx {
                checked.resize(eng.env.created().max(idx + 1), false);
            }
            if !checked[idx] {
                checked[idx] = true;
                eng.env.expand(y);
                for b in eng.env.buds(y) {
                    let h = eng.env.trap_height(b)?;
                    if h >= cfg.h {
                        designated = Some((y, b, t, h));
                        break;
                    }
                }
            }
        }
        if eng.level > running_max {
            running_max = eng.level;
            if designated.is_some() && candidate.is_none() {
                candidate = Some((t, eng.level));
            }
        } else if candidate.is_some_and(|(_, l)| eng.level <= l) {
            candidate = None;
        }
        if let (Some((ct, _)), Some((_, _, k, h))) = (candidate, designated) {
            if t - ct >= cfg.window {
                return Ok(WSample {
                    w,
                    attempts,
                    k_time: k,
                    trap_height: h,
                    backbone_moves: t,
                });
            }
        }
        let target = designated.map(|d| (d.0, d.1));
        eng.bud_excursions(|b| {
            if target == Some((y, b)) {
                w += 1;
            }
        });
        eng.backbone_move();
    }
    Err(WalkError::NoBigTrap {
        h: cfg.h,
        budget: cfg.budget,
    })
}

/// The walk between two consecutive super-regeneration times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    /// Distinct backbone vertices visited.
    pub vertices: u32,
    /// Depth gained between the two regeneration times.
    pub levels: u32,
    pub backbone_moves: u64,
    /// Transitions into each bud met, in order of first visit of its root and
    /// then in the order of the buds at that root.
    pub bud_counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRun {
    pub blocks: Vec<Block>,
    pub backbone_moves: u64,
}

/// Runs the backbone walk for `moves` backbone moves and cuts it at the
/// confirmed super-regeneration times. The stretch before the first one and
/// the unfinished stretch after the last one are discarded, so the blocks
/// are independent and distributed as the first block given that time 0 is a
/// super-regeneration time.
pub fn simulate_blocks(
    laws: Arc<EnvLaws>,
    params: &DerivedParams,
    moves: u64,
    window: u64,
    seed: u64,
    replica: u64,
) -> BlockRun {
    let mut env = Environment::new(laws, env_seed(seed, replica));
    let mut eng = BackboneEngine {
        env: &mut env,
        beta: params.beta,
        u: UniformStream::new(rng::stream(seed, rng::key(domain::BACKBONE, replica))),
        local: rng::stream(seed, rng::key(domain::WALK, replica)),
        y: Environment::ROOT,
        level: 0,
    };
    let mut uniforms = Vec::with_capacity(moves as usize);
    let mut path = Vec::with_capacity(moves as usize + 1);
    let mut first_visit: Vec<u64> = Vec::new();
    let mut bud_counts: Vec<u32> = Vec::new();
    for t in 0..=moves {
        let y = eng.y;
        path.push(y);
        let created = eng.env.created();
        if first_visit.len() < created {
            first_visit.resize(created, u64::MAX);
        }
        if first_visit[y as usize] == u64::MAX {
            first_visit[y as usize] = t;
        }
        if t == moves {
            break;
        }
        eng.bud_excursions(|b| {
            let b = b as usize;
            if bud_counts.len() <= b {
                bud_counts.resize(b + 1, 0);
            }
            bud_counts[b] += 1;
        });
        uniforms.push(eng.backbone_move());
    }
    let trace = detect_super_regenerations(&uniforms, params.beta, window);
    let tau = &trace.confirmed;
    let mut visited: Vec<(u64, VertexId)> = first_visit
        .iter()
        .enumerate()
        .filter(|&(_, &t)| t != u64::MAX)
        .map(|(v, &t)| (t, v as VertexId))
        .collect();
    visited.sort_unstable();
    let mut blocks = Vec::with_capacity(tau.len().saturating_sub(1));
    let mut cursor = 0;
    for pair in tau.windows(2) {
        let (start, end) = (pair[0] as u64, pair[1] as u64);
        while cursor < visited.len() && visited[cursor].0 < start {
            cursor += 1;
        }
        let mut vertices = 0;
        let mut counts = Vec::new();
        while cursor < visited.len() && visited[cursor].0 < end {
            let v = visited[cursor].1;
            vertices += 1;
            for b in env.buds(v) {
                counts.push(bud_counts.get(b as usize).copied().unwrap_or(0));
            }
            cursor += 1;
        }
        blocks.push(Block {
            vertices,
            levels: env.depth(path[end as usize]) - env.depth(path[start as usize]),
            backbone_moves: end - start,
            bud_counts: counts,
        });
    }
    BlockRun {
        blocks,
        backbone_moves: moves,
    }
}

/// Law of `W_n` from regeneration blocks, for a trap threshold with
/// `eta = Q[H >= h_n]`. The designated bud is the first big one in the first
/// block that has one, so block `b` carries weight `1 - (1-eta)^B_b` and its
/// `j`-th bud weight `eta (1-eta)^(j-1)`. With `eta = 0` this is the limit
/// law: a uniformly chosen bud among all buds met.
pub fn w_law_from_blocks(blocks: &[Block], eta: f64) -> Vec<f64> {
    let mut pmf: Vec<f64> = Vec::new();
    let mut total = 0.0;
    for block in blocks {
        let mut survive = 1.0;
        for &c in &block.bud_counts {
            let weight = if eta > 0.0 { eta * survive } else { 1.0 };
            survive *= 1.0 - eta;
            let c = c as usize;
            if pmf.len() <= c {
                pmf.resize(c + 1, 0.0);
            }
            pmf[c] += weight;
            total += weight;
        }
    }
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

/// Estimate of `rho`, the number of distinct backbone vertices visited per
/// level, as a ratio of block sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub rho: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub blocks: usize,
}

pub fn rho_estimate(blocks: &[Block], resamples: usize, seed: u64) -> RhoEstimate {
    let ratio = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut v, mut l) = (0.0, 0.0);
        for i in idx {
            v += blocks[i].vertices as f64;
            l += blocks[i].levels as f64;
        }
        v / l
    };
    let rho = ratio(&mut (0..blocks.len()));
    let (ci_low, ci_high) = stats::bootstrap_ci(blocks.len(), resamples, 0.95, seed, |idx| {
        ratio(&mut idx.iter().copied())
    });
    RhoEstimate {
        rho,
        ci_low,
        ci_high,
        blocks: blocks.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::{extinction_probability, OffspringLaw};

    fn setup() -> (Arc<EnvLaws>, DerivedParams) {
        let law = OffspringLaw::new(vec![0.2, 0.0, 0.8]).unwrap();
        let q = extinction_probability(&law);
        (
            Arc::new(EnvLaws::new(&law, q)),
            DerivedParams::new(&law, 5.0).unwrap(),
        )
    }

    #[test]
    fn blocks_tile_the_walk() {
        let (laws, p) = setup();
        let run = simulate_blocks(laws, &p, 20_000, 60, 1, 0);
        assert!(run.blocks.len() > 100);
        for b in &run.blocks {
            assert!(b.vertices >= 1);
            assert!(b.levels >= 1);
            assert!(b.vertices as u64 <= b.backbone_moves);
            assert!(b.levels as u64 <= b.backbone_moves);
        }
    }

    #[test]
    fn rho_within_bounds() {
        let (laws, p) = setup();
        let blocks: Vec<Block> = (0..4)
            .flat_map(|r| simulate_blocks(laws.clone(), &p, 50_000, 60, 2, r).blocks)
            .collect();
        let est = rho_estimate(&blocks, 200, 3);
        let speed = (p.beta - 1.0) / (p.beta + 1.0);
        assert!(est.rho >= 1.0);
        assert!(est.rho <= 1.0 / speed);
        assert!(est.ci_low <= est.rho && est.rho <= est.ci_high);
    }

    #[test]
    fn w_law_is_a_probability_vector() {
        let (laws, p) = setup();
        let run = simulate_blocks(laws, &p, 50_000, 60, 4, 0);
        for eta in [0.0, 1e-4, 0.05, 0.5] {
            let pmf = w_law_from_blocks(&run.blocks, eta);
            assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_sampler_finds_trap_and_confirms() {
        let (laws, p) = setup();
        let cfg = WnConfig {
            h: 3,
            window: 60,
            budget: 1_000_000,
        };
        for r in 0..50 {
            let s = sample_wn(laws.clone(), &p, &cfg, 7, r).unwrap();
            assert!(s.trap_height >= 3);
            assert!(s.backbone_moves >= s.k_time + cfg.window);
        }
    }
}
