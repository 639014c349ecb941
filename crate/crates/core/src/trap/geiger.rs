//! Traps conditioned on their height, grown from the bottom.
//!
//! A trap of height exactly `n + 1` is obtained from one of height `n` by
//! adding a new root with `psi` children, the old root being child `phi`.
//! Siblings on the left are `h`-trees of height below `n`, siblings on the
//! right of height below `n + 1`. The pair has law
//! `c_n q_k Q[H < n]^(j-1) Q[H < n+1]^(k-j)` for `1 <= j <= k`.

use rand::RngCore;

use super::TrapTree;
use crate::offspring::{geiger_cn, height_tail, HeightTail, OffspringLaw};
use crate::rng::{self, domain};

/// A tree grown from an `h` law, stored in breadth-first order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HTree {
    /// Parent index of every vertex; the root's entry is `u32::MAX`.
    pub parent: Vec<u32>,
    pub depth: Vec<u32>,
}

impl HTree {
    pub fn height(&self) -> u32 {
        *self.depth.last().unwrap_or(&0)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Weight of the subtrap made of this tree and the edge joining its root
    /// to the spine: `sum over edges of beta^(j+1)`, the joining edge at
    /// level 0. Every vertex at depth `d` contributes `beta^(d+1)`.
    pub fn subtrap_weight(&self, beta: f64) -> f64 {
        self.depth.iter().map(|&d| beta.powi(d as i32 + 1)).sum()
    }
}

/// Joint law of `(phi, psi)` and samplers for height-conditioned traps.
#[derive(Debug, Clone)]
pub struct GeigerSampler {
    pub h: OffspringLaw,
    pub tail: HeightTail,
    h_cdf: Vec<f64>,
    tables: Vec<PhiPsiTable>,
}

#[derive(Debug, Clone)]
struct PhiPsiTable {
    pairs: Vec<(u32, u32)>,
    cdf: Vec<f64>,
}

impl GeigerSampler {
    /// Sampler for traps of height up to `max_height`.
    pub fn new(h: &OffspringLaw, max_height: usize) -> Self {
        let tail = height_tail(h, max_height.max(200) + 2);
        let tables = (0..=max_height.max(200))
            .map(|n| {
                let pmf = phi_psi_pmf(h, &tail, n);
                PhiPsiTable {
                    pairs: pmf.iter().map(|&(j, k, _)| (j, k)).collect(),
                    cdf: rng::cumulative(&pmf.iter().map(|t| t.2).collect::<Vec<_>>()),
                }
            })
            .collect();
        Self {
            h: h.clone(),
            tail,
            h_cdf: h.cdf(),
            tables,
        }
    }

    pub fn max_height(&self) -> usize {
        self.tables.len() - 1
    }

    /// Draws `(phi, psi)` for the step from height `n` to height `n + 1`.
    pub fn sample_phi_psi<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> (u32, u32) {
        let t = &self.tables[n.min(self.tables.len() - 1)];
        t.pairs[rng::invert_cdf(&t.cdf, rng::uniform(rng))]
    }

    /// `E[psi - 1]` for the step from height `n`, the mean number of
    /// subtraps added.
    pub fn mean_subtraps(&self, n: usize) -> f64 {
        let t = &self.tables[n.min(self.tables.len() - 1)];
        let mut prev = 0.0;
        t.pairs
            .iter()
            .zip(&t.cdf)
            .map(|(&(_, k), &c)| {
                let p = c - prev;
                prev = c;
                p * (k as f64 - 1.0)
            })
            .sum()
    }

    /// An `h`-tree conditioned on height below `max_h`, by rejection.
    /// Returns the tree and the number of attempts.
    pub fn conditioned_subtree<R: RngCore + ?Sized>(
        &self,
        max_h: u32,
        rng: &mut R,
    ) -> (HTree, u64) {
        assert!(max_h >= 1, "no tree has height below 0");
        let mut attempts = 0;
        loop {
            attempts += 1;
            if let Some(t) = grow_h_tree(&self.h_cdf, max_h, rng) {
                return (t, attempts);
            }
        }
    }

    /// Trap of height exactly `height` with distinguished leftmost deepest
    /// vertex, built bottom-up.
    pub fn geiger_tree<R: RngCore>(&self, height: u32, rng: &mut R) -> TrapTree {
        self.grow(height, LevelRng::Shared(rng))
    }

    /// As [`GeigerSampler::geiger_tree`], with the step to height `i` drawn
    /// from substream `(index, i)`. Traps of different heights built from
    /// the same `index` share their lower spine levels, and spine level `i`
    /// matches `SInfinitySampler::lambda(seed, index, i)`.
    pub fn geiger_tree_indexed(&self, height: u32, seed: u64, index: u64) -> TrapTree {
        self.grow(height, LevelRng::Indexed { seed, index })
    }

    fn grow(&self, height: u32, mut source: LevelRng<'_>) -> TrapTree {
        let mut children: Vec<Vec<u32>> = vec![Vec::new()];
        let mut spine = vec![0u32];
        let mut root = 0u32;
        for n in 0..height as usize {
            let mut own;
            let rng: &mut dyn RngCore = match &mut source {
                LevelRng::Shared(r) => &mut **r,
                LevelRng::Indexed { seed, index } => {
                    own = rng::stream(
                        *seed,
                        rng::key(domain::TRAP, rng::mix64(*index, n as u64 + 1)),
                    );
                    &mut own
                }
            };
            let (phi, psi) = self.sample_phi_psi(n, rng);
            let mut kids = Vec::with_capacity(psi as usize);
            for slot in 1..=psi {
                if slot == phi {
                    kids.push(root);
                } else {
                    let bound = if slot < phi { n as u32 } else { n as u32 + 1 };
                    let (t, _) = self.conditioned_subtree(bound, rng);
                    kids.push(append_htree(&mut children, &t));
                }
            }
            root = children.len() as u32;
            children.push(kids);
            spine.push(root);
        }
        TrapTree::from_children(children, root, spine)
    }
}

enum LevelRng<'a> {
    Shared(&'a mut dyn RngCore),
    Indexed { seed: u64, index: u64 },
}

fn append_htree(children: &mut Vec<Vec<u32>>, t: &HTree) -> u32 {
    let base = children.len() as u32;
    children.extend((0..t.len()).map(|_| Vec::new()));
    for (i, &p) in t.parent.iter().enumerate().skip(1) {
        children[(base + p) as usize].push(base + i as u32);
    }
    base
}

/// Grows an `h`-tree generation by generation, abandoning it as soon as a
/// vertex reaches depth `max_h`.
pub fn grow_h_tree<R: RngCore + ?Sized>(h_cdf: &[f64], max_h: u32, rng: &mut R) -> Option<HTree> {
    let mut parent = vec![u32::MAX];
    let mut depth = vec![0u32];
    let mut start = 0;
    let mut d = 0;
    while start < parent.len() {
        let end = parent.len();
        for v in start..end {
            let k = rng::invert_cdf(h_cdf, rng::uniform(rng));
            if k > 0 && d + 1 >= max_h {
                return None;
            }
            for _ in 0..k {
                parent.push(v as u32);
                depth.push(d + 1);
            }
        }
        start = end;
        d += 1;
    }
    Some(HTree { parent, depth })
}

/// Joint pmf of `(phi, psi)` for the step from height `n` to `n + 1`, as
/// `(j, k, probability)` triples.
pub fn phi_psi_pmf(h: &OffspringLaw, tail: &HeightTail, n: usize) -> Vec<(u32, u32, f64)> {
    let c = geiger_cn(tail, n);
    let a = 1.0 - tail.values[n];
    let b = 1.0 - tail.values[n + 1];
    let mut out = Vec::new();
    for (k, qk) in h.support().filter(|&(k, _)| k >= 1) {
        for j in 1..=k {
            let p = c * qk * a.powi(j as i32 - 1) * b.powi((k - j) as i32);
            if p > 0.0 {
                out.push((j as u32, k as u32, p));
            }
        }
    }
    out
}
