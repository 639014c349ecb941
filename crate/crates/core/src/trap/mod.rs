//! Finite traps: their electrical networks, excursions from the deepest
//! vertex, and the spine decomposition behind the limit law.
//!
//! Along the spine from the deepest vertex `delta` (index 0) to the bud
//! (index `H`) and the backbone root (index `H + 1`), conductances are
//! normalised so that the edge at `delta` has conductance 1: the spine edge
//! `(i, i+1)` has conductance `beta^(-i)` and an edge at level `j` of a
//! subtrap hanging from spine vertex `i` has `beta^(-i) beta^(j+1)`.

mod geiger;
mod sinf;

pub use geiger::{grow_h_tree, phi_psi_pmf, GeigerSampler, HTree};
pub use sinf::{SInfinitySample, SInfinitySampler};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, VertexId};
use crate::rng::{self, domain};

const NONE: u32 = u32::MAX;

/// A finite trap below a bud, with its spine.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapTree {
    pub children: Vec<Vec<u32>>,
    pub parent: Vec<u32>,
    /// Depth below the bud.
    pub depth: Vec<u32>,
    pub bud: u32,
    pub delta: u32,
    pub height: u32,
    /// `spine[i]` is the ancestor of `delta` at distance `i`.
    pub spine: Vec<u32>,
    /// Spine index of the nearest spine ancestor of each vertex.
    pub spine_index: Vec<u32>,
}

impl TrapTree {
    pub fn from_children(children: Vec<Vec<u32>>, bud: u32, spine: Vec<u32>) -> Self {
        let n = children.len();
        let mut parent = vec![NONE; n];
        let mut depth = vec![0; n];
        let mut order = vec![bud];
        let mut i = 0;
        while i < order.len() {
            let v = order[i] as usize;
            for &c in &children[v] {
                parent[c as usize] = v as u32;
                depth[c as usize] = depth[v] + 1;
                order.push(c);
            }
            i += 1;
        }
        let delta = spine[0];
        let height = depth[delta as usize];
        let mut spine_index = vec![NONE; n];
        for (i, &s) in spine.iter().enumerate() {
            spine_index[s as usize] = i as u32;
        }
        for &v in &order {
            if spine_index[v as usize] == NONE {
                spine_index[v as usize] = spine_index[parent[v as usize] as usize];
            }
        }
        Self {
            children,
            parent,
            depth,
            bud,
            delta,
            height,
            spine,
            spine_index,
        }
    }

    /// Copies the trap under `bud` out of an environment; its spine ends at
    /// the leftmost deepest vertex.
    pub fn from_env(
        env: &mut Environment,
        bud: VertexId,
    ) -> Result<Self, crate::environment::EnvError> {
        let t = env.ensure_trap(bud)?;
        let delta_env = env.trap(t).delta;
        let mut ids = vec![bud];
        let mut children: Vec<Vec<u32>> = Vec::new();
        let mut i = 0;
        let mut local = std::collections::HashMap::new();
        local.insert(bud, 0u32);
        while i < ids.len() {
            let v = ids[i];
            let kids: Vec<u32> = env
                .children(v)
                .map(|c| {
                    let id = ids.len() as u32;
                    ids.push(c);
                    local.insert(c, id);
                    id
                })
                .collect();
            children.push(kids);
            i += 1;
        }
        let mut spine = Vec::new();
        let mut v = delta_env;
        loop {
            spine.push(local[&v]);
            if v == bud {
                break;
            }
            v = env.parent(v).expect("trap vertex below bud");
        }
        Ok(Self::from_children(children, 0, spine))
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    /// Leftmost vertex of maximal depth in depth-first order.
    pub fn leftmost_deepest(&self) -> u32 {
        let mut best = (0, self.bud);
        let mut stack = vec![self.bud];
        while let Some(v) = stack.pop() {
            let d = self.depth[v as usize];
            if d > best.0 {
                best = (d, v);
            }
            stack.extend(self.children[v as usize].iter().rev());
        }
        best.1
    }

    /// Conductance of the edge from each vertex to its parent; the bud's
    /// entry is the edge to the backbone root.
    pub fn conductances(&self, beta: f64) -> Vec<f64> {
        self.depth
            .iter()
            .map(|&d| beta.powi(d as i32 - self.height as i32))
            .collect()
    }

    /// `P_i[T_delta < T_root]` along the spine, indices `0..=H+1`.
    pub fn spine_harmonic(&self, beta: f64) -> Vec<f64> {
        let h = self.height as i32;
        (0..=h + 1)
            .map(|i| (beta.powi(h + 1) - beta.powi(i)) / (beta.powi(h + 1) - 1.0))
            .collect()
    }

    /// Conductances of the walk conditioned to return to `delta` before
    /// reaching the root (the Doob transform by the harmonic function),
    /// normalised to 1 on the edge at `delta`. The bud's entry is 0.
    pub fn conditioned_conductances(&self, beta: f64) -> Vec<f64> {
        let c = self.conductances(beta);
        let hs = self.spine_harmonic(beta);
        let harm = |v: u32| hs[self.spine_index[v as usize] as usize];
        let norm = hs[1];
        (0..self.len())
            .map(|v| {
                let p = self.parent[v];
                if p == NONE {
                    0.0
                } else {
                    c[v] * harm(v as u32) * harm(p) / norm
                }
            })
            .collect()
    }

    /// `Lambda_i`, the total weight of the subtraps at spine index `i`.
    pub fn skeleton(&self, beta: f64) -> TrapSkeleton {
        let h = self.height as usize;
        let mut lambda = vec![0.0; h + 1];
        for v in 0..self.len() {
            let i = self.spine_index[v] as usize;
            if self.spine[i] != v as u32 {
                let spine_depth = (h - i) as i32;
                lambda[i] += beta.powi(self.depth[v] as i32 - spine_depth);
            }
        }
        TrapSkeleton {
            height: self.height,
            lambda,
        }
    }

    /// The trap as an undirected weighted graph. With `with_root`, an extra
    /// vertex `len()` stands for the backbone root above the bud.
    pub fn network(&self, beta: f64, with_root: bool) -> Network {
        let c = self.conductances(beta);
        let mut edges = Vec::with_capacity(self.len());
        for v in 0..self.len() {
            let p = self.parent[v];
            if p != NONE {
                edges.push((p, v as u32, c[v]));
            } else if with_root {
                edges.push((self.len() as u32, v as u32, c[v]));
            }
        }
        Network {
            vertices: self.len() + usize::from(with_root),
            edges,
        }
    }
}

/// Undirected network given by weighted edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub vertices: usize,
    pub edges: Vec<(u32, u32, f64)>,
}

impl Network {
    pub fn total_conductance(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }
}

/// Spine skeleton of a trap: height and subtrap weights `Lambda_0..=Lambda_H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSkeleton {
    pub height: u32,
    pub lambda: Vec<f64>,
}

impl TrapSkeleton {
    /// CSV with header `i,lambda`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,lambda\n");
        for (i, l) in self.lambda.iter().enumerate() {
            s.push_str(&format!("{i},{l}\n"));
        }
        s
    }
}

/// `(p_1, p_2)` for a trap of height `H`: `p_1 = P_bud[T_delta < T_root]`
/// and `p_2 = P_delta[T_root < T_delta^+]`.
pub fn escape_probabilities(height: u32, beta: f64) -> (f64, f64) {
    let b = 1.0 - 1.0 / beta;
    let p1 = b / (1.0 - beta.powi(-(height as i32 + 1)));
    let p2 = b / (beta.powi(height as i32) - 1.0 / beta);
    (p1, p2)
}

/// Mean length of an excursion from `delta` conditioned to return before the
/// root, in closed form over the skeleton:
/// `2 sum_(i=0..H) beta^(-i) h(i) (h(i+1) + Lambda_i h(i)) / h(1)`,
/// where `h` is the spine harmonic function.
pub fn mean_excursion_time(skel: &TrapSkeleton, beta: f64) -> f64 {
    let h = skel.height as i32;
    let harm = |i: i32| (beta.powi(h + 1) - beta.powi(i)) / (beta.powi(h + 1) - 1.0);
    let norm = harm(1);
    (0..=h)
        .map(|i| {
            let hi = harm(i);
            2.0 * beta.powi(-i) * hi * (harm(i + 1) + skel.lambda[i as usize] * hi) / norm
        })
        .sum()
}

/// Mean and second moment of the conditioned excursion length, by exact
/// recursion over the tree rooted at `delta`.
pub fn excursion_moments(tree: &TrapTree, beta: f64) -> (f64, f64) {
    if tree.height == 0 {
        return (0.0, 0.0);
    }
    let c = tree.conditioned_conductances(beta);
    let n = tree.len();
    let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for v in 0..n {
        let p = tree.parent[v];
        if p != NONE && c[v] > 0.0 {
            adj[v].push((p, c[v]));
            adj[p as usize].push((v as u32, c[v]));
        }
    }
    let mut up = vec![NONE; n];
    let mut order = vec![tree.delta];
    let mut i = 0;
    while i < order.len() {
        let v = order[i];
        for &(w, _) in &adj[v as usize] {
            if w != up[v as usize] && w != tree.delta {
                up[w as usize] = v;
                order.push(w);
            }
        }
        i += 1;
    }
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for &x in order.iter().skip(1).rev() {
        let xs = x as usize;
        let pi: f64 = adj[xs].iter().map(|e| e.1).sum();
        let mut p_up = 0.0;
        let mut s1 = 0.0;
        let mut rest = Vec::new();
        for &(w, cw) in &adj[xs] {
            if w == up[xs] {
                p_up = cw / pi;
            } else {
                let r = cw / pi;
                s1 += r * m1[w as usize];
                rest.push((r, w as usize));
            }
        }
        let ea = (1.0 + s1) / p_up;
        let mut s2 = p_up;
        for (r, w) in rest {
            s2 += r * (1.0 + m2[w] + 2.0 * m1[w] + 2.0 * ea + 2.0 * m1[w] * ea);
        }
        m1[xs] = ea;
        m2[xs] = s2 / p_up;
    }
    let s = tree.parent[tree.delta as usize] as usize;
    (1.0 + m1[s], 1.0 + 2.0 * m1[s] + m2[s])
}

/// Transition tables of a nearest-neighbour walk on a trap.
#[derive(Debug, Clone)]
pub struct TrapWalk {
    offsets: Vec<u32>,
    targets: Vec<u32>,
    cdf: Vec<f64>,
    /// Index of the backbone root, if present.
    pub root: Option<u32>,
    pub delta: u32,
}

impl TrapWalk {
    fn from_weights(n: usize, edges: &[(u32, u32, f64)], root: Option<u32>, delta: u32) -> Self {
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(a, b, c) in edges {
            if c > 0.0 {
                adj[a as usize].push((b, c));
                adj[b as usize].push((a, c));
            }
        }
        let mut offsets = vec![0u32];
        let mut targets = Vec::new();
        let mut cdf = Vec::new();
        for row in &adj {
            let total: f64 = row.iter().map(|e| e.1).sum();
            let mut acc = 0.0;
            for &(w, c) in row {
                acc += c / total;
                targets.push(w);
                cdf.push(acc);
            }
            if let Some(last) = cdf.last_mut() {
                if !row.is_empty() {
                    *last = 1.0;
                }
            }
            offsets.push(targets.len() as u32);
        }
        Self {
            offsets,
            targets,
            cdf,
            root,
            delta,
        }
    }

    /// Unconditioned walk on the trap plus the backbone root.
    pub fn unconditioned(tree: &TrapTree, beta: f64) -> Self {
        let net = tree.network(beta, true);
        Self::from_weights(
            net.vertices,
            &net.edges,
            Some(tree.len() as u32),
            tree.delta,
        )
    }

    /// Walk with the conditioned conductances; the root is unreachable.
    pub fn conditioned(tree: &TrapTree, beta: f64) -> Self {
        let c = tree.conditioned_conductances(beta);
        let edges: Vec<(u32, u32, f64)> = (0..tree.len())
            .filter(|&v| tree.parent[v] != NONE)
            .map(|v| (tree.parent[v], v as u32, c[v]))
            .collect();
        Self::from_weights(tree.len(), &edges, None, tree.delta)
    }

    #[inline]
    pub fn step<R: RngCore + ?Sized>(&self, v: u32, rng: &mut R) -> u32 {
        let (a, b) = (
            self.offsets[v as usize] as usize,
            self.offsets[v as usize + 1] as usize,
        );
        if b - a == 1 {
            return self.targets[a];
        }
        let u = rng::uniform(rng);
        let row = &self.cdf[a..b];
        self.targets[a + row.partition_point(|&c| c <= u).min(b - a - 1)]
    }

    /// Time to return to `start`, treating the root as an ordinary vertex.
    pub fn return_time<R: RngCore + ?Sized>(&self, start: u32, rng: &mut R) -> u64 {
        let mut v = self.step(start, rng);
        let mut t = 1;
        while v != start {
            v = self.step(v, rng);
            t += 1;
        }
        t
    }

    /// Excursion from `delta`: `Some(length)` if it returns before hitting
    /// the root, `None` otherwise.
    pub fn excursion<R: RngCore + ?Sized>(&self, rng: &mut R) -> Option<u64> {
        let mut v = self.step(self.delta, rng);
        let mut t = 1;
        while v != self.delta {
            if Some(v) == self.root {
                return None;
            }
            v = self.step(v, rng);
            t += 1;
        }
        Some(t)
    }
}

/// Draws of `chi*` for a trap of given height: the time spent between first
/// and last visits to `delta` when the trap is entered `W` times.
#[derive(Debug, Clone)]
pub struct ChiStarSampler {
    pub geiger: GeigerSampler,
    pub beta: f64,
    w_cdf: Vec<f64>,
    /// Excursion counts up to this are simulated, larger ones use the normal
    /// approximation with the exact mean and variance.
    pub direct_threshold: u64,
}

/// One draw of `chi*` with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiStarDraw {
    pub chi_star: f64,
    pub w: u64,
    pub reaching: u64,
    pub excursions: u64,
    pub mean_excursion: f64,
}

impl ChiStarSampler {
    pub fn new(geiger: GeigerSampler, beta: f64, w_pmf: &[f64], direct_threshold: u64) -> Self {
        Self {
            geiger,
            beta,
            w_cdf: rng::cumulative(w_pmf),
            direct_threshold,
        }
    }

    pub fn sample<R: RngCore>(&self, height: u32, rng: &mut R) -> ChiStarDraw {
        let tree = self.geiger.geiger_tree(height, rng);
        self.draw_in(&tree, rng)
    }

    /// Draw number `index`: the trap comes from
    /// [`GeigerSampler::geiger_tree_indexed`] and the entries from substream
    /// `index`, so draws at different heights share their randomness.
    pub fn sample_indexed(&self, height: u32, seed: u64, index: u64) -> ChiStarDraw {
        let tree = self.geiger.geiger_tree_indexed(height, seed, index);
        let mut r = rng::stream(seed, rng::key(domain::LIMIT, index));
        self.draw_in(&tree, &mut r)
    }

    /// `chi*` for a given trap.
    pub fn draw_in<R: RngCore + ?Sized>(&self, tree: &TrapTree, rng: &mut R) -> ChiStarDraw {
        let w = rng::invert_cdf(&self.w_cdf, rng::uniform(rng)) as u64;
        let (p1, p2) = escape_probabilities(tree.height, self.beta);
        let reaching = rng::binomial(w, p1, rng);
        let mut excursions = 0u64;
        for _ in 0..reaching {
            excursions += rng::geometric_failures(p2, rng);
        }
        let (m1, m2) = excursion_moments(tree, self.beta);
        let chi_star = if excursions == 0 {
            0.0
        } else if excursions <= self.direct_threshold {
            let walk = TrapWalk::conditioned(tree, self.beta);
            (0..excursions)
                .map(|_| walk.return_time(tree.delta, rng) as f64)
                .sum()
        } else {
            let n = excursions as f64;
            let sd = (n * (m2 - m1 * m1)).max(0.0).sqrt();
            (n * m1 + sd * rng::normal(rng)).max(2.0 * n)
        };
        ChiStarDraw {
            chi_star,
            w,
            reaching,
            excursions,
            mean_excursion: m1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::{extinction_probability, h_law, OffspringLaw};

    fn sampler() -> GeigerSampler {
        let law = OffspringLaw::new(vec![0.2, 0.0, 0.8]).unwrap();
        GeigerSampler::new(&h_law(&law, extinction_probability(&law)), 40)
    }

    fn path(h: u32) -> TrapTree {
        let n = h as usize + 1;
        let children = (0..n)
            .map(|v| {
                if v + 1 < n {
                    vec![v as u32 + 1]
                } else {
                    vec![]
                }
            })
            .collect();
        let spine = (0..n as u32).rev().collect();
        TrapTree::from_children(children, 0, spine)
    }

    #[test]
    fn escape_probability_values() {
        let (p1, p2) = escape_probabilities(1, 5.0);
        assert!((p1 - 0.833_333_333_333_333_4).abs() < 1e-12);
        assert!((p2 - 0.166_666_666_666_666_66).abs() < 1e-12);
        let (p1, p2) = escape_probabilities(0, 5.0);
        assert!((p1 - 1.0).abs() < 1e-12);
        assert!((p2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn escape_probabilities_match_harmonic_function() {
        let t = path(6);
        let h = t.spine_harmonic(5.0);
        let (p1, p2) = escape_probabilities(6, 5.0);
        assert!((p1 - h[6]).abs() < 1e-12);
        assert!((p2 - (1.0 - h[1])).abs() < 1e-12);
    }

    #[test]
    fn path_trap_mean_excursion() {
        let t = path(1);
        let skel = t.skeleton(5.0);
        assert_eq!(skel.lambda, vec![0.0, 0.0]);
        assert!((mean_excursion_time(&skel, 5.0) - 2.0).abs() < 1e-12);
        let t = path(3);
        let (m1, _) = excursion_moments(&t, 5.0);
        assert!((mean_excursion_time(&t.skeleton(5.0), 5.0) - m1).abs() < 1e-10);
    }

    #[test]
    fn three_routes_to_the_mean_excursion() {
        let s = sampler();
        let mut r = rng::stream(3, 3);
        for h in 1..9 {
            for _ in 0..10 {
                let t = s.geiger_tree(h, &mut r);
                let formula = mean_excursion_time(&t.skeleton(5.0), 5.0);
                let twice_sum = 2.0 * t.conditioned_conductances(5.0).iter().sum::<f64>();
                let (m1, m2) = excursion_moments(&t, 5.0);
                assert!((formula - twice_sum).abs() < 1e-10 * formula, "h = {h}");
                assert!((formula - m1).abs() < 1e-9 * formula, "h = {h}");
                assert!(m2 >= m1 * m1);
            }
        }
    }

    #[test]
    fn unconditioned_return_identity_by_simulation() {
        let s = sampler();
        let mut r = rng::stream(4, 4);
        let t = s.geiger_tree(3, &mut r);
        let walk = TrapWalk::unconditioned(&t, 5.0);
        let expect = 2.0 * t.network(5.0, true).total_conductance();
        let xs: Vec<f64> = (0..100_000)
            .map(|_| walk.return_time(t.delta, &mut r) as f64)
            .collect();
        let (m, se) = crate::stats::mean_se(&xs);
        assert!((m - expect).abs() < 4.0 * se, "{m} vs {expect}");
    }

    #[test]
    fn skeleton_csv() {
        let t = path(2);
        assert_eq!(t.skeleton(5.0).to_csv(), "i,lambda\n0,0\n1,0\n2,0\n");
    }

    #[test]
    fn from_env_matches_environment() {
        let law = OffspringLaw::new(vec![0.2, 0.0, 0.8]).unwrap();
        let laws = std::sync::Arc::new(crate::environment::EnvLaws::new(&law, 0.25));
        let mut found = 0;
        for seed in 0..200 {
            let mut env = Environment::new(laws.clone(), seed);
            env.expand(0);
            for b in env.buds(0) {
                let h = env.trap_height(b).unwrap();
                let t = TrapTree::from_env(&mut env, b).unwrap();
                assert_eq!(t.height, h);
                assert_eq!(t.leftmost_deepest(), t.delta);
                found += 1;
            }
        }
        assert!(found > 20);
    }
}
