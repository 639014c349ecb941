//! Lazily grown Galton-Watson tree conditioned on survival.
//!
//! The tree is stored in its Harris decomposition: backbone vertices carry a
//! `g`-distributed number of backbone children followed by buds, and each bud
//! roots an `h`-Galton-Watson trap. A vertex's offspring is drawn from a
//! ChaCha stream keyed by the environment seed and a key derived from the
//! vertex's path, so the realised tree does not depend on expansion order.

use std::io::{self, Write};
use std::ops::Range;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::offspring::{backbone_bud_law, g_law, h_law, OffspringLaw};
use crate::rng;

pub type VertexId = u32;
pub const NO_VERTEX: VertexId = u32::MAX;
const NO_TRAP: u32 = u32::MAX;

/// Default bound on the number of vertices in one trap.
pub const DEFAULT_TRAP_CAP: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("trap under vertex {bud} exceeds {cap} vertices")]
    TrapBudget { bud: VertexId, cap: usize },
    #[error("vertex {0} is not a bud")]
    NotABud(VertexId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Root,
    Backbone,
    Bud,
    Trap,
}

impl Kind {
    pub fn label(self) -> &'static str {
        match self {
            Kind::Root => "root",
            Kind::Backbone => "backbone",
            Kind::Bud => "bud",
            Kind::Trap => "trap",
        }
    }

    #[inline]
    pub fn on_backbone(self) -> bool {
        matches!(self, Kind::Root | Kind::Backbone)
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    key: u64,
    parent: VertexId,
    first_child: VertexId,
    depth: u32,
    trap: u32,
    n_children: u16,
    n_backbone: u16,
    kind: Kind,
    expanded: bool,
}

/// Sampling tables shared by every environment built from one offspring law.
#[derive(Debug, Clone)]
pub struct EnvLaws {
    pub law: OffspringLaw,
    pub q: f64,
    g_cdf: Vec<f64>,
    bud_cdf: Vec<Vec<f64>>,
    h_cdf: Vec<f64>,
}

impl EnvLaws {
    pub fn new(law: &OffspringLaw, q: f64) -> Self {
        let g = g_law(law, q);
        let bud_cdf = (0..=law.max_degree())
            .map(|j| {
                if j > 0 && g.p(j) > 0.0 {
                    backbone_bud_law(law, q, j)
                        .map(|b| b.cdf())
                        .unwrap_or_default()
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self {
            law: law.clone(),
            q,
            g_cdf: g.cdf(),
            bud_cdf,
            h_cdf: h_law(law, q).cdf(),
        }
    }
}

/// Summary of a fully expanded trap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrapInfo {
    pub bud: VertexId,
    /// Height of the trap measured from the bud.
    pub height: u32,
    /// Leftmost vertex at maximal depth.
    pub delta: VertexId,
    pub size: u32,
}

/// One realisation of the conditioned tree, grown on demand.
#[derive(Debug, Clone)]
pub struct Environment {
    laws: Arc<EnvLaws>,
    seed: u64,
    nodes: Vec<Node>,
    traps: Vec<TrapInfo>,
    trap_cap: usize,
}

impl Environment {
    pub fn new(laws: Arc<EnvLaws>, seed: u64) -> Self {
        let root = Node {
            key: rng::mix64(seed, 0),
            parent: NO_VERTEX,
            first_child: NO_VERTEX,
            depth: 0,
            trap: NO_TRAP,
            n_children: 0,
            n_backbone: 0,
            kind: Kind::Root,
            expanded: false,
        };
        Self {
            laws,
            seed,
            nodes: vec![root],
            traps: Vec::new(),
            trap_cap: DEFAULT_TRAP_CAP,
        }
    }

    pub fn with_trap_cap(mut self, cap: usize) -> Self {
        self.trap_cap = cap;
        self
    }

    pub fn laws(&self) -> &Arc<EnvLaws> {
        &self.laws
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub const ROOT: VertexId = 0;

    /// Number of vertices created so far.
    pub fn created(&self) -> usize {
        self.nodes.len()
    }

    pub fn expanded_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.expanded).count()
    }

    #[inline]
    pub fn kind(&self, v: VertexId) -> Kind {
        self.nodes[v as usize].kind
    }

    #[inline]
    pub fn depth(&self, v: VertexId) -> u32 {
        self.nodes[v as usize].depth
    }

    #[inline]
    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        let p = self.nodes[v as usize].parent;
        (p != NO_VERTEX).then_some(p)
    }

    #[inline]
    pub fn is_expanded(&self, v: VertexId) -> bool {
        self.nodes[v as usize].expanded
    }

    /// Children of an expanded vertex: backbone children first, then buds.
    #[inline]
    pub fn children(&self, v: VertexId) -> Range<VertexId> {
        let n = &self.nodes[v as usize];
        debug_assert!(n.expanded);
        n.first_child..n.first_child + n.n_children as u32
    }

    #[inline]
    pub fn n_children(&self, v: VertexId) -> usize {
        self.nodes[v as usize].n_children as usize
    }

    /// Backbone children of an expanded backbone vertex.
    #[inline]
    pub fn backbone_children(&self, v: VertexId) -> Range<VertexId> {
        let n = &self.nodes[v as usize];
        n.first_child..n.first_child + n.n_backbone as u32
    }

    /// Buds of an expanded backbone vertex.
    #[inline]
    pub fn buds(&self, v: VertexId) -> Range<VertexId> {
        let n = &self.nodes[v as usize];
        n.first_child + n.n_backbone as u32..n.first_child + n.n_children as u32
    }

    /// Draws the offspring of `v` if it has not been drawn yet.
    #[inline]
    pub fn expand(&mut self, v: VertexId) {
        if !self.nodes[v as usize].expanded {
            self.expand_slow(v);
        }
    }

    fn expand_slow(&mut self, v: VertexId) {
        let node = self.nodes[v as usize];
        let mut stream: ChaCha8Rng = rng::stream(self.seed, node.key);
        let (n_backbone, n_buds, child_kind) = if node.kind.on_backbone() {
            let j = rng::invert_cdf(&self.laws.g_cdf, rng::uniform(&mut stream));
            let i = rng::invert_cdf(&self.laws.bud_cdf[j], rng::uniform(&mut stream));
            (j, i, Kind::Backbone)
        } else {
            let k = rng::invert_cdf(&self.laws.h_cdf, rng::uniform(&mut stream));
            (0, k, Kind::Trap)
        };
        let first = self.nodes.len() as VertexId;
        let total = n_backbone + n_buds;
        for c in 0..total {
            let kind = if c < n_backbone {
                Kind::Backbone
            } else if node.kind.on_backbone() {
                Kind::Bud
            } else {
                child_kind
            };
            self.nodes.push(Node {
                key: rng::mix64(node.key, c as u64 + 1),
                parent: v,
                first_child: NO_VERTEX,
                depth: node.depth + 1,
                trap: if node.kind.on_backbone() {
                    NO_TRAP
                } else {
                    node.trap
                },
                n_children: 0,
                n_backbone: 0,
                kind,
                expanded: false,
            });
        }
        let n = &mut self.nodes[v as usize];
        n.first_child = first;
        n.n_children = total as u16;
        n.n_backbone = n_backbone as u16;
        n.expanded = true;
    }

    /// Trap index of a bud or trap vertex, expanding the whole trap on first use.
    pub fn ensure_trap(&mut self, v: VertexId) -> Result<u32, EnvError> {
        let node = self.nodes[v as usize];
        match node.kind {
            Kind::Trap => Ok(node.trap),
            Kind::Bud if node.trap != NO_TRAP => Ok(node.trap),
            Kind::Bud => self.build_trap(v),
            _ => Err(EnvError::NotABud(v)),
        }
    }

    fn build_trap(&mut self, bud: VertexId) -> Result<u32, EnvError> {
        let index = self.traps.len() as u32;
        self.nodes[bud as usize].trap = index;
        let base = self.nodes[bud as usize].depth;
        let mut stack = vec![bud];
        let mut height = 0;
        let mut delta = bud;
        let mut size = 0usize;
        while let Some(v) = stack.pop() {
            size += 1;
            if size > self.trap_cap {
                self.nodes[bud as usize].trap = NO_TRAP;
                return Err(EnvError::TrapBudget {
                    bud,
                    cap: self.trap_cap,
                });
            }
            let d = self.nodes[v as usize].depth - base;
            if d > height {
                height = d;
                delta = v;
            }
            self.expand(v);
            stack.extend(self.children(v).rev());
        }
        self.traps.push(TrapInfo {
            bud,
            height,
            delta,
            size: size as u32,
        });
        Ok(index)
    }

    pub fn trap(&self, index: u32) -> &TrapInfo {
        &self.traps[index as usize]
    }

    /// Trap index of `v` if it lies in an already analysed trap.
    #[inline]
    pub fn trap_of(&self, v: VertexId) -> Option<u32> {
        let t = self.nodes[v as usize].trap;
        (t != NO_TRAP).then_some(t)
    }

    pub fn trap_height(&mut self, bud: VertexId) -> Result<u32, EnvError> {
        let t = self.ensure_trap(bud)?;
        Ok(self.traps[t as usize].height)
    }

    /// Largest trap height among the buds of backbone vertex `x`, if any.
    pub fn max_trap_height_at(&mut self, x: VertexId) -> Result<Option<u32>, EnvError> {
        self.expand(x);
        let mut best = None;
        for b in self.buds(x) {
            let h = self.trap_height(b)?;
            best = best.max(Some(h));
        }
        Ok(best)
    }

    /// Writes `id parent kind depth` for every created vertex.
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "id parent kind depth")?;
        for (id, n) in self.nodes.iter().enumerate() {
            if n.parent == NO_VERTEX {
                writeln!(out, "{id} - {} {}", n.kind.label(), n.depth)?;
            } else {
                writeln!(out, "{id} {} {} {}", n.parent, n.kind.label(), n.depth)?;
            }
        }
        Ok(())
    }

    /// Stable path key of a vertex, independent of creation order.
    pub fn path_key(&self, v: VertexId) -> u64 {
        self.nodes[v as usize].key
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::extinction_probability;

    fn laws() -> Arc<EnvLaws> {
        let law = OffspringLaw::new(vec![0.2, 0.0, 0.8]).unwrap();
        Arc::new(EnvLaws::new(&law, extinction_probability(&law)))
    }

    fn signature(
        env: &mut Environment,
        v: VertexId,
        depth: u32,
        out: &mut Vec<(u64, usize, Kind)>,
    ) {
        env.expand(v);
        out.push((env.path_key(v), env.n_children(v), env.kind(v)));
        if depth == 0 {
            return;
        }
        for c in env.children(v) {
            signature(env, c, depth - 1, out);
        }
    }

    #[test]
    fn realisation_is_independent_of_expansion_order() {
        let l = laws();
        let mut a = Environment::new(l.clone(), 99);
        let mut b = Environment::new(l, 99);
        b.expand(0);
        let kids: Vec<_> = b.children(0).rev().collect();
        for c in kids {
            b.expand(c);
            let grand: Vec<_> = b.children(c).rev().collect();
            for g in grand {
                b.expand(g);
            }
        }
        let mut sa = Vec::new();
        let mut sb = Vec::new();
        signature(&mut a, 0, 6, &mut sa);
        signature(&mut b, 0, 6, &mut sb);
        sa.sort_by_key(|s| s.0);
        sb.sort_by_key(|s| s.0);
        assert_eq!(sa, sb);
    }

    #[test]
    fn backbone_vertices_have_backbone_children() {
        let mut env = Environment::new(laws(), 3);
        let mut v = Environment::ROOT;
        for _ in 0..200 {
            env.expand(v);
            assert!(env.backbone_children(v).len() >= 1);
            for b in env.buds(v) {
                assert_eq!(env.kind(b), Kind::Bud);
            }
            v = env.backbone_children(v).start;
        }
        assert_eq!(env.depth(v), 200);
    }

    #[test]
    fn traps_are_finite_and_leftmost_deepest() {
        let mut env = Environment::new(laws(), 5);
        let mut v = Environment::ROOT;
        let mut checked = 0;
        for _ in 0..300 {
            env.expand(v);
            for b in env.buds(v) {
                let t = env.ensure_trap(b).unwrap();
                let info = *env.trap(t);
                let base = env.depth(b);
                assert_eq!(env.depth(info.delta) - base, info.height);
                let mut stack = vec![b];
                let mut max = 0;
                while let Some(u) = stack.pop() {
                    max = max.max(env.depth(u) - base);
                    assert_eq!(env.trap_of(u), Some(t));
                    stack.extend(env.children(u));
                }
                assert_eq!(max, info.height);
                checked += 1;
            }
            v = env.backbone_children(v).start;
        }
        assert!(checked > 50);
    }

    #[test]
    fn max_trap_height_sentinel() {
        let mut env = Environment::new(laws(), 11);
        let mut v = Environment::ROOT;
        let mut saw_none = false;
        let mut saw_some = false;
        for _ in 0..100 {
            match env.max_trap_height_at(v).unwrap() {
                None => {
                    saw_none = true;
                    assert!(env.buds(v).is_empty());
                }
                Some(_) => saw_some = true,
            }
            v = env.backbone_children(v).start;
        }
        assert!(saw_none && saw_some);
    }

    #[test]
    fn trap_cap_is_enforced() {
        let law = OffspringLaw::new(vec![0.2, 0.0, 0.8]).unwrap();
        let l = Arc::new(EnvLaws::new(&law, 0.25));
        let mut found = false;
        for seed in 0..2000 {
            let mut env = Environment::new(l.clone(), seed).with_trap_cap(3);
            env.expand(0);
            for b in env.buds(0) {
                match env.ensure_trap(b) {
                    Err(EnvError::TrapBudget { cap: 3, .. }) => found = true,
                    Err(e) => panic!("{e}"),
                    Ok(t) => assert!(env.trap(t).size <= 3),
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn dump_format() {
        let mut env = Environment::new(laws(), 1);
        env.expand(0);
        let mut out = Vec::new();
        env.dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("id parent kind depth"));
        assert_eq!(lines.next(), Some("0 - root 0"));
        assert_eq!(text.lines().count(), env.created() + 1);
    }
}
