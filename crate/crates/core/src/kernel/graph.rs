use serde::{Deserialize, Serialize};

use super::{build_design_space, Kernel, PragmaConfig};
use crate::error::Result;

/// Width of every node's static feature vector.
pub const STATIC_FEATURES: usize = 8;
/// Width of every node's pragma feature vector.
pub const PRAGMA_FEATURES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Loop,
    Array,
    OpGroup,
    PragmaSlot,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [NodeKind::Loop, NodeKind::Array, NodeKind::OpGroup, NodeKind::PragmaSlot];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    ParentChild,
    /// Consecutive sibling loops under the same parent (or at top level).
    Sequence,
    LoopUsesArray,
    LoopOwnsOps,
    PragmaAttachesToLoop,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 5] = [
        EdgeKind::ParentChild,
        EdgeKind::Sequence,
        EdgeKind::LoopUsesArray,
        EdgeKind::LoopOwnsOps,
        EdgeKind::PragmaAttachesToLoop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    pub static_features: [f64; STATIC_FEATURES],
    pub pragma_features: [f64; PRAGMA_FEATURES],
}

/// Undirected typed graph of one (kernel, config) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<(usize, usize, EdgeKind)>,
}

impl ProgramGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b, _) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Return a copy with node `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ProgramGraph {
        let mut nodes = self.nodes.clone();
        for (i, n) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = n.clone();
        }
        ProgramGraph {
            nodes,
            edges: self.edges.iter().map(|&(a, b, k)| (perm[a], perm[b], k)).collect(),
        }
    }
}

fn ln1p(v: u32) -> f64 {
    f64::from(v).ln_1p()
}

/// Node layout: loops, then arrays, then one op group per loop, then one
/// pragma slot per loop. Only the pragma slots depend on `config`.
pub fn kernel_to_graph(kernel: &Kernel, config: &PragmaConfig) -> Result<ProgramGraph> {
    build_design_space(kernel).check(config)?;
    let k = kernel.num_loops();
    let a = kernel.arrays.len();
    let mut nodes = Vec::with_capacity(3 * k + a);
    let mut edges = Vec::new();

    for l in &kernel.loops {
        let mut s = [0.0; STATIC_FEATURES];
        s[0] = (l.trip_count as f64).log2();
        s[1] = kernel.depth(l.id) as f64;
        s[2] = if kernel.is_innermost(l.id) { 1.0 } else { 0.0 };
        nodes.push(GraphNode {
            kind: NodeKind::Loop,
            static_features: s,
            pragma_features: [0.0; PRAGMA_FEATURES],
        });
        if let Some(p) = l.parent {
            edges.push((p, l.id, EdgeKind::ParentChild));
        }
    }
    // sibling order, top level included
    let mut last_in_scope: Vec<(Option<usize>, usize)> = Vec::new();
    for l in &kernel.loops {
        if let Some(entry) = last_in_scope.iter_mut().find(|(p, _)| *p == l.parent) {
            edges.push((entry.1, l.id, EdgeKind::Sequence));
            entry.1 = l.id;
        } else {
            last_in_scope.push((l.parent, l.id));
        }
    }

    for arr in &kernel.arrays {
        let mut s = [0.0; STATIC_FEATURES];
        s[6] = f64::from(arr.element_bits) / 32.0;
        s[7] = (arr.elements() as f64).log2();
        nodes.push(GraphNode {
            kind: NodeKind::Array,
            static_features: s,
            pragma_features: [0.0; PRAGMA_FEATURES],
        });
    }
    for l in &kernel.loops {
        for name in &l.arrays {
            if let Some(pos) = kernel.arrays.iter().position(|x| &x.name == name) {
                edges.push((l.id, k + pos, EdgeKind::LoopUsesArray));
            }
        }
    }

    for l in &kernel.loops {
        let ops = l.body_ops;
        let mut s = [0.0; STATIC_FEATURES];
        s[1] = kernel.depth(l.id) as f64;
        s[3] = ln1p(ops.adds);
        s[4] = ln1p(ops.mults);
        s[5] = ln1p(ops.loads);
        s[6] = ln1p(ops.stores);
        nodes.push(GraphNode {
            kind: NodeKind::OpGroup,
            static_features: s,
            pragma_features: [0.0; PRAGMA_FEATURES],
        });
        edges.push((l.id, k + a + l.id, EdgeKind::LoopOwnsOps));
    }

    for (l, p) in kernel.loops.iter().zip(&config.per_loop) {
        let mut s = [0.0; STATIC_FEATURES];
        s[0] = (l.trip_count as f64).log2();
        nodes.push(GraphNode {
            kind: NodeKind::PragmaSlot,
            static_features: s,
            pragma_features: [
                f64::from(p.parallel_factor).log2(),
                p.pipeline_mode.index() as f64,
                f64::from(p.tile_factor).log2(),
            ],
        });
        edges.push((2 * k + a + l.id, l.id, EdgeKind::PragmaAttachesToLoop));
    }

    Ok(ProgramGraph { nodes, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::fixtures::*;
    use crate::kernel::{default_config, enumerate_configs, OpCounts};

    #[test]
    fn one_loop_one_array_has_four_nodes() {
        let k = single_loop(8, OpCounts::new(1, 1, 1, 1));
        let s = build_design_space(&k);
        let g = kernel_to_graph(&k, &default_config(&s)).unwrap();
        // 1 loop + 1 array + 1 op group + 1 pragma slot
        assert_eq!(g.num_nodes(), 4);
        assert_eq!(g.count(NodeKind::PragmaSlot), 1);
        assert!(g.is_connected());
    }

    #[test]
    fn config_change_is_local() {
        let k = nest(8, 16, OpCounts::new(1, 0, 0, 1), OpCounts::new(2, 2, 2, 0));
        let s = build_design_space(&k);
        let base = default_config(&s);
        let mut bumped = base.clone();
        bumped.per_loop[1].parallel_factor = 4;
        let g0 = kernel_to_graph(&k, &base).unwrap();
        let g1 = kernel_to_graph(&k, &bumped).unwrap();
        assert_eq!(g0.edges, g1.edges);
        let differing: Vec<usize> = (0..g0.num_nodes()).filter(|&i| g0.nodes[i] != g1.nodes[i]).collect();
        let slot = 2 * 2 + 2 + 1;
        assert_eq!(differing, vec![slot]);
        assert_eq!(g1.nodes[slot].kind, NodeKind::PragmaSlot);
        assert_eq!(g1.nodes[slot].pragma_features[0], 2.0);
    }

    #[test]
    fn deterministic_and_injective() {
        let k = nest(8, 4, OpCounts::new(1, 0, 0, 1), OpCounts::new(2, 2, 2, 0));
        let s = build_design_space(&k);
        let all = enumerate_configs(&s, None, 0);
        let mut seen = Vec::new();
        for c in &all {
            let g = kernel_to_graph(&k, c).unwrap();
            assert_eq!(g, kernel_to_graph(&k, c).unwrap());
            let pragma: Vec<[f64; 3]> = g
                .nodes
                .iter()
                .filter(|n| n.kind == NodeKind::PragmaSlot)
                .map(|n| n.pragma_features)
                .collect();
            assert!(!seen.contains(&pragma));
            seen.push(pragma);
        }
    }

    #[test]
    fn siblings_are_connected() {
        let mut k = nest(8, 4, OpCounts::new(1, 0, 0, 1), OpCounts::new(2, 2, 2, 0));
        k.loops.push(crate::kernel::Loop {
            id: 2,
            trip_count: 16,
            parent: None,
            body_ops: OpCounts::new(1, 0, 0, 0),
            arrays: vec![],
        });
        let s = build_design_space(&k);
        let g = kernel_to_graph(&k, &default_config(&s)).unwrap();
        assert!(g.is_connected());
        assert!(g.edges.contains(&(0, 2, EdgeKind::Sequence)));
    }

    #[test]
    fn mismatched_config_rejected() {
        let k = single_loop(8, OpCounts::new(1, 1, 1, 1));
        let other = nest(8, 4, OpCounts::default(), OpCounts::default());
        let c = default_config(&build_design_space(&other));
        assert!(kernel_to_graph(&k, &c).is_err());
    }
}
