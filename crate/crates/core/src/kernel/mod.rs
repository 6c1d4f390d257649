//! Loop-nest kernels, their pragma design spaces and graph encoding.
//!
//! A [`Kernel`] is a single-entry program made of perfectly known loop
//! nests: every trip count is a compile-time constant, every memory access
//! names a declared array. Loops are stored in a flat vector where a parent
//! always precedes its children, and loop `i` has id `i`.

mod graph;
mod space;

pub use graph::{kernel_to_graph, EdgeKind, GraphNode, NodeKind, ProgramGraph, PRAGMA_FEATURES, STATIC_FEATURES};
pub use space::{
    build_design_space, default_config, enumerate_configs, DesignSpace, LoopPragma, LoopSpace, PipelineMode, PragmaConfig, MAX_FACTOR,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name every kernel's entry function must carry.
pub const ENTRY_NAME: &str = "top";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCounts {
    pub adds: u32,
    pub mults: u32,
    pub loads: u32,
    pub stores: u32,
}

impl OpCounts {
    pub const fn new(adds: u32, mults: u32, loads: u32, stores: u32) -> Self {
        Self {
            adds,
            mults,
            loads,
            stores,
        }
    }

    /// Sequential latency of one body execution with unit-latency ops.
    pub fn total(&self) -> u64 {
        u64::from(self.adds) + u64::from(self.mults) + u64::from(self.loads) + u64::from(self.stores)
    }

    /// Arithmetic chain depth of one iteration.
    pub fn chain_depth(&self) -> u64 {
        u64::from(self.adds) + u64::from(self.mults)
    }

    pub fn memory_ops(&self) -> u32 {
        self.loads + self.stores
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArrayDecl {
    pub name: String,
    pub element_bits: u32,
    pub extents: Vec<u64>,
}

impl ArrayDecl {
    pub fn elements(&self) -> u64 {
        self.extents.iter().product()
    }

    pub fn bytes(&self) -> u64 {
        (self.elements() * u64::from(self.element_bits)).div_ceil(8)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Loop {
    pub id: usize,
    pub trip_count: u64,
    pub parent: Option<usize>,
    pub body_ops: OpCounts,
    /// Arrays touched by this loop's own loads and stores.
    #[serde(default)]
    pub arrays: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Kernel {
    pub id: String,
    pub entry_name: String,
    pub loops: Vec<Loop>,
    pub arrays: Vec<ArrayDecl>,
    pub domain_tag: String,
    #[serde(default = "one")]
    pub num_functions: u32,
}

fn one() -> u32 {
    1
}

impl Kernel {
    /// Number of loops, the `K` of a `3·K` design point.
    pub fn num_loops(&self) -> usize {
        self.loops.len()
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &Loop> + '_ {
        self.loops.iter().filter(move |l| l.parent == Some(id))
    }

    pub fn roots(&self) -> impl Iterator<Item = &Loop> + '_ {
        self.loops.iter().filter(|l| l.parent.is_none())
    }

    pub fn is_innermost(&self, id: usize) -> bool {
        self.children(id).next().is_none()
    }

    pub fn depth(&self, id: usize) -> usize {
        let mut depth = 0;
        let mut cur = self.loops[id].parent;
        while let Some(p) = cur {
            depth += 1;
            cur = self.loops[p].parent;
        }
        depth
    }

    /// Ids of `id` and every loop nested below it, in storage order.
    pub fn subtree(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            let cur = out[i];
            out.extend(self.children(cur).map(|l| l.id));
            i += 1;
        }
        out.sort_unstable();
        out
    }

    pub fn footprint_bytes(&self) -> u64 {
        self.arrays.iter().map(ArrayDecl::bytes).sum()
    }

    pub fn array(&self, name: &str) -> Option<&ArrayDecl> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Compact structural signature, e.g. `top[16[8],32]`.
    pub fn loop_signature(&self) -> String {
        fn render(k: &Kernel, id: usize, out: &mut String) {
            out.push_str(&k.loops[id].trip_count.to_string());
            let kids: Vec<usize> = k.children(id).map(|l| l.id).collect();
            if !kids.is_empty() {
                out.push('[');
                for (i, c) in kids.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    render(k, *c, out);
                }
                out.push(']');
            }
        }
        let mut out = format!("{}[", self.entry_name);
        let roots: Vec<usize> = self.roots().map(|l| l.id).collect();
        for (i, r) in roots.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            render(self, *r, &mut out);
        }
        out.push(']');
        out
    }

    /// Structural problems with this kernel; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.entry_name != ENTRY_NAME {
            out.push(format!("entry point is `{}`, expected `{ENTRY_NAME}`", self.entry_name));
        }
        for (i, l) in self.loops.iter().enumerate() {
            if l.id != i {
                out.push(format!("loop at position {i} has id {}", l.id));
            }
            if l.trip_count == 0 {
                out.push(format!("loop {i} has non-positive trip count"));
            }
            match l.parent {
                Some(p) if p >= i => out.push(format!("loop {i} has parent {p} that does not precede it")),
                _ => {}
            }
            for a in &l.arrays {
                if self.array(a).is_none() {
                    out.push(format!("loop {i} references undeclared array `{a}`"));
                }
            }
            if l.body_ops.memory_ops() > 0 && l.arrays.is_empty() {
                out.push(format!("loop {i} has memory ops but references no array"));
            }
        }
        let mut names: Vec<&str> = self.arrays.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            out.push("duplicate array names".to_string());
        }
        for a in &self.arrays {
            if a.extents.is_empty() || a.extents.contains(&0) {
                out.push(format!("array `{}` has a non-positive extent", a.name));
            }
            if a.element_bits == 0 {
                out.push(format!("array `{}` has zero element width", a.name));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let reasons = self.problems();
        if reasons.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidKernel {
                kernel: self.id.clone(),
                reasons,
            })
        }
    }
}
