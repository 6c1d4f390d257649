//! Kernel generation: a seeded parametric generator over domain archetypes,
//! a C renderer, a synthesizability check, and an LLM-driven generator.

mod check;
mod llm;

pub use check::{check_synthesizable, SynthInput, SynthLimits, ValidityReport};
#[cfg(feature = "http")]
pub use llm::HttpLlmClient;
pub use llm::{
    build_initial_prompt, iterative_generate, parse_completion, GenSession, LlmClient, PromptConstraints, ReplayClient, RetryPolicy,
    ENV_LLM_API_KEY, ENV_LLM_ENDPOINT, ENV_LLM_MODEL, ENV_LLM_TEMPERATURE,
};

use std::collections::HashSet;
use std::fmt::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{ArrayDecl, Kernel, Loop, OpCounts, ENTRY_NAME};
use crate::rng::derive_seed;

/// Loop-nest shape and body mix shared by a family of domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Stencil,
    DenseLinearAlgebra,
    Reduction,
    SlidingWindow,
    TableLookup,
}

/// Curated domains and the archetype each one draws from.
pub const DOMAINS: [(&str, Archetype); 10] = [
    ("stencil", Archetype::Stencil),
    ("dense_linear_algebra", Archetype::DenseLinearAlgebra),
    ("reduction", Archetype::Reduction),
    ("sliding_window", Archetype::SlidingWindow),
    ("table_lookup", Archetype::TableLookup),
    ("image_processing", Archetype::Stencil),
    ("machine_learning", Archetype::DenseLinearAlgebra),
    ("statistics", Archetype::Reduction),
    ("signal_processing", Archetype::SlidingWindow),
    ("cryptography", Archetype::TableLookup),
];

pub fn archetype_of(domain: &str) -> Option<Archetype> {
    DOMAINS.iter().find(|(d, _)| *d == domain).map(|(_, a)| *a)
}

pub const ELEMENT_BITS: u32 = 32;
const TABLE_ENTRIES: u64 = 256;
const TRIP_RANGE: std::ops::RangeInclusive<u64> = 4..=96;

struct Shape {
    depth: usize,
    /// Per array, the nest dimensions indexing it (`None` is a fixed table).
    arrays: &'static [&'static [Option<usize>]],
    /// Op mix of the innermost body; outer bodies get `outer`.
    inner: OpCounts,
    outer: OpCounts,
    /// Upper bound of the random extra ops added to `inner`.
    jitter: u32,
}

impl Archetype {
    fn shape(self) -> Shape {
        match self {
            Archetype::Stencil => Shape {
                depth: 2,
                arrays: &[&[Some(0), Some(1)], &[Some(0), Some(1)]],
                inner: OpCounts::new(4, 1, 5, 1),
                outer: OpCounts::new(0, 0, 0, 0),
                jitter: 2,
            },
            Archetype::DenseLinearAlgebra => Shape {
                depth: 3,
                arrays: &[&[Some(0), Some(2)], &[Some(2), Some(1)], &[Some(0), Some(1)]],
                inner: OpCounts::new(1, 1, 2, 0),
                outer: OpCounts::new(0, 0, 1, 1),
                jitter: 1,
            },
            Archetype::Reduction => Shape {
                depth: 2,
                arrays: &[&[Some(0), Some(1)], &[Some(0)]],
                inner: OpCounts::new(1, 0, 1, 0),
                outer: OpCounts::new(0, 0, 0, 1),
                jitter: 2,
            },
            Archetype::SlidingWindow => Shape {
                depth: 2,
                arrays: &[&[Some(0)], &[Some(1)], &[Some(0)]],
                inner: OpCounts::new(1, 1, 2, 0),
                outer: OpCounts::new(0, 0, 0, 1),
                jitter: 1,
            },
            Archetype::TableLookup => Shape {
                depth: 1,
                arrays: &[&[Some(0)], &[None], &[Some(0)]],
                inner: OpCounts::new(2, 0, 2, 1),
                outer: OpCounts::new(0, 0, 0, 0),
                jitter: 2,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub seed: u64,
    /// Inclusive range of the loop count `Q`.
    pub num_loops: (usize, usize),
    /// Inclusive range of the memory budget `M` in bytes.
    pub memory_bytes: (u64, u64),
    pub domain: String,
    pub multi_function: bool,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            num_loops: (1, 6),
            memory_bytes: (4096, 65536),
            domain: "stencil".into(),
            multi_function: false,
        }
    }
}

impl GenSpec {
    pub fn check(&self) -> Result<Archetype> {
        if self.num_loops.0 > self.num_loops.1 || self.memory_bytes.0 > self.memory_bytes.1 {
            return Err(Error::InvalidArgument(format!(
                "empty range in generator spec: loops {:?}, memory {:?}",
                self.num_loops, self.memory_bytes
            )));
        }
        archetype_of(&self.domain).ok_or_else(|| Error::InvalidArgument(format!("unknown domain {:?}", self.domain)))
    }
}

struct Nest {
    loops: Vec<usize>,
    arrays: Vec<usize>,
}

/// A kernel drawn from `spec`; the same spec always yields the same kernel.
pub fn generate_parametric(spec: &GenSpec) -> Result<Kernel> {
    let archetype = spec.check()?;
    let shape = archetype.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let q = rng.random_range(spec.num_loops.0..=spec.num_loops.1);
    let budget = rng.random_range(spec.memory_bytes.0..=spec.memory_bytes.1);
    let elem_bytes = u64::from(ELEMENT_BITS / 8);

    let mut loops: Vec<Loop> = Vec::with_capacity(q);
    let mut arrays: Vec<(String, Vec<Option<usize>>)> = Vec::new();
    let mut nests: Vec<Nest> = Vec::new();
    while loops.len() < q {
        let depth = shape.depth.min(q - loops.len());
        let n = nests.len();
        let mut ids = Vec::with_capacity(depth);
        for d in 0..depth {
            let id = loops.len();
            let jitter = |rng: &mut ChaCha8Rng| rng.random_range(0..=shape.jitter);
            let body_ops = if d + 1 == depth {
                OpCounts::new(
                    shape.inner.adds + jitter(&mut rng),
                    shape.inner.mults + if shape.inner.mults > 0 { jitter(&mut rng) } else { 0 },
                    shape.inner.loads + jitter(&mut rng),
                    shape.inner.stores,
                )
            } else {
                shape.outer
            };
            loops.push(Loop {
                id,
                trip_count: rng.random_range(TRIP_RANGE),
                parent: ids.last().copied(),
                body_ops,
                arrays: Vec::new(),
            });
            ids.push(id);
        }
        let mut nest_arrays = Vec::new();
        for (a, dims) in shape.arrays.iter().enumerate() {
            let dims: Vec<Option<usize>> = dims.iter().map(|d| d.map(|d| ids[d.min(depth - 1)])).collect();
            nest_arrays.push(arrays.len());
            arrays.push((format!("n{n}_a{a}"), dims));
        }
        nests.push(Nest {
            loops: ids,
            arrays: nest_arrays,
        });
    }

    let extents = |loops: &[Loop], dims: &[Option<usize>]| -> Vec<u64> {
        dims.iter().map(|d| d.map_or(TABLE_ENTRIES, |l| loops[l].trip_count)).collect()
    };
    let footprint = |loops: &[Loop]| -> u64 {
        arrays
            .iter()
            .map(|(_, dims)| extents(loops, dims).iter().product::<u64>() * elem_bytes)
            .sum()
    };
    // Shrink the largest trip count until the arrays fit the budget.
    while footprint(&loops) > budget {
        let Some(l) = loops
            .iter()
            .filter(|l| l.trip_count > 1)
            .max_by_key(|l| (l.trip_count, std::cmp::Reverse(l.id)))
        else {
            return Err(Error::InfeasibleSpec(format!(
                "{} arrays need at least {} bytes, budget is {budget}",
                arrays.len(),
                footprint(&loops)
            )));
        };
        let id = l.id;
        let t = loops[id].trip_count;
        loops[id].trip_count = if t.is_multiple_of(2) { t / 2 } else { t - 1 };
    }

    for nest in &nests {
        let names: Vec<String> = nest.arrays.iter().map(|&a| arrays[a].0.clone()).collect();
        for &l in &nest.loops {
            let touches = loops[l].body_ops.memory_ops() > 0;
            if touches {
                loops[l].arrays = names.clone();
            }
        }
    }
    let num_functions = if spec.multi_function { nests.len().max(1) as u32 } else { 1 };
    let kernel = Kernel {
        id: format!("{}-{}", spec.domain, spec.seed),
        entry_name: ENTRY_NAME.into(),
        arrays: arrays
            .iter()
            .map(|(name, dims)| ArrayDecl {
                name: name.clone(),
                element_bits: ELEMENT_BITS,
                extents: extents(&loops, dims),
            })
            .collect(),
        loops,
        domain_tag: spec.domain.clone(),
        num_functions,
    };
    kernel.validate()?;
    Ok(kernel)
}

/// `n` kernels cycling through `domains`, with seeds derived from
/// `base.seed` and ids `{domain}-{i}`. A draw whose (domain, loop count, footprint) repeats an
/// earlier kernel, or that cannot fit its memory budget, is redrawn under a
/// fresh seed.
pub fn generate_corpus(base: &GenSpec, domains: &[&str], n: usize) -> Result<Vec<Kernel>> {
    const REDRAWS: u64 = 64;
    if domains.is_empty() {
        return Err(Error::InvalidArgument("corpus needs at least one domain".into()));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let domain = domains[i % domains.len()];
        let mut kernel = None;
        for attempt in 0..REDRAWS {
            let spec = GenSpec {
                seed: derive_seed(base.seed, &[i as u64, attempt]),
                domain: domain.to_string(),
                ..base.clone()
            };
            let mut k = match generate_parametric(&spec) {
                Ok(k) => k,
                Err(Error::InfeasibleSpec(why)) => {
                    log::debug!("redrawing {domain} kernel {i}: {why}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            k.id = format!("{domain}-{i}");
            if seen.insert((k.domain_tag.clone(), k.num_loops(), k.footprint_bytes())) {
                kernel = Some(k);
                break;
            }
        }
        out.push(
            kernel.ok_or_else(|| Error::InfeasibleSpec(format!("no new (domain, loops, footprint) for {domain} after {REDRAWS} draws")))?,
        );
    }
    Ok(out)
}

/// C source for `kernel`: arrays become arguments of `top`, every loop has
/// a constant bound, and multi-function kernels put each top-level nest in
/// its own helper.
pub fn render_c(kernel: &Kernel) -> String {
    let ctype = |bits: u32| match bits {
        8 => "char",
        16 => "short",
        64 => "long long",
        _ => "int",
    };
    let params: Vec<String> = kernel
        .arrays
        .iter()
        .map(|a| {
            let dims: String = a.extents.iter().map(|e| format!("[{e}]")).collect();
            format!("{} {}{}", ctype(a.element_bits), a.name, dims)
        })
        .collect();
    let args: Vec<&str> = kernel.arrays.iter().map(|a| a.name.as_str()).collect();
    let sig = params.join(", ");
    let mut out = String::new();
    let split = kernel.num_functions > 1;
    let roots: Vec<usize> = kernel.roots().map(|l| l.id).collect();
    if split {
        for (j, &r) in roots.iter().enumerate() {
            let _ = writeln!(out, "static void top_part{j}({sig}) {{");
            render_loop(kernel, r, 1, &mut out);
            out.push_str("}\n\n");
        }
    }
    let _ = writeln!(out, "void {}({sig}) {{", kernel.entry_name);
    if split {
        for j in 0..roots.len() {
            let _ = writeln!(out, "  top_part{j}({});", args.join(", "));
        }
    } else {
        for &r in &roots {
            render_loop(kernel, r, 1, &mut out);
        }
    }
    out.push_str("}\n");
    out
}

fn render_loop(kernel: &Kernel, id: usize, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    let l = &kernel.loops[id];
    let _ = writeln!(out, "{pad}L{id}: for (int i{id} = 0; i{id} < {}; i{id}++) {{", l.trip_count);
    let ops = l.body_ops;
    if ops.total() > 0 {
        let _ = writeln!(
            out,
            "{pad}  /* adds={} mults={} loads={} stores={} */",
            ops.adds, ops.mults, ops.loads, ops.stores
        );
        if let Some(a) = l.arrays.first().and_then(|n| kernel.array(n)) {
            let idx: String = a.extents.iter().map(|e| format!("[i{id} % {e}]")).collect();
            let rhs = if ops.mults > 0 {
                format!("{}{idx} * 3 + 1", a.name)
            } else {
                format!("{}{idx} + 1", a.name)
            };
            let _ = writeln!(out, "{pad}  {}{idx} = {rhs};", a.name);
        }
    }
    for c in kernel.children(id) {
        render_loop(kernel, c.id, indent + 1, out);
    }
    let _ = writeln!(out, "{pad}}}");
}
