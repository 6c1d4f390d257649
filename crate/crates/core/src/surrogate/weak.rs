use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ensemble::SyntheticFunction;
use super::gp::{gp_weak_labels, GpPrior};
use super::ProgramData;
use crate::error::{Error, Result};
use crate::kernel::{build_design_space, DesignSpace, Kernel, PragmaConfig};
use crate::oracle::{LabelKind, LabeledDesign};
use crate::rng::{derive_seed, rng_for};

/// `k` configs from `space`: distinct when the space is large enough,
/// otherwise drawn with replacement.
pub fn sample_configs(space: &DesignSpace, k: usize, rng: &mut impl Rng) -> Vec<PragmaConfig> {
    let size = space.size();
    if size >= k as u128 {
        space.sample_indices(k, rng).into_iter().map(|i| space.config_at(i)).collect()
    } else {
        (0..k).map(|_| space.config_at(rng.random_range(0..size))).collect()
    }
}

pub fn generate_weak_labels(
    kernel: &Kernel,
    space: &DesignSpace,
    function: &SyntheticFunction,
    k: usize,
    seed: u64,
    base_latency: u64,
) -> Result<Vec<LabeledDesign>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let configs = sample_configs(space, k, &mut rng_for(seed, &[0x77]));
    let ys = function.evaluate(kernel, &configs)?;
    let id = function.id();
    Ok(configs
        .into_iter()
        .zip(ys)
        .map(|(c, y)| LabeledDesign::weak(&kernel.id, c, y, base_latency, &id))
        .collect())
}

/// Where weak labels come from.
pub enum WeakSource {
    Functions(Vec<SyntheticFunction>),
    /// Independent GP sample paths, `functions` per program.
    Gp {
        prior: GpPrior,
        functions: usize,
    },
}

impl WeakSource {
    pub fn num_functions(&self) -> usize {
        match self {
            WeakSource::Functions(f) => f.len(),
            WeakSource::Gp { functions, .. } => *functions,
        }
    }
}

/// Number of `(P, theta)` pairs, weak designs per pair, weak:actual draw
/// ratio and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridSpec {
    pub l: usize,
    pub k: usize,
    pub ratio: f64,
    pub seed: u64,
}

/// Designs sharing one program and one label source.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub kernel: usize,
    pub source_function: Option<String>,
    pub designs: Vec<LabeledDesign>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridDataset {
    pub kernels: Vec<Kernel>,
    pub actual: Vec<Context>,
    pub weak: Vec<Context>,
    pub ratio: f64,
}

/// Whether draw `t` of the interleave is weak: the number of weak draws in
/// any prefix of length `n` is `floor(n * ratio)`.
pub fn is_weak_draw(t: u64, ratio: f64) -> bool {
    ((t + 1) as f64 * ratio).floor() > (t as f64 * ratio).floor()
}

impl HybridDataset {
    /// Group designs into contexts. Weak designs whose `(kernel, config)` has
    /// an actual label are dropped.
    pub fn from_designs(programs: &[ProgramData], weak: Vec<LabeledDesign>, ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::InvalidArgument(format!("weak ratio {ratio} outside [0, 1]")));
        }
        let index: BTreeMap<&str, usize> = programs.iter().enumerate().map(|(i, p)| (p.kernel.id.as_str(), i)).collect();
        let labeled: HashSet<(&str, &PragmaConfig)> = programs
            .iter()
            .flat_map(|p| p.designs.iter().filter(|d| d.label_kind == LabelKind::Actual))
            .map(|d| (d.kernel_id.as_str(), &d.config))
            .collect();
        let actual = programs
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.designs.is_empty())
            .map(|(i, p)| Context {
                kernel: i,
                source_function: None,
                designs: p.designs.iter().filter(|d| d.label_kind == LabelKind::Actual).cloned().collect(),
            })
            .collect();
        let mut weak_ctx: Vec<Context> = Vec::new();
        let mut slot: BTreeMap<(usize, String), usize> = BTreeMap::new();
        for d in weak {
            if labeled.contains(&(d.kernel_id.as_str(), &d.config)) {
                continue;
            }
            let Some(&k) = index.get(d.kernel_id.as_str()) else {
                return Err(Error::InvalidArgument(format!("weak design for unknown kernel {}", d.kernel_id)));
            };
            let source = d.source_function.clone().unwrap_or_default();
            let pos = *slot.entry((k, source.clone())).or_insert_with(|| {
                weak_ctx.push(Context {
                    kernel: k,
                    source_function: Some(source),
                    designs: Vec::new(),
                });
                weak_ctx.len() - 1
            });
            weak_ctx[pos].designs.push(d);
        }
        drop(labeled);
        Ok(Self {
            kernels: programs.iter().map(|p| p.kernel.clone()).collect(),
            actual,
            weak: weak_ctx,
            ratio,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty() && self.weak.is_empty()
    }

    pub fn num_weak_labels(&self) -> usize {
        self.weak.iter().map(|c| c.designs.len()).sum()
    }

    pub fn num_actual_labels(&self) -> usize {
        self.actual.iter().map(|c| c.designs.len()).sum()
    }

    /// The context for draw `t`: the interleave picks the pool, `rng` picks
    /// uniformly within it. Falls back to the other pool when one is empty.
    pub fn draw(&self, t: u64, rng: &mut impl Rng) -> Option<&Context> {
        let (first, second) = if is_weak_draw(t, self.ratio) {
            (&self.weak, &self.actual)
        } else {
            (&self.actual, &self.weak)
        };
        let pool = if first.is_empty() { second } else { first };
        if pool.is_empty() {
            None
        } else {
            Some(&pool[rng.random_range(0..pool.len())])
        }
    }
}

/// Pick `l` pairs over `programs x functions`: distinct while `l` fits,
/// otherwise every pair repeated evenly with the remainder spread over a
/// distinct sample. Returns `(program, function, multiplicity)`.
fn pair_multiplicities(programs: usize, functions: usize, l: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let total = programs * functions;
    if total == 0 || l == 0 {
        return Vec::new();
    }
    let (base, extra) = (l / total, l % total);
    let mut mult = vec![base; total];
    for i in rand::seq::index::sample(&mut rng_for(seed, &[0x9a]), total, extra) {
        mult[i] += 1;
    }
    mult.into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(i, c)| (i / functions, i % functions, c))
        .collect()
}

/// Weak designs for `l` `(P, theta)` pairs with `k` configs each. A pair
/// picked more than once is labeled as one context of `c * k` configs.
pub fn generate_weak_designs(programs: &[ProgramData], source: &WeakSource, l: usize, k: usize, seed: u64) -> Result<Vec<LabeledDesign>> {
    let pad_dim = programs.iter().map(|p| 3 * p.kernel.num_loops()).max().unwrap_or(0);
    let mut out = Vec::new();
    for (p, j, c) in pair_multiplicities(programs.len(), source.num_functions(), l, seed) {
        let prog = &programs[p];
        let space = build_design_space(&prog.kernel);
        let pair_seed = derive_seed(seed, &[p as u64, j as u64]);
        match source {
            WeakSource::Functions(fs) => {
                out.extend(generate_weak_labels(
                    &prog.kernel,
                    &space,
                    &fs[j],
                    c * k,
                    pair_seed,
                    prog.base_latency,
                )?);
            }
            WeakSource::Gp { prior, .. } => {
                out.extend(gp_weak_labels(&space, prog.base_latency, prior, pair_seed, c * k, pad_dim));
            }
        }
    }
    Ok(out)
}

pub fn build_hybrid_dataset(programs: &[ProgramData], source: Option<&WeakSource>, spec: &HybridSpec) -> Result<HybridDataset> {
    if !(0.0..=1.0).contains(&spec.ratio) {
        return Err(Error::InvalidArgument(format!("weak ratio {} outside [0, 1]", spec.ratio)));
    }
    let weak = if spec.ratio > 0.0 {
        let source = source
            .filter(|s| s.num_functions() > 0)
            .ok_or_else(|| Error::Empty("weak ratio > 0 needs a non-empty ensemble".into()))?;
        generate_weak_designs(programs, source, spec.l, spec.k, spec.seed)?
    } else {
        Vec::new()
    };
    HybridDataset::from_designs(programs, weak, spec.ratio)
}
