use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::error::{Error, Result};

/// Largest PARALLEL / TILE factor offered for any loop.
pub const MAX_FACTOR: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    Off,
    Cg,
    Fg,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 3] = [PipelineMode::Off, PipelineMode::Cg, PipelineMode::Fg];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineMode::Off => "off",
            PipelineMode::Cg => "cg",
            PipelineMode::Fg => "fg",
        })
    }
}

/// Pragmas on one loop; serialized as `[parallel, "mode", tile]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(u32, PipelineMode, u32)", into = "(u32, PipelineMode, u32)")]
pub struct LoopPragma {
    pub parallel_factor: u32,
    pub pipeline_mode: PipelineMode,
    pub tile_factor: u32,
}

impl From<(u32, PipelineMode, u32)> for LoopPragma {
    fn from((p, m, t): (u32, PipelineMode, u32)) -> Self {
        Self {
            parallel_factor: p,
            pipeline_mode: m,
            tile_factor: t,
        }
    }
}

impl From<LoopPragma> for (u32, PipelineMode, u32) {
    fn from(l: LoopPragma) -> Self {
        (l.parallel_factor, l.pipeline_mode, l.tile_factor)
    }
}

impl LoopPragma {
    pub const DEFAULT: LoopPragma = LoopPragma {
        parallel_factor: 1,
        pipeline_mode: PipelineMode::Off,
        tile_factor: 1,
    };
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PragmaConfig {
    pub kernel_id: String,
    pub per_loop: Vec<LoopPragma>,
}

impl PragmaConfig {
    /// `3·K` numeric vector: `[log2 p, pipeline index, log2 t]` per loop.
    pub fn flatten(&self) -> Vec<f64> {
        self.per_loop
            .iter()
            .flat_map(|l| {
                [
                    f64::from(l.parallel_factor).log2(),
                    l.pipeline_mode.index() as f64,
                    f64::from(l.tile_factor).log2(),
                ]
            })
            .collect()
    }

    pub fn dimension(&self) -> usize {
        3 * self.per_loop.len()
    }
}

impl fmt::Display for PragmaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, l) in self.per_loop.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({},{},{})", l.parallel_factor, l.pipeline_mode, l.tile_factor)?;
        }
        f.write_str("]")
    }
}

/// Candidate values of one loop; serialized as `[[parallel..], [modes..], [tile..]]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(Vec<u32>, Vec<PipelineMode>, Vec<u32>)", into = "(Vec<u32>, Vec<PipelineMode>, Vec<u32>)")]
pub struct LoopSpace {
    pub parallel_candidates: Vec<u32>,
    pub pipeline_candidates: Vec<PipelineMode>,
    pub tile_candidates: Vec<u32>,
}

impl From<(Vec<u32>, Vec<PipelineMode>, Vec<u32>)> for LoopSpace {
    fn from((p, m, t): (Vec<u32>, Vec<PipelineMode>, Vec<u32>)) -> Self {
        Self {
            parallel_candidates: p,
            pipeline_candidates: m,
            tile_candidates: t,
        }
    }
}

impl From<LoopSpace> for (Vec<u32>, Vec<PipelineMode>, Vec<u32>) {
    fn from(s: LoopSpace) -> Self {
        (s.parallel_candidates, s.pipeline_candidates, s.tile_candidates)
    }
}

impl LoopSpace {
    fn size(&self) -> u128 {
        (self.parallel_candidates.len() * self.pipeline_candidates.len() * self.tile_candidates.len()) as u128
    }

    fn contains(&self, p: &LoopPragma) -> bool {
        self.parallel_candidates.contains(&p.parallel_factor)
            && self.pipeline_candidates.contains(&p.pipeline_mode)
            && self.tile_candidates.contains(&p.tile_factor)
    }

    fn radices(&self) -> [usize; 3] {
        [
            self.parallel_candidates.len(),
            self.pipeline_candidates.len(),
            self.tile_candidates.len(),
        ]
    }

    fn pick(&self, digits: [usize; 3]) -> LoopPragma {
        LoopPragma {
            parallel_factor: self.parallel_candidates[digits[0]],
            pipeline_mode: self.pipeline_candidates[digits[1]],
            tile_factor: self.tile_candidates[digits[2]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DesignSpace {
    pub kernel_id: String,
    pub per_loop: Vec<LoopSpace>,
}

impl DesignSpace {
    /// Number of points; saturates at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.per_loop.iter().fold(1u128, |acc, l| acc.saturating_mul(l.size()))
    }

    pub fn num_loops(&self) -> usize {
        self.per_loop.len()
    }

    pub fn dimension(&self) -> usize {
        3 * self.per_loop.len()
    }

    pub fn check(&self, config: &PragmaConfig) -> Result<()> {
        let mismatch = |reason: String| Error::ConfigMismatch {
            kernel: self.kernel_id.clone(),
            reason,
        };
        if config.kernel_id != self.kernel_id {
            return Err(mismatch(format!("config is for kernel `{}`", config.kernel_id)));
        }
        if config.per_loop.len() != self.per_loop.len() {
            return Err(mismatch(format!(
                "config has {} loops, space has {}",
                config.per_loop.len(),
                self.per_loop.len()
            )));
        }
        for (i, (p, s)) in config.per_loop.iter().zip(&self.per_loop).enumerate() {
            if !s.contains(p) {
                return Err(mismatch(format!(
                    "loop {i}: ({},{},{}) outside candidate sets",
                    p.parallel_factor, p.pipeline_mode, p.tile_factor
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, config: &PragmaConfig) -> bool {
        self.check(config).is_ok()
    }

    /// Config at `index` in lexicographic order (loop 0 most significant,
    /// then parallel, pipeline, tile within a loop).
    pub fn config_at(&self, mut index: u128) -> PragmaConfig {
        let mut per_loop = vec![LoopPragma::DEFAULT; self.per_loop.len()];
        for (slot, space) in per_loop.iter_mut().zip(&self.per_loop).rev() {
            let r = space.radices();
            let mut digits = [0usize; 3];
            for d in (0..3).rev() {
                digits[d] = (index % r[d] as u128) as usize;
                index /= r[d] as u128;
            }
            *slot = space.pick(digits);
        }
        PragmaConfig {
            kernel_id: self.kernel_id.clone(),
            per_loop,
        }
    }

    /// Inverse of [`DesignSpace::config_at`]. Panics if the config is not in the space.
    pub fn index_of(&self, config: &PragmaConfig) -> u128 {
        let mut index = 0u128;
        for (p, space) in config.per_loop.iter().zip(&self.per_loop) {
            let r = space.radices();
            let digits = [
                space.parallel_candidates.iter().position(|&v| v == p.parallel_factor),
                space.pipeline_candidates.iter().position(|&v| v == p.pipeline_mode),
                space.tile_candidates.iter().position(|&v| v == p.tile_factor),
            ];
            for (d, digit) in digits.into_iter().enumerate() {
                index = index * r[d] as u128 + digit.expect("config outside design space") as u128;
            }
        }
        index
    }

    /// Every config differing from `config` in exactly one pragma coordinate.
    pub fn neighbors(&self, config: &PragmaConfig) -> Vec<PragmaConfig> {
        let mut out = Vec::new();
        for (i, space) in self.per_loop.iter().enumerate() {
            let cur = config.per_loop[i];
            for &p in &space.parallel_candidates {
                if p != cur.parallel_factor {
                    let mut c = config.clone();
                    c.per_loop[i].parallel_factor = p;
                    out.push(c);
                }
            }
            for &m in &space.pipeline_candidates {
                if m != cur.pipeline_mode {
                    let mut c = config.clone();
                    c.per_loop[i].pipeline_mode = m;
                    out.push(c);
                }
            }
            for &t in &space.tile_candidates {
                if t != cur.tile_factor {
                    let mut c = config.clone();
                    c.per_loop[i].tile_factor = t;
                    out.push(c);
                }
            }
        }
        out
    }

    /// `count` distinct indices drawn uniformly (Floyd's algorithm), sorted.
    pub(crate) fn sample_indices(&self, count: usize, rng: &mut impl Rng) -> Vec<u128> {
        let n = self.size();
        let count = (count as u128).min(n);
        let mut chosen = BTreeSet::new();
        for j in (n - count)..n {
            let t = rng.random_range(0..=j);
            if !chosen.insert(t) {
                chosen.insert(j);
            }
        }
        chosen.into_iter().collect()
    }
}

fn factor_candidates(trip_count: u64) -> Vec<u32> {
    let cap = trip_count.min(MAX_FACTOR);
    (0..)
        .map(|e| 1u64 << e)
        .take_while(|&f| f <= cap)
        .filter(|&f| trip_count.is_multiple_of(f))
        .map(|f| f as u32)
        .collect()
}

/// Per-loop candidates: power-of-two divisors of the trip count up to
/// `min(trip, 32)` for PARALLEL and TILE, and all three pipeline modes.
pub fn build_design_space(kernel: &Kernel) -> DesignSpace {
    DesignSpace {
        kernel_id: kernel.id.clone(),
        per_loop: kernel
            .loops
            .iter()
            .map(|l| {
                let f = factor_candidates(l.trip_count);
                LoopSpace {
                    parallel_candidates: f.clone(),
                    pipeline_candidates: PipelineMode::ALL.to_vec(),
                    tile_candidates: f,
                }
            })
            .collect(),
    }
}

/// Full lexicographic product when it fits in `limit`, else `limit`
/// distinct uniform samples (sorted lexicographically) drawn from `seed`.
pub fn enumerate_configs(space: &DesignSpace, limit: Option<usize>, seed: u64) -> Vec<PragmaConfig> {
    let size = space.size();
    match limit {
        Some(limit) if (limit as u128) < size => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            space
                .sample_indices(limit, &mut rng)
                .into_iter()
                .map(|i| space.config_at(i))
                .collect()
        }
        _ => (0..size).map(|i| space.config_at(i)).collect(),
    }
}

pub fn default_config(space: &DesignSpace) -> PragmaConfig {
    PragmaConfig {
        kernel_id: space.kernel_id.clone(),
        per_loop: vec![LoopPragma::DEFAULT; space.per_loop.len()],
    }
}
