use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CostReport, LabeledDesign, Oracle};
use crate::error::Result;
use crate::kernel::{build_design_space, default_config, enumerate_configs, DesignSpace, Kernel, PragmaConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DseStrategy {
    Exhaustive,
    Random,
    Greedy,
}

/// Invalid designs rank after every valid one.
fn score(r: &CostReport) -> (bool, u64) {
    (!r.valid, r.latency_cycles)
}

struct Explorer<'a> {
    oracle: &'a Oracle,
    kernel: &'a Kernel,
    budget: usize,
    seen: BTreeMap<PragmaConfig, CostReport>,
}

impl Explorer<'_> {
    fn full(&self) -> bool {
        self.seen.len() >= self.budget
    }

    fn visit(&mut self, c: &PragmaConfig) -> Result<Option<CostReport>> {
        if let Some(r) = self.seen.get(c) {
            return Ok(Some(r.clone()));
        }
        if self.full() {
            return Ok(None);
        }
        let r = self.oracle.evaluate(self.kernel, c)?;
        self.seen.insert(c.clone(), r.clone());
        Ok(Some(r))
    }
}

/// Label up to `budget` distinct configs of `kernel` with the oracle.
///
/// The whole space is enumerated when it fits in the budget, whatever the
/// strategy; `exhaustive` on a larger space falls back to random sampling.
/// The default config is always included. Output is sorted by latency, ties
/// broken by config order.
pub fn run_dse(oracle: &Oracle, kernel: &Kernel, budget: usize, strategy: DseStrategy, seed: u64) -> Result<Vec<LabeledDesign>> {
    kernel.validate()?;
    let budget = budget.max(1);
    let space = build_design_space(kernel);
    let mut ex = Explorer {
        oracle,
        kernel,
        budget,
        seen: BTreeMap::new(),
    };
    let default = default_config(&space);
    ex.visit(&default)?;

    if space.size() <= budget as u128 {
        for c in enumerate_configs(&space, None, seed) {
            ex.visit(&c)?;
        }
    } else {
        match strategy {
            DseStrategy::Exhaustive | DseStrategy::Random => random_fill(&mut ex, &space, seed)?,
            DseStrategy::Greedy => greedy(&mut ex, &space, &default, seed)?,
        }
    }

    let base = oracle.base_latency(kernel);
    let mut out: Vec<(PragmaConfig, CostReport)> = ex.seen.into_iter().collect();
    out.sort_by(|a, b| a.1.latency_cycles.cmp(&b.1.latency_cycles).then_with(|| a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(c, r)| LabeledDesign::actual(kernel, c, &r, base)).collect())
}

fn random_fill(ex: &mut Explorer<'_>, space: &DesignSpace, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.size();
    while !ex.full() {
        let c = space.config_at(rng.random_range(0..n));
        ex.visit(&c)?;
    }
    Ok(())
}

/// Coordinate hill-climb from the default config; one pragma coordinate is
/// swept per move, and a plateau triggers a restart from a random
/// unexplored point.
fn greedy(ex: &mut Explorer<'_>, space: &DesignSpace, start: &PragmaConfig, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.size();
    let mut current = start.clone();
    let mut current_score = score(&ex.visit(&current)?.expect("start is always labeled"));
    while !ex.full() {
        let mut improved = false;
        for l in 0..space.num_loops() {
            for coord in 0..3 {
                let ls = &space.per_loop[l];
                let alternatives: Vec<PragmaConfig> = match coord {
                    0 => ls
                        .parallel_candidates
                        .iter()
                        .map(|&p| {
                            let mut c = current.clone();
                            c.per_loop[l].parallel_factor = p;
                            c
                        })
                        .collect(),
                    1 => ls
                        .pipeline_candidates
                        .iter()
                        .map(|&m| {
                            let mut c = current.clone();
                            c.per_loop[l].pipeline_mode = m;
                            c
                        })
                        .collect(),
                    _ => ls
                        .tile_candidates
                        .iter()
                        .map(|&t| {
                            let mut c = current.clone();
                            c.per_loop[l].tile_factor = t;
                            c
                        })
                        .collect(),
                };
                for c in alternatives {
                    if let Some(r) = ex.visit(&c)? {
                        if score(&r) < current_score {
                            current = c;
                            current_score = score(&r);
                            improved = true;
                        }
                    }
                }
                if ex.full() {
                    return Ok(());
                }
            }
        }
        if !improved {
            // restart; give up on the random probe after a bounded number of hits
            let mut restarted = false;
            for _ in 0..64 {
                let c = space.config_at(rng.random_range(0..n));
                if !ex.seen.contains_key(&c) {
                    current_score = score(&ex.visit(&c)?.expect("budget checked above"));
                    current = c;
                    restarted = true;
                    break;
                }
            }
            if !restarted {
                random_fill(ex, space, rng.random())?;
            }
        }
    }
    Ok(())
}
