use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pretrain::{finetune, TrainConfig};
use crate::error::{Error, Result};
use crate::gtnp::GtnpModel;
use crate::kernel::{Kernel, PragmaConfig};
use crate::oracle::{LabelKind, LabeledDesign};
use crate::rng::{rng_for, tag};
use crate::surrogate::ProgramData;

/// Anything that predicts labels for query configs given labeled context.
pub trait InContextPredictor {
    fn predict(&self, kernel: &Kernel, context: &[LabeledDesign], queries: &[PragmaConfig]) -> Result<Vec<f64>>;
}

impl InContextPredictor for GtnpModel {
    fn predict(&self, kernel: &Kernel, context: &[LabeledDesign], queries: &[PragmaConfig]) -> Result<Vec<f64>> {
        self.predict_in_context(kernel, context, queries)
    }
}

/// Fine-tunes a copy of `base` on the context before every prediction.
pub struct FineTuned<'a> {
    pub base: &'a GtnpModel,
    pub config: TrainConfig,
    pub steps: usize,
}

impl InContextPredictor for FineTuned<'_> {
    fn predict(&self, kernel: &Kernel, context: &[LabeledDesign], queries: &[PragmaConfig]) -> Result<Vec<f64>> {
        let tuned = finetune(self.base, kernel, context, self.steps, &self.config)?;
        tuned.model.predict_in_context(kernel, context, queries)
    }
}

/// `exp(mean(ln v))`; zero if any value is zero.
pub fn geomean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    if values.contains(&0.0) {
        return 0.0;
    }
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramEval {
    pub kernel_id: String,
    /// One MSE per seed, in seed order.
    pub mse: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub context_size: usize,
    pub programs: Vec<ProgramEval>,
    /// Programs without enough actual designs, with the count they had.
    pub skipped: Vec<(String, usize)>,
    /// Geometric mean of the per-program mean MSE.
    pub geomean: f64,
}

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

/// Context indices for `(kernel, seed)`; the same for every model.
pub fn context_indices(kernel_id: &str, n: usize, context_size: usize, seed: u64) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(&mut rng_for(seed, &[tag(kernel_id)]), n, context_size.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

fn actual_designs(p: &ProgramData) -> Vec<LabeledDesign> {
    p.designs.iter().filter(|d| d.label_kind == LabelKind::Actual).cloned().collect()
}

/// Per seed, sample `context_size` designs of each program as context and
/// predict every remaining actual design.
pub fn evaluate_fewshot(
    model: &dyn InContextPredictor,
    programs: &[ProgramData],
    context_size: usize,
    seeds: &[u64],
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs at least one seed".into()));
    }
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for p in programs {
        let designs = actual_designs(p);
        if context_size == 0 || designs.len() < context_size + 1 {
            log::warn!(
                "skipping {}: {} actual designs for a context of {context_size}",
                p.kernel.id,
                designs.len()
            );
            skipped.push((p.kernel.id.clone(), designs.len()));
            continue;
        }
        let mut mse = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let ctx_idx = context_indices(&p.kernel.id, designs.len(), context_size, seed);
            let mut is_ctx = vec![false; designs.len()];
            for &i in &ctx_idx {
                is_ctx[i] = true;
            }
            let context: Vec<LabeledDesign> = ctx_idx.iter().map(|&i| designs[i].clone()).collect();
            let targets: Vec<&LabeledDesign> = designs.iter().zip(&is_ctx).filter(|(_, &c)| !c).map(|(d, _)| d).collect();
            let queries: Vec<PragmaConfig> = targets.iter().map(|d| d.config.clone()).collect();
            let pred = model.predict(&p.kernel, &context, &queries)?;
            let e = pred.iter().zip(&targets).map(|(y, d)| (y - d.y).powi(2)).sum::<f64>() / targets.len() as f64;
            mse.push(e);
        }
        let (mean, std) = mean_std(&mse);
        out.push(ProgramEval {
            kernel_id: p.kernel.id.clone(),
            mse,
            mean,
            std,
        });
    }
    let geo = geomean(&out.iter().map(|p| p.mean).collect::<Vec<_>>());
    Ok(EvalReport {
        seeds: seeds.to_vec(),
        context_size,
        programs: out,
        skipped,
        geomean: geo,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptEntry {
    pub kernel_id: String,
    pub k: usize,
    pub best_latency: f64,
    pub ideal_latency: f64,
    /// Set when no sampled design satisfied the resource bound, so the
    /// default design's latency was reported instead.
    pub substituted: bool,
}

/// best@K from per-sample predictions: keep valid designs with every
/// utilization within `resource_bound`, rank by prediction (ties by config),
/// and report the lowest actual latency among the first `k`.
pub fn best_at_k(
    kernel_id: &str,
    predictions: &[f64],
    samples: &[LabeledDesign],
    k: usize,
    resource_bound: f64,
    default_latency: f64,
) -> Result<OptEntry> {
    if samples.is_empty() {
        return Err(Error::Empty("best@K needs labeled samples".into()));
    }
    if predictions.len() != samples.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} samples",
            predictions.len(),
            samples.len()
        )));
    }
    let mut feasible: Vec<(f64, &LabeledDesign)> = predictions
        .iter()
        .zip(samples)
        .filter(|(_, d)| d.valid && d.resources.is_some_and(|r| r.within(resource_bound)))
        .map(|(&p, d)| (p, d))
        .collect();
    if feasible.is_empty() || k == 0 {
        return Ok(OptEntry {
            kernel_id: kernel_id.to_string(),
            k,
            best_latency: default_latency,
            ideal_latency: if feasible.is_empty() {
                default_latency
            } else {
                feasible.iter().map(|(_, d)| d.latency_cycles).fold(f64::INFINITY, f64::min)
            },
            substituted: true,
        });
    }
    let ideal = feasible.iter().map(|(_, d)| d.latency_cycles).fold(f64::INFINITY, f64::min);
    feasible.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.config.cmp(&b.1.config)));
    let best = feasible.iter().take(k).map(|(_, d)| d.latency_cycles).fold(f64::INFINITY, f64::min);
    Ok(OptEntry {
        kernel_id: kernel_id.to_string(),
        k,
        best_latency: best,
        ideal_latency: ideal,
        substituted: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptReport {
    pub k: usize,
    pub resource_bound: f64,
    pub seed: u64,
    pub entries: Vec<OptEntry>,
}

/// best@K per program: the model sees `context_size` sampled designs as
/// context and ranks every actual design of the program.
pub fn optimize(
    model: &dyn InContextPredictor,
    programs: &[ProgramData],
    context_size: usize,
    k: usize,
    resource_bound: f64,
    seed: u64,
) -> Result<OptReport> {
    let mut entries = Vec::new();
    for p in programs {
        let designs = actual_designs(p);
        if designs.len() < 2 {
            log::warn!("skipping {} in optimization: {} actual designs", p.kernel.id, designs.len());
            continue;
        }
        let ctx: Vec<LabeledDesign> = context_indices(&p.kernel.id, designs.len(), context_size.min(designs.len() - 1), seed)
            .into_iter()
            .map(|i| designs[i].clone())
            .collect();
        let queries: Vec<PragmaConfig> = designs.iter().map(|d| d.config.clone()).collect();
        let pred = model.predict(&p.kernel, &ctx, &queries)?;
        entries.push(best_at_k(&p.kernel.id, &pred, &designs, k, resource_bound, p.base_latency as f64)?);
    }
    Ok(OptReport {
        k,
        resource_bound,
        seed,
        entries,
    })
}

fn open(path: &Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_header(f: &mut std::fs::File, path: &Path, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(f, "# {l}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

impl EvalReport {
    /// Columns: `program`, `mean_mse`, `std_mse`, then `mse_seed_<s>` per
    /// seed; the last row is `geomean` in the `mean_mse` column.
    pub fn write_csv(&self, path: &Path, provenance: &[String]) -> Result<()> {
        let mut f = open(path)?;
        write_header(&mut f, path, provenance)?;
        let mut w = csv::Writer::from_writer(f);
        let mut header = vec!["program".to_string(), "mean_mse".into(), "std_mse".into()];
        header.extend(self.seeds.iter().map(|s| format!("mse_seed_{s}")));
        w.write_record(&header)?;
        for p in &self.programs {
            let mut row = vec![p.kernel_id.clone(), p.mean.to_string(), p.std.to_string()];
            row.extend(p.mse.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        let mut row = vec!["geomean".to_string(), self.geomean.to_string(), String::new()];
        row.extend(self.seeds.iter().map(|_| String::new()));
        w.write_record(&row)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl OptReport {
    /// Columns: `program`, `k`, `best_latency`, `ideal_latency`, `substituted`.
    pub fn write_csv(&self, path: &Path, provenance: &[String]) -> Result<()> {
        let mut f = open(path)?;
        write_header(&mut f, path, provenance)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["program", "k", "best_latency", "ideal_latency", "substituted"])?;
        for e in &self.entries {
            w.write_record([
                e.kernel_id.clone(),
                e.k.to_string(),
                e.best_latency.to_string(),
                e.ideal_latency.to_string(),
                e.substituted.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `step,loss` rows.
pub fn write_loss_curve(path: &Path, losses: &[f64], provenance: &[String]) -> Result<()> {
    let mut f = open(path)?;
    write_header(&mut f, path, provenance)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["step", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
