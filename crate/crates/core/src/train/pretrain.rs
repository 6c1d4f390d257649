use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gtnp::{GtnpConfig, GtnpModel, Sequence};
use crate::kernel::Kernel;
use crate::nn::{AdamW, AdamWConfig, Dropout, Tape};
use crate::oracle::LabeledDesign;
use crate::rng::rng_for;
use crate::surrogate::HybridDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "Ice-A")]
    IceA,
    #[serde(rename = "Ice-H")]
    IceH,
    #[serde(rename = "Ice-A-FT")]
    IceAFt,
    #[serde(rename = "Ice-H-FT")]
    IceHFt,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::IceA, Preset::IceH, Preset::IceAFt, Preset::IceHFt];

    /// Weak:actual draw ratio.
    pub fn ratio(self) -> f64 {
        match self {
            Preset::IceA | Preset::IceAFt => 0.0,
            Preset::IceH | Preset::IceHFt => 0.5,
        }
    }

    pub fn fine_tunes(self) -> bool {
        matches!(self, Preset::IceAFt | Preset::IceHFt)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::IceA => "Ice-A",
            Preset::IceH => "Ice-H",
            Preset::IceAFt => "Ice-A-FT",
            Preset::IceHFt => "Ice-H-FT",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub preset: Preset,
    pub optimizer: AdamWConfig,
    pub steps: usize,
    /// Sequences per step.
    pub batch: usize,
    /// Points per training sequence (`N`).
    pub seq_len: usize,
    /// `m` is drawn uniformly from `[min_context, N - min_targets]`.
    pub min_context: usize,
    pub min_targets: usize,
    pub finetune_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            preset: Preset::IceA,
            optimizer: AdamWConfig::default(),
            steps: 2000,
            batch: 16,
            seq_len: 60,
            min_context: 5,
            min_targets: 5,
            finetune_steps: 200,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning steps implied by the preset.
    pub fn effective_finetune_steps(&self) -> usize {
        if self.preset.fine_tunes() {
            self.finetune_steps
        } else {
            0
        }
    }

    fn split_range(&self, n: usize) -> (usize, usize) {
        let lo = self.min_context.clamp(1, n - 1);
        let hi = n.saturating_sub(self.min_targets).clamp(lo, n - 1);
        (lo, hi)
    }
}

/// Draw `n` points from `designs` (distinct when possible, with replacement
/// otherwise), then split off `m` of them as context.
fn build_sequence(kernel: &Kernel, designs: &[LabeledDesign], cfg: &TrainConfig, n: usize, rng: &mut impl Rng) -> Result<Sequence> {
    let picked: Vec<&LabeledDesign> = if designs.len() >= n {
        rand::seq::index::sample(rng, designs.len(), n)
            .into_iter()
            .map(|i| &designs[i])
            .collect()
    } else {
        (0..n).map(|_| &designs[rng.random_range(0..designs.len())]).collect()
    };
    let (lo, hi) = cfg.split_range(n);
    let m = rng.random_range(lo..=hi);
    Sequence::from_designs(kernel, &picked, m)
}

const MAX_SKIPS: usize = 256;

/// Sequence for draw `t` of the weak/actual interleave. Contexts with fewer
/// than two designs are skipped with a warning.
pub fn sample_training_sequence(dataset: &HybridDataset, t: u64, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Sequence> {
    for _ in 0..MAX_SKIPS {
        let ctx = dataset
            .draw(t, rng)
            .ok_or_else(|| Error::Empty("training dataset has no contexts".into()))?;
        if ctx.designs.len() < 2 {
            log::warn!(
                "skipping context of {} ({:?}) with {} design(s)",
                dataset.kernels[ctx.kernel].id,
                ctx.source_function,
                ctx.designs.len()
            );
            continue;
        }
        return build_sequence(&dataset.kernels[ctx.kernel], &ctx.designs, cfg, cfg.seq_len.max(2), rng);
    }
    Err(Error::Empty("no context with at least two designs".into()))
}

/// Trained model plus per-step training loss.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: GtnpModel,
    pub losses: Vec<f64>,
}

fn check_finite(step: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { step, loss })
    }
}

pub fn pretrain(cfg: &TrainConfig, model_cfg: &GtnpConfig, dataset: &HybridDataset) -> Result<TrainOutcome> {
    let mut model = GtnpModel::new(model_cfg.clone(), cfg.seed)?;
    if cfg.steps == 0 {
        return Ok(TrainOutcome { model, losses: Vec::new() });
    }
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset has no contexts".into()));
    }
    let mut data_rng = rng_for(cfg.seed, &[0xda7a]);
    let mut drop_rng = rng_for(cfg.seed, &[0xd20]);
    let mut opt = AdamW::new(cfg.optimizer.clone(), &model.store);
    let mut losses = Vec::with_capacity(cfg.steps);
    let batch = cfg.batch.max(1);
    for step in 0..cfg.steps {
        let seqs = (0..batch)
            .map(|b| sample_training_sequence(dataset, (step * batch + b) as u64, cfg, &mut data_rng))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Sequence> = seqs.iter().collect();
        let mut tape = Tape::new();
        let loss = model.batch_loss(&mut tape, &refs, &mut Dropout::Sample(&mut drop_rng))?;
        let value = tape.scalar(loss);
        check_finite(step, value)?;
        let grads = tape.backward(loss);
        opt.step(&mut model.store, &grads);
        if !model.store.is_finite() {
            return Err(Error::Divergence { step, loss: f64::NAN });
        }
        if step % 100 == 0 {
            log::debug!("pretrain step {step}: loss {value:.6}");
        }
        losses.push(value);
    }
    Ok(TrainOutcome { model, losses })
}

/// Fine-tune a copy of `model` on the adaptation designs of one program.
/// Every step resamples the context/target split from those designs.
pub fn finetune(model: &GtnpModel, kernel: &Kernel, designs: &[LabeledDesign], steps: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if designs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fine-tuning needs at least 2 adaptation designs, got {}",
            designs.len()
        )));
    }
    let mut model = model.clone();
    let mut data_rng = rng_for(cfg.seed, &[0xf1, designs.len() as u64]);
    let mut drop_rng = rng_for(cfg.seed, &[0xf2]);
    let mut opt = AdamW::new(cfg.optimizer.clone(), &model.store);
    let n = designs.len().min(model.config.max_seq_len);
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let seqs = (0..cfg.batch.max(1))
            .map(|_| build_sequence(kernel, designs, cfg, n, &mut data_rng))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Sequence> = seqs.iter().collect();
        let mut tape = Tape::new();
        let loss = model.batch_loss(&mut tape, &refs, &mut Dropout::Sample(&mut drop_rng))?;
        let value = tape.scalar(loss);
        check_finite(step, value)?;
        let grads = tape.backward(loss);
        opt.step(&mut model.store, &grads);
        losses.push(value);
    }
    Ok(TrainOutcome { model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::fixtures::{nest, single_loop};
    use crate::kernel::{build_design_space, enumerate_configs, OpCounts, PragmaConfig};
    use crate::oracle::{LabelKind, Oracle, OracleConstants};
    use crate::surrogate::{build_hybrid_dataset, GnnConfig, GpPrior, HybridSpec, ProgramData, WeakSource};

    fn programs() -> Vec<ProgramData> {
        let oracle = Oracle::new(OracleConstants::default());
        [
            single_loop(16, OpCounts::new(1, 1, 1, 1)),
            nest(8, 8, OpCounts::new(1, 0, 1, 0), OpCounts::new(2, 2, 2, 1)),
        ]
        .into_iter()
        .map(|kernel| {
            let designs = enumerate_configs(&build_design_space(&kernel), Some(40), 3)
                .iter()
                .map(|c| oracle.label(&kernel, c).unwrap())
                .collect();
            ProgramData {
                base_latency: oracle.base_latency(&kernel),
                kernel,
                designs,
            }
        })
        .collect()
    }

    fn micro() -> GtnpConfig {
        GtnpConfig {
            gnn: GnnConfig {
                hidden: 8,
                layers: 1,
                dropout: 0.1,
            },
            d_model: 8,
            layers: 1,
            heads: 2,
            ff: 8,
            dropout: 0.1,
            max_seq_len: 64,
            target_flag: true,
        }
    }

    fn small_cfg(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch: 2,
            seq_len: 20,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn presets() {
        assert_eq!(Preset::IceA.ratio(), 0.0);
        assert_eq!(Preset::IceHFt.ratio(), 0.5);
        assert!(Preset::IceAFt.fine_tunes() && !Preset::IceH.fine_tunes());
        assert_eq!(serde_json::to_string(&Preset::IceHFt).unwrap(), "\"Ice-H-FT\"");
        let c = TrainConfig {
            preset: Preset::IceAFt,
            ..TrainConfig::default()
        };
        assert_eq!(c.effective_finetune_steps(), 200);
        assert_eq!(TrainConfig::default().effective_finetune_steps(), 0);
    }

    #[test]
    fn sequences_are_homogeneous_and_seeded() {
        let data = programs();
        let src = WeakSource::Gp {
            prior: GpPrior::default(),
            functions: 2,
        };
        let ds = build_hybrid_dataset(
            &data,
            Some(&src),
            &HybridSpec {
                l: 4,
                k: 30,
                ratio: 0.5,
                seed: 1,
            },
        )
        .unwrap();
        let cfg = small_cfg(1);
        let mut rng = rng_for(9, &[]);
        let mut weak = 0;
        for t in 0..200 {
            let s = sample_training_sequence(&ds, t, &cfg, &mut rng).unwrap();
            assert_eq!(s.len(), 20);
            assert!((5..=15).contains(&s.m));
            if s.source_function.is_some() {
                weak += 1;
            }
        }
        assert_eq!(weak, 100);

        let a: Vec<Sequence> = (0..5)
            .map(|t| sample_training_sequence(&ds, t, &cfg, &mut rng_for(3, &[])).unwrap())
            .collect();
        let b: Vec<Sequence> = (0..5)
            .map(|t| sample_training_sequence(&ds, t, &cfg, &mut rng_for(3, &[])).unwrap())
            .collect();
        assert_eq!(a, b);

        let actual_only = build_hybrid_dataset(
            &data,
            None,
            &HybridSpec {
                l: 0,
                k: 0,
                ratio: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        for t in 0..50 {
            assert!(sample_training_sequence(&actual_only, t, &cfg, &mut rng)
                .unwrap()
                .source_function
                .is_none());
        }
        assert!(actual_only
            .actual
            .iter()
            .all(|c| c.designs.iter().all(|d| d.label_kind == LabelKind::Actual)));
    }

    #[test]
    fn zero_steps_returns_initial_model() {
        let data = programs();
        let ds = build_hybrid_dataset(
            &data,
            None,
            &HybridSpec {
                l: 0,
                k: 0,
                ratio: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        let out = pretrain(&small_cfg(0), &micro(), &ds).unwrap();
        assert_eq!(out.model, GtnpModel::new(micro(), 1).unwrap());
        assert!(out.losses.is_empty());
    }

    #[test]
    fn pretrain_is_reproducible_and_learns() {
        let data = programs();
        let ds = build_hybrid_dataset(
            &data,
            None,
            &HybridSpec {
                l: 0,
                k: 0,
                ratio: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        let cfg = TrainConfig {
            optimizer: AdamWConfig {
                lr: 3e-3,
                ..AdamWConfig::default()
            },
            ..small_cfg(150)
        };
        let a = pretrain(&cfg, &micro(), &ds).unwrap();
        let b = pretrain(&cfg, &micro(), &ds).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
        let head: f64 = a.losses[..20].iter().sum();
        let tail: f64 = a.losses[130..].iter().sum();
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn finetune_copies_and_validates() {
        let data = programs();
        let model = GtnpModel::new(micro(), 2).unwrap();
        let cfg = small_cfg(0);
        let k = &data[1].kernel;
        let ds = &data[1].designs[..30];
        assert!(finetune(&model, k, &ds[..1], 10, &cfg).is_err());
        let same = finetune(&model, k, ds, 0, &cfg).unwrap();
        assert_eq!(same.model, model);
        let tuned = finetune(&model, k, ds, 5, &cfg).unwrap();
        assert_ne!(tuned.model, model);
        assert_eq!(tuned.losses.len(), 5);
        let q: Vec<PragmaConfig> = data[1].designs[30..].iter().map(|d| d.config.clone()).collect();
        assert_eq!(
            same.model.predict_in_context(k, ds, &q).unwrap(),
            model.predict_in_context(k, ds, &q).unwrap()
        );
    }
}
