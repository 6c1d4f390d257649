use std::path::Path;
use std::rc::Rc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::encoder::GnnConfig;
use super::regressor::{FitOptions, SurrogateRegressor};
use super::ProgramData;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::kernel::{kernel_to_graph, Kernel, PragmaConfig, ProgramGraph};
use crate::nn::{checkpoint, AdamWConfig, ChannelMasks};
use crate::oracle::LabelKind;
use crate::rng::{derive_seed, rng_for};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
    /// One seed per member; empty means `1..=members`.
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub gnn: GnnConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 8,
            seeds: Vec::new(),
            epochs: 30,
            batch: 32,
            lr: 1e-3,
            gnn: GnnConfig::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn member_seeds(&self) -> Result<Vec<u64>> {
        if self.seeds.is_empty() {
            return Ok((1..=self.members as u64).collect());
        }
        if self.seeds.len() != self.members {
            return Err(Error::InvalidArgument(format!(
                "{} ensemble seeds given for {} members",
                self.seeds.len(),
                self.members
            )));
        }
        Ok(self.seeds.clone())
    }
}

/// Mean and standard deviation of member test MSE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub member_test_mse: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl EnsembleReport {
    pub fn new(member_test_mse: Vec<f64>) -> Self {
        let n = member_test_mse.len().max(1) as f64;
        let mean = member_test_mse.iter().sum::<f64>() / n;
        let var = member_test_mse.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            member_test_mse,
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub config: EnsembleConfig,
    pub members: Vec<Rc<SurrogateRegressor>>,
    pub test_mse: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleManifest {
    config: EnsembleConfig,
    members: Vec<MemberEntry>,
    metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct MemberEntry {
    dir: String,
    seed: u64,
    test_mse: f64,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn report(&self) -> EnsembleReport {
        EnsembleReport::new(self.test_mse.clone())
    }

    /// `count` synthetic functions cycling through the members, each with its
    /// own dropout seed derived from `seed`.
    pub fn spawn_functions(&self, count: usize, seed: u64) -> Result<Vec<SyntheticFunction>> {
        if count > 0 && self.is_empty() {
            return Err(Error::Empty("ensemble has no members".into()));
        }
        (0..count)
            .map(|j| spawn_synthetic_function(self, j % self.len(), derive_seed(seed, &[j as u64])))
            .collect()
    }

    /// One archive per member in `dir/member-<i>` plus `dir/ensemble.json`.
    pub fn save(&self, dir: &Path, metadata: serde_json::Value) -> Result<()> {
        let mut members = Vec::new();
        for (i, (m, mse)) in self.members.iter().zip(&self.test_mse).enumerate() {
            let sub = format!("member-{i}");
            checkpoint::save(
                &dir.join(&sub),
                &m.store,
                serde_json::json!({ "seed": m.seed, "test_mse": mse, "member_index": i, "gnn": self.config.gnn }),
            )?;
            members.push(MemberEntry {
                dir: sub,
                seed: m.seed,
                test_mse: *mse,
            });
        }
        write_json(
            &dir.join("ensemble.json"),
            &EnsembleManifest {
                config: self.config.clone(),
                members,
                metadata,
            },
        )
    }

    pub fn load(dir: &Path) -> Result<(Self, serde_json::Value)> {
        let manifest: EnsembleManifest = read_json(&dir.join("ensemble.json"))?;
        let mut members = Vec::new();
        let mut test_mse = Vec::new();
        for entry in &manifest.members {
            let mut m = SurrogateRegressor::new(manifest.config.gnn.clone(), entry.seed);
            checkpoint::load_into(&dir.join(&entry.dir), &mut m.store)?;
            members.push(Rc::new(m));
            test_mse.push(entry.test_mse);
        }
        Ok((
            Self {
                config: manifest.config,
                members,
                test_mse,
            },
            manifest.metadata,
        ))
    }
}

type Example = (ProgramGraph, f64);

fn actual_examples(data: &[ProgramData]) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for p in data {
        for d in p.designs.iter().filter(|d| d.label_kind == LabelKind::Actual) {
            out.push((kernel_to_graph(&p.kernel, &d.config)?, d.y));
        }
    }
    Ok(out)
}

/// Train one regressor per seed on a seeded 70/15/15 split of all actual
/// labels; test MSE falls back to the training split when the test split
/// is empty.
pub fn train_ensemble(data: &[ProgramData], config: &EnsembleConfig) -> Result<Ensemble> {
    let seeds = config.member_seeds()?;
    let examples = actual_examples(data)?;
    if examples.is_empty() {
        return Err(Error::Empty("no actual labels to train the ensemble on".into()));
    }
    let mut members = Vec::new();
    let mut test_mse = Vec::new();
    for &seed in &seeds {
        let mut rng = rng_for(seed, &[0x5e1]);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut rng);
        let n = examples.len();
        let n_train = ((n as f64 * 0.7).round() as usize).clamp(1, n);
        let n_val = ((n as f64 * 0.15).round() as usize).min(n - n_train);
        let pick = |ix: &[usize]| ix.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
        let train = pick(&order[..n_train]);
        let val = pick(&order[n_train..n_train + n_val]);
        let test = pick(&order[n_train + n_val..]);

        let mut model = SurrogateRegressor::new(config.gnn.clone(), seed);
        let opts = FitOptions {
            epochs: config.epochs,
            batch: config.batch,
            optimizer: AdamWConfig {
                lr: config.lr,
                ..AdamWConfig::default()
            },
        };
        model.fit(&train, &val, &opts, &mut rng);
        let mse = if test.is_empty() { model.mse(&train) } else { model.mse(&test) };
        log::info!("ensemble member seed {seed}: test mse {mse:.6}");
        members.push(Rc::new(model));
        test_mse.push(mse);
    }
    Ok(Ensemble {
        config: config.clone(),
        members,
        test_mse,
    })
}

/// An ensemble member with dropout masks sampled once from `dropout_seed`
/// and frozen, so it is a deterministic function of the design.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFunction {
    pub member_index: usize,
    pub dropout_seed: u64,
    pub masks: ChannelMasks,
    pub member: Rc<SurrogateRegressor>,
}

pub fn spawn_synthetic_function(ensemble: &Ensemble, member_index: usize, dropout_seed: u64) -> Result<SyntheticFunction> {
    let member = ensemble.members.get(member_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "member index {member_index} out of range for an ensemble of {}",
            ensemble.len()
        ))
    })?;
    let mut rng = rng_for(dropout_seed, &[0xd0]);
    let masks = ChannelMasks::sample(&member.dropout_widths(), member.config().dropout, &mut rng);
    Ok(SyntheticFunction {
        member_index,
        dropout_seed,
        masks,
        member: member.clone(),
    })
}

impl SyntheticFunction {
    pub fn id(&self) -> String {
        format!("m{}-d{}", self.member_index, self.dropout_seed)
    }

    pub fn evaluate(&self, kernel: &Kernel, configs: &[PragmaConfig]) -> Result<Vec<f64>> {
        let graphs = configs.iter().map(|c| kernel_to_graph(kernel, c)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ProgramGraph> = graphs.iter().collect();
        Ok(self.member.predict(&refs, Some(&self.masks)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::fixtures::{nest, single_loop};
    use crate::kernel::{build_design_space, enumerate_configs, OpCounts};
    use crate::oracle::{Oracle, OracleConstants};

    fn tiny(members: usize, epochs: usize) -> EnsembleConfig {
        EnsembleConfig {
            members,
            seeds: vec![],
            epochs,
            batch: 16,
            lr: 3e-3,
            gnn: GnnConfig {
                hidden: 8,
                layers: 2,
                dropout: 0.1,
            },
        }
    }

    fn labeled(kernel: Kernel) -> ProgramData {
        let oracle = Oracle::new(OracleConstants::default());
        let designs = enumerate_configs(&build_design_space(&kernel), None, 0)
            .iter()
            .map(|c| oracle.label(&kernel, c).unwrap())
            .collect();
        ProgramData {
            base_latency: oracle.base_latency(&kernel),
            kernel,
            designs,
        }
    }

    #[test]
    fn empty_data_is_an_error() {
        assert!(train_ensemble(&[], &tiny(1, 1)).is_err());
        let mut p = labeled(single_loop(8, OpCounts::new(1, 1, 1, 1)));
        p.designs.clear();
        assert!(train_ensemble(&[p], &tiny(1, 1)).is_err());
    }

    #[test]
    fn equal_seeds_give_equal_members() {
        let data = [labeled(single_loop(8, OpCounts::new(1, 1, 1, 1)))];
        let cfg = EnsembleConfig {
            seeds: vec![3, 3],
            ..tiny(2, 2)
        };
        let e = train_ensemble(&data, &cfg).unwrap();
        assert_eq!(e.members[0], e.members[1]);
        assert_eq!(e.test_mse[0], e.test_mse[1]);
        let r = e.report();
        assert_eq!(r.member_test_mse.len(), 2);
        assert_eq!(r.std, 0.0);
    }

    #[test]
    fn constant_labels_are_learned() {
        let mut p = labeled(single_loop(8, OpCounts::new(1, 1, 1, 1)));
        for d in &mut p.designs {
            d.y = 0.5;
        }
        let e = train_ensemble(&[p], &tiny(1, 300)).unwrap();
        assert!(e.test_mse[0] < 1e-3, "test mse {}", e.test_mse[0]);
    }

    #[test]
    fn synthetic_functions_are_frozen_and_diverse() {
        let p = labeled(nest(8, 4, OpCounts::new(1, 0, 1, 0), OpCounts::new(2, 2, 2, 1)));
        let e = train_ensemble(std::slice::from_ref(&p), &tiny(2, 3)).unwrap();
        let probe: Vec<PragmaConfig> = p.designs.iter().take(6).map(|d| d.config.clone()).collect();

        let a = spawn_synthetic_function(&e, 1, 42).unwrap();
        let b = spawn_synthetic_function(&e, 1, 42).unwrap();
        assert_eq!(a.evaluate(&p.kernel, &probe).unwrap(), b.evaluate(&p.kernel, &probe).unwrap());
        assert_eq!(a.evaluate(&p.kernel, &probe).unwrap(), a.evaluate(&p.kernel, &probe).unwrap());
        assert_eq!(a.id(), "m1-d42");

        let first: Vec<f64> = (0..8)
            .map(|s| {
                spawn_synthetic_function(&e, 0, s)
                    .unwrap()
                    .evaluate(&p.kernel, &probe[..1])
                    .unwrap()[0]
            })
            .collect();
        let mut distinct = first.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert!(distinct.len() >= 2, "{first:?}");

        assert!(spawn_synthetic_function(&e, 2, 0).is_err());
    }

    #[test]
    fn zero_rate_equals_raw_member() {
        let p = labeled(single_loop(16, OpCounts::new(2, 1, 1, 1)));
        let mut cfg = tiny(1, 2);
        cfg.gnn.dropout = 0.0;
        let e = train_ensemble(std::slice::from_ref(&p), &cfg).unwrap();
        let f = spawn_synthetic_function(&e, 0, 7).unwrap();
        let configs: Vec<PragmaConfig> = p.designs.iter().map(|d| d.config.clone()).collect();
        let graphs: Vec<ProgramGraph> = configs.iter().map(|c| kernel_to_graph(&p.kernel, c).unwrap()).collect();
        let refs: Vec<&ProgramGraph> = graphs.iter().collect();
        assert_eq!(f.evaluate(&p.kernel, &configs).unwrap(), e.members[0].predict(&refs, None));
    }

    #[test]
    fn save_load_roundtrip() {
        let p = labeled(single_loop(8, OpCounts::new(1, 1, 1, 1)));
        let e = train_ensemble(&[p], &tiny(2, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        e.save(dir.path(), serde_json::json!({"oracle": "x"})).unwrap();
        let (back, meta) = Ensemble::load(dir.path()).unwrap();
        assert_eq!(back, e);
        assert_eq!(meta["oracle"], "x");
    }
}
