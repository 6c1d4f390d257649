use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gtnp::GtnpConfig;
use crate::oracle::{DseStrategy, OracleConstants};
use crate::surrogate::{EnsembleConfig, GpPrior};
use crate::synthgen::{RetryPolicy, DOMAINS};
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Parametric,
    Llm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub generator: Generator,
    /// Kernels to generate (parametric) or LLM rounds to run.
    pub programs: usize,
    pub domains: Vec<String>,
    pub num_loops: (usize, usize),
    pub memory_bytes: (u64, u64),
    pub multi_function: bool,
    /// JSONL files of kernels used instead of generating any.
    pub kernel_paths: Vec<PathBuf>,
    pub llm_retry: RetryPolicy,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            generator: Generator::Parametric,
            programs: 30,
            domains: DOMAINS.iter().map(|(d, _)| d.to_string()).collect(),
            num_loops: (1, 4),
            memory_bytes: (4096, 65536),
            multi_function: false,
            kernel_paths: Vec::new(),
            llm_retry: RetryPolicy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DseConfig {
    pub strategy: DseStrategy,
    /// Designs labeled per program.
    pub budget: usize,
    /// Label only the first `programs` kernels; 0 labels all of them.
    pub programs: usize,
}

impl Default for DseConfig {
    fn default() -> Self {
        Self {
            strategy: DseStrategy::Random,
            budget: 200,
            programs: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeakKind {
    Ensemble,
    Gp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakLabelConfig {
    /// `(P, theta)` pairs.
    pub l: usize,
    /// Designs per pair.
    pub k: usize,
    /// Weak:actual draw ratio for hybrid presets.
    pub ratio: f64,
    pub source: WeakKind,
    /// Synthetic functions spawned from the ensemble, or GP paths per program.
    pub functions: usize,
    pub gp: GpPrior,
}

impl Default for WeakLabelConfig {
    fn default() -> Self {
        Self {
            l: 240,
            k: 60,
            ratio: 0.5,
            source: WeakKind::Ensemble,
            functions: 8,
            gp: GpPrior::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub context_size: usize,
    /// Fraction of labeled programs held out for evaluation.
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            context_size: 50,
            test_fraction: 0.2,
            seeds: crate::train::DEFAULT_SEEDS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub k: usize,
    pub resource_bound: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            k: 10,
            resource_bound: 0.8,
        }
    }
}

/// Everything one experiment needs; every field has a default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub oracle: OracleConstants,
    pub dse: DseConfig,
    pub ensemble: EnsembleConfig,
    pub weaklabel: WeakLabelConfig,
    pub model: GtnpConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub optimize: OptimizeConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the config; recorded in every artifact.
    pub fn hash(&self) -> String {
        crate::io::content_hash(self)
    }

    /// Weak:actual ratio used for pretraining: zero for actual-only presets.
    pub fn effective_ratio(&self) -> f64 {
        if self.train.preset.ratio() == 0.0 {
            0.0
        } else {
            self.weaklabel.ratio
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.weaklabel.ratio) {
            return bad(format!("weaklabel.ratio {} outside [0, 1]", self.weaklabel.ratio));
        }
        if !(0.0..1.0).contains(&self.eval.test_fraction) {
            return bad(format!("eval.test_fraction {} outside [0, 1)", self.eval.test_fraction));
        }
        if self.eval.seeds.is_empty() || self.eval.context_size == 0 {
            return bad("eval needs at least one seed and a positive context size".into());
        }
        if self.corpus.domains.is_empty() {
            return bad("corpus.domains is empty".into());
        }
        if let Some(d) = self.corpus.domains.iter().find(|d| crate::synthgen::archetype_of(d).is_none()) {
            return bad(format!("unknown corpus domain {d:?}"));
        }
        if self.optimize.resource_bound <= 0.0 {
            return bad(format!("optimize.resource_bound {} must be positive", self.optimize.resource_bound));
        }
        if self.model.heads == 0 || !self.model.d_model.is_multiple_of(self.model.heads) {
            return bad(format!(
                "model.d_model {} not divisible by model.heads {}",
                self.model.d_model, self.model.heads
            ));
        }
        if self.train.seq_len < 2 {
            return bad("train.seq_len must be at least 2".into());
        }
        self.ensemble.member_seeds().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn roundtrip_and_partial_sections() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml_str(&c.to_toml()).unwrap(), c);
        let c = ExperimentConfig::from_toml_str("seed = 9\n[dse]\nbudget = 100\n[train]\npreset = \"Ice-H\"\n").unwrap();
        assert_eq!((c.seed, c.dse.budget, c.dse.strategy), (9, 100, DseStrategy::Random));
        assert_eq!(c.effective_ratio(), 0.5);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for doc in [
            "bogus = 1",
            "[dse]\nbudgett = 3",
            "[weaklabel]\nratio = 2.0",
            "[corpus]\ndomains = [\"astrology\"]",
            "seed = \"x\"",
        ] {
            let e = ExperimentConfig::from_toml_str(doc).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{doc}: {e}");
            assert_eq!(e.exit_code(), 2);
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
