//! Experiment configuration, on-disk artifacts and the pipeline stages
//! behind the `hlsbench` CLI.
//!
//! Each stage reads upstream artifacts from the input directory and writes
//! only into the output directory (the two may coincide). JSONL artifacts
//! open with a provenance line, CSVs with `# ` header lines, checkpoints
//! carry provenance in their metadata, and `manifest.json` lists the
//! SHA-256 and provenance of every artifact in the directory.

mod config;
mod dataset;

pub use config::{CorpusConfig, DseConfig, EvalConfig, ExperimentConfig, Generator, OptimizeConfig, WeakKind, WeakLabelConfig};
pub use dataset::{
    read_artifact_jsonl, validate_dataset, write_artifact_jsonl, ArtifactEntry, DatasetCounts, DatasetManifest, Provenance, DESIGNS_FILE,
    ENSEMBLE_DIR, EVAL_CSV, EVAL_JSON, FINETUNE_DIR, FINETUNE_LOSS_CSV, KERNELS_FILE, LOSS_CSV, MANIFEST_FILE, MODEL_DIR, OPT_CSV,
    OPT_JSON, REPORT_CSV, WEAK_FILE,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gtnp::GtnpModel;
use crate::io::{read_json, write_json};
use crate::kernel::Kernel;
use crate::oracle::{run_dse, LabeledDesign, Oracle};
use crate::rng::{derive_seed, tag};
use crate::surrogate::{generate_weak_designs, train_ensemble, Ensemble, HybridDataset, ProgramData, WeakSource};
use crate::synthgen::{
    check_synthesizable, generate_corpus, iterative_generate, render_c, GenSession, GenSpec, LlmClient, PromptConstraints, SynthInput,
    SynthLimits,
};
use crate::train::{
    context_indices, evaluate_fewshot, finetune, optimize, pretrain, write_loss_curve, EvalReport, FineTuned, InContextPredictor,
    OptReport, TrainConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Synth,
    Dse,
    TrainEnsemble,
    Weaklabel,
    Pretrain,
    Finetune,
    Eval,
    Optimize,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Synth,
        Stage::Dse,
        Stage::TrainEnsemble,
        Stage::Weaklabel,
        Stage::Pretrain,
        Stage::Finetune,
        Stage::Eval,
        Stage::Optimize,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Dse => "dse",
            Stage::TrainEnsemble => "train-ensemble",
            Stage::Weaklabel => "weaklabel",
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
            Stage::Eval => "eval",
            Stage::Optimize => "optimize",
            Stage::Report => "report",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s:?}")))
    }
}

/// Eval or optimization report with the provenance that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile<T> {
    pub provenance: Provenance,
    pub report: T,
}

/// One experiment bound to its input and output directories.
#[derive(Clone, Debug)]
pub struct Workbench {
    pub config: ExperimentConfig,
    pub input: PathBuf,
    pub out: PathBuf,
}

impl Workbench {
    /// `seed` overrides `config.seed`; `input` defaults to `out`.
    pub fn new(mut config: ExperimentConfig, seed: Option<u64>, input: Option<PathBuf>, out: PathBuf) -> Result<Self> {
        if let Some(s) = seed {
            config.seed = s;
        }
        config.check()?;
        Ok(Self {
            input: input.unwrap_or_else(|| out.clone()),
            config,
            out,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn config_hash(&self) -> String {
        self.config.hash()
    }

    fn provenance(&self, stage: Stage) -> Provenance {
        Provenance {
            config_hash: self.config_hash(),
            seed: self.seed(),
            stage: stage.name().into(),
        }
    }

    fn oracle(&self) -> Oracle {
        Oracle::new(self.config.oracle.clone())
    }

    /// Training settings with the experiment seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed(),
            ..self.config.train.clone()
        }
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }

    /// The output directory's manifest, else the input's counts.
    fn manifest(&self) -> Result<DatasetManifest> {
        let mut m = match DatasetManifest::load(&self.out) {
            Ok(m) => m,
            Err(Error::MissingArtifact(_)) => match DatasetManifest::load(&self.input) {
                Ok(m) => DatasetManifest {
                    artifacts: BTreeMap::new(),
                    ..m
                },
                Err(Error::MissingArtifact(_)) => DatasetManifest::default(),
                Err(e) => return Err(e),
            },
            Err(e) => return Err(e),
        };
        m.config_hash = self.config_hash();
        m.seed = self.seed();
        Ok(m)
    }

    fn save_manifest(&self, m: &DatasetManifest) -> Result<()> {
        write_json(&self.out.join(MANIFEST_FILE), m)
    }

    /// Record every file under `rel` (a file or directory) in the manifest.
    fn record(&self, m: &mut DatasetManifest, rel: &str, prov: &Provenance) -> Result<()> {
        let path = self.out.join(rel);
        if path.is_dir() {
            let stale: Vec<String> = m.artifacts.keys().filter(|k| k.starts_with(&format!("{rel}/"))).cloned().collect();
            for k in stale {
                m.artifacts.remove(&k);
            }
            let mut files = Vec::new();
            collect_files(&path, &mut files)?;
            for f in files {
                let rel_f = f.strip_prefix(&self.out).expect("under out").to_string_lossy().replace('\\', "/");
                m.record(&self.out, &rel_f, prov)?;
            }
            Ok(())
        } else {
            m.record(&self.out, rel, prov)
        }
    }

    pub fn kernels(&self) -> Result<Vec<Kernel>> {
        Ok(read_artifact_jsonl(&self.input.join(KERNELS_FILE))?.1)
    }

    /// Kernels joined with their actual designs, in kernel-file order.
    pub fn programs(&self) -> Result<Vec<ProgramData>> {
        let kernels = self.kernels()?;
        let (_, designs): (_, Vec<LabeledDesign>) = read_artifact_jsonl(&self.input.join(DESIGNS_FILE))?;
        let oracle = self.oracle();
        let mut by_kernel: BTreeMap<String, Vec<LabeledDesign>> = BTreeMap::new();
        for d in designs {
            by_kernel.entry(d.kernel_id.clone()).or_default().push(d);
        }
        Ok(kernels
            .into_iter()
            .map(|kernel| ProgramData {
                base_latency: oracle.base_latency(&kernel),
                designs: by_kernel.remove(&kernel.id).unwrap_or_default(),
                kernel,
            })
            .collect())
    }

    /// Held-out programs: a seeded `test_fraction` of the labeled ones,
    /// always leaving at least one labeled program for training.
    pub fn split(&self, programs: Vec<ProgramData>) -> (Vec<ProgramData>, Vec<ProgramData>) {
        let mut labeled: Vec<(u64, &str)> = programs
            .iter()
            .filter(|p| !p.designs.is_empty())
            .map(|p| (derive_seed(self.seed(), &[tag(&p.kernel.id)]), p.kernel.id.as_str()))
            .collect();
        labeled.sort_unstable();
        let frac = self.config.eval.test_fraction;
        let mut n_test = (labeled.len() as f64 * frac).ceil() as usize;
        if labeled.len() >= 2 {
            n_test = n_test.min(labeled.len() - 1);
        }
        let test_ids: std::collections::HashSet<String> = labeled[..n_test].iter().map(|(_, id)| id.to_string()).collect();
        programs.into_iter().partition(|p| !test_ids.contains(&p.kernel.id))
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Synth => self.synth(),
            Stage::Dse => self.dse(),
            Stage::TrainEnsemble => self.train_ensemble(),
            Stage::Weaklabel => self.weaklabel(),
            Stage::Pretrain => self.pretrain(),
            Stage::Finetune => self.finetune(),
            Stage::Eval => self.eval().map(|_| ()),
            Stage::Optimize => self.optimize().map(|_| ()),
            Stage::Report => self.report().map(|_| ()),
        }
    }

    pub fn run_all(&self, stages: &[Stage]) -> Result<()> {
        for &s in stages {
            log::info!("stage {}", s.name());
            self.run(s)?;
        }
        Ok(())
    }

    pub fn synth(&self) -> Result<()> {
        let c = &self.config.corpus;
        if !c.kernel_paths.is_empty() {
            let mut kernels = Vec::new();
            for p in &c.kernel_paths {
                kernels.extend(read_kernel_file(p)?);
            }
            let n = kernels.len();
            return self.write_corpus(kernels, n);
        }
        match c.generator {
            Generator::Parametric => {
                let base = GenSpec {
                    seed: self.seed(),
                    num_loops: c.num_loops,
                    memory_bytes: c.memory_bytes,
                    domain: String::new(),
                    multi_function: c.multi_function,
                };
                let domains: Vec<&str> = c.domains.iter().map(String::as_str).collect();
                let kernels = generate_corpus(&base, &domains, c.programs)?;
                self.write_corpus(kernels, c.programs)
            }
            Generator::Llm => {
                #[cfg(feature = "http")]
                {
                    let mut client = crate::synthgen::HttpLlmClient::from_env()?;
                    self.synth_with_client(&mut client)
                }
                #[cfg(not(feature = "http"))]
                Err(Error::Config(
                    "built without the `http` feature; the llm generator is unavailable".into(),
                ))
            }
        }
    }

    /// LLM corpus: one session per domain, `corpus.programs` rounds in
    /// total, round-robin over domains.
    pub fn synth_with_client(&self, client: &mut dyn LlmClient) -> Result<()> {
        let c = &self.config.corpus;
        let mut sessions: Vec<GenSession> = c
            .domains
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut rng = crate::rng::rng_for(self.seed(), &[tag(d), i as u64]);
                use rand::Rng;
                let mut s = GenSession::new(&PromptConstraints {
                    num_loops: rng.random_range(c.num_loops.0..=c.num_loops.1),
                    memory_bytes: rng.random_range(c.memory_bytes.0..=c.memory_bytes.1),
                    domain: d.clone(),
                    multi_function: c.multi_function,
                    ..PromptConstraints::default()
                });
                s.retry = c.llm_retry.clone();
                s
            })
            .collect();
        let mut kernels: Vec<Kernel> = Vec::new();
        let mut ids = std::collections::HashSet::new();
        for round in 0..c.programs {
            let n = sessions.len();
            for mut k in iterative_generate(&mut sessions[round % n], client, 1)? {
                let base = k.id.clone();
                let mut i = 1;
                while !ids.insert(k.id.clone()) {
                    k.id = format!("{base}-{i}");
                    i += 1;
                }
                kernels.push(k);
            }
        }
        self.write_corpus(kernels, c.programs)
    }

    fn write_corpus(&self, kernels: Vec<Kernel>, generated: usize) -> Result<()> {
        self.prepare_out()?;
        let limits = SynthLimits::default();
        let kernels: Vec<Kernel> = kernels
            .into_iter()
            .filter(|k| {
                let ok = check_synthesizable(SynthInput::Kernel(k), &limits).pass
                    && check_synthesizable(SynthInput::Text(&render_c(k)), &limits).pass;
                if !ok {
                    log::warn!("dropping unsynthesizable kernel {}", k.id);
                }
                ok
            })
            .collect();
        let prov = self.provenance(Stage::Synth);
        write_artifact_jsonl(&self.out.join(KERNELS_FILE), &prov, &kernels)?;
        let mut m = self.manifest()?;
        m.artifacts.clear();
        m.counts = DatasetCounts {
            programs_generated: generated,
            synthesizable: kernels.len(),
            ..DatasetCounts::default()
        };
        self.record(&mut m, KERNELS_FILE, &prov)?;
        self.save_manifest(&m)
    }

    pub fn dse(&self) -> Result<()> {
        self.prepare_out()?;
        let kernels = self.kernels()?;
        let oracle = self.oracle();
        let d = &self.config.dse;
        let n = if d.programs == 0 {
            kernels.len()
        } else {
            d.programs.min(kernels.len())
        };
        let mut designs = Vec::new();
        let mut labeled = 0;
        for k in &kernels[..n] {
            let ds = run_dse(&oracle, k, d.budget, d.strategy, derive_seed(self.seed(), &[tag(&k.id)]))?;
            labeled += usize::from(!ds.is_empty());
            designs.extend(ds);
        }
        let prov = self.provenance(Stage::Dse);
        write_artifact_jsonl(&self.out.join(DESIGNS_FILE), &prov, &designs)?;
        let mut m = self.manifest()?;
        m.oracle_hash = self.config.oracle.hash();
        m.counts.labeled_programs = labeled;
        m.counts.actual_labels = designs.len();
        self.record(&mut m, DESIGNS_FILE, &prov)?;
        self.save_manifest(&m)
    }

    pub fn train_ensemble(&self) -> Result<()> {
        self.prepare_out()?;
        let (train, _) = self.split(self.programs()?);
        let ensemble = train_ensemble(&train, &self.config.ensemble)?;
        let prov = self.provenance(Stage::TrainEnsemble);
        let dir = self.out.join(ENSEMBLE_DIR);
        ensemble.save(&dir, serde_json::json!({ "provenance": prov, "report": ensemble.report() }))?;
        let mut m = self.manifest()?;
        self.record(&mut m, ENSEMBLE_DIR, &prov)?;
        self.save_manifest(&m)
    }

    pub fn weaklabel(&self) -> Result<()> {
        self.prepare_out()?;
        let (train, _) = self.split(self.programs()?);
        let w = &self.config.weaklabel;
        let source = match w.source {
            WeakKind::Ensemble => {
                let (ensemble, _) = Ensemble::load(&self.input.join(ENSEMBLE_DIR))?;
                WeakSource::Functions(ensemble.spawn_functions(w.functions, self.seed())?)
            }
            WeakKind::Gp => WeakSource::Gp {
                prior: w.gp.clone(),
                functions: w.functions,
            },
        };
        let weak = generate_weak_designs(&train, &source, w.l, w.k, self.seed())?;
        let prov = self.provenance(Stage::Weaklabel);
        write_artifact_jsonl(&self.out.join(WEAK_FILE), &prov, &weak)?;
        let mut m = self.manifest()?;
        m.counts.weak_labels = weak.len();
        self.record(&mut m, WEAK_FILE, &prov)?;
        self.save_manifest(&m)
    }

    /// Training contexts: actual labels of the training programs, plus
    /// weak labels when the preset is hybrid.
    pub fn training_dataset(&self) -> Result<HybridDataset> {
        let (train, _) = self.split(self.programs()?);
        let ratio = self.config.effective_ratio();
        let weak = if ratio > 0.0 {
            read_artifact_jsonl::<LabeledDesign>(&self.input.join(WEAK_FILE))?.1
        } else {
            Vec::new()
        };
        HybridDataset::from_designs(&train, weak, ratio)
    }

    pub fn pretrain(&self) -> Result<()> {
        self.prepare_out()?;
        let dataset = self.training_dataset()?;
        let cfg = self.train_config();
        let outcome = pretrain(&cfg, &self.config.model, &dataset)?;
        let prov = self.provenance(Stage::Pretrain);
        outcome.model.save(
            &self.out.join(MODEL_DIR),
            serde_json::json!({ "provenance": prov, "preset": cfg.preset, "steps": cfg.steps }),
        )?;
        write_loss_curve(&self.out.join(LOSS_CSV), &outcome.losses, &prov.header_lines())?;
        let mut m = self.manifest()?;
        self.record(&mut m, MODEL_DIR, &prov)?;
        self.record(&mut m, LOSS_CSV, &prov)?;
        self.save_manifest(&m)
    }

    pub fn load_model(&self) -> Result<GtnpModel> {
        Ok(GtnpModel::load(&self.input.join(MODEL_DIR))?.0)
    }

    fn test_programs(&self) -> Result<Vec<ProgramData>> {
        let (_, test) = self.split(self.programs()?);
        if test.is_empty() {
            return Err(Error::Empty(
                "no held-out programs; raise eval.test_fraction or label more programs".into(),
            ));
        }
        Ok(test)
    }

    /// Fine-tune a copy of the model per held-out program on its context
    /// designs for the first evaluation seed.
    pub fn finetune(&self) -> Result<()> {
        self.prepare_out()?;
        let model = self.load_model()?;
        let cfg = self.train_config();
        let seed = self.config.eval.seeds[0];
        let prov = self.provenance(Stage::Finetune);
        let mut rows = Vec::new();
        for p in self.test_programs()? {
            let n = p.designs.len();
            let ctx: Vec<LabeledDesign> = context_indices(&p.kernel.id, n, self.config.eval.context_size.min(n), seed)
                .into_iter()
                .map(|i| p.designs[i].clone())
                .collect();
            if ctx.len() < 2 {
                log::warn!("skipping fine-tuning of {}: {} designs", p.kernel.id, ctx.len());
                continue;
            }
            let outcome = finetune(&model, &p.kernel, &ctx, cfg.finetune_steps, &cfg)?;
            outcome.model.save(
                &self.out.join(FINETUNE_DIR).join(&p.kernel.id),
                serde_json::json!({ "provenance": prov, "program": p.kernel.id, "context_seed": seed }),
            )?;
            rows.extend(outcome.losses.iter().enumerate().map(|(s, l)| (p.kernel.id.clone(), s, *l)));
        }
        let path = self.out.join(FINETUNE_LOSS_CSV);
        let mut text = String::new();
        for l in prov.header_lines() {
            let _ = writeln!(text, "# {l}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["program", "step", "loss"])?;
        for (p, s, l) in &rows {
            w.write_record([p.clone(), s.to_string(), l.to_string()])?;
        }
        text.push_str(&String::from_utf8(w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?).expect("utf8 csv"));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let mut m = self.manifest()?;
        if self.out.join(FINETUNE_DIR).is_dir() {
            self.record(&mut m, FINETUNE_DIR, &prov)?;
        }
        self.record(&mut m, FINETUNE_LOSS_CSV, &prov)?;
        self.save_manifest(&m)
    }

    fn with_predictor<T>(&self, f: impl FnOnce(&dyn InContextPredictor) -> Result<T>) -> Result<T> {
        let model = self.load_model()?;
        if self.config.train.preset.fine_tunes() {
            let cfg = self.train_config();
            let steps = cfg.finetune_steps;
            f(&FineTuned {
                base: &model,
                config: cfg,
                steps,
            })
        } else {
            f(&model)
        }
    }

    pub fn eval(&self) -> Result<EvalReport> {
        self.prepare_out()?;
        let test = self.test_programs()?;
        let e = &self.config.eval;
        let report = self.with_predictor(|p| evaluate_fewshot(p, &test, e.context_size, &e.seeds))?;
        let prov = self.provenance(Stage::Eval);
        report.write_csv(&self.out.join(EVAL_CSV), &prov.header_lines())?;
        write_json(
            &self.out.join(EVAL_JSON),
            &ReportFile {
                provenance: prov.clone(),
                report: report.clone(),
            },
        )?;
        let mut m = self.manifest()?;
        self.record(&mut m, EVAL_CSV, &prov)?;
        self.record(&mut m, EVAL_JSON, &prov)?;
        self.save_manifest(&m)?;
        Ok(report)
    }

    pub fn optimize(&self) -> Result<OptReport> {
        self.prepare_out()?;
        let test = self.test_programs()?;
        let o = &self.config.optimize;
        let ctx = self.config.eval.context_size;
        let report = self.with_predictor(|p| optimize(p, &test, ctx, o.k, o.resource_bound, self.seed()))?;
        let prov = self.provenance(Stage::Optimize);
        report.write_csv(&self.out.join(OPT_CSV), &prov.header_lines())?;
        write_json(
            &self.out.join(OPT_JSON),
            &ReportFile {
                provenance: prov.clone(),
                report: report.clone(),
            },
        )?;
        let mut m = self.manifest()?;
        self.record(&mut m, OPT_CSV, &prov)?;
        self.record(&mut m, OPT_JSON, &prov)?;
        self.save_manifest(&m)?;
        Ok(report)
    }

    /// Summary table of the evaluation (and optimization, when present):
    /// per-program `mean (std)` MSE and a geomean row, written to
    /// `report.csv` and returned as text.
    pub fn report(&self) -> Result<String> {
        self.prepare_out()?;
        let eval: ReportFile<EvalReport> = read_json(&self.input.join(EVAL_JSON))?;
        let opt: Option<ReportFile<OptReport>> = match read_json(&self.input.join(OPT_JSON)) {
            Ok(o) => Some(o),
            Err(Error::MissingArtifact(_)) => None,
            Err(e) => return Err(e),
        };
        let prov = self.provenance(Stage::Report);
        let mut header = prov.header_lines();
        header.push(format!("eval_config_hash={}", eval.provenance.config_hash));
        header.push(format!("eval_seed={}", eval.provenance.seed));
        header.push(format!("seeds={:?}", eval.report.seeds));

        let opt_by_program: BTreeMap<&str, &crate::train::OptEntry> = opt
            .iter()
            .flat_map(|o| o.report.entries.iter().map(|e| (e.kernel_id.as_str(), e)))
            .collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut cols = vec!["program", "mse_mean_std", "mean_mse", "std_mse"];
        if opt.is_some() {
            cols.extend(["best_at_k", "ideal_latency", "substituted"]);
        }
        w.write_record(&cols)?;
        for p in &eval.report.programs {
            let mut row = vec![
                p.kernel_id.clone(),
                format!("{} ({})", p.mean, p.std),
                p.mean.to_string(),
                p.std.to_string(),
            ];
            if opt.is_some() {
                match opt_by_program.get(p.kernel_id.as_str()) {
                    Some(e) => row.extend([e.best_latency.to_string(), e.ideal_latency.to_string(), e.substituted.to_string()]),
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            w.write_record(&row)?;
        }
        let mut row = vec![
            "geomean".to_string(),
            eval.report.geomean.to_string(),
            eval.report.geomean.to_string(),
            String::new(),
        ];
        if opt.is_some() {
            row.extend([String::new(), String::new(), String::new()]);
        }
        w.write_record(&row)?;
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?).expect("utf8 csv");
        let mut text = String::new();
        for l in &header {
            let _ = writeln!(text, "# {l}");
        }
        text.push_str(&body);
        let path = self.out.join(REPORT_CSV);
        fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        let mut m = self.manifest()?;
        self.record(&mut m, REPORT_CSV, &prov)?;
        self.save_manifest(&m)?;
        Ok(text)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Kernels from a JSONL file, with or without a provenance line.
fn read_kernel_file(path: &Path) -> Result<Vec<Kernel>> {
    match read_artifact_jsonl(path) {
        Ok((_, ks)) => Ok(ks),
        Err(Error::Dataset(_)) => crate::io::read_jsonl(path),
        Err(e) => Err(e),
    }
}
