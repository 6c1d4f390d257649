use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{file_hash, read_json};
use crate::kernel::{build_design_space, DesignSpace, Kernel};
use crate::oracle::{LabelKind, LabeledDesign};

pub const KERNELS_FILE: &str = "kernels.jsonl";
pub const DESIGNS_FILE: &str = "designs.jsonl";
pub const WEAK_FILE: &str = "weak_designs.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENSEMBLE_DIR: &str = "ensemble";
pub const MODEL_DIR: &str = "model";
pub const FINETUNE_DIR: &str = "finetuned";
pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const OPT_CSV: &str = "opt.csv";
pub const OPT_JSON: &str = "opt.json";
pub const REPORT_CSV: &str = "report.csv";
pub const LOSS_CSV: &str = "loss.csv";
pub const FINETUNE_LOSS_CSV: &str = "finetune_loss.csv";

/// Which config and seed produced an artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub stage: String,
}

impl Provenance {
    /// Lines for `# `-prefixed CSV headers.
    pub fn header_lines(&self) -> Vec<String> {
        vec![
            format!("config_hash={}", self.config_hash),
            format!("seed={}", self.seed),
            format!("stage={}", self.stage),
        ]
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    provenance: Provenance,
}

/// JSON lines preceded by a provenance header line.
pub fn write_artifact_jsonl<T: Serialize>(path: &Path, provenance: &Provenance, items: &[T]) -> Result<()> {
    let mut buf = serde_json::to_vec(&Header {
        provenance: provenance.clone(),
    })?;
    buf.push(b'\n');
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Raw records with 1-based line numbers, after the header.
fn read_raw(path: &Path) -> Result<(Provenance, Vec<(usize, String)>)> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let name = file_name(path);
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let header = lines
        .next()
        .and_then(|(_, l)| serde_json::from_str::<Header>(l).ok())
        .ok_or_else(|| Error::Dataset(vec![format!("{name}:1: missing provenance header")]))?;
    Ok((header.provenance, lines.map(|(n, l)| (n, l.to_string())).collect()))
}

pub fn read_artifact_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Provenance, Vec<T>)> {
    let (prov, raw) = read_raw(path)?;
    let name = file_name(path);
    let mut out = Vec::with_capacity(raw.len());
    let mut problems = Vec::new();
    for (n, line) in raw {
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(e) => problems.push(format!("{name}:{n}: {e}")),
        }
    }
    if problems.is_empty() {
        Ok((prov, out))
    } else {
        Err(Error::Dataset(problems))
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub programs_generated: usize,
    pub synthesizable: usize,
    pub labeled_programs: usize,
    pub actual_labels: usize,
    pub weak_labels: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub sha256: String,
    pub provenance: Provenance,
}

/// Dataset statistics plus the hash and provenance of every artifact in
/// the directory. `config_hash` and `seed` are those of the latest stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub seed: u64,
    pub oracle_hash: String,
    pub counts: DatasetCounts,
    /// Keyed by path relative to the directory.
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    pub fn record(&mut self, dir: &Path, artifact: &str, provenance: &Provenance) -> Result<()> {
        let sha256 = file_hash(&dir.join(artifact))?;
        self.artifacts.insert(
            artifact.to_string(),
            ArtifactEntry {
                sha256,
                provenance: provenance.clone(),
            },
        );
        Ok(())
    }
}

/// Re-count and re-validate the dataset in `dir` against its manifest.
/// Every problem is reported, with `file:line` where one applies.
pub fn validate_dataset(dir: &Path) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::load(dir)?;
    let mut problems = Vec::new();

    let (kprov, kraw) = read_raw(&dir.join(KERNELS_FILE))?;
    check_provenance(&manifest, KERNELS_FILE, &kprov, &mut problems);
    let mut spaces: HashMap<String, DesignSpace> = HashMap::new();
    for (n, line) in &kraw {
        match serde_json::from_str::<Kernel>(line) {
            Ok(k) => {
                if let Err(e) = k.validate() {
                    problems.push(format!("{KERNELS_FILE}:{n}: {e}"));
                }
                let space = build_design_space(&k);
                if spaces.insert(k.id.clone(), space).is_some() {
                    problems.push(format!("{KERNELS_FILE}:{n}: duplicate kernel id {}", k.id));
                }
            }
            Err(e) => problems.push(format!("{KERNELS_FILE}:{n}: {e}")),
        }
    }
    if kraw.len() != manifest.counts.synthesizable {
        problems.push(format!(
            "{KERNELS_FILE}: {} kernels, manifest says {} synthesizable",
            kraw.len(),
            manifest.counts.synthesizable
        ));
    }

    let mut check_designs = |file: &str, kind: LabelKind, expected: usize, programs: Option<usize>| -> Result<()> {
        let path = dir.join(file);
        if !path.exists() {
            if expected > 0 {
                problems.push(format!("{file}: missing, manifest expects {expected} labels"));
            }
            return Ok(());
        }
        let (prov, raw) = read_raw(&path)?;
        check_provenance(&manifest, file, &prov, &mut problems);
        let mut labeled = std::collections::BTreeSet::new();
        for (n, line) in &raw {
            let d = match serde_json::from_str::<LabeledDesign>(line) {
                Ok(d) => d,
                Err(e) => {
                    problems.push(format!("{file}:{n}: {e}"));
                    continue;
                }
            };
            if d.label_kind != kind {
                problems.push(format!("{file}:{n}: label kind {:?}, expected {kind:?}", d.label_kind));
            }
            if let Err(e) = d.check() {
                problems.push(format!("{file}:{n}: {e}"));
            }
            match spaces.get(&d.kernel_id) {
                None => problems.push(format!("{file}:{n}: unknown kernel {}", d.kernel_id)),
                Some(space) => {
                    if let Err(e) = space.check(&d.config) {
                        problems.push(format!("{file}:{n}: {e}"));
                    }
                }
            }
            labeled.insert(d.kernel_id);
        }
        if raw.len() != expected {
            problems.push(format!("{file}: {} labels, manifest says {expected}", raw.len()));
        }
        if let Some(p) = programs {
            if labeled.len() != p {
                problems.push(format!("{file}: {} labeled programs, manifest says {p}", labeled.len()));
            }
        }
        Ok(())
    };
    check_designs(
        DESIGNS_FILE,
        LabelKind::Actual,
        manifest.counts.actual_labels,
        Some(manifest.counts.labeled_programs),
    )?;
    check_designs(WEAK_FILE, LabelKind::Weak, manifest.counts.weak_labels, None)?;

    for (artifact, entry) in &manifest.artifacts {
        match file_hash(&dir.join(artifact)) {
            Ok(h) if h == entry.sha256 => {}
            Ok(_) => problems.push(format!("{artifact}: content hash differs from manifest")),
            Err(_) => problems.push(format!("{artifact}: listed in manifest but unreadable")),
        }
    }

    if problems.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::Dataset(problems))
    }
}

fn check_provenance(manifest: &DatasetManifest, file: &str, prov: &Provenance, problems: &mut Vec<String>) {
    match manifest.artifacts.get(file) {
        None => problems.push(format!("{file}: not listed in manifest")),
        Some(entry) if &entry.provenance != prov => problems.push(format!(
            "{file}:1: provenance ({}, seed {}, {}) differs from manifest ({}, seed {}, {})",
            prov.config_hash, prov.seed, prov.stage, entry.provenance.config_hash, entry.provenance.seed, entry.provenance.stage
        )),
        Some(_) => {}
    }
}
