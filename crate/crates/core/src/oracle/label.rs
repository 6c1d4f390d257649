use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{CostReport, Resources};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, PragmaConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Actual,
    Weak,
}

/// One labeled design point. Weak labels carry no resource estimate; their
/// `valid` flag only records that the config is well-formed and
/// `latency_cycles` is the latency implied by `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDesign {
    pub kernel_id: String,
    pub config: PragmaConfig,
    pub y: f64,
    pub latency_cycles: f64,
    pub resources: Option<Resources>,
    pub valid: bool,
    pub label_kind: LabelKind,
    pub source_function: Option<String>,
}

impl LabeledDesign {
    pub fn actual(kernel: &Kernel, config: PragmaConfig, report: &CostReport, base_latency: u64) -> Self {
        let latency = report.latency_cycles as f64;
        Self {
            kernel_id: kernel.id.clone(),
            config,
            y: (latency / base_latency as f64).log2(),
            latency_cycles: latency,
            resources: Some(report.resources),
            valid: report.valid,
            label_kind: LabelKind::Actual,
            source_function: None,
        }
    }

    pub fn weak(kernel_id: &str, config: PragmaConfig, y: f64, base_latency: u64, source: &str) -> Self {
        Self {
            kernel_id: kernel_id.to_string(),
            config,
            y,
            latency_cycles: denormalize_label(y, base_latency as f64),
            resources: None,
            valid: true,
            label_kind: LabelKind::Weak,
            source_function: Some(source.to_string()),
        }
    }

    /// Record-level invariants; returns the first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        match (self.label_kind, &self.source_function) {
            (LabelKind::Actual, Some(_)) => return Err("actual label with a source function".into()),
            (LabelKind::Weak, None) => return Err("weak label without a source function".into()),
            _ => {}
        }
        if !self.y.is_finite() {
            return Err(format!("non-finite label {}", self.y));
        }
        if self.config.kernel_id != self.kernel_id {
            return Err(format!(
                "config kernel `{}` differs from design kernel `{}`",
                self.config.kernel_id, self.kernel_id
            ));
        }
        if self.label_kind == LabelKind::Actual && self.resources.is_none() {
            return Err("actual label without resources".into());
        }
        Ok(())
    }
}

/// `log2(latency / base)`: the default design maps to 0, speedups are negative.
pub fn normalize_label(latency_cycles: f64, base_latency_cycles: f64) -> Result<f64> {
    if !(latency_cycles > 0.0 && base_latency_cycles > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "latencies must be positive, got {latency_cycles} and {base_latency_cycles}"
        )));
    }
    Ok((latency_cycles / base_latency_cycles).log2())
}

pub fn denormalize_label(y: f64, base_latency_cycles: f64) -> f64 {
    base_latency_cycles * y.exp2()
}

/// Union of two stores where an actual label always wins over a weak label
/// for the same `(kernel, config)`.
pub fn merge_designs(actual: &[LabeledDesign], weak: &[LabeledDesign]) -> Vec<LabeledDesign> {
    let seen: HashSet<(&str, &PragmaConfig)> = actual.iter().map(|d| (d.kernel_id.as_str(), &d.config)).collect();
    let mut out = actual.to_vec();
    out.extend(weak.iter().filter(|d| !seen.contains(&(d.kernel_id.as_str(), &d.config))).cloned());
    out
}
