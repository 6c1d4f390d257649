use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::kernel::{Kernel, ENTRY_NAME};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthLimits {
    pub max_footprint_bytes: u64,
}

impl Default for SynthLimits {
    fn default() -> Self {
        Self {
            max_footprint_bytes: 1024 * 1024,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum SynthInput<'a> {
    Text(&'a str),
    Kernel(&'a Kernel),
}

/// Pass/fail plus one reason per failure. Each reason starts with its
/// category: `entry point`, `non-constant bound`, `unsupported construct`,
/// `footprint overflow` or `structure`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub pass: bool,
    pub reasons: Vec<String>,
}

impl ValidityReport {
    fn from_reasons(reasons: Vec<String>) -> Self {
        Self {
            pass: reasons.is_empty(),
            reasons,
        }
    }

    pub fn has(&self, category: &str) -> bool {
        self.reasons.iter().any(|r| r.starts_with(category))
    }
}

pub fn check_synthesizable(input: SynthInput<'_>, limits: &SynthLimits) -> ValidityReport {
    match input {
        SynthInput::Kernel(k) => check_kernel(k, limits),
        SynthInput::Text(t) => check_text(t, limits),
    }
}

fn check_kernel(k: &Kernel, limits: &SynthLimits) -> ValidityReport {
    let mut reasons = Vec::new();
    if k.entry_name != ENTRY_NAME {
        reasons.push(format!("entry point: expected \"{ENTRY_NAME}\", found {:?}", k.entry_name));
    }
    for l in &k.loops {
        if l.trip_count == 0 {
            reasons.push(format!("non-constant bound: loop {} has no positive trip count", l.id));
        }
    }
    reasons.extend(
        k.problems()
            .into_iter()
            .filter(|p| !p.contains("entry") && !p.contains("trip count"))
            .map(|p| format!("structure: {p}")),
    );
    let fp = k.footprint_bytes();
    if fp > limits.max_footprint_bytes {
        reasons.push(format!("footprint overflow: {fp} bytes > {}", limits.max_footprint_bytes));
    }
    ValidityReport::from_reasons(reasons)
}

static ENTRY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(?:void|int|float|double|char|short|long)\s+top\s*\(").unwrap());
static MAIN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bmain\s*\(").unwrap());
static FOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bfor\s*\(([^;]*);([^;]*);([^)]*)\)").unwrap());
static CONST_COND: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\w+\s*(?:<|<=|>|>=|!=)\s*(?:\d+|[A-Z_][A-Z0-9_]*)\s*$").unwrap());
static UNSUPPORTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(malloc|calloc|realloc|free|goto|while|printf|scanf|fopen)\b").unwrap());
static ARRAY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(char|short|int|float|double|long long|long)\s+\w+\s*((?:\[\s*\d+\s*\])+)").unwrap());
static DIM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[\s*(\d+)\s*\]").unwrap());

fn type_bytes(t: &str) -> u64 {
    match t {
        "char" => 1,
        "short" => 2,
        "double" | "long" | "long long" => 8,
        _ => 4,
    }
}

fn check_text(text: &str, limits: &SynthLimits) -> ValidityReport {
    let mut reasons = Vec::new();
    if !ENTRY.is_match(text) {
        reasons.push(format!("entry point: no function named \"{ENTRY_NAME}\""));
    }
    if MAIN.is_match(text) {
        reasons.push("entry point: defines main".to_string());
    }
    for cap in FOR.captures_iter(text) {
        if !CONST_COND.is_match(&cap[2]) {
            reasons.push(format!("non-constant bound: for ({};{};{})", &cap[1], &cap[2], &cap[3]));
        }
    }
    for cap in UNSUPPORTED.captures_iter(text) {
        reasons.push(format!("unsupported construct: {}", &cap[1]));
    }
    // Parameters and locals are both counted; the same name may be declared once.
    let mut seen = std::collections::HashSet::new();
    let mut footprint: u64 = 0;
    for cap in ARRAY.captures_iter(text) {
        let decl = cap.get(0).map_or("", |m| m.as_str());
        if !seen.insert(decl.to_string()) {
            continue;
        }
        let elems: u64 = DIM.captures_iter(&cap[2]).map(|d| d[1].parse::<u64>().unwrap_or(0)).product();
        footprint = footprint.saturating_add(elems.saturating_mul(type_bytes(&cap[1])));
    }
    if footprint > limits.max_footprint_bytes {
        reasons.push(format!("footprint overflow: {footprint} bytes > {}", limits.max_footprint_bytes));
    }
    ValidityReport::from_reasons(reasons)
}
