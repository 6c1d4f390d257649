use std::collections::{HashSet, VecDeque};
use std::fmt::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::check::{check_synthesizable, SynthInput, SynthLimits};
use crate::error::{Error, Result};
use crate::io::bytes_hash;
use crate::kernel::{Kernel, ENTRY_NAME};

pub const ENV_LLM_ENDPOINT: &str = "ICEBERG_LLM_ENDPOINT";
pub const ENV_LLM_MODEL: &str = "ICEBERG_LLM_MODEL";
pub const ENV_LLM_TEMPERATURE: &str = "ICEBERG_LLM_TEMPERATURE";
pub const ENV_LLM_API_KEY: &str = "ICEBERG_LLM_API_KEY";

/// Text completion backend. Errors are transport failures.
pub trait LlmClient {
    fn complete(&mut self, prompt: &str) -> std::result::Result<String, String>;
}

/// Replays canned responses in order and records every prompt it saw.
#[derive(Clone, Debug, Default)]
pub struct ReplayClient {
    pub responses: VecDeque<std::result::Result<String, String>>,
    pub prompts: Vec<String>,
}

impl ReplayClient {
    pub fn new(responses: impl IntoIterator<Item = std::result::Result<String, String>>) -> Self {
        Self {
            responses: responses.into_iter().collect(),
            prompts: Vec::new(),
        }
    }
}

impl LlmClient for ReplayClient {
    fn complete(&mut self, prompt: &str) -> std::result::Result<String, String> {
        self.prompts.push(prompt.to_string());
        self.responses.pop_front().unwrap_or_else(|| Err("replay exhausted".into()))
    }
}

/// Chat-completions client configured from `ICEBERG_LLM_*` variables.
#[cfg(feature = "http")]
pub struct HttpLlmClient {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub api_key: Option<String>,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpLlmClient {
    pub fn new(endpoint: String, model: String, temperature: f64, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            endpoint,
            model,
            temperature,
            api_key,
            agent,
        }
    }

    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENV_LLM_ENDPOINT).map_err(|_| Error::Config(format!("{ENV_LLM_ENDPOINT} is not set")))?;
        let model = std::env::var(ENV_LLM_MODEL).map_err(|_| Error::Config(format!("{ENV_LLM_MODEL} is not set")))?;
        let temperature = match std::env::var(ENV_LLM_TEMPERATURE) {
            Ok(t) => t
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_LLM_TEMPERATURE} is not a number: {t}")))?,
            Err(_) => 0.7,
        };
        Ok(Self::new(endpoint, model, temperature, std::env::var(ENV_LLM_API_KEY).ok()))
    }
}

#[cfg(feature = "http")]
impl LlmClient for HttpLlmClient {
    fn complete(&mut self, prompt: &str) -> std::result::Result<String, String> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| e.to_string())?;
        let v: serde_json::Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| format!("response has no message content: {v}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConstraints {
    pub entry_point_rule: bool,
    pub no_main_rule: bool,
    pub constant_bounds_rule: bool,
    pub num_loops: usize,
    pub memory_bytes: u64,
    pub domain: String,
    pub multi_function: bool,
}

impl Default for PromptConstraints {
    fn default() -> Self {
        Self {
            entry_point_rule: true,
            no_main_rule: true,
            constant_bounds_rule: true,
            num_loops: 3,
            memory_bytes: 16384,
            domain: "stencil".into(),
            multi_function: false,
        }
    }
}

const KERNEL_SCHEMA: &str = r#"{"id": str, "entry_name": "top", "loops": [{"id": int, "trip_count": int, "parent": int|null, "body_ops": {"adds": int, "mults": int, "loads": int, "stores": int}, "arrays": [str]}], "arrays": [{"name": str, "element_bits": int, "extents": [int]}], "domain_tag": str, "num_functions": int}"#;

pub fn build_initial_prompt(c: &PromptConstraints) -> String {
    let mut p = String::new();
    let _ = writeln!(
        p,
        "Write a computationally intensive C kernel from the {} domain for high-level synthesis.",
        c.domain
    );
    p.push_str("Requirements:\n");
    if c.entry_point_rule {
        let _ = writeln!(p, "- The program has a single entry point named \"{ENTRY_NAME}\".");
    }
    if c.no_main_rule {
        p.push_str("- Do not define a main function.\n");
    }
    if c.constant_bounds_rule {
        p.push_str("- Every loop must have a constant loop bound known at compile time.\n");
    }
    let _ = writeln!(
        p,
        "- Structure all input and output variables as function arguments of \"{ENTRY_NAME}\"."
    );
    let _ = writeln!(p, "- Use exactly {} loops.", c.num_loops);
    let _ = writeln!(
        p,
        "- Keep the total memory footprint of all arrays within {} bytes.",
        c.memory_bytes
    );
    if c.multi_function {
        let _ = writeln!(p, "- Split the work into several functions called from \"{ENTRY_NAME}\".");
    } else {
        p.push_str("- Implement everything in a single function.\n");
    }
    p.push_str("Answer with a ```c block holding the source, then a ```json block describing the kernel with this schema:\n");
    p.push_str(KERNEL_SCHEMA);
    p.push('\n');
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay_ms: 200,
        }
    }
}

/// State of one LLM generation run. Drive it from one thread only.
#[derive(Clone, Debug)]
pub struct GenSession {
    pub prompt_template: String,
    /// `name: loop signature` of every accepted program.
    pub history: Vec<String>,
    /// One entry per rejected completion.
    pub feedback_log: Vec<String>,
    pub duplicates: usize,
    pub retry: RetryPolicy,
    pub limits: SynthLimits,
    seen_text: HashSet<String>,
    seen_signatures: HashSet<String>,
}

const FEEDBACK_IN_PROMPT: usize = 5;

impl GenSession {
    pub fn new(constraints: &PromptConstraints) -> Self {
        Self {
            prompt_template: build_initial_prompt(constraints),
            history: Vec::new(),
            feedback_log: Vec::new(),
            duplicates: 0,
            retry: RetryPolicy::default(),
            limits: SynthLimits::default(),
            seen_text: HashSet::new(),
            seen_signatures: HashSet::new(),
        }
    }

    /// The template, plus earlier programs with the novelty instruction and
    /// the most recent validation failures.
    pub fn prompt(&self) -> String {
        let mut p = self.prompt_template.clone();
        if !self.history.is_empty() {
            p.push_str("\nPrograms generated so far:\n");
            for h in &self.history {
                let _ = writeln!(p, "- {h}");
            }
            p.push_str("The new program must be significantly different from those already presented. Let's think step by step.\n");
        }
        if !self.feedback_log.is_empty() {
            p.push_str("\nEarlier attempts failed validation:\n");
            let start = self.feedback_log.len().saturating_sub(FEEDBACK_IN_PROMPT);
            for f in &self.feedback_log[start..] {
                let _ = writeln!(p, "- {f}");
            }
            p.push_str("Avoid these problems.\n");
        }
        p
    }
}

fn fenced_block<'a>(text: &'a str, langs: &[&str]) -> Option<&'a str> {
    for lang in langs {
        let open = format!("```{lang}");
        if let Some(start) = text.find(&open) {
            let body = &text[start + open.len()..];
            let body = body.strip_prefix('\n').unwrap_or(body);
            if let Some(end) = body.find("```") {
                return Some(&body[..end]);
            }
        }
    }
    None
}

/// Split a completion into its C source and kernel description.
pub fn parse_completion(text: &str) -> std::result::Result<(String, Kernel), String> {
    let source = fenced_block(text, &["c\n", "cpp\n", "c++\n", "C\n"]).ok_or("no ```c block")?;
    let json = fenced_block(text, &["json"]).ok_or("no ```json block")?;
    let kernel: Kernel = serde_json::from_str(json).map_err(|e| format!("bad kernel json: {e}"))?;
    Ok((source.to_string(), kernel))
}

fn complete_with_retry(client: &mut dyn LlmClient, prompt: &str, retry: &RetryPolicy) -> Result<String> {
    let attempts = retry.attempts.max(1);
    let mut last = String::new();
    for i in 0..attempts {
        match client.complete(prompt) {
            Ok(t) => return Ok(t),
            Err(e) => {
                log::warn!("llm attempt {} of {attempts} failed: {e}", i + 1);
                last = e;
                if i + 1 < attempts && retry.base_delay_ms > 0 {
                    std::thread::sleep(Duration::from_millis(retry.base_delay_ms << i.min(6)));
                }
            }
        }
    }
    Err(Error::LlmTransport { attempts, message: last })
}

/// Run `n` generation rounds and return the kernels that passed validation
/// and were not duplicates, so fewer than `n` may come back.
pub fn iterative_generate(session: &mut GenSession, client: &mut dyn LlmClient, n: usize) -> Result<Vec<Kernel>> {
    if n == 0 {
        return Err(Error::InvalidArgument("iterative generation needs n >= 1".into()));
    }
    let mut out = Vec::new();
    for round in 0..n {
        let text = complete_with_retry(client, &session.prompt(), &session.retry)?;
        let (source, kernel) = match parse_completion(&text) {
            Ok(x) => x,
            Err(e) => {
                session.feedback_log.push(format!("round {round}: unparseable output ({e})"));
                continue;
            }
        };
        let mut reasons = check_synthesizable(SynthInput::Text(&source), &session.limits).reasons;
        reasons.extend(check_synthesizable(SynthInput::Kernel(&kernel), &session.limits).reasons);
        if !reasons.is_empty() {
            session.feedback_log.push(format!("round {round}: {}", reasons.join("; ")));
            continue;
        }
        let hash = bytes_hash(source.as_bytes());
        let signature = kernel.loop_signature();
        if session.seen_text.contains(&hash) || session.seen_signatures.contains(&signature) {
            session.duplicates += 1;
            log::info!("round {round}: duplicate program {signature} dropped");
            continue;
        }
        session.seen_text.insert(hash);
        session.seen_signatures.insert(signature.clone());
        session.history.push(format!("{}: {signature}", kernel.id));
        out.push(kernel);
    }
    Ok(out)
}
