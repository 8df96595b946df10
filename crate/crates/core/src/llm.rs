//! Chat-completion client used for language-model re-lexicalization.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dialogue::{Assignment, DelexDialogue};
use crate::domain::KnowledgeBase;
use crate::error::{Error, Result};
use crate::relex::{build_prompt, parse_llm_response};

pub const DEFAULT_TEMPERATURE: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    /// Base URL; requests go to `{api_base}/chat/completions`.
    pub api_base: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub retries: u32,
    /// Raw responses are written here as `<dialogue_id>.txt`.
    pub audit_dir: Option<PathBuf>,
}

impl LlmConfig {
    pub fn new(api_base: impl Into<String>, model: impl Into<String>) -> Self {
        LlmConfig {
            api_base: api_base.into(),
            api_key: None,
            model: model.into(),
            temperature: DEFAULT_TEMPERATURE,
            timeout: Duration::from_secs(60),
            retries: 2,
            audit_dir: None,
        }
    }

    /// Reads `LLM_API_BASE` and `LLM_API_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self> {
        let base = std::env::var("LLM_API_BASE")
            .map_err(|_| Error::Usage("LLM_API_BASE is not set".into()))?;
        let mut config = LlmConfig::new(base, model);
        config.api_key = std::env::var("LLM_API_KEY").ok();
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Usage(format!("temperature {} is outside [0, 2]", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmOutcome {
    pub assignment: Assignment,
    pub raw_response: String,
    pub warnings: Vec<String>,
}

pub struct LlmClient {
    config: LlmConfig,
    http: reqwest::blocking::Client,
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Result<Self> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(LlmClient { config, http })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn send_once(&self, prompt: &str) -> std::result::Result<String, String> {
        let url = format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'));
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.http.post(&url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| format!("{url}: {e}"))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| format!("{url}: {e}"))?;
        if !status.is_success() {
            return Err(format!("{url}: HTTP {status}"));
        }
        Ok(text)
    }

    /// Sends one completion request, retrying transport failures. Returns the
    /// message content, or the raw body when it is not a chat-completion reply.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                log::warn!("retrying completion request ({attempt}/{}): {last}", self.config.retries);
                thread::sleep(Duration::from_millis(250 * u64::from(attempt)));
            }
            match self.send_once(prompt) {
                Ok(body) => return Ok(message_content(&body).unwrap_or(body)),
                Err(e) => last = e,
            }
        }
        Err(Error::Transport(last))
    }

    /// Prompts for one dialogue and parses the answer.
    pub fn relexicalize(&self, delex: &DelexDialogue, kb: &KnowledgeBase) -> Result<LlmOutcome> {
        let bundle = build_prompt(delex, kb);
        let raw = self.complete(&bundle.prompt)?;
        if let Some(dir) = &self.config.audit_dir {
            fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
            let path = dir.join(format!("{}.txt", delex.dialogue_id));
            fs::write(&path, &raw).map_err(|source| Error::Io { path, source })?;
        }
        let (assignment, warnings) = parse_llm_response(&raw, delex);
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(LlmOutcome {
            assignment,
            raw_response: raw,
            warnings,
        })
    }

    /// Re-lexicalizes many dialogues with at most `concurrency` requests in
    /// flight. Results are keyed by dialogue id; the first transport failure
    /// aborts the batch.
    pub fn relexicalize_all(
        &self,
        items: &[(DelexDialogue, KnowledgeBase)],
        concurrency: usize,
    ) -> Result<BTreeMap<String, LlmOutcome>> {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(concurrency.max(1))
            .build()
            .map_err(|e| Error::Usage(e.to_string()))?;
        pool.install(|| {
            items
                .par_iter()
                .map(|(d, kb)| self.relexicalize(d, kb).map(|o| (d.dialogue_id.clone(), o)))
                .collect()
        })
    }
}

fn message_content(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    v.pointer("/choices/0/message/content")?.as_str().map(str::to_string)
}
