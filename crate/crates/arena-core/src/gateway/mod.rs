//! Uniform generation interface over the model pool.
//!
//! Every agent role (examiner, contestant, judge) goes through the same
//! [`Backend::generate`] call, so orchestration code never knows whether a
//! model is a remote chat-completions endpoint, a deterministic script, or
//! an echo stub. Retries, rate limiting, and timeouts live here.

mod http;
mod limiter;
mod script;

pub use limiter::RateLimiter;
pub use script::{
    answer_blocks, ScriptProfile, ANSWER_A_MARK, ANSWER_B_MARK, ANSWER_END_MARK, TASK_ANALYZE,
    TASK_COMPLEXITY, TASK_EVOLVE, TASK_JUDGE, TASK_PERSONAS, TASK_QUESTION,
};

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rating::ModelId;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("task {task_id}: request to {model_id} timed out")]
    Timeout { task_id: String, model_id: ModelId },
    #[error("task {task_id}: {model_id} rate limited after {retries} retries")]
    RateLimited {
        task_id: String,
        model_id: ModelId,
        retries: u32,
    },
    #[error("task {task_id}: malformed response from {model_id}: {detail}")]
    MalformedResponse {
        task_id: String,
        model_id: ModelId,
        detail: String,
    },
    #[error("task {task_id}: backend {model_id} unavailable: {detail}")]
    BackendUnavailable {
        task_id: String,
        model_id: ModelId,
        detail: String,
    },
    #[error("duplicate model id {0}")]
    DuplicateModelId(ModelId),
    #[error("backend {0}: http backend requires an endpoint")]
    MissingEndpoint(ModelId),
    #[error("backend {0}: scripted backend requires a script profile")]
    MissingScript(ModelId),
    #[error("unknown model id {0}")]
    UnknownModel(ModelId),
    #[error("task {task_id}: failed reading frame {path}: {source}")]
    FrameIo {
        task_id: String,
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Remote chat-completions endpoint speaking JSON over HTTP.
    HttpChat,
    /// Deterministic in-process script, for tests and dry runs.
    Scripted,
    /// Returns the user text verbatim.
    Echo,
}

/// Decoding parameters sent with every generation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Upper bound on frames attached to a request.
    pub frame_budget: usize,
    /// Long-edge pixel size frames are expected to be resized to upstream.
    pub frame_edge: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_output_tokens: 4096,
            temperature: 0.7,
            frame_budget: 64,
            frame_edge: 512,
        }
    }
}

/// Static description of one model in the pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub model_id: ModelId,
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub params: GenerationParams,
    /// Maximum requests within any sliding 60 s window.
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles per retry, capped at 60 s.
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub script: Option<ScriptProfile>,
    /// Artificial latency for scripted backends, for scheduling tests.
    #[serde(default)]
    pub script_latency_ms: u64,
}

fn default_timeout_s() -> u64 {
    120
}

fn default_max_retries() -> u32 {
    5
}

fn default_backoff_base_ms() -> u64 {
    1000
}

impl BackendDescriptor {
    pub fn scripted(model_id: impl Into<ModelId>, script: ScriptProfile) -> Self {
        BackendDescriptor {
            model_id: model_id.into(),
            kind: BackendKind::Scripted,
            endpoint: None,
            api_key_env: None,
            params: GenerationParams::default(),
            requests_per_minute: None,
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_base_ms(),
            script: Some(script),
            script_latency_ms: 0,
        }
    }

    pub fn echo(model_id: impl Into<ModelId>) -> Self {
        BackendDescriptor {
            script: None,
            kind: BackendKind::Echo,
            ..BackendDescriptor::scripted(model_id, ScriptProfile::HashEcho)
        }
    }

    fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::HttpChat if self.endpoint.is_none() => {
                Err(GatewayError::MissingEndpoint(self.model_id.clone()))
            }
            BackendKind::Scripted if self.script.is_none() => {
                Err(GatewayError::MissingScript(self.model_id.clone()))
            }
            _ => Ok(()),
        }
    }
}

/// One generation call. `task_id` ties gateway errors back to the battle or
/// agent step that issued the request.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationRequest {
    pub task_id: String,
    pub system_text: String,
    pub user_text: String,
    #[serde(default)]
    pub frames: Vec<PathBuf>,
    #[serde(default)]
    pub subtitles: Option<String>,
}

impl GenerationRequest {
    pub fn text_only(task_id: impl Into<String>, system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        GenerationRequest {
            task_id: task_id.into(),
            system_text: system_text.into(),
            user_text: user_text.into(),
            frames: Vec::new(),
            subtitles: None,
        }
    }

    /// The user text as the model sees it, with subtitles appended.
    pub fn user_text_with_subtitles(&self) -> String {
        match &self.subtitles {
            Some(subs) => format!("{}\n\nSUBTITLES:\n{}", self.user_text, subs),
            None => self.user_text.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationResponse {
    pub text: String,
    pub retry_count: u32,
}

enum Attempt {
    Ok(String),
    Timeout,
    RateLimited,
    Unavailable(String),
    Fatal(GatewayError),
}

/// A pool entry: descriptor plus per-backend runtime state.
#[derive(Debug)]
pub struct Backend {
    pub descriptor: BackendDescriptor,
    limiter: Option<RateLimiter>,
    client: Option<reqwest::Client>,
}

impl Backend {
    pub fn new(descriptor: BackendDescriptor) -> Result<Self, GatewayError> {
        descriptor.validate()?;
        let limiter = descriptor
            .requests_per_minute
            .map(|cap| RateLimiter::per_minute(cap));
        let client = match descriptor.kind {
            BackendKind::HttpChat => Some(
                reqwest::Client::builder()
                    .timeout(Duration::from_secs(descriptor.timeout_s))
                    .build()
                    .expect("default TLS backend available"),
            ),
            _ => None,
        };
        Ok(Backend {
            descriptor,
            limiter,
            client,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.descriptor.model_id
    }

    /// Runs one generation with rate limiting and retry. Timeouts, 429s, and
    /// 5xx-class failures retry with jittered exponential backoff; anything
    /// else fails immediately.
    pub async fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        let mut retries = 0u32;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire().await;
            }
            let outcome = match self.descriptor.kind {
                BackendKind::Echo => Attempt::Ok(req.user_text_with_subtitles()),
                BackendKind::Scripted => {
                    if self.descriptor.script_latency_ms > 0 {
                        tokio::time::sleep(Duration::from_millis(self.descriptor.script_latency_ms)).await;
                    }
                    let script = self.descriptor.script.as_ref().expect("validated at pool build");
                    Attempt::Ok(script.respond(&self.descriptor.model_id, req))
                }
                BackendKind::HttpChat => {
                    http::attempt(
                        self.client.as_ref().expect("validated at pool build"),
                        &self.descriptor,
                        req,
                    )
                    .await
                }
            };
            match outcome {
                Attempt::Ok(text) => {
                    return Ok(GenerationResponse {
                        text,
                        retry_count: retries,
                    })
                }
                Attempt::Fatal(err) => return Err(err),
                Attempt::Timeout if retries >= self.descriptor.max_retries => {
                    return Err(GatewayError::Timeout {
                        task_id: req.task_id.clone(),
                        model_id: self.descriptor.model_id.clone(),
                    })
                }
                Attempt::RateLimited if retries >= self.descriptor.max_retries => {
                    return Err(GatewayError::RateLimited {
                        task_id: req.task_id.clone(),
                        model_id: self.descriptor.model_id.clone(),
                        retries,
                    })
                }
                Attempt::Unavailable(detail) if retries >= self.descriptor.max_retries => {
                    return Err(GatewayError::BackendUnavailable {
                        task_id: req.task_id.clone(),
                        model_id: self.descriptor.model_id.clone(),
                        detail,
                    })
                }
                Attempt::Timeout | Attempt::RateLimited | Attempt::Unavailable(_) => {
                    tokio::time::sleep(backoff_delay(self.descriptor.backoff_base_ms, retries)).await;
                    retries += 1;
                }
            }
        }
    }
}

/// Jittered exponential backoff: doubles per retry from the base, capped at
/// 60 s, then drawn uniformly from the upper half of that ceiling.
fn backoff_delay(base_ms: u64, retry: u32) -> Duration {
    const CAP_MS: u64 = 60_000;
    let exp = base_ms.saturating_mul(1u64 << retry.min(16)).min(CAP_MS);
    let jittered = rand::thread_rng().gen_range(exp / 2..=exp.max(1));
    Duration::from_millis(jittered)
}

/// The set of models available to a run, keyed by model id.
#[derive(Debug)]
pub struct ModelPool {
    backends: BTreeMap<ModelId, Arc<Backend>>,
}

impl ModelPool {
    pub fn new(descriptors: Vec<BackendDescriptor>) -> Result<Self, GatewayError> {
        let mut backends = BTreeMap::new();
        for descriptor in descriptors {
            let id = descriptor.model_id.clone();
            if backends.contains_key(&id) {
                return Err(GatewayError::DuplicateModelId(id));
            }
            backends.insert(id, Arc::new(Backend::new(descriptor)?));
        }
        Ok(ModelPool { backends })
    }

    pub fn get(&self, model_id: &str) -> Result<Arc<Backend>, GatewayError> {
        self.backends
            .get(model_id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownModel(model_id.to_string()))
    }

    pub fn model_ids(&self) -> Vec<ModelId> {
        self.backends.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.backends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backends.is_empty()
    }

    /// Sends a one-token probe to every backend and reports per-model results.
    pub async fn probe(&self) -> BTreeMap<ModelId, Result<(), GatewayError>> {
        let mut results = BTreeMap::new();
        for (id, backend) in &self.backends {
            let req = GenerationRequest::text_only("probe", "You are a readiness probe.", "Reply with OK.");
            let outcome = backend.generate(&req).await.map(|_| ());
            results.insert(id.clone(), outcome);
        }
        results
    }
}
