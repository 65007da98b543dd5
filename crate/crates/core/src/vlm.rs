//! Vision-language model requests and clients.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_ENDPOINT: &str = "MOTIONPLAN_VLM_ENDPOINT";
pub const ENV_TOKEN: &str = "MOTIONPLAN_VLM_TOKEN";
pub const ENV_MODEL: &str = "MOTIONPLAN_VLM_MODEL";
pub const ENV_TIMEOUT_SECS: &str = "MOTIONPLAN_VLM_TIMEOUT_SECS";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("upstream returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("client not configured: {0}")]
    Unconfigured(String),
    #[error("scripted client has no replies left")]
    Exhausted,
    #[error("bad upstream payload: {0}")]
    Payload(String),
}

impl ClientError {
    /// Whether repeating the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

/// A labelled media attachment: one frame for an image, several for a video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attachment {
    pub label: String,
    pub frames_png: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VlmRequest {
    pub instruction: String,
    pub overlay_png: Vec<u8>,
    /// One line per track of normalized `(x, y)` pairs.
    pub coordinate_text: String,
    pub user_prompt: Option<String>,
    /// PNG frames of the previous generation; present from the second round on.
    pub prior_video: Option<Vec<Vec<u8>>>,
    pub attachments: Vec<Attachment>,
}

#[derive(Serialize, Deserialize)]
struct WireAttachment {
    label: String,
    frames_png_base64: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct WireRequest {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    instruction: String,
    coordinate_text: String,
    user_prompt: Option<String>,
    overlay_png_base64: String,
    prior_video_png_base64: Option<Vec<String>>,
    attachments: Vec<WireAttachment>,
}

fn encode_all(frames: &[Vec<u8>]) -> Vec<String> {
    frames.iter().map(|f| BASE64.encode(f)).collect()
}

fn decode_all(frames: &[String]) -> Result<Vec<Vec<u8>>, ClientError> {
    frames
        .iter()
        .map(|f| {
            BASE64
                .decode(f)
                .map_err(|e| ClientError::Payload(e.to_string()))
        })
        .collect()
}

impl VlmRequest {
    /// JSON body posted to the model endpoint; images are base64 PNG.
    pub fn to_wire_json(&self, model: Option<&str>) -> Vec<u8> {
        let wire = WireRequest {
            model: model.map(str::to_string),
            instruction: self.instruction.clone(),
            coordinate_text: self.coordinate_text.clone(),
            user_prompt: self.user_prompt.clone(),
            overlay_png_base64: BASE64.encode(&self.overlay_png),
            prior_video_png_base64: self.prior_video.as_deref().map(encode_all),
            attachments: self
                .attachments
                .iter()
                .map(|a| WireAttachment {
                    label: a.label.clone(),
                    frames_png_base64: encode_all(&a.frames_png),
                })
                .collect(),
        };
        serde_json::to_vec(&wire).expect("request serializes")
    }

    pub fn from_wire_json(bytes: &[u8]) -> Result<Self, ClientError> {
        let w: WireRequest =
            serde_json::from_slice(bytes).map_err(|e| ClientError::Payload(e.to_string()))?;
        Ok(VlmRequest {
            instruction: w.instruction,
            overlay_png: BASE64
                .decode(&w.overlay_png_base64)
                .map_err(|e| ClientError::Payload(e.to_string()))?,
            coordinate_text: w.coordinate_text,
            user_prompt: w.user_prompt,
            prior_video: w
                .prior_video_png_base64
                .as_deref()
                .map(decode_all)
                .transpose()?,
            attachments: w
                .attachments
                .iter()
                .map(|a| {
                    Ok(Attachment {
                        label: a.label.clone(),
                        frames_png: decode_all(&a.frames_png_base64)?,
                    })
                })
                .collect::<Result<_, ClientError>>()?,
        })
    }
}

pub trait VlmClient: Send + Sync {
    /// Sends one request and returns the model's raw reply text.
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpVlmConfig {
    pub endpoint: String,
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

impl HttpVlmConfig {
    /// Reads the endpoint, token, model and timeout from the environment.
    pub fn from_env() -> Result<Self, ClientError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| ClientError::Unconfigured(format!("{ENV_ENDPOINT} is not set")))?;
        Ok(HttpVlmConfig {
            endpoint,
            token: std::env::var(ENV_TOKEN).ok(),
            model: std::env::var(ENV_MODEL).ok(),
            timeout_secs: std::env::var(ENV_TIMEOUT_SECS)
                .ok()
                .and_then(|v| v.parse().ok())
                .unwrap_or_else(default_timeout_secs),
        })
    }
}

/// Posts [`VlmRequest::to_wire_json`] and accepts either `{"reply": "..."}`
/// or a plain-text body.
pub struct HttpVlmClient {
    config: HttpVlmConfig,
    http: reqwest::blocking::Client,
}

impl HttpVlmClient {
    pub fn new(config: HttpVlmConfig) -> Result<Self, ClientError> {
        if config.endpoint.is_empty() {
            return Err(ClientError::Unconfigured("empty VLM endpoint".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(HttpVlmClient { config, http })
    }
}

#[derive(Deserialize)]
struct WireReply {
    reply: String,
}

impl VlmClient for HttpVlmClient {
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError> {
        let mut req = self
            .http
            .post(&self.config.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(request.to_wire_json(self.config.model.as_deref()));
        if let Some(token) = &self.config.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body,
            });
        }
        Ok(serde_json::from_str::<WireReply>(&body).map_or(body, |r| r.reply))
    }
}

/// Replays canned replies in order and records every request it receives.
#[derive(Default)]
pub struct ScriptedVlmClient {
    replies: Mutex<VecDeque<String>>,
    seen: Mutex<Vec<VlmRequest>>,
}

impl ScriptedVlmClient {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedVlmClient {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    /// A directory yields one reply per file in file-name order; a file is a
    /// single reply.
    pub fn from_path(path: &Path) -> std::io::Result<Self> {
        if path.is_dir() {
            let mut files: Vec<_> = fs::read_dir(path)?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            let replies = files
                .iter()
                .map(fs::read_to_string)
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ScriptedVlmClient::new(replies))
        } else {
            Ok(ScriptedVlmClient::new([fs::read_to_string(path)?]))
        }
    }

    pub fn requests(&self) -> Vec<VlmRequest> {
        self.seen.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }
}

impl VlmClient for ScriptedVlmClient {
    fn complete(&self, request: &VlmRequest) -> Result<String, ClientError> {
        self.seen.lock().unwrap().push(request.clone());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .ok_or(ClientError::Exhausted)
    }
}

/// The first balanced `{...}` object in `raw`, tolerating code fences and
/// surrounding prose.
pub fn extract_json_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in raw[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}
