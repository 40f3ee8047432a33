//! JSON-over-HTTP clients for external embedders and generators.
//!
//! Both protocols carry `"v": 1`. Embedding payloads are base64 of
//! little-endian f32, row-major.

use std::fs;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::embedder::{
    check_shape, Capabilities, EmbedderProvider, PageInput, ProviderIdentity,
};
use crate::pipeline::generator::{AnswerGenerator, GenerationRequest, GeneratorIdentity};
use crate::types::MultiVecEmbedding;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    Base64,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedKind {
    Page,
    Query,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub v: u32,
    pub kind: EmbedKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_kind: Option<ImageKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub v: u32,
    pub rows: usize,
    pub dim: usize,
    pub data: String,
}

impl EmbedResponse {
    pub fn encode(emb: &MultiVecEmbedding) -> Self {
        let bytes: Vec<u8> = emb.data().iter().flat_map(|x| x.to_le_bytes()).collect();
        Self {
            v: PROTOCOL_VERSION,
            rows: emb.rows(),
            dim: emb.dim(),
            data: B64.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<MultiVecEmbedding> {
        check_version(self.v)?;
        let bytes = B64
            .decode(&self.data)
            .map_err(|e| Error::Protocol(format!("embedding payload: {e}")))?;
        let expected = self
            .rows
            .checked_mul(self.dim)
            .and_then(|n| n.checked_mul(4));
        if expected != Some(bytes.len()) {
            return Err(Error::Protocol(format!(
                "embedding payload has {} bytes, rows={} dim={} needs {}",
                bytes.len(),
                self.rows,
                self.dim,
                self.rows * self.dim * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        MultiVecEmbedding::new(self.rows, self.dim, data)
            .map_err(|e| Error::Protocol(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePage {
    pub page_id: String,
    pub image: String,
    pub image_kind: ImageKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub v: u32,
    pub question: String,
    pub pages: Vec<WirePage>,
    pub max_new_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    #[serde(default = "default_version")]
    pub v: u32,
    pub answer: String,
    pub model: String,
}

fn default_version() -> u32 {
    PROTOCOL_VERSION
}

fn check_version(v: u32) -> Result<()> {
    if v != PROTOCOL_VERSION {
        return Err(Error::Protocol(format!(
            "protocol version {v}, expected {PROTOCOL_VERSION}"
        )));
    }
    Ok(())
}

/// Caps concurrent requests against one endpoint.
#[derive(Debug)]
pub struct InFlightLimit {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightPermit<'a>(&'a InFlightLimit);

impl InFlightLimit {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        InFlightPermit(self)
    }
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpOptions {
    /// Send local file paths instead of base64 image bytes.
    pub send_paths: bool,
    pub max_in_flight: usize,
    pub timeout_secs: f64,
}

impl Default for HttpOptions {
    fn default() -> Self {
        Self {
            send_paths: false,
            max_in_flight: 1,
            timeout_secs: 120.0,
        }
    }
}

struct Client {
    url: String,
    agent: ureq::Agent,
    gate: InFlightLimit,
    opts: HttpOptions,
}

impl Client {
    fn new(url: &str, opts: HttpOptions) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(opts.timeout_secs))
            .build();
        Self {
            url: url.to_string(),
            agent,
            gate: InFlightLimit::new(opts.max_in_flight),
            opts,
        }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp> {
        let _permit = self.gate.acquire();
        match self.agent.post(&self.url).send_json(body) {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| Error::Protocol(format!("{}: bad response body: {e}", self.url))),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let msg = format!("{}: HTTP {code}: {}", self.url, text.trim());
                if code >= 500 {
                    Err(Error::Transport(msg))
                } else {
                    Err(Error::Protocol(msg))
                }
            }
            Err(e) => Err(Error::Transport(format!("{}: {e}", self.url))),
        }
    }

    fn image(&self, path: &Path) -> Result<(String, ImageKind)> {
        if self.opts.send_paths {
            return Ok((path.to_string_lossy().into_owned(), ImageKind::Path));
        }
        let bytes = fs::read(path).map_err(|e| Error::PageArtifact {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok((B64.encode(bytes), ImageKind::Base64))
    }
}

/// Embedder served over HTTP. Capabilities are declared by the caller and
/// every response is checked against them.
pub struct HttpEmbedder {
    client: Client,
    identity: ProviderIdentity,
    caps: Capabilities,
}

impl HttpEmbedder {
    pub fn new(url: &str, caps: Capabilities, opts: HttpOptions) -> Self {
        Self {
            client: Client::new(url, opts),
            identity: ProviderIdentity::new(format!("http:{url}"), "v1"),
            caps,
        }
    }

    pub fn with_identity(mut self, identity: ProviderIdentity) -> Self {
        self.identity = identity;
        self
    }
}

impl EmbedderProvider for HttpEmbedder {
    fn identity(&self) -> ProviderIdentity {
        self.identity.clone()
    }

    fn capabilities(&self) -> Capabilities {
        self.caps
    }

    fn embed_page(&self, page: &PageInput) -> Result<MultiVecEmbedding> {
        let (image, kind) = self.client.image(&page.image_path)?;
        let req = EmbedRequest {
            v: PROTOCOL_VERSION,
            kind: EmbedKind::Page,
            image: Some(image),
            image_kind: Some(kind),
            text: None,
        };
        let emb = self.client.post::<_, EmbedResponse>(&req)?.decode()?;
        check_shape(&emb, self.caps, Some(self.caps.tokens_per_page))?;
        Ok(emb)
    }

    fn embed_query(&self, text: &str) -> Result<MultiVecEmbedding> {
        let req = EmbedRequest {
            v: PROTOCOL_VERSION,
            kind: EmbedKind::Query,
            image: None,
            image_kind: None,
            text: Some(text.to_string()),
        };
        let emb = self.client.post::<_, EmbedResponse>(&req)?.decode()?;
        check_shape(&emb, self.caps, None)?;
        Ok(emb)
    }
}

/// Generator served over HTTP.
pub struct HttpGenerator {
    client: Client,
    max_pages: usize,
    identity: GeneratorIdentity,
}

impl HttpGenerator {
    pub fn new(url: &str, max_pages: usize, opts: HttpOptions) -> Self {
        Self {
            client: Client::new(url, opts),
            max_pages,
            identity: GeneratorIdentity::new(format!("http:{url}"), "v1"),
        }
    }

    pub fn wire_request(&self, request: &GenerationRequest) -> Result<GenerateRequest> {
        let pages = request
            .pages
            .iter()
            .map(|p| {
                let (image, image_kind) = self.client.image(&p.image_path)?;
                Ok(WirePage {
                    page_id: format!("{}#{}", p.page.doc, p.page.page_index),
                    image,
                    image_kind,
                })
            })
            .collect::<Result<_>>()?;
        Ok(GenerateRequest {
            v: PROTOCOL_VERSION,
            question: request.question.clone(),
            pages,
            max_new_tokens: request.max_new_tokens,
        })
    }
}

impl AnswerGenerator for HttpGenerator {
    fn identity(&self) -> GeneratorIdentity {
        self.identity.clone()
    }

    fn max_pages(&self) -> usize {
        self.max_pages
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let wire = self.wire_request(request)?;
        let resp: GenerateResponse = self.client.post(&wire)?;
        check_version(resp.v)?;
        Ok(resp.answer)
    }
}
