//! HTTP embedding provider client.
//!
//! Request body: `{"model": "...", "mode": "query"|"document"|"symmetric",
//! "texts": [...]}`. Response body: `{"dim": n, "embeddings": [[...], ...]}`
//! with one row per text, in order. Connection failures and statuses >= 500
//! are retried with exponential backoff; any other non-2xx status fails
//! immediately.

use std::marker::PhantomData;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    EmbedError, EmbedInput, EmbeddingBackend, Result, Role, RoleAssignment, SentenceEmbedding, Side,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal blocking POST used by the provider client.
pub trait Transport: Send + Sync {
    /// `Err` means no HTTP response was received at all.
    fn post_json(
        &self,
        url: &str,
        body: String,
        bearer: Option<&str>,
    ) -> std::result::Result<HttpResponse, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> std::result::Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        body: String,
        bearer: Option<&str>,
    ) -> std::result::Result<HttpResponse, String> {
        let mut req = self
            .client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Provider honors distinct query/document modes.
    pub asymmetric: bool,
    /// Expected vector length; checked against every response when set.
    pub dim: Option<usize>,
    pub batch_size: usize,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub max_in_flight: usize,
}

impl ProviderConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: None,
            asymmetric: false,
            dim: None,
            batch_size: 32,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            max_in_flight: 4,
        }
    }

    fn wire_mode(&self, role: Role) -> Role {
        if self.asymmetric {
            role
        } else {
            Role::Symmetric
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    mode: Role,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    embeddings: Vec<Vec<f64>>,
}

fn backoff_delay(config: &ProviderConfig, attempt: u32) -> Duration {
    let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
    config
        .initial_backoff
        .saturating_mul(factor)
        .min(config.max_backoff)
}

fn post_with_retry(
    texts: &[&str],
    mode: Role,
    config: &ProviderConfig,
    transport: &dyn Transport,
) -> Result<EmbedResponse> {
    let body = serde_json::to_string(&EmbedRequest {
        model: &config.model,
        mode,
        texts,
    })
    .expect("request serializes");
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        let (status, message) =
            match transport.post_json(&config.url, body.clone(), config.api_key.as_deref()) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return serde_json::from_str(&resp.body).map_err(|e| {
                        EmbedError::Contract(format!("unreadable response body: {e}"))
                    });
                }
                Ok(resp) if resp.status < 500 => {
                    return Err(EmbedError::Transport {
                        status: Some(resp.status),
                        attempts: attempt,
                        message: resp.body,
                    });
                }
                Ok(resp) => (Some(resp.status), resp.body),
                Err(message) => (None, message),
            };
        if attempt > config.max_retries {
            return Err(EmbedError::Transport {
                status,
                attempts: attempt,
                message,
            });
        }
        let delay = backoff_delay(config, attempt - 1);
        log::warn!(
            "embedding request failed (attempt {attempt}, status {status:?}): {message}; retrying in {delay:?}"
        );
        std::thread::sleep(delay);
    }
}

fn check_response(
    resp: &EmbedResponse,
    expected_rows: usize,
    config: &ProviderConfig,
) -> Result<()> {
    if let Some(dim) = config.dim {
        if resp.dim != dim {
            return Err(EmbedError::Contract(format!(
                "provider reports dim {}, configured dim is {dim}",
                resp.dim
            )));
        }
    }
    if resp.embeddings.len() != expected_rows {
        return Err(EmbedError::Contract(format!(
            "sent {expected_rows} texts, received {} embeddings",
            resp.embeddings.len()
        )));
    }
    if let Some((i, row)) = resp
        .embeddings
        .iter()
        .enumerate()
        .find(|(_, row)| row.len() != resp.dim)
    {
        return Err(EmbedError::Contract(format!(
            "embedding {i} has {} values, declared dim is {}",
            row.len(),
            resp.dim
        )));
    }
    Ok(())
}

/// Embeds `texts` through the provider, one embedding per text in input
/// order. Batches of `batch_size` are sent with at most `max_in_flight`
/// requests outstanding.
pub fn embed_external<S: Scalar>(
    texts: &[&str],
    role: Role,
    config: &ProviderConfig,
    transport: &dyn Transport,
    backend_id: Arc<str>,
) -> Result<Vec<SentenceEmbedding<S>>> {
    if config.batch_size == 0 || config.max_in_flight == 0 {
        return Err(EmbedError::Parameter(
            "batch_size and max_in_flight must be positive".into(),
        ));
    }
    let mode = config.wire_mode(role);
    let batches: Vec<&[&str]> = texts.chunks(config.batch_size).collect();
    let mut responses: Vec<EmbedResponse> = Vec::with_capacity(batches.len());
    for wave in batches.chunks(config.max_in_flight) {
        let results: Vec<Result<EmbedResponse>> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| scope.spawn(move || post_with_retry(batch, mode, config, transport)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("provider worker panicked"))
                .collect()
        });
        for (batch, resp) in wave.iter().zip(results) {
            let resp = resp?;
            check_response(&resp, batch.len(), config)?;
            responses.push(resp);
        }
    }
    let mut dim: Option<usize> = None;
    let mut out = Vec::with_capacity(texts.len());
    for resp in responses {
        if *dim.get_or_insert(resp.dim) != resp.dim {
            return Err(EmbedError::Contract(format!(
                "dimension changed between batches: {} then {}",
                dim.unwrap(),
                resp.dim
            )));
        }
        for row in resp.embeddings {
            let vector = row.into_iter().map(S::from_f64_lossy).collect();
            let emb = SentenceEmbedding::new(vector, backend_id.clone(), mode)
                .ok_or_else(|| EmbedError::Contract("non-finite embedding component".into()))?;
            out.push(emb);
        }
    }
    Ok(out)
}

/// Embedding server reached over HTTP.
pub struct ExternalBackend<S> {
    id: Arc<str>,
    config: ProviderConfig,
    roles: RoleAssignment,
    transport: Box<dyn Transport>,
    _scalar: PhantomData<fn() -> S>,
}

impl<S: Scalar> ExternalBackend<S> {
    pub fn new(
        config: ProviderConfig,
        roles: RoleAssignment,
        transport: Box<dyn Transport>,
    ) -> Self {
        let roles = if config.asymmetric {
            roles
        } else {
            RoleAssignment::SYMMETRIC
        };
        Self {
            id: Arc::from(format!("external:{}", config.model)),
            config,
            roles,
            transport,
            _scalar: PhantomData,
        }
    }
}

impl<S: Scalar> EmbeddingBackend<S> for ExternalBackend<S> {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> Option<usize> {
        self.config.dim
    }

    fn supports_asymmetric(&self) -> bool {
        self.config.asymmetric
    }

    fn embed(&self, inputs: &[EmbedInput<'_>], side: Side) -> Result<Vec<SentenceEmbedding<S>>> {
        let texts: Vec<&str> = inputs.iter().map(|i| i.text).collect();
        embed_external(
            &texts,
            self.roles.role(side),
            &self.config,
            self.transport.as_ref(),
            self.id.clone(),
        )
    }
}
