use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::embed::embed_text_builtin;
use crate::error::{Error, Result};
use crate::model::{check_finite, Modality};

pub const DEFAULT_PROVIDER_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    BuiltinTextHash,
    RemoteHttp,
}

/// Maps a text, image or video payload to a vector.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> ProviderKind;
    /// Embeds `payload`, returning exactly `dim` finite values.
    fn embed(&self, modality: Modality, payload: &str, dim: usize) -> Result<Vec<f32>>;
}

/// The offline trigram-hash text embedder.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinTextProvider;

impl EmbeddingProvider for BuiltinTextProvider {
    fn name(&self) -> &str {
        "builtin"
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::BuiltinTextHash
    }

    fn embed(&self, modality: Modality, payload: &str, dim: usize) -> Result<Vec<f32>> {
        if modality != Modality::Text {
            return Err(Error::Unsupported(format!(
                "builtin provider embeds text only, not {modality}"
            )));
        }
        embed_text_builtin(payload, dim)
    }
}

/// An HTTP inference endpoint speaking
/// `POST {base}/embed {"modality","payload"} → {"vector":[...]}`.
///
/// Calls block; async callers should run them on a blocking thread.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    name: String,
    base_url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    modality: Modality,
    payload: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    /// `null` marks a non-finite entry (see [`nonfinite_to_null`]).
    vector: Vec<Option<f64>>,
}

impl RemoteProvider {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::ProviderUnavailable(e.to_string()))?;
        Ok(RemoteProvider {
            name: name.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::RemoteHttp
    }

    fn embed(&self, modality: Modality, payload: &str, dim: usize) -> Result<Vec<f32>> {
        if payload.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let url = format!("{}/embed", self.base_url);
        let resp = self
            .client
            .post(&url)
            .json(&EmbedRequest { modality, payload })
            .send()
            .map_err(transport_error)?;
        let status = resp.status();
        let body = resp.bytes().map_err(transport_error)?;
        if !status.is_success() {
            return Err(Error::ProviderError {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&body).into_owned(),
            });
        }
        let parsed: EmbedResponse = serde_json::from_slice(&body)
            .or_else(|_| serde_json::from_slice(&nonfinite_to_null(&body)))
            .map_err(|e| Error::malformed("provider response", e.to_string()))?;
        if parsed.vector.len() != dim {
            return Err(Error::DimMismatch {
                row: 0,
                expected: dim,
                actual: parsed.vector.len(),
            });
        }
        if let Some(col) = parsed.vector.iter().position(Option::is_none) {
            return Err(Error::NonFinite { row: 0, col });
        }
        // Values beyond f32 range become infinite and are caught here.
        let v: Vec<f32> = parsed.vector.iter().map(|x| x.unwrap_or(0.0) as f32).collect();
        check_finite(&v, dim, 0)?;
        Ok(v)
    }
}

fn transport_error(e: reqwest::Error) -> Error {
    if e.is_timeout() {
        Error::ProviderTimeout
    } else {
        Error::ProviderUnavailable(e.to_string())
    }
}

/// Many serializers emit bare `NaN` / `Infinity` tokens, which are not JSON.
/// Rewrites them (outside strings) to `null` so they surface as
/// [`Error::NonFinite`] rather than a parse failure.
fn nonfinite_to_null(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len());
    let mut in_str = false;
    let mut i = 0;
    while i < body.len() {
        let b = body[i];
        if in_str {
            out.push(b);
            if b == b'\\' && i + 1 < body.len() {
                out.push(body[i + 1]);
                i += 1;
            } else if b == b'"' {
                in_str = false;
            }
            i += 1;
            continue;
        }
        let rest = &body[i..];
        if let Some(tok) = [&b"-Infinity"[..], b"Infinity", b"NaN"]
            .into_iter()
            .find(|t| rest.starts_with(t))
        {
            out.extend_from_slice(b"null");
            i += tok.len();
            continue;
        }
        if b == b'"' {
            in_str = true;
        }
        out.push(b);
        i += 1;
    }
    out
}
