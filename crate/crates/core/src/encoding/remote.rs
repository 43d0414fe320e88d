//! Blocking HTTP client for the transformer encoding service.
//!
//! Wire protocol (JSON, UTF-8, arrays row-major):
//!
//! * `POST /v1/encode-pair` `{text_a, text_b, max_tokens}` →
//!   `{dim, cls, tokens_a, tokens_b, truncated_a, truncated_b, model_id}`
//! * `POST /v1/encode-single` `{text, max_tokens}` →
//!   `{dim, summary, tokens, model_id}`

use std::sync::OnceLock;
use std::time::Duration;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{
    Backend, EncoderConfig, EncoderFingerprint, EncodingError, PairEncoding, SingleEncoding,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodePairRequest {
    pub text_a: String,
    pub text_b: String,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodePairResponse {
    pub dim: usize,
    pub cls: Vec<f64>,
    pub tokens_a: Vec<Vec<f64>>,
    pub tokens_b: Vec<Vec<f64>>,
    pub truncated_a: bool,
    pub truncated_b: bool,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeSingleRequest {
    pub text: String,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeSingleResponse {
    pub dim: usize,
    pub summary: Vec<f64>,
    pub tokens: Vec<Vec<f64>>,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_id: String,
    pub dim: usize,
}

pub struct RemoteEncoder {
    config: EncoderConfig,
    base_url: String,
    agent: Agent,
    /// Learned from the first successful response.
    model_id: OnceLock<String>,
}

impl RemoteEncoder {
    pub fn new(config: EncoderConfig) -> Result<Self, EncodingError> {
        config.validate()?;
        let base_url = config
            .remote_url
            .clone()
            .ok_or_else(|| EncodingError::Config("remote backend needs remote_url".into()))?
            .trim_end_matches('/')
            .to_string();
        let agent = Agent::new_with_config(
            Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
                .http_status_as_error(false)
                .build(),
        );
        Ok(Self {
            config,
            base_url,
            agent,
            model_id: OnceLock::new(),
        })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, EncodingError> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body) {
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(100 << attempt));
                }
                other => return other,
            }
        }
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, EncodingError> {
        let url = format!("{}{}", self.base_url, path);
        let mut response = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| EncodingError::Unreachable {
                url: url.clone(),
                message: e.to_string(),
            })?;
        let status = response.status().as_u16();
        if status != 200 {
            let message = response
                .body_mut()
                .read_to_string()
                .unwrap_or_else(|e| e.to_string());
            return Err(EncodingError::Service { status, message });
        }
        response
            .body_mut()
            .read_json()
            .map_err(|e| EncodingError::Protocol(e.to_string()))
    }

    /// `GET /v1/health`; records the served model id.
    pub fn health(&self) -> Result<HealthResponse, EncodingError> {
        let url = format!("{}/v1/health", self.base_url);
        let mut response = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| EncodingError::Unreachable {
                url: url.clone(),
                message: e.to_string(),
            })?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(EncodingError::Service {
                status,
                message: response.body_mut().read_to_string().unwrap_or_default(),
            });
        }
        let health: HealthResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| EncodingError::Protocol(e.to_string()))?;
        self.check_dim(health.dim)?;
        self.remember_model(&health.model_id)?;
        Ok(health)
    }

    fn check_dim(&self, dim: usize) -> Result<(), EncodingError> {
        if dim != self.config.dim {
            return Err(EncodingError::DimensionMismatch {
                expected: self.config.dim,
                got: dim,
            });
        }
        Ok(())
    }

    fn remember_model(&self, model_id: &str) -> Result<(), EncodingError> {
        let known = self.model_id.get_or_init(|| model_id.to_string());
        if known != model_id {
            return Err(EncodingError::Protocol(format!(
                "model changed from `{known}` to `{model_id}` mid-run"
            )));
        }
        Ok(())
    }

    fn vector(&self, v: Vec<f64>, what: &str) -> Result<Array1<f64>, EncodingError> {
        if v.len() != self.config.dim {
            return Err(EncodingError::DimensionMismatch {
                expected: self.config.dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EncodingError::Protocol(format!("non-finite value in {what}")));
        }
        Ok(Array1::from(v))
    }

    fn matrix(&self, rows: Vec<Vec<f64>>, what: &str) -> Result<Array2<f64>, EncodingError> {
        if rows.is_empty() {
            return Err(EncodingError::Protocol(format!("{what} has no token rows")));
        }
        if rows.len() > self.config.per_record_budget {
            return Err(EncodingError::Protocol(format!(
                "{what} has {} rows, budget is {}",
                rows.len(),
                self.config.per_record_budget
            )));
        }
        let n = rows.len();
        let mut flat = Vec::with_capacity(n * self.config.dim);
        for row in rows {
            flat.extend(self.vector(row, what)?.iter());
        }
        Ok(Array2::from_shape_vec((n, self.config.dim), flat).expect("shape checked"))
    }
}

fn require_text(text: &str) -> Result<(), EncodingError> {
    if text.split_whitespace().next().is_none() {
        return Err(EncodingError::EmptyText);
    }
    Ok(())
}

impl super::Encoder for RemoteEncoder {
    fn fingerprint(&self) -> EncoderFingerprint {
        let model_id = match self.model_id.get() {
            Some(id) => id.clone(),
            None => self
                .health()
                .map(|h| h.model_id)
                .unwrap_or_else(|_| "unknown".to_string()),
        };
        EncoderFingerprint {
            backend: Backend::Remote,
            dim: self.config.dim,
            model_id,
        }
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn encode_pair_text(&self, a: &str, b: &str) -> Result<PairEncoding, EncodingError> {
        require_text(a)?;
        require_text(b)?;
        let resp: EncodePairResponse = self.post(
            "/v1/encode-pair",
            &EncodePairRequest {
                text_a: a.to_string(),
                text_b: b.to_string(),
                max_tokens: self.config.max_tokens,
            },
        )?;
        self.check_dim(resp.dim)?;
        self.remember_model(&resp.model_id)?;
        Ok(PairEncoding {
            cls_vector: self.vector(resp.cls, "cls")?,
            tokens_a: self.matrix(resp.tokens_a, "tokens_a")?,
            tokens_b: self.matrix(resp.tokens_b, "tokens_b")?,
            truncated_a: resp.truncated_a,
            truncated_b: resp.truncated_b,
        })
    }

    fn encode_single_text(&self, text: &str) -> Result<SingleEncoding, EncodingError> {
        require_text(text)?;
        let resp: EncodeSingleResponse = self.post(
            "/v1/encode-single",
            &EncodeSingleRequest {
                text: text.to_string(),
                max_tokens: self.config.max_tokens,
            },
        )?;
        self.check_dim(resp.dim)?;
        self.remember_model(&resp.model_id)?;
        Ok(SingleEncoding {
            summary_vector: self.vector(resp.summary, "summary")?,
            tokens: self.matrix(resp.tokens, "tokens")?,
        })
    }
}
