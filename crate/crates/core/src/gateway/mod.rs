//! Client side of the model services: generator, teachers, utility scorer,
//! embedder and paraphraser.
//!
//! Every call goes through [`Gateway`], which canonicalizes the request,
//! consults the response cache, forwards misses to the role's [`Transport`]
//! and validates the response before caching it. Transports are either the
//! HTTP client or in-process backends (the mocks here, the simulator).

pub mod cache;
pub mod http;
pub mod mock;
pub mod prompts;
pub mod protocol;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use serde_json::{json, Value};
use thiserror::Error;

use crate::certainty::HardLabel;
use crate::embed::EmbeddingVector;
pub use cache::{DiskCache, MemoryCache, ResponseCache};
pub use http::{HttpTransport, InFlightLimiter, ServiceEndpoints};
pub use protocol::{cache_key, canonical_json, Endpoint, Role};

/// Default sampling temperature for generation requests.
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("transport error on {endpoint}: {message}")]
    Transport { endpoint: Endpoint, message: String },
    #[error("protocol error on {endpoint}: {message}")]
    Protocol { endpoint: Endpoint, message: String },
    #[error("cache error: {0}")]
    Cache(String),
    #[error("no service configured for role {0}")]
    Unconfigured(Role),
    #[error("invalid request: {0}")]
    Request(String),
}

/// Moves one JSON request to a service and returns the JSON response.
pub trait Transport: Send + Sync {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError> {
        (**self).post(endpoint, body)
    }
}

/// Adapts a closure into a transport.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(Endpoint, &Value) -> Result<Value, GatewayError> + Send + Sync,
{
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError> {
        (self.0)(endpoint, body)
    }
}

#[derive(Default)]
pub struct GatewayBuilder {
    transports: BTreeMap<Role, Arc<dyn Transport>>,
    cache: Option<Arc<dyn ResponseCache>>,
}

impl GatewayBuilder {
    pub fn role(mut self, role: Role, transport: Arc<dyn Transport>) -> Self {
        self.transports.insert(role, transport);
        self
    }

    /// Uses `transport` for every role not set explicitly.
    pub fn all_roles(mut self, transport: Arc<dyn Transport>) -> Self {
        for role in Role::ALL {
            self.transports.entry(role).or_insert_with(|| transport.clone());
        }
        self
    }

    pub fn cache(mut self, cache: Arc<dyn ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            transports: self.transports,
            cache: self.cache,
            upstream: AtomicU64::new(0),
            embed_dim: OnceLock::new(),
        }
    }
}

pub struct Gateway {
    transports: BTreeMap<Role, Arc<dyn Transport>>,
    cache: Option<Arc<dyn ResponseCache>>,
    upstream: AtomicU64,
    embed_dim: OnceLock<usize>,
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder::default()
    }

    /// HTTP transports for every role with a configured URL.
    pub fn from_endpoints(
        endpoints: &ServiceEndpoints,
        cache: Option<Arc<dyn ResponseCache>>,
    ) -> Result<Self, GatewayError> {
        endpoints.validate().map_err(GatewayError::Request)?;
        let limiter = InFlightLimiter::new(endpoints.max_in_flight);
        let mut b = Gateway::builder();
        for role in Role::ALL {
            if let Some(url) = endpoints.url_for(role) {
                b = b.role(role, Arc::new(HttpTransport::new(url, endpoints, limiter.clone())));
            }
        }
        if let Some(c) = cache {
            b = b.cache(c);
        }
        Ok(b.build())
    }

    /// Number of requests forwarded to transports (cache misses).
    pub fn upstream_requests(&self) -> u64 {
        self.upstream.load(Ordering::Relaxed)
    }

    fn call<R>(
        &self,
        role: Role,
        request: Value,
        validate: impl Fn(&Value) -> Result<R, String>,
    ) -> Result<R, GatewayError> {
        let endpoint = role.endpoint();
        let protocol = |message: String| GatewayError::Protocol { endpoint, message };
        let key = self.cache.as_ref().map(|_| cache_key(role.cache_namespace(), &request));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key)? {
                return validate(&hit).map_err(protocol);
            }
        }
        let transport = self.transports.get(&role).ok_or(GatewayError::Unconfigured(role))?;
        self.upstream.fetch_add(1, Ordering::Relaxed);
        let response = transport.post(endpoint, &request)?;
        let out = validate(&response).map_err(protocol)?;
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            cache.put(key, &response)?;
        }
        Ok(out)
    }

    /// Up to `n` completions of `prompt`.
    pub fn complete(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<String>, GatewayError> {
        if n == 0 || temperature.is_nan() || temperature < 0.0 {
            return Err(GatewayError::Request(format!("complete: n={n}, temperature={temperature}")));
        }
        let completions =
            self.call(Role::Generator, json!({"prompt": prompt, "n": n, "temperature": temperature}), |v| {
                let arr = string_array(v, "completions")?;
                if arr.is_empty() {
                    return Err("empty completions".into());
                }
                Ok(arr)
            })?;
        if completions.len() < n {
            log::warn!("generator returned {} of {n} completions", completions.len());
        }
        Ok(completions)
    }

    /// Initial-teacher entailment probability of `hypothesis` given `premise`.
    pub fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, GatewayError> {
        self.entail_as(Role::InitialTeacher, premise, hypothesis)
    }

    /// Link-teacher score for a parent/child augmentation edge.
    pub fn entail_link(&self, parent: &str, child: &str) -> Result<f64, GatewayError> {
        self.entail_as(Role::LinkTeacher, parent, child)
    }

    fn entail_as(&self, role: Role, premise: &str, hypothesis: &str) -> Result<f64, GatewayError> {
        if premise.is_empty() || hypothesis.is_empty() {
            return Err(GatewayError::Request("entail: empty premise or hypothesis".into()));
        }
        self.call(role, json!({"premise": premise, "hypothesis": hypothesis}), |v| {
            let p = number(v, "probability")?;
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(format!("probability {p} outside [0, 1]"))
            }
        })
    }

    /// Cross-entropy of the model under adaptation on `(evidence, claim)` against `label`.
    pub fn utility(&self, evidence: &str, claim: &str, label: HardLabel) -> Result<f64, GatewayError> {
        self.call(Role::Utility, json!({"evidence": evidence, "claim": claim, "label": label.bit()}), |v| {
            let u = number(v, "cross_entropy")?;
            if u >= 0.0 && u.is_finite() {
                Ok(u)
            } else {
                Err(format!("cross_entropy {u} is negative or not finite"))
            }
        })
    }

    pub fn paraphrase(&self, text: &str, n: usize) -> Result<Vec<String>, GatewayError> {
        self.call(Role::Paraphraser, json!({"text": text, "n": n}), |v| string_array(v, "texts"))
    }

    /// Embeds each text; results are cached per text and misses are batched.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::Request("embed: empty text list".into()));
        }
        let endpoint = Endpoint::Embed;
        let protocol = |message: String| GatewayError::Protocol { endpoint, message };
        let ns = Role::Embedder.cache_namespace();
        let mut out: Vec<Option<EmbeddingVector<f64>>> = vec![None; texts.len()];
        let mut missing: Vec<&str> = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            if let Some(cache) = &self.cache {
                if let Some(hit) = cache.get(&cache_key(ns, &json!({"texts": [t]})))? {
                    let mut v = self.parse_vectors(&hit, 1).map_err(protocol)?;
                    out[i] = v.pop();
                    continue;
                }
            }
            if !missing.contains(t) {
                missing.push(t);
            }
        }
        if !missing.is_empty() {
            let transport = self.transports.get(&Role::Embedder).ok_or(GatewayError::Unconfigured(Role::Embedder))?;
            self.upstream.fetch_add(1, Ordering::Relaxed);
            let response = transport.post(endpoint, &json!({"texts": missing}))?;
            let vectors = self.parse_vectors(&response, missing.len()).map_err(protocol)?;
            let mut fresh: BTreeMap<&str, EmbeddingVector<f64>> = BTreeMap::new();
            for (t, v) in missing.iter().zip(vectors) {
                if let Some(cache) = &self.cache {
                    cache.put(&cache_key(ns, &json!({"texts": [t]})), &json!({"vectors": [v.values()]}))?;
                }
                fresh.insert(t, v);
            }
            for (i, t) in texts.iter().enumerate() {
                if out[i].is_none() {
                    out[i] = fresh.get(t).cloned();
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every text resolved")).collect())
    }

    fn parse_vectors(&self, v: &Value, expected: usize) -> Result<Vec<EmbeddingVector<f64>>, String> {
        let rows = v.get("vectors").and_then(Value::as_array).ok_or("missing `vectors` array")?;
        if rows.len() != expected {
            return Err(format!("expected {expected} vectors, got {}", rows.len()));
        }
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let values = row
                .as_array()
                .ok_or("vector is not an array")?
                .iter()
                .map(|x| x.as_f64().ok_or("vector entry is not a number"))
                .collect::<Result<Vec<f64>, _>>()?;
            let dim = *self.embed_dim.get_or_init(|| values.len());
            if values.len() != dim {
                return Err(format!("embedding dimension {} differs from {dim}", values.len()));
            }
            out.push(EmbeddingVector::new(values).map_err(|e| e.to_string())?);
        }
        Ok(out)
    }
}

fn number(v: &Value, field: &str) -> Result<f64, String> {
    v.get(field).and_then(Value::as_f64).ok_or_else(|| format!("missing numeric `{field}`"))
}

fn string_array(v: &Value, field: &str) -> Result<Vec<String>, String> {
    v.get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| format!("missing `{field}` array"))?
        .iter()
        .map(|s| s.as_str().map(str::to_string).ok_or_else(|| format!("non-string in `{field}`")))
        .collect()
}
