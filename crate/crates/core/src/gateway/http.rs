//! Blocking HTTP transport with bounded concurrency and retries.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::protocol::{Endpoint, Role};
use super::{GatewayError, Transport};

/// Counting semaphore shared by all transports of one gateway.
#[derive(Debug)]
pub struct InFlightLimiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimiter {
    pub fn new(max_in_flight: usize) -> Arc<Self> {
        Arc::new(Self { available: Mutex::new(max_in_flight.max(1)), freed: Condvar::new() })
    }

    fn acquire(self: &Arc<Self>) -> Permit {
        let mut n = self.available.lock().expect("limiter lock");
        while *n == 0 {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n -= 1;
        Permit(Arc::clone(self))
    }
}

struct Permit(Arc<InFlightLimiter>);

impl Drop for Permit {
    fn drop(&mut self) {
        *self.0.available.lock().expect("limiter lock") += 1;
        self.0.freed.notify_one();
    }
}

/// Base URLs per role plus client limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceEndpoints {
    pub complete: Option<String>,
    pub entail: Option<String>,
    /// Link teacher for augmentation edges; falls back to `entail`.
    pub link_entail: Option<String>,
    pub utility: Option<String>,
    pub embed: Option<String>,
    pub paraphrase: Option<String>,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    /// Total attempts per request.
    pub retries: u32,
}

impl Default for ServiceEndpoints {
    fn default() -> Self {
        Self {
            complete: None,
            entail: None,
            link_entail: None,
            utility: None,
            embed: None,
            paraphrase: None,
            timeout_secs: 120.0,
            max_in_flight: 8,
            retries: 3,
        }
    }
}

impl ServiceEndpoints {
    /// Every role pointed at one base URL.
    pub fn single(base_url: &str) -> Self {
        let s = Some(base_url.to_string());
        Self {
            complete: s.clone(),
            entail: s.clone(),
            link_entail: None,
            utility: s.clone(),
            embed: s.clone(),
            paraphrase: s,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(format!("timeout_secs must be positive, got {}", self.timeout_secs));
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        if self.retries == 0 {
            return Err("retries must be at least 1".into());
        }
        Ok(())
    }

    pub fn url_for(&self, role: Role) -> Option<&str> {
        match role {
            Role::Generator => self.complete.as_deref(),
            Role::InitialTeacher => self.entail.as_deref(),
            Role::LinkTeacher => self.link_entail.as_deref().or(self.entail.as_deref()),
            Role::Utility => self.utility.as_deref(),
            Role::Embedder => self.embed.as_deref(),
            Role::Paraphraser => self.paraphrase.as_deref(),
        }
    }
}

pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
    attempts: u32,
    backoff: Duration,
    limiter: Arc<InFlightLimiter>,
}

impl HttpTransport {
    pub fn new(base_url: &str, endpoints: &ServiceEndpoints, limiter: Arc<InFlightLimiter>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoints.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent: config.into(),
            attempts: endpoints.retries.max(1),
            backoff: Duration::from_millis(200),
            limiter,
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, endpoint: Endpoint, body: &str) -> Result<Value, Attempt> {
        let url = format!("{}{}", self.base_url, endpoint.path());
        let _permit = self.limiter.acquire();
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200 => serde_json::from_str(&text).map_err(|e| Attempt::Fatal(format!("invalid JSON body: {e}"))),
            s if s >= 500 || s == 429 => Err(Attempt::Retry(format!("status {s}: {text}"))),
            s => Err(Attempt::Fatal(format!("status {s}: {text}"))),
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl Transport for HttpTransport {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError> {
        let body = body.to_string();
        let mut last = String::new();
        for i in 0..self.attempts {
            if i > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(i - 1));
            }
            match self.attempt(endpoint, &body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(message)) => return Err(GatewayError::Protocol { endpoint, message }),
                Err(Attempt::Retry(message)) => {
                    log::warn!("{endpoint} attempt {} failed: {message}", i + 1);
                    last = message;
                }
            }
        }
        Err(GatewayError::Transport { endpoint, message: last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_validation() {
        let mut e = ServiceEndpoints::default();
        assert!(e.validate().is_ok());
        e.timeout_secs = 0.0;
        assert!(e.validate().is_err());
        e.timeout_secs = 1.0;
        e.max_in_flight = 0;
        assert!(e.validate().is_err());
    }

    #[test]
    fn link_teacher_falls_back() {
        let mut e = ServiceEndpoints::single("http://a");
        assert_eq!(e.url_for(Role::LinkTeacher), Some("http://a"));
        e.link_entail = Some("http://b".into());
        assert_eq!(e.url_for(Role::LinkTeacher), Some("http://b"));
        assert_eq!(e.url_for(Role::InitialTeacher), Some("http://a"));
    }

    #[test]
    fn limiter_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let limiter = InFlightLimiter::new(2);
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (limiter, live, peak) = (limiter.clone(), live.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = limiter.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(10));
                    live.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn unreachable_host_is_transport_error() {
        let e = ServiceEndpoints { timeout_secs: 2.0, retries: 2, ..ServiceEndpoints::default() };
        let t = HttpTransport::new("http://127.0.0.1:9", &e, InFlightLimiter::new(1))
            .with_backoff(Duration::from_millis(1));
        let err = t.post(Endpoint::Entail, &serde_json::json!({})).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { .. }), "{err:?}");
    }
}
