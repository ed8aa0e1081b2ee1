//! Wire protocol: endpoints, service roles and canonical request encoding.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Complete,
    Entail,
    Utility,
    Embed,
    Paraphrase,
}

impl Endpoint {
    pub const ALL: [Endpoint; 5] =
        [Endpoint::Complete, Endpoint::Entail, Endpoint::Utility, Endpoint::Embed, Endpoint::Paraphrase];

    pub fn path(self) -> &'static str {
        match self {
            Endpoint::Complete => "/v1/complete",
            Endpoint::Entail => "/v1/entail",
            Endpoint::Utility => "/v1/utility",
            Endpoint::Embed => "/v1/embed",
            Endpoint::Paraphrase => "/v1/paraphrase",
        }
    }

    pub fn from_path(path: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.path() == path)
    }

    pub fn name(self) -> &'static str {
        &self.path()[4..]
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.path())
    }
}

/// The remote helper a request is addressed to. Initial and link teachers
/// speak the same endpoint but may be different services.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    InitialTeacher,
    LinkTeacher,
    Utility,
    Embedder,
    Paraphraser,
}

impl Role {
    pub const ALL: [Role; 6] =
        [Role::Generator, Role::InitialTeacher, Role::LinkTeacher, Role::Utility, Role::Embedder, Role::Paraphraser];

    pub fn endpoint(self) -> Endpoint {
        match self {
            Role::Generator => Endpoint::Complete,
            Role::InitialTeacher | Role::LinkTeacher => Endpoint::Entail,
            Role::Utility => Endpoint::Utility,
            Role::Embedder => Endpoint::Embed,
            Role::Paraphraser => Endpoint::Paraphrase,
        }
    }

    /// Cache namespace: the endpoint name, distinguished for the link teacher.
    pub fn cache_namespace(self) -> &'static str {
        match self {
            Role::LinkTeacher => "entail_link",
            other => other.endpoint().name(),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Generator => "generator",
            Role::InitialTeacher => "initial_teacher",
            Role::LinkTeacher => "link_teacher",
            Role::Utility => "utility",
            Role::Embedder => "embedder",
            Role::Paraphraser => "paraphraser",
        };
        f.write_str(s)
    }
}

/// Compact JSON with object keys sorted recursively.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// SHA-256 hex over `namespace` and the canonical request body.
pub fn cache_key(namespace: &str, request: &Value) -> String {
    let mut h = Sha256::new();
    h.update(namespace.as_bytes());
    h.update(b"\n");
    h.update(canonical_json(request).as_bytes());
    hex::encode(h.finalize())
}
