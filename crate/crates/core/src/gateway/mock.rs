//! Deterministic in-process backend for tests and dry runs.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::prompts::{self, REPHRASE_MARKER};
use super::{Endpoint, GatewayError, Transport};

/// Responses are pure functions of the request:
///
/// * complete: rephrase prompts echo the masked document with every `_`
///   replaced by `X`; initial prompts cycle through the few-shot examples.
/// * entail: fraction of hypothesis words present in the premise.
/// * utility: cross-entropy `-ln(utility_p)` for either label.
/// * embed: hashed bag of words of dimension `embed_dim`.
/// * paraphrase: word rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    pub utility_p: f64,
    pub embed_dim: usize,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self { utility_p: 0.5, embed_dim: 16 }
    }
}

impl MockBackend {
    fn complete(&self, prompt: &str, n: usize) -> Vec<String> {
        let count = prompts::requested_count(prompt).unwrap_or(1);
        let body = if prompt.contains(REPHRASE_MARKER) {
            let masked = prompts::documents(prompt).get(1).copied().unwrap_or("");
            let filled =
                masked.split_whitespace().map(|w| if w == "_" { "X" } else { w }).collect::<Vec<_>>().join(" ");
            (0..count).map(|k| format!("<answer {k}>{filled}</answer {k}>")).collect::<String>()
        } else {
            let examples = prompts::parse_tagged(prompt, "example", prompts::MAX_FEWSHOT_EXAMPLES)
                .map(|t| t.items)
                .unwrap_or_else(|_| vec!["Mock claim.".to_string()]);
            let label = if prompt.contains(prompts::ENTAILED_MARKER) { "supported" } else { "unsupported" };
            (0..count)
                .map(|k| format!("<summary {k}>{} ({label} {k})</summary {k}>", examples[k % examples.len()]))
                .collect::<String>()
        };
        vec![body; n.max(1)]
    }
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn word_overlap(premise: &str, hypothesis: &str) -> f64 {
    let p = words(premise);
    let h = words(hypothesis);
    if h.is_empty() {
        return 0.0;
    }
    h.iter().filter(|w| p.contains(w)).count() as f64 / h.len() as f64
}

fn bag_of_words(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for w in words(text) {
        let h = Sha256::digest(w.as_bytes());
        let idx = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) as usize % dim;
        v[idx] += 1.0;
    }
    v
}

pub(crate) fn field<'a>(body: &'a Value, name: &str, endpoint: Endpoint) -> Result<&'a Value, GatewayError> {
    body.get(name).ok_or_else(|| GatewayError::Protocol { endpoint, message: format!("missing `{name}`") })
}

pub(crate) fn text_field<'a>(body: &'a Value, name: &str, endpoint: Endpoint) -> Result<&'a str, GatewayError> {
    field(body, name, endpoint)?
        .as_str()
        .ok_or_else(|| GatewayError::Protocol { endpoint, message: format!("`{name}` is not a string") })
}

impl Transport for MockBackend {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError> {
        Ok(match endpoint {
            Endpoint::Complete => {
                let n = field(body, "n", endpoint)?.as_u64().unwrap_or(1) as usize;
                json!({"completions": self.complete(text_field(body, "prompt", endpoint)?, n)})
            }
            Endpoint::Entail => {
                let p = word_overlap(text_field(body, "premise", endpoint)?, text_field(body, "hypothesis", endpoint)?);
                json!({"probability": p})
            }
            Endpoint::Utility => json!({"cross_entropy": -self.utility_p.ln().min(0.0)}),
            Endpoint::Embed => {
                let texts = field(body, "texts", endpoint)?.as_array().cloned().unwrap_or_default();
                let vectors: Vec<Vec<f64>> =
                    texts.iter().map(|t| bag_of_words(t.as_str().unwrap_or(""), self.embed_dim)).collect();
                json!({"vectors": vectors})
            }
            Endpoint::Paraphrase => {
                let text = text_field(body, "text", endpoint)?;
                let n = field(body, "n", endpoint)?.as_u64().unwrap_or(1) as usize;
                let w: Vec<&str> = text.split_whitespace().collect();
                let texts: Vec<String> = (1..=n)
                    .map(|i| {
                        let mut r = w.clone();
                        if !r.is_empty() {
                            let k = i % r.len();
                            r.rotate_left(k);
                        }
                        r.join(" ")
                    })
                    .collect();
                json!({"texts": texts})
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certainty::HardLabel;
    use crate::gateway::prompts::{parse_tagged, render_initial_prompt, render_rephrase_prompt};

    #[test]
    fn rephrase_echo_fills_gaps() {
        let m = MockBackend::default();
        let p = render_rephrase_prompt("a b c d", "a _ _ d", 3);
        let out = m.post(Endpoint::Complete, &json!({"prompt": p, "n": 1, "temperature": 1.0})).unwrap();
        let text = out["completions"][0].as_str().unwrap();
        let items = parse_tagged(text, "answer", 3).unwrap().items;
        assert_eq!(items, ["a X X d"; 3]);
        assert_eq!(text.matches('X').count(), 6);
    }

    #[test]
    fn initial_uses_examples() {
        let m = MockBackend::default();
        let p = render_initial_prompt("Doc.", &["One.", "Two."], 3, HardLabel::Entailed);
        let out = m.post(Endpoint::Complete, &json!({"prompt": p, "n": 1, "temperature": 1.0})).unwrap();
        let items = parse_tagged(out["completions"][0].as_str().unwrap(), "summary", 3).unwrap().items;
        assert_eq!(items, ["One. (supported 0)", "Two. (supported 1)", "One. (supported 2)"]);
    }

    #[test]
    fn overlap_and_embedding() {
        assert_eq!(word_overlap("The cat sat.", "the CAT"), 1.0);
        assert_eq!(word_overlap("The cat sat.", "a dog"), 0.0);
        assert_eq!(bag_of_words("x y", 16), bag_of_words("x y", 16));
        assert_eq!(bag_of_words("x y", 16).iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn paraphrase_rotations_are_distinct() {
        let m = MockBackend::default();
        let out = m.post(Endpoint::Paraphrase, &json!({"text": "one two three four", "n": 3})).unwrap();
        let t: Vec<&str> = out["texts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(t, ["two three four one", "three four one two", "four one two three"]);
    }
}
