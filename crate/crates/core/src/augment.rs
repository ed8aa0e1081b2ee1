//! Label-preserving claim mutations and certainty propagation to offspring.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certainty::update_certainty;
use crate::corpus::{Origin, SyntheticSample};
use crate::gateway::prompts::{parse_tagged, render_rephrase_prompt};
use crate::gateway::{Gateway, GatewayError, DEFAULT_TEMPERATURE};
use crate::rng::substream;

/// Share of consecutive words masked for partial rephrasing.
pub const MASK_FRACTION: f64 = 0.2;
/// Completions requested per mask.
pub const COMPLETIONS_PER_MASK: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("cannot mask empty text")]
    EmptyText,
    #[error("mask fraction must lie in (0, 1), got {0}")]
    Fraction(f64),
}

/// Offspring requested per operator and parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffspringCounts {
    pub partial_rephrase: usize,
    pub paraphrase: usize,
    pub drop_sentence: usize,
}

impl Default for OffspringCounts {
    fn default() -> Self {
        Self { partial_rephrase: 6, paraphrase: 3, drop_sentence: 3 }
    }
}

impl OffspringCounts {
    pub fn total(&self) -> usize {
        self.partial_rephrase + self.paraphrase + self.drop_sentence
    }
}

/// Offspring texts of one parent before certainty assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationBatch {
    pub parent: SyntheticSample,
    pub children: Vec<(String, Origin)>,
    pub requested: OffspringCounts,
}

fn span_len(word_count: usize, fraction: f64) -> usize {
    ((fraction * word_count as f64).round() as usize).clamp(1, word_count)
}

fn mask_words(words: &[&str], start: usize, len: usize) -> String {
    words
        .iter()
        .enumerate()
        .map(|(i, w)| if (start..start + len).contains(&i) { "_" } else { w })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Replaces one contiguous span of `round(fraction · words)` words (at least
/// one) with `_` tokens. Words are whitespace-separated tokens.
pub fn mask_span<R: Rng + ?Sized>(text: &str, fraction: f64, rng: &mut R) -> Result<String, AugmentError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(AugmentError::Fraction(fraction));
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(AugmentError::EmptyText);
    }
    let len = span_len(words.len(), fraction);
    let start = rng.gen_range(0..=words.len() - len);
    Ok(mask_words(&words, start, len))
}

fn is_closing_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201d}' | '\u{2019}' | ')')
}

fn is_opening(c: char) -> bool {
    c.is_uppercase() || matches!(c, '"' | '\'' | '\u{201c}' | '\u{2018}' | '(')
}

/// Splits after `.`, `!` or `?` (plus any closing quotes) when followed by
/// whitespace and an uppercase letter or opening quote.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut begin = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i].1, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                j += 1;
            }
            while j < chars.len() && is_closing_quote(chars[j].1) {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k > j && k < chars.len() && is_opening(chars[k].1) {
                let end = chars[j].0;
                out.push(text[begin..end].trim());
                begin = chars[k].0;
                i = k;
                continue;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    let tail = text[begin..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out.retain(|s| !s.is_empty());
    out
}

/// Up to `count` copies of the claim, each with one distinct sentence removed.
/// Single-sentence claims have no offspring.
pub fn drop_sentence<R: Rng + ?Sized>(claim: &str, count: usize, rng: &mut R) -> Vec<String> {
    let sentences = split_sentences(claim);
    if sentences.len() <= 1 || count == 0 {
        return Vec::new();
    }
    let mut drops = index::sample(rng, sentences.len(), count.min(sentences.len())).into_vec();
    drops.sort_unstable();
    drops
        .into_iter()
        .map(|d| sentences.iter().enumerate().filter(|&(i, _)| i != d).map(|(_, s)| *s).collect::<Vec<_>>().join(" "))
        .collect()
}

/// Gap-filling rewrites: `ceil(count / 3)` masks with distinct starts where
/// the claim allows, three completions per mask.
pub fn partial_rephrase<R: Rng + ?Sized>(
    claim: &str,
    count: usize,
    rng: &mut R,
    gateway: &Gateway,
) -> Result<Vec<String>, GatewayError> {
    let words: Vec<&str> = claim.split_whitespace().collect();
    if words.is_empty() || count == 0 {
        return Ok(Vec::new());
    }
    let masks = count.div_ceil(COMPLETIONS_PER_MASK);
    let len = span_len(words.len(), MASK_FRACTION);
    let positions = words.len() - len + 1;
    let mut starts = index::sample(rng, positions, masks.min(positions)).into_vec();
    while starts.len() < masks {
        starts.push(rng.gen_range(0..positions));
    }

    let mut out = Vec::new();
    for (m, start) in starts.into_iter().enumerate() {
        let n = COMPLETIONS_PER_MASK.min(count - m * COMPLETIONS_PER_MASK);
        let prompt = render_rephrase_prompt(claim, &mask_words(&words, start, len), n);
        let completions = gateway.complete(&prompt, 1, DEFAULT_TEMPERATURE)?;
        let mut got = Vec::new();
        for c in &completions {
            if let Ok(parsed) = parse_tagged(c, "answer", n) {
                got.extend(parsed.items);
            }
            if got.len() >= n {
                break;
            }
        }
        if got.is_empty() {
            log::warn!("partial rephrase: no parseable answers for mask {m}");
        }
        got.truncate(n);
        out.extend(got);
    }
    Ok(out)
}

/// Paraphrases from the paraphrase service.
pub fn paraphrase(claim: &str, count: usize, gateway: &Gateway) -> Result<Vec<String>, GatewayError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut texts = gateway.paraphrase(claim, count)?;
    texts.truncate(count);
    Ok(texts)
}

/// Runs all three operators on one parent. Operator failures are logged and
/// yield no children from that operator.
pub fn generate_offspring<R: Rng + ?Sized>(
    parent: &SyntheticSample,
    counts: OffspringCounts,
    rng: &mut R,
    gateway: &Gateway,
    warnings: &mut Vec<String>,
) -> AugmentationBatch {
    let mut children = Vec::new();
    let mut take = |texts: Result<Vec<String>, GatewayError>, origin: Origin, warnings: &mut Vec<String>| match texts {
        Ok(texts) => {
            for t in texts {
                let t = t.trim().to_string();
                if !t.is_empty() && t != parent.claim {
                    children.push((t, origin));
                }
            }
        }
        Err(e) => {
            let msg = format!("{}: {origin} failed for {}: {e}", parent.evidence_id, parent.sample_id);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    };
    take(partial_rephrase(&parent.claim, counts.partial_rephrase, rng, gateway), Origin::PartialRephrase, warnings);
    take(paraphrase(&parent.claim, counts.paraphrase, gateway), Origin::Paraphrase, warnings);
    take(Ok(drop_sentence(&parent.claim, counts.drop_sentence, rng)), Origin::DropSentence, warnings);
    AugmentationBatch { parent: parent.clone(), children, requested: counts }
}

/// Scores each offspring edge with the link teacher and propagates certainty.
pub fn score_offspring(
    batch: &AugmentationBatch,
    gateway: &Gateway,
    warnings: &mut Vec<String>,
) -> Vec<SyntheticSample> {
    let parent = &batch.parent;
    let mut out = Vec::with_capacity(batch.children.len());
    for (text, origin) in &batch.children {
        let scored = gateway
            .entail_link(&parent.claim, text)
            .map_err(|e| e.to_string())
            .and_then(|t| update_certainty(parent.certainty, t).map_err(|e| e.to_string()));
        match scored {
            Ok(r) => out.push(parent.child(text.clone(), *origin, r)),
            Err(e) => {
                let msg = format!("{}: skipped {origin} child of {}: {e}", parent.evidence_id, parent.sample_id);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    out
}

/// Offspring of every parent, in parent order. Each parent draws from its own
/// substream keyed by `(seed, sample_id, iteration)`.
pub fn augment_population(
    parents: &[SyntheticSample],
    counts: OffspringCounts,
    seed: u64,
    iteration: u32,
    gateway: &Gateway,
) -> (Vec<SyntheticSample>, Vec<String>) {
    let iter_key = iteration.to_string();
    let per_parent: Vec<(Vec<SyntheticSample>, Vec<String>)> = parents
        .par_iter()
        .map(|p| {
            let mut rng = substream(seed, &["augment", p.sample_id.as_str(), &iter_key]);
            let mut warnings = Vec::new();
            let batch = generate_offspring(p, counts, &mut rng, gateway, &mut warnings);
            let children = score_offspring(&batch, gateway, &mut warnings);
            (children, warnings)
        })
        .collect();
    let mut children = Vec::new();
    let mut warnings = Vec::new();
    for (c, w) in per_parent {
        children.extend(c);
        warnings.extend(w);
    }
    (children, warnings)
}
