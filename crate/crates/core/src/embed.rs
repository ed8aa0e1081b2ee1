//! Embedding vectors, Euclidean distance and nearest-target lookup.

use std::collections::BTreeMap;

use num_traits::Float;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("embedding must be non-empty with finite entries")]
    Invalid,
    #[error("unknown evidence `{0}`")]
    UnknownEvidence(String),
    #[error("evidence `{0}` has no target claims")]
    EmptyTargets(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, EmbedError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::Invalid);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Euclidean distance ‖u − v‖₂.
pub fn distance<T: Scalar>(u: &EmbeddingVector<T>, v: &EmbeddingVector<T>) -> Result<T, EmbedError> {
    distance_sq(u, v).map(Float::sqrt)
}

pub fn distance_sq<T: Scalar>(u: &EmbeddingVector<T>, v: &EmbeddingVector<T>) -> Result<T, EmbedError> {
    if u.dim() != v.dim() {
        return Err(EmbedError::Dimension { left: u.dim(), right: v.dim() });
    }
    Ok(u.values.iter().zip(&v.values).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b)))
}

/// Closest target claim and its distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Nearest<'a, T> {
    pub claim: &'a str,
    pub distance: T,
}

/// Target-claim embeddings per evidence. Built once, then read-only.
#[derive(Debug, Clone, Default)]
pub struct TargetIndex<T> {
    entries: BTreeMap<String, Vec<(String, EmbeddingVector<T>)>>,
}

impl<T: Scalar> TargetIndex<T> {
    pub fn new() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, evidence_id: &str, targets: Vec<(String, EmbeddingVector<T>)>) -> Result<(), EmbedError> {
        if targets.is_empty() {
            return Err(EmbedError::EmptyTargets(evidence_id.to_string()));
        }
        self.entries.insert(evidence_id.to_string(), targets);
        Ok(())
    }

    pub fn targets(&self, evidence_id: &str) -> Option<&[(String, EmbeddingVector<T>)]> {
        self.entries.get(evidence_id).map(Vec::as_slice)
    }

    /// Linear scan; ties go to the lexicographically smallest claim.
    pub fn nearest_target(
        &self,
        claim_vec: &EmbeddingVector<T>,
        evidence_id: &str,
    ) -> Result<Nearest<'_, T>, EmbedError> {
        let targets =
            self.entries.get(evidence_id).ok_or_else(|| EmbedError::UnknownEvidence(evidence_id.to_string()))?;
        let mut best: Option<Nearest<'_, T>> = None;
        for (claim, vec) in targets {
            let d = distance(claim_vec, vec)?;
            let better = match &best {
                None => true,
                Some(b) => d < b.distance || (d == b.distance && claim.as_str() < b.claim),
            };
            if better {
                best = Some(Nearest { claim, distance: d });
            }
        }
        best.ok_or_else(|| EmbedError::EmptyTargets(evidence_id.to_string()))
    }
}
