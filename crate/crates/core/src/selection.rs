//! Per-sample objective contributions and top-K selection.
//!
//! The population objective is a plain sum of per-sample terms, so the
//! minimum-loss subset of size K is the K samples with the smallest
//! contributions.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SampleId, SyntheticSample};
use crate::scalar::Scalar;

/// Ceiling applied to the utility (cross-entropy) before weighting.
pub const UTILITY_CAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("contribution of {0} is not finite")]
    NonFinite(SampleId),
}

/// Objective weights. Defaults are the tuned RAGTruth-QA values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    pub lambda_d: T,
    pub lambda_u: T,
}

impl Default for Weights<f64> {
    fn default() -> Self {
        Self { lambda_d: 32.67, lambda_u: 20.57 }
    }
}

/// One sample's terms of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown<T> {
    pub sample_id: SampleId,
    pub distance_sq: T,
    pub ldiv_term: T,
    pub utility: T,
    pub contribution: T,
}

impl<T: Scalar> ObjectiveBreakdown<T> {
    /// Assembles a breakdown; `utility` is capped at [`UTILITY_CAP`] first.
    pub fn new(
        sample_id: SampleId,
        distance_sq: T,
        ldiv_term: T,
        utility: T,
        weights: Weights<T>,
    ) -> Result<Self, SelectionError> {
        let utility = utility.min(T::lit(UTILITY_CAP));
        let total = contribution(distance_sq, ldiv_term, utility, weights.lambda_d, weights.lambda_u)?;
        Ok(Self { sample_id, distance_sq, ldiv_term, utility, contribution: total })
    }

    pub fn recompute(&self, weights: Weights<T>) -> Result<T, SelectionError> {
        contribution(self.distance_sq, self.ldiv_term, self.utility, weights.lambda_d, weights.lambda_u)
    }
}

/// `distance_sq + λ_d·ldiv − λ_u·utility`.
pub fn contribution<T: Scalar>(
    distance_sq: T,
    ldiv_value: T,
    utility: T,
    lambda_d: T,
    lambda_u: T,
) -> Result<T, SelectionError> {
    for (name, v) in [
        ("distance_sq", distance_sq),
        ("ldiv", ldiv_value),
        ("utility", utility),
        ("lambda_d", lambda_d),
        ("lambda_u", lambda_u),
    ] {
        if !v.is_finite() || v < T::zero() {
            return Err(SelectionError::Negative { name, value: v.to_f64().unwrap_or(f64::NAN) });
        }
    }
    Ok(distance_sq + lambda_d * ldiv_value - lambda_u * utility)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult<T> {
    /// Ascending contribution, ties by ascending sample id.
    pub selected: Vec<SampleId>,
    pub population_objective: T,
    pub iteration: u32,
    /// Set when fewer than `k` candidates were available.
    pub shortfall: bool,
}

fn rank<T: Scalar>(a: (&SampleId, T), b: (&SampleId, T)) -> Ordering {
    a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0))
}

/// Selects the `k` candidates with the smallest contributions.
pub fn select_top_k<T: Scalar>(
    candidates: &[ObjectiveBreakdown<T>],
    k: usize,
    iteration: u32,
) -> Result<SelectionResult<T>, SelectionError> {
    if k == 0 {
        return Err(SelectionError::ZeroK);
    }
    if let Some(bad) = candidates.iter().find(|c| !c.contribution.is_finite()) {
        return Err(SelectionError::NonFinite(bad.sample_id.clone()));
    }
    let mut order: Vec<&ObjectiveBreakdown<T>> = candidates.iter().collect();
    order.sort_by(|a, b| rank((&a.sample_id, a.contribution), (&b.sample_id, b.contribution)));
    let shortfall = k > order.len();
    if shortfall {
        log::warn!("selection requested {k} samples from {} candidates", order.len());
    }
    order.truncate(k);
    let population_objective = order.iter().fold(T::zero(), |acc, c| acc + c.contribution);
    Ok(SelectionResult {
        selected: order.into_iter().map(|c| c.sample_id.clone()).collect(),
        population_objective,
        iteration,
        shortfall,
    })
}

/// Stops after `max_iterations` recorded objectives, or once the relative
/// improvement between the last two falls below `epsilon`.
pub fn has_converged<T: Scalar>(objective_history: &[T], epsilon: T, max_iterations: usize) -> bool {
    if objective_history.len() >= max_iterations {
        return true;
    }
    match objective_history {
        [.., prev, curr] => (*prev - *curr) / prev.abs().max(T::one()) < epsilon,
        _ => false,
    }
}

/// Collapses candidates sharing `(evidence_id, claim, label)` onto the
/// highest-certainty instance; earlier entries win ties. Order of first
/// appearance is preserved.
pub fn dedup_candidates(samples: Vec<SyntheticSample>) -> Vec<SyntheticSample> {
    let mut slot: HashMap<SampleId, usize> = HashMap::new();
    let mut out: Vec<SyntheticSample> = Vec::with_capacity(samples.len());
    for s in samples {
        match slot.get(&s.sample_id) {
            Some(&i) => {
                if s.certainty_on_label() > out[i].certainty_on_label() {
                    out[i] = s;
                }
            }
            None => {
                slot.insert(s.sample_id.clone(), out.len());
                out.push(s);
            }
        }
    }
    out
}

impl SyntheticSample {
    /// Certainty mass on the sample's own hard label.
    pub fn certainty_on_label(&self) -> f64 {
        self.hard_label.mass(self.certainty)
    }
}
