//! Per-evidence generation loop: few-shot initial population, then rounds of
//! augment, rescore and select until convergence, with checkpoint/resume.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{augment_population, OffspringCounts};
use crate::certainty::{ldiv, HardLabel};
use crate::corpus::{CorpusError, EvidenceGroup, LabeledExample, Origin, SampleId, SyntheticSample, TargetCorpus};
use crate::embed::TargetIndex;
use crate::gateway::prompts::{parse_tagged, render_initial_prompt, MAX_FEWSHOT_EXAMPLES};
use crate::gateway::{cache_key, canonical_json, Gateway, GatewayError, ServiceEndpoints, DEFAULT_TEMPERATURE};
use crate::rng::{substream, Stream};
use crate::selection::{dedup_candidates, has_converged, select_top_k, ObjectiveBreakdown, Weights};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("unknown evidence `{0}`")]
    UnknownEvidence(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("evidence `{evidence_id}`: {message}")]
    Evidence { evidence_id: String, message: String },
    #[error("all {count} evidences failed; first: {first}")]
    AllFailed { count: usize, first: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Lowest objective contributions.
    #[default]
    Objective,
    /// Uniform draw from the candidate pool; a baseline.
    Random,
}

/// Run parameters. Every field has a default; see the presets for the
/// per-dataset settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Samples kept per evidence.
    pub k: usize,
    pub offspring: OffspringCounts,
    pub max_iterations: usize,
    pub epsilon: f64,
    pub lambda_d: f64,
    pub lambda_u: f64,
    /// Probability of drawing label 1 for an initial sample.
    pub label_prior: f64,
    pub fewshot_cap: usize,
    pub seed: u64,
    pub selection: SelectionStrategy,
    pub endpoints: ServiceEndpoints,
    pub cache_dir: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Worker threads; defaults to the core count capped by `max_in_flight`.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = Weights::default();
        Self {
            k: 8,
            offspring: OffspringCounts::default(),
            max_iterations: 2,
            epsilon: 1e-3,
            lambda_d: w.lambda_d,
            lambda_u: w.lambda_u,
            label_prior: 0.5,
            fewshot_cap: MAX_FEWSHOT_EXAMPLES,
            seed: 0,
            selection: SelectionStrategy::Objective,
            endpoints: ServiceEndpoints::default(),
            cache_dir: None,
            checkpoint_dir: None,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.offspring.total() == 0 {
            return bad("offspring counts must sum to at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.label_prior) {
            return bad(format!("label_prior must lie in [0, 1], got {}", self.label_prior));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        for (name, v) in [("lambda_d", self.lambda_d), ("lambda_u", self.lambda_u)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(1..=MAX_FEWSHOT_EXAMPLES).contains(&self.fewshot_cap) {
            return bad(format!("fewshot_cap must lie in 1..={MAX_FEWSHOT_EXAMPLES}, got {}", self.fewshot_cap));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        self.endpoints.validate().map_err(PipelineError::Config)
    }

    pub fn weights(&self) -> Weights<f64> {
        Weights { lambda_d: self.lambda_d, lambda_u: self.lambda_u }
    }

    /// Hash of every setting that affects results; checkpoints from a
    /// different fingerprint are rejected.
    pub fn fingerprint(&self) -> String {
        let v = serde_json::json!({
            "k": self.k,
            "offspring": self.offspring,
            "max_iterations": self.max_iterations,
            "epsilon": self.epsilon,
            "lambda_d": self.lambda_d,
            "lambda_u": self.lambda_u,
            "label_prior": self.label_prior,
            "fewshot_cap": self.fewshot_cap,
            "seed": self.seed,
            "selection": self.selection,
        });
        hex::encode(&Sha256::digest(canonical_json(&v).as_bytes())[..8])
    }
}

/// Report record for one selection round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub evidence_id: String,
    pub iteration: u32,
    pub objective: f64,
    pub selected: Vec<SampleId>,
}

/// Everything needed to continue an evidence after an iteration boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceState {
    pub fingerprint: String,
    pub evidence_id: String,
    pub iteration: u32,
    pub converged: bool,
    pub objective_history: Vec<f64>,
    pub records: Vec<IterationRecord>,
    /// Selected samples, ascending contribution.
    pub selected: Vec<SyntheticSample>,
    pub breakdowns: Vec<ObjectiveBreakdown<f64>>,
    /// Candidate pool the selection was made from.
    pub pool: Vec<SyntheticSample>,
    /// First-seen version of every sample ever selected; closes the
    /// `parent_id` chains of the selected set.
    pub ancestry: BTreeMap<SampleId, SyntheticSample>,
    /// Word position of the evidence-level random stream.
    pub rng_word_pos: String,
    pub warnings: Vec<String>,
}

/// Draws `k` hard labels, label 1 with probability `p1`.
pub fn draw_labels<R: Rng + ?Sized>(k: usize, p1: f64, rng: &mut R) -> Vec<HardLabel> {
    (0..k).map(|_| if rng.gen::<f64>() < p1 { HardLabel::Entailed } else { HardLabel::NotEntailed }).collect()
}

fn generate_claims(
    group: &EvidenceGroup,
    examples: &[&str],
    label: HardLabel,
    count: usize,
    gateway: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<Vec<String>, GatewayError> {
    let id = &group.evidence.evidence_id;
    let mut claims: Vec<String> = Vec::new();
    for attempt in 0..2 {
        let need = count - claims.len();
        if need == 0 {
            break;
        }
        let prompt = render_initial_prompt(&group.evidence.text, examples, need, label);
        let completions = gateway.complete(&prompt, 1, DEFAULT_TEMPERATURE)?;
        for c in completions {
            if let Ok(parsed) = parse_tagged(&c, "summary", need) {
                for item in parsed.items {
                    if claims.len() < count && !claims.contains(&item) {
                        claims.push(item);
                    }
                }
            }
        }
        if attempt == 1 && claims.len() < count {
            let msg = format!("{id}: generated {} of {count} label-{} claims", claims.len(), label.bit());
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(claims)
}

/// Few-shot generation of up to `k` claims with initial teacher certainties.
pub fn initial_population(
    group: &EvidenceGroup,
    config: &RunConfig,
    rng: &mut Stream,
    gateway: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<Vec<SyntheticSample>, PipelineError> {
    let id = &group.evidence.evidence_id;
    let labels = draw_labels(config.k, config.label_prior, rng);
    let examples: Vec<&str> = group.claims().take(config.fewshot_cap).collect();
    let mut samples = Vec::new();
    for label in [HardLabel::Entailed, HardLabel::NotEntailed] {
        let count = labels.iter().filter(|&&l| l == label).count();
        if count == 0 {
            continue;
        }
        for claim in generate_claims(group, &examples, label, count, gateway, warnings)? {
            match gateway.entail(&group.evidence.text, &claim) {
                Ok(r0) => samples.push(SyntheticSample::root(id, claim, label, r0)),
                Err(e) => {
                    let msg = format!("{id}: skipped initial claim: {e}");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(PipelineError::Evidence { evidence_id: id.clone(), message: "no initial claims".into() });
    }
    Ok(dedup_candidates(samples))
}

/// Embeds the target claims of one evidence.
pub fn build_target_index(group: &EvidenceGroup, gateway: &Gateway) -> Result<TargetIndex<f64>, PipelineError> {
    let claims: Vec<&str> = group.claims().collect();
    let vectors = gateway.embed(&claims)?;
    let mut index = TargetIndex::new();
    index
        .insert(&group.evidence.evidence_id, claims.iter().map(|c| c.to_string()).zip(vectors).collect())
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(index)
}

/// Objective breakdowns for `samples`, fetching missing utilities (stored
/// raw on the sample). Samples whose utility cannot be fetched are removed.
pub fn score_pool(
    group: &EvidenceGroup,
    index: &TargetIndex<f64>,
    samples: &mut Vec<SyntheticSample>,
    weights: Weights<f64>,
    gateway: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<Vec<ObjectiveBreakdown<f64>>, PipelineError> {
    let id = &group.evidence.evidence_id;
    let utilities: Vec<Result<f64, GatewayError>> = samples
        .par_iter()
        .map(|s| match s.utility {
            Some(u) => Ok(u),
            None => gateway.utility(&group.evidence.text, &s.claim, s.hard_label),
        })
        .collect();
    let mut kept = Vec::with_capacity(samples.len());
    for (mut s, u) in samples.drain(..).zip(utilities) {
        match u {
            Ok(u) => {
                s.utility = Some(u);
                kept.push(s);
            }
            Err(e) => {
                let msg = format!("{id}: dropped {} ({e})", s.sample_id);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    *samples = kept;
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let claims: Vec<&str> = samples.iter().map(|s| s.claim.as_str()).collect();
    let vectors = gateway.embed(&claims)?;
    let mut out = Vec::with_capacity(samples.len());
    for (s, v) in samples.iter_mut().zip(&vectors) {
        s.embedding_key = Some(cache_key("embed", &serde_json::json!({"texts": [s.claim]})));
        let nearest = index.nearest_target(v, id).map_err(|e| PipelineError::Config(e.to_string()))?;
        let d = nearest.distance;
        let b = ObjectiveBreakdown::new(
            s.sample_id.clone(),
            d * d,
            ldiv(s.certainty, s.hard_label),
            s.utility.unwrap_or(0.0),
            weights,
        )
        .map_err(|e| PipelineError::Evidence { evidence_id: id.clone(), message: e.to_string() })?;
        out.push(b);
    }
    Ok(out)
}

/// Selected samples, their breakdowns, and the objective total.
type Selected = (Vec<SyntheticSample>, Vec<ObjectiveBreakdown<f64>>, f64);

fn select(
    pool: &[SyntheticSample],
    breakdowns: &[ObjectiveBreakdown<f64>],
    config: &RunConfig,
    iteration: u32,
    rng: &mut Stream,
) -> Result<Selected, PipelineError> {
    let chosen: Vec<usize> = match config.selection {
        SelectionStrategy::Objective => {
            let result =
                select_top_k(breakdowns, config.k, iteration).map_err(|e| PipelineError::Config(e.to_string()))?;
            let pos: HashMap<&SampleId, usize> =
                breakdowns.iter().enumerate().map(|(i, b)| (&b.sample_id, i)).collect();
            result.selected.iter().map(|id| pos[id]).collect()
        }
        SelectionStrategy::Random => {
            let mut idx = index::sample(rng, pool.len(), config.k.min(pool.len())).into_vec();
            idx.sort_by(|&a, &b| {
                breakdowns[a]
                    .contribution
                    .total_cmp(&breakdowns[b].contribution)
                    .then_with(|| breakdowns[a].sample_id.cmp(&breakdowns[b].sample_id))
            });
            idx
        }
    };
    let objective = chosen.iter().fold(0.0, |acc, &i| acc + breakdowns[i].contribution);
    Ok((
        chosen.iter().map(|&i| pool[i].clone()).collect(),
        chosen.iter().map(|&i| breakdowns[i].clone()).collect(),
        objective,
    ))
}

fn record(state: &mut EvidenceState, objective: f64) {
    for s in &state.selected {
        state.ancestry.entry(s.sample_id.clone()).or_insert_with(|| s.clone());
    }
    state.objective_history.push(objective);
    state.records.push(IterationRecord {
        evidence_id: state.evidence_id.clone(),
        iteration: state.iteration,
        objective,
        selected: state.selected.iter().map(|s| s.sample_id.clone()).collect(),
    });
}

fn update_convergence(state: &mut EvidenceState, config: &RunConfig) {
    // The initial objective is reported but not counted as an iteration.
    state.converged = config.max_iterations == 0
        || (state.objective_history.len() > 1
            && has_converged(&state.objective_history[1..], config.epsilon, config.max_iterations));
}

/// Iteration 0: initial population, scored and selected.
pub fn start_evidence(
    group: &EvidenceGroup,
    index: &TargetIndex<f64>,
    config: &RunConfig,
    gateway: &Gateway,
) -> Result<EvidenceState, PipelineError> {
    let mut rng = substream(config.seed, &["evidence", &group.evidence.evidence_id]);
    let mut warnings = Vec::new();
    let mut pool = initial_population(group, config, &mut rng, gateway, &mut warnings)?;
    let breakdowns = score_pool(group, index, &mut pool, config.weights(), gateway, &mut warnings)?;
    if pool.is_empty() {
        return Err(PipelineError::Evidence {
            evidence_id: group.evidence.evidence_id.clone(),
            message: "no scorable initial claims".into(),
        });
    }
    let (selected, sel_breakdowns, objective) = select(&pool, &breakdowns, config, 0, &mut rng)?;
    let mut state = EvidenceState {
        fingerprint: config.fingerprint(),
        evidence_id: group.evidence.evidence_id.clone(),
        iteration: 0,
        converged: false,
        objective_history: Vec::new(),
        records: Vec::new(),
        selected,
        breakdowns: sel_breakdowns,
        pool,
        ancestry: BTreeMap::new(),
        rng_word_pos: rng.get_word_pos().to_string(),
        warnings,
    };
    record(&mut state, objective);
    update_convergence(&mut state, config);
    Ok(state)
}

fn restore_rng(state: &EvidenceState, config: &RunConfig) -> Result<Stream, PipelineError> {
    let mut rng = substream(config.seed, &["evidence", &state.evidence_id]);
    let pos: u128 = state.rng_word_pos.parse().map_err(|_| PipelineError::Evidence {
        evidence_id: state.evidence_id.clone(),
        message: format!("bad rng position `{}`", state.rng_word_pos),
    })?;
    rng.set_word_pos(pos);
    Ok(rng)
}

/// One round: augment the selected set, merge with it, rescore and select.
pub fn iterate(
    state: &EvidenceState,
    group: &EvidenceGroup,
    index: &TargetIndex<f64>,
    config: &RunConfig,
    gateway: &Gateway,
) -> Result<EvidenceState, PipelineError> {
    let mut next = state.clone();
    next.iteration += 1;
    let mut rng = restore_rng(state, config)?;
    let (children, warnings) =
        augment_population(&state.selected, config.offspring, config.seed, next.iteration, gateway);
    next.warnings.extend(warnings);
    let mut pool = state.selected.clone();
    pool.extend(children);
    let mut pool = dedup_candidates(pool);
    let breakdowns = score_pool(group, index, &mut pool, config.weights(), gateway, &mut next.warnings)?;
    let (selected, sel_breakdowns, objective) = select(&pool, &breakdowns, config, next.iteration, &mut rng)?;
    next.selected = selected;
    next.breakdowns = sel_breakdowns;
    next.pool = pool;
    next.rng_word_pos = rng.get_word_pos().to_string();
    record(&mut next, objective);
    update_convergence(&mut next, config);
    Ok(next)
}

/// `{dir}/{hash(evidence_id)}-{iteration:03}.json`.
pub fn checkpoint_path(dir: &Path, evidence_id: &str, iteration: u32) -> PathBuf {
    let h = hex::encode(&Sha256::digest(evidence_id.as_bytes())[..8]);
    dir.join(format!("{h}-{iteration:03}.json"))
}

fn write_checkpoint(dir: &Path, state: &EvidenceState) -> Result<(), PipelineError> {
    let path = checkpoint_path(dir, &state.evidence_id, state.iteration);
    let err = |e: std::io::Error| PipelineError::Checkpoint { path: path.clone(), message: e.to_string() };
    fs::create_dir_all(dir).map_err(err)?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(state).expect("serializable")).map_err(err)?;
    fs::rename(&tmp, &path).map_err(err)
}

/// Latest checkpoint for an evidence, if any.
pub fn load_checkpoint(
    dir: &Path,
    evidence_id: &str,
    config: &RunConfig,
) -> Result<Option<EvidenceState>, PipelineError> {
    let mut latest = None;
    for iteration in 0.. {
        let path = checkpoint_path(dir, evidence_id, iteration);
        if !path.exists() {
            break;
        }
        latest = Some(path);
    }
    let Some(path) = latest else { return Ok(None) };
    let err = |message: String| PipelineError::Checkpoint { path: path.clone(), message };
    let bytes = fs::read(&path).map_err(|e| err(e.to_string()))?;
    let state: EvidenceState = serde_json::from_slice(&bytes).map_err(|e| err(e.to_string()))?;
    if state.evidence_id != evidence_id {
        return Err(err(format!("belongs to evidence `{}`", state.evidence_id)));
    }
    if state.fingerprint != config.fingerprint() {
        return Err(err("written with a different configuration".into()));
    }
    Ok(Some(state))
}

/// Options that affect how, not what, a run computes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub resume: bool,
    /// Stop every evidence after this iteration, leaving checkpoints behind.
    pub stop_after: Option<u32>,
}

fn process_evidence(
    group: &EvidenceGroup,
    config: &RunConfig,
    gateway: &Gateway,
    options: RunOptions,
) -> Result<EvidenceState, PipelineError> {
    let dir = config.checkpoint_dir.as_deref();
    let index = build_target_index(group, gateway)?;
    let resumed = match (options.resume, dir) {
        (true, Some(d)) => load_checkpoint(d, &group.evidence.evidence_id, config)?,
        _ => None,
    };
    let mut state = match resumed {
        Some(s) => s,
        None => {
            let s = start_evidence(group, &index, config, gateway)?;
            if let Some(d) = dir {
                write_checkpoint(d, &s)?;
            }
            s
        }
    };
    while !state.converged && options.stop_after.is_none_or(|stop| state.iteration < stop) {
        state = iterate(&state, group, &index, config, gateway)?;
        if let Some(d) = dir {
            write_checkpoint(d, &state)?;
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub evidence_id: String,
    pub status: EvidenceStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub iterations: u32,
    pub converged: bool,
    pub objective_history: Vec<f64>,
    pub records: Vec<IterationRecord>,
    /// Breakdowns of the final selected set.
    pub selected: Vec<ObjectiveBreakdown<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub selection: SelectionStrategy,
    pub lambda_d: f64,
    pub lambda_u: f64,
    pub n_samples: usize,
    pub failed_evidences: usize,
    pub origin_composition: BTreeMap<Origin, usize>,
    pub evidences: Vec<EvidenceReport>,
    pub warnings: Vec<String>,
}

impl RunReport {
    /// Whether every evidence's objective never increased.
    pub fn objectives_monotone(&self) -> bool {
        self.evidences.iter().all(|e| e.objective_history.windows(2).all(|w| w[1] <= w[0]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Sorted by `(evidence_id, sample_id)`.
    pub dataset: Vec<LabeledExample>,
    pub report: RunReport,
    /// Final selected samples per evidence.
    pub populations: BTreeMap<String, Vec<SyntheticSample>>,
    /// Every sample ever selected per evidence, for lineage tracing.
    pub ancestry: BTreeMap<String, BTreeMap<SampleId, SyntheticSample>>,
}

/// Runs every evidence independently and assembles the dataset.
pub fn run(
    config: &RunConfig,
    corpus: &TargetCorpus,
    gateway: &Gateway,
    options: RunOptions,
) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    let workers = config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(config.endpoints.max_in_flight)
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let results: Vec<Result<EvidenceState, PipelineError>> =
        pool.install(|| corpus.groups().par_iter().map(|g| process_evidence(g, config, gateway, options)).collect());

    // Checkpoint and configuration problems abort the run; anything else
    // fails only its evidence.
    let mut states = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Err(e @ (PipelineError::Checkpoint { .. } | PipelineError::Config(_))) => return Err(e),
            other => states.push(other),
        }
    }

    let mut dataset = Vec::new();
    let mut populations = BTreeMap::new();
    let mut ancestry = BTreeMap::new();
    let mut evidences = Vec::new();
    let mut warnings = Vec::new();
    let mut origin_composition: BTreeMap<Origin, usize> = Origin::ALL.iter().map(|&o| (o, 0)).collect();
    let mut failed = 0;
    for (group, result) in corpus.groups().iter().zip(states) {
        let id = group.evidence.evidence_id.clone();
        match result {
            Ok(state) => {
                for s in &state.selected {
                    dataset.push(s.to_labeled(&group.evidence.text));
                    *origin_composition.entry(s.origin).or_default() += 1;
                }
                warnings.extend(state.warnings.iter().cloned());
                evidences.push(EvidenceReport {
                    evidence_id: id.clone(),
                    status: EvidenceStatus::Ok,
                    error: None,
                    iterations: state.iteration,
                    converged: state.converged,
                    objective_history: state.objective_history,
                    records: state.records,
                    selected: state.breakdowns,
                });
                ancestry.insert(id.clone(), state.ancestry);
                populations.insert(id, state.selected);
            }
            Err(e) => {
                failed += 1;
                log::error!("{id}: {e}");
                warnings.push(format!("{id}: {e}"));
                evidences.push(EvidenceReport {
                    evidence_id: id,
                    status: EvidenceStatus::Failed,
                    error: Some(e.to_string()),
                    iterations: 0,
                    converged: false,
                    objective_history: Vec::new(),
                    records: Vec::new(),
                    selected: Vec::new(),
                });
            }
        }
    }
    if failed == corpus.len() {
        let first = warnings.first().cloned().unwrap_or_default();
        return Err(PipelineError::AllFailed { count: failed, first });
    }
    dataset.sort_by(|a, b| (&a.evidence_id, &a.sample_id).cmp(&(&b.evidence_id, &b.sample_id)));
    let report = RunReport {
        seed: config.seed,
        selection: config.selection,
        lambda_d: config.lambda_d,
        lambda_u: config.lambda_u,
        n_samples: dataset.len(),
        failed_evidences: failed,
        origin_composition,
        evidences,
        warnings,
    };
    Ok(RunOutput { dataset, report, populations, ancestry })
}

/// Recomputes objective breakdowns for an emitted dataset.
pub fn score_examples(
    examples: &[LabeledExample],
    corpus: &TargetCorpus,
    weights: Weights<f64>,
    gateway: &Gateway,
) -> Result<Vec<ObjectiveBreakdown<f64>>, PipelineError> {
    let mut by_evidence: BTreeMap<&str, Vec<&LabeledExample>> = BTreeMap::new();
    for e in examples {
        if corpus.get(&e.evidence_id).is_none() {
            return Err(PipelineError::UnknownEvidence(e.evidence_id.clone()));
        }
        by_evidence.entry(&e.evidence_id).or_default().push(e);
    }
    let mut scored: HashMap<(&str, &SampleId), ObjectiveBreakdown<f64>> = HashMap::new();
    for (id, rows) in by_evidence {
        let group = corpus.get(id).expect("checked above");
        let index = build_target_index(group, gateway)?;
        let claims: Vec<&str> = rows.iter().map(|r| r.claim.as_str()).collect();
        let vectors = gateway.embed(&claims)?;
        for (row, v) in rows.iter().zip(&vectors) {
            let label = HardLabel::from_bit(row.label).map_err(|e| PipelineError::Config(e.to_string()))?;
            let d = index.nearest_target(v, id).map_err(|e| PipelineError::Config(e.to_string()))?.distance;
            let u = gateway.utility(&row.evidence, &row.claim, label)?;
            let b = ObjectiveBreakdown::new(row.sample_id.clone(), d * d, ldiv(row.certainty, label), u, weights)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            scored.insert((id, &row.sample_id), b);
        }
    }
    Ok(examples.iter().map(|e| scored[&(e.evidence_id.as_str(), &e.sample_id)].clone()).collect())
}
