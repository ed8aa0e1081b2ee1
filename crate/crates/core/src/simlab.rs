//! Synthetic entailment world with computable ground truth.
//!
//! Evidences are sets of atomic fact tokens (`f_e003_01`); off-world
//! distractors (`d_017`) belong to no evidence. A claim is true for an
//! evidence iff all of its facts belong to it. Claims render one fact per
//! sentence, so every service can recover the fact list from text. The
//! simulated services implement the whole wire protocol with tunable noise.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, LazyLock};
use std::thread::JoinHandle;
use std::time::Duration;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::certainty::HardLabel;
use crate::corpus::{Evidence, LabeledExample, Origin, TargetCorpus};
use crate::gateway::mock::{field, text_field};
use crate::gateway::prompts::{self, ENTAILED_MARKER, REPHRASE_MARKER};
use crate::gateway::{canonical_json, Endpoint, Gateway, GatewayError, MemoryCache, ResponseCache, Role, Transport};
use crate::pipeline::{run, PipelineError, RunConfig, RunOptions, RunOutput, SelectionStrategy};
use crate::rng::{substream, Stream};

static FACT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(f_e\d+_\d+|d_\d+)\b").expect("valid regex"));

const TEMPLATES: [(&str, &str); 4] = [
    ("The document reports ", "."),
    ("The text states ", "."),
    ("It is noted that ", "."),
    ("Records clearly confirm ", "."),
];

const FILLERS: [&str; 8] = ["also", "indeed", "further", "notably", "plainly", "reportedly", "still", "thus"];

const TARGETS_PER_EVIDENCE: usize = 3;
const MAX_CLAIM_FACTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("world sizes must be positive")]
    Size,
    #[error("{name} must lie in [0, 1], got {value}")]
    Param { name: &'static str, value: f64 },
    #[error("unknown evidence `{0}`")]
    UnknownEvidence(String),
    #[error("claim has no recognizable facts: {0:?}")]
    Unparseable(String),
}

/// Noise knobs of the simulated services.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub generator_fidelity: f64,
    pub teacher_noise: f64,
    pub link_teacher_noise: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self { generator_fidelity: 0.8, teacher_noise: 0.3, link_teacher_noise: 0.3 }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, value) in [
            ("generator_fidelity", self.generator_fidelity),
            ("teacher_noise", self.teacher_noise),
            ("link_teacher_noise", self.link_teacher_noise),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimError::Param { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvidence {
    pub evidence_id: String,
    pub facts: Vec<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimClaim {
    /// Sorted, unique.
    pub facts: Vec<String>,
    pub true_label: HardLabel,
}

impl SimClaim {
    pub fn text(&self) -> String {
        render_claim(&self.facts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub seed: u64,
    pub evidences: Vec<SimEvidence>,
    pub distractors: Vec<String>,
    /// Target claims per evidence, as fact lists.
    pub targets: BTreeMap<String, Vec<Vec<String>>>,
    pub params: SimParams,
    universe: Vec<String>,
    fact_slot: HashMap<String, usize>,
    by_text: HashMap<String, usize>,
    by_id: HashMap<String, usize>,
}

/// One sentence per fact, facts in the given order.
pub fn render_claim(facts: &[String]) -> String {
    render_with(facts, 0)
}

fn render_with(facts: &[String], template: usize) -> String {
    let (pre, post) = TEMPLATES[template % TEMPLATES.len()];
    facts.iter().map(|f| format!("{pre}{f}{post}")).collect::<Vec<_>>().join(" ")
}

/// Sorted unique fact tokens mentioned in `text`.
pub fn parse_facts(text: &str) -> Vec<String> {
    let set: BTreeSet<&str> = FACT.find_iter(text).map(|m| m.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

/// Deterministic world. Evidence ids are `e000`, `e001`, ...
pub fn make_world(
    seed: u64,
    n_evidences: usize,
    facts_per_evidence: usize,
    params: SimParams,
) -> Result<World, SimError> {
    if n_evidences == 0 || facts_per_evidence == 0 {
        return Err(SimError::Size);
    }
    params.validate()?;
    let mut rng = substream(seed, &["world"]);
    let evidences: Vec<SimEvidence> = (0..n_evidences)
        .map(|i| {
            let facts: Vec<String> = (0..facts_per_evidence).map(|j| format!("f_e{i:03}_{j:02}")).collect();
            SimEvidence { evidence_id: format!("e{i:03}"), text: render_claim(&facts), facts }
        })
        .collect();
    let distractors: Vec<String> = (0..2 * n_evidences + 10).map(|k| format!("d_{k:03}")).collect();

    let mut targets = BTreeMap::new();
    for ev in &evidences {
        let mut list: Vec<Vec<String>> = Vec::new();
        while list.len() < TARGETS_PER_EVIDENCE {
            let mut facts = random_subset(&ev.facts, &mut rng);
            if rng.gen_bool(0.5) {
                let i = rng.gen_range(0..facts.len());
                facts[i] = distractors.choose(&mut rng).expect("non-empty").clone();
            }
            facts.sort();
            facts.dedup();
            // Small evidences may not have enough distinct subsets.
            if !list.contains(&facts) || list.len() >= ev.facts.len() * 4 {
                list.push(facts);
            }
        }
        targets.insert(ev.evidence_id.clone(), list);
    }

    let universe: Vec<String> =
        evidences.iter().flat_map(|e| e.facts.iter().cloned()).chain(distractors.iter().cloned()).collect();
    let fact_slot = universe.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
    let by_text = evidences.iter().enumerate().map(|(i, e)| (e.text.clone(), i)).collect();
    let by_id = evidences.iter().enumerate().map(|(i, e)| (e.evidence_id.clone(), i)).collect();
    Ok(World { seed, evidences, distractors, targets, params, universe, fact_slot, by_text, by_id })
}

fn random_subset<R: Rng + ?Sized>(facts: &[String], rng: &mut R) -> Vec<String> {
    let m = rng.gen_range(1..=facts.len().min(MAX_CLAIM_FACTS));
    index::sample(rng, facts.len(), m).into_iter().map(|i| facts[i].clone()).collect()
}

impl World {
    pub fn evidence(&self, evidence_id: &str) -> Option<&SimEvidence> {
        self.by_id.get(evidence_id).map(|&i| &self.evidences[i])
    }

    /// Every fact token: evidence facts, then distractors.
    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    /// True label of a fact list for an evidence.
    pub fn true_label(&self, evidence_id: &str, facts: &[String]) -> Result<HardLabel, SimError> {
        let ev = self.evidence(evidence_id).ok_or_else(|| SimError::UnknownEvidence(evidence_id.to_string()))?;
        Ok(if facts.iter().all(|f| ev.facts.contains(f)) { HardLabel::Entailed } else { HardLabel::NotEntailed })
    }

    pub fn target_corpus(&self) -> TargetCorpus {
        let records = self.evidences.iter().flat_map(|ev| {
            self.targets[&ev.evidence_id].iter().map(move |facts| {
                (Evidence { evidence_id: ev.evidence_id.clone(), text: ev.text.clone() }, render_claim(facts))
            })
        });
        TargetCorpus::from_records(records).expect("world has targets for every evidence")
    }

    fn random_fact<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.universe[rng.gen_range(0..self.universe.len())]
    }
}

/// A claim that has `target_label` with probability `g` and the opposite
/// label otherwise. Entailed claims are evidence-fact subsets; non-entailed
/// claims consist of distractors only, so no sentence deletion can make
/// them true.
pub fn sim_generate<R: Rng + ?Sized>(
    world: &World,
    evidence: &SimEvidence,
    target_label: HardLabel,
    g: f64,
    rng: &mut R,
) -> SimClaim {
    let label = if rng.gen::<f64>() < g { target_label } else { target_label.flipped() };
    let mut facts = random_subset(&evidence.facts, rng);
    if label == HardLabel::NotEntailed {
        let picks = index::sample(rng, world.distractors.len(), facts.len().min(world.distractors.len()));
        facts = picks.into_iter().map(|i| world.distractors[i].clone()).collect();
    }
    facts.sort();
    SimClaim { facts, true_label: label }
}

/// `(1 − ε)·[hypothesis ⊆ premise] + ε·u` with `u ~ U(0, 1)`.
pub fn sim_entail<R: Rng + ?Sized>(premise: &[String], hypothesis: &[String], eps: f64, rng: &mut R) -> f64 {
    let truth = if hypothesis.iter().all(|f| premise.contains(f)) { 1.0 } else { 0.0 };
    let u: f64 = rng.gen();
    (1.0 - eps) * truth + eps * u
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEvaluation {
    pub n: usize,
    pub label_accuracy: f64,
    pub origin_composition: BTreeMap<Origin, usize>,
    pub mean_certainty: f64,
}

/// Fraction of samples whose hard label equals the world's true label.
pub fn evaluate_dataset(world: &World, dataset: &[LabeledExample]) -> Result<DatasetEvaluation, SimError> {
    let mut correct = 0usize;
    let mut certainty = 0.0;
    let mut origin_composition: BTreeMap<Origin, usize> = Origin::ALL.iter().map(|&o| (o, 0)).collect();
    for ex in dataset {
        let facts = parse_facts(&ex.claim);
        if facts.is_empty() {
            return Err(SimError::Unparseable(ex.claim.clone()));
        }
        if world.true_label(&ex.evidence_id, &facts)?.bit() == ex.label {
            correct += 1;
        }
        certainty += ex.certainty;
        *origin_composition.entry(ex.origin).or_default() += 1;
    }
    let n = dataset.len();
    let denom = n.max(1) as f64;
    Ok(DatasetEvaluation {
        n,
        label_accuracy: if n == 0 { 0.0 } else { correct as f64 / denom },
        origin_composition,
        mean_certainty: certainty / denom,
    })
}

/// Simulated services. Each response is a pure function of the request:
/// randomness comes from a stream keyed by the world seed, the endpoint and
/// the canonical request.
#[derive(Debug, Clone)]
pub struct SimBackend {
    world: Arc<World>,
    entail_noise: f64,
}

impl SimBackend {
    /// Services with the initial-teacher noise on `/v1/entail`.
    pub fn new(world: Arc<World>) -> Self {
        let entail_noise = world.params.teacher_noise;
        Self { world, entail_noise }
    }

    /// Services with the link-teacher noise on `/v1/entail`.
    pub fn link(world: Arc<World>) -> Self {
        let entail_noise = world.params.link_teacher_noise;
        Self { world, entail_noise }
    }

    fn stream(&self, endpoint: Endpoint, body: &Value) -> Stream {
        substream(self.world.seed, &["sim", endpoint.name(), &canonical_json(body)])
    }

    fn complete(&self, prompt: &str, rng: &mut Stream) -> String {
        let count = prompts::requested_count(prompt).unwrap_or(1);
        let docs = prompts::documents(prompt);
        let g = self.world.params.generator_fidelity;
        if prompt.contains(REPHRASE_MARKER) && docs.len() >= 2 {
            return (0..count)
                .map(|k| format!("<answer {k}>{}</answer {k}>", self.fill_gaps(docs[0], docs[1], g, rng)))
                .collect();
        }
        let Some(evidence) = docs.first().and_then(|d| self.world.by_text.get(*d)).map(|&i| &self.world.evidences[i])
        else {
            return "I cannot find the document.".to_string();
        };
        let label = if prompt.contains(ENTAILED_MARKER) { HardLabel::Entailed } else { HardLabel::NotEntailed };
        (0..count)
            .map(|k| {
                format!("<summary {k}>{}</summary {k}>", sim_generate(&self.world, evidence, label, g, rng).text())
            })
            .collect()
    }

    /// Restores each masked fact with probability `g`, otherwise substitutes
    /// a random fact of the universe; masked template words become fillers.
    fn fill_gaps(&self, original: &str, masked: &str, g: f64, rng: &mut Stream) -> String {
        let orig: Vec<&str> = original.split_whitespace().collect();
        masked
            .split_whitespace()
            .enumerate()
            .map(|(i, w)| {
                if w != "_" {
                    return w.to_string();
                }
                let o = orig.get(i).copied().unwrap_or("");
                if let Some(m) = FACT.find(o) {
                    if rng.gen::<f64>() < g {
                        o.to_string()
                    } else {
                        format!("{}{}{}", &o[..m.start()], self.world.random_fact(rng), &o[m.end()..])
                    }
                } else {
                    let filler = FILLERS[rng.gen_range(0..FILLERS.len())];
                    let tail: String = o.chars().rev().take_while(|c| !c.is_alphanumeric()).collect();
                    let tail: String = tail.chars().rev().collect();
                    if o.starts_with(char::is_uppercase) {
                        let mut c = filler.chars();
                        let first = c.next().expect("non-empty").to_ascii_uppercase();
                        format!("{first}{}{tail}", c.as_str())
                    } else {
                        format!("{filler}{tail}")
                    }
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Sentence rotations in varied templates; with probability `1 − g` one
    /// fact is replaced by a random fact of the universe.
    fn paraphrase(&self, text: &str, n: usize, rng: &mut Stream) -> Vec<String> {
        let facts = parse_facts(text);
        if facts.is_empty() {
            return vec![text.to_string(); n];
        }
        let g = self.world.params.generator_fidelity;
        (1..=n)
            .map(|i| {
                let mut f = facts.clone();
                let k = i % f.len();
                f.rotate_left(k);
                if rng.gen::<f64>() >= g {
                    let j = rng.gen_range(0..f.len());
                    f[j] = self.world.random_fact(rng).to_string();
                }
                render_with(&f, i)
            })
            .collect()
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut jitter = substream(self.world.seed, &["embed", text]);
        let mut v: Vec<f64> = (0..self.world.universe.len()).map(|_| 1e-4 * (jitter.gen::<f64>() - 0.5)).collect();
        for f in parse_facts(text) {
            if let Some(&slot) = self.world.fact_slot.get(&f) {
                v[slot] += 1.0;
            }
        }
        v
    }
}

impl Transport for SimBackend {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError> {
        let mut rng = self.stream(endpoint, body);
        Ok(match endpoint {
            Endpoint::Complete => {
                json!({"completions": [self.complete(text_field(body, "prompt", endpoint)?, &mut rng)]})
            }
            Endpoint::Entail => {
                let premise = text_field(body, "premise", endpoint)?;
                let hypothesis = text_field(body, "hypothesis", endpoint)?;
                let p = if premise == hypothesis {
                    1.0
                } else {
                    sim_entail(&parse_facts(premise), &parse_facts(hypothesis), self.entail_noise, &mut rng)
                };
                json!({"probability": p})
            }
            Endpoint::Utility => {
                // A weak verifier: its belief barely depends on the input.
                let u: f64 = rng.gen();
                let p1 = 0.5 + 0.15 * (2.0 * u - 1.0);
                let label = field(body, "label", endpoint)?.as_u64();
                let p = match label {
                    Some(1) => p1,
                    Some(0) => 1.0 - p1,
                    _ => return Err(GatewayError::Protocol { endpoint, message: "label must be 0 or 1".into() }),
                };
                json!({"cross_entropy": -p.ln()})
            }
            Endpoint::Embed => {
                let texts = field(body, "texts", endpoint)?
                    .as_array()
                    .ok_or_else(|| GatewayError::Protocol { endpoint, message: "`texts` is not an array".into() })?;
                let vectors: Vec<Vec<f64>> = texts.iter().map(|t| self.embed(t.as_str().unwrap_or(""))).collect();
                json!({"vectors": vectors})
            }
            Endpoint::Paraphrase => {
                let n = field(body, "n", endpoint)?.as_u64().unwrap_or(1) as usize;
                json!({"texts": self.paraphrase(text_field(body, "text", endpoint)?, n, &mut rng)})
            }
        })
    }
}

/// In-process gateway over the simulated services.
pub fn sim_gateway(world: Arc<World>, cache: Option<Arc<dyn ResponseCache>>) -> Gateway {
    let mut b = Gateway::builder()
        .role(Role::LinkTeacher, Arc::new(SimBackend::link(world.clone())))
        .all_roles(Arc::new(SimBackend::new(world)));
    if let Some(c) = cache {
        b = b.cache(c);
    }
    b.build()
}

/// Serves a transport over HTTP on a loopback port until dropped.
pub struct LoopbackServer {
    url: String,
    stop: Arc<AtomicBool>,
    requests: Arc<AtomicU64>,
    workers: Vec<JoinHandle<()>>,
}

impl LoopbackServer {
    pub fn start(transport: Arc<dyn Transport>) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server.server_addr().to_ip().ok_or_else(|| std::io::Error::other("no ip address"))?;
        let server = Arc::new(server);
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicU64::new(0));
        let workers = (0..4)
            .map(|_| {
                let (server, stop, requests, transport) =
                    (server.clone(), stop.clone(), requests.clone(), transport.clone());
                std::thread::spawn(move || {
                    while !stop.load(Ordering::Relaxed) {
                        match server.recv_timeout(Duration::from_millis(50)) {
                            Ok(Some(req)) => {
                                requests.fetch_add(1, Ordering::Relaxed);
                                serve(req, transport.as_ref());
                            }
                            Ok(None) => {}
                            Err(_) => break,
                        }
                    }
                })
            })
            .collect();
        Ok(Self { url: format!("http://{addr}"), stop, requests, workers })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn serve(mut req: tiny_http::Request, transport: &dyn Transport) {
    let (status, body) = handle(&mut req, transport);
    let header = tiny_http::Header::from_bytes("content-type", "application/json").expect("static header");
    let resp = tiny_http::Response::from_string(body.to_string()).with_status_code(status).with_header(header);
    let _ = req.respond(resp);
}

fn handle(req: &mut tiny_http::Request, transport: &dyn Transport) -> (u16, Value) {
    if *req.method() != tiny_http::Method::Post {
        return (405, json!({"error": "method not allowed"}));
    }
    let Some(endpoint) = Endpoint::from_path(req.url()) else {
        return (404, json!({"error": format!("unknown path {}", req.url())}));
    };
    let mut raw = String::new();
    if req.as_reader().read_to_string(&mut raw).is_err() {
        return (400, json!({"error": "unreadable body"}));
    }
    let Ok(body) = serde_json::from_str::<Value>(&raw) else {
        return (400, json!({"error": "malformed JSON"}));
    };
    match transport.post(endpoint, &body) {
        Ok(v) => (200, v),
        Err(GatewayError::Protocol { message, .. }) => (400, json!({"error": message})),
        Err(e) => (500, json!({"error": e.to_string()})),
    }
}

/// One simulator experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub n_evidences: usize,
    pub facts_per_evidence: usize,
    pub sim: SimParams,
    /// Pipeline settings; `seed` and `selection` are set per run.
    pub config: RunConfig,
    pub compare_random: bool,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            n_evidences: 30,
            facts_per_evidence: 5,
            sim: SimParams::default(),
            config: RunConfig::default(),
            compare_random: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub objective: DatasetEvaluation,
    pub random: Option<DatasetEvaluation>,
    pub objectives_monotone: bool,
    pub upstream_requests: u64,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Runs the pipeline on a fresh world for `seed`; optionally repeats it with
/// random selection over the same services and cache.
pub fn run_seed(params: &ExperimentParams, seed: u64) -> Result<(SeedOutcome, RunOutput), ExperimentError> {
    let world = Arc::new(make_world(seed, params.n_evidences, params.facts_per_evidence, params.sim)?);
    let corpus = world.target_corpus();
    let gateway = sim_gateway(world.clone(), Some(Arc::new(MemoryCache::new())));
    let config = RunConfig { seed, selection: SelectionStrategy::Objective, ..params.config.clone() };
    let out = run(&config, &corpus, &gateway, RunOptions::default())?;
    let objective = evaluate_dataset(&world, &out.dataset)?;
    let random = if params.compare_random {
        let config = RunConfig { selection: SelectionStrategy::Random, ..config };
        let rnd = run(&config, &corpus, &gateway, RunOptions::default())?;
        Some(evaluate_dataset(&world, &rnd.dataset)?)
    } else {
        None
    };
    let outcome = SeedOutcome {
        seed,
        objective,
        random,
        objectives_monotone: out.report.objectives_monotone(),
        upstream_requests: gateway.upstream_requests(),
    };
    Ok((outcome, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub params: ExperimentParams,
    pub runs: Vec<SeedOutcome>,
    pub mean_objective_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_random_accuracy: Option<f64>,
    /// Mean of objective minus random accuracy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_difference: Option<f64>,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided sign-test p-value for objective beating random.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign_test_p: Option<f64>,
    pub all_monotone: bool,
}

/// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    let mut p = 0.0;
    let mut c = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            c = c * (n - k + 1) as f64 / k as f64;
        }
        if k >= wins {
            p += c;
        }
    }
    p / 2f64.powi(n as i32)
}

/// Seeds `base_seed .. base_seed + runs`, in parallel.
pub fn run_experiment(
    params: &ExperimentParams,
    base_seed: u64,
    runs: usize,
) -> Result<ExperimentSummary, ExperimentError> {
    use rayon::prelude::*;
    let outcomes: Vec<SeedOutcome> = (0..runs as u64)
        .into_par_iter()
        .map(|i| run_seed(params, base_seed + i).map(|(o, _)| o))
        .collect::<Result<_, _>>()?;
    let n = outcomes.len().max(1) as f64;
    let mean_objective_accuracy = outcomes.iter().map(|o| o.objective.label_accuracy).sum::<f64>() / n;
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    let mut diffs = Vec::new();
    for o in &outcomes {
        if let Some(r) = &o.random {
            let d = o.objective.label_accuracy - r.label_accuracy;
            diffs.push(d);
            match d.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => wins += 1,
                Some(std::cmp::Ordering::Less) => losses += 1,
                _ => ties += 1,
            }
        }
    }
    let compared = params.compare_random && !outcomes.is_empty();
    Ok(ExperimentSummary {
        params: params.clone(),
        mean_objective_accuracy,
        mean_random_accuracy: compared
            .then(|| outcomes.iter().filter_map(|o| o.random.as_ref()).map(|r| r.label_accuracy).sum::<f64>() / n),
        mean_difference: compared.then(|| diffs.iter().sum::<f64>() / n),
        wins,
        losses,
        ties,
        sign_test_p: compared.then(|| sign_test_p(wins, losses)),
        all_monotone: outcomes.iter().all(|o| o.objectives_monotone),
        runs: outcomes,
    })
}
