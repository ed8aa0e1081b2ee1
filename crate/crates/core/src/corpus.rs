//! Dataset schemas and JSONL ingestion/emission.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certainty::HardLabel;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no target examples")]
    Empty,
    #[error("line {line}: evidence `{evidence_id}` has conflicting text")]
    ConflictingEvidence { line: usize, evidence_id: String },
    #[error("evidence `{0}` has no target claims")]
    NoClaims(String),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    pub evidence_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TargetExample {
    pub evidence_id: String,
    pub claim: String,
}

/// One evidence and its unlabeled target claims, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceGroup {
    pub evidence: Evidence,
    pub targets: Vec<TargetExample>,
}

impl EvidenceGroup {
    pub fn claims(&self) -> impl Iterator<Item = &str> {
        self.targets.iter().map(|t| t.claim.as_str())
    }
}

/// Target corpus grouped per evidence, ordered by evidence id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TargetCorpus {
    groups: Vec<EvidenceGroup>,
}

impl TargetCorpus {
    /// Groups loose records; duplicates collapse and evidences sort by id.
    pub fn from_records<I>(records: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (Evidence, String)>,
    {
        let mut builder = GroupBuilder::default();
        for (i, (evidence, claim)) in records.into_iter().enumerate() {
            builder.push(i + 1, evidence, claim)?;
        }
        builder.finish()
    }

    pub fn groups(&self) -> &[EvidenceGroup] {
        &self.groups
    }

    pub fn get(&self, evidence_id: &str) -> Option<&EvidenceGroup> {
        self.groups.binary_search_by(|g| g.evidence.evidence_id.as_str().cmp(evidence_id)).ok().map(|i| &self.groups[i])
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn target_count(&self) -> usize {
        self.groups.iter().map(|g| g.targets.len()).sum()
    }
}

#[derive(Default)]
struct GroupBuilder {
    groups: BTreeMap<String, EvidenceGroup>,
}

impl GroupBuilder {
    fn push(&mut self, line: usize, evidence: Evidence, claim: String) -> Result<(), CorpusError> {
        let parse = |message: &str| CorpusError::Parse { line, message: message.to_string() };
        if evidence.evidence_id.trim().is_empty() {
            return Err(parse("empty evidence_id"));
        }
        if evidence.text.trim().is_empty() {
            return Err(parse("empty evidence text"));
        }
        if claim.trim().is_empty() {
            return Err(parse("empty claim"));
        }
        let id = evidence.evidence_id.clone();
        let group = self
            .groups
            .entry(id.clone())
            .or_insert_with(|| EvidenceGroup { evidence: evidence.clone(), targets: Vec::new() });
        if group.evidence.text != evidence.text {
            return Err(CorpusError::ConflictingEvidence { line, evidence_id: id });
        }
        if !group.targets.iter().any(|t| t.claim == claim) {
            group.targets.push(TargetExample { evidence_id: id, claim });
        }
        Ok(())
    }

    fn finish(self) -> Result<TargetCorpus, CorpusError> {
        if self.groups.is_empty() {
            return Err(CorpusError::Empty);
        }
        if let Some(g) = self.groups.values().find(|g| g.targets.is_empty()) {
            return Err(CorpusError::NoClaims(g.evidence.evidence_id.clone()));
        }
        Ok(TargetCorpus { groups: self.groups.into_values().collect() })
    }
}

#[derive(Deserialize)]
struct TargetRecord {
    evidence_id: String,
    evidence: String,
    claim: String,
}

/// Reads a targets JSONL file: `{"evidence_id", "evidence", "claim"}` per line.
pub fn ingest_targets(path: impl AsRef<Path>) -> Result<TargetCorpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    parse_targets(BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::io(path, source),
        other => other,
    })
}

pub fn parse_targets(reader: impl BufRead) -> Result<TargetCorpus, CorpusError> {
    let mut builder = GroupBuilder::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::io(Path::new("<targets>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TargetRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
        let evidence = Evidence { evidence_id: rec.evidence_id, text: rec.evidence };
        builder.push(line_no, evidence, rec.claim)?;
    }
    builder.finish()
}

/// How a synthetic claim came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Fewshot,
    PartialRephrase,
    Paraphrase,
    DropSentence,
}

impl Origin {
    pub const ALL: [Origin; 4] = [Origin::Fewshot, Origin::PartialRephrase, Origin::Paraphrase, Origin::DropSentence];

    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Fewshot => "fewshot",
            Origin::PartialRephrase => "partial_rephrase",
            Origin::Paraphrase => "paraphrase",
            Origin::DropSentence => "drop_sentence",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Content-derived sample identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(String);

impl SampleId {
    pub fn derive(evidence_id: &str, claim: &str, label: HardLabel) -> Self {
        let mut h = Sha256::new();
        h.update(evidence_id.as_bytes());
        h.update([0x1f]);
        h.update(claim.as_bytes());
        h.update([0x1f, b'0' + label.bit()]);
        Self(hex::encode(&h.finalize()[..8]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SampleId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A generated claim with its assigned label, certainty and lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub sample_id: SampleId,
    pub evidence_id: String,
    pub claim: String,
    #[serde(with = "label_bit")]
    pub hard_label: HardLabel,
    pub certainty: f64,
    pub generation: u32,
    pub parent_id: Option<SampleId>,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_key: Option<String>,
}

impl SyntheticSample {
    pub fn root(evidence_id: &str, claim: String, label: HardLabel, certainty: f64) -> Self {
        Self {
            sample_id: SampleId::derive(evidence_id, &claim, label),
            evidence_id: evidence_id.to_string(),
            claim,
            hard_label: label,
            certainty,
            generation: 0,
            parent_id: None,
            origin: Origin::Fewshot,
            utility: None,
            embedding_key: None,
        }
    }

    /// Child of `self`; label and evidence are inherited.
    pub fn child(&self, claim: String, origin: Origin, certainty: f64) -> Self {
        Self {
            sample_id: SampleId::derive(&self.evidence_id, &claim, self.hard_label),
            evidence_id: self.evidence_id.clone(),
            claim,
            hard_label: self.hard_label,
            certainty,
            generation: self.generation + 1,
            parent_id: Some(self.sample_id.clone()),
            origin,
            utility: None,
            embedding_key: None,
        }
    }

    /// Checks the certainty range and the root/lineage coupling.
    pub fn is_well_formed(&self) -> bool {
        let root = self.generation == 0;
        (0.0..=1.0).contains(&self.certainty)
            && root == (self.origin == Origin::Fewshot)
            && root == self.parent_id.is_none()
    }

    pub fn to_labeled(&self, evidence_text: &str) -> LabeledExample {
        LabeledExample {
            evidence_id: self.evidence_id.clone(),
            evidence: evidence_text.to_string(),
            claim: self.claim.clone(),
            label: self.hard_label.bit(),
            certainty: self.certainty,
            origin: self.origin,
            generation: self.generation,
            sample_id: self.sample_id.clone(),
        }
    }
}

mod label_bit {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::certainty::HardLabel;

    pub fn serialize<S: Serializer>(label: &HardLabel, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(label.bit())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<HardLabel, D::Error> {
        let bit = u8::deserialize(d)?;
        HardLabel::from_bit(bit).map_err(serde::de::Error::custom)
    }
}

/// Output record; field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub evidence_id: String,
    pub evidence: String,
    pub claim: String,
    pub label: u8,
    pub certainty: f64,
    pub origin: Origin,
    pub generation: u32,
    pub sample_id: SampleId,
}

/// Writes records sorted by `(evidence_id, sample_id)`, one JSON object per line.
pub fn emit_dataset(samples: &[LabeledExample], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut sorted: Vec<&LabeledExample> = samples.iter().collect();
    sorted.sort_by(|a, b| (&a.evidence_id, &a.sample_id).cmp(&(&b.evidence_id, &b.sample_id)));
    write_jsonl(path, sorted)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledExample>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabeledExample =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse { line: idx + 1, message: e.to_string() })?;
        if rec.label > 1 {
            return Err(CorpusError::Parse { line: idx + 1, message: "label must be 0 or 1".into() });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Serializes each item as one compact JSON line.
pub fn write_jsonl<T, I>(path: &Path, items: I) -> Result<(), CorpusError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| CorpusError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<TargetCorpus, CorpusError> {
        parse_targets(s.as_bytes())
    }

    #[test]
    fn groups_by_evidence() {
        let c = parse(
            r#"{"evidence_id":"e2","evidence":"B","claim":"z"}
{"evidence_id":"e1","evidence":"A","claim":"x"}
{"evidence_id":"e1","evidence":"A","claim":"y"}
{"evidence_id":"e1","evidence":"A","claim":"x"}"#,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.groups()[0].evidence.evidence_id, "e1");
        assert_eq!(c.groups()[0].claims().collect::<Vec<_>>(), ["x", "y"]);
        assert_eq!(c.get("e2").unwrap().targets.len(), 1);
        assert!(c.get("e3").is_none());
    }

    #[test]
    fn empty_input() {
        let err = parse("").unwrap_err();
        assert_eq!(err.to_string(), "no target examples");
    }

    #[test]
    fn missing_claim_names_line() {
        let err = parse(
            "{\"evidence_id\":\"e1\",\"evidence\":\"A\",\"claim\":\"x\"}\n{\"evidence_id\":\"e1\",\"evidence\":\"A\"}",
        )
        .unwrap_err();
        match err {
            CorpusError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("claim"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse("{\"evidence_id\":\"e1\",\"evidence\":\"A\",\"claim\":\"x\"}\n\n{oops").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 3, .. }));
    }

    #[test]
    fn conflicting_evidence_is_error() {
        let err = parse(
            "{\"evidence_id\":\"e1\",\"evidence\":\"A\",\"claim\":\"x\"}\n{\"evidence_id\":\"e1\",\"evidence\":\"B\",\"claim\":\"y\"}",
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::ConflictingEvidence { line: 2, .. }));
    }

    #[test]
    fn blank_fields_rejected() {
        assert!(parse("{\"evidence_id\":\"e1\",\"evidence\":\"  \",\"claim\":\"x\"}").is_err());
        assert!(parse("{\"evidence_id\":\"e1\",\"evidence\":\"A\",\"claim\":\"\"}").is_err());
    }

    #[test]
    fn sample_id_is_content_derived() {
        let a = SampleId::derive("e1", "claim", HardLabel::Entailed);
        let b = SampleId::derive("e1", "claim", HardLabel::Entailed);
        let c = SampleId::derive("e1", "claim", HardLabel::NotEntailed);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.as_str().len(), 16);
    }

    #[test]
    fn lineage_invariants() {
        let root = SyntheticSample::root("e1", "A. B.".into(), HardLabel::Entailed, 0.9);
        assert!(root.is_well_formed());
        let child = root.child("A.".into(), Origin::DropSentence, 0.8);
        assert!(child.is_well_formed());
        assert_eq!(child.hard_label, root.hard_label);
        assert_eq!(child.generation, 1);
        assert_eq!(child.parent_id.as_ref(), Some(&root.sample_id));
    }

    fn labeled(e: &str, claim: &str) -> LabeledExample {
        let s = SyntheticSample::root(e, claim.into(), HardLabel::Entailed, 0.5);
        s.to_labeled("text")
    }

    #[test]
    fn emit_sorted_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![labeled("e2", "c"), labeled("e1", "b"), labeled("e1", "a")];
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        emit_dataset(&items, &p1).unwrap();
        let mut rev = items.clone();
        rev.reverse();
        emit_dataset(&rev, &p2).unwrap();
        let s1 = std::fs::read(&p1).unwrap();
        assert_eq!(s1, std::fs::read(&p2).unwrap());
        let text = String::from_utf8(s1).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("{\"evidence_id\":\"e1\",\"evidence\":\"text\",\"claim\":"));
        assert!(lines[2].contains("\"evidence_id\":\"e2\""));
        let back = read_dataset(&p1).unwrap();
        assert_eq!(back.len(), 3);
        assert!(back.windows(2).all(|w| (&w[0].evidence_id, &w[0].sample_id) <= (&w[1].evidence_id, &w[1].sample_id)));
    }

    #[test]
    fn emit_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        emit_dataset(&[], &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap().len(), 0);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = ingest_targets("/definitely/not/here.jsonl").unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }
}
