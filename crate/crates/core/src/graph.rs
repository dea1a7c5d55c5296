//! Heterogeneous learner/concept/assessment graph.
//!
//! Nodes carry external string ids from the input file; internally every node
//! kind is indexed densely so edges are plain index pairs. A graph is
//! immutable once constructed. [`load_graph`] rejects files whose graph fails
//! [`HeteroGraph::validate`]; programmatic construction via
//! [`HeteroGraph::new`] applies the same gate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LearnerId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssessmentId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Learner {
    pub ext_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub ext_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assessment {
    pub ext_id: String,
    pub label: String,
}

/// A learner's self-reported state for one concept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowState {
    Know,
    DontKnow,
}

/// One structural defect found by validation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    /// External ids of the offending entities, sorted.
    pub subjects: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    Cycle,
    DuplicateNode,
    DuplicateItemMapping,
    MissingItemMapping,
    DanglingEndpoint,
    PerceptionConflict,
    DuplicateResponse,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::Cycle => "cycle",
            DiagnosticCode::DuplicateNode => "duplicate_node",
            DiagnosticCode::DuplicateItemMapping => "duplicate_item_mapping",
            DiagnosticCode::MissingItemMapping => "missing_item_mapping",
            DiagnosticCode::DanglingEndpoint => "dangling_endpoint",
            DiagnosticCode::PerceptionConflict => "perception_conflict",
            DiagnosticCode::DuplicateResponse => "duplicate_response",
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}): {}",
            self.code.as_str(),
            self.subjects.join(", "),
            self.message
        )
    }
}

/// Raw node and edge lists using internal ids, prior to canonicalization.
/// The synthesizer and tests build graphs from this.
#[derive(Debug, Clone, Default)]
pub struct GraphParts {
    pub learners: Vec<Learner>,
    pub concepts: Vec<Concept>,
    pub assessments: Vec<Assessment>,
    /// (prerequisite, dependent): the first concept should be learned first.
    pub prereq_edges: Vec<(ConceptId, ConceptId)>,
    pub item_concept: Vec<(AssessmentId, ConceptId)>,
    pub know_edges: Vec<(LearnerId, ConceptId)>,
    pub dontknow_edges: Vec<(LearnerId, ConceptId)>,
    pub responses: Vec<(LearnerId, AssessmentId, bool)>,
}

#[derive(Debug, Clone)]
pub struct HeteroGraph {
    learners: Vec<Learner>,
    concepts: Vec<Concept>,
    assessments: Vec<Assessment>,
    prereq_edges: Vec<(ConceptId, ConceptId)>,
    item_concept: Vec<(AssessmentId, ConceptId)>,
    know_edges: Vec<(LearnerId, ConceptId)>,
    dontknow_edges: Vec<(LearnerId, ConceptId)>,
    responses: Vec<(LearnerId, AssessmentId, bool)>,

    // Derived lookup structures, rebuilt on construction.
    learner_index: HashMap<String, LearnerId>,
    concept_index: HashMap<String, ConceptId>,
    assessment_index: HashMap<String, AssessmentId>,
    know_by_learner: Vec<Vec<ConceptId>>,
    dontknow_by_learner: Vec<Vec<ConceptId>>,
    responses_by_learner: Vec<Vec<(AssessmentId, bool)>>,
    prereq_parents: Vec<Vec<ConceptId>>,
    prereq_children: Vec<Vec<ConceptId>>,
    assessed: BTreeSet<ConceptId>,
}

/// The set of concepts covered by at least one assessment item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssessedConceptSet {
    concepts: BTreeSet<ConceptId>,
}

impl AssessedConceptSet {
    pub fn contains(&self, k: ConceptId) -> bool {
        self.concepts.contains(&k)
    }

    pub fn iter(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.concepts.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

/// Split of the assessed concepts from one learner's point of view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionPartition {
    /// Assessed concepts the learner reported knowing.
    pub known: BTreeSet<ConceptId>,
    /// Assessed concepts the learner reported not knowing.
    pub unknown: BTreeSet<ConceptId>,
    /// Assessed concepts the learner never mentioned.
    pub latent: BTreeSet<ConceptId>,
}

impl HeteroGraph {
    /// Canonicalizes `parts` (sorts edge lists, drops exact duplicates) without
    /// validating. Conflicting duplicates (same response pair with different
    /// bits, same item mapped twice) survive so `validate` can report them.
    pub fn assemble(parts: GraphParts) -> Self {
        let GraphParts {
            learners,
            concepts,
            assessments,
            mut prereq_edges,
            mut item_concept,
            mut know_edges,
            mut dontknow_edges,
            mut responses,
        } = parts;

        prereq_edges.sort_unstable();
        prereq_edges.dedup();
        item_concept.sort_unstable();
        item_concept.dedup();
        know_edges.sort_unstable();
        know_edges.dedup();
        dontknow_edges.sort_unstable();
        dontknow_edges.dedup();
        responses.sort_unstable();
        responses.dedup();

        let learner_index = learners
            .iter()
            .enumerate()
            .map(|(i, l)| (l.ext_id.clone(), LearnerId(i)))
            .collect();
        let concept_index = concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.ext_id.clone(), ConceptId(i)))
            .collect();
        let assessment_index = assessments
            .iter()
            .enumerate()
            .map(|(i, a)| (a.ext_id.clone(), AssessmentId(i)))
            .collect();

        let n_l = learners.len();
        let mut know_by_learner = vec![Vec::new(); n_l];
        for &(l, k) in &know_edges {
            if l.0 < n_l {
                know_by_learner[l.0].push(k);
            }
        }
        let mut dontknow_by_learner = vec![Vec::new(); n_l];
        for &(l, k) in &dontknow_edges {
            if l.0 < n_l {
                dontknow_by_learner[l.0].push(k);
            }
        }
        let mut responses_by_learner = vec![Vec::new(); n_l];
        for &(l, a, c) in &responses {
            if l.0 < n_l {
                responses_by_learner[l.0].push((a, c));
            }
        }

        let n_c = concepts.len();
        let mut prereq_parents = vec![Vec::new(); n_c];
        let mut prereq_children = vec![Vec::new(); n_c];
        for &(from, to) in &prereq_edges {
            if from.0 < n_c && to.0 < n_c {
                prereq_parents[to.0].push(from);
                prereq_children[from.0].push(to);
            }
        }

        let assessed = item_concept
            .iter()
            .filter(|(_, k)| k.0 < n_c)
            .map(|&(_, k)| k)
            .collect();

        HeteroGraph {
            learners,
            concepts,
            assessments,
            prereq_edges,
            item_concept,
            know_edges,
            dontknow_edges,
            responses,
            learner_index,
            concept_index,
            assessment_index,
            know_by_learner,
            dontknow_by_learner,
            responses_by_learner,
            prereq_parents,
            prereq_children,
            assessed,
        }
    }

    /// Assembles and validates; any diagnostic rejects the graph.
    pub fn new(parts: GraphParts) -> Result<Self> {
        let g = Self::assemble(parts);
        let diags = g.validate();
        if diags.is_empty() {
            Ok(g)
        } else {
            Err(Error::Invalid(diags))
        }
    }

    pub fn n_learners(&self) -> usize {
        self.learners.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn n_assessments(&self) -> usize {
        self.assessments.len()
    }

    pub fn learners(&self) -> &[Learner] {
        &self.learners
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn assessments(&self) -> &[Assessment] {
        &self.assessments
    }

    pub fn prereq_edges(&self) -> &[(ConceptId, ConceptId)] {
        &self.prereq_edges
    }

    pub fn item_concept(&self) -> &[(AssessmentId, ConceptId)] {
        &self.item_concept
    }

    pub fn know_edges(&self) -> &[(LearnerId, ConceptId)] {
        &self.know_edges
    }

    pub fn dontknow_edges(&self) -> &[(LearnerId, ConceptId)] {
        &self.dontknow_edges
    }

    pub fn responses(&self) -> &[(LearnerId, AssessmentId, bool)] {
        &self.responses
    }

    pub fn learner_id(&self, ext: &str) -> Option<LearnerId> {
        self.learner_index.get(ext).copied()
    }

    pub fn concept_id(&self, ext: &str) -> Option<ConceptId> {
        self.concept_index.get(ext).copied()
    }

    pub fn assessment_id(&self, ext: &str) -> Option<AssessmentId> {
        self.assessment_index.get(ext).copied()
    }

    pub fn learner_ext(&self, l: LearnerId) -> &str {
        &self.learners[l.0].ext_id
    }

    pub fn concept_ext(&self, k: ConceptId) -> &str {
        &self.concepts[k.0].ext_id
    }

    pub fn concept_label(&self, k: ConceptId) -> &str {
        &self.concepts[k.0].label
    }

    pub fn assessment_ext(&self, a: AssessmentId) -> &str {
        &self.assessments[a.0].ext_id
    }

    /// Concept measured by an assessment item. Valid graphs map every item to
    /// exactly one concept; calling this on an unmapped item is a bug.
    pub fn concept_of(&self, a: AssessmentId) -> ConceptId {
        self.item_concept
            .iter()
            .find(|(item, _)| *item == a)
            .map(|&(_, k)| k)
            .expect("assessment has no concept mapping; graph was not validated")
    }

    /// Concepts the learner reported knowing, sorted.
    pub fn learner_know(&self, l: LearnerId) -> &[ConceptId] {
        &self.know_by_learner[l.0]
    }

    /// Concepts the learner reported not knowing, sorted.
    pub fn learner_dontknow(&self, l: LearnerId) -> &[ConceptId] {
        &self.dontknow_by_learner[l.0]
    }

    /// The learner's item responses, sorted by item.
    pub fn learner_responses(&self, l: LearnerId) -> &[(AssessmentId, bool)] {
        &self.responses_by_learner[l.0]
    }

    /// Direct prerequisites of `k` (edges pointing into `k`).
    pub fn prereqs_of(&self, k: ConceptId) -> &[ConceptId] {
        &self.prereq_parents[k.0]
    }

    /// Concepts that list `k` as a direct prerequisite.
    pub fn dependents_of(&self, k: ConceptId) -> &[ConceptId] {
        &self.prereq_children[k.0]
    }

    pub fn assessed_concepts(&self) -> AssessedConceptSet {
        AssessedConceptSet {
            concepts: self.assessed.clone(),
        }
    }

    pub fn is_assessed(&self, k: ConceptId) -> bool {
        self.assessed.contains(&k)
    }

    /// Splits the assessed concepts into known / unknown / latent for one
    /// learner. Perceptions of never-assessed concepts do not appear here.
    pub fn mention_partition(&self, l: LearnerId) -> Result<MentionPartition> {
        if l.0 >= self.learners.len() {
            return Err(Error::UnknownId {
                kind: "learner",
                id: format!("#{}", l.0),
            });
        }
        let know: BTreeSet<ConceptId> = self.know_by_learner[l.0].iter().copied().collect();
        let dont: BTreeSet<ConceptId> = self.dontknow_by_learner[l.0].iter().copied().collect();
        let mut part = MentionPartition {
            known: BTreeSet::new(),
            unknown: BTreeSet::new(),
            latent: BTreeSet::new(),
        };
        for &k in &self.assessed {
            if know.contains(&k) {
                part.known.insert(k);
            } else if dont.contains(&k) {
                part.unknown.insert(k);
            } else {
                part.latent.insert(k);
            }
        }
        Ok(part)
    }

    /// Structural checks. Empty result means the graph is well formed.
    /// Diagnostics are sorted by (code, subjects) so output is stable.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();

        self.check_duplicate_nodes(&mut diags);
        self.check_dangling(&mut diags);
        self.check_item_mappings(&mut diags);
        self.check_perception_conflicts(&mut diags);
        self.check_duplicate_responses(&mut diags);
        self.check_acyclic(&mut diags);

        diags.sort();
        diags.dedup();
        diags
    }

    fn check_duplicate_nodes(&self, diags: &mut Vec<Diagnostic>) {
        let mut report = |kind: &str, ids: Vec<&str>| {
            let mut seen = BTreeSet::new();
            let mut dups = BTreeSet::new();
            for id in ids {
                if !seen.insert(id) {
                    dups.insert(id.to_string());
                }
            }
            for id in dups {
                diags.push(Diagnostic {
                    code: DiagnosticCode::DuplicateNode,
                    message: format!("{kind} id declared more than once"),
                    subjects: vec![id],
                });
            }
        };
        report(
            "learner",
            self.learners.iter().map(|l| l.ext_id.as_str()).collect(),
        );
        report(
            "concept",
            self.concepts.iter().map(|c| c.ext_id.as_str()).collect(),
        );
        report(
            "assessment",
            self.assessments.iter().map(|a| a.ext_id.as_str()).collect(),
        );
    }

    fn check_dangling(&self, diags: &mut Vec<Diagnostic>) {
        let n_l = self.learners.len();
        let n_c = self.concepts.len();
        let n_a = self.assessments.len();
        let mut bad = BTreeSet::new();
        for &(a, b) in &self.prereq_edges {
            if a.0 >= n_c {
                bad.insert(format!("concept#{}", a.0));
            }
            if b.0 >= n_c {
                bad.insert(format!("concept#{}", b.0));
            }
        }
        for &(a, k) in &self.item_concept {
            if a.0 >= n_a {
                bad.insert(format!("assessment#{}", a.0));
            }
            if k.0 >= n_c {
                bad.insert(format!("concept#{}", k.0));
            }
        }
        for &(l, k) in self.know_edges.iter().chain(&self.dontknow_edges) {
            if l.0 >= n_l {
                bad.insert(format!("learner#{}", l.0));
            }
            if k.0 >= n_c {
                bad.insert(format!("concept#{}", k.0));
            }
        }
        for &(l, a, _) in &self.responses {
            if l.0 >= n_l {
                bad.insert(format!("learner#{}", l.0));
            }
            if a.0 >= n_a {
                bad.insert(format!("assessment#{}", a.0));
            }
        }
        for subject in bad {
            diags.push(Diagnostic {
                code: DiagnosticCode::DanglingEndpoint,
                message: "edge endpoint refers to a node that does not exist".into(),
                subjects: vec![subject],
            });
        }
    }

    fn check_item_mappings(&self, diags: &mut Vec<Diagnostic>) {
        let mut by_item: BTreeMap<AssessmentId, BTreeSet<ConceptId>> = BTreeMap::new();
        for &(a, k) in &self.item_concept {
            if a.0 < self.assessments.len() {
                by_item.entry(a).or_default().insert(k);
            }
        }
        for (i, a) in self.assessments.iter().enumerate() {
            match by_item
                .get(&AssessmentId(i))
                .map(BTreeSet::len)
                .unwrap_or(0)
            {
                0 => diags.push(Diagnostic {
                    code: DiagnosticCode::MissingItemMapping,
                    message: "assessment maps to no concept".into(),
                    subjects: vec![a.ext_id.clone()],
                }),
                1 => {}
                n => diags.push(Diagnostic {
                    code: DiagnosticCode::DuplicateItemMapping,
                    message: format!("assessment maps to {n} concepts; exactly one required"),
                    subjects: vec![a.ext_id.clone()],
                }),
            }
        }
    }

    fn check_perception_conflicts(&self, diags: &mut Vec<Diagnostic>) {
        let dont: BTreeSet<(LearnerId, ConceptId)> = self.dontknow_edges.iter().copied().collect();
        for &(l, k) in &self.know_edges {
            if dont.contains(&(l, k)) && l.0 < self.learners.len() && k.0 < self.concepts.len() {
                diags.push(Diagnostic {
                    code: DiagnosticCode::PerceptionConflict,
                    message: "learner reports both know and dont-know for the same concept".into(),
                    subjects: vec![
                        self.learners[l.0].ext_id.clone(),
                        self.concepts[k.0].ext_id.clone(),
                    ],
                });
            }
        }
    }

    fn check_duplicate_responses(&self, diags: &mut Vec<Diagnostic>) {
        // Exact duplicates were already collapsed; what remains under the same
        // (learner, item) key is a contradiction.
        for w in self.responses.windows(2) {
            let (l0, a0, _) = w[0];
            let (l1, a1, _) = w[1];
            if l0 == l1 && a0 == a1 && l0.0 < self.learners.len() && a0.0 < self.assessments.len() {
                diags.push(Diagnostic {
                    code: DiagnosticCode::DuplicateResponse,
                    message: "conflicting correctness recorded for the same learner and item"
                        .into(),
                    subjects: vec![
                        self.learners[l0.0].ext_id.clone(),
                        self.assessments[a0.0].ext_id.clone(),
                    ],
                });
            }
        }
    }

    fn check_acyclic(&self, diags: &mut Vec<Diagnostic>) {
        if self.topo_order().is_none() {
            // Nodes left with positive in-degree after peeling are the ones on
            // or downstream of a cycle; report the ones actually on a cycle by
            // peeling from both directions.
            let n = self.concepts.len();
            let mut indeg = vec![0usize; n];
            let mut outdeg = vec![0usize; n];
            for &(from, to) in &self.prereq_edges {
                if from.0 < n && to.0 < n {
                    indeg[to.0] += 1;
                    outdeg[from.0] += 1;
                }
            }
            let survivors = {
                let mut fwd = peel(n, &self.prereq_edges, &indeg, true);
                let bwd = peel(n, &self.prereq_edges, &outdeg, false);
                fwd.retain(|k| bwd.contains(k));
                fwd
            };
            let subjects: Vec<String> = survivors
                .iter()
                .map(|k| self.concepts[k.0].ext_id.clone())
                .collect();
            diags.push(Diagnostic {
                code: DiagnosticCode::Cycle,
                message: "prerequisite edges form a cycle".into(),
                subjects,
            });
        }
    }

    /// Kahn topological order over prerequisite edges; `None` if cyclic.
    /// Ready nodes are taken in index order, so the result is deterministic.
    pub fn topo_order(&self) -> Option<Vec<ConceptId>> {
        let n = self.concepts.len();
        let mut indeg = vec![0usize; n];
        for &(from, to) in &self.prereq_edges {
            if from.0 < n && to.0 < n {
                indeg[to.0] += 1;
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&i) = ready.iter().next() {
            ready.remove(&i);
            order.push(ConceptId(i));
            for &child in &self.prereq_children[i] {
                indeg[child.0] -= 1;
                if indeg[child.0] == 0 {
                    ready.insert(child.0);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Longest-path depth of every concept in the prerequisite DAG: sources
    /// are 0, every edge adds one. `None` if cyclic.
    pub fn topo_depth(&self) -> Option<Vec<usize>> {
        let order = self.topo_order()?;
        let mut depth = vec![0usize; self.concepts.len()];
        for k in order {
            for &child in &self.prereq_children[k.0] {
                depth[child.0] = depth[child.0].max(depth[k.0] + 1);
            }
        }
        Some(depth)
    }

    /// Canonical file-schema form: nodes in index order, edges sorted.
    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            learners: self.learners.iter().map(|l| l.ext_id.clone()).collect(),
            concepts: self
                .concepts
                .iter()
                .map(|c| ConceptEntry {
                    id: c.ext_id.clone(),
                    label: c.label.clone(),
                })
                .collect(),
            assessments: self
                .assessments
                .iter()
                .enumerate()
                .map(|(i, a)| AssessmentEntry {
                    id: a.ext_id.clone(),
                    label: a.label.clone(),
                    concept: self.concepts[self.concept_of(AssessmentId(i)).0]
                        .ext_id
                        .clone(),
                })
                .collect(),
            prerequisites: self
                .prereq_edges
                .iter()
                .map(|&(a, b)| {
                    [
                        self.concepts[a.0].ext_id.clone(),
                        self.concepts[b.0].ext_id.clone(),
                    ]
                })
                .collect(),
            perceptions: self
                .know_edges
                .iter()
                .map(|&(l, k)| (l, k, KnowState::Know))
                .chain(
                    self.dontknow_edges
                        .iter()
                        .map(|&(l, k)| (l, k, KnowState::DontKnow)),
                )
                .map(|(l, k, state)| PerceptionEntry {
                    learner: self.learners[l.0].ext_id.clone(),
                    concept: self.concepts[k.0].ext_id.clone(),
                    state,
                })
                .collect(),
            responses: self
                .responses
                .iter()
                .map(|&(l, a, c)| ResponseEntry {
                    learner: self.learners[l.0].ext_id.clone(),
                    assessment: self.assessments[a.0].ext_id.clone(),
                    correct: u8::from(c),
                })
                .collect(),
        }
    }

    /// Serializes the canonical form as pretty JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = self.to_file();
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// SHA-256 over the canonical serialization; hex encoded. Two graphs with
    /// the same nodes (in order) and the same edge sets fingerprint equal.
    pub fn fingerprint(&self) -> String {
        let file = self.to_file();
        let bytes = serde_json::to_vec(&file).expect("graph serialization cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

fn peel(
    n: usize,
    edges: &[(ConceptId, ConceptId)],
    degree: &[usize],
    forward: bool,
) -> BTreeSet<ConceptId> {
    let mut deg = degree.to_vec();
    let mut adj = vec![Vec::new(); n];
    for &(from, to) in edges {
        if from.0 < n && to.0 < n {
            if forward {
                adj[from.0].push(to.0);
            } else {
                adj[to.0].push(from.0);
            }
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| deg[i] == 0).collect();
    while let Some(i) = queue.pop() {
        for &j in &adj[i] {
            deg[j] -= 1;
            if deg[j] == 0 {
                queue.push(j);
            }
        }
    }
    (0..n).filter(|&i| deg[i] > 0).map(ConceptId).collect()
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub learners: Vec<String>,
    pub concepts: Vec<ConceptEntry>,
    pub assessments: Vec<AssessmentEntry>,
    #[serde(default)]
    pub prerequisites: Vec<[String; 2]>,
    #[serde(default)]
    pub perceptions: Vec<PerceptionEntry>,
    #[serde(default)]
    pub responses: Vec<ResponseEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssessmentEntry {
    pub id: String,
    pub label: String,
    pub concept: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerceptionEntry {
    pub learner: String,
    pub concept: String,
    pub state: KnowState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub learner: String,
    pub assessment: String,
    pub correct: u8,
}

/// Loads a graph file, optionally merging responses from a separate CSV with
/// header `learner,assessment,correct`. Any validation diagnostic rejects the
/// input.
pub fn load_graph(path: &Path, responses_csv: Option<&Path>) -> Result<HeteroGraph> {
    let text = std::fs::read_to_string(path)?;
    let mut file: GraphFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if let Some(csv_path) = responses_csv {
        file.responses.extend(read_responses_csv(csv_path)?);
    }
    graph_from_file(file)
}

/// Reads the standalone response CSV form.
pub fn read_responses_csv(path: &Path) -> Result<Vec<ResponseEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for record in reader.deserialize::<ResponseEntry>() {
        out.push(record?);
    }
    Ok(out)
}

/// Resolves external ids and assembles; unresolvable references become
/// `dangling_endpoint` diagnostics rather than panics or arbitrary indices.
pub fn graph_from_file(file: GraphFile) -> Result<HeteroGraph> {
    let mut diags = Vec::new();

    let learners: Vec<Learner> = file
        .learners
        .iter()
        .map(|id| Learner { ext_id: id.clone() })
        .collect();
    let concepts: Vec<Concept> = file
        .concepts
        .iter()
        .map(|c| Concept {
            ext_id: c.id.clone(),
            label: c.label.clone(),
        })
        .collect();

    // An assessment id listed twice is treated as one node re-mentioned; its
    // concept mappings accumulate and validation flags the disagreement.
    let mut assessments: Vec<Assessment> = Vec::new();
    let mut assessment_index: HashMap<&str, AssessmentId> = HashMap::new();
    for entry in &file.assessments {
        if !assessment_index.contains_key(entry.id.as_str()) {
            assessment_index.insert(entry.id.as_str(), AssessmentId(assessments.len()));
            assessments.push(Assessment {
                ext_id: entry.id.clone(),
                label: entry.label.clone(),
            });
        }
    }

    let learner_index: HashMap<&str, LearnerId> = learners
        .iter()
        .enumerate()
        .map(|(i, l)| (l.ext_id.as_str(), LearnerId(i)))
        .collect();
    let concept_index: HashMap<&str, ConceptId> = concepts
        .iter()
        .enumerate()
        .map(|(i, c)| (c.ext_id.as_str(), ConceptId(i)))
        .collect();

    let mut dangling = BTreeSet::new();
    let resolve_learner = |id: &str, dangling: &mut BTreeSet<String>| {
        learner_index.get(id).copied().or_else(|| {
            dangling.insert(id.to_string());
            None
        })
    };
    let resolve_concept = |id: &str, dangling: &mut BTreeSet<String>| {
        concept_index.get(id).copied().or_else(|| {
            dangling.insert(id.to_string());
            None
        })
    };

    let mut item_concept = Vec::new();
    for entry in &file.assessments {
        let a = assessment_index[entry.id.as_str()];
        if let Some(k) = resolve_concept(&entry.concept, &mut dangling) {
            item_concept.push((a, k));
        }
    }

    let mut prereq_edges = Vec::new();
    for [from, to] in &file.prerequisites {
        let f = resolve_concept(from, &mut dangling);
        let t = resolve_concept(to, &mut dangling);
        if let (Some(f), Some(t)) = (f, t) {
            prereq_edges.push((f, t));
        }
    }

    let mut know_edges = Vec::new();
    let mut dontknow_edges = Vec::new();
    for p in &file.perceptions {
        let l = resolve_learner(&p.learner, &mut dangling);
        let k = resolve_concept(&p.concept, &mut dangling);
        if let (Some(l), Some(k)) = (l, k) {
            match p.state {
                KnowState::Know => know_edges.push((l, k)),
                KnowState::DontKnow => dontknow_edges.push((l, k)),
            }
        }
    }

    let mut responses = Vec::new();
    for r in &file.responses {
        if r.correct > 1 {
            return Err(Error::Parse(format!(
                "response correctness must be 0 or 1, got {} for learner {} item {}",
                r.correct, r.learner, r.assessment
            )));
        }
        let l = resolve_learner(&r.learner, &mut dangling);
        let a = assessment_index
            .get(r.assessment.as_str())
            .copied()
            .or_else(|| {
                dangling.insert(r.assessment.clone());
                None
            });
        if let (Some(l), Some(a)) = (l, a) {
            responses.push((l, a, r.correct == 1));
        }
    }

    for id in dangling {
        diags.push(Diagnostic {
            code: DiagnosticCode::DanglingEndpoint,
            message: "reference to an undeclared node id".into(),
            subjects: vec![id],
        });
    }

    let graph = HeteroGraph::assemble(GraphParts {
        learners,
        concepts,
        assessments,
        prereq_edges,
        item_concept,
        know_edges,
        dontknow_edges,
        responses,
    });
    diags.extend(graph.validate());
    diags.sort();
    diags.dedup();
    if diags.is_empty() {
        Ok(graph)
    } else {
        Err(Error::Invalid(diags))
    }
}
