//! Learner-pattern classification and feedback assembly.
//!
//! Learners are split into five metacognitive patterns by cohort-median
//! comparisons on test performance and monitoring metrics, then each gets a
//! three-part report: Feed Up (where am I going), Feed Back (how am I going),
//! Feed Forward (where to next). Prose is produced by a deterministic
//! template renderer; an external generator can be plugged in through
//! [`AdviceGenerator`] and failures fall back to the template.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ConceptId, HeteroGraph, LearnerId};
use crate::sdt::{sdt_category, MonitoringMetrics, PerceptionProfile, SdtCategory};

/// The five calibration patterns. High/Low are relative to cohort medians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pattern {
    /// High performance, high discriminability.
    Wc,
    /// Low performance, high discriminability: knows what they don't know.
    Al,
    /// High performance, low d', low sensitivity: doubts real knowledge.
    Uc,
    /// Low performance, low d': claims knowledge they lack.
    Oc,
    /// High performance, low d', high sensitivity: says Know to everything.
    Lc,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::Wc => "WC",
            Pattern::Al => "AL",
            Pattern::Uc => "UC",
            Pattern::Oc => "OC",
            Pattern::Lc => "LC",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            Pattern::Wc => "Well Calibrated",
            Pattern::Al => "Aware of Limitations",
            Pattern::Uc => "Underconfident",
            Pattern::Oc => "Overconfident",
            Pattern::Lc => "Liberal Criterion",
        }
    }

    pub fn all() -> [Pattern; 5] {
        [
            Pattern::Wc,
            Pattern::Al,
            Pattern::Uc,
            Pattern::Oc,
            Pattern::Lc,
        ]
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WC" => Ok(Pattern::Wc),
            "AL" => Ok(Pattern::Al),
            "UC" => Ok(Pattern::Uc),
            "OC" => Ok(Pattern::Oc),
            "LC" => Ok(Pattern::Lc),
            _ => Err(Error::Parse(format!("unknown pattern: {s}"))),
        }
    }
}

/// Cohort medians used as split points. With an even count each is the mean
/// of the two central values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortThresholds {
    pub perf_median: f64,
    pub dprime_median: f64,
    pub sensitivity_median: f64,
    pub specificity_median: f64,
}

fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn cohort_thresholds(stats: &[(f64, MonitoringMetrics)]) -> Result<CohortThresholds> {
    if stats.is_empty() {
        return Err(Error::EmptyInput(
            "cohort thresholds need at least one learner",
        ));
    }
    let col =
        |f: fn(&(f64, MonitoringMetrics)) -> f64| -> Vec<f64> { stats.iter().map(f).collect() };
    Ok(CohortThresholds {
        perf_median: median(&col(|s| s.0)),
        dprime_median: median(&col(|s| s.1.d_prime)),
        sensitivity_median: median(&col(|s| s.1.sensitivity)),
        specificity_median: median(&col(|s| s.1.specificity)),
    })
}

/// Every comparison the decision tree looked at, kept for the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonBasis {
    pub performance: f64,
    pub perf_high: bool,
    pub d_prime: f64,
    pub dprime_high: bool,
    pub sensitivity: f64,
    pub sensitivity_high: bool,
    pub specificity: f64,
    pub specificity_high: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerPattern {
    pub tag: Pattern,
    pub basis: ComparisonBasis,
}

/// Median-split decision tree. Ties count as High so a cohort of identical
/// learners lands in one pattern. Low performance with low d' always routes
/// to OC; the specificity comparison is recorded but not branched on.
pub fn classify(
    perf: f64,
    metrics: &MonitoringMetrics,
    thresholds: &CohortThresholds,
) -> LearnerPattern {
    let basis = ComparisonBasis {
        performance: perf,
        perf_high: perf >= thresholds.perf_median,
        d_prime: metrics.d_prime,
        dprime_high: metrics.d_prime >= thresholds.dprime_median,
        sensitivity: metrics.sensitivity,
        sensitivity_high: metrics.sensitivity >= thresholds.sensitivity_median,
        specificity: metrics.specificity,
        specificity_high: metrics.specificity >= thresholds.specificity_median,
    };
    let tag = match (basis.perf_high, basis.dprime_high) {
        (true, true) => Pattern::Wc,
        (false, true) => Pattern::Al,
        (true, false) => {
            if basis.sensitivity_high {
                Pattern::Lc
            } else {
                Pattern::Uc
            }
        }
        (false, false) => Pattern::Oc,
    };
    LearnerPattern { tag, basis }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    KnowledgeGaps,
    KnowledgeMonitoring,
    Maintain,
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Priority::KnowledgeGaps => "knowledge gaps",
            Priority::KnowledgeMonitoring => "knowledge monitoring",
            Priority::Maintain => "maintain",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedUp {
    pub current_position: String,
    pub goal_statement: String,
    pub priority: Priority,
}

fn level(high: bool) -> &'static str {
    if high {
        "high"
    } else {
        "low"
    }
}

pub fn build_feed_up(pattern: &LearnerPattern, thresholds: &CohortThresholds) -> FeedUp {
    let b = &pattern.basis;
    let current_position = format!(
        "{} ({}): performance {:.2} is {} (cohort median {:.2}), d' {:.2} is {} \
         (median {:.2}), sensitivity {:.2} is {} (median {:.2}).",
        pattern.tag.full_name(),
        pattern.tag,
        b.performance,
        level(b.perf_high),
        thresholds.perf_median,
        b.d_prime,
        level(b.dprime_high),
        thresholds.dprime_median,
        b.sensitivity,
        level(b.sensitivity_high),
        thresholds.sensitivity_median,
    );
    let priority = match pattern.tag {
        Pattern::Wc => Priority::Maintain,
        Pattern::Al | Pattern::Oc => Priority::KnowledgeGaps,
        Pattern::Uc | Pattern::Lc => Priority::KnowledgeMonitoring,
    };
    let goal_statement = match pattern.tag {
        Pattern::Wc => {
            "You are Well Calibrated: keep your performance and self-assessment aligned."
                .to_string()
        }
        _ => format!(
            "The target is Well Calibrated; from {} the first step is closing your {}.",
            pattern.tag.full_name(),
            priority,
        ),
    };
    FeedUp {
        current_position,
        goal_statement,
        priority,
    }
}

/// (dependent concept, the earlier prerequisite the learner also missed).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatedError {
    pub concept: String,
    pub prerequisite: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedBack {
    /// Concepts where every response was correct.
    pub correct_concepts: Vec<String>,
    /// Concepts with at least one incorrect response.
    pub incorrect_concepts: Vec<String>,
    pub related_past_errors: Vec<RelatedError>,
    /// Per responded concept, the contingency cell its aggregate falls in.
    pub sdt_categories: BTreeMap<String, SdtCategory>,
}

/// Prerequisite ancestors of `k` within `depth` hops.
fn ancestors_within(graph: &HeteroGraph, k: ConceptId, depth: usize) -> BTreeSet<ConceptId> {
    let mut out = BTreeSet::new();
    let mut frontier = vec![k];
    for _ in 0..depth {
        let mut next = Vec::new();
        for &c in &frontier {
            for &p in graph.prereqs_of(c) {
                if p != k && out.insert(p) {
                    next.push(p);
                }
            }
        }
        frontier = next;
    }
    out
}

/// Per-concept correctness for one learner: true iff every response to an
/// item of that concept was correct. Concepts without responses are absent.
fn concept_correctness(graph: &HeteroGraph, learner: LearnerId) -> BTreeMap<ConceptId, bool> {
    let mut by_concept: BTreeMap<ConceptId, bool> = BTreeMap::new();
    for &(item, correct) in graph.learner_responses(learner) {
        let k = graph.concept_of(item);
        by_concept
            .entry(k)
            .and_modify(|all| *all &= correct)
            .or_insert(correct);
    }
    by_concept
}

pub const RELATED_ERROR_DEPTH: usize = 2;

pub fn build_feed_back(
    graph: &HeteroGraph,
    learner: LearnerId,
    profile: &PerceptionProfile,
) -> Result<FeedBack> {
    if graph.learner_responses(learner).is_empty() {
        return Err(Error::NoResponses {
            learner: graph.learner_ext(learner).to_string(),
        });
    }
    let correctness = concept_correctness(graph, learner);

    let mut correct_concepts = Vec::new();
    let mut incorrect_concepts = Vec::new();
    let mut sdt_categories = BTreeMap::new();
    for (&k, &ok) in &correctness {
        let ext = graph.concept_ext(k).to_string();
        if ok {
            correct_concepts.push(ext.clone());
        } else {
            incorrect_concepts.push(ext.clone());
        }
        let state = profile.state_of(k).ok_or(Error::ProfileIncomplete {
            learner: graph.learner_ext(learner).to_string(),
        })?;
        sdt_categories.insert(ext, sdt_category(state, ok));
    }

    let mut related_past_errors = Vec::new();
    for (&k, &ok) in &correctness {
        if ok {
            continue;
        }
        for p in ancestors_within(graph, k, RELATED_ERROR_DEPTH) {
            if correctness.get(&p) == Some(&false) {
                related_past_errors.push(RelatedError {
                    concept: graph.concept_ext(k).to_string(),
                    prerequisite: graph.concept_ext(p).to_string(),
                });
            }
        }
    }

    Ok(FeedBack {
        correct_concepts,
        incorrect_concepts,
        related_past_errors,
        sdt_categories,
    })
}

/// One study strategy drawn from the fixed theory catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub theory: String,
    pub strategy: String,
}

struct CatalogRow {
    theory: &'static str,
    applies_to: &'static [Pattern],
    strategy: &'static str,
}

const ALL_PATTERNS: &[Pattern] = &[
    Pattern::Wc,
    Pattern::Al,
    Pattern::Uc,
    Pattern::Oc,
    Pattern::Lc,
];
const LOW_DPRIME: &[Pattern] = &[Pattern::Uc, Pattern::Oc, Pattern::Lc];

/// Theory-to-strategy catalog; rows apply to the listed patterns only.
const STRATEGY_CATALOG: &[CatalogRow] = &[
    CatalogRow {
        theory: "self-regulated learning",
        applies_to: ALL_PATTERNS,
        strategy: "planning, monitoring, reflective regulation",
    },
    CatalogRow {
        theory: "anxiety-cognitive capacity",
        applies_to: ALL_PATTERNS,
        strategy: "low-stakes assessment, self-pacing",
    },
    CatalogRow {
        theory: "knowledge monitoring",
        applies_to: LOW_DPRIME,
        strategy: "strategic help seeking, fading scaffolding",
    },
    CatalogRow {
        theory: "self-verification",
        applies_to: &[Pattern::Oc],
        strategy: "self-explanation, expectation-outcome comparison",
    },
    CatalogRow {
        theory: "cognitive load theory",
        applies_to: LOW_DPRIME,
        strategy: "attention guidance, prioritized feedback cues",
    },
    CatalogRow {
        theory: "depth of processing",
        applies_to: &[Pattern::Wc, Pattern::Al],
        strategy: "apply to new problems, why-and-how question",
    },
];

pub fn km_strategies(pattern: Pattern) -> Vec<Strategy> {
    STRATEGY_CATALOG
        .iter()
        .filter(|row| row.applies_to.contains(&pattern))
        .map(|row| Strategy {
            theory: row.theory.to_string(),
            strategy: row.strategy.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForward {
    /// Miss and false-alarm concepts, most foundational first.
    pub priority_relearn: Vec<String>,
    /// Remaining incorrect concepts.
    pub review: Vec<String>,
    /// Hit concepts whose downstream dependents were all answered correctly.
    pub challenge: Vec<String>,
    pub km_strategies: Vec<Strategy>,
    pub advice: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorTag {
    Template,
    External,
}

/// Seam for plugging in a prose generator (for instance an LLM client).
/// The default build uses [`TemplateGenerator`]; a failing external
/// generator falls back to it.
pub trait AdviceGenerator {
    fn generate(
        &self,
        pattern: &LearnerPattern,
        feed_up: &FeedUp,
        feed_back: &FeedBack,
        feed_forward: &FeedForward,
    ) -> Result<String>;
}

/// Deterministic renderer: same inputs, same prose, no side effects.
pub struct TemplateGenerator;

impl AdviceGenerator for TemplateGenerator {
    fn generate(
        &self,
        pattern: &LearnerPattern,
        feed_up: &FeedUp,
        _feed_back: &FeedBack,
        feed_forward: &FeedForward,
    ) -> Result<String> {
        let mut out = String::new();
        match feed_up.priority {
            Priority::KnowledgeGaps => {
                out.push_str("Focus on closing knowledge gaps first. ");
            }
            Priority::KnowledgeMonitoring => {
                out.push_str("Your answers are strong; focus on judging what you know. ");
            }
            Priority::Maintain => {
                out.push_str("Keep doing what you are doing. ");
            }
        }
        if !feed_forward.priority_relearn.is_empty() {
            out.push_str(&format!(
                "Start from the most foundational concepts: {}. ",
                feed_forward.priority_relearn.join(", ")
            ));
        }
        if !feed_forward.review.is_empty() {
            out.push_str(&format!("Then review {}. ", feed_forward.review.join(", ")));
        }
        if !feed_forward.challenge.is_empty() {
            out.push_str(&format!(
                "You have mastered {}; look for harder problems that build on them. ",
                feed_forward.challenge.join(", ")
            ));
        }
        match pattern.tag {
            Pattern::Uc => out.push_str(
                "Before checking an answer, predict whether you got it right; \
                 your predictions are more pessimistic than your results.",
            ),
            Pattern::Oc => out.push_str(
                "After each answer, explain to yourself why it is correct and compare \
                 the outcome with what you expected.",
            ),
            Pattern::Lc => out.push_str(
                "Be stricter before claiming you know something; test yourself without \
                 notes first.",
            ),
            Pattern::Al => out.push_str(
                "Your self-assessment is accurate; use it to schedule the gaps you \
                 already see.",
            ),
            Pattern::Wc => out.push_str(
                "Stretch yourself with transfer problems that apply known concepts in \
                 new settings.",
            ),
        }
        Ok(out)
    }
}

/// Builds the forward-looking section. Concept ordering inside
/// `priority_relearn` is ascending longest-path depth in the prerequisite
/// DAG (foundations first), ties by concept index.
pub fn build_feed_forward(
    graph: &HeteroGraph,
    learner: LearnerId,
    pattern: &LearnerPattern,
    feed_back: &FeedBack,
) -> Result<FeedForward> {
    let depth = graph
        .topo_depth()
        .ok_or_else(|| Error::Other("prerequisite graph has a cycle".to_string()))?;
    let correctness = concept_correctness(graph, learner);

    let mut relearn: Vec<ConceptId> = Vec::new();
    let mut review: Vec<ConceptId> = Vec::new();
    let mut hits: Vec<ConceptId> = Vec::new();
    for (ext, &cat) in &feed_back.sdt_categories {
        let k = graph.concept_id(ext).ok_or_else(|| Error::UnknownId {
            kind: "concept",
            id: ext.clone(),
        })?;
        match cat {
            SdtCategory::Miss | SdtCategory::FalseAlarm => relearn.push(k),
            SdtCategory::CorrectRejection => review.push(k),
            SdtCategory::Hit => hits.push(k),
        }
    }
    relearn.sort_by_key(|k| (depth[k.0], k.0));
    review.sort_by_key(|k| (depth[k.0], k.0));

    // A hit concept is a challenge candidate unless something downstream of
    // it went wrong.
    let incorrect: BTreeSet<ConceptId> = correctness
        .iter()
        .filter(|&(_, &ok)| !ok)
        .map(|(&k, _)| k)
        .collect();
    let mut challenge = Vec::new();
    for &h in &hits {
        let mut stack: Vec<ConceptId> = graph.dependents_of(h).to_vec();
        let mut seen: BTreeSet<ConceptId> = stack.iter().copied().collect();
        let mut tainted = false;
        while let Some(c) = stack.pop() {
            if incorrect.contains(&c) {
                tainted = true;
                break;
            }
            for &d in graph.dependents_of(c) {
                if seen.insert(d) {
                    stack.push(d);
                }
            }
        }
        if !tainted {
            challenge.push(h);
        }
    }
    challenge.sort_by_key(|k| (depth[k.0], k.0));

    let ext = |ks: &[ConceptId]| -> Vec<String> {
        ks.iter()
            .map(|&k| graph.concept_ext(k).to_string())
            .collect()
    };
    Ok(FeedForward {
        priority_relearn: ext(&relearn),
        review: ext(&review),
        challenge: ext(&challenge),
        km_strategies: km_strategies(pattern.tag),
        advice: String::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub learner: String,
    pub pattern: LearnerPattern,
    pub feed_up: FeedUp,
    pub feed_back: FeedBack,
    pub feed_forward: FeedForward,
    pub generator_tag: GeneratorTag,
}

/// Builds the full report for one learner. When `generator` is given its
/// prose is used and the report is tagged External; if it fails, the
/// template output is used instead and the returned warning says why.
pub fn assemble_report(
    graph: &HeteroGraph,
    learner: LearnerId,
    profile: &PerceptionProfile,
    perf: f64,
    metrics: &MonitoringMetrics,
    thresholds: &CohortThresholds,
    generator: Option<&dyn AdviceGenerator>,
) -> Result<(FeedbackReport, Option<String>)> {
    let pattern = classify(perf, metrics, thresholds);
    let feed_up = build_feed_up(&pattern, thresholds);
    let feed_back = build_feed_back(graph, learner, profile)?;
    let mut feed_forward = build_feed_forward(graph, learner, &pattern, &feed_back)?;

    let mut warning = None;
    let (advice, generator_tag) = match generator {
        Some(g) => match g.generate(&pattern, &feed_up, &feed_back, &feed_forward) {
            Ok(text) => (text, GeneratorTag::External),
            Err(e) => {
                warning = Some(format!("advice generator failed ({e}); using template"));
                let text =
                    TemplateGenerator.generate(&pattern, &feed_up, &feed_back, &feed_forward)?;
                (text, GeneratorTag::Template)
            }
        },
        None => {
            let text = TemplateGenerator.generate(&pattern, &feed_up, &feed_back, &feed_forward)?;
            (text, GeneratorTag::Template)
        }
    };
    feed_forward.advice = advice;

    Ok((
        FeedbackReport {
            learner: graph.learner_ext(learner).to_string(),
            pattern,
            feed_up,
            feed_back,
            feed_forward,
            generator_tag,
        },
        warning,
    ))
}

/// Fraction of this learner's responses that were correct.
pub fn performance(graph: &HeteroGraph, learner: LearnerId) -> Result<f64> {
    let responses = graph.learner_responses(learner);
    if responses.is_empty() {
        return Err(Error::NoResponses {
            learner: graph.learner_ext(learner).to_string(),
        });
    }
    let correct = responses.iter().filter(|&&(_, ok)| ok).count();
    Ok(correct as f64 / responses.len() as f64)
}

pub fn render_markdown(report: &FeedbackReport) -> String {
    let mut md = String::new();
    md.push_str(&format!("# Feedback for {}\n\n", report.learner));
    md.push_str(&format!(
        "Pattern: {} ({})\n\n",
        report.pattern.tag.full_name(),
        report.pattern.tag
    ));

    md.push_str("## Where am I going?\n\n");
    md.push_str(&format!("{}\n\n", report.feed_up.current_position));
    md.push_str(&format!("{}\n\n", report.feed_up.goal_statement));
    md.push_str(&format!("Priority: {}\n\n", report.feed_up.priority));

    md.push_str("## How am I going?\n\n");
    let fb = &report.feed_back;
    md.push_str(&format!(
        "Correct concepts: {}\n\n",
        if fb.correct_concepts.is_empty() {
            "none".into()
        } else {
            fb.correct_concepts.join(", ")
        }
    ));
    md.push_str(&format!(
        "Incorrect concepts: {}\n\n",
        if fb.incorrect_concepts.is_empty() {
            "none".into()
        } else {
            fb.incorrect_concepts.join(", ")
        }
    ));
    if !fb.related_past_errors.is_empty() {
        md.push_str("Related past errors:\n\n");
        for e in &fb.related_past_errors {
            md.push_str(&format!(
                "- {} builds on {}, which also went wrong\n",
                e.concept, e.prerequisite
            ));
        }
        md.push('\n');
    }
    md.push_str("| Concept | Category |\n|---|---|\n");
    for (k, cat) in &fb.sdt_categories {
        md.push_str(&format!("| {k} | {cat} |\n"));
    }
    md.push('\n');

    md.push_str("## Where to next?\n\n");
    let ff = &report.feed_forward;
    let list = |items: &[String]| -> String {
        if items.is_empty() {
            "none".into()
        } else {
            items.join(", ")
        }
    };
    md.push_str(&format!(
        "Relearn first: {}\n\n",
        list(&ff.priority_relearn)
    ));
    md.push_str(&format!("Review: {}\n\n", list(&ff.review)));
    md.push_str(&format!("Challenge: {}\n\n", list(&ff.challenge)));
    md.push_str("Strategies:\n\n");
    for s in &ff.km_strategies {
        md.push_str(&format!("- {}: {}\n", s.theory, s.strategy));
    }
    md.push('\n');
    md.push_str(&format!("{}\n", ff.advice));
    md
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub learner: String,
    pub pattern: Pattern,
    pub perf: f64,
    pub d_prime: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

pub fn write_summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("learner,pattern,perf,d_prime,sensitivity,specificity\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.learner, r.pattern, r.perf, r.d_prime, r.sensitivity, r.specificity
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Assessment, AssessmentId, Concept, GraphParts, HeteroGraph, Learner};
    use crate::sdt::{complete_profile, contingency, d_prime};

    fn metrics(d: f64, sens: f64, spec: f64) -> MonitoringMetrics {
        MonitoringMetrics {
            d_prime: d,
            sensitivity: sens,
            specificity: spec,
            corrected: false,
        }
    }

    fn mid_thresholds() -> CohortThresholds {
        CohortThresholds {
            perf_median: 0.5,
            dprime_median: 1.0,
            sensitivity_median: 0.7,
            specificity_median: 0.7,
        }
    }

    #[test]
    fn medians_match_hand_values() {
        assert_eq!(median(&[2.0, 1.0, 3.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[0.2, 0.8]), 0.5);
        let t = cohort_thresholds(&[(0.2, metrics(1.0, 0.5, 0.5)), (0.8, metrics(2.0, 0.9, 0.7))])
            .unwrap();
        assert_eq!(t.perf_median, 0.5);
        assert_eq!(t.dprime_median, 1.5);
        assert!(cohort_thresholds(&[]).is_err());
    }

    /// All 8 (perf, d', sensitivity) outcomes map to exactly one pattern.
    #[test]
    fn classification_is_total_over_all_outcomes() {
        let t = mid_thresholds();
        let cases = [
            (0.9, 2.0, 0.9, Pattern::Wc),
            (0.9, 2.0, 0.1, Pattern::Wc),
            (0.1, 2.0, 0.9, Pattern::Al),
            (0.1, 2.0, 0.1, Pattern::Al),
            (0.9, 0.1, 0.9, Pattern::Lc),
            (0.9, 0.1, 0.1, Pattern::Uc),
            (0.1, 0.1, 0.9, Pattern::Oc),
            (0.1, 0.1, 0.1, Pattern::Oc),
        ];
        for (perf, d, sens, want) in cases {
            let got = classify(perf, &metrics(d, sens, 0.5), &t);
            assert_eq!(got.tag, want, "perf {perf} d' {d} sens {sens}");
        }
    }

    #[test]
    fn ties_classify_as_high() {
        let t = mid_thresholds();
        // Exactly at every median: High perf, High d' => WC.
        let got = classify(0.5, &metrics(1.0, 0.7, 0.7), &t);
        assert_eq!(got.tag, Pattern::Wc);
        assert!(got.basis.perf_high && got.basis.dprime_high);
        assert!(got.basis.sensitivity_high && got.basis.specificity_high);
    }

    #[test]
    fn feed_up_priorities_follow_pattern() {
        let t = mid_thresholds();
        let cases = [
            (0.9, 2.0, 0.9, Priority::Maintain),
            (0.1, 2.0, 0.9, Priority::KnowledgeGaps),
            (0.1, 0.1, 0.9, Priority::KnowledgeGaps),
            (0.9, 0.1, 0.1, Priority::KnowledgeMonitoring),
            (0.9, 0.1, 0.9, Priority::KnowledgeMonitoring),
        ];
        for (perf, d, sens, want) in cases {
            let p = classify(perf, &metrics(d, sens, 0.5), &t);
            let fu = build_feed_up(&p, &t);
            assert_eq!(fu.priority, want, "{:?}", p.tag);
            assert!(fu.current_position.contains(p.tag.as_str()));
        }
    }

    #[test]
    fn strategy_catalog_selection() {
        let oc = km_strategies(Pattern::Oc);
        assert!(oc.iter().any(|s| s.theory == "self-verification"));
        assert!(oc
            .iter()
            .any(|s| s.strategy.contains("strategic help seeking")));
        let wc = km_strategies(Pattern::Wc);
        assert!(wc
            .iter()
            .any(|s| s.strategy.contains("why-and-how question")));
        assert!(!wc.iter().any(|s| s.strategy.contains("fading scaffolding")));
        assert!(wc.iter().any(|s| s.theory == "self-regulated learning"));
        // Everyone gets the two universal rows.
        for p in Pattern::all() {
            let rows = km_strategies(p);
            assert!(rows.len() >= 2, "{p}: {}", rows.len());
        }
    }

    /// Chain a -> b -> c -> d; learner answers a, c incorrectly, b, d
    /// correctly; states: a DontKnow, b Know, c Know, d DontKnow.
    fn chain_graph() -> HeteroGraph {
        HeteroGraph::new(GraphParts {
            learners: vec![Learner {
                ext_id: "s1".into(),
            }],
            concepts: ["a", "b", "c", "d"]
                .iter()
                .map(|s| Concept {
                    ext_id: (*s).into(),
                    label: (*s).into(),
                })
                .collect(),
            assessments: (0..4)
                .map(|i| Assessment {
                    ext_id: format!("q{i}"),
                    label: format!("q{i}"),
                })
                .collect(),
            prereq_edges: vec![
                (ConceptId(0), ConceptId(1)),
                (ConceptId(1), ConceptId(2)),
                (ConceptId(2), ConceptId(3)),
            ],
            item_concept: (0..4).map(|i| (AssessmentId(i), ConceptId(i))).collect(),
            know_edges: vec![(LearnerId(0), ConceptId(1)), (LearnerId(0), ConceptId(2))],
            dontknow_edges: vec![(LearnerId(0), ConceptId(0)), (LearnerId(0), ConceptId(3))],
            responses: vec![
                (LearnerId(0), AssessmentId(0), false),
                (LearnerId(0), AssessmentId(1), true),
                (LearnerId(0), AssessmentId(2), false),
                (LearnerId(0), AssessmentId(3), true),
            ],
        })
        .unwrap()
    }

    #[test]
    fn feed_back_buckets_and_related_errors() {
        let graph = chain_graph();
        let profile =
            complete_profile(&graph, LearnerId(0), &BTreeSet::new(), &BTreeSet::new()).unwrap();
        let fb = build_feed_back(&graph, LearnerId(0), &profile).unwrap();
        assert_eq!(fb.correct_concepts, vec!["b", "d"]);
        assert_eq!(fb.incorrect_concepts, vec!["a", "c"]);
        // a: DontKnow+incorrect = CR; b: Know+correct = Hit;
        // c: Know+incorrect = FA; d: DontKnow+correct = Miss.
        assert_eq!(fb.sdt_categories["a"], SdtCategory::CorrectRejection);
        assert_eq!(fb.sdt_categories["b"], SdtCategory::Hit);
        assert_eq!(fb.sdt_categories["c"], SdtCategory::FalseAlarm);
        assert_eq!(fb.sdt_categories["d"], SdtCategory::Miss);
        // c is incorrect; within depth 2 its ancestors are b (correct) and a
        // (incorrect) -> one related error.
        assert_eq!(
            fb.related_past_errors,
            vec![RelatedError {
                concept: "c".into(),
                prerequisite: "a".into()
            }]
        );
    }

    #[test]
    fn related_errors_respect_depth_cap() {
        // Chain a->b->c->d with only a and d incorrect: distance 3, no link.
        let graph = HeteroGraph::new(GraphParts {
            learners: vec![Learner {
                ext_id: "s1".into(),
            }],
            concepts: ["a", "b", "c", "d"]
                .iter()
                .map(|s| Concept {
                    ext_id: (*s).into(),
                    label: (*s).into(),
                })
                .collect(),
            assessments: (0..4)
                .map(|i| Assessment {
                    ext_id: format!("q{i}"),
                    label: format!("q{i}"),
                })
                .collect(),
            prereq_edges: vec![
                (ConceptId(0), ConceptId(1)),
                (ConceptId(1), ConceptId(2)),
                (ConceptId(2), ConceptId(3)),
            ],
            item_concept: (0..4).map(|i| (AssessmentId(i), ConceptId(i))).collect(),
            know_edges: (0..4).map(|i| (LearnerId(0), ConceptId(i))).collect(),
            dontknow_edges: vec![],
            responses: vec![
                (LearnerId(0), AssessmentId(0), false),
                (LearnerId(0), AssessmentId(1), true),
                (LearnerId(0), AssessmentId(2), true),
                (LearnerId(0), AssessmentId(3), false),
            ],
        })
        .unwrap();
        let profile =
            complete_profile(&graph, LearnerId(0), &BTreeSet::new(), &BTreeSet::new()).unwrap();
        let fb = build_feed_back(&graph, LearnerId(0), &profile).unwrap();
        assert!(fb.related_past_errors.is_empty());
    }

    #[test]
    fn feed_forward_buckets_and_ordering() {
        let graph = chain_graph();
        let profile =
            complete_profile(&graph, LearnerId(0), &BTreeSet::new(), &BTreeSet::new()).unwrap();
        let t = mid_thresholds();
        let pattern = classify(0.5, &metrics(0.5, 0.5, 0.5), &t);
        let fb = build_feed_back(&graph, LearnerId(0), &profile).unwrap();
        let ff = build_feed_forward(&graph, LearnerId(0), &pattern, &fb).unwrap();
        // FA c (depth 2) and Miss d (depth 3), foundations first.
        assert_eq!(ff.priority_relearn, vec!["c", "d"]);
        // CR a is the remaining incorrect concept.
        assert_eq!(ff.review, vec!["a"]);
        // Hit b has incorrect descendant c -> no challenge entries.
        assert!(ff.challenge.is_empty());
    }

    #[test]
    fn challenge_requires_clean_downstream() {
        // a -> b; both Know; both correct => deepest hit still challenges.
        let graph = HeteroGraph::new(GraphParts {
            learners: vec![Learner {
                ext_id: "s1".into(),
            }],
            concepts: ["a", "b"]
                .iter()
                .map(|s| Concept {
                    ext_id: (*s).into(),
                    label: (*s).into(),
                })
                .collect(),
            assessments: (0..2)
                .map(|i| Assessment {
                    ext_id: format!("q{i}"),
                    label: format!("q{i}"),
                })
                .collect(),
            prereq_edges: vec![(ConceptId(0), ConceptId(1))],
            item_concept: (0..2).map(|i| (AssessmentId(i), ConceptId(i))).collect(),
            know_edges: vec![(LearnerId(0), ConceptId(0)), (LearnerId(0), ConceptId(1))],
            dontknow_edges: vec![],
            responses: vec![
                (LearnerId(0), AssessmentId(0), true),
                (LearnerId(0), AssessmentId(1), true),
            ],
        })
        .unwrap();
        let profile =
            complete_profile(&graph, LearnerId(0), &BTreeSet::new(), &BTreeSet::new()).unwrap();
        let t = mid_thresholds();
        let pattern = classify(1.0, &metrics(2.0, 0.9, 0.9), &t);
        let fb = build_feed_back(&graph, LearnerId(0), &profile).unwrap();
        let ff = build_feed_forward(&graph, LearnerId(0), &pattern, &fb).unwrap();
        assert_eq!(ff.challenge, vec!["a", "b"]);
        assert!(ff.priority_relearn.is_empty());
        assert!(ff.review.is_empty());
    }

    #[test]
    fn report_round_trips_and_renders() {
        let graph = chain_graph();
        let profile =
            complete_profile(&graph, LearnerId(0), &BTreeSet::new(), &BTreeSet::new()).unwrap();
        let perf = performance(&graph, LearnerId(0)).unwrap();
        let table = contingency(&profile, &graph).unwrap();
        let m = d_prime(&table).unwrap();
        let t = cohort_thresholds(&[(perf, m)]).unwrap();
        let (report, warning) =
            assemble_report(&graph, LearnerId(0), &profile, perf, &m, &t, None).unwrap();
        assert!(warning.is_none());
        assert_eq!(report.generator_tag, GeneratorTag::Template);
        assert_eq!(report.learner, "s1");

        let json = serde_json::to_string(&report).unwrap();
        let back: FeedbackReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);

        let md = render_markdown(&report);
        for header in [
            "## Where am I going?",
            "## How am I going?",
            "## Where to next?",
        ] {
            assert!(md.contains(header), "missing {header}");
        }
        assert!(md.contains("s1"));

        // Same inputs, same bytes.
        let (again, _) =
            assemble_report(&graph, LearnerId(0), &profile, perf, &m, &t, None).unwrap();
        assert_eq!(render_markdown(&again), md);
    }

    struct FailingGenerator;
    impl AdviceGenerator for FailingGenerator {
        fn generate(
            &self,
            _: &LearnerPattern,
            _: &FeedUp,
            _: &FeedBack,
            _: &FeedForward,
        ) -> Result<String> {
            Err(Error::Other("backend unreachable".into()))
        }
    }

    struct CannedGenerator;
    impl AdviceGenerator for CannedGenerator {
        fn generate(
            &self,
            _: &LearnerPattern,
            _: &FeedUp,
            _: &FeedBack,
            _: &FeedForward,
        ) -> Result<String> {
            Ok("canned advice".into())
        }
    }

    #[test]
    fn external_generator_used_and_fallback_warns() {
        let graph = chain_graph();
        let profile =
            complete_profile(&graph, LearnerId(0), &BTreeSet::new(), &BTreeSet::new()).unwrap();
        let perf = performance(&graph, LearnerId(0)).unwrap();
        let m = metrics(1.0, 0.5, 0.5);
        let t = cohort_thresholds(&[(perf, m)]).unwrap();

        let (ok_report, w) = assemble_report(
            &graph,
            LearnerId(0),
            &profile,
            perf,
            &m,
            &t,
            Some(&CannedGenerator),
        )
        .unwrap();
        assert!(w.is_none());
        assert_eq!(ok_report.generator_tag, GeneratorTag::External);
        assert_eq!(ok_report.feed_forward.advice, "canned advice");

        let (fb_report, w) = assemble_report(
            &graph,
            LearnerId(0),
            &profile,
            perf,
            &m,
            &t,
            Some(&FailingGenerator),
        )
        .unwrap();
        let warning = w.expect("fallback warns");
        assert!(warning.contains("backend unreachable"));
        assert_eq!(fb_report.generator_tag, GeneratorTag::Template);
        assert!(!fb_report.feed_forward.advice.is_empty());
    }

    #[test]
    fn summary_csv_shape() {
        let rows = vec![SummaryRow {
            learner: "s1".into(),
            pattern: Pattern::Uc,
            perf: 0.75,
            d_prime: 1.25,
            sensitivity: 0.5,
            specificity: 0.9,
        }];
        let csv = write_summary_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "learner,pattern,perf,d_prime,sensitivity,specificity"
        );
        assert_eq!(lines.next().unwrap(), "s1,UC,0.75,1.25,0.5,0.9");
    }

    #[test]
    fn performance_counts_fractions() {
        let graph = chain_graph();
        assert_eq!(performance(&graph, LearnerId(0)).unwrap(), 0.5);
    }
}
