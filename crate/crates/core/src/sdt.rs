//! Signal-detection metrics for knowledge monitoring.
//!
//! A learner's feeling-of-knowing reports are compared against their actual
//! item responses. Each response falls in one contingency cell: claimed Know
//! and answered correctly (hit), claimed Know but answered incorrectly (false
//! alarm), claimed Don't Know yet answered correctly (miss), claimed Don't
//! Know and answered incorrectly (correct rejection). Monitoring accuracy is
//! d' = z(hit rate) - z(false-alarm rate).

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ConceptId, HeteroGraph, KnowState, LearnerId};

/// Where a profile entry came from: stated by the learner or inferred by a
/// model for a concept the learner never mentioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Explicit,
    Inferred,
}

/// A perceived-knowledge state for every assessed concept, explicit reports
/// merged with inferred states for the latent remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerceptionProfile {
    pub learner: LearnerId,
    states: BTreeMap<ConceptId, (KnowState, Provenance)>,
}

impl PerceptionProfile {
    pub fn state_of(&self, k: ConceptId) -> Option<KnowState> {
        self.states.get(&k).map(|&(s, _)| s)
    }

    pub fn provenance_of(&self, k: ConceptId) -> Option<Provenance> {
        self.states.get(&k).map(|&(_, p)| p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConceptId, KnowState, Provenance)> + '_ {
        self.states.iter().map(|(&k, &(s, p))| (k, s, p))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Merges a learner's explicit reports with inferred states for their latent
/// concepts. The inferred sets must be disjoint from each other and from the
/// explicit mentions, and together must cover the latent set exactly.
pub fn complete_profile(
    graph: &HeteroGraph,
    learner: LearnerId,
    inferred_know: &BTreeSet<ConceptId>,
    inferred_dontknow: &BTreeSet<ConceptId>,
) -> Result<PerceptionProfile> {
    let part = graph.mention_partition(learner)?;
    let ext = |k: ConceptId| graph.concept_ext(k).to_string();

    if let Some(&k) = inferred_know.intersection(inferred_dontknow).next() {
        return Err(Error::ProfileOverlap {
            learner: graph.learner_ext(learner).into(),
            concept: ext(k),
        });
    }
    for k in inferred_know.union(inferred_dontknow) {
        if part.known.contains(k) || part.unknown.contains(k) {
            return Err(Error::ProfileOverlap {
                learner: graph.learner_ext(learner).into(),
                concept: ext(*k),
            });
        }
    }
    let covered: BTreeSet<ConceptId> = inferred_know.union(inferred_dontknow).copied().collect();
    if covered != part.latent {
        return Err(Error::ProfileIncomplete {
            learner: graph.learner_ext(learner).into(),
        });
    }

    let mut states = BTreeMap::new();
    for k in part.known {
        states.insert(k, (KnowState::Know, Provenance::Explicit));
    }
    for k in part.unknown {
        states.insert(k, (KnowState::DontKnow, Provenance::Explicit));
    }
    for &k in inferred_know {
        states.insert(k, (KnowState::Know, Provenance::Inferred));
    }
    for &k in inferred_dontknow {
        states.insert(k, (KnowState::DontKnow, Provenance::Inferred));
    }
    Ok(PerceptionProfile { learner, states })
}

/// One outcome cell per response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdtCategory {
    Hit,
    FalseAlarm,
    Miss,
    CorrectRejection,
}

impl fmt::Display for SdtCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SdtCategory::Hit => "hit",
            SdtCategory::FalseAlarm => "false_alarm",
            SdtCategory::Miss => "miss",
            SdtCategory::CorrectRejection => "correct_rejection",
        };
        f.write_str(s)
    }
}

/// Classifies one (perceived state, response correctness) pair.
pub fn sdt_category(state: KnowState, correct: bool) -> SdtCategory {
    match (state, correct) {
        (KnowState::Know, true) => SdtCategory::Hit,
        (KnowState::Know, false) => SdtCategory::FalseAlarm,
        (KnowState::DontKnow, true) => SdtCategory::Miss,
        (KnowState::DontKnow, false) => SdtCategory::CorrectRejection,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ContingencyTable {
    pub hits: u32,
    pub false_alarms: u32,
    pub misses: u32,
    pub correct_rejections: u32,
}

impl ContingencyTable {
    pub fn total(&self) -> u32 {
        self.hits + self.false_alarms + self.misses + self.correct_rejections
    }

    fn add(&mut self, cat: SdtCategory) {
        match cat {
            SdtCategory::Hit => self.hits += 1,
            SdtCategory::FalseAlarm => self.false_alarms += 1,
            SdtCategory::Miss => self.misses += 1,
            SdtCategory::CorrectRejection => self.correct_rejections += 1,
        }
    }
}

/// Builds the per-response contingency table for the profile's learner.
pub fn contingency(profile: &PerceptionProfile, graph: &HeteroGraph) -> Result<ContingencyTable> {
    let responses = graph.learner_responses(profile.learner);
    if responses.is_empty() {
        return Err(Error::NoResponses {
            learner: graph.learner_ext(profile.learner).into(),
        });
    }
    let mut table = ContingencyTable::default();
    for &(item, correct) in responses {
        let k = graph.concept_of(item);
        let state = profile
            .state_of(k)
            .ok_or_else(|| Error::ProfileIncomplete {
                learner: graph.learner_ext(profile.learner).into(),
            })?;
        table.add(sdt_category(state, correct));
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitoringMetrics {
    pub d_prime: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// True when a marginal rate of 0 or 1 forced the log-linear correction.
    pub corrected: bool,
}

/// Inverse standard normal CDF. Acklam's rational approximation polished with
/// one Halley step against the erfc-based CDF; absolute error is far below
/// the 1e-8 the metrics need.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            what: "p",
            range: "(0, 1)",
            value: p,
        });
    }
    let x = acklam(p);
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Standard normal CDF via erfc; accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    }
}

/// Fraction of correct responses the learner claimed to know. Uncorrected.
pub fn sensitivity(table: &ContingencyTable) -> Result<f64> {
    let denom = table.hits + table.misses;
    if denom == 0 {
        return Err(Error::UndefinedMargin {
            margin: "hits + misses (correct responses)",
        });
    }
    Ok(f64::from(table.hits) / f64::from(denom))
}

/// Fraction of incorrect responses the learner admitted not knowing. Uncorrected.
pub fn specificity(table: &ContingencyTable) -> Result<f64> {
    let denom = table.false_alarms + table.correct_rejections;
    if denom == 0 {
        return Err(Error::UndefinedMargin {
            margin: "false_alarms + correct_rejections (incorrect responses)",
        });
    }
    Ok(f64::from(table.correct_rejections) / f64::from(denom))
}

/// d' plus the raw rates. When either the hit rate or false-alarm rate lands
/// exactly on 0 or 1 the z-transform diverges, so the log-linear correction
/// (add 0.5 to both numerators, 1 to both denominators) is applied to both
/// rates before the transform; sensitivity and specificity stay uncorrected.
pub fn d_prime(table: &ContingencyTable) -> Result<MonitoringMetrics> {
    let sens = sensitivity(table)?;
    let spec = specificity(table)?;
    let (a, b, c, d) = (
        f64::from(table.hits),
        f64::from(table.false_alarms),
        f64::from(table.misses),
        f64::from(table.correct_rejections),
    );
    let mut hit_rate = a / (a + c);
    let mut fa_rate = b / (b + d);
    let corrected = hit_rate == 0.0 || hit_rate == 1.0 || fa_rate == 0.0 || fa_rate == 1.0;
    if corrected {
        hit_rate = (a + 0.5) / (a + c + 1.0);
        fa_rate = (b + 0.5) / (b + d + 1.0);
    }
    let d_prime = inverse_normal_cdf(hit_rate)? - inverse_normal_cdf(fa_rate)?;
    Ok(MonitoringMetrics {
        d_prime,
        sensitivity: sens,
        specificity: spec,
        corrected,
    })
}

/// One export row for a learner's monitoring metrics. `metrics` is `None`
/// when a zero margin left d' undefined; those fields render as NaN.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub learner: String,
    pub table: ContingencyTable,
    pub metrics: Option<MonitoringMetrics>,
}

/// Renders metrics rows as CSV. Floats use shortest round-trip formatting.
pub fn write_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("learner,A,B,C,D,d_prime,sensitivity,specificity,corrected\n");
    for row in rows {
        let t = &row.table;
        let (dp, sens, spec, corr) = match row.metrics {
            Some(m) => (m.d_prime, m.sensitivity, m.specificity, m.corrected),
            None => (f64::NAN, f64::NAN, f64::NAN, false),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.learner,
            t.hits,
            t.false_alarms,
            t.misses,
            t.correct_rejections,
            dp,
            sens,
            spec,
            corr
        ));
    }
    out
}
