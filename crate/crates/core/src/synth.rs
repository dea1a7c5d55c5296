//! Synthetic cohort generator with known ground truth.
//!
//! Produces a heterogeneous graph plus the latent facts behind it: which
//! concepts each learner truly mastered, what they perceived about their own
//! mastery, and which perceived states were never disclosed. Mastery
//! propagates through the prerequisite DAG (an unmastered prerequisite
//! sharply lowers the mastery probability downstream), which correlates
//! perception with graph structure; that correlation is the signal link
//! predictors are later scored on.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::coach::Pattern;
use crate::error::{Error, Result};
use crate::graph::{
    Assessment, AssessmentId, Concept, ConceptId, GraphParts, HeteroGraph, Learner, LearnerId,
};
use crate::rng::{mix, rng_from_seed, sample_without_replacement};

const SYNTH_STREAM: u64 = 0x5e7d;
const DAG_SUBSTREAM: u64 = 0;
const ITEM_SUBSTREAM: u64 = 1;
const LEARNER_SUBSTREAM: u64 = 2;

/// Ability intervals by persona group. High-ability personas score well on
/// items; sensitivity/specificity control only what they claim to know.
const ABILITY_HIGH: (f64, f64) = (0.65, 0.95);
const ABILITY_LOW: (f64, f64) = (0.15, 0.45);

/// True self-perception rates for one persona: P(claim Know | mastered) and
/// P(claim Don't Know | not mastered).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonaRates {
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Defaults chosen so that a fully disclosed cohort is classified back into
/// the generating pattern: WC and AL monitor accurately (they differ only in
/// ability), UC under-claims mastery, OC over-claims it, LC claims Know
/// nearly everywhere.
pub const DEFAULT_PERSONA_RATES: [PersonaRates; 5] = [
    PersonaRates {
        sensitivity: 0.9,
        specificity: 0.9,
    }, // WC
    PersonaRates {
        sensitivity: 0.9,
        specificity: 0.9,
    }, // AL
    PersonaRates {
        sensitivity: 0.5,
        specificity: 0.9,
    }, // UC
    PersonaRates {
        sensitivity: 0.9,
        specificity: 0.4,
    }, // OC
    PersonaRates {
        sensitivity: 0.95,
        specificity: 0.3,
    }, // LC
];

/// AL is low performance with accurate monitoring; OC must also sit below
/// the performance median or the decision tree could never reach it.
fn high_ability(p: Pattern) -> bool {
    matches!(p, Pattern::Wc | Pattern::Uc | Pattern::Lc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_learners: usize,
    pub n_concepts: usize,
    pub n_items: usize,
    pub dag_layers: usize,
    pub prereq_prob: f64,
    pub mastery_base: f64,
    /// Mastery probability factor when any prerequisite is unmastered.
    pub mastery_penalty: f64,
    pub slip: f64,
    pub guess: f64,
    pub mention_prob: f64,
    /// Sampling weights in [WC, AL, UC, OC, LC] order; must sum to 1.
    pub persona_mix: [f64; 5],
    pub persona_rates: [PersonaRates; 5],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_learners: 100,
            n_concepts: 50,
            n_items: 40,
            dag_layers: 5,
            prereq_prob: 0.15,
            mastery_base: 0.8,
            mastery_penalty: 0.2,
            slip: 0.1,
            guess: 0.2,
            mention_prob: 0.6,
            persona_mix: [0.2; 5],
            persona_rates: DEFAULT_PERSONA_RATES,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_learners == 0 || self.n_concepts == 0 || self.n_items == 0 {
            return Err(Error::Config("cohort sizes must be positive".into()));
        }
        if self.n_items > self.n_concepts {
            return Err(Error::Config(format!(
                "n_items {} exceeds n_concepts {}",
                self.n_items, self.n_concepts
            )));
        }
        if self.dag_layers == 0 || self.dag_layers > self.n_concepts {
            return Err(Error::Config(format!(
                "dag_layers must be in 1..={}, got {}",
                self.n_concepts, self.dag_layers
            )));
        }
        let probs = [
            ("prereq_prob", self.prereq_prob),
            ("mastery_base", self.mastery_base),
            ("mastery_penalty", self.mastery_penalty),
            ("slip", self.slip),
            ("guess", self.guess),
            ("mention_prob", self.mention_prob),
        ];
        for (what, v) in probs {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::Domain {
                    what,
                    range: "[0, 1]",
                    value: v,
                });
            }
        }
        let mut sum = 0.0;
        for &w in &self.persona_mix {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Domain {
                    what: "persona_mix",
                    range: "[0, 1]",
                    value: w,
                });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "persona weights sum to {sum}, expected 1"
            )));
        }
        for r in &self.persona_rates {
            for (what, v) in [
                ("sensitivity", r.sensitivity),
                ("specificity", r.specificity),
            ] {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(Error::Domain {
                        what,
                        range: "[0, 1]",
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Everything the generator knows that the graph does not reveal.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub true_mastery: BTreeMap<(LearnerId, ConceptId), bool>,
    pub true_perceived: BTreeMap<(LearnerId, ConceptId), bool>,
    /// Perceived state of every assessed concept the learner did not
    /// mention; keys are exactly the graph's latent pairs.
    pub latent_labels: BTreeMap<(LearnerId, ConceptId), bool>,
    pub personas: Vec<Pattern>,
}

/// Contiguous layer sizes: the first `n % layers` layers get one extra.
fn layer_sizes(n: usize, layers: usize) -> Vec<usize> {
    let base = n / layers;
    let extra = n % layers;
    (0..layers).map(|i| base + usize::from(i < extra)).collect()
}

/// Layer index per concept for contiguous ascending blocks.
fn layer_of(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for (layer, &size) in sizes.iter().enumerate() {
        out.extend(std::iter::repeat(layer).take(size));
    }
    out
}

fn id_width(n: usize) -> usize {
    n.to_string().len()
}

/// Layered random DAG. Edges run from lower to higher layers only, so the
/// index order is already topological and cycles cannot occur.
pub fn gen_concept_dag(
    config: &SynthConfig,
) -> Result<(Vec<Concept>, Vec<(ConceptId, ConceptId)>)> {
    config.validate()?;
    let n = config.n_concepts;
    let w = id_width(n);
    let concepts = (0..n)
        .map(|i| Concept {
            ext_id: format!("k{i:0w$}"),
            label: format!("Concept {i:0w$}"),
        })
        .collect();

    let layers = layer_of(&layer_sizes(n, config.dag_layers));
    let mut rng = rng_from_seed(mix(config.seed, &[SYNTH_STREAM, DAG_SUBSTREAM]));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if layers[j] > layers[i] && rng.random::<f64>() < config.prereq_prob {
                edges.push((ConceptId(i), ConceptId(j)));
            }
        }
    }
    Ok((concepts, edges))
}

/// Generates the graph and its hidden ground truth. Deterministic in the
/// seed: the DAG, item sampling, and each learner draw from independent
/// substreams, and per learner the draw order is fixed (persona, ability,
/// mastery in index order, perception, disclosure, responses).
pub fn gen_cohort(config: &SynthConfig) -> Result<(HeteroGraph, GroundTruth)> {
    config.validate()?;
    let (concepts, prereq_edges) = gen_concept_dag(config)?;
    let n_c = config.n_concepts;

    // Prerequisite lists in dependent-index order for the mastery sweep.
    let mut prereqs: Vec<Vec<usize>> = vec![Vec::new(); n_c];
    for &(from, to) in &prereq_edges {
        prereqs[to.0].push(from.0);
    }

    // Which concepts get an item: a uniform draw of n_items concepts,
    // sorted so item j maps to the j-th smallest assessed concept.
    let pool: Vec<usize> = (0..n_c).collect();
    let mut item_rng = rng_from_seed(mix(config.seed, &[SYNTH_STREAM, ITEM_SUBSTREAM]));
    let mut assessed = sample_without_replacement(&pool, config.n_items, &mut item_rng);
    assessed.sort_unstable();

    let wq = id_width(config.n_items);
    let assessments = (0..config.n_items)
        .map(|j| Assessment {
            ext_id: format!("q{j:0wq$}"),
            label: format!("Item {j:0wq$}"),
        })
        .collect();
    let item_concept: Vec<(AssessmentId, ConceptId)> = assessed
        .iter()
        .enumerate()
        .map(|(j, &k)| (AssessmentId(j), ConceptId(k)))
        .collect();

    let ws = id_width(config.n_learners);
    let learners: Vec<Learner> = (0..config.n_learners)
        .map(|i| Learner {
            ext_id: format!("s{i:0ws$}"),
        })
        .collect();

    let ability_dist = Beta::new(2.0, 2.0).expect("valid shape parameters");
    let mut know_edges = Vec::new();
    let mut dontknow_edges = Vec::new();
    let mut responses = Vec::new();
    let mut truth = GroundTruth {
        true_mastery: BTreeMap::new(),
        true_perceived: BTreeMap::new(),
        latent_labels: BTreeMap::new(),
        personas: Vec::with_capacity(config.n_learners),
    };

    for l in 0..config.n_learners {
        let learner = LearnerId(l);
        let mut rng = rng_from_seed(mix(
            config.seed,
            &[SYNTH_STREAM, LEARNER_SUBSTREAM, l as u64],
        ));

        let persona = {
            let draw: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = Pattern::Lc;
            for (p, &w) in Pattern::all().iter().zip(&config.persona_mix) {
                acc += w;
                if draw < acc {
                    chosen = *p;
                    break;
                }
            }
            chosen
        };
        truth.personas.push(persona);
        let rates = config.persona_rates[Pattern::all()
            .iter()
            .position(|&p| p == persona)
            .expect("persona from the fixed set")];

        let (lo, hi) = if high_ability(persona) {
            ABILITY_HIGH
        } else {
            ABILITY_LOW
        };
        let ability = lo + (hi - lo) * ability_dist.sample(&mut rng);

        // Mastery sweep in index order, which is topological for this DAG.
        let mut mastered = vec![false; n_c];
        for k in 0..n_c {
            let all_prereqs_ok = prereqs[k].iter().all(|&p| mastered[p]);
            let factor = if all_prereqs_ok {
                config.mastery_base
            } else {
                config.mastery_penalty
            };
            mastered[k] = rng.random::<f64>() < ability * factor;
            truth
                .true_mastery
                .insert((learner, ConceptId(k)), mastered[k]);
        }

        let mut perceived = vec![false; n_c];
        for k in 0..n_c {
            let r: f64 = rng.random();
            perceived[k] = if mastered[k] {
                r < rates.sensitivity
            } else {
                r >= rates.specificity
            };
            truth
                .true_perceived
                .insert((learner, ConceptId(k)), perceived[k]);
        }

        for &k in &assessed {
            if rng.random::<f64>() < config.mention_prob {
                if perceived[k] {
                    know_edges.push((learner, ConceptId(k)));
                } else {
                    dontknow_edges.push((learner, ConceptId(k)));
                }
            } else {
                truth
                    .latent_labels
                    .insert((learner, ConceptId(k)), perceived[k]);
            }
        }

        for (j, &k) in assessed.iter().enumerate() {
            let p_correct = if mastered[k] {
                1.0 - config.slip
            } else {
                config.guess
            };
            let correct = rng.random::<f64>() < p_correct;
            responses.push((learner, AssessmentId(j), correct));
        }
    }

    let graph = HeteroGraph::new(GraphParts {
        learners,
        concepts,
        assessments,
        prereq_edges,
        item_concept,
        know_edges,
        dontknow_edges,
        responses,
    })?;
    Ok((graph, truth))
}

// ---------------------------------------------------------------------------
// Sidecar file

#[derive(Debug, Serialize, Deserialize)]
struct LatentEntry {
    learner: String,
    concept: String,
    perceived: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct MasteryEntry {
    learner: String,
    concept: String,
    mastered: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct PersonaEntry {
    learner: String,
    pattern: Pattern,
}

/// On-disk ground truth with external ids, written next to the graph file.
#[derive(Debug, Serialize, Deserialize)]
pub struct GroundTruthFile {
    latent_labels: Vec<LatentEntry>,
    true_mastery: Vec<MasteryEntry>,
    true_perceived: Vec<LatentEntry>,
    personas: Vec<PersonaEntry>,
}

impl GroundTruthFile {
    pub fn from_truth(truth: &GroundTruth, graph: &HeteroGraph) -> Self {
        let latent = |map: &BTreeMap<(LearnerId, ConceptId), bool>| -> Vec<LatentEntry> {
            map.iter()
                .map(|(&(l, k), &v)| LatentEntry {
                    learner: graph.learner_ext(l).to_string(),
                    concept: graph.concept_ext(k).to_string(),
                    perceived: v,
                })
                .collect()
        };
        GroundTruthFile {
            latent_labels: latent(&truth.latent_labels),
            true_mastery: truth
                .true_mastery
                .iter()
                .map(|(&(l, k), &v)| MasteryEntry {
                    learner: graph.learner_ext(l).to_string(),
                    concept: graph.concept_ext(k).to_string(),
                    mastered: v,
                })
                .collect(),
            true_perceived: latent(&truth.true_perceived),
            personas: truth
                .personas
                .iter()
                .enumerate()
                .map(|(l, &p)| PersonaEntry {
                    learner: graph.learner_ext(LearnerId(l)).to_string(),
                    pattern: p,
                })
                .collect(),
        }
    }

    pub fn into_truth(self, graph: &HeteroGraph) -> Result<GroundTruth> {
        let learner = |ext: &str| -> Result<LearnerId> {
            graph.learner_id(ext).ok_or_else(|| Error::UnknownId {
                kind: "learner",
                id: ext.to_string(),
            })
        };
        let concept = |ext: &str| -> Result<ConceptId> {
            graph.concept_id(ext).ok_or_else(|| Error::UnknownId {
                kind: "concept",
                id: ext.to_string(),
            })
        };
        let mut truth = GroundTruth {
            true_mastery: BTreeMap::new(),
            true_perceived: BTreeMap::new(),
            latent_labels: BTreeMap::new(),
            personas: vec![Pattern::Wc; graph.n_learners()],
        };
        for e in &self.latent_labels {
            truth
                .latent_labels
                .insert((learner(&e.learner)?, concept(&e.concept)?), e.perceived);
        }
        for e in &self.true_mastery {
            truth
                .true_mastery
                .insert((learner(&e.learner)?, concept(&e.concept)?), e.mastered);
        }
        for e in &self.true_perceived {
            truth
                .true_perceived
                .insert((learner(&e.learner)?, concept(&e.concept)?), e.perceived);
        }
        if self.personas.len() != graph.n_learners() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} persona entries", graph.n_learners()),
                actual: format!("{}", self.personas.len()),
            });
        }
        for e in &self.personas {
            truth.personas[learner(&e.learner)?.0] = e.pattern;
        }
        Ok(truth)
    }
}

pub fn save_ground_truth(truth: &GroundTruth, graph: &HeteroGraph, path: &Path) -> Result<()> {
    let file = GroundTruthFile::from_truth(truth, graph);
    let mut body = serde_json::to_string(&file)?;
    body.push('\n');
    std::fs::write(path, body)?;
    Ok(())
}

pub fn load_ground_truth(path: &Path, graph: &HeteroGraph) -> Result<GroundTruth> {
    let body = std::fs::read_to_string(path)?;
    let file: GroundTruthFile = serde_json::from_str(&body)?;
    file.into_truth(graph)
}
