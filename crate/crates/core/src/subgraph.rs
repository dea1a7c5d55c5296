//! Perception subgraph, train/test splitting, and negative sampling.
//!
//! The perception subgraph keeps learners and concepts only, with the
//! learner->concept know edges plus the concept prerequisite edges. Dont-know
//! edges are excluded from message passing on purpose: they are reserved as
//! explicit negatives for training and evaluation.
//!
//! Negative sampling is explicit-informed: for a learner with N_e positives,
//! draw up to N_e negatives from their explicit dont-know concepts and up to
//! floor(rho * N_e) more from the assessed concepts they never mentioned.
//! Both draws are without replacement and capped by pool size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ConceptId, HeteroGraph, LearnerId};
use crate::rng::{mix, rng_from_seed, sample_without_replacement};

/// Learner/concept projection of a [`HeteroGraph`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerceptionSubgraph {
    pub n_learners: usize,
    pub n_concepts: usize,
    know_edges: Vec<(LearnerId, ConceptId)>,
    prereq_edges: Vec<(ConceptId, ConceptId)>,
}

impl PerceptionSubgraph {
    pub fn from_graph(graph: &HeteroGraph) -> Self {
        PerceptionSubgraph {
            n_learners: graph.n_learners(),
            n_concepts: graph.n_concepts(),
            know_edges: graph.know_edges().to_vec(),
            prereq_edges: graph.prereq_edges().to_vec(),
        }
    }

    pub fn know_edges(&self) -> &[(LearnerId, ConceptId)] {
        &self.know_edges
    }

    pub fn prereq_edges(&self) -> &[(ConceptId, ConceptId)] {
        &self.prereq_edges
    }
}

/// Holdout split over know edges. Test negatives come from explicit dont-know
/// edges, capped at the test-positive count.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit {
    pub seed: u64,
    pub train_ratio: f64,
    pub train_pos: Vec<(LearnerId, ConceptId)>,
    pub test_pos: Vec<(LearnerId, ConceptId)>,
    pub test_neg: Vec<(LearnerId, ConceptId)>,
}

impl EdgeSplit {
    /// Degenerate split that trains on every know edge; used when fitting a
    /// final model rather than evaluating one.
    pub fn full(graph: &HeteroGraph) -> Self {
        EdgeSplit {
            seed: 0,
            train_ratio: 1.0,
            train_pos: graph.know_edges().to_vec(),
            test_pos: Vec::new(),
            test_neg: Vec::new(),
        }
    }

    /// Train positives for one learner, in concept order.
    pub fn train_pos_of(&self, l: LearnerId) -> impl Iterator<Item = ConceptId> + '_ {
        self.train_pos
            .iter()
            .filter(move |(el, _)| *el == l)
            .map(|&(_, k)| k)
    }
}

/// Shuffles know edges with a dedicated ChaCha8 stream and holds out
/// `1 - train_ratio` of them (rounded to nearest) as test positives.
pub fn split_edges(graph: &HeteroGraph, train_ratio: f64, seed: u64) -> Result<EdgeSplit> {
    use rand::seq::SliceRandom;

    if !(train_ratio > 0.0 && train_ratio <= 1.0) {
        return Err(Error::Domain {
            what: "train_ratio",
            range: "(0, 1]",
            value: train_ratio,
        });
    }
    let mut edges = graph.know_edges().to_vec();
    if edges.is_empty() {
        return Err(Error::EmptySplit);
    }

    let mut rng = rng_from_seed(mix(seed, &[SPLIT_STREAM]));
    edges.shuffle(&mut rng);
    let n_test = ((1.0 - train_ratio) * edges.len() as f64).round() as usize;
    let mut test_pos: Vec<_> = edges[..n_test].to_vec();
    let mut train_pos: Vec<_> = edges[n_test..].to_vec();
    test_pos.sort_unstable();
    train_pos.sort_unstable();

    let dontknow = graph.dontknow_edges();
    let mut test_neg =
        sample_without_replacement(dontknow, test_pos.len().min(dontknow.len()), &mut rng);
    test_neg.sort_unstable();

    Ok(EdgeSplit {
        seed,
        train_ratio,
        train_pos,
        test_pos,
        test_neg,
    })
}

const SPLIT_STREAM: u64 = 0x5b17;
const NEG_STREAM: u64 = 0xe195;

/// Negatives drawn for one learner in one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeBatch {
    pub learner: LearnerId,
    /// From the learner's explicit dont-know concepts.
    pub explicit: Vec<ConceptId>,
    /// From assessed concepts the learner never mentioned.
    pub implicit: Vec<ConceptId>,
}

impl NegativeBatch {
    pub fn len(&self) -> usize {
        self.explicit.len() + self.implicit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.explicit.is_empty() && self.implicit.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.explicit.iter().chain(self.implicit.iter()).copied()
    }
}

/// Explicit-informed negative sample for one learner.
///
/// `n_e` is the explicit budget (normally the learner's positive count);
/// `rho` scales the implicit budget as floor(rho * n_e). Draws are seeded by
/// (seed, epoch, learner) so every epoch resamples independently yet
/// reproducibly. Errors only when both pools are empty.
pub fn eins_sample(
    graph: &HeteroGraph,
    learner: LearnerId,
    n_e: usize,
    rho: f64,
    seed: u64,
    epoch: u64,
) -> Result<NegativeBatch> {
    if n_e == 0 {
        return Err(Error::Config("eins_sample requires n_e >= 1".into()));
    }
    if !(0.0..=f64::MAX).contains(&rho) {
        return Err(Error::Domain {
            what: "rho",
            range: "[0, inf)",
            value: rho,
        });
    }

    let explicit_pool = graph.learner_dontknow(learner);
    let part = graph.mention_partition(learner)?;
    let implicit_pool: Vec<ConceptId> = part.latent.iter().copied().collect();

    if explicit_pool.is_empty() && implicit_pool.is_empty() {
        return Err(Error::NoNegativesAvailable {
            learner: graph.learner_ext(learner).into(),
        });
    }

    let mut rng = rng_from_seed(mix(seed, &[NEG_STREAM, epoch, learner.0 as u64]));
    let explicit = sample_without_replacement(explicit_pool, n_e, &mut rng);
    let implicit_budget = (rho * n_e as f64).floor() as usize;
    let implicit = sample_without_replacement(&implicit_pool, implicit_budget, &mut rng);

    Ok(NegativeBatch {
        learner,
        explicit,
        implicit,
    })
}

/// Ablation sampler: the same total budget as [`eins_sample`] would spend,
/// drawn uniformly from the learner's unmentioned assessed concepts with no
/// use of explicit dont-know edges.
pub fn uniform_unmentioned_sample(
    graph: &HeteroGraph,
    learner: LearnerId,
    n_e: usize,
    rho: f64,
    seed: u64,
    epoch: u64,
) -> Result<NegativeBatch> {
    if n_e == 0 {
        return Err(Error::Config(
            "uniform_unmentioned_sample requires n_e >= 1".into(),
        ));
    }
    let part = graph.mention_partition(learner)?;
    let pool: Vec<ConceptId> = part.latent.iter().copied().collect();
    if pool.is_empty() {
        return Err(Error::NoNegativesAvailable {
            learner: graph.learner_ext(learner).into(),
        });
    }
    // Matches the EINS budget so the ablation changes the distribution only.
    let explicit_budget = n_e.min(graph.learner_dontknow(learner).len());
    let implicit_budget = ((rho * n_e as f64).floor() as usize).min(pool.len());
    let total = explicit_budget + implicit_budget;

    let mut rng = rng_from_seed(mix(seed, &[NEG_STREAM, epoch, learner.0 as u64]));
    let implicit = sample_without_replacement(&pool, total, &mut rng);
    Ok(NegativeBatch {
        learner,
        explicit: Vec::new(),
        implicit,
    })
}

/// Serializable split record using external ids, for audit and re-use.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_ratio: f64,
    pub train_pos: Vec<[String; 2]>,
    pub test_pos: Vec<[String; 2]>,
    pub test_neg: Vec<[String; 2]>,
}

impl SplitManifest {
    pub fn from_split(split: &EdgeSplit, graph: &HeteroGraph) -> Self {
        let pair = |edges: &[(LearnerId, ConceptId)]| {
            edges
                .iter()
                .map(|&(l, k)| {
                    [
                        graph.learner_ext(l).to_string(),
                        graph.concept_ext(k).to_string(),
                    ]
                })
                .collect()
        };
        SplitManifest {
            seed: split.seed,
            train_ratio: split.train_ratio,
            train_pos: pair(&split.train_pos),
            test_pos: pair(&split.test_pos),
            test_neg: pair(&split.test_neg),
        }
    }

    pub fn to_split(&self, graph: &HeteroGraph) -> Result<EdgeSplit> {
        let resolve = |pairs: &[[String; 2]]| -> Result<Vec<(LearnerId, ConceptId)>> {
            let mut out = Vec::with_capacity(pairs.len());
            for [l, k] in pairs {
                let l = graph.learner_id(l).ok_or_else(|| Error::UnknownId {
                    kind: "learner",
                    id: l.clone(),
                })?;
                let k = graph.concept_id(k).ok_or_else(|| Error::UnknownId {
                    kind: "concept",
                    id: k.clone(),
                })?;
                out.push((l, k));
            }
            out.sort_unstable();
            Ok(out)
        };
        Ok(EdgeSplit {
            seed: self.seed,
            train_ratio: self.train_ratio,
            train_pos: resolve(&self.train_pos)?,
            test_pos: resolve(&self.test_pos)?,
            test_neg: resolve(&self.test_neg)?,
        })
    }
}
