//! Reference link scorers the HGNN is compared against.
//!
//! * RG: a seeded hash of the (learner, concept) pair, uniform on [0, 1).
//! * GCN: symmetric-normalized convolution over the bipartite know graph;
//!   no prerequisite edges, no attention.
//! * GAT: single-head additive attention over the homogeneous know graph
//!   with self loops; same attention math as the HGNN but one relation and
//!   no self transform.
//! * LP: per-learner label propagation over the undirected prerequisite
//!   graph from the learner's clamped labels.
//!
//! GCN and GAT train with exactly the HGNN's loss, optimizer, and negative
//! sampling protocol so the comparison isolates the architecture.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::attention::{attn_backward, attn_forward, CsrEdges};
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::graph::{ConceptId, HeteroGraph, LearnerId};
use crate::hgnn::{
    bce_on_pairs, build_epoch_pairs, positives_by_learner, silu, silu_prime, Embeddings,
    EpochStats, HgnnConfig,
};
use crate::opt::Adam;
use crate::rng::{mix, rng_from_seed};
use crate::subgraph::EdgeSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rg,
    Gcn,
    Gat,
    Lp,
    Hgnn,
    HgnnNoEins,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rg => "RG",
            Method::Gcn => "GCN",
            Method::Gat => "GAT",
            Method::Lp => "LP",
            Method::Hgnn => "HGNN",
            Method::HgnnNoEins => "HGNN-noEINS",
        }
    }

    pub fn all() -> [Method; 6] {
        [
            Method::Rg,
            Method::Gcn,
            Method::Gat,
            Method::Lp,
            Method::Hgnn,
            Method::HgnnNoEins,
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lowered = s.to_ascii_lowercase().replace('-', "_");
        match lowered.as_str() {
            "rg" => Ok(Method::Rg),
            "gcn" => Ok(Method::Gcn),
            "gat" => Ok(Method::Gat),
            "lp" => Ok(Method::Lp),
            "hgnn" => Ok(Method::Hgnn),
            "hgnn_noeins" | "hgnn_no_eins" => Ok(Method::HgnnNoEins),
            _ => Err(Error::Parse(format!("unknown method: {s}"))),
        }
    }
}

/// Anything that can score a (learner, concept) link in [0, 1].
pub trait LinkScorer {
    fn method(&self) -> Method;
    fn score(&self, learner: LearnerId, concept: ConceptId) -> f64;
}

// ---------------------------------------------------------------------------
// RG

const RG_STREAM: u64 = 0x2662;

/// Deterministic pseudo-random scorer: the same (seed, learner, concept)
/// triple always hashes to the same value, which makes the "memoized random
/// guess" exactly reproducible without storage.
#[derive(Debug, Clone, Copy)]
pub struct RandomGuess {
    pub seed: u64,
}

impl LinkScorer for RandomGuess {
    fn method(&self) -> Method {
        Method::Rg
    }

    fn score(&self, learner: LearnerId, concept: ConceptId) -> f64 {
        let h = mix(self.seed, &[RG_STREAM, learner.0 as u64, concept.0 as u64]);
        // Top 53 bits to a double in [0, 1).
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Trained embeddings plus the method tag they came from.
pub struct EmbeddingScorer {
    pub method: Method,
    pub embeddings: Embeddings,
}

impl LinkScorer for EmbeddingScorer {
    fn method(&self) -> Method {
        self.method
    }

    fn score(&self, learner: LearnerId, concept: ConceptId) -> f64 {
        self.embeddings.score(learner, concept)
    }
}

// ---------------------------------------------------------------------------
// GCN

const GCN_INIT_STREAM: u64 = 0x6c17;

/// Symmetric-normalized adjacency with self loops over the joint node space:
/// hat A = D^(-1/2) (A + I) D^(-1/2), stored row-wise.
struct NormAdj {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl NormAdj {
    fn new(n: usize, und_edges: &[(usize, usize)]) -> Self {
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(und_edges.len() * 2 + n);
        for &(a, b) in und_edges {
            pairs.push((a, b));
            pairs.push((b, a));
        }
        for v in 0..n {
            pairs.push((v, v));
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut degree = vec![0usize; n];
        for &(a, _) in &pairs {
            degree[a] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut cols = Vec::with_capacity(pairs.len());
        let mut weights = Vec::with_capacity(pairs.len());
        for &(a, b) in &pairs {
            cols.push(b);
            weights.push(1.0 / ((degree[a] as f64).sqrt() * (degree[b] as f64).sqrt()));
        }
        NormAdj {
            offsets,
            cols,
            weights,
        }
    }

    fn apply(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(h.raw_dim());
        for v in 0..self.offsets.len() - 1 {
            let mut row = out.row_mut(v);
            for e in self.offsets[v]..self.offsets[v + 1] {
                row.scaled_add(self.weights[e], &h.row(self.cols[e]));
            }
        }
        out
    }
}

struct FlatParams {
    embed: Array2<f64>,
    layers: Vec<(Array2<f64>, Option<Array1<f64>>)>,
}

impl FlatParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embed.as_slice().expect("standard layout")];
        for (w, a) in &self.layers {
            out.push(w.as_slice().expect("standard layout"));
            if let Some(a) = a {
                out.push(a.as_slice().expect("standard layout"));
            }
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embed.as_slice_mut().expect("standard layout")];
        for (w, a) in &mut self.layers {
            out.push(w.as_slice_mut().expect("standard layout"));
            if let Some(a) = a {
                out.push(a.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    fn zeros_like(&self) -> Self {
        FlatParams {
            embed: Array2::zeros(self.embed.raw_dim()),
            layers: self
                .layers
                .iter()
                .map(|(w, a)| {
                    (
                        Array2::zeros(w.raw_dim()),
                        a.as_ref().map(|a| Array1::zeros(a.raw_dim())),
                    )
                })
                .collect(),
        }
    }

    fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }
}

fn init_flat(n_nodes: usize, cfg: &HgnnConfig, with_attention: bool, stream: u64) -> FlatParams {
    use rand::Rng;
    let d = cfg.embed_dim;
    let mut rng = rng_from_seed(mix(cfg.seed, &[stream]));
    let mut draw = |len: usize, fan_in: usize, fan_out: usize| -> Vec<f64> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..len)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect()
    };
    let embed = Array2::from_shape_vec((n_nodes, d), draw(n_nodes * d, d, d))
        .expect("shape matches draw length");
    let layers = (0..cfg.layers)
        .map(|_| {
            let w = Array2::from_shape_vec((d, d), draw(d * d, d, d))
                .expect("shape matches draw length");
            let a = with_attention.then(|| Array1::from_vec(draw(2 * d, 2 * d, 1)));
            (w, a)
        })
        .collect();
    FlatParams { embed, layers }
}

fn split_embeddings(h: &Array2<f64>, n_learners: usize) -> Embeddings {
    Embeddings {
        learner: h.slice(ndarray::s![..n_learners, ..]).to_owned(),
        concept: h.slice(ndarray::s![n_learners.., ..]).to_owned(),
    }
}

/// Trains the GCN baseline and returns a scorer over its final embeddings.
pub fn gcn_train(
    graph: &HeteroGraph,
    split: &EdgeSplit,
    config: &HgnnConfig,
) -> Result<(EmbeddingScorer, Vec<EpochStats>)> {
    config.validate()?;
    let n_s = graph.n_learners();
    let n = n_s + graph.n_concepts();
    let und: Vec<(usize, usize)> = split
        .train_pos
        .iter()
        .map(|&(l, k)| (l.0, n_s + k.0))
        .collect();
    let adj = NormAdj::new(n, &und);

    let pos_by_learner = positives_by_learner(split);
    if pos_by_learner.is_empty() {
        return Err(Error::EmptyInput(
            "training requires at least one positive edge",
        ));
    }

    let mut params = init_flat(n, config, false, GCN_INIT_STREAM);
    let sizes: Vec<usize> = params.slices().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(&sizes, config.learning_rate, config.weight_decay);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let pairs = build_epoch_pairs(graph, &pos_by_learner, config, n_s, epoch as u64)?;

        // Forward with caches: per layer keep (input, Z = hat A . input, pre).
        let mut h = params.embed.clone();
        let mut caches = Vec::with_capacity(params.layers.len());
        for (w, _) in &params.layers {
            let z = adj.apply(&h);
            let pre = z.dot(w);
            let h_next = pre.mapv(silu);
            caches.push((h, z, pre));
            h = h_next;
        }

        let (loss, probs, dh_out) = bce_on_pairs(&h, &pairs);
        let labels: Vec<bool> = pairs.iter().map(|&(_, _, y)| y).collect();
        let train_auc = auc(&probs, &labels).unwrap_or(f64::NAN);

        let mut grads = params.zeros_like();
        let mut dh = dh_out;
        for (li, (_, z, pre)) in caches.iter().enumerate().rev() {
            let mut g = pre.mapv(silu_prime);
            g *= &dh;
            grads.layers[li].0 += &z.t().dot(&g);
            let dz = g.dot(&params.layers[li].0.t());
            // hat A is symmetric, so applying it again is the transpose.
            dh = adj.apply(&dz);
        }
        grads.embed += &dh;

        adam.step(&mut params.slices_mut(), &grads.slices());
        if !params.all_finite() {
            return Err(Error::NonFinite("gcn training"));
        }
        history.push(EpochStats {
            epoch,
            loss,
            train_auc,
        });
    }

    // Final embeddings from the trained parameters.
    let mut h = params.embed.clone();
    for (w, _) in &params.layers {
        h = adj.apply(&h).dot(w).mapv(silu);
    }
    Ok((
        EmbeddingScorer {
            method: Method::Gcn,
            embeddings: split_embeddings(&h, n_s),
        },
        history,
    ))
}

// ---------------------------------------------------------------------------
// GAT

const GAT_INIT_STREAM: u64 = 0x6a17;

/// Trains the single-relation attention baseline: know edges in both
/// directions plus a self loop on every node, shared weights, no prereq
/// structure, no separate self transform.
pub fn gat_train(
    graph: &HeteroGraph,
    split: &EdgeSplit,
    config: &HgnnConfig,
) -> Result<(EmbeddingScorer, Vec<EpochStats>)> {
    config.validate()?;
    let n_s = graph.n_learners();
    let n = n_s + graph.n_concepts();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(split.train_pos.len() * 2 + n);
    for &(l, k) in &split.train_pos {
        edges.push((l.0, n_s + k.0));
        edges.push((n_s + k.0, l.0));
    }
    for v in 0..n {
        edges.push((v, v));
    }
    let csr = CsrEdges::new(n, &edges);

    let pos_by_learner = positives_by_learner(split);
    if pos_by_learner.is_empty() {
        return Err(Error::EmptyInput(
            "training requires at least one positive edge",
        ));
    }

    let mut params = init_flat(n, config, true, GAT_INIT_STREAM);
    let sizes: Vec<usize> = params.slices().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(&sizes, config.learning_rate, config.weight_decay);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let pairs = build_epoch_pairs(graph, &pos_by_learner, config, n_s, epoch as u64)?;

        let mut h = params.embed.clone();
        let mut caches = Vec::with_capacity(params.layers.len());
        for (w, a) in &params.layers {
            let a = a.as_ref().expect("gat layers carry attention");
            let (agg, cache) = attn_forward(&h, w, a, &csr);
            let h_next = agg.mapv(silu);
            caches.push((h, agg, cache));
            h = h_next;
        }

        let (loss, probs, dh_out) = bce_on_pairs(&h, &pairs);
        let labels: Vec<bool> = pairs.iter().map(|&(_, _, y)| y).collect();
        let train_auc = auc(&probs, &labels).unwrap_or(f64::NAN);

        let mut grads = params.zeros_like();
        let mut dh = dh_out;
        for (li, (h_in, agg, cache)) in caches.iter().enumerate().rev() {
            let mut g = agg.mapv(silu_prime);
            g *= &dh;
            let (w, a) = &params.layers[li];
            let a = a.as_ref().expect("gat layers carry attention");
            let mut dh_in = Array2::zeros(h_in.raw_dim());
            let (gw, ga) = &mut grads.layers[li];
            let ga = ga.as_mut().expect("gat layers carry attention");
            attn_backward(&g, h_in, w, a, &csr, cache, &mut dh_in, gw, ga);
            dh = dh_in;
        }
        grads.embed += &dh;

        adam.step(&mut params.slices_mut(), &grads.slices());
        if !params.all_finite() {
            return Err(Error::NonFinite("gat training"));
        }
        history.push(EpochStats {
            epoch,
            loss,
            train_auc,
        });
    }

    let mut h = params.embed.clone();
    for (w, a) in &params.layers {
        let a = a.as_ref().expect("gat layers carry attention");
        let (agg, _) = attn_forward(&h, w, a, &csr);
        h = agg.mapv(silu);
    }
    Ok((
        EmbeddingScorer {
            method: Method::Gat,
            embeddings: split_embeddings(&h, n_s),
        },
        history,
    ))
}

// ---------------------------------------------------------------------------
// LP

/// Per-learner label propagation result.
#[derive(Debug, Clone)]
pub struct LabelPropagation {
    scores: Array2<f64>,
    /// True when every learner's sweep settled below the movement threshold
    /// within the iteration budget.
    pub converged: bool,
}

pub const LP_CONVERGENCE_EPS: f64 = 1e-9;

impl LinkScorer for LabelPropagation {
    fn method(&self) -> Method {
        Method::Lp
    }

    fn score(&self, learner: LearnerId, concept: ConceptId) -> f64 {
        self.scores[[learner.0, concept.0]]
    }
}

/// Propagates each learner's clamped labels over the undirected prerequisite
/// graph: free concepts move toward damping * neighbor mean + (1 - damping) *
/// initial value; clamped concepts never move. Initial values: 1 for train
/// positives, 0 for explicit dont-know, 0.5 elsewhere. Dont-know pairs held
/// out as test negatives are left free so evaluation never sees their labels.
/// Free concepts with no prerequisite neighbors keep their initial value.
pub fn label_propagation(
    graph: &HeteroGraph,
    split: &EdgeSplit,
    iterations: usize,
    damping: f64,
) -> Result<LabelPropagation> {
    if !(0.0..=1.0).contains(&damping) {
        return Err(Error::Domain {
            what: "damping",
            range: "[0, 1]",
            value: damping,
        });
    }
    if iterations == 0 {
        return Err(Error::Config(
            "label propagation needs at least one iteration".into(),
        ));
    }
    let n_l = graph.n_learners();
    let n_c = graph.n_concepts();

    // Undirected prerequisite adjacency.
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n_c];
    for &(a, b) in graph.prereq_edges() {
        neighbors[a.0].push(b.0);
        neighbors[b.0].push(a.0);
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }

    let held_out: std::collections::BTreeSet<(LearnerId, ConceptId)> =
        split.test_neg.iter().copied().collect();

    let mut scores = Array2::zeros((n_l, n_c));
    let mut all_converged = true;

    for l in 0..n_l {
        let learner = LearnerId(l);
        let mut init = vec![0.5; n_c];
        let mut clamped = vec![false; n_c];
        for k in split.train_pos_of(learner) {
            init[k.0] = 1.0;
            clamped[k.0] = true;
        }
        for &k in graph.learner_dontknow(learner) {
            if !held_out.contains(&(learner, k)) {
                init[k.0] = 0.0;
                clamped[k.0] = true;
            }
        }

        let mut current = init.clone();
        let mut converged = false;
        for _ in 0..iterations {
            let mut next = current.clone();
            let mut max_delta = 0.0f64;
            for k in 0..n_c {
                if clamped[k] || neighbors[k].is_empty() {
                    continue;
                }
                let mean: f64 = neighbors[k].iter().map(|&j| current[j]).sum::<f64>()
                    / neighbors[k].len() as f64;
                let value = damping * mean + (1.0 - damping) * init[k];
                max_delta = max_delta.max((value - current[k]).abs());
                next[k] = value;
            }
            current = next;
            if max_delta < LP_CONVERGENCE_EPS {
                converged = true;
                break;
            }
        }
        all_converged &= converged;
        for k in 0..n_c {
            scores[[l, k]] = current[k];
        }
    }

    Ok(LabelPropagation {
        scores,
        converged: all_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Assessment, AssessmentId, Concept, GraphParts, Learner};
    use crate::subgraph::split_edges;

    fn toy_graph() -> HeteroGraph {
        HeteroGraph::new(GraphParts {
            learners: (1..=3)
                .map(|i| Learner {
                    ext_id: format!("s{i}"),
                })
                .collect(),
            concepts: (0..4)
                .map(|i| Concept {
                    ext_id: format!("k{i}"),
                    label: format!("k{i}"),
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
                (ConceptId(1), ConceptId(3)),
                (ConceptId(0), ConceptId(2)),
            ],
            item_concept: (0..4).map(|i| (AssessmentId(i), ConceptId(i))).collect(),
            know_edges: vec![
                (LearnerId(0), ConceptId(0)),
                (LearnerId(0), ConceptId(1)),
                (LearnerId(1), ConceptId(0)),
                (LearnerId(2), ConceptId(2)),
            ],
            dontknow_edges: vec![
                (LearnerId(0), ConceptId(3)),
                (LearnerId(1), ConceptId(2)),
                (LearnerId(2), ConceptId(3)),
            ],
            responses: vec![],
        })
        .unwrap()
    }

    #[test]
    fn method_round_trips_through_strings() {
        for m in Method::all() {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("boosted-trees".parse::<Method>().is_err());
    }

    #[test]
    fn rg_is_deterministic_and_roughly_uniform() {
        let rg = RandomGuess { seed: 99 };
        let a = rg.score(LearnerId(3), ConceptId(7));
        assert_eq!(a, rg.score(LearnerId(3), ConceptId(7)));
        assert_ne!(a, rg.score(LearnerId(3), ConceptId(8)));
        assert_ne!(
            a,
            RandomGuess { seed: 100 }.score(LearnerId(3), ConceptId(7))
        );

        let mut sum = 0.0;
        let mut deciles = [0usize; 10];
        let n = 10_000usize;
        for l in 0..100 {
            for k in 0..100 {
                let s = rg.score(LearnerId(l), ConceptId(k));
                assert!((0.0..1.0).contains(&s));
                sum += s;
                deciles[(s * 10.0) as usize] += 1;
            }
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        for (i, &c) in deciles.iter().enumerate() {
            assert!((850..=1150).contains(&c), "decile {i}: {c}");
        }
    }

    #[test]
    fn gcn_trains_and_loss_decreases() {
        let graph = toy_graph();
        let split = EdgeSplit::full(&graph);
        let cfg = HgnnConfig {
            embed_dim: 8,
            epochs: 40,
            seed: 21,
            ..HgnnConfig::default()
        };
        let (scorer, history) = gcn_train(&graph, &split, &cfg).unwrap();
        assert_eq!(scorer.method(), Method::Gcn);
        assert!(history.last().unwrap().loss < history[0].loss);
        let s = scorer.score(LearnerId(0), ConceptId(0));
        assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn gat_trains_and_loss_decreases() {
        let graph = toy_graph();
        let split = EdgeSplit::full(&graph);
        let cfg = HgnnConfig {
            embed_dim: 8,
            epochs: 40,
            seed: 22,
            ..HgnnConfig::default()
        };
        let (scorer, history) = gat_train(&graph, &split, &cfg).unwrap();
        assert_eq!(scorer.method(), Method::Gat);
        assert!(history.last().unwrap().loss < history[0].loss);
    }

    #[test]
    fn trained_baselines_are_deterministic() {
        let graph = toy_graph();
        let split = split_edges(&graph, 0.75, 3).unwrap();
        let cfg = HgnnConfig {
            embed_dim: 4,
            epochs: 10,
            seed: 5,
            ..HgnnConfig::default()
        };
        let (a, _) = gcn_train(&graph, &split, &cfg).unwrap();
        let (b, _) = gcn_train(&graph, &split, &cfg).unwrap();
        for l in 0..3 {
            for k in 0..4 {
                assert_eq!(
                    a.score(LearnerId(l), ConceptId(k)).to_bits(),
                    b.score(LearnerId(l), ConceptId(k)).to_bits()
                );
            }
        }
    }

    /// Chain a -> b -> c; learner holds a as train positive and c as explicit
    /// dont-know. The free middle concept lands exactly on 0.5: its neighbor
    /// mean is (1 + 0)/2 = 0.5 and its initial value is 0.5, so every blend
    /// of the two is 0.5.
    #[test]
    fn lp_chain_fixed_point() {
        let graph = HeteroGraph::new(GraphParts {
            learners: vec![Learner {
                ext_id: "s1".into(),
            }],
            concepts: ["a", "b", "c"]
                .iter()
                .map(|s| Concept {
                    ext_id: (*s).into(),
                    label: (*s).into(),
                })
                .collect(),
            assessments: (0..3)
                .map(|i| Assessment {
                    ext_id: format!("q{i}"),
                    label: format!("q{i}"),
                })
                .collect(),
            prereq_edges: vec![(ConceptId(0), ConceptId(1)), (ConceptId(1), ConceptId(2))],
            item_concept: (0..3).map(|i| (AssessmentId(i), ConceptId(i))).collect(),
            know_edges: vec![(LearnerId(0), ConceptId(0))],
            dontknow_edges: vec![(LearnerId(0), ConceptId(2))],
            responses: vec![],
        })
        .unwrap();
        let split = EdgeSplit::full(&graph);
        let lp = label_propagation(&graph, &split, 100, 0.9).unwrap();
        assert!(lp.converged);
        assert_eq!(lp.score(LearnerId(0), ConceptId(0)), 1.0);
        assert!((lp.score(LearnerId(0), ConceptId(1)) - 0.5).abs() < LP_CONVERGENCE_EPS);
        assert_eq!(lp.score(LearnerId(0), ConceptId(2)), 0.0);
    }

    #[test]
    fn lp_isolated_concepts_keep_initial_value() {
        let graph = toy_graph();
        let mut parts = GraphParts::default();
        parts.learners = vec![Learner {
            ext_id: "s1".into(),
        }];
        parts.concepts = (0..3)
            .map(|i| Concept {
                ext_id: format!("k{i}"),
                label: format!("k{i}"),
            })
            .collect();
        parts.assessments = (0..3)
            .map(|i| Assessment {
                ext_id: format!("q{i}"),
                label: format!("q{i}"),
            })
            .collect();
        parts.item_concept = (0..3).map(|i| (AssessmentId(i), ConceptId(i))).collect();
        // No prereq edges at all; learner knows k0.
        parts.know_edges = vec![(LearnerId(0), ConceptId(0))];
        let isolated = HeteroGraph::new(parts).unwrap();
        let lp = label_propagation(&isolated, &EdgeSplit::full(&isolated), 10, 0.9).unwrap();
        assert!(lp.converged);
        assert_eq!(lp.score(LearnerId(0), ConceptId(0)), 1.0);
        assert_eq!(lp.score(LearnerId(0), ConceptId(1)), 0.5);
        assert_eq!(lp.score(LearnerId(0), ConceptId(2)), 0.5);
        drop(graph);
    }

    #[test]
    fn lp_reports_nonconvergence_with_tiny_budget() {
        // Longer chain, clamped only at one end: one sweep cannot settle.
        let graph = HeteroGraph::new(GraphParts {
            learners: vec![Learner {
                ext_id: "s1".into(),
            }],
            concepts: (0..6)
                .map(|i| Concept {
                    ext_id: format!("k{i}"),
                    label: format!("k{i}"),
                })
                .collect(),
            assessments: (0..6)
                .map(|i| Assessment {
                    ext_id: format!("q{i}"),
                    label: format!("q{i}"),
                })
                .collect(),
            prereq_edges: (0..5).map(|i| (ConceptId(i), ConceptId(i + 1))).collect(),
            item_concept: (0..6).map(|i| (AssessmentId(i), ConceptId(i))).collect(),
            know_edges: vec![(LearnerId(0), ConceptId(0))],
            dontknow_edges: vec![],
            responses: vec![],
        })
        .unwrap();
        let split = EdgeSplit::full(&graph);
        let one = label_propagation(&graph, &split, 1, 0.9).unwrap();
        assert!(!one.converged);
        let many = label_propagation(&graph, &split, 10_000, 0.9).unwrap();
        assert!(many.converged);
    }

    #[test]
    fn lp_leaves_held_out_negatives_free() {
        let graph = toy_graph();
        // Force (s1, k3) into test_neg; its dont-know label must not clamp.
        let split = EdgeSplit {
            seed: 0,
            train_ratio: 0.8,
            train_pos: vec![(LearnerId(0), ConceptId(0)), (LearnerId(0), ConceptId(1))],
            test_pos: vec![],
            test_neg: vec![(LearnerId(0), ConceptId(3))],
        };
        let lp = label_propagation(&graph, &split, 200, 0.9).unwrap();
        let held = lp.score(LearnerId(0), ConceptId(3));
        assert!(held > 0.0, "held-out negative was clamped to its label");
        // The same pair clamps to 0 when not held out.
        let split_all = EdgeSplit {
            test_neg: vec![],
            ..split
        };
        let lp2 = label_propagation(&graph, &split_all, 200, 0.9).unwrap();
        assert_eq!(lp2.score(LearnerId(0), ConceptId(3)), 0.0);
    }

    #[test]
    fn lp_validates_inputs() {
        let graph = toy_graph();
        let split = EdgeSplit::full(&graph);
        assert!(matches!(
            label_propagation(&graph, &split, 10, 1.5),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            label_propagation(&graph, &split, 0, 0.9),
            Err(Error::Config(_))
        ));
    }
}
