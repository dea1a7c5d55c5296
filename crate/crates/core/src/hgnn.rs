//! Heterogeneous GNN link predictor over the perception subgraph.
//!
//! Nodes are learners and concepts in one index space (learners first). Four
//! message-passing relations, each with its own linear transform and
//! attention vector:
//!
//!   know        concept -> learner   (the learner receives)
//!   know_rev    learner -> concept
//!   prereq      prerequisite -> dependent
//!   prereq_rev  dependent -> prerequisite
//!
//! A layer aggregates each relation with additive attention (see
//! [`crate::attention`]), averages over relations that actually deliver to a
//! node, adds a self transform, and applies silu. The link score for
//! (learner, concept) is the sigmoid of the dot of their final embeddings,
//! trained with binary cross entropy against explicit-informed negatives and
//! full-batch Adam. Reverse-mode gradients are written out by hand and
//! finite-difference checked in the tests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::attention::{attn_backward, attn_forward, AttnCache, CsrEdges};
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::graph::{ConceptId, HeteroGraph, LearnerId};
use crate::opt::Adam;
use crate::rng::{mix, rng_from_seed};
use crate::subgraph::{eins_sample, uniform_unmentioned_sample, EdgeSplit, PerceptionSubgraph};

pub const N_RELATIONS: usize = 4;
pub const REL_KNOW: usize = 0;
pub const REL_KNOW_REV: usize = 1;
pub const REL_PREREQ: usize = 2;
pub const REL_PREREQ_REV: usize = 3;

const REL_NAMES: [&str; N_RELATIONS] = ["know", "know_rev", "prereq", "prereq_rev"];

/// Probabilities are clamped to [EPS, 1 - EPS] inside the loss.
pub const PROB_EPS: f64 = 1e-7;

const INIT_STREAM: u64 = 0x1217;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegSampler {
    /// Explicit-informed: dont-know concepts first, unmentioned to top up.
    Eins,
    /// Ablation: same budget drawn uniformly from unmentioned concepts.
    UniformUnmentioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgnnConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Latent states with score >= threshold are inferred Know.
    pub threshold: f64,
    pub weight_decay: f64,
    /// Implicit negative budget as a fraction of the explicit budget.
    pub rho: f64,
    /// Explicit negative budget per learner; `None` uses the learner's
    /// training-positive count.
    pub n_e: Option<usize>,
    pub sampler: NegSampler,
    pub seed: u64,
}

impl Default for HgnnConfig {
    fn default() -> Self {
        HgnnConfig {
            embed_dim: 64,
            layers: 2,
            learning_rate: 0.01,
            epochs: 200,
            threshold: 0.5,
            weight_decay: 0.0,
            rho: 0.5,
            n_e: None,
            sampler: NegSampler::Eins,
            seed: 42,
        }
    }
}

impl HgnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be >= 1".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Domain {
                what: "learning_rate",
                range: "[0, inf)",
                value: self.learning_rate,
            });
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Domain {
                what: "threshold",
                range: "[0, 1]",
                value: self.threshold,
            });
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Domain {
                what: "weight_decay",
                range: "[0, inf)",
                value: self.weight_decay,
            });
        }
        if !self.rho.is_finite() || self.rho < 0.0 {
            return Err(Error::Domain {
                what: "rho",
                range: "[0, inf)",
                value: self.rho,
            });
        }
        if self.n_e == Some(0) {
            return Err(Error::Config("n_e must be >= 1 when set".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// d/dx silu(x) = sigma(x) (1 + x (1 - sigma(x))).
pub fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Mean binary cross entropy over probability predictions, clamped away from
/// 0 and 1 so the loss stays finite.
pub fn bce_loss(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", probs.len()),
            actual: format!("{}", labels.len()),
        });
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput("bce_loss needs at least one prediction"));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        total -= if y { pc.ln() } else { (1.0 - pc).ln() };
    }
    Ok(total / probs.len() as f64)
}

// ---------------------------------------------------------------------------
// Parameters

#[derive(Debug, Clone)]
pub struct LayerParams {
    pub rel_w: [Array2<f64>; N_RELATIONS],
    pub rel_a: [Array1<f64>; N_RELATIONS],
    pub self_w: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ParamSet {
    pub learner_embed: Array2<f64>,
    pub concept_embed: Array2<f64>,
    pub layers: Vec<LayerParams>,
}

impl ParamSet {
    pub fn zeros_like(&self) -> Self {
        ParamSet {
            learner_embed: Array2::zeros(self.learner_embed.raw_dim()),
            concept_embed: Array2::zeros(self.concept_embed.raw_dim()),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    rel_w: std::array::from_fn(|r| Array2::zeros(l.rel_w[r].raw_dim())),
                    rel_a: std::array::from_fn(|r| Array1::zeros(l.rel_a[r].raw_dim())),
                    self_w: Array2::zeros(l.self_w.raw_dim()),
                })
                .collect(),
        }
    }

    /// Every tensor in canonical order: embeddings, then per layer the four
    /// relation weights, four attention vectors, and the self weight. The
    /// optimizer, checkpoints, and the finite-difference harness all rely on
    /// this order being stable.
    pub fn tensor_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.learner_embed.as_slice().expect("standard layout"),
            self.concept_embed.as_slice().expect("standard layout"),
        ];
        for layer in &self.layers {
            for w in &layer.rel_w {
                out.push(w.as_slice().expect("standard layout"));
            }
            for a in &layer.rel_a {
                out.push(a.as_slice().expect("standard layout"));
            }
            out.push(layer.self_w.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensor_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.learner_embed.as_slice_mut().expect("standard layout"),
            self.concept_embed.as_slice_mut().expect("standard layout"),
        ];
        for layer in &mut self.layers {
            for w in &mut layer.rel_w {
                out.push(w.as_slice_mut().expect("standard layout"));
            }
            for a in &mut layer.rel_a {
                out.push(a.as_slice_mut().expect("standard layout"));
            }
            out.push(layer.self_w.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// (name, shape) for each tensor, aligned with `tensor_slices`.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            (
                "learner_embed".to_string(),
                self.learner_embed.shape().to_vec(),
            ),
            (
                "concept_embed".to_string(),
                self.concept_embed.shape().to_vec(),
            ),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for (r, w) in layer.rel_w.iter().enumerate() {
                out.push((
                    format!("layer{i}.{}.weight", REL_NAMES[r]),
                    w.shape().to_vec(),
                ));
            }
            for (r, a) in layer.rel_a.iter().enumerate() {
                out.push((
                    format!("layer{i}.{}.attention", REL_NAMES[r]),
                    a.shape().to_vec(),
                ));
            }
            out.push((
                format!("layer{i}.self.weight"),
                layer.self_w.shape().to_vec(),
            ));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensor_slices()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn n_params(&self) -> usize {
        self.tensor_slices().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensor_slices()
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensor_slices_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, flat.len(), "flat vector length mismatch");
    }
}

#[derive(Debug, Clone)]
pub struct HgnnModel {
    pub config: HgnnConfig,
    pub params: ParamSet,
}

impl HgnnModel {
    /// Scaled uniform initialization: each tensor is drawn from
    /// U(-b, b) with b = sqrt(6 / (fan_in + fan_out)). Embedding tables use
    /// fan_in = fan_out = embed_dim; attention vectors use fan_in = 2d,
    /// fan_out = 1. Draws happen in canonical tensor order from a dedicated
    /// stream of the config seed.
    pub fn init(config: HgnnConfig, n_learners: usize, n_concepts: usize) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let mut rng = rng_from_seed(mix(config.seed, &[INIT_STREAM]));
        let mut draw = |len: usize, fan_in: usize, fan_out: usize| -> Vec<f64> {
            use rand::Rng;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..len)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
                .collect()
        };
        let matrix = |data: Vec<f64>, rows: usize, cols: usize| {
            Array2::from_shape_vec((rows, cols), data).expect("shape matches draw length")
        };

        let learner_embed = matrix(draw(n_learners * d, d, d), n_learners, d);
        let concept_embed = matrix(draw(n_concepts * d, d, d), n_concepts, d);
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let rel_w = std::array::from_fn(|_| matrix(draw(d * d, d, d), d, d));
            let rel_a = std::array::from_fn(|_| Array1::from_vec(draw(2 * d, 2 * d, 1)));
            let self_w = matrix(draw(d * d, d, d), d, d);
            layers.push(LayerParams {
                rel_w,
                rel_a,
                self_w,
            });
        }
        Ok(HgnnModel {
            config,
            params: ParamSet {
                learner_embed,
                concept_embed,
                layers,
            },
        })
    }

    pub fn n_learners(&self) -> usize {
        self.params.learner_embed.nrows()
    }

    pub fn n_concepts(&self) -> usize {
        self.params.concept_embed.nrows()
    }
}

// ---------------------------------------------------------------------------
// Topology and forward/backward

/// The four relation edge sets over the joint node space, learners first.
#[derive(Debug, Clone)]
pub struct RelTopology {
    pub n_nodes: usize,
    pub n_learners: usize,
    pub rels: [CsrEdges; N_RELATIONS],
    /// Per node: how many relations deliver at least one message to it.
    rel_count: Vec<f64>,
}

impl RelTopology {
    pub fn new(
        n_learners: usize,
        n_concepts: usize,
        know_edges: &[(LearnerId, ConceptId)],
        prereq_edges: &[(ConceptId, ConceptId)],
    ) -> Self {
        let n = n_learners + n_concepts;
        let concept_node = |k: ConceptId| n_learners + k.0;

        let know: Vec<(usize, usize)> = know_edges
            .iter()
            .map(|&(l, k)| (l.0, concept_node(k)))
            .collect();
        let know_rev: Vec<(usize, usize)> = know_edges
            .iter()
            .map(|&(l, k)| (concept_node(k), l.0))
            .collect();
        let prereq: Vec<(usize, usize)> = prereq_edges
            .iter()
            .map(|&(from, to)| (concept_node(to), concept_node(from)))
            .collect();
        let prereq_rev: Vec<(usize, usize)> = prereq_edges
            .iter()
            .map(|&(from, to)| (concept_node(from), concept_node(to)))
            .collect();

        let rels = [
            CsrEdges::new(n, &know),
            CsrEdges::new(n, &know_rev),
            CsrEdges::new(n, &prereq),
            CsrEdges::new(n, &prereq_rev),
        ];
        let mut rel_count = vec![0.0; n];
        for rel in &rels {
            for (v, count) in rel_count.iter_mut().enumerate() {
                if rel.degree(v) > 0 {
                    *count += 1.0;
                }
            }
        }
        RelTopology {
            n_nodes: n,
            n_learners,
            rels,
            rel_count,
        }
    }

    pub fn from_subgraph(sub: &PerceptionSubgraph) -> Self {
        Self::new(
            sub.n_learners,
            sub.n_concepts,
            sub.know_edges(),
            sub.prereq_edges(),
        )
    }
}

struct LayerCache {
    h_in: Array2<f64>,
    pre: Array2<f64>,
    rel: [Option<AttnCache>; N_RELATIONS],
}

pub struct ForwardPass {
    pub h_out: Array2<f64>,
    layers: Vec<LayerCache>,
}

/// Runs all layers, keeping per-layer caches for backward.
pub fn forward(params: &ParamSet, topo: &RelTopology) -> ForwardPass {
    let d = params.learner_embed.ncols();
    let n_s = params.learner_embed.nrows();
    let mut h = Array2::zeros((topo.n_nodes, d));
    h.slice_mut(s![..n_s, ..]).assign(&params.learner_embed);
    h.slice_mut(s![n_s.., ..]).assign(&params.concept_embed);

    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let mut agg_sum: Array2<f64> = Array2::zeros(h.raw_dim());
        let mut rel_caches: [Option<AttnCache>; N_RELATIONS] = Default::default();
        for r in 0..N_RELATIONS {
            if topo.rels[r].is_empty() {
                continue;
            }
            let (agg, cache) = attn_forward(&h, &layer.rel_w[r], &layer.rel_a[r], &topo.rels[r]);
            agg_sum += &agg;
            rel_caches[r] = Some(cache);
        }
        for v in 0..topo.n_nodes {
            let c = topo.rel_count[v];
            if c > 0.0 {
                agg_sum.row_mut(v).mapv_inplace(|x| x / c);
            }
        }
        let pre = agg_sum + h.dot(&layer.self_w);
        let h_next = pre.mapv(silu);
        layers.push(LayerCache {
            h_in: h,
            pre,
            rel: rel_caches,
        });
        h = h_next;
    }
    ForwardPass { h_out: h, layers }
}

/// Accumulates parameter gradients for d(loss)/d(h_out) = `dh_out`.
pub fn backward(
    params: &ParamSet,
    topo: &RelTopology,
    fwd: &ForwardPass,
    dh_out: Array2<f64>,
    grads: &mut ParamSet,
) {
    let n_s = params.learner_embed.nrows();
    let mut dh = dh_out;
    for (layer_idx, cache) in fwd.layers.iter().enumerate().rev() {
        let lp = &params.layers[layer_idx];
        let lg = &mut grads.layers[layer_idx];

        // Through silu: g = dh (.) silu'(pre).
        let mut g = cache.pre.mapv(silu_prime);
        g *= &dh;

        lg.self_w += &cache.h_in.t().dot(&g);
        let mut dh_in = g.dot(&lp.self_w.t());

        for r in 0..N_RELATIONS {
            let Some(rel_cache) = &cache.rel[r] else {
                continue;
            };
            // The relation mean divides by the number of relations present.
            let mut dagg: Array2<f64> = Array2::zeros(g.raw_dim());
            for v in 0..topo.n_nodes {
                if topo.rels[r].degree(v) > 0 {
                    let scale = 1.0 / topo.rel_count[v];
                    dagg.row_mut(v).assign(&g.row(v));
                    dagg.row_mut(v).mapv_inplace(|x| x * scale);
                }
            }
            attn_backward(
                &dagg,
                &cache.h_in,
                &lp.rel_w[r],
                &lp.rel_a[r],
                &topo.rels[r],
                rel_cache,
                &mut dh_in,
                &mut lg.rel_w[r],
                &mut lg.rel_a[r],
            );
        }
        dh = dh_in;
    }
    grads.learner_embed += &dh.slice(s![..n_s, ..]);
    grads.concept_embed += &dh.slice(s![n_s.., ..]);
}

/// Scored node pairs: (learner node, concept node, label).
pub type NodePair = (usize, usize, bool);

/// Loss, per-pair probabilities, and d(loss)/d(h_out) in one pass.
/// Pairs whose probability lands in the clamped region contribute a constant
/// to the loss and therefore zero gradient.
pub fn bce_on_pairs(h: &Array2<f64>, pairs: &[NodePair]) -> (f64, Vec<f64>, Array2<f64>) {
    let batch = pairs.len() as f64;
    let mut dh = Array2::zeros(h.raw_dim());
    let mut probs = Vec::with_capacity(pairs.len());
    let mut loss = 0.0;
    for &(u, v, y) in pairs {
        let z = h.row(u).dot(&h.row(v));
        let p = sigmoid(z);
        probs.push(p);
        let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        loss -= if y { pc.ln() } else { (1.0 - pc).ln() };
        if p > PROB_EPS && p < 1.0 - PROB_EPS {
            let dz = (p - f64::from(u8::from(y))) / batch;
            let hv = h.row(v).to_owned();
            let hu = h.row(u).to_owned();
            dh.row_mut(u).scaled_add(dz, &hv);
            dh.row_mut(v).scaled_add(dz, &hu);
        }
    }
    (loss / batch, probs, dh)
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// AUC over this epoch's training pairs, scored before the update.
    /// NaN when the epoch had no negatives.
    pub train_auc: f64,
}

/// Positives plus freshly sampled negatives for one epoch, as node pairs.
/// A learner whose negative pools are both empty contributes positives only.
/// Shared by the HGNN and the trained baselines so every method sees the
/// same pair protocol.
pub(crate) fn build_epoch_pairs(
    graph: &HeteroGraph,
    pos_by_learner: &BTreeMap<LearnerId, Vec<ConceptId>>,
    cfg: &HgnnConfig,
    n_learner_nodes: usize,
    epoch: u64,
) -> Result<Vec<NodePair>> {
    let mut pairs: Vec<NodePair> = Vec::new();
    for (&l, positives) in pos_by_learner {
        for &k in positives {
            pairs.push((l.0, n_learner_nodes + k.0, true));
        }
        let n_e = cfg.n_e.unwrap_or(positives.len());
        let batch = match cfg.sampler {
            NegSampler::Eins => eins_sample(graph, l, n_e, cfg.rho, cfg.seed, epoch),
            NegSampler::UniformUnmentioned => {
                uniform_unmentioned_sample(graph, l, n_e, cfg.rho, cfg.seed, epoch)
            }
        };
        match batch {
            Ok(b) => pairs.extend(b.iter().map(|k| (l.0, n_learner_nodes + k.0, false))),
            Err(Error::NoNegativesAvailable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(pairs)
}

/// Train positives grouped by learner, concepts sorted.
pub(crate) fn positives_by_learner(split: &EdgeSplit) -> BTreeMap<LearnerId, Vec<ConceptId>> {
    let mut out: BTreeMap<LearnerId, Vec<ConceptId>> = BTreeMap::new();
    for &(l, k) in &split.train_pos {
        out.entry(l).or_default().push(k);
    }
    out
}

/// Full-batch training on the split's train positives. Negatives are redrawn
/// every epoch from the configured sampler; a learner whose pools are both
/// empty simply trains on positives alone. Message passing sees only training
/// know edges, so held-out positives stay invisible.
pub fn train(
    model: &mut HgnnModel,
    subgraph: &PerceptionSubgraph,
    split: &EdgeSplit,
    graph: &HeteroGraph,
) -> Result<Vec<EpochStats>> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if model.n_learners() != subgraph.n_learners || model.n_concepts() != subgraph.n_concepts {
        return Err(Error::ShapeMismatch {
            expected: format!(
                "{} learners x {} concepts",
                subgraph.n_learners, subgraph.n_concepts
            ),
            actual: format!("{} x {}", model.n_learners(), model.n_concepts()),
        });
    }
    let pos_by_learner = positives_by_learner(split);
    if pos_by_learner.is_empty() {
        return Err(Error::EmptyInput(
            "training requires at least one positive edge",
        ));
    }

    let topo = RelTopology::new(
        subgraph.n_learners,
        subgraph.n_concepts,
        &split.train_pos,
        subgraph.prereq_edges(),
    );
    let n_s = subgraph.n_learners;
    let sizes: Vec<usize> = model
        .params
        .tensor_slices()
        .iter()
        .map(|t| t.len())
        .collect();
    let mut adam = Adam::new(&sizes, cfg.learning_rate, cfg.weight_decay);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let pairs = build_epoch_pairs(graph, &pos_by_learner, &cfg, n_s, epoch as u64)?;
        let fwd = forward(&model.params, &topo);
        let (loss, probs, dh) = bce_on_pairs(&fwd.h_out, &pairs);
        let labels: Vec<bool> = pairs.iter().map(|&(_, _, y)| y).collect();
        let train_auc = auc(&probs, &labels).unwrap_or(f64::NAN);

        let mut grads = model.params.zeros_like();
        backward(&model.params, &topo, &fwd, dh, &mut grads);
        adam.step(
            &mut model.params.tensor_slices_mut(),
            &grads.tensor_slices(),
        );
        if !model.params.all_finite() {
            return Err(Error::NonFinite("hgnn training"));
        }
        history.push(EpochStats {
            epoch,
            loss,
            train_auc,
        });
    }
    Ok(history)
}

// ---------------------------------------------------------------------------
// Scoring and inference

/// Final node embeddings split back into learner and concept tables.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub learner: Array2<f64>,
    pub concept: Array2<f64>,
}

impl Embeddings {
    pub fn score(&self, l: LearnerId, k: ConceptId) -> f64 {
        sigmoid(self.learner.row(l.0).dot(&self.concept.row(k.0)))
    }
}

/// Runs the model over the given know edges (training edges during
/// evaluation, all know edges for deployment) and returns final embeddings.
pub fn embed(
    model: &HgnnModel,
    subgraph: &PerceptionSubgraph,
    know_edges: &[(LearnerId, ConceptId)],
) -> Embeddings {
    let topo = RelTopology::new(
        subgraph.n_learners,
        subgraph.n_concepts,
        know_edges,
        subgraph.prereq_edges(),
    );
    let fwd = forward(&model.params, &topo);
    let n_s = subgraph.n_learners;
    Embeddings {
        learner: fwd.h_out.slice(s![..n_s, ..]).to_owned(),
        concept: fwd.h_out.slice(s![n_s.., ..]).to_owned(),
    }
}

/// Latent perceived states inferred for one learner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferredStates {
    pub know: BTreeSet<ConceptId>,
    pub dontknow: BTreeSet<ConceptId>,
}

/// Scores every learner's latent assessed concepts against `threshold`
/// (boundary counts as Know). Message passing uses the full graph.
pub fn infer_lps(
    model: &HgnnModel,
    graph: &HeteroGraph,
    threshold: f64,
) -> Result<BTreeMap<LearnerId, InferredStates>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Domain {
            what: "threshold",
            range: "[0, 1]",
            value: threshold,
        });
    }
    if model.n_learners() != graph.n_learners() || model.n_concepts() != graph.n_concepts() {
        return Err(Error::ShapeMismatch {
            expected: format!(
                "{} learners x {} concepts",
                graph.n_learners(),
                graph.n_concepts()
            ),
            actual: format!("{} x {}", model.n_learners(), model.n_concepts()),
        });
    }
    let sub = PerceptionSubgraph::from_graph(graph);
    let emb = embed(model, &sub, sub.know_edges());
    let mut out = BTreeMap::new();
    for l in 0..graph.n_learners() {
        let l = LearnerId(l);
        let part = graph.mention_partition(l)?;
        let mut states = InferredStates {
            know: BTreeSet::new(),
            dontknow: BTreeSet::new(),
        };
        for &k in &part.latent {
            if emb.score(l, k) >= threshold {
                states.know.insert(k);
            } else {
                states.dontknow.insert(k);
            }
        }
        out.insert(l, states);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Checkpoints

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorData {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Versioned on-disk model: config, dimensions, a fingerprint of the graph
/// the model was trained on, and every tensor in canonical order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: HgnnConfig,
    pub graph_fingerprint: String,
    pub n_learners: usize,
    pub n_concepts: usize,
    pub tensors: Vec<TensorData>,
}

impl Checkpoint {
    pub fn from_model(model: &HgnnModel, graph_fingerprint: &str) -> Self {
        let specs = model.params.tensor_specs();
        let slices = model.params.tensor_slices();
        let tensors = specs
            .into_iter()
            .zip(slices)
            .map(|((name, shape), data)| TensorData {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            graph_fingerprint: graph_fingerprint.to_string(),
            n_learners: model.n_learners(),
            n_concepts: model.n_concepts(),
            tensors,
        }
    }

    /// Rebuilds the model, verifying version, tensor names, and shapes.
    pub fn into_model(self) -> Result<(HgnnModel, String)> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint version {} (expected {})",
                self.format_version, CHECKPOINT_VERSION
            )));
        }
        let mut model = HgnnModel::init(self.config.clone(), self.n_learners, self.n_concepts)?;
        let specs = model.params.tensor_specs();
        if specs.len() != self.tensors.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} tensors", specs.len()),
                actual: format!("{}", self.tensors.len()),
            });
        }
        {
            let mut slices = model.params.tensor_slices_mut();
            for (i, t) in self.tensors.iter().enumerate() {
                let (name, shape) = &specs[i];
                if &t.name != name || &t.shape != shape {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{name} {shape:?}"),
                        actual: format!("{} {:?}", t.name, t.shape),
                    });
                }
                if t.data.len() != slices[i].len() {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{name}: {} values", slices[i].len()),
                        actual: format!("{}", t.data.len()),
                    });
                }
                slices[i].copy_from_slice(&t.data);
            }
        }
        Ok((model, self.graph_fingerprint))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The checkpointed model only makes sense on the graph it was fit to.
    pub fn verify_graph(&self, graph: &HeteroGraph) -> Result<()> {
        let fp = graph.fingerprint();
        if fp != self.graph_fingerprint {
            return Err(Error::FingerprintMismatch {
                checkpoint: self.graph_fingerprint.clone(),
                graph: fp,
            });
        }
        Ok(())
    }
}
