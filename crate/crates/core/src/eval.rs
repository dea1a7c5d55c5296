//! Evaluation: ranking quality and the repeated-trial experiment harness.

use serde::{Deserialize, Serialize};

use crate::baselines::{gat_train, gcn_train, label_propagation, LinkScorer, Method, RandomGuess};
use crate::error::{Error, Result};
use crate::graph::{ConceptId, HeteroGraph, LearnerId};
use crate::hgnn::{embed, train, HgnnConfig, HgnnModel, NegSampler};
use crate::rng::{mix, rng_from_seed, sample_without_replacement};
use crate::subgraph::{split_edges, EdgeSplit, PerceptionSubgraph};
use crate::synth::GroundTruth;

/// Area under the ROC curve via the Mann-Whitney statistic with average ranks
/// for ties: AUC = (R_pos - n_pos(n_pos+1)/2) / (n_pos * n_neg), where R_pos
/// is the sum of 1-based ranks of the positives.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", scores.len()),
            actual: format!("{}", labels.len()),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("auc needs at least one scored pair"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("auc scoring"));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }

    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &t in &idx[i..=j] {
            if labels[t] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// What counts as a test pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Held-out explicit know edges vs held-out explicit dont-know edges,
    /// balanced by subsampling the larger class.
    HeldOutExplicit,
    /// The generator's hidden labels for unmentioned assessed concepts;
    /// training then uses every explicit edge. Needs a ground-truth sidecar.
    TrueLatent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub methods: Vec<Method>,
    pub trials: usize,
    pub ratio: f64,
    pub base_seed: u64,
    pub eval_mode: EvalMode,
    /// Shared by HGNN, GCN, and GAT. Its seed and sampler fields are
    /// overridden per trial / per method.
    pub model: HgnnConfig,
    pub lp_iterations: usize,
    pub lp_damping: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            methods: Method::all().to_vec(),
            trials: 30,
            ratio: 0.8,
            base_seed: 42,
            eval_mode: EvalMode::HeldOutExplicit,
            model: HgnnConfig::default(),
            lp_iterations: 100,
            lp_damping: 0.9,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("experiment needs at least one method".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("experiment needs at least one trial".into()));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Domain {
                what: "ratio",
                range: "(0, 1]",
                value: self.ratio,
            });
        }
        self.model.validate()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// Per-trial AUCs in trial order.
    pub aucs: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n-1); zero for a single trial.
    pub std_dev: f64,
}

impl MethodResult {
    fn from_aucs(method: Method, aucs: Vec<f64>) -> Self {
        let n = aucs.len() as f64;
        let mean = aucs.iter().sum::<f64>() / n;
        let std_dev = if aucs.len() > 1 {
            (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MethodResult {
            method,
            aucs,
            mean,
            std_dev,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub results: Vec<MethodResult>,
}

impl ResultTable {
    pub fn mean_of(&self, method: Method) -> Option<f64> {
        self.results
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.mean)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,trial,auc\n");
        for r in &self.results {
            for (t, a) in r.aucs.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", r.method, t, a));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some("method,trial,auc") => {}
            other => {
                return Err(Error::Parse(format!(
                    "expected header method,trial,auc, got {other:?}"
                )))
            }
        }
        // Methods appear grouped; trials within a method must be in order.
        let mut order: Vec<Method> = Vec::new();
        let mut by_method: std::collections::BTreeMap<Method, Vec<f64>> =
            std::collections::BTreeMap::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let bad = || Error::Parse(format!("result row {}: {line:?}", i + 2));
            let method: Method = parts.next().ok_or_else(bad)?.parse()?;
            let trial: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let auc_v: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let entry = by_method.entry(method).or_insert_with(|| {
                order.push(method);
                Vec::new()
            });
            if trial != entry.len() {
                return Err(Error::Parse(format!(
                    "trial {} out of order for {} (expected {})",
                    trial,
                    method,
                    entry.len()
                )));
            }
            entry.push(auc_v);
        }
        if order.is_empty() {
            return Err(Error::EmptyInput("result csv has no rows"));
        }
        let results = order
            .into_iter()
            .map(|m| MethodResult::from_aucs(m, by_method.remove(&m).unwrap()))
            .collect();
        Ok(ResultTable { results })
    }

    pub fn to_json(&self) -> String {
        let mut body = serde_json::to_string_pretty(self).expect("table serializes");
        body.push('\n');
        body
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Method | Mean AUC | SD | Trials |\n|---|---|---|---|\n");
        for r in &self.results {
            out.push_str(&format!(
                "| {} | {:.4} | {:.4} | {} |\n",
                r.method,
                r.mean,
                r.std_dev,
                r.aucs.len()
            ));
        }
        out
    }
}

/// Everything needed to rerun or audit an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: ExperimentSpec,
    pub graph_fingerprint: String,
    pub trial_seeds: Vec<u64>,
}

impl RunManifest {
    pub fn new(spec: &ExperimentSpec, graph: &HeteroGraph) -> Self {
        RunManifest {
            spec: spec.clone(),
            graph_fingerprint: graph.fingerprint(),
            trial_seeds: (0..spec.trials).map(|t| spec.trial_seed(t)).collect(),
        }
    }
}

const BALANCE_STREAM: u64 = 0xba1a;

/// Test pairs for one trial: (learner, concept, label).
fn test_pairs(
    graph: &HeteroGraph,
    truth: Option<&GroundTruth>,
    spec: &ExperimentSpec,
    split: &EdgeSplit,
    seed: u64,
) -> Result<Vec<(LearnerId, ConceptId, bool)>> {
    match spec.eval_mode {
        EvalMode::HeldOutExplicit => {
            let n = split.test_pos.len().min(split.test_neg.len());
            if n == 0 {
                return Err(Error::EmptySplit);
            }
            let mut rng = rng_from_seed(mix(seed, &[BALANCE_STREAM]));
            let pos = sample_without_replacement(&split.test_pos, n, &mut rng);
            let neg = sample_without_replacement(&split.test_neg, n, &mut rng);
            let mut pairs: Vec<(LearnerId, ConceptId, bool)> = Vec::with_capacity(2 * n);
            pairs.extend(pos.into_iter().map(|(l, k)| (l, k, true)));
            pairs.extend(neg.into_iter().map(|(l, k)| (l, k, false)));
            Ok(pairs)
        }
        EvalMode::TrueLatent => {
            let truth = truth.ok_or(Error::Config(
                "true-latent evaluation needs a ground-truth sidecar".into(),
            ))?;
            if truth.latent_labels.is_empty() {
                return Err(Error::EmptyInput("ground truth has no latent labels"));
            }
            let _ = graph;
            Ok(truth
                .latent_labels
                .iter()
                .map(|(&(l, k), &y)| (l, k, y))
                .collect())
        }
    }
}

fn score_pairs(scorer: &dyn LinkScorer, pairs: &[(LearnerId, ConceptId, bool)]) -> Result<f64> {
    let scores: Vec<f64> = pairs.iter().map(|&(l, k, _)| scorer.score(l, k)).collect();
    let labels: Vec<bool> = pairs.iter().map(|&(_, _, y)| y).collect();
    auc(&scores, &labels)
}

fn run_trial(
    graph: &HeteroGraph,
    truth: Option<&GroundTruth>,
    spec: &ExperimentSpec,
    method: Method,
    trial: usize,
) -> Result<f64> {
    let seed = spec.trial_seed(trial);
    let split = split_edges(graph, spec.ratio, seed)?;
    let pairs = test_pairs(graph, truth, spec, &split, seed)?;

    match method {
        Method::Rg => score_pairs(&RandomGuess { seed }, &pairs),
        Method::Lp => {
            let lp = label_propagation(graph, &split, spec.lp_iterations, spec.lp_damping)?;
            score_pairs(&lp, &pairs)
        }
        Method::Gcn => {
            let cfg = HgnnConfig {
                seed,
                ..spec.model.clone()
            };
            let (scorer, _) = gcn_train(graph, &split, &cfg)?;
            score_pairs(&scorer, &pairs)
        }
        Method::Gat => {
            let cfg = HgnnConfig {
                seed,
                ..spec.model.clone()
            };
            let (scorer, _) = gat_train(graph, &split, &cfg)?;
            score_pairs(&scorer, &pairs)
        }
        Method::Hgnn | Method::HgnnNoEins => {
            let sampler = if method == Method::Hgnn {
                NegSampler::Eins
            } else {
                NegSampler::UniformUnmentioned
            };
            let cfg = HgnnConfig {
                seed,
                sampler,
                ..spec.model.clone()
            };
            let sub = PerceptionSubgraph::from_graph(graph);
            let mut model = HgnnModel::init(cfg, graph.n_learners(), graph.n_concepts())?;
            train(&mut model, &sub, &split, graph)?;
            let emb = embed(&model, &sub, &split.train_pos);
            let scores: Vec<f64> = pairs.iter().map(|&(l, k, _)| emb.score(l, k)).collect();
            let labels: Vec<bool> = pairs.iter().map(|&(_, _, y)| y).collect();
            auc(&scores, &labels)
        }
    }
}

/// Runs every (method, trial) cell, trials seeded base_seed + t. Cells are
/// independent and run on a bounded rayon pool (`jobs` threads; 0 picks the
/// rayon default), collected by index so scheduling cannot reorder results.
pub fn run_experiment(
    graph: &HeteroGraph,
    truth: Option<&GroundTruth>,
    spec: &ExperimentSpec,
    jobs: usize,
) -> Result<ResultTable> {
    spec.validate()?;
    if spec.eval_mode == EvalMode::TrueLatent && truth.is_none() {
        return Err(Error::Config(
            "true-latent evaluation needs a ground-truth sidecar".into(),
        ));
    }

    let tasks: Vec<(usize, usize)> = (0..spec.methods.len())
        .flat_map(|m| (0..spec.trials).map(move |t| (m, t)))
        .collect();

    let run_all = || -> Result<Vec<f64>> {
        use rayon::prelude::*;
        tasks
            .par_iter()
            .map(|&(m, t)| run_trial(graph, truth, spec, spec.methods[m], t))
            .collect()
    };
    let aucs: Vec<f64> = if jobs == 0 {
        run_all()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Other(format!("worker pool: {e}")))?;
        pool.install(run_all)?
    };

    let results = spec
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let per_trial = aucs[m * spec.trials..(m + 1) * spec.trials].to_vec();
            MethodResult::from_aucs(method, per_trial)
        })
        .collect();
    Ok(ResultTable { results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// O(n^2) pair-counting oracle: wins + half ties over all pos/neg pairs.
    fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            if !yi {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj {
                    continue;
                }
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn perfect_and_inverted_ranking() {
        let scores = [0.9, 0.8, 0.3, 0.1];
        let labels = [true, true, false, false];
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
        let inverted = [false, false, true, true];
        assert_eq!(auc(&scores, &inverted).unwrap(), 0.0);
    }

    #[test]
    fn all_tied_scores_give_half() {
        let scores = [0.4; 6];
        let labels = [true, false, true, false, true, false];
        assert_eq!(auc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn partial_tie_frozen_value() {
        let scores = [0.8, 0.6, 0.6, 0.2];
        let labels = [true, false, true, false];
        assert_eq!(auc(&scores, &labels).unwrap(), 0.875);
    }

    #[test]
    fn degenerate_labels_rejected() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(Error::DegenerateLabels)
        ));
        assert!(matches!(
            auc(&[0.1, 0.2], &[false, false]),
            Err(Error::DegenerateLabels)
        ));
        assert!(matches!(auc(&[], &[]), Err(Error::EmptyInput(_))));
        assert!(matches!(
            auc(&[0.1], &[true, false]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            auc(&[f64::NAN, 0.2], &[true, false]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn matches_quadratic_oracle_on_random_instances() {
        let mut rng = crate::rng::rng_from_seed(314);
        for trial in 0..200 {
            let n = rng.random_range(2..60);
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                // Coarse grid forces plenty of ties.
                let s: f64 = f64::from(rng.random_range(0..10u32)) / 10.0;
                scores.push(s);
                labels.push(rng.random_range(0..2u32) == 1);
            }
            if !labels.contains(&true) || !labels.contains(&false) {
                continue;
            }
            let got = auc(&scores, &labels).unwrap();
            let want = auc_oracle(&scores, &labels);
            assert!(
                (got - want).abs() < 1e-12,
                "trial {trial}: got {got}, want {want}"
            );
        }
    }

    use crate::synth::{gen_cohort, SynthConfig};

    fn test_cohort() -> (HeteroGraph, GroundTruth) {
        gen_cohort(&SynthConfig {
            n_learners: 24,
            n_concepts: 14,
            n_items: 10,
            dag_layers: 3,
            ..Default::default()
        })
        .unwrap()
    }

    fn fast_spec(methods: Vec<Method>, trials: usize) -> ExperimentSpec {
        ExperimentSpec {
            methods,
            trials,
            model: HgnnConfig {
                embed_dim: 8,
                epochs: 15,
                ..HgnnConfig::default()
            },
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn rg_mean_sits_near_chance() {
        let (graph, truth) = gen_cohort(&SynthConfig::default()).unwrap();
        let mut spec = fast_spec(vec![Method::Rg], 30);
        spec.eval_mode = EvalMode::TrueLatent;
        // ~2000 latent pairs across 30 trials keeps the mean tight.
        let table = run_experiment(&graph, Some(&truth), &spec, 0).unwrap();
        let mean = table.mean_of(Method::Rg).unwrap();
        assert!((0.47..=0.53).contains(&mean), "RG mean {mean}");
    }

    #[test]
    fn experiment_is_deterministic() {
        let (graph, truth) = test_cohort();
        let spec = fast_spec(vec![Method::Rg, Method::Lp, Method::Gcn], 2);
        let a = run_experiment(&graph, Some(&truth), &spec, 0).unwrap();
        let b = run_experiment(&graph, Some(&truth), &spec, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn true_latent_requires_sidecar() {
        let (graph, _) = test_cohort();
        let mut spec = fast_spec(vec![Method::Rg], 1);
        spec.eval_mode = EvalMode::TrueLatent;
        assert!(matches!(
            run_experiment(&graph, None, &spec, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn spec_validation() {
        let no_methods = fast_spec(vec![], 1);
        assert!(no_methods.validate().is_err());
        let no_trials = fast_spec(vec![Method::Rg], 0);
        assert!(no_trials.validate().is_err());
        let mut bad_ratio = fast_spec(vec![Method::Rg], 1);
        bad_ratio.ratio = 0.0;
        assert!(matches!(bad_ratio.validate(), Err(Error::Domain { .. })));
    }

    #[test]
    fn all_methods_produce_finite_aucs_in_both_modes() {
        let (graph, truth) = test_cohort();
        for mode in [EvalMode::HeldOutExplicit, EvalMode::TrueLatent] {
            let mut spec = fast_spec(Method::all().to_vec(), 1);
            spec.eval_mode = mode;
            let table = run_experiment(&graph, Some(&truth), &spec, 0).unwrap();
            assert_eq!(table.results.len(), 6);
            for r in &table.results {
                assert!(
                    r.mean.is_finite() && (0.0..=1.0).contains(&r.mean),
                    "{}: {}",
                    r.method,
                    r.mean
                );
            }
        }
    }

    #[test]
    fn csv_round_trip_is_identical() {
        let (graph, truth) = test_cohort();
        let spec = fast_spec(vec![Method::Rg, Method::Lp], 3);
        let table = run_experiment(&graph, Some(&truth), &spec, 0).unwrap();
        let csv = table.to_csv();
        let parsed = ResultTable::from_csv(&csv).unwrap();
        assert_eq!(parsed, table);
        assert_eq!(parsed.to_csv(), csv);

        let json = table.to_json();
        assert_eq!(ResultTable::from_json(&json).unwrap(), table);

        let md = table.to_markdown();
        assert!(md.starts_with("| Method |"));
        assert!(md.contains("| RG |"));
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(ResultTable::from_csv("wrong,header\n").is_err());
        assert!(ResultTable::from_csv("method,trial,auc\nRG,1,0.5\n").is_err());
        assert!(ResultTable::from_csv("method,trial,auc\n").is_err());
        assert!(ResultTable::from_csv("method,trial,auc\nNOPE,0,0.5\n").is_err());
    }

    #[test]
    fn manifest_records_seeds_and_fingerprint() {
        let (graph, _) = test_cohort();
        let mut spec = fast_spec(vec![Method::Rg], 3);
        spec.base_seed = 100;
        let manifest = RunManifest::new(&spec, &graph);
        assert_eq!(manifest.trial_seeds, vec![100, 101, 102]);
        assert_eq!(manifest.graph_fingerprint, graph.fingerprint());
        let json = serde_json::to_string(&manifest).unwrap();
        let back: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, manifest);
    }
}
