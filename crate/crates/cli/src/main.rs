//! `kmcoach`: batch front end for the knowledge-monitoring pipeline.
//!
//! Subcommands compose the library stages: `synth` fabricates a cohort,
//! `train` fits the link predictor and writes a checkpoint, `assess` turns
//! inferred perception profiles into monitoring metrics, `coach` renders
//! feedback reports, and `eval` runs the method-comparison harness.
//!
//! Exit codes: 0 success, 1 domain error (validation, config, fingerprint),
//! 2 I/O error. Every run prints its resolved configuration to stderr so
//! batch logs are self-describing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use kmcoach_core::baselines::Method;
use kmcoach_core::coach::{
    assemble_report, cohort_thresholds, render_markdown, write_summary_csv, SummaryRow,
};
use kmcoach_core::eval::{run_experiment, EvalMode, ExperimentSpec, RunManifest};
use kmcoach_core::graph::{load_graph, HeteroGraph};
use kmcoach_core::hgnn::{infer_lps, train, Checkpoint, HgnnConfig, HgnnModel, NegSampler};
use kmcoach_core::sdt::{complete_profile, contingency, d_prime, write_metrics_csv, MetricsRow};
use kmcoach_core::subgraph::{EdgeSplit, PerceptionSubgraph};
use kmcoach_core::synth::{gen_cohort, load_ground_truth, save_ground_truth, SynthConfig};
use kmcoach_core::Error;

#[derive(Parser)]
#[command(
    name = "kmcoach",
    version,
    about = "Knowledge-monitoring pipeline: capture, calibrate, coach"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a graph file against the schema and structural rules
    Validate(ValidateArgs),
    /// Generate a synthetic cohort with a ground-truth sidecar
    Synth(SynthArgs),
    /// Train the link predictor and write a checkpoint
    Train(TrainArgs),
    /// Compare link-prediction methods over repeated trials
    Eval(EvalArgs),
    /// Infer latent states and emit per-learner monitoring metrics
    Assess(AssessArgs),
    /// Emit per-learner feedback reports and a cohort summary
    Coach(CoachArgs),
}

#[derive(Args)]
struct GraphInput {
    /// Graph JSON file
    #[arg(long)]
    graph: PathBuf,
    /// Responses CSV (learner,assessment,correct), replacing in-file responses
    #[arg(long)]
    responses: Option<PathBuf>,
}

impl GraphInput {
    fn load(&self) -> Result<HeteroGraph, CliError> {
        Ok(load_graph(&self.graph, self.responses.as_deref())?)
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: GraphInput,
}

#[derive(Args)]
struct SynthArgs {
    /// Output graph JSON path
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth sidecar path (default: <out> with a .truth.json suffix)
    #[arg(long)]
    truth_out: Option<PathBuf>,
    /// JSON file of defaults; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset sized like a real course (150 learners, 211 concepts, 45 items)
    #[arg(long)]
    course_scale: bool,
    #[arg(long)]
    n_learners: Option<usize>,
    #[arg(long)]
    n_concepts: Option<usize>,
    #[arg(long)]
    n_items: Option<usize>,
    #[arg(long)]
    dag_layers: Option<usize>,
    #[arg(long)]
    prereq_prob: Option<f64>,
    #[arg(long)]
    mastery_base: Option<f64>,
    #[arg(long)]
    mastery_penalty: Option<f64>,
    #[arg(long)]
    slip: Option<f64>,
    #[arg(long)]
    guess: Option<f64>,
    #[arg(long)]
    mention_prob: Option<f64>,
    /// Persona weights as WC,AL,UC,OC,LC (comma-separated, sum 1)
    #[arg(long)]
    persona_mix: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct ModelFlags {
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Score threshold for inferring Know
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Implicit negative budget as a fraction of the explicit budget
    #[arg(long)]
    rho: Option<f64>,
    /// Explicit negatives per learner (default: that learner's positive count)
    #[arg(long)]
    n_e: Option<usize>,
    /// Negative sampler: eins | uniform
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: GraphInput,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
    /// JSON file of defaults; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: GraphInput,
    /// Ground-truth sidecar (required for --mode true-latent)
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory for result tables and the run manifest
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON file of defaults; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated subset of rg,gcn,gat,lp,hgnn,hgnn-noeins
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Train fraction of the edge split
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Evaluation mode: held-out-explicit | true-latent
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    lp_iterations: Option<usize>,
    #[arg(long)]
    lp_damping: Option<f64>,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct AssessArgs {
    #[command(flatten)]
    input: GraphInput,
    /// Trained checkpoint path
    #[arg(long)]
    model: PathBuf,
    /// Metrics CSV output path
    #[arg(long)]
    out: PathBuf,
    /// Override the checkpoint's inference threshold
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct CoachArgs {
    #[command(flatten)]
    input: GraphInput,
    /// Trained checkpoint path
    #[arg(long)]
    model: PathBuf,
    /// Output directory for reports and summary.csv
    #[arg(long)]
    out_dir: PathBuf,
    /// Override the checkpoint's inference threshold
    #[arg(long)]
    threshold: Option<f64>,
}

/// Error carrying its process exit code: 1 domain, 2 I/O.
struct CliError {
    code: i32,
    message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Io(_)) { 2 } else { 1 };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn domain_err(message: impl Into<String>) -> CliError {
    CliError {
        code: 1,
        message: message.into(),
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Assess(args) => cmd_assess(args),
        Command::Coach(args) => cmd_coach(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("kmcoach: {}", e.message);
            std::process::exit(e.code);
        }
    }
}

/// Flat key/value defaults loaded from a `--config` file. Flags win.
struct FileConfig(BTreeMap<String, serde_json::Value>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig(BTreeMap::new()));
        };
        let text = std::fs::read_to_string(path)?;
        let map: BTreeMap<String, serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| domain_err(format!("config file: {e}")))?;
        Ok(FileConfig(map))
    }

    fn usize_of(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.as_u64().map(|n| Some(n as usize)).ok_or_else(|| {
                domain_err(format!("config key {key}: expected a non-negative integer"))
            }),
        }
    }

    fn u64_of(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).ok_or_else(|| {
                domain_err(format!("config key {key}: expected a non-negative integer"))
            }),
        }
    }

    fn f64_of(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| domain_err(format!("config key {key}: expected a number"))),
        }
    }

    fn str_of(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| domain_err(format!("config key {key}: expected a string"))),
        }
    }
}

fn parse_sampler(s: &str) -> Result<NegSampler, CliError> {
    match s {
        "eins" => Ok(NegSampler::Eins),
        "uniform" => Ok(NegSampler::UniformUnmentioned),
        other => Err(domain_err(format!(
            "unknown sampler {other:?} (expected eins or uniform)"
        ))),
    }
}

fn parse_mode(s: &str) -> Result<EvalMode, CliError> {
    match s {
        "held-out-explicit" => Ok(EvalMode::HeldOutExplicit),
        "true-latent" => Ok(EvalMode::TrueLatent),
        other => Err(domain_err(format!(
            "unknown mode {other:?} (expected held-out-explicit or true-latent)"
        ))),
    }
}

fn parse_methods(s: &str) -> Result<Vec<Method>, CliError> {
    let mut methods = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let m = Method::from_str(part).map_err(|e| domain_err(e.to_string()))?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(domain_err("empty method list"));
    }
    Ok(methods)
}

fn resolve_model(flags: &ModelFlags, file: &FileConfig) -> Result<HgnnConfig, CliError> {
    let defaults = HgnnConfig::default();
    let sampler = match flags.sampler.clone().or(file.str_of("sampler")?) {
        Some(s) => parse_sampler(&s)?,
        None => defaults.sampler,
    };
    Ok(HgnnConfig {
        embed_dim: flags
            .embed_dim
            .or(file.usize_of("embed_dim")?)
            .unwrap_or(defaults.embed_dim),
        layers: flags
            .layers
            .or(file.usize_of("layers")?)
            .unwrap_or(defaults.layers),
        learning_rate: flags
            .learning_rate
            .or(file.f64_of("learning_rate")?)
            .unwrap_or(defaults.learning_rate),
        epochs: flags
            .epochs
            .or(file.usize_of("epochs")?)
            .unwrap_or(defaults.epochs),
        threshold: flags
            .threshold
            .or(file.f64_of("threshold")?)
            .unwrap_or(defaults.threshold),
        weight_decay: flags
            .weight_decay
            .or(file.f64_of("weight_decay")?)
            .unwrap_or(defaults.weight_decay),
        rho: flags.rho.or(file.f64_of("rho")?).unwrap_or(defaults.rho),
        n_e: flags.n_e.or(file.usize_of("n_e")?),
        sampler,
        seed: flags.seed.or(file.u64_of("seed")?).unwrap_or(defaults.seed),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    eprintln!("validate: graph={}", args.input.graph.display());
    match args.input.load() {
        Ok(graph) => {
            eprintln!(
                "ok: {} learners, {} concepts, {} assessments, {} know, {} dont-know, {} prereq, {} responses",
                graph.n_learners(),
                graph.n_concepts(),
                graph.n_assessments(),
                graph.know_edges().len(),
                graph.dontknow_edges().len(),
                graph.prereq_edges().len(),
                graph.responses().len()
            );
            Ok(())
        }
        Err(CliError { code: 2, message }) => Err(CliError { code: 2, message }),
        Err(e) => Err(e),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut cfg = SynthConfig::default();
    if args.course_scale {
        cfg.n_learners = 150;
        cfg.n_concepts = 211;
        cfg.n_items = 45;
    }
    cfg.n_learners = args
        .n_learners
        .or(file.usize_of("n_learners")?)
        .unwrap_or(cfg.n_learners);
    cfg.n_concepts = args
        .n_concepts
        .or(file.usize_of("n_concepts")?)
        .unwrap_or(cfg.n_concepts);
    cfg.n_items = args
        .n_items
        .or(file.usize_of("n_items")?)
        .unwrap_or(cfg.n_items);
    cfg.dag_layers = args
        .dag_layers
        .or(file.usize_of("dag_layers")?)
        .unwrap_or(cfg.dag_layers);
    cfg.prereq_prob = args
        .prereq_prob
        .or(file.f64_of("prereq_prob")?)
        .unwrap_or(cfg.prereq_prob);
    cfg.mastery_base = args
        .mastery_base
        .or(file.f64_of("mastery_base")?)
        .unwrap_or(cfg.mastery_base);
    cfg.mastery_penalty = args
        .mastery_penalty
        .or(file.f64_of("mastery_penalty")?)
        .unwrap_or(cfg.mastery_penalty);
    cfg.slip = args.slip.or(file.f64_of("slip")?).unwrap_or(cfg.slip);
    cfg.guess = args.guess.or(file.f64_of("guess")?).unwrap_or(cfg.guess);
    cfg.mention_prob = args
        .mention_prob
        .or(file.f64_of("mention_prob")?)
        .unwrap_or(cfg.mention_prob);
    if let Some(mix) = args.persona_mix.clone().or(file.str_of("persona_mix")?) {
        let parts: Vec<f64> = mix
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| domain_err(format!("bad persona mix {mix:?}: expected five numbers")))?;
        let arr: [f64; 5] = parts
            .try_into()
            .map_err(|_| domain_err("persona mix needs exactly five weights"))?;
        cfg.persona_mix = arr;
    }
    cfg.seed = args.seed.or(file.u64_of("seed")?).unwrap_or(cfg.seed);

    eprintln!(
        "synth: {}",
        serde_json::to_string(&cfg).map_err(|e| domain_err(e.to_string()))?
    );

    let (graph, truth) = gen_cohort(&cfg)?;
    graph.save(&args.out)?;
    let truth_path = args
        .truth_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("truth.json"));
    save_ground_truth(&truth, &graph, &truth_path)?;
    eprintln!(
        "wrote {} ({} learners, {} concepts, {} latent pairs) and {}",
        args.out.display(),
        graph.n_learners(),
        graph.n_concepts(),
        truth.latent_labels.len(),
        truth_path.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let cfg = resolve_model(&args.model, &file)?;
    eprintln!(
        "train: graph={} {}",
        args.input.graph.display(),
        serde_json::to_string(&cfg).map_err(|e| domain_err(e.to_string()))?
    );

    let graph = args.input.load()?;
    let subgraph = PerceptionSubgraph::from_graph(&graph);
    let split = EdgeSplit::full(&graph);
    let mut model = HgnnModel::init(cfg, graph.n_learners(), graph.n_concepts())?;
    let history = train(&mut model, &subgraph, &split, &graph)?;
    for stats in history.iter().step_by(50) {
        eprintln!(
            "epoch {:4} loss {:.6} train_auc {:.4}",
            stats.epoch, stats.loss, stats.train_auc
        );
    }
    if let Some(last) = history.last() {
        eprintln!(
            "final epoch {} loss {:.6} train_auc {:.4}",
            last.epoch, last.loss, last.train_auc
        );
    }
    Checkpoint::from_model(&model, &graph.fingerprint()).save(&args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let defaults = ExperimentSpec::default();
    let methods = match args.methods.clone().or(file.str_of("methods")?) {
        Some(s) => parse_methods(&s)?,
        None => defaults.methods.clone(),
    };
    let eval_mode = match args.mode.clone().or(file.str_of("mode")?) {
        Some(s) => parse_mode(&s)?,
        None => defaults.eval_mode,
    };
    let spec = ExperimentSpec {
        methods,
        trials: args
            .trials
            .or(file.usize_of("trials")?)
            .unwrap_or(defaults.trials),
        ratio: args
            .ratio
            .or(file.f64_of("ratio")?)
            .unwrap_or(defaults.ratio),
        base_seed: args
            .base_seed
            .or(file.u64_of("base_seed")?)
            .unwrap_or(defaults.base_seed),
        eval_mode,
        model: resolve_model(&args.model, &file)?,
        lp_iterations: args
            .lp_iterations
            .or(file.usize_of("lp_iterations")?)
            .unwrap_or(defaults.lp_iterations),
        lp_damping: args
            .lp_damping
            .or(file.f64_of("lp_damping")?)
            .unwrap_or(defaults.lp_damping),
    };
    eprintln!(
        "eval: graph={} jobs={} {}",
        args.input.graph.display(),
        args.jobs,
        serde_json::to_string(&spec).map_err(|e| domain_err(e.to_string()))?
    );

    let graph = args.input.load()?;
    let truth = match &args.truth {
        Some(path) => Some(load_ground_truth(path, &graph)?),
        None => None,
    };
    let table = run_experiment(&graph, truth.as_ref(), &spec, args.jobs)?;

    std::fs::create_dir_all(&args.out_dir)?;
    write_text(&args.out_dir.join("results.csv"), &table.to_csv())?;
    write_text(&args.out_dir.join("results.json"), &table.to_json())?;
    write_text(&args.out_dir.join("results.md"), &table.to_markdown())?;
    let manifest = RunManifest::new(&spec, &graph);
    let manifest_json =
        serde_json::to_string_pretty(&manifest).map_err(|e| domain_err(e.to_string()))?;
    write_text(&args.out_dir.join("manifest.json"), &(manifest_json + "\n"))?;

    for r in &table.results {
        println!(
            "{:12} mean {:.4} sd {:.4}",
            r.method.to_string(),
            r.mean,
            r.std_dev
        );
    }
    eprintln!("wrote result tables to {}", args.out_dir.display());
    Ok(())
}

/// Per-learner monitoring rows for every learner with at least one response,
/// with latent states filled in by the checkpointed model.
fn monitoring_rows(
    graph: &HeteroGraph,
    model: &HgnnModel,
    threshold: f64,
) -> Result<Vec<MetricsRow>, CliError> {
    let inferred = infer_lps(model, graph, threshold)?;
    let mut rows = Vec::new();
    for l in 0..graph.n_learners() {
        let learner = kmcoach_core::graph::LearnerId(l);
        if graph.learner_responses(learner).is_empty() {
            continue;
        }
        let states = &inferred[&learner];
        let profile = complete_profile(graph, learner, &states.know, &states.dontknow)?;
        let table = contingency(&profile, graph)?;
        let metrics = d_prime(&table).ok();
        rows.push(MetricsRow {
            learner: graph.learner_ext(learner).to_string(),
            table,
            metrics,
        });
    }
    Ok(rows)
}

fn load_model(path: &Path, graph: &HeteroGraph) -> Result<(HgnnModel, f64), CliError> {
    let checkpoint = Checkpoint::load(path)?;
    checkpoint.verify_graph(graph)?;
    let (model, _) = checkpoint.into_model()?;
    Ok((model.clone(), model.config.threshold))
}

fn cmd_assess(args: AssessArgs) -> Result<(), CliError> {
    eprintln!(
        "assess: graph={} model={} threshold={}",
        args.input.graph.display(),
        args.model.display(),
        args.threshold
            .map_or_else(|| "checkpoint".to_string(), |t| t.to_string())
    );
    let graph = args.input.load()?;
    let (model, checkpoint_threshold) = load_model(&args.model, &graph)?;
    let threshold = args.threshold.unwrap_or(checkpoint_threshold);
    let rows = monitoring_rows(&graph, &model, threshold)?;
    write_text(&args.out, &write_metrics_csv(&rows))?;
    eprintln!("wrote {} ({} learners)", args.out.display(), rows.len());
    Ok(())
}

/// File-system-safe version of an external id.
fn safe_name(ext: &str) -> String {
    ext.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_coach(args: CoachArgs) -> Result<(), CliError> {
    eprintln!(
        "coach: graph={} model={} threshold={}",
        args.input.graph.display(),
        args.model.display(),
        args.threshold
            .map_or_else(|| "checkpoint".to_string(), |t| t.to_string())
    );
    let graph = args.input.load()?;
    let (model, checkpoint_threshold) = load_model(&args.model, &graph)?;
    let threshold = args.threshold.unwrap_or(checkpoint_threshold);

    let inferred = infer_lps(&model, &graph, threshold)?;
    let mut cohort = Vec::new();
    for l in 0..graph.n_learners() {
        let learner = kmcoach_core::graph::LearnerId(l);
        if graph.learner_responses(learner).is_empty() {
            continue;
        }
        let states = &inferred[&learner];
        let profile = complete_profile(&graph, learner, &states.know, &states.dontknow)?;
        let table = contingency(&profile, &graph)?;
        let Ok(metrics) = d_prime(&table) else {
            eprintln!(
                "skipping {}: monitoring metrics undefined",
                graph.learner_ext(learner)
            );
            continue;
        };
        let perf = kmcoach_core::coach::performance(&graph, learner)?;
        cohort.push((learner, profile, perf, metrics));
    }
    if cohort.is_empty() {
        return Err(domain_err("no learner has any assessment responses"));
    }
    let stats: Vec<_> = cohort.iter().map(|(_, _, perf, m)| (*perf, *m)).collect();
    let thresholds = cohort_thresholds(&stats)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let mut summary = Vec::new();
    for (learner, profile, perf, metrics) in &cohort {
        let (report, _advice) =
            assemble_report(&graph, *learner, profile, *perf, metrics, &thresholds, None)?;
        let ext = graph.learner_ext(*learner);
        let path = args.out_dir.join(format!("report_{}.md", safe_name(ext)));
        write_text(&path, &render_markdown(&report))?;
        summary.push(SummaryRow {
            learner: ext.to_string(),
            pattern: report.pattern.tag,
            perf: *perf,
            d_prime: metrics.d_prime,
            sensitivity: metrics.sensitivity,
            specificity: metrics.specificity,
        });
    }
    write_text(
        &args.out_dir.join("summary.csv"),
        &write_summary_csv(&summary),
    )?;
    eprintln!(
        "wrote {} reports and summary.csv to {}",
        summary.len(),
        args.out_dir.display()
    );
    Ok(())
}
