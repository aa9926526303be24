//! Subcommands. Each returns the full stdout text; nothing is printed or
//! written until the command has succeeded.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use boundseg::boundary::{make_targets, parse_with, reconstruct, serialize, truncate_at_end_marker, ParseMode};
use boundseg::metrics::{evaluate, EvalReport};
use boundseg::perturb::{best_intermediate, evaluate_pool, PerturbError};
use boundseg::rollout::{simulate, BatchDoc, NoisyOraclePolicy, Policy, ReplayPolicy};
use boundseg::{Candidate, Document, LabelSet, OutputPattern, Segmentation};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{read_flat, RolloutSettings};
use crate::corpus::{generate_synthetic_corpus, CorpusSpec};
use crate::dataset::{dataset_to_string, load_dataset, read_jsonl, to_segmentation, write_atomic, Example, RecordSegment};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "boundseg", version, about = "Boundary-generation text segmentation tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct segments from a document and boundary output lines.
    Reconstruct(ReconstructArgs),
    /// Score predictions against gold segmentations.
    Score(ScoreArgs),
    /// Synthesize boundary outputs from gold segmentations.
    MakeTargets(MakeTargetsArgs),
    /// Print the perturbation pool and the chosen intermediate candidate.
    Perturb(PerturbArgs),
    /// Run the rollout simulation loop.
    RolloutSim(RolloutSimArgs),
    /// Generate a synthetic corpus.
    GenCorpus(GenCorpusArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    /// Comma-separated label set.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
}

impl LabelArgs {
    fn label_set(&self) -> Result<LabelSet, CliError> {
        labels_or_default(self.labels.as_deref())
    }
}

fn labels_or_default(labels: Option<&[String]>) -> Result<LabelSet, CliError> {
    match labels {
        Some(l) => LabelSet::new(l.iter().map(|s| s.trim().to_string())).map_err(|e| CliError::input("labels", e.to_string())),
        None => Ok(LabelSet::default()),
    }
}

fn parse_pattern(s: &str) -> Result<OutputPattern, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long, value_parser = parse_pattern)]
    pub pattern: OutputPattern,
    /// Plain-text document.
    #[arg(long)]
    pub doc: PathBuf,
    /// Boundary output in the line format.
    #[arg(long)]
    pub boundaries: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSONL predictions: `{id, segments}` or `{id, output}`.
    #[arg(long)]
    pub pred: PathBuf,
    /// JSONL gold dataset.
    #[arg(long)]
    pub gold: PathBuf,
    /// P_k window; defaults to half the mean gold segment length.
    #[arg(long)]
    pub window: Option<usize>,
    /// Pattern of raw `output` predictions.
    #[arg(long, value_parser = parse_pattern, default_value = "start")]
    pub pattern: OutputPattern,
    #[arg(long, default_value = "")]
    pub end_marker: String,
    /// Score documents on the rayon pool.
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub labels: LabelArgs,
}

#[derive(Debug, Args)]
pub struct MakeTargetsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_pattern)]
    pub pattern: OutputPattern,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// JSONL candidates: `{id, output}`.
    #[arg(long)]
    pub candidate: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, value_parser = parse_pattern, default_value = "start")]
    pub pattern: OutputPattern,
    #[command(flatten)]
    pub labels: LabelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    NoisyOracle,
    Replay,
}

#[derive(Debug, Args)]
pub struct RolloutSimArgs {
    /// Flat key-value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub policy: PolicyKind,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSONL of `{id, outputs}` for the replay policy.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub enable_intermediate: Option<bool>,
    #[arg(long)]
    pub perturb_steps: Option<usize>,
    #[arg(long)]
    pub medium_mode: Option<String>,
    #[arg(long)]
    pub end_marker: Option<String>,
    #[arg(long)]
    pub pattern: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallel: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Flat key-value corpus spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec's document count.
    #[arg(long)]
    pub n_docs: Option<usize>,
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Score(a) => cmd_score(&a),
        Command::MakeTargets(a) => cmd_make_targets(&a),
        Command::Perturb(a) => cmd_perturb(&a),
        Command::RolloutSim(a) => cmd_rollout_sim(&a),
        Command::GenCorpus(a) => cmd_gen_corpus(&a),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input("io", format!("{}: {e}", path.display())))
}

fn to_line<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string(v).map_err(|e| CliError::internal(e.to_string()))
}

fn segments_json(doc: &Document, segs: &Segmentation) -> Vec<Value> {
    segs.iter()
        .map(|s| {
            json!({
                "label": s.label,
                "start": s.span.start(),
                "end": s.span.end(),
                "text": doc.slice(s.span.start(), s.span.end()),
            })
        })
        .collect()
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<String, CliError> {
    let labels = a.labels.label_set()?;
    let text = read_text(&a.doc)?;
    let id = a.doc.file_stem().map_or("doc".into(), |s| s.to_string_lossy().into_owned());
    let doc = Document::new(id, text).map_err(|e| CliError::input("document", e.to_string()))?;
    let raw = read_text(&a.boundaries)?;
    let parsed = parse_with(&raw, &labels, a.pattern, ParseMode::Lenient)
        .map_err(|e| CliError::input("parse", e.to_string()))?;
    let recon = reconstruct(&doc, &parsed.output);
    let discarded: Vec<Value> = recon
        .discarded
        .iter()
        .map(|d| json!({ "item": d.item, "reason": d.reason.to_string() }))
        .collect();
    let out = json!({
        "id": doc.id(),
        "segments": segments_json(&doc, &recon.segments),
        "discarded": discarded,
        "diagnostics": parsed.diagnostics,
    });
    Ok(format!("{}\n", to_line(&out)?))
}

/// A prediction for one document.
enum Prediction {
    Segments(Segmentation),
    Output(String),
}

fn load_predictions(path: &Path) -> Result<HashMap<String, Prediction>, CliError> {
    let mut preds = HashMap::new();
    for (line, v) in read_jsonl(path)? {
        let schema = |m: &str| CliError::input("schema", format!("{}: line {line}: {m}", path.display()));
        let id = v.get("id").and_then(Value::as_str).ok_or_else(|| schema("missing `id`"))?.to_string();
        let pred = if let Some(segs) = v.get("segments") {
            let segs: Vec<RecordSegment> =
                serde_json::from_value(segs.clone()).map_err(|e| schema(&e.to_string()))?;
            Prediction::Segments(to_segmentation(&segs).map_err(|e| schema(&e))?)
        } else if let Some(out) = v.get("output").and_then(Value::as_str) {
            Prediction::Output(out.to_string())
        } else {
            return Err(schema("expected `segments` or `output`"));
        };
        if preds.insert(id.clone(), pred).is_some() {
            return Err(schema(&format!("duplicate id `{id}`")));
        }
    }
    Ok(preds)
}

#[derive(Debug, Serialize)]
struct ScoreLine<'a> {
    id: &'a str,
    rho_rec: f64,
    em_f1: f64,
    pk: f64,
    f1_lab: f64,
    char_f1: f64,
    predicted: usize,
    gold: usize,
    discarded: usize,
}

fn pct(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

fn cmd_score(a: &ScoreArgs) -> Result<String, CliError> {
    let labels = a.labels.label_set()?;
    let gold = load_dataset(&a.gold)?;
    let mut preds = load_predictions(&a.pred)?;
    let known: std::collections::HashSet<&str> = gold.iter().map(|e| e.doc.id()).collect();
    let mut unknown: Vec<&String> = preds.keys().filter(|k| !known.contains(k.as_str())).collect();
    unknown.sort();
    if let Some(id) = unknown.first() {
        return Err(CliError::input("schema", format!("prediction for unknown document `{id}`")));
    }
    let jobs: Vec<(&Example, Option<Prediction>)> = gold.iter().map(|e| (e, preds.remove(e.doc.id()))).collect();

    let score_one = |(ex, pred): &(&Example, Option<Prediction>)| -> Result<EvalReport, CliError> {
        let recon = match pred {
            Some(Prediction::Segments(s)) => boundseg::ReconstructionResult {
                segments: s.clone(),
                sources: (0..s.len()).collect(),
                discarded: vec![],
                locations: vec![],
            },
            Some(Prediction::Output(raw)) => {
                let text = truncate_at_end_marker(raw, &a.end_marker);
                match parse_with(text, &labels, a.pattern, ParseMode::Lenient) {
                    Ok(p) => reconstruct(&ex.doc, &p.output),
                    Err(_) => boundseg::ReconstructionResult::empty(),
                }
            }
            None => boundseg::ReconstructionResult::empty(),
        };
        evaluate(&ex.doc, &recon, &ex.gold, a.window)
            .map_err(|e| CliError::input("metric", format!("document `{}`: {e}", ex.doc.id())))
    };
    let reports: Vec<EvalReport> = if a.parallel {
        jobs.par_iter().map(score_one).collect::<Result<_, _>>()?
    } else {
        jobs.iter().map(score_one).collect::<Result<_, _>>()?
    };

    let mut out = String::new();
    for ((ex, _), r) in jobs.iter().zip(&reports) {
        out.push_str(&to_line(&ScoreLine {
            id: ex.doc.id(),
            rho_rec: r.rho_rec,
            em_f1: r.em_f1,
            pk: r.pk,
            f1_lab: r.f1_lab,
            char_f1: r.char_f1,
            predicted: r.counts.predicted,
            gold: r.counts.gold,
            discarded: r.counts.discarded,
        })?);
        out.push('\n');
    }
    let n = reports.len().max(1) as f64;
    let mean = |f: fn(&EvalReport) -> f64| pct(reports.iter().map(f).sum::<f64>() / n);
    let summary = json!({
        "id": "__mean__",
        "n_docs": reports.len(),
        "rho_rec": mean(|r| r.rho_rec),
        "em_f1": mean(|r| r.em_f1),
        "pk": mean(|r| r.pk),
        "f1_lab": mean(|r| r.f1_lab),
        "char_f1": mean(|r| r.char_f1),
    });
    out.push_str(&to_line(&summary)?);
    out.push('\n');
    Ok(out)
}

fn cmd_make_targets(a: &MakeTargetsArgs) -> Result<String, CliError> {
    let data = load_dataset(&a.data)?;
    let mut out = String::new();
    for (i, ex) in data.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        rng.set_stream(i as u64);
        let targets = make_targets(&ex.doc, &ex.gold, a.pattern, &mut rng)
            .map_err(|e| CliError::input("target_synthesis", format!("document `{}`: {e}", ex.doc.id())))?;
        let line = json!({ "id": ex.doc.id(), "pattern": a.pattern, "output": serialize(&targets) });
        out.push_str(&to_line(&line)?);
        out.push('\n');
    }
    Ok(out)
}

fn cmd_perturb(a: &PerturbArgs) -> Result<String, CliError> {
    if !(1..=2).contains(&a.steps) {
        return Err(CliError::input("flags", format!("--steps must be 1 or 2, got {}", a.steps)));
    }
    let labels = a.labels.label_set()?;
    let gold: HashMap<String, Example> = load_dataset(&a.gold)?
        .into_iter()
        .map(|e| (e.doc.id().to_string(), e))
        .collect();
    let mut out = String::new();
    for (line, v) in read_jsonl(&a.candidate)? {
        let schema = |m: String| CliError::input("schema", format!("{}: line {line}: {m}", a.candidate.display()));
        let id = v.get("id").and_then(Value::as_str).ok_or_else(|| schema("missing `id`".into()))?;
        let raw = v.get("output").and_then(Value::as_str).ok_or_else(|| schema("missing `output`".into()))?;
        let ex = gold.get(id).ok_or_else(|| schema(format!("no gold for `{id}`")))?;
        let parsed = parse_with(raw, &labels, a.pattern, ParseMode::Strict).map_err(|e| schema(e.to_string()))?;
        let cand = Candidate::score(&ex.doc, &ex.gold, parsed.output)
            .map_err(|e| CliError::internal(e.to_string()))?;
        let pool = evaluate_pool(&ex.doc, &cand, &ex.gold, &labels).map_err(|e| CliError::internal(e.to_string()))?;
        for entry in &pool {
            let l = json!({
                "id": id,
                "type": "pool",
                "perturbation": entry.perturbation,
                "reward": entry.candidate.reward(),
                "output": entry.candidate.output.as_ref().map(serialize),
            });
            out.push_str(&to_line(&l)?);
            out.push('\n');
        }
        let chosen = match best_intermediate(&ex.doc, &cand, &ex.gold, &labels, a.steps) {
            Ok(best) => json!({
                "id": id,
                "type": "chosen",
                "steps": best.steps,
                "original_reward": cand.reward(),
                "reward": best.candidate.reward(),
                "gain": best.gain,
                "output": best.candidate.output.as_ref().map(serialize),
            }),
            Err(PerturbError::NoPerturbations) => json!({
                "id": id,
                "type": "chosen",
                "steps": [],
                "original_reward": cand.reward(),
                "reward": cand.reward(),
                "gain": 0.0,
                "output": cand.output.as_ref().map(serialize),
            }),
            Err(e) => return Err(CliError::internal(e.to_string())),
        };
        out.push_str(&to_line(&chosen)?);
        out.push('\n');
    }
    Ok(out)
}

fn load_replay(path: &Path) -> Result<ReplayPolicy, CliError> {
    let mut policy = ReplayPolicy::new();
    for (line, v) in read_jsonl(path)? {
        let schema = |m: &str| CliError::input("schema", format!("{}: line {line}: {m}", path.display()));
        let id = v.get("id").and_then(Value::as_str).ok_or_else(|| schema("missing `id`"))?;
        let outputs: Vec<String> = v
            .get("outputs")
            .cloned()
            .ok_or_else(|| schema("missing `outputs`"))
            .and_then(|o| serde_json::from_value(o).map_err(|e| schema(&e.to_string())))?;
        policy.push(id, outputs);
    }
    Ok(policy)
}

fn cmd_rollout_sim(a: &RolloutSimArgs) -> Result<String, CliError> {
    let from_file = match &a.config {
        Some(path) => {
            let s: RolloutSettings = read_flat(path)?;
            s.relative_to(path.parent().unwrap_or(Path::new(".")))
        }
        None => RolloutSettings::default(),
    };
    let flags = RolloutSettings {
        m: a.m,
        temperature: a.temperature,
        k: a.k,
        batch_size: a.batch_size,
        enable_intermediate: a.enable_intermediate,
        perturb_steps: a.perturb_steps,
        medium_mode: a.medium_mode.clone(),
        end_marker: a.end_marker.clone(),
        pattern: a.pattern.clone(),
        seed: a.seed,
        parallel: a.parallel,
        data: a.data.clone(),
        replay: a.replay.clone(),
        noise: a.noise,
        labels: a.labels.clone(),
        iterations: a.iterations,
    };
    let settings = from_file.merged(flags);
    let config = settings.rollout_config()?;
    let labels = labels_or_default(settings.labels.as_deref())?;
    let iterations = settings
        .iterations
        .ok_or_else(|| CliError::input("flags", "--iterations is required"))?;
    let data_path = settings
        .data
        .as_ref()
        .ok_or_else(|| CliError::input("flags", "a dataset is required (--data or `data` in the config)"))?;
    let data = load_dataset(data_path)?;
    let docs: Vec<BatchDoc<'_>> = data.iter().map(|e| BatchDoc { doc: &e.doc, gold: &e.gold }).collect();

    let mut policy: Box<dyn Policy> = match a.policy {
        PolicyKind::NoisyOracle => Box::new(NoisyOraclePolicy::new(settings.noise.unwrap_or(0.5), labels.clone(), config.pattern)),
        PolicyKind::Replay => {
            let path = settings
                .replay
                .as_ref()
                .ok_or_else(|| CliError::input("flags", "the replay policy needs --replay"))?;
            Box::new(load_replay(path)?)
        }
    };
    let report = simulate(&docs, policy.as_mut(), &labels, &config, iterations).map_err(|e| match e {
        boundseg::rollout::RolloutError::InvalidConfig(m) => CliError::input("config", m),
        boundseg::rollout::RolloutError::InvalidGold { .. } | boundseg::rollout::RolloutError::EmptyDataset => {
            CliError::input("dataset", e.to_string())
        }
        other => CliError::internal(other.to_string()),
    })?;
    let mut out = String::new();
    for step in &report.steps {
        out.push_str(&to_line(step)?);
        out.push('\n');
    }
    Ok(out)
}

fn cmd_gen_corpus(a: &GenCorpusArgs) -> Result<String, CliError> {
    let mut spec: CorpusSpec = read_flat(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(n) = a.n_docs {
        spec.n_docs = n;
    }
    let records = generate_synthetic_corpus(&spec)?;
    for (i, r) in records.iter().enumerate() {
        r.to_example()
            .map_err(|e| CliError::internal(format!("generated record {i} is invalid: {e}")))?;
    }
    write_atomic(&a.out, &dataset_to_string(&records))?;
    let summary = json!({ "out": a.out.display().to_string(), "n_docs": records.len(), "seed": spec.seed });
    Ok(format!("{}\n", to_line(&summary)?))
}
