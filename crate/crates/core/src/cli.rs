//! `dapo` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_dialogues, segment_dialogue, SEGMENT_STRIDE, SEGMENT_WINDOW};
use crate::dataset::{self, ExampleReader, RunMetadata};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::negatives::{build_examples, Example, ExampleKind};
use crate::nidf::NidfTable;
use crate::rng::SeededRng;
use crate::scorer::{self, Optimizer, PairedInput, RankingTask, ScorerModel, TrainConfig};
use crate::scoring::{self, ScoreConfig, StatsAccumulator};

/// Examples scored per parallel chunk while streaming.
const CHUNK: usize = 4096;

#[derive(Debug, Parser)]
#[command(name = "dapo", version, about = "Dialogue-adaptive corpus construction, scoring and evaluation")]
pub struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; results are identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment dialogues and emit positives with UO/UI/UR negatives.
    Build(BuildArgs),
    /// Build the n-gram document-frequency table over original dialogues.
    Nidf(NidfArgs),
    /// Score examples: 0 for negatives, n-NIDF (or 1 with --ablate-ts) for positives.
    Score(ScoreArgs),
    /// Split examples into train/dev by source dialogue.
    Split(SplitArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
    /// Train the hashed-feature scorer on scored examples.
    Train(TrainArgs),
    /// Predict scores with a trained model, one per line.
    Predict(PredictArgs),
    /// Rank candidates with a model and report R@1, R@2, MRR and accuracy.
    EvalRank(EvalRankArgs),
    /// Pearson and Spearman correlation (with p-values) of two score files.
    EvalCorr(EvalCorrArgs),
    /// Histogram of scores as `bin_upper_edge,count` CSV.
    Dist(DistArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SEGMENT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = SEGMENT_STRIDE)]
    pub stride: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct NidfArgs {
    /// Original (unsegmented) dialogues.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = scoring::DEFAULT_NGRAM_ORDER)]
    pub n: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub nidf: PathBuf,
    #[arg(long, default_value_t = scoring::DEFAULT_NGRAM_ORDER)]
    pub n: usize,
    /// Score every positive 1.0.
    #[arg(long)]
    pub ablate_ts: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long, default_value_t = scoring::DEFAULT_SPLIT_RATIO)]
    pub ratio: f64,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub examples: PathBuf,
    /// Emit a JSON object instead of the text table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = scorer::DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub hash_seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum InputFormat {
    /// Example records; the whole dialogue is text A.
    Examples,
    /// `{"text_a": [utterance, ...], "text_b": string|null}` records.
    Pairs,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Examples)]
    pub format: InputFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalRankArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `{"id", "context": [..], "question"?: str, "candidates": [..], "gold": idx}` records.
    #[arg(long)]
    pub tasks: PathBuf,
    /// Report as JSONL; the text table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalCorrArgs {
    /// One prediction per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// One gold label per line.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DistArgs {
    /// Scored examples; positives are histogrammed.
    #[arg(long, conflicts_with = "values", required_unless_present = "values")]
    pub examples: Option<PathBuf>,
    /// Plain file of values in [0, 1], one per line.
    #[arg(long)]
    pub values: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("DAPO_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(Error::config("--jobs must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    let seed = cli.seed;
    pool.install(|| match cli.command {
        Command::Build(a) => cmd_build(&a, seed),
        Command::Nidf(a) => cmd_nidf(&a, seed),
        Command::Score(a) => cmd_score(&a, seed),
        Command::Split(a) => cmd_split(&a, seed),
        Command::Stats(a) => cmd_stats(&a),
        Command::Train(a) => cmd_train(&a, seed),
        Command::Predict(a) => cmd_predict(&a),
        Command::EvalRank(a) => cmd_eval_rank(&a),
        Command::EvalCorr(a) => cmd_eval_corr(&a),
        Command::Dist(a) => cmd_dist(&a),
    })
}

#[derive(Serialize)]
struct Seeded<'a, A: Serialize> {
    seed: u64,
    rng: &'static str,
    #[serde(flatten)]
    args: &'a A,
}

fn config_of<A: Serialize>(args: &A, seed: u64) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(Seeded {
        seed,
        rng: SeededRng::ALGORITHM,
        args,
    })?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(BufWriter::new(f))
}

fn reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(dataset::open(path)?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_build(a: &BuildArgs, seed: u64) -> Result<()> {
    let dialogues = parse_dialogues(reader(&a.input)?)?;
    let segments = dialogues
        .iter()
        .map(|d| segment_dialogue(d, a.window, a.stride))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let built = build_examples(&segments, seed);
    let mut w = create(&a.out)?;
    for e in &built.examples {
        dataset::write_example(&mut w, e)?;
    }
    w.flush()?;
    drop(w);
    let positives = built.count(ExampleKind::Positive);
    info!(
        "{} dialogues -> {} segments -> {} positives, {} negatives",
        dialogues.len(),
        segments.len(),
        positives,
        built.examples.len() - positives
    );
    let mut config = config_of(a, seed)?;
    config["warnings"] = built.warnings.len().into();
    RunMetadata::new("build", config)
        .input(&a.input)?
        .output(&a.out)?
        .write_for(&a.out)?;
    Ok(())
}

/// Path of the one-line IDF extremes file written next to a table.
pub fn idf_sidecar_path(table: &Path) -> PathBuf {
    let mut name = table.as_os_str().to_owned();
    name.push(".idf");
    PathBuf::from(name)
}

fn cmd_nidf(a: &NidfArgs, seed: u64) -> Result<()> {
    let dialogues = parse_dialogues(reader(&a.input)?)?;
    let table = NidfTable::<f64>::build(&dialogues, a.n)?;
    table.write_tsv(create(&a.out)?)?;
    let sidecar = idf_sidecar_path(&a.out);
    let mut w = create(&sidecar)?;
    writeln!(w, "{}", table.idf_sidecar_line())?;
    w.flush()?;
    let mut config = config_of(a, seed)?;
    config["documents"] = table.documents().into();
    config["ngrams"] = table.len().into();
    RunMetadata::new("nidf", config)
        .input(&a.input)?
        .output(&a.out)?
        .output(&sidecar)?
        .write_for(&a.out)?;
    Ok(())
}

/// Loads a table and, when present, checks its IDF sidecar.
pub fn load_table(path: &Path) -> Result<NidfTable<f64>> {
    let table = NidfTable::<f64>::read_tsv(reader(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let sidecar = idf_sidecar_path(path);
    if sidecar.exists() {
        let line = std::fs::read_to_string(&sidecar)?;
        table.verify_sidecar(&line).map_err(|e| Error::Format {
            path: sidecar,
            message: e.to_string(),
        })?;
    }
    Ok(table)
}

fn for_each_chunk<F>(path: &Path, mut f: F) -> Result<()>
where
    F: FnMut(Vec<Example>) -> Result<()>,
{
    let mut chunk = Vec::with_capacity(CHUNK);
    for item in ExampleReader::open(path)? {
        chunk.push(item?.1);
        if chunk.len() == CHUNK {
            f(std::mem::take(&mut chunk))?;
        }
    }
    if !chunk.is_empty() {
        f(chunk)?;
    }
    Ok(())
}

fn cmd_score(a: &ScoreArgs, seed: u64) -> Result<()> {
    let table = load_table(&a.nidf)?;
    let cfg = ScoreConfig {
        n: a.n,
        ablate_ts: a.ablate_ts,
    };
    if table.n() != cfg.n {
        return Err(Error::config(format!(
            "table {} has n = {}, but --n {} was requested",
            a.nidf.display(),
            table.n(),
            cfg.n
        )));
    }
    let mut w = output(a.out.as_deref())?;
    for_each_chunk(&a.examples, |mut chunk| {
        chunk
            .par_iter_mut()
            .try_for_each(|e| scoring::score_example(e, &table, &cfg).map(|_| ()))?;
        for e in &chunk {
            dataset::write_example(&mut w, e)?;
        }
        Ok(())
    })?;
    w.flush()?;
    drop(w);
    if let Some(out) = &a.out {
        let mut config = config_of(a, seed)?;
        config["table_sha256"] = dataset::sha256_file(&a.nidf)?.into();
        RunMetadata::new("score", config)
            .input(&a.examples)?
            .input(&a.nidf)?
            .output(out)?
            .write_for(out)?;
    }
    Ok(())
}

fn cmd_split(a: &SplitArgs, seed: u64) -> Result<()> {
    // First pass collects the source groups, second pass routes records.
    let mut ids = Vec::new();
    for item in ExampleReader::open(&a.examples)? {
        ids.push(item?.1.source_id);
    }
    let groups = scoring::source_groups(ids.iter().map(String::as_str));
    drop(ids);
    let assignment = scoring::assign_groups(&groups, a.ratio, &mut SeededRng::new(seed))?;
    let mut train = create(&a.train)?;
    let mut dev = create(&a.dev)?;
    for item in ExampleReader::open(&a.examples)? {
        let (_, e) = item?;
        let w = if assignment[&e.source_id] { &mut train } else { &mut dev };
        dataset::write_example(w, &e)?;
    }
    train.flush()?;
    dev.flush()?;
    drop((train, dev));
    let n_train = assignment.values().filter(|&&t| t).count();
    let mut config = config_of(a, seed)?;
    config["train_groups"] = n_train.into();
    config["dev_groups"] = (groups.len() - n_train).into();
    let meta = RunMetadata::new("split", config)
        .input(&a.examples)?
        .output(&a.train)?
        .output(&a.dev)?;
    meta.write_for(&a.train)?;
    meta.write_for(&a.dev)?;
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let mut acc = StatsAccumulator::default();
    for_each_chunk(&a.examples, |chunk| {
        let part = chunk
            .par_iter()
            .fold(StatsAccumulator::default, |mut s, e| {
                s.add(e);
                s
            })
            .reduce(StatsAccumulator::default, StatsAccumulator::merge);
        acc = acc.merge(part);
        Ok(())
    })?;
    let report = acc.finish()?;
    let mut out = io::stdout().lock();
    if a.json {
        serde_json::to_writer(&mut out, &report)?;
        writeln!(out)?;
    } else {
        writeln!(out, "{report}")?;
    }
    Ok(())
}

fn scored_pairs(path: &Path) -> Result<Vec<(PairedInput, f64)>> {
    let mut out = Vec::new();
    for item in ExampleReader::open(path)? {
        let (line, e) = item?;
        let score = e.score().ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: example `{}` has no score; run `score` first", e.id),
        })?;
        out.push((PairedInput::from_example(&e), score));
    }
    Ok(out)
}

fn cmd_train(a: &TrainArgs, seed: u64) -> Result<()> {
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed,
        optimizer: match a.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::adam(),
        },
        dim: a.dim,
        hash_seed: a.hash_seed,
    };
    cfg.validate()?;
    let train_set = scored_pairs(&a.train)?;
    let dev_set = match &a.dev {
        Some(p) => scored_pairs(p)?,
        None => Vec::new(),
    };
    let outcome = scorer::train(&train_set, &dev_set, &cfg)?;
    let mut w = create(&a.out)?;
    outcome.model.write_to(&mut w)?;
    drop(w);

    let mut trace_path = a.out.as_os_str().to_owned();
    trace_path.push(".trace.tsv");
    let trace_path = PathBuf::from(trace_path);
    let mut t = create(&trace_path)?;
    writeln!(t, "epoch\ttrain_loss\tdev_mse")?;
    for r in &outcome.trace {
        writeln!(t, "{}\t{}\t{}", r.epoch, r.train_loss, r.dev_mse)?;
    }
    t.flush()?;
    drop(t);
    for r in &outcome.trace {
        info!("epoch {} train_loss {:.6} dev_mse {:.6}", r.epoch, r.train_loss, r.dev_mse);
    }

    let mut config = config_of(a, seed)?;
    config["optimizer_params"] = serde_json::to_value(cfg.optimizer)?;
    config["best_epoch"] = outcome.best_epoch.into();
    let mut meta = RunMetadata::new("train", config).input(&a.train)?;
    if let Some(d) = &a.dev {
        meta = meta.input(d)?;
    }
    meta.output(&a.out)?.output(&trace_path)?.write_for(&a.out)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ScorerModel<f64>> {
    ScorerModel::read_from(reader(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    #[serde(default)]
    #[allow(dead_code)]
    id: Option<String>,
    text_a: Vec<String>,
    #[serde(default)]
    text_b: Option<String>,
}

fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
    }
    Ok(out)
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let inputs: Vec<PairedInput> = match a.format {
        InputFormat::Examples => dataset::read_examples(reader(&a.input)?)?
            .iter()
            .map(PairedInput::from_example)
            .collect(),
        InputFormat::Pairs => read_json_lines::<PairRecord>(&a.input)?
            .into_iter()
            .map(|r| match r.text_b {
                Some(b) => PairedInput::response(&r.text_a, &b),
                None => PairedInput::dialogue(&r.text_a),
            })
            .collect(),
    };
    let scores = inputs
        .par_iter()
        .map(|p| model.predict_score(p))
        .collect::<Result<Vec<f64>>>()?;
    let mut w = output(a.out.as_deref())?;
    for s in scores {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}

/// Ranking task record for `eval-rank`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub id: String,
    pub context: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub candidates: Vec<String>,
    pub gold: usize,
}

impl TaskRecord {
    /// With a question: dialogue | question + option. Otherwise: history | candidate.
    pub fn to_task(&self) -> Result<RankingTask> {
        let candidates = self
            .candidates
            .iter()
            .map(|c| match &self.question {
                Some(q) => PairedInput::question_answering(&self.context, q, c),
                None => PairedInput::response(&self.context, c),
            })
            .collect();
        RankingTask::new(self.id.clone(), candidates, self.gold)
    }
}

fn write_report(report: &EvalReport, out: Option<&Path>) -> Result<()> {
    println!("{report}");
    if let Some(p) = out {
        let mut w = create(p)?;
        report.write_jsonl(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_eval_rank(a: &EvalRankArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let tasks = read_json_lines::<TaskRecord>(&a.tasks)?
        .iter()
        .map(TaskRecord::to_task)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Format {
            path: a.tasks.clone(),
            message: e.to_string(),
        })?;
    let orderings = tasks
        .par_iter()
        .map(|t| scorer::rank_candidates(&model, t))
        .collect::<Result<Vec<_>>>()?;
    let report = metrics::ranking_metrics(&tasks, &orderings)?;
    write_report(&report, a.out.as_deref())
}

/// Reads one real number per line, skipping blank lines.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in reader(path)?.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| Error::parse(i + 1, format!("{}: `{t}` is not a number", path.display())))?,
        );
    }
    Ok(out)
}

fn cmd_eval_corr(a: &EvalCorrArgs) -> Result<()> {
    let pred = read_values(&a.pred)?;
    let gold = read_values(&a.gold)?;
    let report = metrics::correlation_report(&pred, &gold)?;
    write_report(&report, a.out.as_deref())
}

fn cmd_dist(a: &DistArgs) -> Result<()> {
    let values = match (&a.examples, &a.values) {
        (Some(p), _) => {
            let mut v = Vec::new();
            for item in ExampleReader::open(p)? {
                let (_, e) = item?;
                if e.kind == ExampleKind::Positive {
                    match e.score() {
                        Some(s) => v.push(s),
                        None => warn!("{} has no score; skipped", e.id),
                    }
                }
            }
            v
        }
        (None, Some(p)) => read_values(p)?,
        (None, None) => return Err(Error::config("one of --examples or --values is required")),
    };
    let hist = metrics::score_histogram(&values, a.bins)?;
    let mut w = output(a.out.as_deref())?;
    hist.write_csv(&mut w)?;
    w.flush()?;
    eprintln!("n={} mean={:.6} std={:.6}", hist.total(), hist.mean, hist.std_dev);
    Ok(())
}
