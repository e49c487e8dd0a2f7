//! Final example scores, group-aware train/dev splitting and corpus statistics.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::negatives::{Example, ExampleKind};
use crate::nidf::NidfTable;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

pub const DEFAULT_NGRAM_ORDER: usize = 3;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub n: usize,
    /// Score every positive 1.0 instead of its token specificity.
    pub ablate_ts: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            n: DEFAULT_NGRAM_ORDER,
            ablate_ts: false,
        }
    }
}

/// Negatives score 0; positives score their n-NIDF, or 1 under ablation.
pub fn score_value<T: Scalar>(e: &Example, table: &NidfTable<T>, cfg: &ScoreConfig) -> Result<T> {
    if cfg.n == 0 {
        return Err(Error::config("n-gram order must be >= 1"));
    }
    if table.n() != cfg.n {
        return Err(Error::config(format!(
            "table order {} does not match requested n = {}",
            table.n(),
            cfg.n
        )));
    }
    Ok(match e.kind {
        ExampleKind::Positive if cfg.ablate_ts => T::one(),
        ExampleKind::Positive => table.example_n_nidf(&e.utterances),
        _ => T::zero(),
    })
}

/// Computes the score and stores it on the example.
pub fn score_example<T: Scalar>(e: &mut Example, table: &NidfTable<T>, cfg: &ScoreConfig) -> Result<T> {
    let s = score_value(e, table, cfg)?;
    e.set_score(s.to_f64_lossy())?;
    Ok(s)
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
}

/// Number of train groups: `round_half_up(ratio * groups)`.
pub fn train_group_count(groups: usize, ratio: f64) -> usize {
    (ratio * groups as f64 + 0.5).floor() as usize
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    Ok(())
}

/// Assigns each source id to train (`true`) or dev. Groups are shuffled with
/// `rng` and the first `round_half_up(ratio * groups)` go to train.
pub fn assign_groups(source_ids: &[String], ratio: f64, rng: &mut SeededRng) -> Result<HashMap<String, bool>> {
    check_ratio(ratio)?;
    if source_ids.len() < 2 {
        return Err(Error::CannotSplit(format!(
            "need at least 2 source groups, found {}",
            source_ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..source_ids.len()).collect();
    rng.shuffle(&mut order);
    let n_train = train_group_count(source_ids.len(), ratio);
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(rank, idx)| (source_ids[idx].clone(), rank < n_train))
        .collect())
}

/// Distinct source ids in first-appearance order.
pub fn source_groups<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    ids.into_iter()
        .filter(|id| seen.insert(*id))
        .map(str::to_string)
        .collect()
}

/// Splits by source dialogue so a positive and its negatives never straddle
/// the boundary. Relative input order is kept on both sides.
pub fn split_corpus(examples: Vec<Example>, ratio: f64, rng: &mut SeededRng) -> Result<Split> {
    check_ratio(ratio)?;
    let groups = source_groups(examples.iter().map(|e| e.source_id.as_str()));
    let assignment = assign_groups(&groups, ratio, rng)?;
    let mut split = Split::default();
    for e in examples {
        if assignment[&e.source_id] {
            split.train.push(e);
        } else {
            split.dev.push(e);
        }
    }
    Ok(split)
}

/// Corpus statistics in the layout of the usual data-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub all: usize,
    pub positive: usize,
    pub negative: usize,
    pub avg_utterances: f64,
    pub avg_tokens: f64,
}

/// Streaming accumulator behind [`corpus_stats`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StatsAccumulator {
    positive: usize,
    negative: usize,
    utterances: u64,
    tokens: u64,
}

impl StatsAccumulator {
    pub fn add(&mut self, e: &Example) {
        if e.kind.is_negative() {
            self.negative += 1;
        } else {
            self.positive += 1;
        }
        self.utterances += e.utterances.len() as u64;
        self.tokens += e.token_count() as u64;
    }

    pub fn merge(mut self, other: StatsAccumulator) -> Self {
        self.positive += other.positive;
        self.negative += other.negative;
        self.utterances += other.utterances;
        self.tokens += other.tokens;
        self
    }

    pub fn finish(self) -> Result<StatsReport> {
        let all = self.positive + self.negative;
        if all == 0 {
            return Err(Error::Empty("no examples to summarize".into()));
        }
        Ok(StatsReport {
            all,
            positive: self.positive,
            negative: self.negative,
            avg_utterances: self.utterances as f64 / all as f64,
            avg_tokens: self.tokens as f64 / all as f64,
        })
    }
}

pub fn corpus_stats<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Result<StatsReport> {
    let mut acc = StatsAccumulator::default();
    for e in examples {
        acc.add(e);
    }
    acc.finish()
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28}{:>12}", "# of all examples", self.all)?;
        writeln!(f, "{:<28}{:>12}", "# of positive examples", self.positive)?;
        writeln!(f, "{:<28}{:>12}", "# of negative examples", self.negative)?;
        writeln!(f, "{:<28}{:>12.2}", "avg. # utter. per example", self.avg_utterances)?;
        write!(f, "{:<28}{:>12.2}", "avg. # tokens per example", self.avg_tokens)
    }
}
