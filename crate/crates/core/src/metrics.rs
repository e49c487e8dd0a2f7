//! Correlation with significance, ranking metrics and score histograms.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scorer::RankingTask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation<T> {
    pub coefficient: T,
    /// Two-sided p-value from the t-approximation with `n - 2` degrees of freedom.
    pub p_value: T,
    pub n: usize,
}

fn check_pair<T: Scalar>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 pairs, got {}",
            x.len()
        )));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if let Some(i) = v.iter().position(|a| !a.is_finite()) {
            return Err(Error::UndefinedCorrelation(format!("{name}[{i}] is not finite")));
        }
        if v.iter().all(|a| *a == v[0]) {
            return Err(Error::UndefinedCorrelation(format!("{name} is constant")));
        }
    }
    Ok(())
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::of_usize(v.len())
}

fn pearson_unchecked<T: Scalar>(x: &[T], y: &[T]) -> T {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    r.max(-T::one()).min(T::one())
}

/// Two-sided p-value of a correlation coefficient via
/// `t = r * sqrt((n - 2) / (1 - r^2))` against Student-t(n - 2).
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

pub fn pearson_corr<T: Scalar>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    check_pair(x, y)?;
    let r = pearson_unchecked(x, y);
    Ok(Correlation {
        coefficient: r,
        p_value: T::of(correlation_p_value(r.to_f64_lossy(), x.len())),
        n: x.len(),
    })
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let avg = T::of_usize(i + 1 + j) / T::of(2.0);
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman_corr<T: Scalar>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    check_pair(x, y)?;
    pearson_corr(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

/// Named metric values computed over `sample_size` items.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, MetricValue>,
    pub sample_size: usize,
}

#[derive(Serialize)]
struct ReportLine<'a> {
    metric: &'a str,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_value: Option<f64>,
    n: usize,
}

impl EvalReport {
    pub fn new(sample_size: usize) -> Self {
        EvalReport {
            metrics: BTreeMap::new(),
            sample_size,
        }
    }

    pub fn insert(&mut self, name: &str, value: f64, p_value: Option<f64>) {
        self.metrics.insert(name.to_string(), MetricValue { value, p_value });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).and_then(|m| m.p_value)
    }

    /// One JSON object per metric.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (name, m) in &self.metrics {
            let line = ReportLine {
                metric: name,
                value: m.value,
                p_value: m.p_value,
                n: self.sample_size,
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12}{:>12}{:>14}", "metric", "value", "p-value")?;
        for (name, m) in &self.metrics {
            let p = m.p_value.map_or_else(|| "-".to_string(), |p| format!("{p:.3e}"));
            writeln!(f, "{name:<12}{:>12.6}{p:>14}", m.value)?;
        }
        write!(f, "{:<12}{:>12}", "n", self.sample_size)
    }
}

/// Pearson and Spearman of predictions against gold labels.
pub fn correlation_report(pred: &[f64], gold: &[f64]) -> Result<EvalReport> {
    let p = pearson_corr(pred, gold)?;
    let s = spearman_corr(pred, gold)?;
    let mut report = EvalReport::new(pred.len());
    report.insert("pearson", p.coefficient, Some(p.p_value));
    report.insert("spearman", s.coefficient, Some(s.p_value));
    Ok(report)
}

/// 1-based position of the gold candidate in an ordering.
fn gold_rank(task: usize, gold: usize, ordering: &[usize], candidates: Option<usize>) -> Result<usize> {
    let bad = |reason: String| Error::InvalidOrdering { task, reason };
    if let Some(c) = candidates {
        if ordering.len() != c {
            return Err(bad(format!("{} indices for {c} candidates", ordering.len())));
        }
        let mut seen = vec![false; c];
        for &i in ordering {
            if i >= c || std::mem::replace(&mut seen[i], true) {
                return Err(bad(format!("not a permutation of 0..{c}")));
            }
        }
    }
    ordering
        .iter()
        .position(|&i| i == gold)
        .map(|p| p + 1)
        .ok_or_else(|| bad(format!("gold index {gold} missing")))
}

fn ranking_report_from_ranks(ranks: &[usize]) -> EvalReport {
    let n = ranks.len() as f64;
    let recall = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let mut report = EvalReport::new(ranks.len());
    report.insert("r@1", recall(1), None);
    report.insert("r@2", recall(2), None);
    report.insert("mrr", mrr, None);
    report.insert("accuracy", recall(1), None);
    report
}

/// R@1, R@2, MRR and accuracy (= R@1) from per-task orderings.
pub fn ranking_metrics(tasks: &[RankingTask], orderings: &[Vec<usize>]) -> Result<EvalReport> {
    if tasks.len() != orderings.len() {
        return Err(Error::LengthMismatch {
            left: tasks.len(),
            right: orderings.len(),
        });
    }
    if tasks.is_empty() {
        return Err(Error::Empty("no ranking tasks".into()));
    }
    let ranks = tasks
        .iter()
        .zip(orderings)
        .enumerate()
        .map(|(i, (t, o))| gold_rank(i, t.gold, o, Some(t.candidates.len())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ranking_report_from_ranks(&ranks))
}

/// Same as [`ranking_metrics`] when only the gold indices are at hand.
pub fn ranking_metrics_from_gold(gold: &[usize], orderings: &[Vec<usize>]) -> Result<EvalReport> {
    if gold.len() != orderings.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: orderings.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Empty("no ranking tasks".into()));
    }
    let ranks = gold
        .iter()
        .zip(orderings)
        .enumerate()
        .map(|(i, (&g, o))| gold_rank(i, g, o, Some(o.len())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ranking_report_from_ranks(&ranks))
}

/// Uniform-bin histogram over `[0, 1]`; the last bin includes 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `bin_upper_edge,count` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_upper_edge,count")?;
        for (edge, count) in self.edges[1..].iter().zip(&self.counts) {
            writeln!(w, "{edge},{count}")?;
        }
        Ok(())
    }
}

pub fn score_histogram<T: Scalar>(values: &[T], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    let mut counts = vec![0usize; bins];
    for (index, v) in values.iter().enumerate() {
        let f = v.to_f64_lossy();
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::OutOfRange { index, value: f });
        }
        let bin = ((f * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let (m, sd) = mean_std(values);
    Ok(Histogram {
        edges,
        counts,
        mean: m,
        std_dev: sd,
    })
}

/// Mean and population standard deviation; zeros for empty input.
pub fn mean_std<T: Scalar>(values: &[T]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let m = values.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| (v.to_f64_lossy() - m).powi(2))
        .sum::<f64>()
        / n;
    (m, var.sqrt())
}
