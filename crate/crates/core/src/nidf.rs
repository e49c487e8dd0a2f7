//! n-gram document frequencies and normalized inverse document frequency.
//!
//! `IDF(ng) = ln(D / c)` where `c` counts the documents containing `ng`.
//! NIDF min-max normalizes IDF over every stored n-gram, and the n-NIDF of
//! an example is the occurrence-weighted mean NIDF of its n-grams.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::corpus::{Dialogue, Utterance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NgramKey(pub Vec<String>);

impl NgramKey {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        NgramKey(tokens.into_iter().map(Into::into).collect())
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// Tokens joined with single spaces; tokens never contain whitespace.
    pub fn text(&self) -> String {
        self.0.join(" ")
    }
}

impl Borrow<[String]> for NgramKey {
    fn borrow(&self) -> &[String] {
        &self.0
    }
}

/// All n-gram windows, taken inside each utterance independently.
pub fn ngram_windows(utterances: &[Utterance], n: usize) -> impl Iterator<Item = &[String]> {
    assert!(n >= 1, "n-gram order must be >= 1");
    utterances.iter().flat_map(move |u| u.tokens().windows(n))
}

/// Multiset of n-grams of the given utterances.
pub fn extract_ngrams(utterances: &[Utterance], n: usize) -> HashMap<NgramKey, usize> {
    let mut counts = HashMap::new();
    for w in ngram_windows(utterances, n) {
        *counts.entry(NgramKey(w.to_vec())).or_insert(0) += 1;
    }
    counts
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config("n-gram order must be >= 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NidfTable<T> {
    n: usize,
    documents: usize,
    doc_freq: HashMap<NgramKey, u64>,
    min_idf: T,
    max_idf: T,
}

impl<T: Scalar> NidfTable<T> {
    /// Counts, for every n-gram, the dialogues containing it.
    pub fn build(dialogues: &[Dialogue], n: usize) -> Result<Self> {
        check_order(n)?;
        if dialogues.is_empty() {
            return Err(Error::Empty("no dialogues to build an n-gram table from".into()));
        }
        let counts = dialogues
            .par_iter()
            .fold(HashMap::<&[String], u64>::new, |mut acc, d| {
                let distinct: HashSet<&[String]> = ngram_windows(&d.utterances, n).collect();
                for ng in distinct {
                    *acc.entry(ng).or_insert(0) += 1;
                }
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                if a.len() < b.len() {
                    return merge_counts(b, a);
                }
                merge_counts_into(&mut a, b);
                a
            });
        let doc_freq = counts
            .into_iter()
            .map(|(k, c)| (NgramKey(k.to_vec()), c))
            .collect();
        Self::from_counts(n, dialogues.len(), doc_freq)
    }

    /// Builds a table from explicit document counts.
    pub fn from_counts(n: usize, documents: usize, doc_freq: HashMap<NgramKey, u64>) -> Result<Self> {
        check_order(n)?;
        if doc_freq.is_empty() {
            return Err(Error::EmptyTable { n });
        }
        let mut min_c = u64::MAX;
        let mut max_c = 0;
        for (k, &c) in &doc_freq {
            if k.order() != n {
                return Err(Error::config(format!(
                    "n-gram `{}` has order {}, table order is {n}",
                    k.text(),
                    k.order()
                )));
            }
            if c == 0 || c > documents as u64 {
                return Err(Error::config(format!(
                    "document count {c} for `{}` outside [1, {documents}]",
                    k.text()
                )));
            }
            min_c = min_c.min(c);
            max_c = max_c.max(c);
        }
        let mut table = NidfTable {
            n,
            documents,
            doc_freq,
            min_idf: T::zero(),
            max_idf: T::zero(),
        };
        table.min_idf = table.idf_of_count(max_c);
        table.max_idf = table.idf_of_count(min_c);
        Ok(table)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.doc_freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_freq.is_empty()
    }

    pub fn min_idf(&self) -> T {
        self.min_idf
    }

    pub fn max_idf(&self) -> T {
        self.max_idf
    }

    pub fn doc_freq(&self, ng: &[String]) -> Option<u64> {
        self.doc_freq.get(ng).copied()
    }

    fn idf_of_count(&self, c: u64) -> T {
        (T::of_usize(self.documents) / T::of(c as f64)).ln()
    }

    pub fn idf(&self, ng: &[String]) -> Option<T> {
        self.doc_freq(ng).map(|c| self.idf_of_count(c))
    }

    pub fn is_degenerate(&self) -> bool {
        self.max_idf == self.min_idf
    }

    /// Normalized IDF in `[0, 1]`. Unseen n-grams count as maximally rare
    /// (1.0); a table whose IDFs are all equal yields 0.0 everywhere.
    pub fn nidf(&self, ng: &[String]) -> T {
        if self.is_degenerate() {
            return T::zero();
        }
        match self.idf(ng) {
            Some(idf) => {
                let v = (idf - self.min_idf) / (self.max_idf - self.min_idf);
                v.max(T::zero()).min(T::one())
            }
            None => T::one(),
        }
    }

    /// Occurrence-weighted mean NIDF over the n-grams of `utterances`;
    /// 0.0 when there are none.
    pub fn example_n_nidf(&self, utterances: &[Utterance]) -> T {
        let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
        for w in ngram_windows(utterances, self.n) {
            *counts.entry(w).or_insert(0) += 1;
        }
        let total: usize = counts.values().sum();
        if total == 0 {
            return T::zero();
        }
        let total = T::of_usize(total);
        let weighted: T = counts
            .into_iter()
            .map(|(ng, c)| self.nidf(ng) * (T::of_usize(c) / total))
            .sum();
        weighted.max(T::zero()).min(T::one())
    }

    /// Rows sorted by the byte order of their serialized keys.
    pub fn sorted_rows(&self) -> Vec<(String, u64)> {
        let mut rows: Vec<(String, u64)> = self
            .doc_freq
            .iter()
            .map(|(k, &c)| (k.text(), c))
            .collect();
        rows.sort_unstable();
        rows
    }

    /// Writes `n=<n>\tD=<D>` followed by one `<tokens>\t<count>` row per n-gram.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n={}\tD={}", self.n, self.documents)?;
        for (key, count) in self.sorted_rows() {
            writeln!(w, "{key}\t{count}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// One line holding the IDF extremes at full precision.
    pub fn idf_sidecar_line(&self) -> String {
        format!("min_idf={}\tmax_idf={}", self.min_idf, self.max_idf)
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing header"))??;
        let (n, documents) = parse_header(&header)?;
        let mut doc_freq = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            if line.is_empty() {
                continue;
            }
            let (key, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(line_no, "expected `<tokens>\\t<count>`"))?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad count `{count}`")))?;
            let key = NgramKey::new(key.split(' '));
            if key.order() != n {
                return Err(Error::parse(line_no, format!("expected {n} tokens")));
            }
            if doc_freq.insert(key, count).is_some() {
                return Err(Error::parse(line_no, "duplicate n-gram"));
            }
        }
        Self::from_counts(n, documents, doc_freq)
    }

    /// Checks a sidecar line against the extremes recomputed from the counts.
    pub fn verify_sidecar(&self, line: &str) -> Result<()> {
        let parsed = parse_sidecar::<T>(line.trim_end())?;
        if parsed != (self.min_idf, self.max_idf) {
            return Err(Error::parse(
                1,
                format!(
                    "IDF sidecar {line:?} disagrees with table ({})",
                    self.idf_sidecar_line()
                ),
            ));
        }
        Ok(())
    }
}

fn merge_counts<'a>(mut big: HashMap<&'a [String], u64>, small: HashMap<&'a [String], u64>) -> HashMap<&'a [String], u64> {
    merge_counts_into(&mut big, small);
    big
}

fn merge_counts_into<'a>(into: &mut HashMap<&'a [String], u64>, from: HashMap<&'a [String], u64>) {
    for (k, c) in from {
        *into.entry(k).or_insert(0) += c;
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = || Error::parse(1, format!("bad header `{line}`, expected `n=<n>\\tD=<D>`"));
    let (n, d) = line.split_once('\t').ok_or_else(bad)?;
    let n = n.strip_prefix("n=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let d = d.strip_prefix("D=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    Ok((n, d))
}

fn parse_sidecar<T: Scalar>(line: &str) -> Result<(T, T)> {
    let bad = || Error::parse(1, format!("bad IDF sidecar `{line}`"));
    let (lo, hi) = line.split_once('\t').ok_or_else(bad)?;
    let lo = lo.strip_prefix("min_idf=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let hi = hi.strip_prefix("max_idf=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    Ok((lo, hi))
}
