use crate::corpus::{tokenize, Utterance};
use crate::error::{Error, Result};
use crate::hashing::Fnv1a;
use crate::negatives::Example;
use crate::scalar::Scalar;

/// Separates utterances inside a text slot. The tokenizer can never emit it
/// because `[` and `]` always split off as punctuation.
pub const BOUNDARY_TOKEN: &str = "[SEP]";

/// The two input slots of the scorer. `text_b` features live in their own
/// namespace, so the same token in A and B hashes differently.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairedInput {
    pub text_a: Vec<String>,
    pub text_b: Option<Vec<String>>,
}

fn join_utterances<'a>(utterances: impl IntoIterator<Item = &'a [String]>) -> Vec<String> {
    let mut out = Vec::new();
    for (i, toks) in utterances.into_iter().enumerate() {
        if i > 0 {
            out.push(BOUNDARY_TOKEN.to_string());
        }
        out.extend(toks.iter().cloned());
    }
    out
}

fn join_texts<S: AsRef<str>>(texts: &[S]) -> Vec<String> {
    let tokens: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
    join_utterances(tokens.iter().map(Vec::as_slice))
}

impl PairedInput {
    pub fn new(text_a: Vec<String>, text_b: Option<Vec<String>>) -> Self {
        PairedInput { text_a, text_b }
    }

    /// Whole dialogue as text A, text B left empty (pre-training examples and
    /// dialogue-level quality evaluation).
    pub fn from_utterances(utterances: &[Utterance]) -> Self {
        PairedInput {
            text_a: join_utterances(utterances.iter().map(Utterance::tokens)),
            text_b: None,
        }
    }

    pub fn from_example(e: &Example) -> Self {
        Self::from_utterances(&e.utterances)
    }

    pub fn dialogue<S: AsRef<str>>(utterances: &[S]) -> Self {
        PairedInput {
            text_a: join_texts(utterances),
            text_b: None,
        }
    }

    /// Dialogue-based QA: dialogue as A, question and option as B.
    pub fn question_answering<S: AsRef<str>>(dialogue: &[S], question: &str, option: &str) -> Self {
        PairedInput {
            text_a: join_texts(dialogue),
            text_b: Some(join_texts(&[question, option])),
        }
    }

    /// Response selection and turn-level quality: history as A, candidate as B.
    pub fn response<S: AsRef<str>>(history: &[S], candidate: &str) -> Self {
        PairedInput {
            text_a: join_texts(history),
            text_b: Some(tokenize(candidate)),
        }
    }
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector<T> {
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[T]) -> T {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }
}

fn hash_feature(seed: u64, namespace: &str, tokens: &[String]) -> u64 {
    let mut h = Fnv1a::with_seed(seed);
    h.write(namespace.as_bytes()).write(b"|");
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            h.write(b" ");
        }
        h.write(t.as_bytes());
    }
    h.finish()
}

/// Unigram and bigram features of both slots, hashed with FNV-1a into
/// `dim` buckets and normalized by the total feature count.
pub fn featurize<T: Scalar>(p: &PairedInput, dim: usize, hash_seed: u64) -> Result<SparseVector<T>> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::config(format!("feature dimension must be a power of two >= 2, got {dim}")));
    }
    let mask = (dim - 1) as u64;
    let mut hits: Vec<usize> = Vec::new();
    let mut slots: Vec<(&str, &[String])> = vec![("A", &p.text_a)];
    if let Some(b) = &p.text_b {
        slots.push(("B", b));
    }
    for (ns, tokens) in slots {
        for n in 1..=2 {
            for w in tokens.windows(n) {
                hits.push((hash_feature(hash_seed, ns, w) & mask) as usize);
            }
        }
    }
    if hits.is_empty() {
        return Ok(SparseVector::default());
    }
    let total = T::of_usize(hits.len());
    hits.sort_unstable();
    let mut out = SparseVector::default();
    let mut i = 0;
    while i < hits.len() {
        let j = hits[i..].iter().position(|&h| h != hits[i]).map_or(hits.len(), |k| i + k);
        out.indices.push(hits[i]);
        out.values.push(T::of_usize(j - i) / total);
        i = j;
    }
    Ok(out)
}
