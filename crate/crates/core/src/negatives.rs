//! Coherence-breaking negatives: utterance ordering (UO), insertion (UI)
//! and replacement (UR).

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Utterance};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Rejection-sampling attempts before falling back to a systematic search.
const MAX_DRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleKind {
    Positive,
    Uo,
    Ui,
    Ur,
}

impl ExampleKind {
    pub const ALL: [ExampleKind; 4] = [
        ExampleKind::Positive,
        ExampleKind::Uo,
        ExampleKind::Ui,
        ExampleKind::Ur,
    ];

    pub fn is_negative(self) -> bool {
        self != ExampleKind::Positive
    }

    /// Suffix used in example ids (`source_id#suffix`).
    pub fn id_suffix(self) -> &'static str {
        match self {
            ExampleKind::Positive => "pos",
            ExampleKind::Uo => "uo",
            ExampleKind::Ui => "ui",
            ExampleKind::Ur => "ur",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleKind::Positive => "positive",
            ExampleKind::Uo => "uo",
            ExampleKind::Ui => "ui",
            ExampleKind::Ur => "ur",
        }
    }
}

impl fmt::Display for ExampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExampleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown example kind `{s}`")))
    }
}

/// A positive dialogue or one of its perturbations, with an optional score.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub source_id: String,
    pub kind: ExampleKind,
    pub utterances: Vec<Utterance>,
    score: Option<f64>,
}

impl Example {
    pub fn new(source_id: &str, kind: ExampleKind, utterances: Vec<Utterance>) -> Self {
        Example {
            id: format!("{}#{}", source_id, kind.id_suffix()),
            source_id: source_id.to_string(),
            kind,
            utterances,
            score: None,
        }
    }

    pub fn positive(d: &Dialogue) -> Self {
        Example::new(&d.id, ExampleKind::Positive, d.utterances.clone())
    }

    pub fn score(&self) -> Option<f64> {
        self.score
    }

    /// Stores a score, rejecting anything outside `[0, 1]`.
    pub fn set_score(&mut self, score: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::OutOfRange {
                index: 0,
                value: score,
            });
        }
        self.score = Some(score);
        Ok(())
    }

    pub fn with_score(mut self, score: Option<f64>) -> Result<Self> {
        match score {
            Some(s) => self.set_score(s)?,
            None => self.score = None,
        }
        Ok(self)
    }

    pub fn token_count(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens().len()).sum()
    }
}

fn tokens_equal(a: &Utterance, b: &Utterance) -> bool {
    a.tokens() == b.tokens()
}

/// True when reordering `d` by `order` reproduces the same token sequence.
fn order_is_noop(d: &Dialogue, order: &[usize]) -> bool {
    order
        .iter()
        .enumerate()
        .all(|(pos, &src)| tokens_equal(&d.utterances[pos], &d.utterances[src]))
}

fn reorder(d: &Dialogue, order: &[usize]) -> Vec<Utterance> {
    order.iter().map(|&i| d.utterances[i].clone()).collect()
}

fn require_two(d: &Dialogue) -> Result<()> {
    if d.len() < 2 {
        return Err(Error::CannotPerturb {
            id: d.id.clone(),
            reason: format!("needs at least 2 utterances, has {}", d.len()),
        });
    }
    Ok(())
}

/// Index order produced by removing position `from` and re-inserting it at `to`.
pub fn insertion_order(len: usize, from: usize, to: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).filter(|&i| i != from).collect();
    order.insert(to, from);
    order
}

/// Utterance ordering: a uniformly drawn non-identity permutation.
pub fn gen_uo(d: &Dialogue, rng: &mut SeededRng) -> Result<Example> {
    require_two(d)?;
    let n = d.len();
    for _ in 0..MAX_DRAWS {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        if !order_is_noop(d, &order) {
            return Ok(Example::new(&d.id, ExampleKind::Uo, reorder(d, &order)));
        }
    }
    // Swap the first pair of distinguishable utterances.
    for i in 0..n {
        for j in i + 1..n {
            if !tokens_equal(&d.utterances[i], &d.utterances[j]) {
                let mut order: Vec<usize> = (0..n).collect();
                order.swap(i, j);
                return Ok(Example::new(&d.id, ExampleKind::Uo, reorder(d, &order)));
            }
        }
    }
    Err(Error::CannotPerturb {
        id: d.id.clone(),
        reason: "all utterances are identical".into(),
    })
}

/// Utterance insertion: move one uniformly chosen utterance to a different position.
pub fn gen_ui(d: &Dialogue, rng: &mut SeededRng) -> Result<Example> {
    require_two(d)?;
    let n = d.len();
    for _ in 0..MAX_DRAWS {
        let from = rng.below(n);
        let mut to = rng.below(n - 1);
        if to >= from {
            to += 1;
        }
        let order = insertion_order(n, from, to);
        if !order_is_noop(d, &order) {
            return Ok(Example::new(&d.id, ExampleKind::Ui, reorder(d, &order)));
        }
    }
    for from in 0..n {
        for to in (0..n).filter(|&t| t != from) {
            let order = insertion_order(n, from, to);
            if !order_is_noop(d, &order) {
                return Ok(Example::new(&d.id, ExampleKind::Ui, reorder(d, &order)));
            }
        }
    }
    Err(Error::CannotPerturb {
        id: d.id.clone(),
        reason: "all utterances are identical".into(),
    })
}

fn eligible_donor(d: &Dialogue, other: &Dialogue) -> bool {
    !other.is_empty() && other.root_id() != d.root_id()
}

/// Utterance replacement: one position of `d` gets an utterance drawn from
/// another dialogue of `pool`. Segments of the same parent are not donors.
pub fn gen_ur(d: &Dialogue, pool: &[Dialogue], rng: &mut SeededRng) -> Result<Example> {
    if d.is_empty() {
        return Err(Error::CannotPerturb {
            id: d.id.clone(),
            reason: "dialogue is empty".into(),
        });
    }
    let replace = |pos: usize, u: &Utterance| {
        let mut utts = d.utterances.clone();
        utts[pos] = u.clone();
        Example::new(&d.id, ExampleKind::Ur, utts)
    };

    if !pool.is_empty() {
        for _ in 0..MAX_DRAWS {
            let donor = &pool[rng.below(pool.len())];
            if !eligible_donor(d, donor) {
                continue;
            }
            let pos = rng.below(d.len());
            let u = &donor.utterances[rng.below(donor.len())];
            if !tokens_equal(&d.utterances[pos], u) {
                return Ok(replace(pos, u));
            }
        }
    }
    for donor in pool.iter().filter(|o| eligible_donor(d, o)) {
        for u in &donor.utterances {
            if let Some(pos) = (0..d.len()).find(|&p| !tokens_equal(&d.utterances[p], u)) {
                return Ok(replace(pos, u));
            }
        }
    }
    Err(Error::CannotPerturb {
        id: d.id.clone(),
        reason: "no eligible replacement utterance in pool".into(),
    })
}

/// Output of [`build_examples`]: examples in corpus order plus per-dialogue warnings.
#[derive(Debug, Clone, Default)]
pub struct BuildOutput {
    pub examples: Vec<Example>,
    pub warnings: Vec<String>,
}

impl BuildOutput {
    pub fn count(&self, kind: ExampleKind) -> usize {
        self.examples.iter().filter(|e| e.kind == kind).count()
    }
}

fn build_group(d: &Dialogue, corpus: &[Dialogue], seed: u64) -> (Vec<Example>, Option<String>) {
    let positive = Example::positive(d);
    let mut rng = SeededRng::derive(seed, &d.id);
    let negatives = (|| -> Result<Vec<Example>> {
        require_two(d)?;
        Ok(vec![
            gen_uo(d, &mut rng)?,
            gen_ui(d, &mut rng)?,
            gen_ur(d, corpus, &mut rng)?,
        ])
    })();
    match negatives {
        Ok(mut negs) => {
            let mut group = vec![positive];
            group.append(&mut negs);
            (group, None)
        }
        Err(e) => (vec![positive], Some(format!("{e}; emitted positive only"))),
    }
}

/// One positive and one UO, UI and UR negative per dialogue. Each dialogue
/// draws from its own stream derived from `(seed, id)`, so results do not
/// depend on thread scheduling.
pub fn build_examples(corpus: &[Dialogue], seed: u64) -> BuildOutput {
    let groups: Vec<_> = corpus
        .par_iter()
        .map(|d| build_group(d, corpus, seed))
        .collect();
    let mut out = BuildOutput::default();
    for (examples, warning) in groups {
        out.examples.extend(examples);
        if let Some(w) = warning {
            warn!("{w}");
            out.warnings.push(w);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn dlg(id: &str, texts: &[&str]) -> Dialogue {
        Dialogue::from_texts(id, texts)
    }

    fn texts(e: &Example) -> Vec<String> {
        e.utterances.iter().map(|u| u.text.clone()).collect()
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn uo_two_utterances_swaps() {
        let d = dlg("d", &["a", "b"]);
        for seed in 0..20 {
            let e = gen_uo(&d, &mut SeededRng::new(seed)).unwrap();
            assert_eq!(texts(&e), ["b", "a"]);
        }
    }

    #[test]
    fn uo_single_utterance_fails() {
        let d = dlg("d", &["a"]);
        assert!(matches!(
            gen_uo(&d, &mut SeededRng::new(0)),
            Err(Error::CannotPerturb { .. })
        ));
    }

    #[test]
    fn uo_three_seed_42_is_a_valid_permutation() {
        let d = dlg("d", &["a", "b", "c"]);
        let valid: BTreeSet<Vec<String>> = permutations(&[0, 1, 2])
            .into_iter()
            .filter(|p| p != &[0, 1, 2])
            .map(|p| p.iter().map(|&i| ["a", "b", "c"][i].to_string()).collect())
            .collect();
        assert_eq!(valid.len(), 5);
        let first = texts(&gen_uo(&d, &mut SeededRng::new(42)).unwrap());
        let second = texts(&gen_uo(&d, &mut SeededRng::new(42)).unwrap());
        assert!(valid.contains(&first));
        assert_eq!(first, second);
    }

    #[test]
    fn uo_identical_utterances_cannot_perturb() {
        let d = dlg("d", &["same", "Same", "SAME"]);
        assert!(gen_uo(&d, &mut SeededRng::new(1)).is_err());
        assert!(gen_ui(&d, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn uo_with_duplicates_still_differs() {
        let d = dlg("d", &["x", "x", "x", "y"]);
        for seed in 0..50 {
            let e = gen_uo(&d, &mut SeededRng::new(seed)).unwrap();
            assert_ne!(texts(&e), ["x", "x", "x", "y"]);
        }
    }

    #[test]
    fn ui_two_utterances_swaps() {
        let d = dlg("d", &["a", "b"]);
        for seed in 0..20 {
            assert_eq!(texts(&gen_ui(&d, &mut SeededRng::new(seed)).unwrap()), ["b", "a"]);
        }
        assert!(gen_ui(&dlg("d", &["a"]), &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn ui_three_reachable_set() {
        let d = dlg("d", &["a", "b", "c"]);
        let expected: BTreeSet<Vec<&str>> = [
            vec!["b", "a", "c"],
            vec!["b", "c", "a"],
            vec!["a", "c", "b"],
            vec!["c", "a", "b"],
        ]
        .into_iter()
        .collect();
        let mut seen = BTreeSet::new();
        for seed in 0..400 {
            let t = texts(&gen_ui(&d, &mut SeededRng::new(seed)).unwrap());
            let t: Vec<&str> = t.iter().map(|s| match s.as_str() {
                "a" => "a",
                "b" => "b",
                _ => "c",
            }).collect();
            assert!(expected.contains(&t), "{t:?}");
            seen.insert(t);
        }
        assert_eq!(seen, expected);
    }

    #[test]
    fn ur_replaces_exactly_one() {
        let d = dlg("d", &["a", "b"]);
        let pool = vec![d.clone(), dlg("p", &["x"])];
        for seed in 0..30 {
            let e = gen_ur(&d, &pool, &mut SeededRng::new(seed)).unwrap();
            let t = texts(&e);
            let changed: Vec<usize> = (0..2).filter(|&i| t[i] != ["a", "b"][i]).collect();
            assert_eq!(changed.len(), 1);
            assert_eq!(t[changed[0]], "x");
        }
    }

    #[test]
    fn ur_empty_pool_fails() {
        let d = dlg("d", &["a", "b"]);
        assert!(gen_ur(&d, &[], &mut SeededRng::new(0)).is_err());
        // only itself in the pool
        assert!(gen_ur(&d, &[d.clone()], &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn ur_skips_sibling_segments() {
        let long: Vec<String> = (0..12).map(|i| format!("u{i}")).collect();
        let parent = Dialogue::from_texts("p", &long);
        let segs = crate::corpus::segment_dialogue(&parent, 10, 5).unwrap();
        assert!(gen_ur(&segs[0], &segs, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn build_counts() {
        let corpus: Vec<Dialogue> = (0..20)
            .map(|i| {
                let t: Vec<String> = (0..10).map(|j| format!("d{i} u{j}")).collect();
                Dialogue::from_texts(format!("d{i}"), &t)
            })
            .collect();
        let out = build_examples(&corpus, 42);
        assert_eq!(out.count(ExampleKind::Positive), 20);
        assert_eq!(out.examples.len() - out.count(ExampleKind::Positive), 60);
        assert!(out.warnings.is_empty());
        assert_eq!(out.examples[0].id, "d0#pos");
        assert_eq!(out.examples[3].id, "d0#ur");
    }

    #[test]
    fn build_single_utterance_warns() {
        let corpus = vec![dlg("a", &["only"]), dlg("b", &["x", "y"]), dlg("c", &["z", "w"])];
        let out = build_examples(&corpus, 1);
        assert_eq!(out.count(ExampleKind::Positive), 3);
        assert_eq!(out.examples.len(), 3 + 6);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn kind_round_trip() {
        for k in ExampleKind::ALL {
            assert_eq!(k.as_str().parse::<ExampleKind>().unwrap(), k);
        }
        assert!("neg".parse::<ExampleKind>().is_err());
    }

    #[test]
    fn score_range_enforced() {
        let mut e = Example::positive(&dlg("d", &["a"]));
        assert!(e.set_score(1.5).is_err());
        assert!(e.set_score(-0.1).is_err());
        e.set_score(0.25).unwrap();
        assert_eq!(e.score(), Some(0.25));
    }
}
