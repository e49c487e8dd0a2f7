//! Synthetic corpora shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use dapo::{Dialogue, PairedInput, SeededRng};

pub const MARKER: &str = "zorblat";

/// `k` dialogues of `len` utterances with distinct content.
pub fn distinct_corpus(k: usize, len: usize) -> Vec<Dialogue> {
    (0..k)
        .map(|i| {
            let texts: Vec<String> = (0..len)
                .map(|j| format!("dialogue {i} turn {j} says something"))
                .collect();
            Dialogue::from_texts(format!("d{i}"), &texts)
        })
        .collect()
}

/// Zipf-distributed vocabulary sampler (exponent 1) over `size` words.
pub struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    pub fn new(size: usize) -> Self {
        let weights: Vec<f64> = (1..=size).map(|r| 1.0 / r as f64).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Zipf { cdf }
    }

    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

const PHRASES: [&str; 12] = [
    "how are you",
    "i do not know",
    "thank you very much",
    "what do you mean",
    "that sounds great",
    "see you later",
    "i think so",
    "are you sure",
    "nice to meet you",
    "what about you",
    "let me see",
    "i am not sure",
];

/// Chit-chat style corpus: Zipfian words mixed with stock phrases,
/// 4-12 utterances of 3-18 tokens each.
pub fn zipf_corpus(k: usize, seed: u64) -> Vec<Dialogue> {
    let zipf = Zipf::new(5000);
    let mut rng = SeededRng::new(seed);
    (0..k)
        .map(|i| {
            let turns = 4 + rng.below(9);
            let texts: Vec<String> = (0..turns)
                .map(|_| {
                    let mut words: Vec<String> = Vec::new();
                    let len = 3 + rng.below(16);
                    while words.len() < len {
                        if rng.below(4) == 0 {
                            words.extend(PHRASES[rng.below(PHRASES.len())].split(' ').map(String::from));
                        } else {
                            words.push(format!("w{}", zipf.sample(&mut rng)));
                        }
                    }
                    words.join(" ") + if rng.below(3) == 0 { "?" } else { "." }
                })
                .collect();
            Dialogue::from_texts(format!("z{i}"), &texts)
        })
        .collect()
}

/// Text of 3-7 filler words, optionally with the marker at a random position.
pub fn synthetic_text(rng: &mut SeededRng, with_marker: bool) -> String {
    let len = 3 + rng.below(5);
    let mut words: Vec<String> = (0..len).map(|_| format!("f{}", rng.below(60))).collect();
    if with_marker {
        let pos = rng.below(len + 1);
        words.insert(pos, MARKER.to_string());
    }
    words.join(" ")
}

/// Separable regression data: target 1 iff the text contains the marker.
pub fn separable_corpus(n: usize, seed: u64) -> Vec<(PairedInput, f64)> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let text = synthetic_text(&mut rng, positive);
            (PairedInput::dialogue(&[text]), if positive { 1.0 } else { 0.0 })
        })
        .collect()
}

pub fn write_dialogues(path: &Path, dialogues: &[Dialogue]) {
    let mut f = std::fs::File::create(path).unwrap();
    for d in dialogues {
        let utts: Vec<serde_json::Value> = d
            .utterances
            .iter()
            .map(|u| serde_json::json!({"speaker": u.speaker, "text": u.text}))
            .collect();
        let rec = serde_json::json!({"id": d.id, "source": d.source, "utterances": utts});
        writeln!(f, "{rec}").unwrap();
    }
}

/// Runs the `dapo` binary in `dir`; returns (exit code, stdout, stderr).
pub fn dapo(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_dapo"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run dapo");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}
