//! Dialogue records: tokenization, JSONL ingestion and windowed segmentation.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximum number of utterances per segment.
pub const SEGMENT_WINDOW: usize = 10;
pub const SEGMENT_STRIDE: usize = 5;

/// Lowercases, splits on whitespace and isolates each maximal run of
/// punctuation (any non-alphanumeric character) as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        let mut current_is_punct = false;
        for c in chunk.chars() {
            let is_punct = !c.is_alphanumeric();
            if !current.is_empty() && is_punct != current_is_punct {
                tokens.push(std::mem::take(&mut current));
            }
            current_is_punct = is_punct;
            current.extend(c.to_lowercase());
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
    tokens: Vec<String>,
}

impl Utterance {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Utterance {
            speaker: speaker.into(),
            text,
            tokens,
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Serialized form of an utterance; tokens are recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub speaker: String,
    pub text: String,
}

impl From<UtteranceRecord> for Utterance {
    fn from(r: UtteranceRecord) -> Self {
        Utterance::new(r.speaker, r.text)
    }
}

impl From<&Utterance> for UtteranceRecord {
    fn from(u: &Utterance) -> Self {
        UtteranceRecord {
            speaker: u.speaker.clone(),
            text: u.text.clone(),
        }
    }
}

/// Location of a segment inside the dialogue it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OriginSpan {
    pub parent: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub source: String,
    pub utterances: Vec<Utterance>,
    pub origin_span: Option<OriginSpan>,
}

impl Dialogue {
    pub fn new(id: impl Into<String>, source: impl Into<String>, utterances: Vec<Utterance>) -> Self {
        Dialogue {
            id: id.into(),
            source: source.into(),
            utterances,
            origin_span: None,
        }
    }

    /// Builds a dialogue from plain texts with alternating speakers `A`/`B`.
    pub fn from_texts<S: AsRef<str>>(id: impl Into<String>, texts: &[S]) -> Self {
        let utterances = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Utterance::new(if i % 2 == 0 { "A" } else { "B" }, t.as_ref()))
            .collect();
        Dialogue::new(id, "synthetic", utterances)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Id of the unsegmented dialogue this one belongs to.
    pub fn root_id(&self) -> &str {
        self.origin_span
            .as_ref()
            .map(|s| s.parent.as_str())
            .unwrap_or(&self.id)
    }

    pub fn token_count(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens().len()).sum()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogueRecord {
    id: String,
    source: String,
    utterances: Vec<UtteranceRecord>,
}

/// Parses one JSONL dialogue record. `line` is 1-based and only used in errors.
pub fn parse_dialogue_line(text: &str, line: usize) -> Result<Dialogue> {
    let record: DialogueRecord =
        serde_json::from_str(text).map_err(|e| Error::parse(line, e.to_string()))?;
    if record.utterances.is_empty() {
        return Err(Error::parse(line, "dialogue has no utterances"));
    }
    Ok(Dialogue::new(
        record.id,
        record.source,
        record.utterances.into_iter().map(Utterance::from).collect(),
    ))
}

/// Streaming reader over a JSONL dialogue file. Blank lines are skipped.
pub struct DialogueReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> DialogueReader<R> {
    pub fn new(reader: R) -> Self {
        DialogueReader {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for DialogueReader<R> {
    type Item = Result<(usize, Dialogue)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_dialogue_line(&line, self.line_no).map(|d| (self.line_no, d)));
        }
    }
}

/// Reads every record, rejecting malformed lines and duplicate ids.
pub fn parse_dialogues<R: BufRead>(reader: R) -> Result<Vec<Dialogue>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in DialogueReader::new(reader) {
        let (line, d) = item?;
        if !seen.insert(d.id.clone()) {
            return Err(Error::DuplicateId { id: d.id, line });
        }
        out.push(d);
    }
    Ok(out)
}

/// Half-open spans `[start, end)` covering a dialogue of `len` utterances.
pub fn segment_spans(len: usize, window: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if window < 2 {
        return Err(Error::config(format!("segment window must be >= 2, got {window}")));
    }
    if stride == 0 || stride > window {
        return Err(Error::config(format!(
            "segment stride must be in [1, {window}], got {stride}"
        )));
    }
    if len <= window {
        return Ok(vec![(0, len)]);
    }
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    while start < len {
        let span = if start + window > len {
            (len - window, len)
        } else {
            (start, start + window)
        };
        if spans.last() != Some(&span) {
            spans.push(span);
        }
        if span.1 == len {
            break;
        }
        start += stride;
    }
    Ok(spans)
}

/// Splits a long dialogue into overlapping windows; short dialogues come back unchanged.
pub fn segment_dialogue(d: &Dialogue, window: usize, stride: usize) -> Result<Vec<Dialogue>> {
    let spans = segment_spans(d.len(), window, stride)?;
    if spans.len() == 1 && spans[0] == (0, d.len()) {
        return Ok(vec![d.clone()]);
    }
    Ok(spans
        .into_iter()
        .map(|(start, end)| Dialogue {
            id: format!("{}/{}-{}", d.id, start, end),
            source: d.source.clone(),
            utterances: d.utterances[start..end].to_vec(),
            origin_span: Some(OriginSpan {
                parent: d.id.clone(),
                start,
                end,
            }),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dialogue(n: usize) -> Dialogue {
        let texts: Vec<String> = (0..n).map(|i| format!("utterance {i}")).collect();
        Dialogue::from_texts("d", &texts)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Hello, how are you?"),
            vec!["hello", ",", "how", "are", "you", "?"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("A  B"), vec!["a", "b"]);
    }

    #[test]
    fn tokenize_punctuation_runs() {
        assert_eq!(tokenize("wait...what?!"), vec!["wait", "...", "what", "?!"]);
        assert_eq!(tokenize("don't"), vec!["don", "'", "t"]);
        assert_eq!(tokenize("  \t\n "), Vec::<String>::new());
    }

    #[test]
    fn parse_one_record() {
        let input = r#"{"id":"x","source":"dd","utterances":[{"speaker":"A","text":"Hi!"},{"speaker":"B","text":"Hello."},{"speaker":"A","text":"Bye"}]}"#;
        let ds = parse_dialogues(input.as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds[0].id, "x");
        assert_eq!(ds[0].len(), 3);
        assert_eq!(ds[0].utterances[0].tokens(), ["hi", "!"]);
    }

    #[test]
    fn parse_missing_field_names_line() {
        let input = "{\"id\":\"a\",\"source\":\"s\",\"utterances\":[{\"speaker\":\"A\",\"text\":\"x\"}]}\n{\"id\":\"b\",\"source\":\"s\"}\n";
        match parse_dialogues(input.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_duplicate_id() {
        let rec = "{\"id\":\"a\",\"source\":\"s\",\"utterances\":[{\"speaker\":\"A\",\"text\":\"x\"}]}";
        let input = format!("{rec}\n{rec}\n");
        assert!(matches!(
            parse_dialogues(input.as_bytes()),
            Err(Error::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn segment_at_threshold() {
        let d = dialogue(10);
        let segs = segment_dialogue(&d, 10, 5).unwrap();
        assert_eq!(segs, vec![d]);
    }

    #[test]
    fn segment_twelve() {
        let segs = segment_dialogue(&dialogue(12), 10, 5).unwrap();
        let spans: Vec<_> = segs
            .iter()
            .map(|s| {
                let o = s.origin_span.as_ref().unwrap();
                (o.start, o.end)
            })
            .collect();
        assert_eq!(spans, vec![(0, 10), (2, 12)]);
        assert_eq!(segs[1].utterances[0].text, "utterance 2");
    }

    #[test]
    fn segment_short_and_config_errors() {
        let d = dialogue(3);
        assert_eq!(segment_dialogue(&d, 10, 5).unwrap(), vec![d.clone()]);
        assert!(segment_dialogue(&d, 1, 1).unwrap_err().is_usage());
        assert!(segment_dialogue(&d, 10, 0).unwrap_err().is_usage());
        assert!(segment_dialogue(&d, 10, 11).unwrap_err().is_usage());
    }

    #[test]
    fn segment_exact_multiple() {
        assert_eq!(segment_spans(20, 10, 5).unwrap(), vec![(0, 10), (5, 15), (10, 20)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn spans_cover_and_bound(len in 1usize..80, window in 2usize..14, stride_frac in 0.0f64..1.0) {
                let stride = 1 + ((window - 1) as f64 * stride_frac) as usize;
                let spans = segment_spans(len, window, stride).unwrap();
                let mut covered = vec![false; len];
                for &(s, e) in &spans {
                    prop_assert!(e > s && e - s <= window && e <= len);
                    for c in &mut covered[s..e] { *c = true; }
                }
                prop_assert!(covered.iter().all(|&c| c));
                let unique: HashSet<_> = spans.iter().collect();
                prop_assert_eq!(unique.len(), spans.len());
            }
        }
    }
}
