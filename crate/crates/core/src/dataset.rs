//! Example JSONL records and run metadata sidecars.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Utterance, UtteranceRecord};
use crate::error::{Error, Result};
use crate::negatives::{Example, ExampleKind};

/// On-disk example: `{"id","source_id","kind","score","utterances":[...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleRecord {
    pub id: String,
    pub source_id: String,
    pub kind: ExampleKind,
    pub score: Option<f64>,
    pub utterances: Vec<UtteranceRecord>,
}

impl From<&Example> for ExampleRecord {
    fn from(e: &Example) -> Self {
        ExampleRecord {
            id: e.id.clone(),
            source_id: e.source_id.clone(),
            kind: e.kind,
            score: e.score(),
            utterances: e.utterances.iter().map(UtteranceRecord::from).collect(),
        }
    }
}

impl ExampleRecord {
    pub fn into_example(self, line: usize) -> Result<Example> {
        let mut e = Example::new(
            &self.source_id,
            self.kind,
            self.utterances.into_iter().map(Utterance::from).collect(),
        );
        e.id = self.id;
        e.with_score(self.score)
            .map_err(|_| Error::parse(line, format!("score {:?} outside [0, 1]", self.score)))
    }
}

pub fn parse_example_line(text: &str, line: usize) -> Result<Example> {
    let record: ExampleRecord =
        serde_json::from_str(text).map_err(|e| Error::parse(line, e.to_string()))?;
    record.into_example(line)
}

/// Writes one example as a single JSON line.
pub fn write_example<W: Write>(mut w: W, e: &Example) -> Result<()> {
    serde_json::to_writer(&mut w, &ExampleRecord::from(e))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Streaming reader over example JSONL. Yields `(line number, example)`.
pub struct ExampleReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> ExampleReader<R> {
    pub fn new(reader: R) -> Self {
        ExampleReader {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl ExampleReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self::new(BufReader::new(open(path)?)))
    }
}

impl<R: BufRead> Iterator for ExampleReader<R> {
    type Item = Result<(usize, Example)>;

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
            return Some(parse_example_line(&line, self.line_no).map(|e| (self.line_no, e)));
        }
    }
}

pub fn read_examples<R: BufRead>(reader: R) -> Result<Vec<Example>> {
    ExampleReader::new(reader).map(|r| r.map(|(_, e)| e)).collect()
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn sha256_reader<R: Read>(mut r: R) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    sha256_reader(open(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Sidecar written next to every artifact: the command, its full
/// configuration (including seeds) and digests of inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunMetadata {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunMetadata {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(self)
    }

    pub fn output(mut self, path: &Path) -> Result<Self> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(self)
    }

    pub fn sidecar_path(artifact: &Path) -> PathBuf {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    /// Writes `<artifact>.meta.json`.
    pub fn write_for(&self, artifact: &Path) -> Result<PathBuf> {
        let path = Self::sidecar_path(artifact);
        let mut f = File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
    }
}
