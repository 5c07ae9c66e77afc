use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Normalizer;
use crate::error::{Error, Result};

/// One recorded agent answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub question_id: String,
    pub replicate: u64,
    pub raw: String,
    /// Canonical answer; `None` when the raw text is unparseable or the call
    /// failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// Why the agent call produced no usable output, if it failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Where a record ended up when tallying.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Parsed,
    Unparseable,
    Failed,
}

impl ResponseRecord {
    pub fn status(&self) -> RecordStatus {
        match (&self.failure, &self.answer) {
            (Some(_), _) => RecordStatus::Failed,
            (None, Some(_)) => RecordStatus::Parsed,
            (None, None) => RecordStatus::Unparseable,
        }
    }
}

/// Recorded answers, all normalized the same way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSet {
    records: Vec<ResponseRecord>,
    normalizer: Normalizer,
}

impl ResponseSet {
    /// Normalizes every record with `normalizer`. Precomputed answers are
    /// normalized again, which leaves canonical answers untouched.
    pub fn new(records: Vec<ResponseRecord>, normalizer: Normalizer) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert((r.question_id.as_str(), r.replicate)) {
                return Err(Error::DuplicateRecord {
                    question_id: r.question_id.clone(),
                    replicate: r.replicate,
                });
            }
        }
        let records = records
            .into_iter()
            .map(|mut r| {
                r.answer = if r.failure.is_some() {
                    None
                } else {
                    normalizer.apply(r.answer.as_deref().unwrap_or(&r.raw))
                };
                r
            })
            .collect();
        Ok(Self {
            records,
            normalizer,
        })
    }

    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    pub fn normalizer_id(&self) -> &'static str {
        self.normalizer.id()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records grouped by question, questions in lexicographic order and
    /// records in replicate order.
    pub fn by_question(&self) -> BTreeMap<&str, Vec<&ResponseRecord>> {
        let mut groups: BTreeMap<&str, Vec<&ResponseRecord>> = BTreeMap::new();
        for r in &self.records {
            groups.entry(&r.question_id).or_default().push(r);
        }
        for group in groups.values_mut() {
            group.sort_by_key(|r| r.replicate);
        }
        groups
    }

    /// Parseable answers per question.
    pub fn answers_by_question(&self) -> BTreeMap<&str, Vec<&str>> {
        self.by_question()
            .into_iter()
            .map(|(q, rs)| (q, rs.iter().filter_map(|r| r.answer.as_deref()).collect()))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::io("writing responses", e))?;
        }
        out.flush().map_err(|e| Error::io("writing responses", e))
    }
}

/// Reads response JSONL from `path`; see [`read_responses`].
pub fn load_responses(path: &Path, normalizer: Normalizer) -> Result<ResponseSet> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_responses(file, path, normalizer)
}

/// Parses one JSON object per line. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn read_responses<R: Read>(input: R, source: &Path, normalizer: Normalizer) -> Result<ResponseSet> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", source.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ResponseRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    ResponseSet::new(records, normalizer)
}

/// Correct canonical answer per question.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    answers: BTreeMap<String, String>,
}

impl GroundTruth {
    /// Normalizes each truth with `normalizer`; truths that do not normalize
    /// are rejected.
    pub fn new<I, Q, A>(pairs: I, normalizer: Normalizer) -> Result<Self>
    where
        I: IntoIterator<Item = (Q, A)>,
        Q: Into<String>,
        A: AsRef<str>,
    {
        let mut answers = BTreeMap::new();
        for (q, a) in pairs {
            let q = q.into();
            let canonical = normalizer.apply(a.as_ref()).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "truth `{}` for question `{q}` is not a valid {normalizer} answer",
                    a.as_ref()
                ))
            })?;
            if answers.insert(q.clone(), canonical).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate truth for question `{q}`")));
            }
        }
        Ok(Self { answers })
    }

    pub fn get(&self, question_id: &str) -> Option<&str> {
        self.answers.get(question_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

pub fn load_truth(path: &Path, normalizer: Normalizer) -> Result<GroundTruth> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_truth(file, path, normalizer)
}

/// Reads a `question_id,truth` CSV.
pub fn read_truth<R: Read>(input: R, source: &Path, normalizer: Normalizer) -> Result<GroundTruth> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["question_id", "truth"] {
        return Err(Error::Parse {
            path: source.to_path_buf(),
            line: 1,
            message: "expected header `question_id,truth`".into(),
        });
    }
    let mut pairs = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: idx + 2,
            message: e.to_string(),
        })?;
        pairs.push((record[0].to_string(), record[1].to_string()));
    }
    GroundTruth::new(pairs, normalizer)
}
