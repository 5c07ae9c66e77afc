use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{Normalizer, ResponseRecord, ResponseSet};
use crate::error::{Error, Result};

/// Placeholder replaced by the prompt text in the command template.
pub const PROMPT_PLACEHOLDER: &str = "{prompt}";
const QUESTION_PLACEHOLDER: &str = "{question_id}";
const REPLICATE_PLACEHOLDER: &str = "{replicate}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy)]
pub struct CollectOptions {
    pub replicates: u64,
    pub timeout: Duration,
    /// Concurrent calls; 0 uses one per core.
    pub jobs: usize,
    pub normalizer: Normalizer,
}

/// Reads `{"question_id": .., "prompt": ..}` lines.
pub fn load_questions(path: &Path) -> Result<Vec<Question>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_questions(file, path)
}

pub fn read_questions<R: Read>(input: R, source: &Path) -> Result<Vec<Question>> {
    let mut questions = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", source.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        questions.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(questions)
}

/// Runs the agent command once per question and replicate.
///
/// The template is split into words shell-style. `{prompt}`, `{question_id}`
/// and `{replicate}` are substituted in every word, and the prompt is also
/// written to the command's standard input. Standard output becomes the raw
/// answer. Calls that time out or exit nonzero are kept as failed records.
/// Records come back in question order, then replicate order, however many
/// calls run at once.
pub fn collect_responses(
    template: &str,
    questions: &[Question],
    options: &CollectOptions,
) -> Result<ResponseSet> {
    if options.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be at least 1".into()));
    }
    if !template.contains(PROMPT_PLACEHOLDER) {
        return Err(Error::InvalidArgument(format!(
            "agent command must contain the {PROMPT_PLACEHOLDER} placeholder"
        )));
    }
    let words = shell_words::split(template)
        .map_err(|e| Error::InvalidArgument(format!("agent command: {e}")))?;
    let program = words
        .first()
        .ok_or_else(|| Error::InvalidArgument("agent command is empty".into()))?;
    which::which(program).map_err(|e| Error::NotExecutable(format!("{program}: {e}")))?;

    let calls: Vec<(&Question, u64)> = questions
        .iter()
        .flat_map(|q| (0..options.replicates).map(move |r| (q, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let records = pool.install(|| {
        calls
            .par_iter()
            .map(|&(q, replicate)| {
                let argv: Vec<String> = words
                    .iter()
                    .map(|w| {
                        w.replace(QUESTION_PLACEHOLDER, &q.question_id)
                            .replace(REPLICATE_PLACEHOLDER, &replicate.to_string())
                            .replace(PROMPT_PLACEHOLDER, &q.prompt)
                    })
                    .collect();
                let (raw, failure) = match call(&argv, &q.prompt, options.timeout) {
                    Ok(raw) => (raw, None),
                    Err((raw, failure)) => (raw, Some(failure)),
                };
                ResponseRecord {
                    question_id: q.question_id.clone(),
                    replicate,
                    raw,
                    answer: None,
                    failure,
                }
            })
            .collect::<Vec<_>>()
    });
    ResponseSet::new(records, options.normalizer)
}

/// Standard output on success; partial output and a failure note otherwise.
fn call(argv: &[String], prompt: &str, timeout: Duration) -> std::result::Result<String, (String, String)> {
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| (String::new(), format!("spawn failed: {e}")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let prompt = prompt.to_string();
    // Broken pipes are fine: the command may ignore its input.
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(prompt.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    });

    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            // The reader may be held open by grandchildren; leave it behind.
            return Err((String::new(), format!("timeout after {:.3}s", timeout.as_secs_f64())));
        }
        Err(e) => return Err((String::new(), format!("wait failed: {e}"))),
    };
    let _ = writer.join();
    let raw = reader.join().unwrap_or_default();
    if status.success() {
        Ok(raw)
    } else {
        Err((raw, status.to_string()))
    }
}
