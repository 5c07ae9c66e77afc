//! Writes the bundled synthetic domain: 60 questions answered by 15 simulated
//! agents each.
//!
//! ```text
//! cargo run -p vote-ensemble --example synthetic_domain -- crates/core/fixtures/synthetic
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vote_ensemble::aggregation::{Normalizer, ResponseRecord, ResponseSet};
use vote_ensemble::format::sig12;
use vote_ensemble::simulator::{trial_seed, BewilderedMode, ResponseLabel, ResponseSampler};
use vote_ensemble::QuestionProfile;

const SEED: u64 = 20240611;
const QUESTIONS: u64 = 60;
const AGENTS: u64 = 15;

fn main() -> vote_ensemble::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synthetic".into()));
    fs::create_dir_all(&dir).expect("create output directory");

    let mut params = BufWriter::new(File::create(dir.join("params.csv")).expect("params.csv"));
    let mut truth = BufWriter::new(File::create(dir.join("truth.csv")).expect("truth.csv"));
    writeln!(params, "question_id,delta,eta").unwrap();
    writeln!(truth, "question_id,truth").unwrap();

    let mut records = Vec::new();
    for q in 0..QUESTIONS {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(SEED, q));
        // Mostly questions that lean towards the right answer, some that mislead.
        let delta = if q % 6 == 5 { rng.gen_range(0.5..0.8) } else { rng.gen_range(0.0..0.45) };
        let eta = rng.gen_range(0.0..0.5);
        let profile = QuestionProfile::new(delta, eta)?;
        let id = format!("s{q:02}");
        let correct = 100 + 7 * q;
        let specious = correct + 10;
        writeln!(params, "{id},{},{}", sig12(delta), sig12(eta)).unwrap();
        writeln!(truth, "{id},{correct}").unwrap();

        let mut sampler = ResponseSampler::new(&profile, BewilderedMode::Unique)?;
        for replicate in 0..AGENTS {
            let answer = match sampler.sample(&mut rng) {
                ResponseLabel::Correct => correct,
                ResponseLabel::Specious => specious,
                ResponseLabel::Other(r) => 50_000 + r,
            };
            records.push(ResponseRecord {
                question_id: id.clone(),
                replicate,
                raw: answer.to_string(),
                answer: None,
                failure: None,
            });
        }
    }
    let set = ResponseSet::new(records, Normalizer::Integer)?;
    set.write_jsonl(BufWriter::new(File::create(dir.join("responses.jsonl")).expect("responses.jsonl")))?;
    params.flush().unwrap();
    truth.flush().unwrap();
    Ok(())
}
