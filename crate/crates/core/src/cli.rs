//! The `vote-ensemble` command-line tool.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::aggregation::{
    aggregate, collect_responses, load_questions, load_responses, load_truth, AggregateOptions,
    CollectOptions, Normalizer, RecordStatus,
};
use crate::error::Error;
use crate::estimation::{estimate_profile, write_estimate_csv};
use crate::format::sig12;
use crate::metrics::{compute_metrics, read_metrics_csv, select_threshold, sweep_table, write_sweep_csv};
use crate::outcome::{exact_outcome_distribution, QuestionProfile, TiePolicy, VotingRule};
use crate::simulator::{
    convergence_study, simulate_with, write_convergence_csv, BewilderedMode, SimulationOptions,
};
use crate::ThresholdChoice;

#[derive(Debug, Parser)]
#[command(
    name = "vote-ensemble",
    version,
    about = "Threshold voting ensembles that may abstain",
    args_override_self = true
)]
struct Cli {
    /// key = value file supplying flag defaults; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads for simulate and collect (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Exact outcome probabilities and metrics for one (n, k).
    Exact {
        #[command(flatten)]
        profile: ProfileArgs,
        #[command(flatten)]
        rule: RuleArgs,
        /// Decimals printed.
        #[arg(long, default_value_t = 6)]
        precision: usize,
    },
    /// Metrics CSV for every k from 1 to n.
    Sweep {
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the outcome distribution.
    Simulate {
        #[command(flatten)]
        profile: ProfileArgs,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long)]
        seed: u64,
        /// no-consensus, random or extend.
        #[arg(long, default_value_t = TiePolicy::NoConsensusOnTie)]
        tie_policy: TiePolicy,
        /// Draw residual answers from this many labels instead of unique ones.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        pool: Option<u64>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Outcome distribution at k = 1 over growing ensembles.
    Converge {
        #[command(flatten)]
        profile: ProfileArgs,
        /// Comma-separated ascending ensemble sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Per-question parameter estimates from recorded answers.
    Estimate {
        #[arg(long, value_name = "PATH")]
        responses: PathBuf,
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
        #[arg(long, default_value_t = Normalizer::Integer)]
        normalizer: Normalizer,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Threshold-vote recorded answers.
    Aggregate {
        #[arg(long, value_name = "PATH")]
        responses: PathBuf,
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        /// no-consensus or random.
        #[arg(long, default_value_t = TiePolicy::NoConsensusOnTie)]
        tie_policy: TiePolicy,
        /// Required with the random tie policy.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = Normalizer::Integer)]
        normalizer: Normalizer,
        /// Per-question decisions (JSONL); standard output if omitted.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
        /// Measured metrics CSV for every k.
        #[arg(long, value_name = "PATH")]
        metrics: Option<PathBuf>,
    },
    /// Highest-yield threshold whose trust meets a target.
    SelectK {
        /// Metrics CSV written by sweep or aggregate.
        #[arg(long, value_name = "PATH")]
        sweep: PathBuf,
        #[arg(long, value_parser = probability)]
        trust_target: f64,
    },
    /// Query an external agent command and record its answers.
    Collect {
        /// Command template; must contain {prompt}. {question_id} and
        /// {replicate} are also substituted.
        #[arg(long, value_name = "TEMPLATE")]
        command: String,
        /// JSONL of {"question_id", "prompt"} objects.
        #[arg(long, value_name = "PATH")]
        questions: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        replicates: u64,
        /// Seconds allowed per call.
        #[arg(long, default_value_t = 60.0, value_parser = positive_seconds)]
        timeout: f64,
        #[arg(long, default_value_t = Normalizer::Integer)]
        normalizer: Normalizer,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ProfileArgs {
    /// Probability of the specious answer.
    #[arg(long, value_parser = probability)]
    delta: f64,
    /// Probability of a scattered wrong answer.
    #[arg(long, value_parser = probability)]
    eta: f64,
}

impl ProfileArgs {
    fn profile(&self) -> Result<QuestionProfile, Failure> {
        Ok(QuestionProfile::new(self.delta, self.eta)?)
    }
}

#[derive(Debug, Args)]
struct RuleArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
}

impl RuleArgs {
    fn rule(&self) -> Result<VotingRule, Failure> {
        VotingRule::new(self.n as usize, self.k as usize).map_err(|e| Failure::Usage(e.to_string()))
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{x} is outside [0, 1]"))
    }
}

fn positive_seconds(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(format!("`{s}` is not a positive number of seconds")),
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

/// Runs the tool on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on a data or runtime error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match splice_config(argv) {
        Ok(argv) => argv,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            return 2;
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Inserts `--key value` pairs from the `--config` file right after the
/// subcommand, so flags given on the command line override them.
fn splice_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut config = None;
    let mut subcommand = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy();
        if arg == "--config" || arg == "--jobs" {
            if arg == "--config" {
                config = argv.get(i + 1).map(PathBuf::from);
            }
            i += 2;
            continue;
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else if !arg.starts_with('-') && subcommand.is_none() {
            subcommand = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(at)) = (config, subcommand) else {
        return Ok(argv);
    };
    let name = argv[at].to_string_lossy().into_owned();
    let root = Cli::command();
    let Some(sub) = root.find_subcommand(&name) else {
        return Ok(argv);
    };
    let accepted: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let known_anywhere = |key: &str| {
        root.get_subcommands()
            .flat_map(|s| s.get_arguments())
            .any(|a| a.get_long() == Some(key))
    };

    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
    let mut extra = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Failure::Usage(format!("{}: line {}: {msg}", path.display(), idx + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if accepted.contains(&key) {
            extra.push(OsString::from(format!("--{key}")));
            extra.push(OsString::from(value));
        } else if !known_anywhere(&key) {
            return Err(bad(&format!("unknown key `{key}`")));
        }
    }
    argv.splice(at + 1..at + 1, extra);
    Ok(argv)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::io(format!("creating {}", p.display()), e))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Exact {
            profile,
            rule,
            precision,
        } => {
            let profile = profile.profile()?;
            let rule = rule.rule()?;
            let dist = exact_outcome_distribution(&profile, &rule);
            let m = compute_metrics(&dist, &rule);
            let p = precision;
            println!("p_c={:.p$} p_i={:.p$} p_nc={:.p$}", dist.p_c, dist.p_i, dist.p_nc);
            let trust = m
                .trust
                .map_or_else(|| "undefined".to_string(), |t| format!("{t:.p$}"));
            println!("accuracy={:.p$} trust={trust} yield={:.p$}", m.accuracy, m.yield_rate);
        }
        Cmd::Sweep { profile, n, out } => {
            let profile = profile.profile()?;
            let rows = sweep_table(&profile, n as usize)?;
            write_sweep_csv(output(out.as_deref())?, &profile, &rows)?;
        }
        Cmd::Simulate {
            profile,
            rule,
            trials,
            seed,
            tie_policy,
            pool,
            out,
        } => {
            let profile = profile.profile()?;
            let rule = rule.rule()?.with_tie_policy(tie_policy);
            set_jobs(cli.jobs);
            let mode = pool.map_or(BewilderedMode::Unique, BewilderedMode::FinitePool);
            let result = simulate_with(&profile, &rule, &SimulationOptions { trials, seed, mode })?;
            let mut w = csv::Writer::from_writer(output(out.as_deref())?);
            w.write_record([
                "n", "k", "delta", "eta", "tie_policy", "trials", "seed", "p_c", "p_i", "p_nc",
                "se_p_c", "se_p_i", "se_p_nc",
            ])
            .map_err(Error::from)?;
            let e = &result.empirical;
            let se = &result.standard_errors;
            w.write_record([
                rule.n().to_string(),
                rule.k().to_string(),
                sig12(profile.delta()),
                sig12(profile.eta()),
                tie_policy.to_string(),
                trials.to_string(),
                seed.to_string(),
                sig12(e.p_c),
                sig12(e.p_i),
                sig12(e.p_nc),
                sig12(se[0]),
                sig12(se[1]),
                sig12(se[2]),
            ])
            .map_err(Error::from)?;
            w.flush().map_err(|e| Error::io("writing simulation csv", e))?;
        }
        Cmd::Converge {
            profile,
            sizes,
            out,
        } => {
            let profile = profile.profile()?;
            let points = convergence_study(&profile, &sizes).map_err(|e| Failure::Usage(e.to_string()))?;
            write_convergence_csv(output(out.as_deref())?, &profile, &points)?;
        }
        Cmd::Estimate {
            responses,
            truth,
            normalizer,
            out,
        } => {
            let set = load_responses(&responses, normalizer)?;
            let truth = load_truth(&truth, normalizer)?;
            let mut rows = Vec::new();
            for (question, answers) in set.answers_by_question() {
                let t = truth.get(question).ok_or_else(|| {
                    Error::InvalidArgument(format!("no ground truth for question `{question}`"))
                })?;
                if answers.is_empty() {
                    eprintln!("warning: question `{question}` has no parseable answers; skipped");
                    continue;
                }
                rows.push((question.to_string(), estimate_profile(&answers, t)?));
            }
            write_estimate_csv(output(out.as_deref())?, &rows)?;
        }
        Cmd::Aggregate {
            responses,
            truth,
            k,
            tie_policy,
            seed,
            normalizer,
            report,
            metrics,
        } => {
            let seed = match (tie_policy, seed) {
                (TiePolicy::ExtendUntilBroken, _) => {
                    return Err(Failure::Usage(
                        "--tie-policy extend needs live agents; use no-consensus or random".into(),
                    ))
                }
                (TiePolicy::RandomAmongTied, None) => {
                    return Err(Failure::Usage("--tie-policy random requires --seed".into()))
                }
                (_, seed) => seed.unwrap_or(0),
            };
            let set = load_responses(&responses, normalizer)?;
            let truth = truth.map(|p| load_truth(&p, normalizer)).transpose()?;
            let options = AggregateOptions {
                k: k as usize,
                tie_policy,
                seed,
            };
            let r = aggregate(&set, truth.as_ref(), &options)?;
            r.write_decisions_jsonl(output(report.as_deref())?)?;
            if let Some(path) = metrics {
                r.write_metrics_csv(output(Some(&path))?)?;
            }
            let opt = |x: Option<f64>| x.map_or_else(|| "undefined".to_string(), sig12);
            eprintln!(
                "questions={} records={} tallied={} unparseable={} failed={} k={} yield={} trust={} accuracy={}",
                r.question_count,
                r.total_records,
                r.tallied_count,
                r.unparseable_count,
                r.failed_count,
                k,
                sig12(r.at_k.yield_rate()),
                opt(r.at_k.trust()),
                opt(r.at_k.accuracy()),
            );
            if r.mixed_n {
                eprintln!("warning: questions have differing numbers of parseable answers");
            }
        }
        Cmd::SelectK {
            sweep,
            trust_target,
        } => {
            let file = File::open(&sweep).map_err(|e| Error::io(format!("opening {}", sweep.display()), e))?;
            let rows = read_metrics_csv(file)?;
            match select_threshold(&rows, trust_target)? {
                ThresholdChoice::Threshold(k) => {
                    let row = rows.iter().find(|r| r.k == k).expect("chosen row");
                    let trust = row.trust.expect("feasible rows have trust");
                    println!("k={k} trust={} yield={}", sig12(trust), sig12(row.yield_rate));
                }
                ThresholdChoice::NoFeasibleThreshold => println!("k=none"),
            }
        }
        Cmd::Collect {
            command,
            questions,
            replicates,
            timeout,
            normalizer,
            out,
        } => {
            let questions = load_questions(&questions)?;
            let options = CollectOptions {
                replicates,
                timeout: Duration::from_secs_f64(timeout),
                jobs: cli.jobs,
                normalizer,
            };
            let set = collect_responses(&command, &questions, &options)?;
            set.write_jsonl(output(out.as_deref())?)?;
            let count = |s| set.records().iter().filter(|r| r.status() == s).count();
            let failed = count(RecordStatus::Failed);
            eprintln!(
                "records={} parsed={} unparseable={} failed={}",
                set.len(),
                count(RecordStatus::Parsed),
                count(RecordStatus::Unparseable),
                failed
            );
            if failed > 0 {
                eprintln!("warning: {failed} agent calls failed");
            }
        }
    }
    Ok(())
}

fn set_jobs(jobs: usize) {
    // Only the first configuration of the global pool takes effect.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
}
