//! `dap`: prepare corpora, train, evaluate, sample and report.
//!
//! Exit codes: 0 success, 1 input error, 2 training stopped at the
//! iteration limit without converging, 3 numerical failure.

mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use dap_core::alpha::Penalty;
use dap_core::checkpoint::Checkpoint;
use dap_core::corpus::{
    default_stopwords, parse_stopwords, prepare, read_corpus, read_raw_jsonl, split_train_test, write_corpus, Corpus,
    PrepareConfig,
};
use dap_core::eval::heldout_pwll_by_author;
use dap_core::model::Hyperparams;
use dap_core::report::persona_report;
use dap_core::sampler::{sample_corpus, SampleShape};
use dap_core::train::{train_with_observer, with_threads, TraceRecord, TrainConfig};
use dap_core::DapError;
use ndarray::Array2;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "dap", version, about = "Dynamic author-persona topic model", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn raw JSONL journals into a corpus file.
    Prepare(PrepareArgs),
    /// Split a corpus into train and test files, per author.
    Split(SplitArgs),
    /// Fit the model and write a checkpoint and a trace.
    Train(TrainArgs),
    /// Held-out per-word log-likelihood of a test corpus.
    Eval(EvalArgs),
    /// Draw a synthetic corpus from the generative process.
    Sample(SampleArgs),
    /// Persona concentration, top topics over time and distinctness.
    Report(ReportArgs),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Prepare(a) => &a.common,
            Command::Split(a) => &a.common,
            Command::Train(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::Sample(a) => &a.common,
            Command::Report(a) => &a.common,
        }
    }
}

#[derive(Args, Debug)]
struct Common {
    /// Flat key = value file; flags on the command line take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// Raw JSONL: one {"author_id", "timestamp" (days), "text" | "tokens"} per line.
    raw: PathBuf,
    #[arg(long, default_value = "corpus.txt")]
    out: PathBuf,
    /// Drop documents with fewer in-vocabulary tokens.
    #[arg(long, default_value_t = 10)]
    min_words: u32,
    /// Keep at most this many terms, by document frequency.
    #[arg(long, default_value_t = 5000)]
    vocab_cap: usize,
    /// Drop terms found in more than this fraction of documents.
    #[arg(long, default_value_t = 0.9)]
    max_doc_frac: f64,
    /// Length of one time step in days.
    #[arg(long, default_value_t = 7.0)]
    period_days: f64,
    /// Stopword file (one per line); replaces the built-in list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Elapsed time per step, comma separated; uniform 1 by default.
    #[arg(long, value_delimiter = ',')]
    delta_schedule: Option<Vec<f64>>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SplitArgs {
    corpus: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    test_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "train.txt")]
    train_out: PathBuf,
    #[arg(long, default_value = "test.txt")]
    test_out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct HyperArgs {
    /// Number of topics K.
    #[arg(long, default_value_t = 25)]
    topics: usize,
    /// Number of personas P.
    #[arg(long, default_value_t = 15)]
    personas: usize,
    /// Weight of the persona overlap penalty.
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    /// Brownian process noise per unit of elapsed time.
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    measurement_noise: f64,
    /// Topic-word smoothing.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Symmetric author-persona prior.
    #[arg(long, default_value_t = 0.1)]
    omega: f64,
    /// Prior mean of every trajectory coordinate.
    #[arg(long, default_value_t = 0.0)]
    mu0: f64,
    /// Prior variance of the initial persona state.
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
}

impl HyperArgs {
    fn build(&self) -> Result<Hyperparams, Failure> {
        if self.topics == 0 || self.personas == 0 {
            return Err(Failure::input("--topics and --personas must be positive"));
        }
        let mut h = Hyperparams::new(self.topics, self.personas);
        h.rho = self.rho;
        h.process_noise = self.sigma;
        h.measurement_noise = self.measurement_noise;
        h.eta = self.eta;
        h.omega = vec![self.omega; self.personas];
        h.mu0 = vec![self.mu0; self.topics];
        h.sigma0 = self.sigma0;
        h.validate()?;
        Ok(h)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PenaltyArg {
    Completed,
    Pairwise,
}

#[derive(Args, Debug)]
struct TrainArgs {
    corpus: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Relative change of the objective that counts as converged.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// E-step workers; 0 uses every core.
    #[arg(long, env = "DAP_THREADS", default_value_t = 1)]
    threads: usize,
    /// Independent fits from consecutive seeds; the best objective wins.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, value_enum, default_value_t = PenaltyArg::Completed)]
    penalty: PenaltyArg,
    #[arg(long, default_value_t = 0.01)]
    init_jitter: f64,
    /// A persona counts as observed at a step when its τ mass exceeds this.
    #[arg(long, default_value_t = 1.0)]
    observe_threshold: f64,
    /// Also write the checkpoint every this many iterations (0 = never).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Start every document from scratch in each E-step.
    #[arg(long)]
    no_warm_start: bool,
    /// Accept every trajectory update even if it lowers the objective.
    #[arg(long)]
    no_safeguard: bool,
    /// Leave the topic mean of the trajectories free.
    #[arg(long)]
    no_center: bool,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Per-iteration trace, one JSON object per line.
    #[arg(long, default_value = "trace.jsonl")]
    trace: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EvalArgs {
    checkpoint: PathBuf,
    test: PathBuf,
    #[arg(long, default_value = "eval.json")]
    out: PathBuf,
    /// Per-step `t,pwll,sd` table.
    #[arg(long, default_value = "eval_per_time.csv")]
    per_time_csv: PathBuf,
    #[arg(long, env = "DAP_THREADS", default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long, default_value_t = 60)]
    authors: usize,
    #[arg(long, default_value_t = 1)]
    docs_per_author: usize,
    #[arg(long, default_value_t = 40)]
    doc_length: usize,
    #[arg(long, default_value_t = 200)]
    vocab_size: usize,
    /// Start persona p at this value on topic p (mod K) and μ₀ elsewhere,
    /// instead of drawing the initial state.
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "corpus.txt")]
    out: PathBuf,
    /// Latent draws and generating parameters.
    #[arg(long, default_value = "truth.json")]
    truth: PathBuf,
    /// Also write the documents as raw JSONL (tokens, weekly timestamps).
    #[arg(long)]
    raw: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ReportArgs {
    checkpoint: PathBuf,
    #[arg(long, default_value = "persona_report.json")]
    out: PathBuf,
    /// `persona,t,rank,topic,mass` table of the top topics.
    #[arg(long, default_value = "trajectories.csv")]
    trajectory_csv: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<DapError> for Failure {
    fn from(e: DapError) -> Self {
        Self { code: if e.is_numerical() { 3 } else { 1 }, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::input(e.to_string())
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn parse(argv: &[String]) -> Result<Cli, Failure> {
    let matches = Cli::command().try_get_matches_from(argv).map_err(clap_failure)?;
    Cli::from_arg_matches(&matches).map_err(clap_failure)
}

fn clap_failure(e: clap::Error) -> Failure {
    use clap::error::ErrorKind::*;
    match e.kind() {
        DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = e.print();
            Failure { code: 0, message: String::new() }
        }
        _ => Failure::input(e.render().to_string().trim_start_matches("error: ").trim_end()),
    }
}

/// Parse twice when `--config` is present: file values go right after the
/// subcommand name, ahead of the user's flags.
fn parse_with_config(argv: Vec<String>) -> Result<Cli, Failure> {
    let cli = parse(&argv)?;
    let Some(path) = cli.command.common().config.clone() else { return Ok(cli) };
    let text = fs::read_to_string(&path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let entries = config::parse(&text).map_err(Failure::input)?;
    let root = Cli::command();
    let name = argv
        .iter()
        .skip(1)
        .find(|a| root.find_subcommand(a.as_str()).is_some())
        .ok_or_else(|| Failure::input("missing subcommand"))?;
    let sub = root.find_subcommand(name.as_str()).expect("known subcommand");
    let extra = config::to_args(&entries, sub).map_err(Failure::input)?;
    let at = argv.iter().position(|a| a == name).expect("present") + 1;
    let mut merged = argv[..at].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[at..]);
    parse(&merged)
}

fn run(argv: Vec<String>) -> Result<u8, Failure> {
    let cli = match parse_with_config(argv) {
        Ok(c) => c,
        Err(f) if f.code == 0 => return Ok(0),
        Err(f) => return Err(f),
    };
    let level = match cli.command.common().verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_corpus(path: &Path) -> Result<Corpus, Failure> {
    let f = File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    read_corpus(BufReader::new(f)).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus(corpus, &mut w)?;
    w.flush()?;
    Ok(())
}

fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn totals(c: &Corpus) -> String {
    format!("V={} T={} A={} D={} tokens={}", c.vocab_size(), c.num_steps(), c.num_authors(), c.num_docs(), c.total_tokens())
}

fn cmd_prepare(a: PrepareArgs) -> Result<u8, Failure> {
    let f = File::open(&a.raw).map_err(|e| Failure::input(format!("{}: {e}", a.raw.display())))?;
    let raw = read_raw_jsonl(BufReader::new(f)).map_err(|e| Failure::input(format!("{}: {e}", a.raw.display())))?;
    let stopwords = match &a.stopwords {
        Some(p) => parse_stopwords(&fs::read_to_string(p)?),
        None => default_stopwords(),
    };
    let config = PrepareConfig {
        min_words: a.min_words,
        vocab_cap: a.vocab_cap,
        max_doc_frac: a.max_doc_frac,
        period_days: a.period_days,
        stopwords,
        delta_schedule: a.delta_schedule,
    };
    let corpus = prepare(&raw, &config)?;
    save_corpus(&corpus, &a.out)?;
    println!("{}", totals(&corpus));
    Ok(0)
}

fn cmd_split(a: SplitArgs) -> Result<u8, Failure> {
    let corpus = load_corpus(&a.corpus)?;
    let (train, test) = split_train_test(&corpus, a.test_frac, a.seed)?;
    save_corpus(&train, &a.train_out)?;
    save_corpus(&test, &a.test_out)?;
    println!("train {}", totals(&train));
    println!("test {}", totals(&test));
    Ok(0)
}

fn cmd_train(a: TrainArgs) -> Result<u8, Failure> {
    let hyper = a.hyper.build()?;
    let corpus = load_corpus(&a.corpus)?;
    let config = TrainConfig {
        max_em_iters: a.max_iters,
        restarts: a.restarts,
        em_rel_tol: a.tol,
        seed: a.seed,
        threads: a.threads,
        checkpoint_every: a.checkpoint_every,
        checkpoint_path: Some(a.out.clone()),
        init_jitter: a.init_jitter,
        observe_threshold: a.observe_threshold,
        center_alpha_hat: !a.no_center,
        warm_start: !a.no_warm_start,
        safeguard_m_step: !a.no_safeguard,
        penalty: match a.penalty {
            PenaltyArg::Completed => Penalty::Completed,
            PenaltyArg::Pairwise => Penalty::Pairwise,
        },
    };
    let mut trace = BufWriter::new(File::create(&a.trace)?);
    let mut write_error = None;
    let result = train_with_observer(&corpus, &hyper, &config, |r: &TraceRecord| {
        let line = serde_json::to_string(r).expect("plain record");
        if let Err(e) = writeln!(trace, "{line}") {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    trace.flush()?;
    Checkpoint::new(hyper, result.params, &corpus).save(&a.out)?;
    let last = result.trace.last().expect("at least one iteration");
    println!(
        "{} after {} iterations: objective {:.6} elbo {:.6}",
        if result.converged { "converged" } else { "stopped" },
        last.iter,
        last.objective,
        last.elbo
    );
    Ok(if result.converged { 0 } else { 2 })
}

fn cmd_eval(a: EvalArgs) -> Result<u8, Failure> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let test = load_corpus(&a.test)?;
    if test.vocab().terms() != ck.vocab.terms() {
        return Err(Failure::input("test corpus vocabulary differs from the checkpoint's"));
    }
    let report = with_threads(a.threads, || heldout_pwll_by_author(&test, &ck.params, &ck.hyper, &ck.authors))??;
    save_json(&report, &a.out)?;
    fs::write(&a.per_time_csv, report.per_time_csv())?;
    println!("pwll {:.6} perplexity {:.4} docs {} tokens {}", report.pwll, report.perplexity, report.num_docs, report.num_tokens);
    Ok(0)
}

fn cmd_sample(a: SampleArgs) -> Result<u8, Failure> {
    let hyper = a.hyper.build()?;
    let shape = SampleShape::new(a.steps, a.authors, a.docs_per_author, a.doc_length, a.vocab_size);
    let initial = a.separation.map(|s| {
        let (p, k) = (hyper.num_personas, hyper.num_topics);
        Array2::from_shape_fn((p, k), |(pp, kk)| if kk == pp % k { s } else { hyper.mu0[kk] })
    });
    let (corpus, truth) = sample_corpus(&hyper, &shape, a.seed, initial.as_ref())?;
    save_corpus(&corpus, &a.out)?;
    save_json(&truth, &a.truth)?;
    if let Some(path) = &a.raw {
        write_raw(&corpus, shape.docs_per_author_per_step, path)?;
    }
    println!("{}", totals(&corpus));
    Ok(0)
}

#[derive(Serialize)]
struct RawLine<'a> {
    author_id: &'a str,
    timestamp: f64,
    tokens: Vec<&'a str>,
}

/// Steps become weeks; an author's documents within a step are spread
/// evenly over the week.
fn write_raw(corpus: &Corpus, per_step: usize, path: &Path) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut seen = vec![0usize; corpus.num_authors()];
    let mut last_step = 0;
    for doc in corpus.docs() {
        if doc.step != last_step {
            seen.iter_mut().for_each(|s| *s = 0);
            last_step = doc.step;
        }
        let j = seen[doc.author];
        seen[doc.author] += 1;
        let line = RawLine {
            author_id: &corpus.authors()[doc.author],
            timestamp: 7.0 * doc.step as f64 + 7.0 * j as f64 / (per_step + 1) as f64,
            tokens: doc
                .terms
                .iter()
                .flat_map(|&(v, c)| std::iter::repeat_n(corpus.vocab().term(v), c as usize))
                .collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<u8, Failure> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let report = persona_report(&ck.params);
    save_json(&report, &a.out)?;
    fs::write(&a.trajectory_csv, report.trajectory_csv())?;
    println!(
        "concentration {:.3} split2 {:.3} distinct topics {} mean pairwise cosine {:.4}",
        report.concentration, report.split2, report.distinct_topic_count, report.mean_pairwise_cosine
    );
    Ok(0)
}
