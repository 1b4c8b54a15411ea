//! Command-line front end.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backtest::{self, BacktestConfig, PurchaseLedger};
use crate::baseline::{fit_linear_ar, price_windows};
use crate::conllu::parse_conllu;
use crate::extract::{coverage_stats, extract_records, EventRecord, ExtractionMode};
use crate::ingest::{self, AlignedCorpus, IngestError, Market};
use crate::manifest::{sha256_bytes, sha256_file, InputFile, RunManifest, TOOL, VERSION};
use crate::model::{
    load_checkpoint, save_checkpoint, train, Checkpoint, ModelConfig, ModelParams, TrainConfig,
    TrainError,
};
use crate::plot::{line_chart, Series};
use crate::predictor::{self, Predictor};
use crate::synthetic;
use crate::tensor::{build_days, build_windows, read_windows, write_windows, DayInput, PriceScaler, WindowShape};
use crate::text::normalize;
use crate::tfidf::{pre_purchase_view, rank_tfidf, TfidfRanking, View};
use crate::vocab::{build_vocab, load_embeddings, EmbeddingTable, Vocabulary};
use crate::wordnet::SenseIndex;

pub const CACHE_ENV: &str = "GASFLOW_CACHE";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or unreadable input.
    #[error("{0}")]
    Input(String),
    /// Data that violates an invariant the pipeline relies on.
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Invariant(_) => 1,
        }
    }
}

fn input_err<E: std::fmt::Display>(what: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{what}: {e}"))
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::WeekendInFuture { .. } => CliError::Invariant(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gasflow", version, about = "Headline events and gas price forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse, filter and align headlines with a price series.
    Ingest(IngestArgs),
    /// Extract events from CoNLL-U headlines and report coverage.
    Extract(ExtractArgs),
    /// Train the convolutional price model.
    Train(TrainArgs),
    /// Compare model and baseline errors on the test windows.
    Report(ReportArgs),
    /// Simulate forecast-driven purchasing against equal daily buying.
    Backtest(BacktestArgs),
    /// Rank words by TF-IDF over headlines, events and pre-purchase events.
    Tfidf(TfidfArgs),
    /// Write a synthetic corpus with a planted news signal.
    Synth(SynthArgs),
    /// Replay a command from its manifest.
    Rerun(RerunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Report(_) => "report",
            Command::Backtest(_) => "backtest",
            Command::Tfidf(_) => "tfidf",
            Command::Synth(_) => "synth",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CorpusArgs {
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long)]
    pub headlines: PathBuf,
    #[arg(long, default_value = "gas")]
    pub keyword: String,
    #[arg(long, value_enum, default_value = "future")]
    pub market: Market,
    /// Share of trading days used for training.
    #[arg(long, default_value_t = 0.6)]
    pub split: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EventArgs {
    /// Event records from `extract`.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Text word vectors, `word v1 .. vk` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Embedding dimension; read from the file when omitted.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub conllu: PathBuf,
    #[arg(long)]
    pub wordnet_dir: PathBuf,
    /// WordNet release the database files come from, recorded in the manifest.
    #[arg(long, default_value = "3.0")]
    pub wordnet_version: String,
    /// Mode whose events are written.
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ExtractionMode,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated extents".into());
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| format!("bad extent {p:?}"))?;
    }
    Ok(out)
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub events: EventArgs,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 5)]
    pub h: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub filters: usize,
    /// Kernel extents over day, word and event.
    #[arg(long, value_parser = parse_triple, default_value = "3,3,3")]
    pub kernel: [usize; 3],
    #[arg(long, value_parser = parse_triple, default_value = "2,2,2")]
    pub pool: [usize; 3],
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub decay: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub events: EventArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Ridge penalty for the autoregressive baseline.
    #[arg(long, default_value_t = 1.0)]
    pub ridge: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PredictorKind {
    C3d,
    Persistence,
    LinearAr,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub events: EventArgs,
    #[arg(long, value_enum, default_value = "c3d")]
    pub predictor: PredictorKind,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Window and horizon for baseline predictors.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 5)]
    pub h: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 1200.0)]
    pub total_volume: f64,
    /// Purchasing horizon in trading days; defaults to the whole test period.
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub lookahead: usize,
    #[arg(long)]
    pub force_final: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TfidfArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub events: PathBuf,
    /// Ledger CSV from `backtest`, for the pre-purchase view.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub top_n: usize,
    /// Trading days before each purchase.
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 250)]
    pub days: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Inputs read during a run, for the manifest.
#[derive(Default)]
struct Inputs(Vec<InputFile>);

impl Inputs {
    fn add(&mut self, role: &str, path: &Path) -> Result<PathBuf, CliError> {
        let sha256 = sha256_file(path).map_err(input_err(path.display()))?;
        if !self.0.iter().any(|i| i.path == path) {
            self.0.push(InputFile {
                role: role.to_string(),
                path: path.to_path_buf(),
                sha256,
            });
        }
        Ok(path.to_path_buf())
    }
}

fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(input_err(dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(input_err(path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(input_err(path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(input_err(path.display()))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

/// Cache directory: `$GASFLOW_CACHE`, else `<out-dir>/.cache`.
pub fn cache_dir(out_dir: &Path) -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| out_dir.join(".cache"))
}

/// Exclusive lock on the cache directory, released on drop.
struct CacheLock(File);

impl CacheLock {
    fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(".lock");
        let f = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        f.lock().map_err(io_err(&path))?;
        Ok(CacheLock(f))
    }
}

impl Drop for CacheLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

fn cache_get(dir: &Path, name: &str) -> Option<Vec<u8>> {
    let _lock = CacheLock::acquire(dir).ok()?;
    fs::read(dir.join(name)).ok()
}

fn cache_put(dir: &Path, name: &str, bytes: &[u8]) {
    let Ok(_lock) = CacheLock::acquire(dir) else {
        log::warn!("cache directory {} unavailable", dir.display());
        return;
    };
    let tmp = dir.join(format!("{name}.tmp"));
    if fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, dir.join(name))).is_err() {
        log::warn!("could not write cache entry {name}");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: usize,
    pub record_errors: Vec<String>,
    pub kept_by_keyword: usize,
    pub dropped_non_trading: usize,
    pub trading_days: usize,
    pub train_days: usize,
    pub test_days: usize,
}

impl IngestSummary {
    fn to_text(&self) -> String {
        let mut s = format!(
            "records = {}\nrecord_errors = {}\nkept_by_keyword = {}\ndropped_non_trading = {}\n\
             trading_days = {}\ntrain_days = {}\ntest_days = {}\n",
            self.records,
            self.record_errors.len(),
            self.kept_by_keyword,
            self.dropped_non_trading,
            self.trading_days,
            self.train_days,
            self.test_days
        );
        for e in &self.record_errors {
            s.push_str(&format!("error: {e}\n"));
        }
        s
    }
}

#[derive(Serialize, Deserialize)]
struct CachedCorpus {
    corpus: AlignedCorpus,
    summary: IngestSummary,
}

/// Aligned corpus with its split, from the cache when the same inputs and
/// settings were ingested before.
fn load_corpus(
    args: &CorpusArgs,
    out_dir: &Path,
    inputs: &mut Inputs,
) -> Result<(AlignedCorpus, IngestSummary), CliError> {
    inputs.add("prices", &args.prices)?;
    inputs.add("headlines", &args.headlines)?;
    let key_src = format!(
        "{}|{}|{}|{:?}|{}",
        sha256_file(&args.prices).map_err(io_err(&args.prices))?,
        sha256_file(&args.headlines).map_err(io_err(&args.headlines))?,
        args.keyword,
        args.market,
        args.split
    );
    let name = format!("corpus-{}.json", &sha256_bytes(key_src.as_bytes())[..16]);
    let dir = cache_dir(out_dir);
    if let Some(bytes) = cache_get(&dir, &name) {
        if let Ok(c) = serde_json::from_slice::<CachedCorpus>(&bytes) {
            log::info!("corpus loaded from cache {}", dir.join(&name).display());
            return Ok((c.corpus, c.summary));
        }
    }
    let prices = ingest::parse_prices(open(&args.prices)?, args.market)?;
    let parsed = ingest::parse_headlines(open(&args.headlines)?)?;
    for e in &parsed.errors {
        log::warn!("{}: {e}", args.headlines.display());
    }
    let kept = ingest::keyword_filter(&parsed.records, &args.keyword)?;
    let corpus = ingest::align(&prices, &kept).with_split(args.split)?;
    let split = corpus.split.unwrap_or(0);
    let summary = IngestSummary {
        records: parsed.records.len(),
        record_errors: parsed.errors.iter().map(|e| e.to_string()).collect(),
        kept_by_keyword: kept.len(),
        dropped_non_trading: corpus.dropped,
        trading_days: corpus.len(),
        train_days: split,
        test_days: corpus.len() - split,
    };
    let cached = CachedCorpus { corpus, summary };
    if let Ok(bytes) = serde_json::to_vec(&cached) {
        cache_put(&dir, &name, &bytes);
    }
    Ok((cached.corpus, cached.summary))
}

fn read_events(path: &Path) -> Result<HashMap<String, Vec<String>>, CliError> {
    let mut out: HashMap<String, Vec<String>> = HashMap::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.entry(rec.headline_id).or_default().push(rec.span_text);
    }
    Ok(out)
}

/// Dimension of a text embedding file, from its header or first row.
fn embedding_dim(path: &Path) -> Result<usize, CliError> {
    let mut lines = open(path)?.lines();
    let first = loop {
        match lines.next() {
            Some(l) => {
                let l = l.map_err(io_err(path))?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
            None => return Err(CliError::Input(format!("{}: empty embedding file", path.display()))),
        }
    };
    let fields: Vec<&str> = first.split_whitespace().collect();
    if fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
        return Ok(fields[1].parse().unwrap());
    }
    Ok(fields.len() - 1)
}

/// Days with their normalized events, and the vocabulary documents from the
/// training days (one per headline that has events).
struct Prepared {
    corpus: AlignedCorpus,
    split: usize,
    days: Vec<DayInput>,
}

impl Prepared {
    fn load(
        corpus: AlignedCorpus,
        events: &HashMap<String, Vec<String>>,
    ) -> Self {
        let split = corpus.split.unwrap_or(corpus.len());
        let days = corpus
            .days
            .iter()
            .map(|d| DayInput {
                date: d.date,
                price: d.price,
                events: d
                    .headlines
                    .iter()
                    .flat_map(|h| events.get(&h.id).into_iter().flatten())
                    .map(|t| normalize(t))
                    .collect(),
            })
            .collect();
        Prepared { corpus, split, days }
    }

    fn vocab_documents(&self, events: &HashMap<String, Vec<String>>) -> Vec<Vec<String>> {
        self.corpus.days[..self.split]
            .iter()
            .flat_map(|d| d.headlines.iter())
            .filter_map(|h| events.get(&h.id))
            .filter(|ev| !ev.is_empty())
            .map(|ev| ev.iter().flat_map(|t| normalize(t)).collect())
            .collect()
    }

    fn train_prices(&self) -> Vec<f64> {
        self.days[..self.split].iter().map(|d| d.price).collect()
    }
}

struct Lexicon {
    vocab: Vocabulary,
    table: EmbeddingTable,
}

fn load_lexicon(
    args: &EventArgs,
    prepared: &Prepared,
    events: &HashMap<String, Vec<String>>,
    inputs: &mut Inputs,
) -> Result<Lexicon, CliError> {
    let emb = args
        .embeddings
        .as_deref()
        .ok_or_else(|| CliError::Input("--embeddings is required".into()))?;
    inputs.add("embeddings", emb)?;
    let vocab = build_vocab(&prepared.vocab_documents(events)).map_err(input_err("vocabulary"))?;
    let k = match args.k {
        Some(k) => k,
        None => embedding_dim(emb)?,
    };
    let table = load_embeddings(open(emb)?, k, Some(&vocab)).map_err(input_err(emb.display()))?;
    if table.is_empty() {
        log::warn!("no vocabulary word has an embedding; all cells are OOV");
    }
    Ok(Lexicon { vocab, table })
}

fn required_events(args: &EventArgs, inputs: &mut Inputs) -> Result<HashMap<String, Vec<String>>, CliError> {
    let path = args
        .events
        .as_deref()
        .ok_or_else(|| CliError::Input("--events is required".into()))?;
    inputs.add("events", path)?;
    read_events(path)
}

struct Outcome {
    inputs: Inputs,
    config: serde_json::Value,
    out_dir: PathBuf,
}

fn config_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn cmd_ingest(a: &IngestArgs) -> Result<Outcome, CliError> {
    create_out_dir(&a.out_dir)?;
    let mut inputs = Inputs::default();
    let (corpus, summary) = load_corpus(&a.corpus, &a.out_dir, &mut inputs)?;
    let json = serde_json::to_string_pretty(&corpus).map_err(input_err("corpus"))?;
    write_file(&a.out_dir.join("corpus.json"), json + "\n")?;
    let text = summary.to_text();
    write_file(&a.out_dir.join("ingest_summary.txt"), &text)?;
    print!("{text}");
    Ok(Outcome {
        inputs,
        config: config_json(a),
        out_dir: a.out_dir.clone(),
    })
}

fn cmd_extract(a: &ExtractArgs) -> Result<Outcome, CliError> {
    create_out_dir(&a.out_dir)?;
    let mut inputs = Inputs::default();
    inputs.add("conllu", &a.conllu)?;
    inputs.add("wordnet index.sense", &a.wordnet_dir.join("index.sense"))?;
    inputs.add("wordnet lexnames", &a.wordnet_dir.join("lexnames"))?;
    let sentences = parse_conllu(open(&a.conllu)?).map_err(input_err(a.conllu.display()))?;
    let index = SenseIndex::load_dir(&a.wordnet_dir).map_err(input_err(a.wordnet_dir.display()))?;
    if index.skipped() > 0 {
        log::warn!("skipped {} malformed sense keys", index.skipped());
    }
    let mut table = String::from("mode,headlines_total,headlines_with_events,fraction\n");
    let mut printed = format!("{:<10} {:>8} {:>12} {:>9}\n", "mode", "total", "with_events", "coverage");
    for mode in [ExtractionMode::FullPipeline, ExtractionMode::VerbOnly] {
        let c = coverage_stats(&sentences, mode, &index).map_err(input_err(a.conllu.display()))?;
        table.push_str(&format!(
            "{},{},{},{:.6}\n",
            mode.as_str(),
            c.headlines_total,
            c.headlines_with_events,
            c.fraction
        ));
        printed.push_str(&format!(
            "{:<10} {:>8} {:>12} {:>8.2}%\n",
            mode.as_str(),
            c.headlines_total,
            c.headlines_with_events,
            100.0 * c.fraction
        ));
    }
    write_file(&a.out_dir.join("coverage.csv"), &table)?;
    let mut out = create(&a.out_dir.join("events.jsonl"))?;
    for rec in extract_records(&sentences, a.mode, &index) {
        serde_json::to_writer(&mut out, &rec).map_err(input_err("events"))?;
        writeln!(out).map_err(io_err(&a.out_dir))?;
    }
    out.flush().map_err(io_err(&a.out_dir))?;
    print!("{printed}");
    Ok(Outcome {
        inputs,
        config: config_json(a),
        out_dir: a.out_dir.clone(),
    })
}

fn cmd_train(a: &TrainArgs) -> Result<Outcome, CliError> {
    create_out_dir(&a.out_dir)?;
    let mut inputs = Inputs::default();
    let (corpus, _) = load_corpus(&a.corpus, &a.out_dir, &mut inputs)?;
    let events = required_events(&a.events, &mut inputs)?;
    let prepared = Prepared::load(corpus, &events);
    let lex = load_lexicon(&a.events, &prepared, &events, &mut inputs)?;
    let k = lex.table.dim();

    let model_cfg = ModelConfig {
        m: a.m,
        h: a.h,
        k,
        filters: a.filters,
        kernel: a.kernel,
        pool: a.pool,
        hidden: a.hidden,
        seed: a.seed,
    };
    model_cfg.validate().map_err(input_err("model configuration"))?;
    let train_cfg = TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        decay: a.decay,
        epochs: a.epochs,
        batch_size: a.batch_size,
        shuffle_seed: Some(a.seed),
    };
    train_cfg.validate().map_err(input_err("training configuration"))?;

    let scaler = PriceScaler::fit(&prepared.train_prices()).map_err(input_err("price scaler"))?;
    let shape = WindowShape { m: a.m, h: a.h, k };
    let windows_key = format!(
        "{}|{}|{}|{:?}|{}|{}",
        inputs.0.iter().map(|i| i.sha256.as_str()).collect::<Vec<_>>().join(","),
        a.corpus.keyword,
        a.corpus.split,
        a.corpus.market,
        a.seed,
        serde_json::to_string(&shape).unwrap_or_default()
    );
    let cache = cache_dir(&a.out_dir);
    let windows_name = format!("windows-{}.bin", &sha256_bytes(windows_key.as_bytes())[..16]);
    let cached = cache_get(&cache, &windows_name)
        .and_then(|b| read_windows(b.as_slice()).ok())
        .filter(|(s, _)| *s == shape);
    let windows = match cached {
        Some((_, w)) => w,
        None => {
            let days = build_days(
                &prepared.days[..prepared.split],
                &scaler,
                &lex.table,
                &lex.vocab,
                a.seed,
            );
            let w = build_windows(&days, a.m, a.h).map_err(input_err("training windows"))?;
            let mut buf = Vec::new();
            if write_windows(&mut buf, shape, &w).is_ok() {
                cache_put(&cache, &windows_name, &buf);
            }
            w
        }
    };

    let init = ModelParams::init(model_cfg).map_err(input_err("model configuration"))?;
    let report = train(&windows, init, &train_cfg).map_err(|e| match e {
        TrainError::NonFinite { .. } => CliError::Invariant(e.to_string()),
        _ => CliError::Input(e.to_string()),
    })?;

    let ckpt = Checkpoint {
        params: report.params.clone(),
        scaler,
        tensor_seed: a.seed,
    };
    let ckpt_path = a.out_dir.join("checkpoint.bin");
    let mut f = create(&ckpt_path)?;
    save_checkpoint(&mut f, &ckpt).map_err(input_err(ckpt_path.display()))?;
    f.flush().map_err(io_err(&ckpt_path))?;

    let mut csv = String::from("epoch,loss\n");
    csv.push_str(&format!("0,{:.12e}\n", report.initial_loss));
    for (i, l) in report.history.iter().enumerate() {
        csv.push_str(&format!("{},{l:.12e}\n", i + 1));
    }
    write_file(&a.out_dir.join("loss.csv"), &csv)?;
    let points: Vec<(f64, f64)> = std::iter::once(report.initial_loss)
        .chain(report.history.iter().copied())
        .enumerate()
        .map(|(i, l)| (i as f64, l))
        .collect();
    write_file(
        &a.out_dir.join("loss.svg"),
        line_chart("Training loss", "epoch", "MSE (scaled)", &[Series { name: "train", color: "steelblue", points }], &[]),
    )?;
    let mut vocab_out = Vec::new();
    lex.vocab.write_tsv(&mut vocab_out).map_err(io_err(&a.out_dir))?;
    write_file(&a.out_dir.join("vocab.tsv"), vocab_out)?;
    let summary = format!(
        "train_windows = {}\nvocabulary = {}\nembedded_words = {}\nk = {k}\nscaler_mean = {:.12}\n\
         scaler_std = {:.12}\ninitial_loss = {:.12e}\nfinal_loss = {:.12e}\nupdates = {}\n",
        windows.len(),
        lex.vocab.len(),
        lex.table.len(),
        scaler.mean,
        scaler.std,
        report.initial_loss,
        report.history.last().copied().unwrap_or(report.initial_loss),
        report.updates
    );
    write_file(&a.out_dir.join("train_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(Outcome {
        inputs,
        config: serde_json::json!({ "args": config_json(a), "model": model_cfg, "train": train_cfg }),
        out_dir: a.out_dir.clone(),
    })
}

fn load_ckpt(path: &Path, inputs: &mut Inputs) -> Result<Checkpoint, CliError> {
    inputs.add("checkpoint", path)?;
    load_checkpoint(open(path)?).map_err(input_err(path.display()))
}

/// Indices of days whose `m`-day history and `h`-day future lie inside the
/// test partition.
fn test_anchors(p: &Prepared, m: usize, h: usize) -> std::ops::Range<usize> {
    let first = p.split + m.saturating_sub(1);
    let end = p.days.len().saturating_sub(h);
    first..end.max(first)
}

fn cmd_report(a: &ReportArgs) -> Result<Outcome, CliError> {
    create_out_dir(&a.out_dir)?;
    let mut inputs = Inputs::default();
    let ckpt = load_ckpt(&a.checkpoint, &mut inputs)?;
    let (corpus, _) = load_corpus(&a.corpus, &a.out_dir, &mut inputs)?;
    let events = required_events(&a.events, &mut inputs)?;
    let prepared = Prepared::load(corpus, &events);
    let lex = load_lexicon(&a.events, &prepared, &events, &mut inputs)?;
    let (m, h) = (ckpt.params.config.m, ckpt.params.config.h);

    let ar = fit_linear_ar(&price_windows(&prepared.train_prices(), m, h), a.ridge)
        .map_err(input_err("linear autoregression"))?;
    let c3d = predictor::C3d::new(ckpt, lex.table, lex.vocab).map_err(input_err("model"))?;
    let models: Vec<Box<dyn Predictor>> = vec![
        Box::new(c3d),
        Box::new(predictor::Persistence { h }),
        Box::new(predictor::LinearAr { params: ar }),
    ];
    let anchors = test_anchors(&prepared, m, h);
    if anchors.is_empty() {
        return Err(CliError::Input(format!(
            "test period of {} days is too short for m={m}, h={h}",
            prepared.days.len() - prepared.split
        )));
    }
    let mut preds = String::from("model,anchor,horizon,prediction,target\n");
    let mut table = String::from("model,horizon,mse\n");
    let mut printed = format!("{:<12}", "model");
    for j in 1..=h {
        printed.push_str(&format!(" {:>10}", format!("h{j}")));
    }
    printed.push_str(&format!(" {:>10}\n", "all"));
    for model in &models {
        let mut sq = vec![0.0; h];
        for t in anchors.clone() {
            let y = model
                .predict(&prepared.days[..=t])
                .map_err(input_err(format!("{} on {}", model.name(), prepared.days[t].date)))?;
            for j in 0..h {
                let target = prepared.days[t + 1 + j].price;
                sq[j] += (y[j] - target).powi(2);
                preds.push_str(&format!(
                    "{},{},{},{:.9},{:.9}\n",
                    model.name(),
                    prepared.days[t].date,
                    j + 1,
                    y[j],
                    target
                ));
            }
        }
        let n = anchors.len() as f64;
        printed.push_str(&format!("{:<12}", model.name()));
        for (j, s) in sq.iter().enumerate() {
            table.push_str(&format!("{},{},{:.9}\n", model.name(), j + 1, s / n));
            printed.push_str(&format!(" {:>10.5}", s / n));
        }
        let all = sq.iter().sum::<f64>() / (n * h as f64);
        table.push_str(&format!("{},all,{all:.9}\n", model.name()));
        printed.push_str(&format!(" {all:>10.5}\n"));
    }
    write_file(&a.out_dir.join("evaluation.csv"), &table)?;
    write_file(&a.out_dir.join("predictions.csv"), &preds)?;
    print!("{printed}");
    Ok(Outcome {
        inputs,
        config: config_json(a),
        out_dir: a.out_dir.clone(),
    })
}

fn cmd_backtest(a: &BacktestArgs) -> Result<Outcome, CliError> {
    create_out_dir(&a.out_dir)?;
    let mut inputs = Inputs::default();
    let (corpus, _) = load_corpus(&a.corpus, &a.out_dir, &mut inputs)?;
    let split = corpus.split.unwrap_or(0);
    let predictor: Box<dyn Predictor> = match a.predictor {
        PredictorKind::C3d => {
            let path = a
                .checkpoint
                .as_deref()
                .ok_or_else(|| CliError::Input("--checkpoint is required for the c3d predictor".into()))?;
            let ckpt = load_ckpt(path, &mut inputs)?;
            let events = required_events(&a.events, &mut inputs)?;
            let prepared = Prepared::load(corpus.clone(), &events);
            let lex = load_lexicon(&a.events, &prepared, &events, &mut inputs)?;
            Box::new(predictor::C3d::new(ckpt, lex.table, lex.vocab).map_err(input_err("model"))?)
        }
        PredictorKind::Persistence => Box::new(predictor::Persistence { h: a.h }),
        PredictorKind::LinearAr => {
            let train: Vec<f64> = corpus.days[..split].iter().map(|d| d.price).collect();
            let params = fit_linear_ar(&price_windows(&train, a.m, a.h), a.ridge)
                .map_err(input_err("linear autoregression"))?;
            Box::new(predictor::LinearAr { params })
        }
    };
    let events = match &a.events.events {
        Some(p) => {
            inputs.add("events", p)?;
            read_events(p)?
        }
        None => HashMap::new(),
    };
    let prepared = Prepared::load(corpus, &events);
    let start = split;
    if start + 1 < predictor.window() {
        return Err(CliError::Input(format!(
            "{} needs {} days of history before the first purchase day",
            predictor.name(),
            predictor.window()
        )));
    }
    let available = prepared.days.len() - start;
    let config = BacktestConfig {
        total_volume: a.total_volume,
        days: a.days.unwrap_or(available),
        lookahead: a.lookahead,
        force_final: a.force_final,
    };
    let ledger = backtest::run_backtest(&prepared.days, start, predictor.as_ref(), &config)
        .map_err(input_err("backtest"))?;
    let prices: Vec<(NaiveDate, f64)> = prepared.days[start..].iter().map(|d| (d.date, d.price)).collect();
    let base = backtest::baseline_ledger(&prices, &config).map_err(input_err("baseline"))?;
    for l in [&ledger, &base] {
        if !l.conserves_volume() {
            return Err(CliError::Invariant("ledger volume is not conserved".into()));
        }
    }
    write_ledger(&a.out_dir.join("ledger.csv"), &ledger)?;
    write_ledger(&a.out_dir.join("baseline_ledger.csv"), &base)?;
    let r = backtest::report(&ledger);
    let b = backtest::report(&base);
    let text = format!(
        "{}\n{}\n[comparison]\nweighted_saving_per_m3 = {:.6}\n",
        r.to_text(predictor.name()),
        b.to_text("baseline"),
        b.weighted_average - r.weighted_average
    );
    write_file(&a.out_dir.join("report.txt"), &text)?;

    let mut daily = String::from("date,price,debt,purchase_volume\n");
    let debt = ledger.debt();
    for (d, (date, price)) in prices[..config.days].iter().enumerate() {
        let bought = ledger.purchases.iter().find(|p| p.day == d).map_or(0.0, |p| p.volume);
        daily.push_str(&format!("{date},{price:.6},{:.6},{bought:.6}\n", debt[d]));
    }
    write_file(&a.out_dir.join("daily.csv"), &daily)?;
    let line: Vec<(f64, f64)> = prices[..config.days].iter().enumerate().map(|(i, p)| (i as f64, p.1)).collect();
    let marks: Vec<(f64, f64)> = ledger.purchases.iter().map(|p| (p.day as f64, p.price)).collect();
    write_file(
        &a.out_dir.join("backtest.svg"),
        line_chart("Purchases", "trading day", "EUR/m3", &[Series { name: "price", color: "steelblue", points: line }], &marks),
    )?;
    print!("{text}");
    Ok(Outcome {
        inputs,
        config: serde_json::json!({ "args": config_json(a), "backtest": config }),
        out_dir: a.out_dir.clone(),
    })
}

fn write_ledger(path: &Path, ledger: &PurchaseLedger) -> Result<(), CliError> {
    let mut f = create(path)?;
    ledger.write_csv(&mut f).map_err(input_err(path.display()))?;
    f.flush().map_err(io_err(path))
}

fn read_ledger_dates(path: &Path) -> Result<Vec<NaiveDate>, CliError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(input_err(path.display()))?;
        let field = rec.get(0).unwrap_or("");
        out.push(
            NaiveDate::parse_from_str(field, "%Y-%m-%d")
                .map_err(|_| CliError::Input(format!("{} row {}: bad date {field:?}", path.display(), i + 2)))?,
        );
    }
    Ok(out)
}

fn cmd_tfidf(a: &TfidfArgs) -> Result<Outcome, CliError> {
    create_out_dir(&a.out_dir)?;
    let mut inputs = Inputs::default();
    let (corpus, _) = load_corpus(&a.corpus, &a.out_dir, &mut inputs)?;
    inputs.add("events", &a.events)?;
    let events = read_events(&a.events)?;

    let raw: Vec<(NaiveDate, Vec<String>)> = corpus
        .days
        .iter()
        .map(|d| (d.date, d.headlines.iter().flat_map(|h| normalize(&h.title)).collect()))
        .collect();
    let ev: Vec<(NaiveDate, Vec<String>)> = corpus
        .days
        .iter()
        .map(|d| {
            let words = d
                .headlines
                .iter()
                .flat_map(|h| events.get(&h.id).into_iter().flatten())
                .flat_map(|t| normalize(t))
                .collect();
            (d.date, words)
        })
        .collect();

    let rank = |view: View, docs: Vec<(NaiveDate, Vec<String>)>| {
        let docs: Vec<_> = docs.into_iter().filter(|d| !d.1.is_empty()).collect();
        let words: Vec<Vec<String>> = docs.iter().map(|d| d.1.clone()).collect();
        TfidfRanking {
            view,
            first_date: docs.first().map(|d| d.0),
            last_date: docs.last().map(|d| d.0),
            documents: words.len(),
            entries: rank_tfidf(&words, a.top_n),
        }
    };
    let mut rankings = vec![rank(View::Raw, raw), rank(View::Events, ev.clone())];
    if let Some(ledger) = &a.ledger {
        inputs.add("ledger", ledger)?;
        let index: HashMap<NaiveDate, usize> =
            corpus.days.iter().enumerate().map(|(i, d)| (d.date, i)).collect();
        let purchase_days = read_ledger_dates(ledger)?
            .into_iter()
            .map(|d| {
                index
                    .get(&d)
                    .copied()
                    .ok_or_else(|| CliError::Input(format!("purchase date {d} is not a trading day of the corpus")))
            })
            .collect::<Result<Vec<usize>, _>>()?;
        let day_words: Vec<Vec<String>> = ev.iter().map(|d| d.1.clone()).collect();
        let selected = crate::tfidf::pre_purchase_days(&purchase_days, a.window);
        let docs = pre_purchase_view(&day_words, &purchase_days, a.window);
        let dated = selected.into_iter().zip(docs).map(|(i, w)| (ev[i].0, w)).collect();
        rankings.push(rank(View::PrePurchase, dated));
    }
    for r in &rankings {
        let path = a.out_dir.join(format!("tfidf_{}.csv", r.view.as_str().replace('-', "_")));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).map_err(io_err(&path))?;
        write_file(&path, &buf)?;
        println!("[{}] {}", r.view.as_str(), r.entries.iter().take(10).map(|e| e.0.as_str()).collect::<Vec<_>>().join(" "));
    }
    Ok(Outcome {
        inputs,
        config: config_json(a),
        out_dir: a.out_dir.clone(),
    })
}

fn cmd_synth(a: &SynthArgs) -> Result<Outcome, CliError> {
    if a.k == 0 || a.days < 3 {
        return Err(CliError::Input("synth needs k >= 1 and at least 3 days".into()));
    }
    let corpus = synthetic::generate(&synthetic::SyntheticConfig {
        days: a.days,
        k: a.k,
        seed: a.seed,
        ..Default::default()
    });
    synthetic::write_files(&corpus, &a.out_dir).map_err(io_err(&a.out_dir))?;
    println!("wrote {} days to {}", a.days, a.out_dir.display());
    Ok(Outcome {
        inputs: Inputs::default(),
        config: config_json(a),
        out_dir: a.out_dir.clone(),
    })
}

/// Replaces the value of `--out-dir` in `argv`.
fn replace_out_dir(argv: &[String], new: &Path) -> Vec<String> {
    let new = new.to_string_lossy().into_owned();
    let mut out = Vec::with_capacity(argv.len());
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--out-dir" {
            out.push(a.clone());
            out.push(new.clone());
            it.next();
        } else if a.starts_with("--out-dir=") {
            out.push(format!("--out-dir={new}"));
        } else {
            out.push(a.clone());
        }
    }
    out
}

fn cmd_rerun(a: &RerunArgs) -> Result<(), CliError> {
    let bytes = fs::read(&a.manifest).map_err(io_err(&a.manifest))?;
    let manifest: RunManifest = serde_json::from_slice(&bytes).map_err(input_err(a.manifest.display()))?;
    if manifest.tool != TOOL {
        return Err(CliError::Input(format!("manifest was written by {:?}", manifest.tool)));
    }
    if manifest.version != VERSION {
        log::warn!("manifest version {} differs from {VERSION}", manifest.version);
    }
    let changed = manifest.changed_inputs(&manifest.cwd);
    if !changed.is_empty() {
        let list: Vec<String> = changed.iter().map(|(p, why)| format!("{} ({why})", p.display())).collect();
        return Err(CliError::Input(format!("inputs changed since the recorded run: {}", list.join(", "))));
    }
    let mut argv = manifest.argv.clone();
    if let Some(dir) = &a.out_dir {
        let abs = std::path::absolute(dir).map_err(io_err(dir))?;
        argv = replace_out_dir(&argv, &abs);
    }
    std::env::set_current_dir(&manifest.cwd).map_err(io_err(&manifest.cwd))?;
    let cli = Cli::try_parse_from(std::iter::once(TOOL.to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Input(format!("recorded arguments: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(CliError::Input("manifest records another rerun".into()));
    }
    execute(cli, argv)
}

/// Runs a parsed command and writes its manifest. `argv` excludes the
/// program name.
pub fn execute(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let name = cli.command.name();
    let outcome = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a)?,
        Command::Extract(a) => cmd_extract(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::Report(a) => cmd_report(a)?,
        Command::Backtest(a) => cmd_backtest(a)?,
        Command::Tfidf(a) => cmd_tfidf(a)?,
        Command::Synth(a) => cmd_synth(a)?,
        Command::Rerun(a) => return cmd_rerun(a),
    };
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        command: name.to_string(),
        argv,
        cwd: std::env::current_dir().map_err(input_err("working directory"))?,
        inputs: outcome.inputs.0,
        config: outcome.config,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(input_err("manifest"))?;
    write_file(&outcome.out_dir.join(RunManifest::file_name(name)), json + "\n")
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match execute(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
