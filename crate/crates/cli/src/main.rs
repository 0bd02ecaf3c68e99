//! `ste` — train and query topical skip-gram embeddings from the command
//! line. One subcommand per workflow; every report is UTF-8 text on stdout
//! (or `--out`), progress and diagnostics go to stderr.

use std::error::Error;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use ste_core::corpus::{read_corpus, Vocabulary};
use ste_core::docrep::{document_vector, write_dense, write_sparse, TfidfWeights};
use ste_core::inference::Inferencer;
use ste_core::model::{Model, ModelConfig, Variant};
use ste_core::similarity::{eval_scws, nearest_neighbors, parse_judgments, ContextualMetric};
use ste_core::topics::{collect_bigrams, pmi_coherence, rank_topic_bigrams, top_words, CooccurrenceCounts};
use ste_core::trainer::{train, TrainOptions};

#[derive(Parser)]
#[command(
    name = "ste",
    version,
    about = "Topical skip-gram embeddings: train, inspect, and evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a corpus (one document per line) and save it
    Train(TrainArgs),
    /// Rank the corpus bigrams most representative of each topic
    Topics(TopicsArgs),
    /// List nearest neighbors of a word's topic vector
    Similar(SimilarArgs),
    /// Infer topic distributions for new documents with embeddings frozen
    Foldin(FoldinArgs),
    /// Score topic quality by PMI over each topic's top words
    Coherence(CoherenceArgs),
    /// Emit a fixed-length vector per document for downstream classifiers
    Docvec(DocvecArgs),
    /// Correlate contextual similarity scores with human judgments
    EvalScws(EvalScwsArgs),
    /// Dump model contents as text
    Export(ExportArgs),
}

/// Model/trainer settings shared by subcommands. Precedence: command-line
/// flag, then `--config` file value, then the built-in default.
#[derive(Args, Clone, Default)]
struct ConfigFlags {
    /// TOML config file with keys named like these flags
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Number of topics K [default: 10]
    #[arg(long)]
    topics: Option<usize>,
    /// Embedding dimension s [default: 400]
    #[arg(long)]
    dim: Option<usize>,
    /// Context window size in tokens [default: 10]
    #[arg(long)]
    window: Option<usize>,
    /// Negative samples per skip-gram [default: 8]
    #[arg(long)]
    negatives: Option<usize>,
    /// Outer EM iterations over the corpus [default: 15]
    #[arg(long)]
    outer: Option<usize>,
    /// Gradient steps per skip-gram within an iteration [default: 15]
    #[arg(long)]
    inner: Option<usize>,
    /// Initial learning rate, decayed linearly [default: 0.025]
    #[arg(long)]
    lr: Option<f64>,
    /// Topic assignment: "same" (shared per skip-gram) or "diff"
    /// (independent per word) [default: same]
    #[arg(long)]
    variant: Option<String>,
    /// Drop words occurring fewer than this many times [default: 5]
    #[arg(long)]
    min_count: Option<u64>,
    /// RNG seed for reproducible runs [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 guarantees determinism [default: 1]
    #[arg(long)]
    threads: Option<usize>,
    /// Fold-in iterations [default: same as --outer]
    #[arg(long)]
    fold_iters: Option<usize>,
}

/// The same keys, as an optional config file layer.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    topics: Option<usize>,
    dim: Option<usize>,
    window: Option<usize>,
    negatives: Option<usize>,
    outer: Option<usize>,
    inner: Option<usize>,
    lr: Option<f64>,
    variant: Option<String>,
    min_count: Option<u64>,
    seed: Option<u64>,
    threads: Option<usize>,
    fold_iters: Option<usize>,
}

struct Resolved {
    config: ModelConfig,
    min_count: u64,
    threads: usize,
    fold_iters: Option<usize>,
}

type CliResult<T> = Result<T, Box<dyn Error>>;

impl ConfigFlags {
    fn resolve(&self) -> CliResult<Resolved> {
        let file: FileConfig = match &self.config {
            Some(path) => toml::from_str(&fs::read_to_string(path)?)
                .map_err(|e| format!("config file {}: {e}", path.display()))?,
            None => FileConfig::default(),
        };
        fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
            flag.or(file).unwrap_or(default)
        }
        let defaults = ModelConfig::default();
        let variant = match pick(self.variant.clone(), file.variant, String::new()).as_str() {
            "" => defaults.variant,
            name => name.parse::<Variant>()?,
        };
        let config = ModelConfig {
            num_topics: pick(self.topics, file.topics, defaults.num_topics),
            dim: pick(self.dim, file.dim, defaults.dim),
            window: pick(self.window, file.window, defaults.window),
            negatives: pick(self.negatives, file.negatives, defaults.negatives),
            outer_iters: pick(self.outer, file.outer, defaults.outer_iters),
            inner_iters: pick(self.inner, file.inner, defaults.inner_iters),
            initial_learning_rate: pick(self.lr, file.lr, defaults.initial_learning_rate),
            variant,
            seed: pick(self.seed, file.seed, defaults.seed),
        };
        config.validate()?;
        Ok(Resolved {
            config,
            min_count: pick(self.min_count, file.min_count, 5),
            threads: pick(self.threads, file.threads, 1).max(1),
            fold_iters: self.fold_iters.or(file.fold_iters),
        })
    }
}

fn open_out(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn inferencer<'a>(model: &'a Model, resolved: &Resolved) -> Inferencer<'a> {
    let inf = Inferencer::new(model, &resolved.config);
    match resolved.fold_iters {
        Some(iters) => inf.with_fold_iters(iters),
        None => inf,
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus, one document per line
    corpus: PathBuf,
    /// Where to write the trained model
    #[arg(long, short = 'o', value_name = "PATH")]
    model_out: PathBuf,
    #[command(flatten)]
    cfg: ConfigFlags,
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let resolved = args.cfg.resolve()?;
    let docs = read_corpus(&args.corpus)?;
    let vocab = Vocabulary::from_documents(&docs, resolved.min_count)?;
    let encoded = vocab.encode_corpus(&docs);
    let options = TrainOptions { threads: resolved.threads, ..TrainOptions::default() };
    let (model, diagnostics) = train(&encoded, vocab, &resolved.config, &options, |stats| {
        eprintln!(
            "iteration {}\tobjective {:.6}\tseconds {:.3}",
            stats.iteration, stats.mean_objective, stats.seconds
        );
    })?;
    model.save(&args.model_out)?;
    eprintln!(
        "trained on {} skip-grams; objective {:.6} -> {:.6}; saved {}",
        diagnostics.total_skipgrams,
        diagnostics.initial.mean,
        diagnostics.r#final.mean,
        args.model_out.display()
    );
    Ok(())
}

#[derive(Args)]
struct TopicsArgs {
    /// Trained model file
    model: PathBuf,
    /// Corpus to harvest bigrams from, one document per line
    corpus: PathBuf,
    /// Bigrams to report per topic
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    /// Keep only bigrams occurring at least this often
    #[arg(long, default_value_t = 5)]
    min_freq: u64,
    /// Write the report here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_topics(args: &TopicsArgs) -> CliResult<()> {
    let model = Model::load(&args.model)?;
    let docs = read_corpus(&args.corpus)?;
    let encoded = model.vocab.encode_corpus(&docs);
    let bigrams = collect_bigrams(&encoded, args.min_freq);
    let mut out = open_out(args.out.as_ref())?;
    for topic in 0..model.embeddings.num_topics() {
        let ranking = rank_topic_bigrams(&model.embeddings, &model.vocab, &bigrams, topic, args.top_n);
        for entry in &ranking.entries {
            writeln!(
                out,
                "{topic}\t{} {}\t{:.6}",
                model.vocab.word(entry.first),
                model.vocab.word(entry.second),
                entry.score
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Args)]
struct SimilarArgs {
    /// Trained model file
    model: PathBuf,
    /// Query word
    word: String,
    /// Topic index of the query vector
    #[arg(long, default_value_t = 0)]
    topic: usize,
    /// Number of neighbors to print
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Write the report here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_similar(args: &SimilarArgs) -> CliResult<()> {
    let model = Model::load(&args.model)?;
    if args.topic >= model.embeddings.num_topics() {
        return Err(format!(
            "topic {} out of range (model has {} topics)",
            args.topic,
            model.embeddings.num_topics()
        )
        .into());
    }
    let neighbors = nearest_neighbors(&model, &args.word, args.topic, args.top)?;
    let mut out = open_out(args.out.as_ref())?;
    for n in &neighbors {
        writeln!(out, "{}\t{}\t{:.6}", model.vocab.word(n.word), n.topic, n.cosine)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Args)]
struct FoldinArgs {
    /// Trained model file
    model: PathBuf,
    /// Documents to fold in, one per line
    corpus: PathBuf,
    /// Write the report here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigFlags,
}

fn cmd_foldin(args: &FoldinArgs) -> CliResult<()> {
    let resolved = args.cfg.resolve()?;
    let model = Model::load(&args.model)?;
    let docs = read_corpus(&args.corpus)?;
    let encoded = model.vocab.encode_corpus(&docs);
    let inf = inferencer(&model, &resolved);
    let mut out = open_out(args.out.as_ref())?;
    for doc in &encoded {
        let result = inf.fold_in(doc)?;
        write!(out, "{}\t", doc.doc_id)?;
        for (z, p) in result.theta.iter().enumerate() {
            if z > 0 {
                write!(out, " ")?;
            }
            write!(out, "{p:.6}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Args)]
struct CoherenceArgs {
    /// Trained model file
    model: PathBuf,
    /// Reference corpus for co-occurrence statistics, one document per line
    corpus: PathBuf,
    /// Number of top words per topic entering the PMI sum
    #[arg(long, default_value_t = 10)]
    top_words: usize,
    /// Bigrams ranked per topic when harvesting its top words
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    /// Keep only bigrams occurring at least this often
    #[arg(long, default_value_t = 5)]
    min_freq: u64,
    /// Sliding window size for co-occurrence counting
    #[arg(long, default_value_t = 10)]
    window: usize,
    /// Write the report here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_coherence(args: &CoherenceArgs) -> CliResult<()> {
    let model = Model::load(&args.model)?;
    let docs = read_corpus(&args.corpus)?;
    let encoded = model.vocab.encode_corpus(&docs);
    let counts = CooccurrenceCounts::from_documents(&encoded, args.window);
    let bigrams = collect_bigrams(&encoded, args.min_freq);
    let topic_words: Vec<Vec<usize>> = (0..model.embeddings.num_topics())
        .map(|topic| {
            let ranking =
                rank_topic_bigrams(&model.embeddings, &model.vocab, &bigrams, topic, args.top_n);
            top_words(&ranking, args.top_words)
        })
        .collect();
    let report = pmi_coherence(&topic_words, &counts, args.top_words);
    let mut out = open_out(args.out.as_ref())?;
    for score in &report.per_topic {
        writeln!(out, "{}\t{:.6}", score.topic, score.score)?;
    }
    writeln!(out, "mean\t{:.6}", report.mean)?;
    out.flush()?;
    Ok(())
}

#[derive(ValueEnum, Clone, Copy)]
enum VectorFormat {
    Dense,
    Sparse,
}

#[derive(Args)]
struct DocvecArgs {
    /// Trained model file
    model: PathBuf,
    /// Documents to vectorize, one per line
    corpus: PathBuf,
    /// Labels, one per corpus line; document index used when omitted
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
    /// Corpus for document frequencies; defaults to the corpus argument
    #[arg(long, value_name = "PATH")]
    idf_corpus: Option<PathBuf>,
    /// Output layout
    #[arg(long, value_enum, default_value_t = VectorFormat::Dense)]
    format: VectorFormat,
    /// Write the vectors here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigFlags,
}

fn cmd_docvec(args: &DocvecArgs) -> CliResult<()> {
    let resolved = args.cfg.resolve()?;
    let model = Model::load(&args.model)?;
    let docs = read_corpus(&args.corpus)?;
    let encoded = model.vocab.encode_corpus(&docs);
    let idf_encoded = match &args.idf_corpus {
        Some(path) => model.vocab.encode_corpus(&read_corpus(path)?),
        None => encoded.clone(),
    };
    let weights = TfidfWeights::from_documents(&idf_encoded, model.vocab.len());
    let labels: Vec<String> = match &args.labels {
        Some(path) => {
            let lines: Vec<String> = fs::read_to_string(path)?.lines().map(str::to_owned).collect();
            if lines.len() != encoded.len() {
                return Err(format!(
                    "label file has {} lines but the corpus has {} documents",
                    lines.len(),
                    encoded.len()
                )
                .into());
            }
            lines
        }
        None => (0..encoded.len()).map(|i| i.to_string()).collect(),
    };
    let inf = inferencer(&model, &resolved);
    let k = model.embeddings.num_topics();
    let uniform = vec![1.0 / k as f64; k];
    let mut out = open_out(args.out.as_ref())?;
    let mut empty_docs = 0usize;
    for (doc, label) in encoded.iter().zip(&labels) {
        let theta = if doc.word_ids.is_empty() {
            uniform.clone()
        } else {
            inf.fold_in(doc)?.theta
        };
        let vector = document_vector(&inf, doc, &theta, &weights);
        if vector.empty {
            empty_docs += 1;
        }
        match args.format {
            VectorFormat::Dense => write_dense(&mut out, label, &vector.vector)?,
            VectorFormat::Sparse => write_sparse(&mut out, label, &vector.vector)?,
        }
    }
    out.flush()?;
    if empty_docs > 0 {
        eprintln!("{empty_docs} document(s) had no in-vocabulary tokens; wrote zero vectors");
    }
    Ok(())
}

#[derive(ValueEnum, Clone, Copy)]
enum MetricArg {
    Avgsimc,
    Maxsimc,
}

#[derive(Args)]
struct EvalScwsArgs {
    /// Trained model file
    model: PathBuf,
    /// Judgment file: tab-separated id, word1, pos1, word2, pos2, context1,
    /// context2, mean_score, with targets marked <b>…</b> in the contexts
    judgments: PathBuf,
    /// Similarity metric to correlate with the human scores
    #[arg(long, value_enum, default_value_t = MetricArg::Avgsimc)]
    metric: MetricArg,
    /// Write the score here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigFlags,
}

fn cmd_eval_scws(args: &EvalScwsArgs) -> CliResult<()> {
    let resolved = args.cfg.resolve()?;
    let model = Model::load(&args.model)?;
    let file = File::open(&args.judgments)?;
    let judgments = parse_judgments(io::BufReader::new(file))?;
    let metric = match args.metric {
        MetricArg::Avgsimc => ContextualMetric::AvgSimC,
        MetricArg::Maxsimc => ContextualMetric::MaxSimC,
    };
    let mut config = resolved.config;
    if let Some(iters) = resolved.fold_iters {
        config.outer_iters = iters;
    }
    let outcome = eval_scws(&judgments, &model, &config, metric)?;
    let mut out = open_out(args.out.as_ref())?;
    writeln!(out, "{:.1}", outcome.rho * 100.0)?;
    out.flush()?;
    eprintln!(
        "scored {} pair(s), skipped {} with out-of-vocabulary targets",
        outcome.scored_pairs, outcome.skipped_pairs
    );
    Ok(())
}

#[derive(Args)]
struct ExportArgs {
    /// Trained model file
    model: PathBuf,
    /// Write the embeddings here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Also dump the vocabulary as word<TAB>count lines to this path
    #[arg(long, value_name = "PATH")]
    vocab_out: Option<PathBuf>,
}

fn cmd_export(args: &ExportArgs) -> CliResult<()> {
    let model = Model::load(&args.model)?;
    let mut out = open_out(args.out.as_ref())?;
    model.write_text_embeddings(&mut out)?;
    out.flush()?;
    if let Some(path) = &args.vocab_out {
        let mut vout = BufWriter::new(File::create(path)?);
        model.vocab.write_counts(&mut vout)?;
        vout.flush()?;
    }
    Ok(())
}

fn run() -> CliResult<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(&args),
        Command::Topics(args) => cmd_topics(&args),
        Command::Similar(args) => cmd_similar(&args),
        Command::Foldin(args) => cmd_foldin(&args),
        Command::Coherence(args) => cmd_coherence(&args),
        Command::Docvec(args) => cmd_docvec(&args),
        Command::EvalScws(args) => cmd_eval_scws(&args),
        Command::Export(args) => cmd_export(&args),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
