use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use raptor_core::corpus::load_corpus;
use raptor_core::eval::{
    ablation, eval_config, evaluate, generate_corpus, layer_strategies, scaling_benchmark, EvalReport,
    ScalingReport, Strategy,
};
use raptor_core::persistence::{load_tree, save_tree};
use raptor_core::providers::{
    EmbedderSpec, Lexicon, SummarizerSpec, DEFAULT_EMBED_MODEL, DEFAULT_LLM_MODEL, DEFAULT_MAX_SUMMARY_TOKENS,
};
use raptor_core::retrieval::{retrieve, QueryConfig, RetrievalMode, DEFAULT_MAX_TOKENS, DEFAULT_TOP_K};
use raptor_core::tree::{build_tree_with, tree_stats, BuildConfig, Grouping, Tree, TreeStats};
use raptor_core::Error;

mod table;

const EXIT_CONFIG: u8 = 1;
const EXIT_PROVIDER: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_CORRUPT: u8 = 4;

#[derive(Parser)]
#[command(name = "raptor", version, about = "Build and query recursive summary tree indexes")]
struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk, embed, cluster and summarize a corpus into an index file.
    Build(BuildArgs),
    /// Retrieve context for a query from an index.
    Query(QueryArgs),
    /// Show summary statistics of an index.
    Stats {
        #[arg(long)]
        index: PathBuf,
    },
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Evaluation on seeded synthetic corpora.
    Eval {
        #[command(subcommand)]
        which: EvalCommand,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Build cost against corpus length.
    Scaling {
        /// Corpus lengths in tokens.
        #[arg(long, value_delimiter = ',', default_value = "10000,20000,40000,80000")]
        sizes: Vec<usize>,
        #[arg(long)]
        seed: u64,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Semantic clustering against fixed windows of consecutive chunks.
    Ablation {
        #[arg(long, value_enum, default_value = "recency")]
        grouping: BaselineGrouping,
        #[arg(long, default_value_t = 7)]
        window: usize,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Recall when retrieving from each layer alone and from all layers.
    Layers {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineGrouping {
    Recency,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    topics: usize,
    #[arg(long, default_value_t = 20)]
    chunks_per_topic: usize,
    /// Keep each topic's chunks contiguous instead of interleaving topics.
    #[arg(long)]
    contiguous: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
    budget: usize,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EmbedderKind {
    Mock,
    MockLexical,
    Http,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SummarizerKind {
    MockTruncate,
    MockExtractive,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingKind {
    Gmm,
    Recency,
}

#[derive(Args)]
struct BuildArgs {
    /// File or directory of `.txt` / `.jsonl` documents.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    embedder: EmbedderKind,
    #[arg(long, value_enum, default_value = "mock-extractive")]
    summarizer: SummarizerKind,
    /// Required with mock providers.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    chunk_tokens: usize,
    #[arg(long, default_value_t = 5)]
    max_layers: usize,
    #[arg(long, default_value_t = 5)]
    min_top_nodes: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_SUMMARY_TOKENS)]
    max_summary_tokens: usize,
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    #[arg(long, value_enum, default_value = "gmm")]
    grouping: GroupingKind,
    /// Window size for `--grouping recency`.
    #[arg(long, default_value_t = 7)]
    window: usize,
    #[arg(long)]
    membership_threshold: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Token threshold above which a cluster is re-clustered.
    #[arg(long)]
    max_cluster_tokens: Option<usize>,
    /// Embedding dimension (mock and HTTP embedders).
    #[arg(long)]
    dimension: Option<usize>,
    /// JSON array of keyword arrays, one per topic, for `mock-lexical`.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_EMBED_MODEL)]
    embed_model: String,
    #[arg(long, default_value = DEFAULT_LLM_MODEL)]
    llm_model: String,
    /// Overrides RAPTOR_EMBED_URL.
    #[arg(long)]
    embed_url: Option<String>,
    /// Overrides RAPTOR_LLM_URL.
    #[arg(long)]
    llm_url: Option<String>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// Query text, embedded with the index's embedder.
    #[arg(long, conflicts_with = "query_vector", required_unless_present = "query_vector")]
    query: Option<String>,
    /// Comma-separated query embedding.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    query_vector: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "collapsed")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
    max_tokens: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    start_layer: Option<usize>,
    /// Layers searched by `--mode layers`.
    #[arg(long, value_delimiter = ',')]
    layers: Vec<usize>,
    /// Print the context in source order rather than by score.
    #[arg(long)]
    document_order: bool,
    /// Overrides RAPTOR_EMBED_URL.
    #[arg(long)]
    embed_url: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Collapsed,
    Traversal,
    Layers,
    Flat,
}

impl From<ModeArg> for RetrievalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Collapsed => RetrievalMode::Collapsed,
            ModeArg::Traversal => RetrievalMode::Traversal,
            ModeArg::Layers => RetrievalMode::LayerRestricted,
            ModeArg::Flat => RetrievalMode::Flat,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_provider_failure() {
            EXIT_PROVIDER
        } else {
            match e {
                Error::Io { .. } => EXIT_IO,
                Error::CorruptIndex(_) | Error::ChecksumMismatch { .. } | Error::UnsupportedVersion(_) => EXIT_CORRUPT,
                _ => EXIT_CONFIG,
            }
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Build(args) => cmd_build(args, cli.json),
        Command::Query(args) => cmd_query(args, cli.json),
        Command::Stats { index } => cmd_stats(&index, cli.json),
        Command::Bench {
            which: BenchCommand::Scaling { sizes, seed, csv },
        } => cmd_bench_scaling(&sizes, seed, csv.as_deref(), cli.json),
        Command::Eval { which } => match which {
            EvalCommand::Ablation { window, corpus, .. } => cmd_eval_ablation(window, &corpus, cli.json),
            EvalCommand::Layers { corpus } => cmd_eval_layers(&corpus, cli.json),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
}

fn build_config(args: &BuildArgs) -> Result<BuildConfig, Failure> {
    let mock = args.embedder != EmbedderKind::Http || args.summarizer != SummarizerKind::Http;
    let seed = match (args.seed, mock) {
        (Some(s), _) => s,
        (None, false) => 0,
        (None, true) => return Err(Failure::config("--seed is required with mock providers")),
    };
    let default_dim = EmbedderSpec::mock(seed).dimension();
    let embedder = match args.embedder {
        EmbedderKind::Mock => EmbedderSpec::Mock {
            seed,
            dimension: args.dimension.unwrap_or(default_dim),
        },
        EmbedderKind::MockLexical => {
            let lexicon = match &args.lexicon {
                Some(p) => {
                    let raw = std::fs::read_to_string(p)
                        .map_err(|e| Failure::config(format!("cannot read lexicon {}: {e}", p.display())))?;
                    let topics: Vec<Vec<String>> = serde_json::from_str(&raw)
                        .map_err(|e| Failure::config(format!("lexicon {}: {e}", p.display())))?;
                    Lexicon::new(topics)
                }
                None => Lexicon::default(),
            };
            EmbedderSpec::MockLexical {
                seed,
                dimension: args.dimension.unwrap_or(default_dim),
                lexicon,
            }
        }
        EmbedderKind::Http => EmbedderSpec::Http {
            model: args.embed_model.clone(),
            dimension: args
                .dimension
                .ok_or_else(|| Failure::config("--dimension is required with the http embedder"))?,
        },
    };
    let summarizer = match args.summarizer {
        SummarizerKind::MockTruncate => SummarizerSpec::MockTruncate {
            max_summary_tokens: args.max_summary_tokens,
        },
        SummarizerKind::MockExtractive => SummarizerSpec::MockExtractive {
            max_summary_tokens: args.max_summary_tokens,
        },
        SummarizerKind::Http => SummarizerSpec::Http {
            model: args.llm_model.clone(),
            max_summary_tokens: args.max_summary_tokens,
        },
    };
    let mut config = BuildConfig {
        chunk_budget: args.chunk_tokens,
        max_layers: args.max_layers,
        min_top_nodes: args.min_top_nodes,
        seed,
        max_concurrency: args.concurrency,
        embedder,
        summarizer,
        grouping: match args.grouping {
            GroupingKind::Gmm => Grouping::Gmm,
            GroupingKind::Recency => Grouping::Recency { window: args.window },
        },
        ..BuildConfig::default()
    };
    if let Some(t) = args.membership_threshold {
        config.clustering.membership_threshold = t;
    }
    if let Some(k) = args.k_max {
        config.clustering.k_max = k;
    }
    if let Some(t) = args.max_cluster_tokens {
        config.clustering.max_cluster_tokens = t;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_build(args: BuildArgs, json: bool) -> CmdResult {
    if !args.input.exists() {
        return Err(Failure::config(format!("input path {} does not exist", args.input.display())));
    }
    let config = build_config(&args)?;
    let docs = load_corpus(&args.input)?;
    let embedder = config.embedder.build(args.embed_url.as_deref())?;
    let summarizer = config.summarizer.build(config.tokenizer(), args.llm_url.as_deref())?;
    let tree = build_tree_with(&docs, &config, embedder.as_ref(), summarizer.as_ref())?;
    save_tree(&tree, &args.out)?;
    let stats = tree_stats(&tree);
    if json {
        print_json(&json!({
            "index": args.out,
            "documents": docs.len(),
            "nodes": tree.nodes.len(),
            "stats": stats,
            "usage": tree.usage,
        }));
    } else {
        println!("wrote {} ({} documents, {} nodes)", args.out.display(), docs.len(), tree.nodes.len());
        print!("{}", table::stats(&stats));
        println!(
            "summarizer usage: {} calls, {} prompt tokens, {} completion tokens",
            tree.usage.calls, tree.usage.prompt_tokens, tree.usage.completion_tokens
        );
    }
    Ok(())
}

fn cmd_query(args: QueryArgs, json: bool) -> CmdResult {
    if args.top_k == 0 || args.depth == Some(0) {
        return Err(Failure::config("--top-k and --depth must be at least 1"));
    }
    if matches!(args.mode, ModeArg::Layers) && args.layers.is_empty() {
        return Err(Failure::config("--mode layers needs --layers"));
    }
    let tree = load_tree(&args.index)?;
    let query = match (&args.query_vector, &args.query) {
        (Some(v), _) => v.clone(),
        (None, Some(text)) => {
            let embedder = tree.config.embedder.build(args.embed_url.as_deref())?;
            raptor_core::providers::embed_texts(embedder.as_ref(), std::slice::from_ref(text))?.remove(0)
        }
        (None, None) => return Err(Failure::config("give --query or --query-vector")),
    };
    let config = QueryConfig {
        mode: args.mode.into(),
        top_k: args.top_k,
        depth: args.depth,
        start_layer: args.start_layer,
        max_tokens: args.max_tokens,
        allowed_layers: args.layers.clone(),
    };
    let result = retrieve(&tree, &query, &config)?;
    if json {
        print_json(&json!({
            "mode": result.mode,
            "ids": result.selected,
            "scores": result.scores,
            "layers": result.layers,
            "total_tokens": result.total_tokens,
            "layer_tally": result.layer_tally,
            "overlapping_leaves": result.overlapping_leaves,
        }));
    } else {
        println!("{}", result.context(&tree, args.document_order));
    }
    Ok(())
}

fn cmd_stats(index: &Path, json: bool) -> CmdResult {
    let tree = load_tree(index)?;
    let stats = tree_stats(&tree);
    if json {
        print_json(&json!({ "stats": stats, "usage": tree.usage, "config_fingerprint": tree.config_fingerprint }));
    } else {
        print!("{}", table::stats(&stats));
    }
    Ok(())
}

fn cmd_bench_scaling(sizes: &[usize], seed: u64, csv: Option<&Path>, json: bool) -> CmdResult {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Failure::config("--sizes must be positive token counts"));
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let config = eval_config(&generate_corpus(seed, 1, 1, false), seed);
    let report: ScalingReport = scaling_benchmark(&sorted, &config, seed)?;
    if let Some(path) = csv {
        std::fs::write(path, report.to_csv()).map_err(|e| Failure {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        })?;
    }
    if json {
        print_json(&serde_json::to_value(&report).expect("report serializes"));
    } else {
        print!("{}", table::scaling(&report));
    }
    Ok(())
}

fn synthetic(args: &CorpusArgs) -> Result<raptor_core::eval::SyntheticCorpus, Failure> {
    if args.topics == 0 || args.chunks_per_topic == 0 {
        return Err(Failure::config("--topics and --chunks-per-topic must be at least 1"));
    }
    Ok(generate_corpus(args.seed, args.topics, args.chunks_per_topic, !args.contiguous))
}

fn cmd_eval_ablation(window: usize, args: &CorpusArgs, json: bool) -> CmdResult {
    let corpus = synthetic(args)?;
    let report = ablation(&corpus, &eval_config(&corpus, args.seed), window, args.budget)?;
    if json {
        print_json(&serde_json::to_value(&report).expect("report serializes"));
    } else {
        print!("{}", table::ablation(&report, window));
    }
    Ok(())
}

fn cmd_eval_layers(args: &CorpusArgs, json: bool) -> CmdResult {
    let corpus = synthetic(args)?;
    let config = eval_config(&corpus, args.seed);
    let embedder = config.embedder.build(None)?;
    let summarizer = config.summarizer.build(config.tokenizer(), None)?;
    let tree: Tree = build_tree_with(&corpus.documents, &config, embedder.as_ref(), summarizer.as_ref())?;
    let mut strategies = layer_strategies(&tree);
    strategies.push(Strategy::Flat);
    let report: EvalReport = evaluate(&tree, &corpus, embedder.as_ref(), &strategies, args.budget)?;
    let stats: TreeStats = tree_stats(&tree);
    if json {
        print_json(&json!({ "stats": stats, "eval": report }));
    } else {
        print!("{}", table::eval(&report));
    }
    Ok(())
}
