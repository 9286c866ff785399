//! `mealswap`: stage-by-stage pipeline for mining food substitutes from
//! meal logs. Each pipeline subcommand writes its artifacts into the output
//! directory and updates `manifest.json`; defaults come from an optional
//! JSON config file, and command-line flags override the file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mealswap::pipeline::{run_pipeline, run_query, run_stats, RunConfig, Stage};
use mealswap::ranker::Method;
use mealswap::synth::{generate_corpus, SynthSpec};
use mealswap::Error;

#[derive(Parser)]
#[command(name = "mealswap", version, about, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-field overrides; a flag beats the file, which beats
/// the built-in default.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON config file with pipeline settings
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Taxonomy TSV (category, subcategory, entity, synonyms)
    #[arg(long, value_name = "FILE")]
    taxonomy: Option<PathBuf>,

    /// Meal log, one JSON object per line
    #[arg(long, value_name = "FILE")]
    meals: Option<PathBuf>,

    /// Directory receiving all artifacts
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Judgements CSV for the evaluate stage
    #[arg(long, value_name = "FILE")]
    judgements: Option<PathBuf>,

    /// Drop malformed meal lines instead of aborting
    #[arg(long)]
    skip_malformed: bool,

    /// Keep duplicate foods within a meal instead of collapsing them
    #[arg(long)]
    keep_duplicates: bool,

    /// Minimum pair count for a food to keep its matrix row
    #[arg(long)]
    min_row_count: Option<u64>,

    /// Minimum pair count for a context to keep its matrix column
    #[arg(long)]
    min_col_count: Option<u64>,

    /// Truncation rank of the SVD
    #[arg(long)]
    svd_k: Option<usize>,

    /// Seed for the randomized SVD
    #[arg(long)]
    svd_seed: Option<u64>,

    /// Extra random-projection columns beyond k
    #[arg(long)]
    oversampling: Option<usize>,

    /// Subspace power iterations
    #[arg(long)]
    power_iters: Option<usize>,

    /// Substitutes per ranked list
    #[arg(long)]
    rank_k: Option<usize>,

    /// Queries sampled by rank-all
    #[arg(long)]
    n_queries: Option<usize>,

    /// Seed for query sampling
    #[arg(long)]
    query_seed: Option<u64>,

    /// Comma-separated feature prefixes eligible queries must match
    #[arg(long, value_delimiter = ',')]
    query_filters: Option<Vec<String>>,

    /// Exclude candidates scoring at or below this threshold
    #[arg(long)]
    min_score: Option<f64>,

    /// Rank SVD candidates by cosine instead of dot product
    #[arg(long)]
    svd_cosine: bool,

    /// Comma-separated relevance thresholds for evaluate
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,

    /// Comma-separated methods to rank with (PPMI, SVD)
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,

    /// NDCG gain mapping: linear or exponential
    #[arg(long)]
    gain: Option<mealswap::eval::Gain>,
}

impl ConfigArgs {
    fn resolve(self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(taxonomy);
        set!(meals);
        set!(out_dir);
        set!(min_row_count);
        set!(min_col_count);
        set!(svd_k);
        set!(svd_seed);
        set!(oversampling);
        set!(power_iters);
        set!(rank_k);
        set!(n_queries);
        set!(query_seed);
        set!(query_filters);
        set!(taus);
        set!(methods);
        set!(gain);
        if let Some(path) = self.judgements {
            cfg.judgements = Some(path);
        }
        if let Some(t) = self.min_score {
            cfg.min_score = Some(t);
        }
        if self.skip_malformed {
            cfg.skip_malformed = true;
        }
        if self.keep_duplicates {
            cfg.keep_duplicates = true;
        }
        if self.svd_cosine {
            cfg.svd_cosine = true;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Normalize the meal log against the taxonomy
    Ingest(ConfigArgs),
    /// Count food-context pairs and weight the sparse matrix
    BuildMatrix(ConfigArgs),
    /// Factor the matrix into rank-k embeddings
    Svd(ConfigArgs),
    /// Rank substitutes for a single food key
    Query {
        #[command(flatten)]
        args: ConfigArgs,
        /// Canonical food key to query
        key: String,
        /// Similarity model to rank with
        #[arg(long, default_value = "PPMI")]
        method: Method,
        /// Number of substitutes to list
        #[arg(short, long)]
        k: Option<usize>,
    },
    /// Rank substitutes for a sampled set of queries
    RankAll(ConfigArgs),
    /// Score rankings against human judgements
    Evaluate(ConfigArgs),
    /// Jaccard co-occurrence of subcategories across ranked pairs
    Heatmap(ConfigArgs),
    /// Generate a synthetic corpus with planted substitute clusters
    Synth {
        /// Directory receiving meals.jsonl, taxonomy.tsv and clusters.tsv
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        n_clusters: usize,
        #[arg(long, default_value_t = 10)]
        foods_per_cluster: usize,
        #[arg(long, default_value_t = 100_000)]
        n_meals: usize,
        /// Smallest meal size
        #[arg(long, default_value_t = 2)]
        min_meal_size: usize,
        /// Largest meal size
        #[arg(long, default_value_t = 5)]
        max_meal_size: usize,
        /// Probability a meal reuses a pooled cluster template
        #[arg(long, default_value_t = 0.85)]
        affinity: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Summarize the raw corpus (users, meals, entries, coverage)
    Stats(ConfigArgs),
}

fn stage_summary(cfg: &RunConfig, stage: Stage) -> Result<(), Error> {
    let manifest = run_pipeline(cfg, &[stage])?;
    if let Some(record) = manifest.stage(stage) {
        let names: Vec<&str> = record.outputs.keys().map(String::as_str).collect();
        println!(
            "{stage}: wrote {} in {:.2}s",
            names.join(", "),
            record.seconds
        );
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Ingest(args) => stage_summary(&args.resolve()?, Stage::Ingest),
        Command::BuildMatrix(args) => stage_summary(&args.resolve()?, Stage::BuildMatrix),
        Command::Svd(args) => stage_summary(&args.resolve()?, Stage::Svd),
        Command::RankAll(args) => stage_summary(&args.resolve()?, Stage::RankAll),
        Command::Evaluate(args) => stage_summary(&args.resolve()?, Stage::Evaluate),
        Command::Heatmap(args) => stage_summary(&args.resolve()?, Stage::Heatmap),
        Command::Query {
            args,
            key,
            method,
            k,
        } => {
            let cfg = args.resolve()?;
            let k = k.unwrap_or(cfg.rank_k);
            let list = run_query(&cfg, &key, method, k)?;
            for (rank, (candidate, score)) in list.items.iter().enumerate() {
                println!("{}\t{candidate}\t{score:.6e}", rank + 1);
            }
            Ok(())
        }
        Command::Synth {
            out_dir,
            n_clusters,
            foods_per_cluster,
            n_meals,
            min_meal_size,
            max_meal_size,
            affinity,
            seed,
        } => {
            let spec = SynthSpec {
                n_clusters,
                foods_per_cluster,
                n_meals,
                meal_size_range: (min_meal_size, max_meal_size),
                within_cluster_context_affinity: affinity,
                seed,
            };
            let corpus = generate_corpus(&spec)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            corpus.write_meals(out_dir.join("meals.jsonl"))?;
            corpus.write_taxonomy(out_dir.join("taxonomy.tsv"))?;
            corpus.write_clusters(out_dir.join("clusters.tsv"))?;
            println!(
                "synth: {} meals over {} foods in {} clusters -> {}",
                n_meals,
                n_clusters * foods_per_cluster,
                n_clusters,
                out_dir.display()
            );
            Ok(())
        }
        Command::Stats(args) => {
            let cfg = args.resolve()?;
            let stats = run_stats(&cfg)?;
            println!("users\t{}", stats.users);
            println!("meals\t{}", stats.meals);
            println!("entries\t{}", stats.entries);
            println!("unique_entry_texts\t{}", stats.unique_entry_texts);
            println!("unique_food_keys\t{}", stats.unique_food_keys);
            println!(
                "entries_discarded\t{}\t({:.2}%)",
                stats.entries_discarded,
                if stats.entries == 0 {
                    0.0
                } else {
                    100.0 * stats.entries_discarded as f64 / stats.entries as f64
                }
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // clap's own exit convention reserves 2 for usage errors; here bad
    // arguments are validation failures (1) and 2 means an I/O failure
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
