//! Staged pipeline runner: each stage reads the previous stage's artifacts
//! from the output directory and appends its own, and a cumulative
//! `manifest.json` records the config, input digests, and per-stage timings
//! so any run can be reproduced or audited.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read as _, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    self, build_pair_counts, corpus_stats, preprocess_corpus, CorpusStats, Dedup, MealReader,
    OnMalformed, ProcessedMeal, Vocabulary,
};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, join_rankings, load_judgements, subcategory_cooccurrence, Gain};
use crate::ppmi::{build_ppmi_matrix, PpmiMatrix};
use crate::ranker::{
    rank_all, read_rankings, sample_queries, top_k_substitutes, write_rankings, Method, RankedList,
    Scorer,
};
use crate::svd::{truncated_svd, SvdModel};
use crate::taxonomy::{FoodKey, Taxonomy};

/// Artifact file names inside the output directory.
pub mod artifacts {
    pub const PROCESSED_MEALS: &str = "meals.processed.jsonl";
    pub const INGEST_STATS: &str = "ingest_stats.json";
    pub const ROW_VOCAB: &str = "row_vocab.tsv";
    pub const COL_VOCAB: &str = "col_vocab.tsv";
    pub const MATRIX: &str = "matrix.ppmi";
    pub const MODEL: &str = "model.svd";
    pub const RANKINGS: &str = "rankings.tsv";
    pub const METRICS: &str = "metrics.tsv";
    pub const HEATMAP: &str = "heatmap.csv";
    pub const MANIFEST: &str = "manifest.json";
}

/// The six pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    BuildMatrix,
    Svd,
    RankAll,
    Evaluate,
    Heatmap,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::BuildMatrix,
        Stage::Svd,
        Stage::RankAll,
        Stage::Evaluate,
        Stage::Heatmap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::BuildMatrix => "build-matrix",
            Stage::Svd => "svd",
            Stage::RankAll => "rank-all",
            Stage::Evaluate => "evaluate",
            Stage::Heatmap => "heatmap",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|stage| stage.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown stage \"{s}\"")))
    }
}

/// Full pipeline configuration. Loadable from JSON; every field has a
/// default so a config file only lists what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Taxonomy TSV path.
    pub taxonomy: PathBuf,
    /// meals.jsonl path.
    pub meals: PathBuf,
    /// Directory receiving all artifacts.
    pub out_dir: PathBuf,
    /// Judgements CSV; required only by the evaluate stage.
    pub judgements: Option<PathBuf>,
    /// Drop malformed meal lines instead of aborting.
    pub skip_malformed: bool,
    /// Keep duplicate foods within a meal instead of collapsing them.
    pub keep_duplicates: bool,
    pub min_row_count: u64,
    pub min_col_count: u64,
    pub svd_k: usize,
    pub svd_seed: u64,
    pub oversampling: usize,
    pub power_iters: usize,
    /// List length for ranking stages.
    pub rank_k: usize,
    pub n_queries: usize,
    pub query_seed: u64,
    /// Feature prefixes eligible queries must match; empty admits all keys.
    pub query_filters: Vec<String>,
    /// Exclude candidates scoring at or below this instead of zero-padding.
    pub min_score: Option<f64>,
    /// Rank SVD candidates by cosine instead of dot product.
    pub svd_cosine: bool,
    /// Relevance thresholds for the evaluate stage.
    pub taus: Vec<f64>,
    pub methods: Vec<Method>,
    pub gain: Gain,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            taxonomy: PathBuf::new(),
            meals: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            judgements: None,
            skip_malformed: false,
            keep_duplicates: false,
            min_row_count: 5,
            min_col_count: 1,
            svd_k: 500,
            svd_seed: 42,
            oversampling: 10,
            power_iters: 4,
            rank_k: 10,
            n_queries: 100,
            query_seed: 42,
            query_filters: vec![
                "meats:".to_owned(),
                "beans and legumes:".to_owned(),
                "nuts and seeds:".to_owned(),
            ],
            min_score: None,
            svd_cosine: false,
            taus: vec![3.0, 4.0],
            methods: vec![Method::Ppmi, Method::Svd],
            gain: Gain::Linear,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    /// Checks every statically-checkable field and reports all problems at
    /// once rather than one per run.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.out_dir.as_os_str().is_empty() {
            errors.push("out_dir must not be empty".to_owned());
        }
        if self.min_row_count == 0 {
            errors.push("min_row_count must be at least 1".to_owned());
        }
        if self.min_col_count == 0 {
            errors.push("min_col_count must be at least 1".to_owned());
        }
        if self.svd_k == 0 {
            errors.push("svd_k must be at least 1".to_owned());
        }
        if self.rank_k == 0 {
            errors.push("rank_k must be at least 1".to_owned());
        }
        if self.n_queries == 0 {
            errors.push("n_queries must be at least 1".to_owned());
        }
        if self.taus.is_empty() {
            errors.push("taus must not be empty".to_owned());
        }
        if self.taus.iter().any(|t| !t.is_finite()) {
            errors.push("taus must be finite".to_owned());
        }
        if self.methods.is_empty() {
            errors.push("methods must not be empty".to_owned());
        }
        let mut seen = Vec::new();
        for m in &self.methods {
            if seen.contains(m) {
                errors.push(format!("method {m} listed twice"));
            }
            seen.push(*m);
        }
        if let Some(t) = self.min_score {
            if !t.is_finite() {
                errors.push("min_score must be finite".to_owned());
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn dedup(&self) -> Dedup {
        if self.keep_duplicates {
            Dedup::Keep
        } else {
            Dedup::Collapse
        }
    }

    fn require(&self, name: &str, produced_by: Stage) -> Result<PathBuf> {
        let path = self.artifact(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact {
                path,
                stage: produced_by.name().to_owned(),
            })
        }
    }
}

/// Per-stage record in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seconds: f64,
    /// Artifact file name -> SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

/// Reproducibility record accumulated across stage invocations against the
/// same output directory. Changing the config starts a fresh manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    /// Input path -> SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// One record per completed stage, in pipeline order.
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    fn fresh(config: &RunConfig) -> Manifest {
        Manifest {
            config: config.clone(),
            inputs: BTreeMap::new(),
            stages: Vec::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage.name())
    }

    /// Inserts or replaces a stage record, keeping pipeline order.
    fn upsert(&mut self, record: StageRecord) {
        let order =
            |name: &str| Stage::ALL.iter().position(|s| s.name() == name).unwrap_or(usize::MAX);
        if let Some(existing) = self.stages.iter_mut().find(|r| r.stage == record.stage) {
            *existing = record;
        } else {
            let at = self
                .stages
                .partition_point(|r| order(&r.stage) < order(&record.stage));
            self.stages.insert(at, record);
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(format!("unserializable manifest: {e}")))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// SHA-256 of a file's bytes as lowercase hex.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_processed(path: &Path, meals: &[ProcessedMeal]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for meal in meals {
        let line = serde_json::to_string(meal)
            .map_err(|e| Error::InvalidInput(format!("unserializable meal: {e}")))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_processed(path: &Path) -> Result<Vec<ProcessedMeal>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut meals = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let meal: ProcessedMeal =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        meals.push(meal);
    }
    Ok(meals)
}

/// What ingest writes to `ingest_stats.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestStats {
    pub meals: usize,
    pub malformed_lines_skipped: usize,
    pub entries_total: usize,
    pub entries_discarded: usize,
    pub discard_rate: f64,
}

fn stage_ingest(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let taxonomy = Taxonomy::load(&cfg.taxonomy)?;
    let policy = if cfg.skip_malformed {
        OnMalformed::Skip
    } else {
        OnMalformed::Abort
    };
    let (records, skipped) = MealReader::open(&cfg.meals)?.read_all(policy)?;
    let (meals, stats) = preprocess_corpus(&records, &taxonomy, cfg.dedup());
    let processed_path = cfg.artifact(artifacts::PROCESSED_MEALS);
    write_processed(&processed_path, &meals)?;
    let stats_path = cfg.artifact(artifacts::INGEST_STATS);
    let ingest_stats = IngestStats {
        meals: meals.len(),
        malformed_lines_skipped: skipped,
        entries_total: stats.entries_total,
        entries_discarded: stats.entries_discarded,
        discard_rate: stats.discard_rate(),
    };
    let text = serde_json::to_string_pretty(&ingest_stats)
        .map_err(|e| Error::InvalidInput(format!("unserializable stats: {e}")))?;
    std::fs::write(&stats_path, text + "\n").map_err(|e| Error::io(&stats_path, e))?;
    Ok(vec![processed_path, stats_path])
}

fn stage_build_matrix(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let processed = read_processed(&cfg.require(artifacts::PROCESSED_MEALS, Stage::Ingest)?)?;
    let (counts, row_vocab, col_vocab) =
        build_pair_counts(&processed, cfg.min_row_count, cfg.min_col_count)?;
    let matrix = build_ppmi_matrix(&counts, row_vocab, col_vocab)?;
    let row_path = cfg.artifact(artifacts::ROW_VOCAB);
    let col_path = cfg.artifact(artifacts::COL_VOCAB);
    let matrix_path = cfg.artifact(artifacts::MATRIX);
    matrix.row_vocab().write_tsv(&row_path)?;
    matrix.col_vocab().write_tsv(&col_path)?;
    matrix.write(&matrix_path)?;
    Ok(vec![row_path, col_path, matrix_path])
}

fn load_matrix(cfg: &RunConfig) -> Result<PpmiMatrix> {
    let row_vocab = Vocabulary::read_tsv(cfg.require(artifacts::ROW_VOCAB, Stage::BuildMatrix)?)?;
    let col_vocab = Vocabulary::read_tsv(cfg.require(artifacts::COL_VOCAB, Stage::BuildMatrix)?)?;
    PpmiMatrix::read(
        cfg.require(artifacts::MATRIX, Stage::BuildMatrix)?,
        row_vocab,
        col_vocab,
    )
}

fn stage_svd(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let matrix = load_matrix(cfg)?;
    let model = truncated_svd(
        matrix.csr(),
        cfg.svd_k,
        cfg.svd_seed,
        cfg.oversampling,
        cfg.power_iters,
    )?;
    let model_path = cfg.artifact(artifacts::MODEL);
    model.write(&model_path)?;
    Ok(vec![model_path])
}

fn make_scorer<'a>(
    cfg: &RunConfig,
    method: Method,
    matrix: &'a PpmiMatrix,
    model: Option<&'a SvdModel>,
) -> Result<Scorer<'a>> {
    let scorer = match method {
        Method::Ppmi => Scorer::ppmi(matrix),
        Method::Svd => {
            let model = model.ok_or_else(|| {
                Error::InvalidInput("SVD method requested but no model loaded".into())
            })?;
            if cfg.svd_cosine {
                Scorer::svd_cosine(model, matrix.row_vocab())?
            } else {
                Scorer::svd(model, matrix.row_vocab())?
            }
        }
    };
    Ok(match cfg.min_score {
        Some(t) => scorer.with_min_score(t),
        None => scorer,
    })
}

fn stage_rank_all(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let matrix = load_matrix(cfg)?;
    let model = if cfg.methods.contains(&Method::Svd) {
        Some(SvdModel::read(cfg.require(artifacts::MODEL, Stage::Svd)?)?)
    } else {
        None
    };
    let queries = sample_queries(
        matrix.row_vocab(),
        &cfg.query_filters,
        cfg.n_queries,
        cfg.query_seed,
    )?;
    let mut lists: Vec<RankedList> = Vec::with_capacity(cfg.methods.len() * queries.len());
    for &method in &cfg.methods {
        let scorer = make_scorer(cfg, method, &matrix, model.as_ref())?;
        lists.extend(rank_all(&scorer, &queries, cfg.rank_k)?);
    }
    let path = cfg.artifact(artifacts::RANKINGS);
    write_rankings(&path, &lists)?;
    Ok(vec![path])
}

fn stage_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let rankings = read_rankings(cfg.require(artifacts::RANKINGS, Stage::RankAll)?)?;
    let judgements_path = cfg.judgements.as_ref().ok_or_else(|| {
        Error::Config(vec!["judgements path is required for evaluate".to_owned()])
    })?;
    let judgements = load_judgements(judgements_path)?;
    let joined = join_rankings(&rankings, &judgements)?;
    let rows = compute_metrics(&joined, &cfg.taus, cfg.gain)?;
    let path = cfg.artifact(artifacts::METRICS);
    crate::eval::write_metrics(&path, &rows, cfg.gain)?;
    Ok(vec![path])
}

fn stage_heatmap(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let rankings = read_rankings(cfg.require(artifacts::RANKINGS, Stage::RankAll)?)?;
    let pairs: Vec<(FoodKey, FoodKey)> = rankings
        .iter()
        .flat_map(|list| {
            list.items
                .iter()
                .map(|(cand, _)| (list.query.clone(), cand.clone()))
        })
        .collect();
    let matrix = subcategory_cooccurrence(&pairs);
    let path = cfg.artifact(artifacts::HEATMAP);
    matrix.write_csv(&path)?;
    Ok(vec![path])
}

fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<Vec<PathBuf>> {
    match stage {
        Stage::Ingest => stage_ingest(cfg),
        Stage::BuildMatrix => stage_build_matrix(cfg),
        Stage::Svd => stage_svd(cfg),
        Stage::RankAll => stage_rank_all(cfg),
        Stage::Evaluate => stage_evaluate(cfg),
        Stage::Heatmap => stage_heatmap(cfg),
    }
}

/// Runs the requested stages in pipeline order and updates `manifest.json`.
/// Later invocations against the same output directory extend the same
/// manifest, so running the stages one CLI call at a time ends with a
/// complete record.
pub fn run_pipeline(cfg: &RunConfig, stages: &[Stage]) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let manifest_path = cfg.artifact(artifacts::MANIFEST);
    let mut manifest = match Manifest::load(&manifest_path) {
        Ok(m) if m.config == *cfg => m,
        _ => Manifest::fresh(cfg),
    };
    for input in [Some(&cfg.taxonomy), Some(&cfg.meals), cfg.judgements.as_ref()]
        .into_iter()
        .flatten()
    {
        if input.is_file() {
            manifest
                .inputs
                .insert(input.display().to_string(), sha256_file(input)?);
        }
    }
    for stage in Stage::ALL {
        if !stages.contains(&stage) {
            continue;
        }
        let start = Instant::now();
        let outputs = run_stage(cfg, stage)?;
        let seconds = start.elapsed().as_secs_f64();
        let mut digests = BTreeMap::new();
        for path in &outputs {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            digests.insert(name, sha256_file(path)?);
        }
        manifest.upsert(StageRecord {
            stage: stage.name().to_owned(),
            seconds,
            outputs: digests,
        });
    }
    manifest.write(&manifest_path)?;
    Ok(manifest)
}

/// Ranks substitutes for a single key against the artifacts in `out_dir`.
pub fn run_query(cfg: &RunConfig, key: &str, method: Method, k: usize) -> Result<RankedList> {
    cfg.validate()?;
    let matrix = load_matrix(cfg)?;
    let model = if method == Method::Svd {
        Some(SvdModel::read(cfg.require(artifacts::MODEL, Stage::Svd)?)?)
    } else {
        None
    };
    let scorer = make_scorer(cfg, method, &matrix, model.as_ref())?;
    // a string that is not even a well-formed key gets the same
    // nearest-neighbour suggestions as a well-formed but absent one
    let query = match FoodKey::parse(key) {
        Ok(q) => q,
        Err(_) => return Err(crate::ranker::unknown_key_error(matrix.row_vocab(), key)),
    };
    top_k_substitutes(&scorer, &query, k)
}

/// Corpus shape report for the raw inputs.
pub fn run_stats(cfg: &RunConfig) -> Result<CorpusStats> {
    let taxonomy = Taxonomy::load(&cfg.taxonomy)?;
    let records = corpus::load_meals(&cfg.meals)?;
    Ok(corpus_stats(&records, &taxonomy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{write_judgements, Judgement};
    use crate::synth::{generate_corpus, SynthSpec};

    fn synth_inputs(dir: &Path) -> RunConfig {
        let spec = SynthSpec {
            n_clusters: 6,
            foods_per_cluster: 3,
            n_meals: 600,
            meal_size_range: (2, 3),
            within_cluster_context_affinity: 0.9,
            seed: 5,
        };
        let corpus = generate_corpus(&spec).unwrap();
        corpus.write_meals(dir.join("meals.jsonl")).unwrap();
        corpus.write_taxonomy(dir.join("taxonomy.tsv")).unwrap();
        RunConfig {
            taxonomy: dir.join("taxonomy.tsv"),
            meals: dir.join("meals.jsonl"),
            out_dir: dir.join("out"),
            // fixed up front so the config stays equal across invocations;
            // the file itself is written just before the evaluate stage
            judgements: Some(dir.join("judgements.csv")),
            min_row_count: 1,
            min_col_count: 1,
            svd_k: 6,
            oversampling: 6,
            rank_k: 5,
            n_queries: 8,
            query_filters: vec!["synthetic:".to_owned()],
            ..RunConfig::default()
        }
    }

    fn fabricate_judgements(cfg: &RunConfig) {
        // deterministic ratings keyed off the rank so evaluate has input
        let rankings = read_rankings(cfg.out_dir.join(artifacts::RANKINGS)).unwrap();
        let mut judgements = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for list in &rankings {
            for (rank, (cand, _)) in list.items.iter().enumerate() {
                if seen.insert((list.query.clone(), cand.clone(), list.method)) {
                    judgements.push(Judgement {
                        query: list.query.clone(),
                        candidate: cand.clone(),
                        method: list.method,
                        ratings: vec![(7 - rank.min(6)) as u8],
                    });
                }
            }
        }
        write_judgements(cfg.judgements.as_ref().unwrap(), &judgements).unwrap();
    }

    #[test]
    fn staged_invocations_accumulate_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_inputs(dir.path());
        run_pipeline(&cfg, &[Stage::Ingest]).unwrap();
        run_pipeline(&cfg, &[Stage::BuildMatrix]).unwrap();
        run_pipeline(&cfg, &[Stage::Svd]).unwrap();
        run_pipeline(&cfg, &[Stage::RankAll]).unwrap();
        fabricate_judgements(&cfg);
        run_pipeline(&cfg, &[Stage::Evaluate]).unwrap();
        let manifest = run_pipeline(&cfg, &[Stage::Heatmap]).unwrap();
        assert_eq!(manifest.stages.len(), 6);
        let names: Vec<&str> = manifest.stages.iter().map(|r| r.stage.as_str()).collect();
        assert_eq!(
            names,
            ["ingest", "build-matrix", "svd", "rank-all", "evaluate", "heatmap"]
        );
        for name in [
            artifacts::PROCESSED_MEALS,
            artifacts::INGEST_STATS,
            artifacts::ROW_VOCAB,
            artifacts::COL_VOCAB,
            artifacts::MATRIX,
            artifacts::MODEL,
            artifacts::RANKINGS,
            artifacts::METRICS,
            artifacts::HEATMAP,
            artifacts::MANIFEST,
        ] {
            assert!(cfg.out_dir.join(name).is_file(), "missing {name}");
        }
        // the manifest on disk round-trips and digests are well-formed hex
        let loaded = Manifest::load(cfg.out_dir.join(artifacts::MANIFEST)).unwrap();
        assert_eq!(loaded.stages.len(), 6);
        for record in &loaded.stages {
            for digest in record.outputs.values() {
                assert_eq!(digest.len(), 64);
                assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
            }
        }
        assert!(loaded.inputs.len() >= 2);
    }

    #[test]
    fn reruns_are_deterministic_where_it_matters() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_inputs(dir.path());
        let stages = [Stage::Ingest, Stage::BuildMatrix, Stage::Svd, Stage::RankAll];
        run_pipeline(&cfg, &stages).unwrap();
        let first = std::fs::read(cfg.out_dir.join(artifacts::RANKINGS)).unwrap();
        run_pipeline(&cfg, &stages).unwrap();
        let second = std::fs::read(cfg.out_dir.join(artifacts::RANKINGS)).unwrap();
        assert_eq!(first, second);
        let manifest = Manifest::load(cfg.out_dir.join(artifacts::MANIFEST)).unwrap();
        // rerunning replaced the records rather than appending
        assert_eq!(manifest.stages.len(), 4);
    }

    #[test]
    fn missing_prerequisites_name_the_stage_to_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_inputs(dir.path());
        let err = run_pipeline(&cfg, &[Stage::Svd]).unwrap_err();
        match err {
            Error::MissingArtifact { stage, .. } => assert_eq!(stage, "build-matrix"),
            other => panic!("expected MissingArtifact, got {other}"),
        }
        let err = run_pipeline(&cfg, &[Stage::Heatmap]).unwrap_err();
        match err {
            Error::MissingArtifact { stage, .. } => assert_eq!(stage, "rank-all"),
            other => panic!("expected MissingArtifact, got {other}"),
        }
    }

    #[test]
    fn config_validation_reports_everything_at_once() {
        let cfg = RunConfig {
            min_row_count: 0,
            svd_k: 0,
            taus: vec![],
            methods: vec![Method::Ppmi, Method::Ppmi],
            ..RunConfig::default()
        };
        match cfg.validate().unwrap_err() {
            Error::Config(errors) => {
                assert_eq!(errors.len(), 4, "{errors:?}");
            }
            other => panic!("expected Config, got {other}"),
        }
    }

    #[test]
    fn config_json_round_trips_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"taxonomy": "t.tsv", "meals": "m.jsonl", "svd_k": 32, "taus": [3.5]}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.taxonomy, PathBuf::from("t.tsv"));
        assert_eq!(cfg.svd_k, 32);
        assert_eq!(cfg.taus, vec![3.5]);
        // untouched fields keep their defaults
        assert_eq!(cfg.min_row_count, 5);
        assert_eq!(cfg.methods, vec![Method::Ppmi, Method::Svd]);
        // unknown fields are rejected, catching typos
        std::fs::write(&path, r#"{"svdk": 32}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn query_and_stats_run_against_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_inputs(dir.path());
        run_pipeline(&cfg, &[Stage::Ingest, Stage::BuildMatrix, Stage::Svd]).unwrap();
        let matrix = load_matrix(&cfg).unwrap();
        let key = matrix.row_vocab().key(0).as_str().to_owned();
        let list = run_query(&cfg, &key, Method::Ppmi, 3).unwrap();
        assert_eq!(list.items.len(), 3);
        let list = run_query(&cfg, &key, Method::Svd, 3).unwrap();
        assert_eq!(list.method, Method::Svd);
        assert_eq!(list.items.len(), 3);
        let stats = run_stats(&cfg).unwrap();
        assert_eq!(stats.meals, 600);
        assert_eq!(stats.unique_food_keys, 18);
        assert_eq!(stats.entries_discarded, 0);
    }

    #[test]
    fn changing_the_config_starts_a_fresh_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synth_inputs(dir.path());
        run_pipeline(&cfg, &[Stage::Ingest, Stage::BuildMatrix]).unwrap();
        cfg.min_row_count = 2;
        let manifest = run_pipeline(&cfg, &[Stage::Ingest]).unwrap();
        // build-matrix's record is gone: it belongs to the old config
        assert_eq!(manifest.stages.len(), 1);
        assert_eq!(manifest.stages[0].stage, "ingest");
    }
}
