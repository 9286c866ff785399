//! Meal-log ingestion and food-context pair counting.
//!
//! A meal is the context window: for a processed meal with foods
//! {x1..xn}, every ordered pair (xi, xj) with i ≠ j contributes one
//! food-context observation. The multiset of all such pairs is D; row and
//! column vocabularies are built over it after a single count-threshold
//! filtering pass.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::taxonomy::{FoodKey, Taxonomy};

/// One logged meal, straight from the meal-log file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MealRecord {
    pub user_id: String,
    pub date: NaiveDate,
    pub meal_name: String,
    #[serde(rename = "entries")]
    pub raw_entries: Vec<String>,
}

/// What to do with a malformed meal-log line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnMalformed {
    /// Fail on the first bad line (default).
    #[default]
    Abort,
    /// Drop bad lines and keep a count.
    Skip,
}

/// Streaming reader over a meals.jsonl file. Yields records in file order;
/// whitespace-only lines are skipped.
pub struct MealReader {
    lines: std::io::Lines<BufReader<File>>,
    path: PathBuf,
    line_no: usize,
}

impl MealReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(MealReader {
            lines: BufReader::new(file).lines(),
            path,
            line_no: 0,
        })
    }

    fn parse_line(&self, line: &str) -> Result<MealRecord> {
        let record: MealRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(&self.path, self.line_no, e.to_string()))?;
        if record.raw_entries.is_empty() {
            return Err(Error::parse(
                &self.path,
                self.line_no,
                "meal has no entries",
            ));
        }
        Ok(record)
    }

    /// Drains the stream into memory under the given malformed-line policy,
    /// returning the records plus the number of lines skipped.
    pub fn read_all(self, policy: OnMalformed) -> Result<(Vec<MealRecord>, usize)> {
        let mut records = Vec::new();
        let mut skipped = 0;
        for item in self {
            match item {
                Ok(record) => records.push(record),
                Err(e @ Error::Io { .. }) => return Err(e),
                Err(e) => match policy {
                    OnMalformed::Abort => return Err(e),
                    OnMalformed::Skip => skipped += 1,
                },
            }
        }
        Ok((records, skipped))
    }
}

impl Iterator for MealReader {
    type Item = Result<MealRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line_no += 1;
            match self.lines.next()? {
                Err(e) => return Some(Err(Error::io(&self.path, e))),
                Ok(line) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    return Some(self.parse_line(&line));
                }
            }
        }
    }
}

/// Loads a whole meals.jsonl file; aborts on the first malformed line.
pub fn load_meals(path: impl AsRef<Path>) -> Result<Vec<MealRecord>> {
    let (records, _) = MealReader::open(path)?.read_all(OnMalformed::Abort)?;
    Ok(records)
}

/// Writes records as meals.jsonl, one JSON object per line.
pub fn write_meals(path: impl AsRef<Path>, records: &[MealRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::InvalidInput(format!("unserializable record: {e}")))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Within-meal duplicate handling for normalized foods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dedup {
    /// Collapse duplicate keys so a pair is counted once per meal (default).
    #[default]
    Collapse,
    /// Keep duplicates; repeated loggings inflate pair counts.
    Keep,
}

/// A meal after normalization: canonical food keys, sorted; deduplicated
/// unless [`Dedup::Keep`] was requested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedMeal {
    pub foods: Vec<FoodKey>,
}

/// How many raw entries the taxonomy could not match.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardStats {
    pub entries_total: usize,
    pub entries_discarded: usize,
}

impl DiscardStats {
    pub fn discard_rate(&self) -> f64 {
        if self.entries_total == 0 {
            0.0
        } else {
            self.entries_discarded as f64 / self.entries_total as f64
        }
    }
}

fn process_one(record: &MealRecord, taxonomy: &Taxonomy, dedup: Dedup) -> (ProcessedMeal, DiscardStats) {
    let mut stats = DiscardStats::default();
    let mut foods = Vec::new();
    for entry in &record.raw_entries {
        stats.entries_total += 1;
        match taxonomy.key_for(entry) {
            Ok(key) => foods.push(key),
            Err(Error::EmptyFeatureSet) => stats.entries_discarded += 1,
            // key_for only fails with EmptyFeatureSet
            Err(_) => unreachable!("extraction does not fail"),
        }
    }
    foods.sort();
    if dedup == Dedup::Collapse {
        foods.dedup();
    }
    (ProcessedMeal { foods }, stats)
}

fn merge_stats(a: DiscardStats, b: DiscardStats) -> DiscardStats {
    DiscardStats {
        entries_total: a.entries_total + b.entries_total,
        entries_discarded: a.entries_discarded + b.entries_discarded,
    }
}

/// Normalizes every meal against the taxonomy. Entries with no salient
/// features are dropped and counted; meals may end up with fewer than two
/// foods (they simply contribute no pairs downstream).
pub fn preprocess_corpus(
    records: &[MealRecord],
    taxonomy: &Taxonomy,
    dedup: Dedup,
) -> (Vec<ProcessedMeal>, DiscardStats) {
    #[cfg(feature = "parallel")]
    {
        preprocess_corpus_par(records, taxonomy, dedup)
    }
    #[cfg(not(feature = "parallel"))]
    {
        preprocess_corpus_seq(records, taxonomy, dedup)
    }
}

pub fn preprocess_corpus_seq(
    records: &[MealRecord],
    taxonomy: &Taxonomy,
    dedup: Dedup,
) -> (Vec<ProcessedMeal>, DiscardStats) {
    let mut meals = Vec::with_capacity(records.len());
    let mut stats = DiscardStats::default();
    for record in records {
        let (meal, s) = process_one(record, taxonomy, dedup);
        meals.push(meal);
        stats = merge_stats(stats, s);
    }
    (meals, stats)
}

#[cfg(feature = "parallel")]
pub fn preprocess_corpus_par(
    records: &[MealRecord],
    taxonomy: &Taxonomy,
    dedup: Dedup,
) -> (Vec<ProcessedMeal>, DiscardStats) {
    let (meals, stats): (Vec<ProcessedMeal>, Vec<DiscardStats>) = records
        .par_iter()
        .map(|record| process_one(record, taxonomy, dedup))
        .unzip();
    let stats = stats
        .into_iter()
        .fold(DiscardStats::default(), merge_stats);
    (meals, stats)
}

/// An id-assigned food vocabulary with per-key totals over D.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    keys: Vec<FoodKey>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Assigns ids by descending count, ties broken by ascending key.
    pub fn from_counts(mut entries: Vec<(FoodKey, u64)>) -> Vocabulary {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut keys = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (key, count) in entries {
            index.insert(key.as_str().to_owned(), keys.len());
            keys.push(key);
            counts.push(count);
        }
        Vocabulary { keys, counts, index }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, id: usize) -> &FoodKey {
        &self.keys[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn id_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn keys(&self) -> &[FoodKey] {
        &self.keys
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &FoodKey, u64)> {
        self.keys
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(id, (key, &count))| (id, key, count))
    }

    /// Writes `id<TAB>key<TAB>count` lines.
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for (id, key, count) in self.iter() {
            writeln!(out, "{id}\t{key}\t{count}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut keys = Vec::new();
        let mut counts = Vec::new();
        let mut index = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(path, line_no, "expected id<TAB>key<TAB>count"));
            }
            let id: usize = cols[0]
                .parse()
                .map_err(|_| Error::parse(path, line_no, "bad id"))?;
            if id != keys.len() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("ids must be contiguous; expected {}, found {id}", keys.len()),
                ));
            }
            let key = FoodKey::parse(cols[1]).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
            let count: u64 = cols[2]
                .parse()
                .map_err(|_| Error::parse(path, line_no, "bad count"))?;
            if index.insert(key.as_str().to_owned(), id).is_some() {
                return Err(Error::parse(path, line_no, "duplicate key"));
            }
            keys.push(key);
            counts.push(count);
        }
        Ok(Vocabulary { keys, counts, index })
    }
}

/// Co-occurrence counts over the (filtered) pair multiset D.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairCounts {
    pair_count: HashMap<(usize, usize), u64>,
    f_count: Vec<u64>,
    c_count: Vec<u64>,
    total: u64,
}

impl PairCounts {
    pub fn pair(&self, f: usize, c: usize) -> u64 {
        self.pair_count.get(&(f, c)).copied().unwrap_or(0)
    }

    pub fn f_count(&self, f: usize) -> u64 {
        self.f_count[f]
    }

    pub fn c_count(&self, c: usize) -> u64 {
        self.c_count[c]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of row ids covered (the row vocabulary size).
    pub fn n_rows(&self) -> usize {
        self.f_count.len()
    }

    /// Number of column ids covered (the column vocabulary size).
    pub fn n_cols(&self) -> usize {
        self.c_count.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.pair_count.iter().map(|(&k, &v)| (k, v))
    }

    pub fn n_pairs(&self) -> usize {
        self.pair_count.len()
    }
}

#[derive(Default, Clone)]
struct RawCounts {
    pair: HashMap<(usize, usize), u64>,
    f: Vec<u64>,
    c: Vec<u64>,
    total: u64,
}

impl RawCounts {
    fn new(n: usize) -> Self {
        RawCounts {
            pair: HashMap::new(),
            f: vec![0; n],
            c: vec![0; n],
            total: 0,
        }
    }

    fn add_meal(&mut self, foods: &[usize]) {
        for (i, &fi) in foods.iter().enumerate() {
            for (j, &cj) in foods.iter().enumerate() {
                if i == j {
                    continue;
                }
                *self.pair.entry((fi, cj)).or_insert(0) += 1;
                self.f[fi] += 1;
                self.c[cj] += 1;
                self.total += 1;
            }
        }
    }

    fn merge(mut self, other: RawCounts) -> RawCounts {
        for (k, v) in other.pair {
            *self.pair.entry(k).or_insert(0) += v;
        }
        for (a, b) in self.f.iter_mut().zip(&other.f) {
            *a += b;
        }
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += b;
        }
        self.total += other.total;
        self
    }
}

fn intern_keys(meals: &[ProcessedMeal]) -> (Vec<&FoodKey>, HashMap<&str, usize>) {
    let set: BTreeSet<&FoodKey> = meals.iter().flat_map(|m| m.foods.iter()).collect();
    let keys: Vec<&FoodKey> = set.into_iter().collect();
    let ids = keys
        .iter()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();
    (keys, ids)
}

fn finish_pair_counts(
    keys: Vec<&FoodKey>,
    raw: RawCounts,
    min_row_count: u64,
    min_col_count: u64,
) -> Result<(PairCounts, Vocabulary, Vocabulary)> {
    let n = keys.len();
    // Survivors are decided on the unfiltered counts; counts are then
    // recomputed over the filtered pairs in a single pass (no cascade).
    let row_keep: Vec<bool> = (0..n).map(|i| raw.f[i] >= min_row_count).collect();
    let col_keep: Vec<bool> = (0..n).map(|i| raw.c[i] >= min_col_count).collect();

    let mut f_new = vec![0u64; n];
    let mut c_new = vec![0u64; n];
    let mut total = 0u64;
    let mut kept: Vec<((usize, usize), u64)> = Vec::new();
    for (&(fi, cj), &v) in &raw.pair {
        if row_keep[fi] && col_keep[cj] {
            kept.push(((fi, cj), v));
            f_new[fi] += v;
            c_new[cj] += v;
            total += v;
        }
    }

    let row_entries: Vec<(FoodKey, u64)> = (0..n)
        .filter(|&i| row_keep[i])
        .map(|i| (keys[i].clone(), f_new[i]))
        .collect();
    let col_entries: Vec<(FoodKey, u64)> = (0..n)
        .filter(|&i| col_keep[i])
        .map(|i| (keys[i].clone(), c_new[i]))
        .collect();
    if row_entries.is_empty() || col_entries.is_empty() {
        return Err(Error::CorpusTooSmall(format!(
            "no vocabulary entries survive min_row_count={min_row_count}, min_col_count={min_col_count}"
        )));
    }
    let row_vocab = Vocabulary::from_counts(row_entries);
    let col_vocab = Vocabulary::from_counts(col_entries);

    let mut pair_count = HashMap::with_capacity(kept.len());
    let mut f_count = vec![0u64; row_vocab.len()];
    let mut c_count = vec![0u64; col_vocab.len()];
    for ((fi, cj), v) in kept {
        let r = row_vocab.id_of(keys[fi].as_str()).expect("kept row in vocab");
        let c = col_vocab.id_of(keys[cj].as_str()).expect("kept col in vocab");
        pair_count.insert((r, c), v);
        f_count[r] = f_new[fi];
        c_count[c] = c_new[cj];
    }

    Ok((
        PairCounts {
            pair_count,
            f_count,
            c_count,
            total,
        },
        row_vocab,
        col_vocab,
    ))
}

/// Builds the pair multiset D and its vocabularies. See the module docs for
/// the pairing rule; rows below `min_row_count` and columns below
/// `min_col_count` (measured before filtering) are removed, then counts are
/// recomputed over the surviving pairs.
pub fn build_pair_counts(
    meals: &[ProcessedMeal],
    min_row_count: u64,
    min_col_count: u64,
) -> Result<(PairCounts, Vocabulary, Vocabulary)> {
    #[cfg(feature = "parallel")]
    {
        build_pair_counts_par(meals, min_row_count, min_col_count)
    }
    #[cfg(not(feature = "parallel"))]
    {
        build_pair_counts_seq(meals, min_row_count, min_col_count)
    }
}

pub fn build_pair_counts_seq(
    meals: &[ProcessedMeal],
    min_row_count: u64,
    min_col_count: u64,
) -> Result<(PairCounts, Vocabulary, Vocabulary)> {
    let (keys, ids) = intern_keys(meals);
    let mut raw = RawCounts::new(keys.len());
    let mut id_buf = Vec::new();
    for meal in meals {
        id_buf.clear();
        id_buf.extend(meal.foods.iter().map(|k| ids[k.as_str()]));
        raw.add_meal(&id_buf);
    }
    finish_pair_counts(keys, raw, min_row_count, min_col_count)
}

#[cfg(feature = "parallel")]
pub fn build_pair_counts_par(
    meals: &[ProcessedMeal],
    min_row_count: u64,
    min_col_count: u64,
) -> Result<(PairCounts, Vocabulary, Vocabulary)> {
    let (keys, ids) = intern_keys(meals);
    let n = keys.len();
    // Integer counts merge commutatively, so sharding over meal chunks is
    // exact, not just approximately equal to the sequential result.
    let raw = meals
        .par_chunks(1024)
        .map(|chunk| {
            let mut local = RawCounts::new(n);
            let mut id_buf = Vec::new();
            for meal in chunk {
                id_buf.clear();
                id_buf.extend(meal.foods.iter().map(|k| ids[k.as_str()]));
                local.add_meal(&id_buf);
            }
            local
        })
        .reduce(|| RawCounts::new(n), RawCounts::merge);
    finish_pair_counts(keys, raw, min_row_count, min_col_count)
}

/// Corpus shape in the style of a data-statistics table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub meals: usize,
    pub entries: usize,
    pub unique_entry_texts: usize,
    pub unique_food_keys: usize,
    pub entries_discarded: usize,
}

pub fn corpus_stats(records: &[MealRecord], taxonomy: &Taxonomy) -> CorpusStats {
    let users: BTreeSet<&str> = records.iter().map(|r| r.user_id.as_str()).collect();
    let texts: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.raw_entries.iter().map(String::as_str))
        .collect();
    let (meals, stats) = preprocess_corpus(records, taxonomy, Dedup::Collapse);
    let keys: BTreeSet<&FoodKey> = meals.iter().flat_map(|m| m.foods.iter()).collect();
    CorpusStats {
        users: users.len(),
        meals: records.len(),
        entries: stats.entries_total,
        unique_entry_texts: texts.len(),
        unique_food_keys: keys.len(),
        entries_discarded: stats.entries_discarded,
    }
}
