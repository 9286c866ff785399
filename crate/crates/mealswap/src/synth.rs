//! Synthetic planted-cluster corpora for end-to-end verification.
//!
//! Foods are grouped into clusters of intended substitutes. A meal draws a
//! set of distinct clusters (a "template") and picks one food from each, so
//! same-cluster foods never share a meal — they are substitutes, not
//! complements — while cluster-level context patterns repeat across meals.
//! A recovered ranking should therefore place same-cluster foods on top.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::MealRecord;
use crate::error::{Error, Result};
use crate::ranker::RankedList;
use crate::taxonomy::Taxonomy;

/// Parameters for one synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_clusters: usize,
    pub foods_per_cluster: usize,
    pub n_meals: usize,
    /// Inclusive (min, max) number of foods per meal.
    pub meal_size_range: (usize, usize),
    /// Probability that a meal reuses a pooled cluster template instead of
    /// drawing a fresh one. Reuse is what makes cluster contexts repeat;
    /// at 0 every meal is an independent draw and the planted signal fades.
    pub within_cluster_context_affinity: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_clusters: 50,
            foods_per_cluster: 10,
            n_meals: 100_000,
            meal_size_range: (2, 5),
            within_cluster_context_affinity: 0.85,
            seed: 42,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.meal_size_range;
        let mut errors = Vec::new();
        if self.n_clusters == 0 {
            errors.push("n_clusters must be at least 1".to_owned());
        }
        if self.foods_per_cluster == 0 {
            errors.push("foods_per_cluster must be at least 1".to_owned());
        }
        if self.n_meals == 0 {
            errors.push("n_meals must be at least 1".to_owned());
        }
        if lo == 0 || lo > hi {
            errors.push(format!("meal size range ({lo}, {hi}) must satisfy 1 <= min <= max"));
        }
        if hi > self.n_clusters {
            errors.push(format!(
                "max meal size {hi} exceeds the {} clusters a meal can draw from",
                self.n_clusters
            ));
        }
        if hi > self.n_clusters * self.foods_per_cluster {
            errors.push(format!(
                "max meal size {hi} exceeds the {} foods that exist",
                self.n_clusters * self.foods_per_cluster
            ));
        }
        if !(0.0..=1.0).contains(&self.within_cluster_context_affinity) {
            errors.push(format!(
                "affinity {} outside [0, 1]",
                self.within_cluster_context_affinity
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

/// A generated corpus plus its ground truth.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<MealRecord>,
    /// Canonical food key -> planted cluster id.
    pub cluster_map: BTreeMap<String, usize>,
    /// (category, subcategory, entity, synonyms) rows; one entity per food.
    pub taxonomy_rows: Vec<(String, String, String, Vec<String>)>,
}

impl SynthCorpus {
    pub fn taxonomy(&self) -> Result<Taxonomy> {
        Taxonomy::from_rows(self.taxonomy_rows.clone())
    }

    pub fn write_meals(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::corpus::write_meals(path, &self.records)
    }

    /// TSV mirror of the taxonomy rows, loadable by the normal ingest path.
    pub fn write_taxonomy(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for (cat, sub, ent, syns) in &self.taxonomy_rows {
            writeln!(out, "{cat}\t{sub}\t{ent}\t{}", syns.join("|")).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// `key<TAB>cluster_id` rows, sorted by key.
    pub fn write_clusters(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for (key, cluster) in &self.cluster_map {
            writeln!(out, "{key}\t{cluster}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a `key<TAB>cluster_id` file back into a cluster map.
pub fn read_clusters(path: impl AsRef<Path>) -> Result<BTreeMap<String, usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, cluster) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, idx + 1, "expected key<TAB>cluster_id"))?;
        let cluster: usize = cluster
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, idx + 1, "bad cluster id"))?;
        if map.insert(key.to_owned(), cluster).is_some() {
            return Err(Error::parse(path, idx + 1, format!("duplicate key {key}")));
        }
    }
    Ok(map)
}

fn food_entity(food: usize) -> String {
    format!("food{food:04}")
}

fn food_key(cluster: usize, food: usize) -> String {
    format!("synthetic:cluster{cluster:03}:{}", food_entity(food))
}

/// Zipf(s=1) sampler over cluster ids: weight of cluster c is 1/(c+1).
struct ClusterSampler {
    cumulative: Vec<f64>,
}

impl ClusterSampler {
    fn new(n_clusters: usize) -> ClusterSampler {
        let mut cumulative = Vec::with_capacity(n_clusters);
        let mut acc = 0.0;
        for c in 0..n_clusters {
            acc += 1.0 / (c + 1) as f64;
            cumulative.push(acc);
        }
        ClusterSampler { cumulative }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("at least one cluster");
        let x = rng.gen_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= x)
    }

    /// `size` distinct clusters, Zipf-weighted, drawn-order preserved.
    fn draw_distinct(&self, rng: &mut ChaCha8Rng, size: usize) -> Vec<usize> {
        let mut picked = Vec::with_capacity(size);
        while picked.len() < size {
            let c = self.draw(rng);
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        picked
    }
}

/// Generates a corpus with planted substitute clusters. Deterministic in the
/// spec: the same spec always produces byte-identical meals.
pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sampler = ClusterSampler::new(spec.n_clusters);
    let (lo, hi) = spec.meal_size_range;

    // template pool: the recurring context patterns meals draw from
    let mut pool: Vec<Vec<usize>> = (0..3 * spec.n_clusters)
        .map(|_| {
            let size = rng.gen_range(lo..=hi);
            sampler.draw_distinct(&mut rng, size)
        })
        .collect();
    // Zipf's tail can leave clusters out of every template; give each
    // uncovered cluster one template so all foods appear in the corpus
    let mut covered = vec![false; spec.n_clusters];
    for t in &pool {
        for &c in t {
            covered[c] = true;
        }
    }
    for c in 0..spec.n_clusters {
        if !covered[c] {
            let size = rng.gen_range(lo..=hi);
            let mut t = vec![c];
            while t.len() < size {
                let other = sampler.draw(&mut rng);
                if !t.contains(&other) {
                    t.push(other);
                }
            }
            pool.push(t);
        }
    }

    let base_date = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    let meal_names = ["Breakfast", "Lunch", "Dinner", "Snack"];
    let mut records = Vec::with_capacity(spec.n_meals);
    for m in 0..spec.n_meals {
        let template: Vec<usize> =
            if rng.gen_range(0.0..1.0) < spec.within_cluster_context_affinity {
                pool[rng.gen_range(0..pool.len())].clone()
            } else {
                let size = rng.gen_range(lo..=hi);
                sampler.draw_distinct(&mut rng, size)
            };
        let entries: Vec<String> = template
            .iter()
            .map(|&c| {
                let pick = rng.gen_range(0..spec.foods_per_cluster);
                food_entity(c * spec.foods_per_cluster + pick)
            })
            .collect();
        records.push(MealRecord {
            user_id: format!("user{:04}", m % 997),
            date: base_date + chrono::Days::new((m % 365) as u64),
            meal_name: meal_names[m % meal_names.len()].to_owned(),
            raw_entries: entries,
        });
    }

    let mut cluster_map = BTreeMap::new();
    let mut taxonomy_rows = Vec::new();
    for c in 0..spec.n_clusters {
        for f in 0..spec.foods_per_cluster {
            let food = c * spec.foods_per_cluster + f;
            cluster_map.insert(food_key(c, food), c);
            taxonomy_rows.push((
                "synthetic".to_owned(),
                format!("cluster{c:03}"),
                food_entity(food),
                vec![food_entity(food)],
            ));
        }
    }
    Ok(SynthCorpus {
        records,
        cluster_map,
        taxonomy_rows,
    })
}

/// Scores rankings against the planted clusters: the fraction of queries
/// whose rank-1 candidate shares the query's cluster, and the fraction with
/// at least one same-cluster candidate in the top 10.
pub fn planted_recovery_score(
    rankings: &[RankedList],
    cluster_map: &BTreeMap<String, usize>,
) -> Result<(f64, f64)> {
    if rankings.is_empty() {
        return Err(Error::InvalidInput("no rankings to score".into()));
    }
    let mut cluster_sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in cluster_map.values() {
        *cluster_sizes.entry(c).or_insert(0) += 1;
    }
    if cluster_sizes.values().all(|&n| n < 2) {
        return Err(Error::InvalidInput(
            "every cluster has a single food, so recovery is undefined".into(),
        ));
    }
    let look = |key: &str| -> Result<usize> {
        cluster_map.get(key).copied().ok_or_else(|| Error::UnknownKey {
            key: key.to_owned(),
            suggestions: Vec::new(),
        })
    };
    let mut top1_hits = 0usize;
    let mut top10_hits = 0usize;
    for list in rankings {
        let qc = look(list.query.as_str())?;
        let mut same = Vec::with_capacity(list.items.len().min(10));
        for (cand, _) in list.items.iter().take(10) {
            same.push(look(cand.as_str())? == qc);
        }
        if same.first().copied().unwrap_or(false) {
            top1_hits += 1;
        }
        if same.iter().any(|&s| s) {
            top10_hits += 1;
        }
    }
    let n = rankings.len() as f64;
    Ok((top1_hits as f64 / n, top10_hits as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_pair_counts_seq, preprocess_corpus_seq, Dedup};
    use crate::ppmi::build_ppmi_matrix;
    use crate::ranker::{rank_all_seq, Scorer};
    use crate::taxonomy::FoodKey;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            n_clusters: 8,
            foods_per_cluster: 4,
            n_meals: 400,
            meal_size_range: (2, 4),
            within_cluster_context_affinity: 0.9,
            seed: 7,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_corpus(&small_spec()).unwrap();
        let b = generate_corpus(&small_spec()).unwrap();
        assert_eq!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&b.records).unwrap()
        );
        assert_eq!(a.cluster_map, b.cluster_map);
        let c = generate_corpus(&SynthSpec {
            seed: 8,
            ..small_spec()
        })
        .unwrap();
        assert_ne!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&c.records).unwrap()
        );
    }

    #[test]
    fn corpus_matches_requested_shape() {
        let spec = small_spec();
        let corpus = generate_corpus(&spec).unwrap();
        assert_eq!(corpus.records.len(), spec.n_meals);
        assert_eq!(
            corpus.cluster_map.len(),
            spec.n_clusters * spec.foods_per_cluster
        );
        assert_eq!(corpus.taxonomy_rows.len(), corpus.cluster_map.len());
        for record in &corpus.records {
            let n = record.raw_entries.len();
            assert!(n >= spec.meal_size_range.0 && n <= spec.meal_size_range.1);
        }
        // every cluster id appears in the map exactly foods_per_cluster times
        for c in 0..spec.n_clusters {
            let n = corpus.cluster_map.values().filter(|&&x| x == c).count();
            assert_eq!(n, spec.foods_per_cluster);
        }
    }

    #[test]
    fn same_cluster_foods_never_share_a_meal() {
        let corpus = generate_corpus(&small_spec()).unwrap();
        let taxonomy = corpus.taxonomy().unwrap();
        for record in &corpus.records {
            let clusters: Vec<usize> = record
                .raw_entries
                .iter()
                .map(|e| {
                    let key = taxonomy.key_for(e).unwrap();
                    corpus.cluster_map[key.as_str()]
                })
                .collect();
            let mut sorted = clusters.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), clusters.len(), "meal {record:?}");
        }
    }

    #[test]
    fn pair_total_matches_meal_sizes() {
        let corpus = generate_corpus(&small_spec()).unwrap();
        let taxonomy = corpus.taxonomy().unwrap();
        let (meals, stats) = preprocess_corpus_seq(&corpus.records, &taxonomy, Dedup::Collapse);
        assert_eq!(stats.entries_discarded, 0);
        let (counts, _, _) = build_pair_counts_seq(&meals, 1, 1).unwrap();
        // entries in a meal are distinct foods, so |D| = sum n_m (n_m - 1)
        let expect: u64 = corpus
            .records
            .iter()
            .map(|r| (r.raw_entries.len() * (r.raw_entries.len() - 1)) as u64)
            .sum();
        assert_eq!(counts.total(), expect);
    }

    #[test]
    fn planted_signal_is_recoverable_at_small_scale() {
        let spec = SynthSpec {
            n_clusters: 10,
            foods_per_cluster: 4,
            n_meals: 20_000,
            meal_size_range: (2, 4),
            within_cluster_context_affinity: 0.9,
            seed: 11,
        };
        let corpus = generate_corpus(&spec).unwrap();
        let taxonomy = corpus.taxonomy().unwrap();
        let (meals, _) = preprocess_corpus_seq(&corpus.records, &taxonomy, Dedup::Collapse);
        let (counts, rows, cols) = build_pair_counts_seq(&meals, 1, 1).unwrap();
        let matrix = build_ppmi_matrix(&counts, rows, cols).unwrap();
        let queries: Vec<FoodKey> = matrix.row_vocab().keys().to_vec();
        let lists = rank_all_seq(&Scorer::ppmi(&matrix), &queries, 10).unwrap();
        let (top1, top10) = planted_recovery_score(&lists, &corpus.cluster_map).unwrap();
        assert!(top1 > 0.8, "top1 {top1}");
        assert!(top10 > 0.95, "top10 {top10}");
    }

    #[test]
    fn recovery_score_validates_inputs() {
        let key = |s: &str| FoodKey::parse(s).unwrap();
        let mut map = BTreeMap::new();
        map.insert("x:a:1".to_owned(), 0);
        map.insert("x:a:2".to_owned(), 0);
        map.insert("x:b:3".to_owned(), 1);
        let list = RankedList {
            query: key("x:a:1"),
            method: crate::ranker::Method::Ppmi,
            items: vec![(key("x:a:2"), 0.9), (key("x:b:3"), 0.1)],
        };
        let (top1, top10) = planted_recovery_score(&[list.clone()], &map).unwrap();
        assert_eq!((top1, top10), (1.0, 1.0));
        let miss = RankedList {
            query: key("x:b:3"),
            method: crate::ranker::Method::Ppmi,
            items: vec![(key("x:a:2"), 0.9)],
        };
        let (top1, top10) = planted_recovery_score(&[miss], &map).unwrap();
        assert_eq!((top1, top10), (0.0, 0.0));
        assert!(planted_recovery_score(&[], &map).is_err());
        let unknown = RankedList {
            query: key("x:z:9"),
            method: crate::ranker::Method::Ppmi,
            items: vec![],
        };
        assert!(matches!(
            planted_recovery_score(&[unknown], &map).unwrap_err(),
            Error::UnknownKey { .. }
        ));
        // single-food clusters make recovery undefined
        let singles: BTreeMap<String, usize> =
            [("x:a:1".to_owned(), 0), ("x:b:3".to_owned(), 1)].into();
        assert!(planted_recovery_score(&[list], &singles).is_err());
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        assert!(generate_corpus(&SynthSpec {
            meal_size_range: (2, 9),
            ..small_spec()
        })
        .is_err());
        assert!(generate_corpus(&SynthSpec {
            within_cluster_context_affinity: 1.5,
            ..small_spec()
        })
        .is_err());
        assert!(generate_corpus(&SynthSpec {
            meal_size_range: (0, 3),
            ..small_spec()
        })
        .is_err());
        assert!(generate_corpus(&SynthSpec {
            n_meals: 0,
            ..small_spec()
        })
        .is_err());
        // single-food clusters generate fine; only scoring is undefined
        let spec = SynthSpec {
            foods_per_cluster: 1,
            n_meals: 50,
            ..small_spec()
        };
        assert!(generate_corpus(&spec).is_ok());
    }

    #[test]
    fn cluster_files_round_trip() {
        let corpus = generate_corpus(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let clusters = dir.path().join("clusters.tsv");
        corpus.write_clusters(&clusters).unwrap();
        assert_eq!(read_clusters(&clusters).unwrap(), corpus.cluster_map);
        let taxonomy_path = dir.path().join("taxonomy.tsv");
        corpus.write_taxonomy(&taxonomy_path).unwrap();
        let loaded = Taxonomy::load(&taxonomy_path).unwrap();
        assert_eq!(loaded.entries().len(), corpus.taxonomy_rows.len());
        let meals_path = dir.path().join("meals.jsonl");
        corpus.write_meals(&meals_path).unwrap();
        let back = crate::corpus::load_meals(&meals_path).unwrap();
        assert_eq!(back.len(), corpus.records.len());
    }
}
