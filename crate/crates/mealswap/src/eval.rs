//! Offline evaluation: joining human judgements onto rankings, ranking
//! quality metrics (precision@k, MAP, NDCG), inter-rater agreement, and the
//! subcategory co-occurrence heatmap.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::hash::Hash;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::{Method, RankedList};
use crate::taxonomy::FoodKey;

/// One judged (query, candidate, method) triple with its rater scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgement {
    pub query: FoodKey,
    pub candidate: FoodKey,
    pub method: Method,
    /// Ratings on a 1..=7 scale, one per rater. At least one.
    pub ratings: Vec<u8>,
}

impl Judgement {
    pub fn avg_rating(&self) -> f64 {
        let sum: u32 = self.ratings.iter().map(|&r| u32::from(r)).sum();
        sum as f64 / self.ratings.len() as f64
    }
}

/// Reads `query_key,candidate_key,method,r1,r2,...` rows. The rating column
/// count may vary per row but every row needs at least one; each rating must
/// lie in 1..=7 and a (query, candidate, method) triple may appear only once.
pub fn load_judgements(path: impl AsRef<Path>) -> Result<Vec<Judgement>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let mut out = Vec::new();
    let mut seen: HashSet<(String, String, Method)> = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() < 4 {
            return Err(Error::parse(
                path,
                line,
                "expected query_key,candidate_key,method and at least one rating",
            ));
        }
        let query = FoodKey::parse(&record[0]).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let candidate =
            FoodKey::parse(&record[1]).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let method: Method = record[2]
            .parse()
            .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        let mut ratings = Vec::with_capacity(record.len() - 3);
        for field in record.iter().skip(3) {
            let r: u8 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad rating \"{field}\"")))?;
            if !(1..=7).contains(&r) {
                return Err(Error::parse(path, line, format!("rating {r} outside 1..=7")));
            }
            ratings.push(r);
        }
        if !seen.insert((query.as_str().to_owned(), candidate.as_str().to_owned(), method)) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate judgement for ({query}, {candidate}, {method})"),
            ));
        }
        out.push(Judgement {
            query,
            candidate,
            method,
            ratings,
        });
    }
    Ok(out)
}

/// Writes judgements back out in the same CSV layout. Header rating columns
/// are sized to the widest row; shorter rows simply emit fewer fields.
pub fn write_judgements(path: impl AsRef<Path>, judgements: &[Judgement]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(file);
    let widest = judgements.iter().map(|j| j.ratings.len()).max().unwrap_or(3);
    let mut header = vec![
        "query_key".to_owned(),
        "candidate_key".to_owned(),
        "method".to_owned(),
    ];
    header.extend((1..=widest.max(1)).map(|i| format!("r{i}")));
    w.write_record(&header).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    for j in judgements {
        let mut row = vec![
            j.query.as_str().to_owned(),
            j.candidate.as_str().to_owned(),
            j.method.to_string(),
        ];
        row.extend(j.ratings.iter().map(|r| r.to_string()));
        w.write_record(&row).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A ranked list where every candidate carries its average rating.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgedList {
    pub query: FoodKey,
    pub method: Method,
    /// (candidate, average rating), in rank order.
    pub candidates: Vec<(FoodKey, f64)>,
}

/// Attaches average ratings to every ranked candidate. Every (query,
/// candidate, method) triple appearing in the rankings must be judged.
pub fn join_rankings(rankings: &[RankedList], judgements: &[Judgement]) -> Result<Vec<JudgedList>> {
    let lookup: HashMap<(&str, &str, Method), f64> = judgements
        .iter()
        .map(|j| ((j.query.as_str(), j.candidate.as_str(), j.method), j.avg_rating()))
        .collect();
    rankings
        .iter()
        .map(|list| {
            let candidates = list
                .items
                .iter()
                .map(|(cand, _)| {
                    lookup
                        .get(&(list.query.as_str(), cand.as_str(), list.method))
                        .map(|&avg| (cand.clone(), avg))
                        .ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "no judgement for ({}, {}, {})",
                                list.query, cand, list.method
                            ))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(JudgedList {
                query: list.query.clone(),
                method: list.method,
                candidates,
            })
        })
        .collect()
}

/// Relevance is a strict cut: average rating must exceed tau.
pub fn binarize(avg_rating: f64, tau: f64) -> bool {
    avg_rating > tau
}

/// Fraction of the top `k` slots filled with relevant candidates. The
/// denominator stays `k` even when the list is shorter, so truncated lists
/// are penalized.
pub fn precision_at_k(list: &JudgedList, k: usize, tau: f64) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let hits = list
        .candidates
        .iter()
        .take(k)
        .filter(|&&(_, avg)| binarize(avg, tau))
        .count();
    hits as f64 / k as f64
}

/// Mean of precision@i over the relevant positions i, normalized by the
/// number of relevant candidates in the list. No relevant candidates gives 0.
pub fn average_precision(list: &JudgedList, tau: f64) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &(_, avg)) in list.candidates.iter().enumerate() {
        if binarize(avg, tau) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn mean_average_precision(lists: &[JudgedList], tau: f64) -> f64 {
    if lists.is_empty() {
        return 0.0;
    }
    lists.iter().map(|l| average_precision(l, tau)).sum::<f64>() / lists.len() as f64
}

/// How a rating becomes NDCG gain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// gain = rating
    #[default]
    Linear,
    /// gain = 2^rating - 1
    Exponential,
}

impl fmt::Display for Gain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gain::Linear => "linear",
            Gain::Exponential => "exponential",
        })
    }
}

impl std::str::FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Gain> {
        match s {
            "linear" => Ok(Gain::Linear),
            "exponential" => Ok(Gain::Exponential),
            other => Err(Error::InvalidInput(format!(
                "unknown gain \"{other}\" (expected linear or exponential)"
            ))),
        }
    }
}

fn dcg(gains: &[f64]) -> f64 {
    gains
        .iter()
        .enumerate()
        .map(|(idx, g)| g / ((idx + 2) as f64).log2())
        .sum()
}

/// Graded NDCG over the list's own candidate multiset: the ideal ordering
/// re-sorts these same candidates by rating, so the score isolates ordering
/// quality and never depends on a relevance threshold.
pub fn ndcg_with_gain(list: &JudgedList, gain: Gain) -> Result<f64> {
    if list.candidates.is_empty() {
        return Err(Error::InvalidInput(format!(
            "cannot compute NDCG for empty list ({}, {})",
            list.query, list.method
        )));
    }
    let gains: Vec<f64> = list
        .candidates
        .iter()
        .map(|&(_, avg)| match gain {
            Gain::Linear => avg,
            Gain::Exponential => avg.exp2() - 1.0,
        })
        .collect();
    let mut ideal = gains.clone();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let idcg = dcg(&ideal);
    if idcg <= 0.0 {
        // all-zero gains: any ordering of the list is ideal
        return Ok(1.0);
    }
    Ok(dcg(&gains) / idcg)
}

pub fn ndcg(list: &JudgedList) -> Result<f64> {
    ndcg_with_gain(list, Gain::Linear)
}

/// Unweighted Cohen's kappa between two raters' label sequences.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "rater sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("kappa needs at least one item".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let p_o = agree / n;
    let mut count_a: HashMap<&T, f64> = HashMap::new();
    let mut count_b: HashMap<&T, f64> = HashMap::new();
    for x in a {
        *count_a.entry(x).or_insert(0.0) += 1.0;
    }
    for y in b {
        *count_b.entry(y).or_insert(0.0) += 1.0;
    }
    let p_e: f64 = count_a
        .iter()
        .map(|(label, ca)| ca / n * count_b.get(label).copied().unwrap_or(0.0) / n)
        .sum();
    // both raters constant and identical: perfect agreement, not 0/0
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Symmetric Jaccard matrix over subcategory labels of substitute pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    labels: Vec<String>,
    values: Array2<f64>,
}

impl CooccurrenceMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[[i, j]])
    }

    /// CSV with a leading label column and a label header row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = vec!["subcategory".to_owned()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        for (i, label) in self.labels.iter().enumerate() {
            let mut row = vec![label.clone()];
            row.extend((0..self.labels.len()).map(|j| format!("{:.6}", self.values[[i, j]])));
            w.write_record(&row).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Jaccard co-occurrence of subcategory labels across substitute pairs.
///
/// Each pair contributes one occurrence to every label present on either
/// side, and one co-occurrence to every cross-side label combination (the
/// diagonal counted once, not twice, when both sides share a label). A label
/// pair never seen together scores 0; a label only ever paired with itself
/// scores 1 on the diagonal.
pub fn subcategory_cooccurrence(pairs: &[(FoodKey, FoodKey)]) -> CooccurrenceMatrix {
    let mut occ: BTreeMap<String, f64> = BTreeMap::new();
    let mut co: HashMap<(String, String), f64> = HashMap::new();
    for (f1, f2) in pairs {
        let l1 = f1.subcategory_labels();
        let l2 = f2.subcategory_labels();
        let union: HashSet<&String> = l1.iter().chain(l2.iter()).collect();
        for label in union {
            *occ.entry(label.clone()).or_insert(0.0) += 1.0;
        }
        let mut seen: HashSet<(&String, &String)> = HashSet::new();
        for a in &l1 {
            for b in &l2 {
                let (x, y) = if a <= b { (a, b) } else { (b, a) };
                if seen.insert((x, y)) {
                    *co.entry((x.clone(), y.clone())).or_insert(0.0) += 1.0;
                }
            }
        }
    }
    let labels: Vec<String> = occ.keys().cloned().collect();
    let n = labels.len();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let (a, b) = if labels[i] <= labels[j] {
                (&labels[i], &labels[j])
            } else {
                (&labels[j], &labels[i])
            };
            let c = co.get(&(a.clone(), b.clone())).copied().unwrap_or(0.0);
            let denom = occ[&labels[i]] + occ[&labels[j]] - c;
            values[[i, j]] = if denom <= 0.0 { 1.0 } else { c / denom };
        }
    }
    CooccurrenceMatrix { labels, values }
}

/// One metrics table row: a method evaluated at one relevance threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: Method,
    pub tau: f64,
    pub prec_at_1: f64,
    pub prec_at_10: f64,
    pub map: f64,
    pub ndcg: f64,
}

/// Evaluates each method at each tau. NDCG is threshold-free, so within a
/// method its column repeats bit-identically across taus.
pub fn compute_metrics(lists: &[JudgedList], taus: &[f64], gain: Gain) -> Result<Vec<MetricsRow>> {
    let mut methods: Vec<Method> = Vec::new();
    for l in lists {
        if !methods.contains(&l.method) {
            methods.push(l.method);
        }
    }
    let mut rows = Vec::new();
    for method in methods {
        let subset: Vec<JudgedList> = lists.iter().filter(|l| l.method == method).cloned().collect();
        let ndcg_values: Result<Vec<f64>> =
            subset.iter().map(|l| ndcg_with_gain(l, gain)).collect();
        let ndcg_values = ndcg_values?;
        let mean_ndcg = ndcg_values.iter().sum::<f64>() / ndcg_values.len() as f64;
        for &tau in taus {
            let p1 =
                subset.iter().map(|l| precision_at_k(l, 1, tau)).sum::<f64>() / subset.len() as f64;
            let p10 = subset.iter().map(|l| precision_at_k(l, 10, tau)).sum::<f64>()
                / subset.len() as f64;
            rows.push(MetricsRow {
                method,
                tau,
                prec_at_1: p1,
                prec_at_10: p10,
                map: mean_average_precision(&subset, tau),
                ndcg: mean_ndcg,
            });
        }
    }
    Ok(rows)
}

/// Tab-separated metrics table with a comment line recording the gain mode.
pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow], gain: Gain) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    writeln!(out, "# gain: {gain}").map_err(|e| Error::io(path, e))?;
    writeln!(out, "method\ttau\tprec@1\tprec@10\tMAP\tNDCG").map_err(|e| Error::io(path, e))?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.method, r.tau, r.prec_at_1, r.prec_at_10, r.map, r.ndcg
        )
        .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
