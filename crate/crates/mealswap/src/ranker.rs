//! Top-k substitute ranking over either similarity model, plus seeded query
//! sampling for evaluation.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::ppmi::PpmiMatrix;
use crate::svd::SvdModel;
use crate::taxonomy::FoodKey;

/// Which similarity model produced a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    /// Cosine similarity between sparse PPMI rows.
    Ppmi,
    /// Dot product between rank-k embedding rows.
    Svd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ppmi => "PPMI",
            Method::Svd => "SVD",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "PPMI" => Ok(Method::Ppmi),
            "SVD" => Ok(Method::Svd),
            other => Err(Error::InvalidInput(format!(
                "unknown method \"{other}\" (expected PPMI or SVD)"
            ))),
        }
    }
}

/// A query's ranked substitute candidates, scores non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: FoodKey,
    pub method: Method,
    pub items: Vec<(FoodKey, f64)>,
}

enum ScorerImpl<'a> {
    Ppmi(&'a PpmiMatrix),
    Svd {
        model: &'a SvdModel,
        vocab: &'a Vocabulary,
        cosine: bool,
    },
}

/// A similarity model bound to its row vocabulary, ready to score queries.
pub struct Scorer<'a> {
    imp: ScorerImpl<'a>,
    min_score: Option<f64>,
}

impl<'a> Scorer<'a> {
    pub fn ppmi(matrix: &'a PpmiMatrix) -> Scorer<'a> {
        Scorer {
            imp: ScorerImpl::Ppmi(matrix),
            min_score: None,
        }
    }

    pub fn svd(model: &'a SvdModel, vocab: &'a Vocabulary) -> Result<Scorer<'a>> {
        Self::svd_inner(model, vocab, false)
    }

    /// SVD scoring with cosine instead of the default dot product.
    pub fn svd_cosine(model: &'a SvdModel, vocab: &'a Vocabulary) -> Result<Scorer<'a>> {
        Self::svd_inner(model, vocab, true)
    }

    fn svd_inner(model: &'a SvdModel, vocab: &'a Vocabulary, cosine: bool) -> Result<Scorer<'a>> {
        if model.rows() != vocab.len() {
            return Err(Error::InvalidInput(format!(
                "model has {} rows but vocabulary has {} keys",
                model.rows(),
                vocab.len()
            )));
        }
        Ok(Scorer {
            imp: ScorerImpl::Svd {
                model,
                vocab,
                cosine,
            },
            min_score: None,
        })
    }

    /// Exclude candidates scoring at or below `threshold` instead of padding
    /// lists to k with them.
    pub fn with_min_score(mut self, threshold: f64) -> Self {
        self.min_score = Some(threshold);
        self
    }

    pub fn method(&self) -> Method {
        match self.imp {
            ScorerImpl::Ppmi(_) => Method::Ppmi,
            ScorerImpl::Svd { .. } => Method::Svd,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match &self.imp {
            ScorerImpl::Ppmi(m) => m.row_vocab(),
            ScorerImpl::Svd { vocab, .. } => vocab,
        }
    }

    fn scores(&self, id: usize) -> Result<Vec<f64>> {
        match &self.imp {
            ScorerImpl::Ppmi(m) => m.cosine_scores(id),
            ScorerImpl::Svd {
                model,
                cosine: false,
                ..
            } => model.dot_scores(id),
            ScorerImpl::Svd {
                model, cosine: true, ..
            } => {
                let dots = model.dot_scores(id)?;
                let qn = model.embedding_norm(id);
                Ok(dots
                    .into_iter()
                    .enumerate()
                    .map(|(j, d)| {
                        let n = model.embedding_norm(j);
                        if qn == 0.0 || n == 0.0 {
                            0.0
                        } else {
                            d / (qn * n)
                        }
                    })
                    .collect())
            }
        }
    }
}

pub(crate) fn unknown_key_error(vocab: &Vocabulary, key: &str) -> Error {
    let mut by_distance: Vec<(usize, &str)> = vocab
        .keys()
        .iter()
        .map(|k| (strsim::levenshtein(key, k.as_str()), k.as_str()))
        .collect();
    by_distance.sort();
    Error::UnknownKey {
        key: key.to_owned(),
        suggestions: by_distance
            .into_iter()
            .take(3)
            .map(|(_, k)| k.to_owned())
            .collect(),
    }
}

/// Ranks every other vocabulary food by similarity to `query`. Ties are
/// broken by ascending candidate key so the order is total; the query itself
/// never appears.
pub fn top_k_substitutes(scorer: &Scorer, query: &FoodKey, k: usize) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let vocab = scorer.vocab();
    let id = vocab
        .id_of(query.as_str())
        .ok_or_else(|| unknown_key_error(vocab, query.as_str()))?;
    let scores = scorer.scores(id)?;
    let mut candidates: Vec<(usize, f64)> = scores
        .into_iter()
        .enumerate()
        .filter(|&(j, s)| j != id && scorer.min_score.map_or(true, |t| s > t))
        .collect();
    candidates.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| vocab.key(a.0).cmp(vocab.key(b.0)))
    });
    candidates.truncate(k);
    Ok(RankedList {
        query: query.clone(),
        method: scorer.method(),
        items: candidates
            .into_iter()
            .map(|(j, s)| (vocab.key(j).clone(), s))
            .collect(),
    })
}

/// Batch wrapper over [`top_k_substitutes`]; output order matches input
/// order. Queries are independent, so the parallel path is bit-identical.
pub fn rank_all(scorer: &Scorer, queries: &[FoodKey], k: usize) -> Result<Vec<RankedList>> {
    #[cfg(feature = "parallel")]
    {
        rank_all_par(scorer, queries, k)
    }
    #[cfg(not(feature = "parallel"))]
    {
        rank_all_seq(scorer, queries, k)
    }
}

pub fn rank_all_seq(scorer: &Scorer, queries: &[FoodKey], k: usize) -> Result<Vec<RankedList>> {
    queries
        .iter()
        .map(|q| top_k_substitutes(scorer, q, k))
        .collect()
}

#[cfg(feature = "parallel")]
pub fn rank_all_par(scorer: &Scorer, queries: &[FoodKey], k: usize) -> Result<Vec<RankedList>> {
    queries
        .par_iter()
        .map(|q| top_k_substitutes(scorer, q, k))
        .collect()
}

/// Samples `n` distinct query keys (uniform, seeded) from the vocabulary
/// entries that carry at least one feature starting with any of the given
/// prefixes. An empty prefix list admits every key.
pub fn sample_queries(
    vocab: &Vocabulary,
    category_filters: &[String],
    n: usize,
    seed: u64,
) -> Result<Vec<FoodKey>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let mut pool: Vec<usize> = (0..vocab.len())
        .filter(|&id| {
            category_filters.is_empty() || vocab.key(id).has_feature_prefix(category_filters)
        })
        .collect();
    if pool.len() < n {
        return Err(Error::InvalidInput(format!(
            "requested {n} queries but only {} vocabulary keys match the filters",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    Ok(pool[..n].iter().map(|&id| vocab.key(id).clone()).collect())
}

/// Writes `query<TAB>method<TAB>rank<TAB>candidate<TAB>score` rows, ranks
/// starting at 1, lists in input order.
pub fn write_rankings(path: impl AsRef<Path>, lists: &[RankedList]) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for list in lists {
        for (rank, (candidate, score)) in list.items.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{score:.6e}",
                list.query,
                list.method,
                rank + 1,
                candidate
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a rankings file back into lists, validating rank contiguity.
pub fn read_rankings(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lists: Vec<RankedList> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(path, line_no, "expected 5 tab-separated columns"));
        }
        let query = FoodKey::parse(cols[0]).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let method: Method = cols[1]
            .parse()
            .map_err(|e: Error| Error::parse(path, line_no, e.to_string()))?;
        let rank: usize = cols[2]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad rank"))?;
        let candidate =
            FoodKey::parse(cols[3]).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad score"))?;
        let start_new = match lists.last() {
            Some(last) => last.query != query || last.method != method || rank == 1,
            None => true,
        };
        if start_new {
            if rank != 1 {
                return Err(Error::parse(path, line_no, "list must start at rank 1"));
            }
            lists.push(RankedList {
                query,
                method,
                items: vec![(candidate, score)],
            });
        } else {
            let last = lists.last_mut().expect("non-empty");
            if rank != last.items.len() + 1 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected rank {}, found {rank}", last.items.len() + 1),
                ));
            }
            last.items.push((candidate, score));
        }
    }
    Ok(lists)
}
