//! Significance-boosted PPMI weighting of the food-context matrix.
//!
//! The cell weight is
//!
//! ```text
//! ppmi_ij = max( ln( #(f_i,c_j) · |D| / (#(f_i) · #(c_j)) ) · sqrt(max(#f_i, #c_j)), 0 )
//! ```
//!
//! i.e. pointwise mutual information clamped at zero, multiplied by a
//! significance factor that counters plain PMI's bias toward rare events.
//! Natural log; cosine similarity (and therefore every ranking) is invariant
//! to the base, which only rescales the matrix.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::corpus::{PairCounts, Vocabulary};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// One matrix cell. `pair_c == 0` short-circuits to 0 without touching the
/// log; a zero denominator with a positive pair count is a contract error.
pub fn pmi_sig_cell(pair_c: u64, f_c: u64, c_c: u64, total: u64) -> Result<f64> {
    if pair_c == 0 {
        return Ok(0.0);
    }
    if f_c == 0 || c_c == 0 || total == 0 {
        return Err(Error::InvalidInput(format!(
            "pair count {pair_c} with zero marginal (f={f_c}, c={c_c}, total={total})"
        )));
    }
    // counts go through f64 before multiplying; u64 products can overflow
    let ratio = (pair_c as f64 * total as f64) / (f_c as f64 * c_c as f64);
    let boost = (f_c.max(c_c) as f64).sqrt();
    Ok((ratio.ln() * boost).max(0.0))
}

/// The sparse food-context matrix with its vocabularies and cached row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct PpmiMatrix {
    csr: CsrMatrix,
    row_vocab: Vocabulary,
    col_vocab: Vocabulary,
    row_norms: Vec<f64>,
}

impl PpmiMatrix {
    /// Wraps an existing sparse matrix, enforcing the type's invariants:
    /// dimensions match the vocabularies and every stored weight is positive.
    pub fn from_parts(
        csr: CsrMatrix,
        row_vocab: Vocabulary,
        col_vocab: Vocabulary,
    ) -> Result<PpmiMatrix> {
        if csr.rows() != row_vocab.len() || csr.cols() != col_vocab.len() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{} but vocabularies have {} rows / {} cols",
                csr.rows(),
                csr.cols(),
                row_vocab.len(),
                col_vocab.len()
            )));
        }
        if csr.iter().any(|(_, _, w)| w <= 0.0 || !w.is_finite()) {
            return Err(Error::InvalidInput(
                "stored weights must be finite and positive".into(),
            ));
        }
        let row_norms = (0..csr.rows()).map(|r| csr.row_norm(r)).collect();
        Ok(PpmiMatrix {
            csr,
            row_vocab,
            col_vocab,
            row_norms,
        })
    }

    pub fn rows(&self) -> usize {
        self.csr.rows()
    }

    pub fn cols(&self) -> usize {
        self.csr.cols()
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn row_vocab(&self) -> &Vocabulary {
        &self.row_vocab
    }

    pub fn col_vocab(&self) -> &Vocabulary {
        &self.col_vocab
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row_norms[i]
    }

    /// Stored weight at (i, j), zero if the cell is empty.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.csr.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Cosine similarity between two row vectors; zero-norm rows score 0.
    pub fn cosine_similarity(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.rows();
        if i >= n || j >= n {
            return Err(Error::InvalidInput(format!(
                "row id out of range: {i}, {j} (matrix has {n} rows)"
            )));
        }
        let denom = self.row_norms[i] * self.row_norms[j];
        if denom == 0.0 {
            return Ok(0.0);
        }
        Ok(self.csr.row_dot(i, j) / denom)
    }

    /// Cosine similarity of row `i` against every row, in id order.
    pub fn cosine_scores(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.rows() {
            return Err(Error::InvalidInput(format!(
                "row id {i} out of range (matrix has {} rows)",
                self.rows()
            )));
        }
        let qn = self.row_norms[i];
        if qn == 0.0 {
            return Ok(vec![0.0; self.rows()]);
        }
        let mut dense = vec![0.0; self.cols()];
        let (cols, vals) = self.csr.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            dense[c] = v;
        }
        let dots = self.csr.mul_vec(&dense);
        Ok(dots
            .into_iter()
            .zip(&self.row_norms)
            .map(|(d, &n)| if n == 0.0 { 0.0 } else { d / (qn * n) })
            .collect())
    }

    /// Writes `PPMI <rows> <cols> <nnz>` followed by tab-separated triples in
    /// (row, col) order. Weights use 17 significant digits, so a read-back
    /// reproduces the exact bits.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        writeln!(out, "PPMI {} {} {}", self.rows(), self.cols(), self.nnz())
            .map_err(|e| Error::io(path, e))?;
        for (r, c, w) in self.csr.iter() {
            writeln!(out, "{r}\t{c}\t{w:.16e}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a matrix written by [`PpmiMatrix::write`], attaching the given
    /// vocabularies.
    pub fn read(
        path: impl AsRef<Path>,
        row_vocab: Vocabulary,
        col_vocab: Vocabulary,
    ) -> Result<PpmiMatrix> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing header"))?
            .map_err(|e| Error::io(path, e))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "PPMI" {
            return Err(Error::parse(path, 1, "expected `PPMI <rows> <cols> <nnz>`"));
        }
        let dims: Vec<usize> = parts[1..]
            .iter()
            .map(|p| p.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, 1, "bad header dimensions"))?;
        let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
        let mut triples = Vec::with_capacity(nnz);
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != 3 {
                return Err(Error::parse(path, line_no, "expected row<TAB>col<TAB>weight"));
            }
            let r: usize = cells[0]
                .parse()
                .map_err(|_| Error::parse(path, line_no, "bad row id"))?;
            let c: usize = cells[1]
                .parse()
                .map_err(|_| Error::parse(path, line_no, "bad col id"))?;
            let w: f64 = cells[2]
                .parse()
                .map_err(|_| Error::parse(path, line_no, "bad weight"))?;
            if w <= 0.0 || !w.is_finite() {
                return Err(Error::parse(path, line_no, "weight must be positive"));
            }
            if let Some(&(pr, pc, _)) = triples.last() {
                if (r, c) <= (pr, pc) {
                    return Err(Error::parse(path, line_no, "triples out of order"));
                }
            }
            triples.push((r, c, w));
        }
        if triples.len() != nnz {
            return Err(Error::parse(
                path,
                1,
                format!("header says {nnz} triples, found {}", triples.len()),
            ));
        }
        let csr = CsrMatrix::from_triples(rows, cols, triples)
            .map_err(|e| Error::parse(path, 1, e.to_string()))?;
        PpmiMatrix::from_parts(csr, row_vocab, col_vocab)
    }
}

fn sorted_pairs(counts: &PairCounts) -> Vec<((usize, usize), u64)> {
    let mut pairs: Vec<((usize, usize), u64)> = counts.iter().collect();
    pairs.sort_by_key(|&(rc, _)| rc);
    pairs
}

fn weigh_pair(
    &((r, c), n): &((usize, usize), u64),
    counts: &PairCounts,
) -> Result<(usize, usize, f64)> {
    let w = pmi_sig_cell(n, counts.f_count(r), counts.c_count(c), counts.total())?;
    Ok((r, c, w))
}

fn check_dims(counts: &PairCounts, row_vocab: &Vocabulary, col_vocab: &Vocabulary) -> Result<()> {
    if counts.n_rows() != row_vocab.len() || counts.n_cols() != col_vocab.len() {
        return Err(Error::InvalidInput(format!(
            "counts cover {}x{} ids but vocabularies have {} rows / {} cols",
            counts.n_rows(),
            counts.n_cols(),
            row_vocab.len(),
            col_vocab.len()
        )));
    }
    Ok(())
}

fn assemble(
    weighted: Vec<(usize, usize, f64)>,
    row_vocab: Vocabulary,
    col_vocab: Vocabulary,
) -> Result<PpmiMatrix> {
    let triples: Vec<_> = weighted.into_iter().filter(|&(_, _, w)| w > 0.0).collect();
    let csr = CsrMatrix::from_triples(row_vocab.len(), col_vocab.len(), triples)?;
    PpmiMatrix::from_parts(csr, row_vocab, col_vocab)
}

/// Weights every observed pair and assembles the sparse matrix. Cells that
/// clamp to zero are not stored.
pub fn build_ppmi_matrix(
    counts: &PairCounts,
    row_vocab: Vocabulary,
    col_vocab: Vocabulary,
) -> Result<PpmiMatrix> {
    #[cfg(feature = "parallel")]
    {
        build_ppmi_matrix_par(counts, row_vocab, col_vocab)
    }
    #[cfg(not(feature = "parallel"))]
    {
        build_ppmi_matrix_seq(counts, row_vocab, col_vocab)
    }
}

pub fn build_ppmi_matrix_seq(
    counts: &PairCounts,
    row_vocab: Vocabulary,
    col_vocab: Vocabulary,
) -> Result<PpmiMatrix> {
    check_dims(counts, &row_vocab, &col_vocab)?;
    let pairs = sorted_pairs(counts);
    let weighted: Result<Vec<_>> = pairs.iter().map(|p| weigh_pair(p, counts)).collect();
    assemble(weighted?, row_vocab, col_vocab)
}

/// Cell weights are independent and reassembled in sorted order, so this is
/// bit-identical to the sequential build.
#[cfg(feature = "parallel")]
pub fn build_ppmi_matrix_par(
    counts: &PairCounts,
    row_vocab: Vocabulary,
    col_vocab: Vocabulary,
) -> Result<PpmiMatrix> {
    check_dims(counts, &row_vocab, &col_vocab)?;
    let pairs = sorted_pairs(counts);
    let weighted: Result<Vec<_>> = pairs.par_iter().map(|p| weigh_pair(p, counts)).collect();
    assemble(weighted?, row_vocab, col_vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_pair_counts_seq, ProcessedMeal};
    use crate::taxonomy::FoodKey;

    const A: &str = "x:y:a";
    const B: &str = "x:y:b";
    const C: &str = "x:y:c";

    fn meal(keys: &[&str]) -> ProcessedMeal {
        let mut foods: Vec<FoodKey> = keys.iter().map(|k| FoodKey::parse(k).unwrap()).collect();
        foods.sort();
        ProcessedMeal { foods }
    }

    fn toy_matrix() -> PpmiMatrix {
        let meals = vec![meal(&[A, B]), meal(&[A, B]), meal(&[A, C]), meal(&[B, C])];
        let (counts, rows, cols) = build_pair_counts_seq(&meals, 1, 1).unwrap();
        build_ppmi_matrix(&counts, rows, cols).unwrap()
    }

    #[test]
    fn cell_matches_hand_computed_values() {
        let w = pmi_sig_cell(2, 3, 3, 8).unwrap();
        assert!((w - (16.0f64 / 9.0).ln() * 3.0f64.sqrt()).abs() < 1e-15);
        assert!((w - 0.9966).abs() < 1e-4);
        let w = pmi_sig_cell(1, 3, 2, 8).unwrap();
        assert!((w - (8.0f64 / 6.0).ln() * 3.0f64.sqrt()).abs() < 1e-15);
        assert!((w - 0.4983).abs() < 1e-4);
    }

    #[test]
    fn cell_independence_and_clamp() {
        assert_eq!(pmi_sig_cell(3, 6, 4, 8).unwrap(), 0.0);
        assert_eq!(pmi_sig_cell(1, 4, 4, 8).unwrap(), 0.0);
        assert_eq!(pmi_sig_cell(0, 0, 0, 0).unwrap(), 0.0);
        assert_eq!(pmi_sig_cell(0, 5, 0, 9).unwrap(), 0.0);
    }

    #[test]
    fn cell_rejects_zero_denominator() {
        assert!(pmi_sig_cell(2, 0, 3, 8).is_err());
        assert!(pmi_sig_cell(2, 3, 0, 8).is_err());
        assert!(pmi_sig_cell(2, 3, 3, 0).is_err());
    }

    #[test]
    fn cell_survives_large_counts() {
        // 1e10 * 1e10 would overflow u64 if multiplied as integers
        let w = pmi_sig_cell(10_000_000_000, 10_000_000_000, 10_000_000_000, 10_000_000_000)
            .unwrap();
        assert!(w.is_finite());
    }

    #[test]
    fn toy_matrix_cells_match_oracle() {
        let m = toy_matrix();
        assert_eq!((m.rows(), m.cols()), (3, 3));
        assert_eq!(m.nnz(), 6);
        let (a, b, c) = (0, 1, 2); // ids checked in corpus tests
        let close = |x: f64, y: f64| (x - y).abs() < 1e-12;
        assert!(close(m.weight(a, b), (16.0f64 / 9.0).ln() * 3.0f64.sqrt()));
        assert!(close(m.weight(b, a), m.weight(a, b)));
        assert!(close(m.weight(a, c), (8.0f64 / 6.0).ln() * 3.0f64.sqrt()));
        assert!(close(m.weight(c, a), m.weight(a, c)));
        assert!(close(m.weight(b, c), m.weight(a, c)));
        assert_eq!(m.weight(a, a), 0.0);
    }

    #[test]
    fn rebuild_is_deterministic() {
        let m1 = toy_matrix();
        let m2 = toy_matrix();
        assert_eq!(m1, m2);
    }

    #[test]
    fn self_pairs_at_independence_store_nothing() {
        // a meal logging one food twice: the only cell is exactly ln(1) = 0
        let m = ProcessedMeal {
            foods: vec![FoodKey::parse(A).unwrap(), FoodKey::parse(A).unwrap()],
        };
        let (counts, rows, cols) = build_pair_counts_seq(&[m], 1, 1).unwrap();
        let matrix = build_ppmi_matrix(&counts, rows, cols).unwrap();
        assert_eq!(matrix.nnz(), 0);
    }

    fn vocab_n(n: usize) -> Vocabulary {
        Vocabulary::from_counts(
            (0..n)
                .map(|i| (FoodKey::parse(&format!("v:v:k{i:02}")).unwrap(), 1))
                .collect(),
        )
    }

    #[test]
    fn cosine_matches_hand_values() {
        // rows: (1,1,0) and (1,0,0)
        let csr = CsrMatrix::from_triples(2, 3, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let m = PpmiMatrix::from_parts(csr, vocab_n(2), vocab_n(3)).unwrap();
        assert!((m.cosine_similarity(0, 1).unwrap() - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
        assert!((m.cosine_similarity(0, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!(m.cosine_similarity(0, 5).is_err());
    }

    #[test]
    fn cosine_zero_norm_and_disjoint_rows() {
        // rows: (2,0), (0,3), (0,0)
        let csr = CsrMatrix::from_triples(3, 2, vec![(0, 0, 2.0), (1, 1, 3.0)]).unwrap();
        let m = PpmiMatrix::from_parts(csr, vocab_n(3), vocab_n(2)).unwrap();
        assert_eq!(m.cosine_similarity(0, 1).unwrap(), 0.0);
        assert_eq!(m.cosine_similarity(0, 2).unwrap(), 0.0);
        let scores = m.cosine_scores(2).unwrap();
        assert_eq!(scores, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn cosine_scores_match_pairwise_calls() {
        let m = toy_matrix();
        for i in 0..m.rows() {
            let scores = m.cosine_scores(i).unwrap();
            for j in 0..m.rows() {
                assert!((scores[j] - m.cosine_similarity(i, j).unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rankings_are_log_base_invariant() {
        // switching log base rescales the matrix by a positive constant
        let m = toy_matrix();
        let scaled: Vec<(usize, usize, f64)> = m
            .csr()
            .iter()
            .map(|(r, c, w)| (r, c, w / std::f64::consts::LN_2))
            .collect();
        let csr = CsrMatrix::from_triples(m.rows(), m.cols(), scaled).unwrap();
        let m2 = PpmiMatrix::from_parts(csr, m.row_vocab().clone(), m.col_vocab().clone()).unwrap();
        for i in 0..m.rows() {
            for j in 0..m.rows() {
                let a = m.cosine_similarity(i, j).unwrap();
                let b = m2.cosine_similarity(i, j).unwrap();
                assert!((a - b).abs() < 1e-12, "cosine changed under rescale");
            }
        }
    }

    #[test]
    fn matrix_file_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("matrix.ppmi");
        let m = toy_matrix();
        m.write(&path).unwrap();
        let back = PpmiMatrix::read(&path, m.row_vocab().clone(), m.col_vocab().clone()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn matrix_read_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("matrix.ppmi");
        std::fs::write(&path, "PPMI 2 2 1\n0\t0\t-1.0\n").unwrap();
        assert!(PpmiMatrix::read(&path, vocab_n(2), vocab_n(2)).is_err());
        std::fs::write(&path, "PPMI 2 2 2\n0\t0\t1.0\n").unwrap();
        assert!(PpmiMatrix::read(&path, vocab_n(2), vocab_n(2)).is_err());
        std::fs::write(&path, "NOPE\n").unwrap();
        assert!(PpmiMatrix::read(&path, vocab_n(2), vocab_n(2)).is_err());
    }
}
