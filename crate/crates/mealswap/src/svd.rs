//! Seeded randomized truncated SVD of the sparse food-context matrix.
//!
//! The decomposition follows the usual randomized range-finder recipe: sketch
//! the range with a Gaussian test matrix, tighten it with a few power
//! iterations (re-orthonormalizing every half step), then solve the small
//! projected problem exactly. Every random draw comes from one seeded
//! ChaCha8 stream, so a fixed (matrix, k, seed, oversampling, power_iters)
//! tuple reproduces the factors bit for bit.
//!
//! Row embeddings are `E = U_k · Σ_k`, which makes `dot(E_i, E_j)` equal the
//! dot product of rows i and j of the rank-k reconstruction `M_k` — the
//! similarity the model serves — without materializing `M_k`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, thin_qr};
use crate::sparse::CsrMatrix;

/// Rank-k factors and row embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdModel {
    k: usize,
    seed: u64,
    singular_values: Vec<f64>,
    row_embeddings: Array2<f64>,
    col_factors: Array2<f64>,
}

impl SvdModel {
    /// Assembles a model from parts, validating shapes and the descending
    /// non-negative singular value invariant.
    pub fn new(
        k: usize,
        seed: u64,
        singular_values: Vec<f64>,
        row_embeddings: Array2<f64>,
        col_factors: Array2<f64>,
    ) -> Result<SvdModel> {
        if singular_values.len() != k || row_embeddings.ncols() != k || col_factors.ncols() != k {
            return Err(Error::InvalidInput(format!(
                "rank mismatch: k={k}, {} singular values, {}-col embeddings, {}-col factors",
                singular_values.len(),
                row_embeddings.ncols(),
                col_factors.ncols()
            )));
        }
        if singular_values.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(Error::InvalidInput("singular values must be finite and non-negative".into()));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("singular values must be descending".into()));
        }
        Ok(SvdModel {
            k,
            seed,
            singular_values,
            row_embeddings,
            col_factors,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> usize {
        self.row_embeddings.nrows()
    }

    pub fn cols(&self) -> usize {
        self.col_factors.nrows()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `|V_f| × k` matrix `E = U_k · Σ_k`.
    pub fn row_embeddings(&self) -> &Array2<f64> {
        &self.row_embeddings
    }

    /// `|V_c| × k` matrix `V_k`.
    pub fn col_factors(&self) -> &Array2<f64> {
        &self.col_factors
    }

    /// Dot product of two embedding rows — the rank-k similarity.
    pub fn dot_similarity(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.rows();
        if i >= n || j >= n {
            return Err(Error::InvalidInput(format!(
                "row id out of range: {i}, {j} (model has {n} rows)"
            )));
        }
        Ok(self.row_embeddings.row(i).dot(&self.row_embeddings.row(j)))
    }

    /// Dot similarity of row `i` against every row, in id order.
    pub fn dot_scores(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.rows() {
            return Err(Error::InvalidInput(format!(
                "row id {i} out of range (model has {} rows)",
                self.rows()
            )));
        }
        let q = self.row_embeddings.row(i);
        Ok(self
            .row_embeddings
            .rows()
            .into_iter()
            .map(|r| r.dot(&q))
            .collect())
    }

    /// Euclidean norm of an embedding row (for optional cosine scoring).
    pub fn embedding_norm(&self, i: usize) -> f64 {
        let r = self.row_embeddings.row(i);
        r.dot(&r).sqrt()
    }

    /// Densifies the rank-k reconstruction `M_k = E · V_kᵀ`. Intended for
    /// small matrices in tests.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.row_embeddings.dot(&self.col_factors.t())
    }

    /// Writes `SVD <rows> <k> <seed>`, the singular values, the row-major
    /// embedding rows, then a `V <cols> <k>` section with the column factors.
    /// All values use 17 significant digits for exact round-tripping.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let fmt_row = |row: ndarray::ArrayView1<f64>| {
            row.iter()
                .map(|v| format!("{v:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(out, "SVD {} {} {}", self.rows(), self.k, self.seed)
            .map_err(|e| Error::io(path, e))?;
        writeln!(
            out,
            "{}",
            self.singular_values
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        )
        .map_err(|e| Error::io(path, e))?;
        for row in self.row_embeddings.rows() {
            writeln!(out, "{}", fmt_row(row)).map_err(|e| Error::io(path, e))?;
        }
        writeln!(out, "V {} {}", self.cols(), self.k).map_err(|e| Error::io(path, e))?;
        for row in self.col_factors.rows() {
            writeln!(out, "{}", fmt_row(row)).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<SvdModel> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let mut next_line = |expected: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((idx, Ok(line))) => Ok((idx + 1, line)),
                Some((idx, Err(e))) => {
                    let _ = idx;
                    Err(Error::io(path, e))
                }
                None => Err(Error::parse(path, 0, format!("missing {expected}"))),
            }
        };
        let (line_no, header) = next_line("header")?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "SVD" {
            return Err(Error::parse(path, line_no, "expected `SVD <rows> <k> <seed>`"));
        }
        let rows: usize = parts[1]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad row count"))?;
        let k: usize = parts[2]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad rank"))?;
        let seed: u64 = parts[3]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad seed"))?;
        let parse_floats = |line_no: usize, line: &str, n: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, line_no, "bad float"))?;
            if vals.len() != n {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {n} values, found {}", vals.len()),
                ));
            }
            Ok(vals)
        };
        let (line_no, sigma_line) = next_line("singular values")?;
        let singular_values = parse_floats(line_no, &sigma_line, k)?;
        let mut embeddings = Array2::zeros((rows, k));
        for r in 0..rows {
            let (line_no, line) = next_line("embedding row")?;
            let vals = parse_floats(line_no, &line, k)?;
            for (j, v) in vals.into_iter().enumerate() {
                embeddings[[r, j]] = v;
            }
        }
        let (line_no, vheader) = next_line("V header")?;
        let parts: Vec<&str> = vheader.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "V" {
            return Err(Error::parse(path, line_no, "expected `V <cols> <k>`"));
        }
        let cols: usize = parts[1]
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad col count"))?;
        if parts[2].parse::<usize>().ok() != Some(k) {
            return Err(Error::parse(path, line_no, "V rank disagrees with header"));
        }
        let mut factors = Array2::zeros((cols, k));
        for r in 0..cols {
            let (line_no, line) = next_line("factor row")?;
            let vals = parse_floats(line_no, &line, k)?;
            for (j, v) in vals.into_iter().enumerate() {
                factors[[r, j]] = v;
            }
        }
        SvdModel::new(k, seed, singular_values, embeddings, factors)
    }
}

/// Standard-normal test matrix from one seeded ChaCha8 stream (Box–Muller,
/// filled row-major), so the sketch is identical across platforms.
fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spare: Option<f64> = None;
    Array2::from_shape_fn((rows, cols), move |_| {
        if let Some(z) = spare.take() {
            return z;
        }
        let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]: keeps ln finite
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        spare = Some(r * theta.sin());
        r * theta.cos()
    })
}

/// Computes the top-k singular triplets of `m`.
///
/// `oversampling` widens the sketch (`l = min(k + oversampling, min_dim)`)
/// and `power_iters` sharpens it against slowly decaying spectra. With
/// `k + oversampling >= min_dim` the sketch spans the full range and the
/// result matches an exact decomposition to numerical precision.
pub fn truncated_svd(
    m: &CsrMatrix,
    k: usize,
    seed: u64,
    oversampling: usize,
    power_iters: usize,
) -> Result<SvdModel> {
    let (rows, cols) = (m.rows(), m.cols());
    let min_dim = rows.min(cols);
    if k < 1 || k > min_dim {
        return Err(Error::InvalidInput(format!(
            "rank k={k} out of range for a {rows}x{cols} matrix"
        )));
    }
    if m.nnz() == 0 {
        return Err(Error::InvalidInput(
            "cannot decompose an all-zero matrix".into(),
        ));
    }
    let l = (k + oversampling).min(min_dim);
    let omega = gaussian_matrix(cols, l, seed);
    let mt = m.transpose();
    let (mut q, _) = thin_qr(&m.mul_dense(&omega));
    for _ in 0..power_iters {
        let (z, _) = thin_qr(&mt.mul_dense(&q));
        let (q_next, _) = thin_qr(&m.mul_dense(&z));
        q = q_next;
    }
    // B = QᵀM captures the sketched rows; factor its transpose so the small
    // dense SVD runs on an l×l block: Bᵀ = Q₂R₂, R₂ᵀ = Ů Σ V̊ᵀ,
    // M ≈ (Q·Ů) Σ (Q₂·V̊)ᵀ.
    let bt = mt.mul_dense(&q);
    let (q2, r2) = thin_qr(&bt);
    let (u_small, sigma, v_small) = jacobi_svd(&r2.t().to_owned());
    let u = q.dot(&u_small);
    let v = q2.dot(&v_small);
    let mut embeddings = u.slice(s![.., ..k]).to_owned();
    for (j, &s) in sigma[..k].iter().enumerate() {
        embeddings.column_mut(j).mapv_inplace(|x| x * s);
    }
    SvdModel::new(
        k,
        seed,
        sigma[..k].to_vec(),
        embeddings,
        v.slice(s![.., ..k]).to_owned(),
    )
}
