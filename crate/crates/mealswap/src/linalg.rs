//! Dense helpers for the randomized decomposition: Householder thin QR and a
//! one-sided Jacobi SVD for the small projected block. Both are plain
//! sequential loops — the matrices here are `l × l` or `n × l` with small `l`,
//! so the sparse products dominate, and keeping these deterministic keeps the
//! whole decomposition reproducible.

use ndarray::{s, Array1, Array2};

/// Thin QR of a tall matrix (`m >= n`): `a = q · r` with `q` an `m×n`
/// orthonormal-column factor and `r` upper triangular `n×n`.
pub(crate) fn thin_qr(a: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (m, n) = a.dim();
    assert!(m >= n, "thin_qr expects a tall matrix, got {m}x{n}");
    let mut work = a.clone();
    let mut reflectors: Vec<Array1<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let x = work.slice(s![k.., k]).to_owned();
        let norm = x.dot(&x).sqrt();
        if norm == 0.0 {
            reflectors.push(Array1::zeros(m - k));
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.dot(&v).sqrt();
        if vnorm == 0.0 {
            reflectors.push(Array1::zeros(m - k));
            continue;
        }
        v /= vnorm;
        for j in k..n {
            let coef = 2.0 * v.dot(&work.slice(s![k.., j]));
            work.slice_mut(s![k.., j]).scaled_add(-coef, &v);
        }
        reflectors.push(v);
    }
    let mut r = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            r[[i, j]] = work[[i, j]];
        }
    }
    // q = H_0 · … · H_{n-1} applied to the leading m×n identity block
    let mut q = Array2::zeros((m, n));
    for i in 0..n {
        q[[i, i]] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        for j in 0..n {
            let coef = 2.0 * v.dot(&q.slice(s![k.., j]));
            q.slice_mut(s![k.., j]).scaled_add(-coef, v);
        }
    }
    (q, r)
}

fn rotate_columns(m: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let a = m[[i, p]];
        let b = m[[i, q]];
        m[[i, p]] = c * a - s * b;
        m[[i, q]] = s * a + c * b;
    }
}

/// One-sided Jacobi SVD of a small matrix with `m >= n`: returns
/// `(u, sigma, v)` with `g = u · diag(sigma) · vᵀ` and `sigma` descending.
/// Columns of `u` belonging to zero singular values are zero.
pub(crate) fn jacobi_svd(g: &Array2<f64>) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let (m, n) = g.dim();
    assert!(m >= n, "jacobi_svd expects a tall matrix, got {m}x{n}");
    let mut w = g.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let eps = 1e-14;
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let app = w.column(p).dot(&w.column(p));
                let aqq = w.column(q).dot(&w.column(q));
                let apq = w.column(p).dot(&w.column(q));
                if apq.abs() <= eps * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).dot(&w.column(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        norms[b]
            .partial_cmp(&norms[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut u = Array2::zeros((m, n));
    let mut vv = Array2::zeros((n, n));
    let mut sigma = Vec::with_capacity(n);
    for (out_j, &j) in order.iter().enumerate() {
        sigma.push(norms[j]);
        if norms[j] > 0.0 {
            let col = w.column(j).mapv(|x| x / norms[j]);
            u.column_mut(out_j).assign(&col);
        }
        vv.column_mut(out_j).assign(&v.column(j));
    }
    (u, sigma, vv)
}
