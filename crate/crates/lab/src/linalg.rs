//! Dense symmetric linear algebra on ndarray, sized for p in the hundreds.
//!
//! Everything here is written directly rather than bound to LAPACK: the
//! matrices are small, the call sites want precise control over failure
//! (factorization success doubles as a positive-definiteness probe), and a
//! pure-Rust build keeps the crate portable.

use ndarray::{Array1, Array2, ArrayView2};
use thiserror::Error;

/// Jitter ladder tried before a factorization is declared failed. The last
/// rung is the documented ceiling; anything needing more is genuinely not PSD
/// for our purposes.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: entry ({i},{j}) differs from ({j},{i}) by {gap:.3e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("matrix is not positive definite (pivot {pivot:.3e} at column {col}, jitter {jitter:.1e})")]
    NotPositiveDefinite { col: usize, pivot: f64, jitter: f64 },
    #[error("matrix has (numerically) dependent columns at column {col}")]
    RankDeficient { col: usize },
}

pub fn check_symmetric(a: &ArrayView2<f64>, tol: f64) -> Result<(), LinalgError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    for i in 0..rows {
        for j in (i + 1)..rows {
            let gap = (a[[i, j]] - a[[j, i]]).abs();
            if gap > tol {
                return Err(LinalgError::NotSymmetric { i, j, gap });
            }
        }
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of `a + jitter * I`.
pub fn cholesky(a: &ArrayView2<f64>, jitter: f64) -> Result<Array2<f64>, LinalgError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    let n = rows;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]] + jitter;
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { col: j, pivot: d, jitter });
        }
        let root = d.sqrt();
        l[[j, j]] = root;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / root;
        }
    }
    Ok(l)
}

/// Cholesky with the jitter ladder; returns the factor and the jitter that
/// made it succeed.
pub fn cholesky_jittered(a: &ArrayView2<f64>) -> Result<(Array2<f64>, f64), LinalgError> {
    let mut last = LinalgError::NotSquare { rows: 0, cols: 0 };
    for &jitter in &JITTER_LADDER {
        match cholesky(a, jitter) {
            Ok(l) => return Ok((l, jitter)),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Positive-definiteness probe used by the bisection searches.
pub fn is_positive_definite(a: &ArrayView2<f64>) -> bool {
    cholesky(a, 0.0).is_ok()
}

/// Solve L x = b in place (L lower triangular).
pub fn solve_lower(l: &ArrayView2<f64>, b: &mut Array1<f64>) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

/// Solve Lᵀ x = b in place.
pub fn solve_lower_transpose(l: &ArrayView2<f64>, b: &mut Array1<f64>) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

/// Solve (L Lᵀ) x = b for each column of `b`, i.e. apply the inverse of the
/// matrix `l` factors.
pub fn spd_solve_matrix(l: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let m = b.ncols();
    let mut out = Array2::<f64>::zeros((n, m));
    let mut col = Array1::<f64>::zeros(n);
    for j in 0..m {
        col.assign(&b.column(j));
        solve_lower(l, &mut col);
        solve_lower_transpose(l, &mut col);
        out.column_mut(j).assign(&col);
    }
    out
}

/// Largest x in [lo, hi] with predicate(x) true, for a predicate that is true
/// on a prefix of the interval. The callers' predicates are factorization
/// probes, monotone up to float noise near the boundary.
pub fn bisect_feasible<F: Fn(f64) -> bool>(predicate: F, lo: f64, hi: f64, tol: f64) -> f64 {
    debug_assert!(lo <= hi);
    if !predicate(lo) {
        return lo;
    }
    if predicate(hi) {
        return hi;
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if predicate(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest eigenvalue of a symmetric positive semidefinite matrix, located
/// by bisection on lambda with Cholesky probes of a - lambda I.
pub fn smallest_eigenvalue_spd(a: &ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[[i, i]]).fold(0.0_f64, f64::max);
    if max_diag <= 0.0 {
        return 0.0;
    }
    let probe = |lambda: f64| {
        let mut shifted = a.to_owned();
        for i in 0..n {
            shifted[[i, i]] -= lambda;
        }
        is_positive_definite(&shifted.view())
    };
    bisect_feasible(probe, 0.0, max_diag, 1e-12 * max_diag.max(1.0))
}

/// An n x take matrix with orthonormal columns spanning a subspace orthogonal
/// to the columns of `x`, from the Householder QR of `x`. Requires
/// n >= x.ncols() + take and full column rank.
pub fn orthonormal_complement(
    x: &ArrayView2<f64>,
    take: usize,
) -> Result<Array2<f64>, LinalgError> {
    let (n, p) = x.dim();
    assert!(n >= p + take, "not enough rows for a {take}-column complement");
    let mut r = x.to_owned();
    // Householder vectors live below the diagonal of r; beta[k] scales them.
    // v_k has an implicit 1 in position k.
    let mut betas = vec![0.0_f64; p];
    for k in 0..p {
        let mut norm2 = 0.0;
        for i in (k + 1)..n {
            norm2 += r[[i, k]] * r[[i, k]];
        }
        let alpha = r[[k, k]];
        let full = (alpha * alpha + norm2).sqrt();
        if full <= 1e-12 {
            return Err(LinalgError::RankDeficient { col: k });
        }
        if norm2 == 0.0 {
            betas[k] = 0.0;
            continue;
        }
        // v = x_k + sign(alpha) * ||x_k|| e_k, normalized so v[k] = 1.
        let lead = alpha + full.copysign(alpha);
        for i in (k + 1)..n {
            r[[i, k]] /= lead;
        }
        let mut vtv = 1.0;
        for i in (k + 1)..n {
            vtv += r[[i, k]] * r[[i, k]];
        }
        betas[k] = 2.0 / vtv;
        // Apply the reflector to the trailing columns so later reflectors see
        // the updated matrix.
        for j in (k + 1)..p {
            let mut dot = r[[k, j]];
            for i in (k + 1)..n {
                dot += r[[i, k]] * r[[i, j]];
            }
            let scale = betas[k] * dot;
            r[[k, j]] -= scale;
            for i in (k + 1)..n {
                let v = r[[i, k]];
                r[[i, j]] -= scale * v;
            }
        }
        r[[k, k]] = -full.copysign(alpha);
    }

    // Columns p..p+take of the implicit Q are Q e_m = H_0 (H_1 (... H_{p-1} e_m)).
    let mut out = Array2::<f64>::zeros((n, take));
    let mut col = Array1::<f64>::zeros(n);
    for (m, mut target) in out.columns_mut().into_iter().enumerate() {
        col.fill(0.0);
        col[p + m] = 1.0;
        for k in (0..p).rev() {
            if betas[k] == 0.0 {
                continue;
            }
            let mut dot = col[k];
            for i in (k + 1)..n {
                dot += r[[i, k]] * col[i];
            }
            let scale = betas[k] * dot;
            col[k] -= scale;
            for i in (k + 1)..n {
                col[i] -= scale * r[[i, k]];
            }
        }
        target.assign(&col);
    }
    Ok(out)
}
