//! SVD-based Moore-Penrose pseudo-inverse with a relative singular-value cutoff.

use nalgebra::{DMatrix, DVector};

/// Default relative cutoff `σ_i ≤ tol·σ_max ⇒ σ_i` treated as zero.
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    /// Number of singular values kept.
    pub rank: usize,
    pub singular_values: DVector<f64>,
}

/// Pseudo-inverse together with the retained rank and the singular values.
pub fn pseudo_inverse_full(mat: &DMatrix<f64>, rel_tol: f64) -> PseudoInverse {
    let (rows, cols) = mat.shape();
    if rows == 0 || cols == 0 {
        return PseudoInverse {
            matrix: DMatrix::zeros(cols, rows),
            rank: 0,
            singular_values: DVector::zeros(0),
        };
    }
    let (u, sigma, v) = thin_svd(mat);
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max;

    let mut pinv = DMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            // v_k (1/σ_k) u_kᵀ
            pinv += (v.column(k) / s) * u.column(k).transpose();
        }
    }
    PseudoInverse {
        matrix: pinv,
        rank,
        singular_values: sigma,
    }
}

/// Thin SVD `mat = U diag(σ) Vᵀ`. nalgebra's bidiagonal QR occasionally
/// returns factors that do not reconstruct rank-deficient inputs (errors of
/// order 1e-2 on well-scaled 3x3 matrices), so faer does the work and nalgebra
/// is only the fallback when faer reports non-convergence.
fn thin_svd(mat: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = mat.shape();
    let a = faer::Mat::<f64>::from_fn(rows, cols, |i, j| mat[(i, j)]);
    match a.thin_svd() {
        Ok(svd) => {
            let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
            let k = s.nrows();
            (
                DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
                DVector::from_fn(k, |i, _| s[i]),
                DMatrix::from_fn(cols, k, |i, j| v[(i, j)]),
            )
        }
        Err(_) => {
            let svd = mat.clone().svd(true, true);
            let v = svd.v_t.expect("right singular vectors requested").transpose();
            (svd.u.expect("left singular vectors requested"), svd.singular_values, v)
        }
    }
}

pub fn pseudo_inverse(mat: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    pseudo_inverse_full(mat, rel_tol).matrix
}

/// Condition number of `mat` after scaling each row to unit 2-norm; zero rows
/// are left alone. Infinite when the scaled matrix is rank deficient.
pub fn row_scaled_condition(mat: &DMatrix<f64>) -> f64 {
    let mut scaled = mat.clone();
    for mut row in scaled.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    let (_, sigma, _) = thin_svd(&scaled);
    let max = sigma.iter().copied().fold(0.0, f64::max);
    let min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
