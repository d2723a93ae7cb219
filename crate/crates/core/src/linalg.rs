//! Covariance conditioning helpers.

use nalgebra::DMatrix;

/// First and last diagonal jitter, as multiples of the trace.
pub const JITTER_START: f64 = 1e-12;
pub const JITTER_MAX: f64 = 1e-6;
/// Eigenvalues above `-PSD_TOLERANCE * trace` count as non-negative.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// `P <- (P + P^T) / 2`.
pub fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Lower-triangular `S` with `S S^T = P` for symmetric positive
/// semi-definite `P`.
///
/// Pivots at or below a relative zero threshold produce a zero column, so
/// states with exactly zero variance (and zero cross-covariance) stay exactly
/// fixed. Returns `None` when `P` is indefinite beyond [`PSD_TOLERANCE`].
pub fn psd_cholesky(p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = p.nrows();
    let mut l = DMatrix::zeros(n, n);
    let trace: f64 = p.diagonal().iter().sum();
    if !trace.is_finite() {
        return None;
    }
    let max_diag = p.diagonal().iter().cloned().fold(0.0_f64, f64::max);
    let zero_tol = 1e-14 * max_diag;
    let neg_tol = PSD_TOLERANCE * trace.abs();
    for j in 0..n {
        let mut d = p[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -neg_tol || d.is_nan() {
            return None;
        }
        if d <= zero_tol {
            // Null direction. Remaining coupling must vanish for P to be PSD.
            for i in (j + 1)..n {
                let mut r = p[(i, j)];
                let mut schur = p[(i, i)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                    schur -= l[(i, k)] * l[(i, k)];
                }
                let bound = 10.0 * (d.abs().max(zero_tol) * schur.abs().max(zero_tol)).sqrt();
                if r.abs() > bound.max(1e-300) && r.abs() > 1e-12 * max_diag {
                    return None;
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = p[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Square-root factor of `P`, escalating a diagonal jitter from
/// `JITTER_START * trace` by factors of ten up to `JITTER_MAX * trace`.
pub fn sqrt_with_jitter(p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(l) = psd_cholesky(p) {
        return Some(l);
    }
    let trace: f64 = p.diagonal().iter().sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return None;
    }
    let mut eps = JITTER_START;
    while eps <= JITTER_MAX * (1.0 + 1e-9) {
        let mut q = p.clone();
        for i in 0..q.nrows() {
            q[(i, i)] += eps * trace;
        }
        if let Some(l) = psd_cholesky(&q) {
            return Some(l);
        }
        eps *= 10.0;
    }
    None
}

/// True when `P` is symmetric (within 1e-10) and PSD within [`PSD_TOLERANCE`].
pub fn is_psd(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (p[(i, j)] - p[(j, i)]).abs() >= 1e-10 * (1.0 + p[(i, j)].abs()) {
                return false;
            }
        }
    }
    psd_cholesky(p).is_some()
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_range(p: &DMatrix<f64>) -> (f64, f64) {
    let eig = p.clone().symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}
