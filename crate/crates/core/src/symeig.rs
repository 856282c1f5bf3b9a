//! Extreme eigenvalues of small dense symmetric matrices.
//!
//! This is the evaluation path used by the ray envelopes. Diagonal inputs
//! and `d <= 2` use closed forms; everything else goes through a cyclic
//! Jacobi eigensolver. The independent cross-check lives in
//! [`crate::verify::eig_extremes`], which uses a tridiagonal QR solver.

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 64;

/// Returns `(lambda_min, lambda_max)` of a symmetric matrix.
///
/// The matrix is assumed square and symmetric; only its upper triangle is
/// read for off-diagonal entries.
pub fn extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    if is_diagonal(m) {
        return min_max(m.diagonal().iter().copied());
    }
    match n {
        1 => (m[(0, 0)], m[(0, 0)]),
        2 => closed_form_2x2(m[(0, 0)], m[(0, 1)], m[(1, 1)]),
        _ => min_max(jacobi_eigenvalues(m).into_iter()),
    }
}

/// Eigenvalues of `[[a, b], [b, c]]` in increasing order.
pub fn closed_form_2x2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(b);
    (mean - radius, mean + radius)
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// unsorted.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = 0.5 * (m + m.transpose());
    let scale = a.norm();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    let threshold = (f64::EPSILON * scale).powi(2);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    a.diagonal().iter().copied().collect()
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0))
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}
