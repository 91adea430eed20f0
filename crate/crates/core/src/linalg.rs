//! Small dense helpers on row-major slices. Heavier work goes through nalgebra.

use nalgebra::DMatrix;

/// `out = a * x` where `a` is `out.len() × x.len()` row-major.
pub fn matvec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(a.len(), out.len() * cols);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &a[r * cols..(r + 1) * cols];
        *o = row.iter().zip(x).map(|(p, q)| p * q).sum();
    }
}

/// `out += a * x`.
pub fn matvec_add(a: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(a.len(), out.len() * cols);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &a[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn to_matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Smallest and largest eigenvalue of the symmetric part of a square matrix.
pub fn sym_eigen_bounds(n: usize, data: &[f64]) -> (f64, f64) {
    let m = to_matrix(n, n, data);
    let s = (&m + m.transpose()) * 0.5;
    let eig = s.symmetric_eigen();
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest singular value.
pub fn operator_norm(rows: usize, cols: usize, data: &[f64]) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let m = to_matrix(rows, cols, data);
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Inverse of a square row-major matrix, `None` when singular.
pub fn invert(n: usize, data: &[f64]) -> Option<Vec<f64>> {
    let m = to_matrix(n, n, data);
    let scale = max_abs(data).max(1.0);
    let lu = m.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() <= 1e-14 * scale.powi(n as i32) {
        return None;
    }
    lu.try_inverse().map(|inv| to_row_major(&inv))
}

/// Solve a small dense system `a x = b`.
pub fn solve(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let m = to_matrix(n, n, a);
    let rhs = nalgebra::DVector::from_column_slice(b);
    m.lu().solve(&rhs).map(|x| x.as_slice().to_vec())
}
