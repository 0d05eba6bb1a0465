use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lifting::{Matrix, Vector};

/// Threshold on `|det|` after every row is scaled to unit max-norm. The
/// test is then blind to row scaling, which `diag(d)·G` products need.
pub const DET_TOL: f64 = 1e-12;

/// Inverse of a small square matrix: explicit adjugate for `N <= 3`,
/// Gauss-Jordan elimination otherwise. Rows are equilibrated first.
pub fn invert<const N: usize>(m: &Matrix<N>) -> Result<Matrix<N>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("matrix has non-finite entries".into()));
    }
    let scale = Vector::<N>::from_fn(|r, _| m.row(r).amax());
    if let Some(r) = scale.iter().position(|&s| s == 0.0) {
        return Err(Error::Singular(format!("row {r} is zero")));
    }
    let unit = Matrix::<N>::from_fn(|r, c| m[(r, c)] / scale[r]);
    let inv = invert_equilibrated(&unit)?;
    // m = D·unit, so m⁻¹ = unit⁻¹·D⁻¹
    Ok(Matrix::<N>::from_fn(|r, c| inv[(r, c)] / scale[c]))
}

fn invert_equilibrated<const N: usize>(m: &Matrix<N>) -> Result<Matrix<N>> {
    let singular = |det: f64| {
        Error::Singular(format!(
            "determinant {det:e} of the row-equilibrated matrix is below {DET_TOL:e}"
        ))
    };
    let threshold = DET_TOL;
    let mut inv = Matrix::<N>::zeros();
    match N {
        1 => {
            let det = m[(0, 0)];
            if det.abs() <= threshold {
                return Err(singular(det));
            }
            inv[(0, 0)] = 1.0 / det;
        }
        2 => {
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            if det.abs() <= threshold {
                return Err(singular(det));
            }
            inv[(0, 0)] = m[(1, 1)] / det;
            inv[(0, 1)] = -m[(0, 1)] / det;
            inv[(1, 0)] = -m[(1, 0)] / det;
            inv[(1, 1)] = m[(0, 0)] / det;
        }
        3 => {
            let a = |r: usize, c: usize| m[(r, c)];
            // cofactor C(r, c), stored transposed into the adjugate
            for r in 0..3 {
                for c in 0..3 {
                    let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
                    let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
                    inv[(c, r)] = a(r1, c1) * a(r2, c2) - a(r1, c2) * a(r2, c1);
                }
            }
            let det = a(0, 0) * inv[(0, 0)] + a(0, 1) * inv[(1, 0)] + a(0, 2) * inv[(2, 0)];
            if det.abs() <= threshold {
                return Err(singular(det));
            }
            inv /= det;
        }
        _ => {
            // Gauss-Jordan with partial pivoting
            let mut a = *m;
            inv = Matrix::<N>::identity();
            let mut det = 1.0;
            for col in 0..N {
                let piv = (col..N)
                    .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
                    .unwrap_or(col);
                if piv != col {
                    a.swap_rows(piv, col);
                    inv.swap_rows(piv, col);
                    det = -det;
                }
                let p = a[(col, col)];
                det *= p;
                if p == 0.0 {
                    return Err(singular(0.0));
                }
                for c in 0..N {
                    a[(col, c)] /= p;
                    inv[(col, c)] /= p;
                }
                for r in (0..N).filter(|&r| r != col) {
                    let f = a[(r, col)];
                    if f != 0.0 {
                        for c in 0..N {
                            a[(r, c)] -= f * a[(col, c)];
                            inv[(r, c)] -= f * inv[(col, c)];
                        }
                    }
                }
            }
            if det.abs() <= threshold {
                return Err(singular(det));
            }
        }
    }
    Ok(inv)
}

/// Smallest and largest singular values.
pub fn singular_value_range<const N: usize>(m: &Matrix<N>) -> (f64, f64) {
    let sv = DMatrix::from_column_slice(N, N, m.as_slice()).singular_values();
    (sv.min(), sv.max())
}
