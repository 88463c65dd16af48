//! Small dense linear algebra for calibration and precompensation.
//!
//! Everything here works on tiny row-major matrices (3x3 chromatic maps,
//! 4-column least-squares designs), so plain Gaussian elimination with
//! partial pivoting is plenty.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solve `A x = b` in place for square `A` (row major, `n x n`).
pub fn solve<T: Scalar>(a: &[T], b: &[T], n: usize) -> Result<Vec<T>> {
    if a.len() != n * n || b.len() != n {
        return Err(Error::shape(format!(
            "solve: expected {}x{} system, got a={} b={}",
            n,
            n,
            a.len(),
            b.len()
        )));
    }
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[row * n + col].abs() > m[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if m[pivot * n + col].abs() <= T::epsilon() {
            return Err(Error::validation("solve: singular matrix".to_string()));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let diag = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / diag;
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                let v = m[col * n + k];
                m[row * n + k] = m[row * n + k] - factor * v;
            }
            let xv = x[col];
            x[row] = x[row] - factor * xv;
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc = acc - m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    Ok(x)
}

/// Least squares `argmin_x |D x - y|_2` via normal equations.
///
/// `design` is `rows x cols` row major; `rows >= cols` and the columns must
/// be independent for a solution to exist.
pub fn least_squares<T: Scalar>(design: &[T], y: &[T], rows: usize, cols: usize) -> Result<Vec<T>> {
    if design.len() != rows * cols || y.len() != rows {
        return Err(Error::shape("least_squares: dimension mismatch".to_string()));
    }
    if rows < cols {
        return Err(Error::validation(
            "least_squares: underdetermined system".to_string(),
        ));
    }
    let mut ata = vec![T::zero(); cols * cols];
    let mut aty = vec![T::zero(); cols];
    for r in 0..rows {
        let row = &design[r * cols..(r + 1) * cols];
        for i in 0..cols {
            aty[i] = aty[i] + row[i] * y[r];
            for j in 0..cols {
                ata[i * cols + j] = ata[i * cols + j] + row[i] * row[j];
            }
        }
    }
    solve(&ata, &aty, cols)
}

/// Invert a 3x3 matrix (row major) by cofactors.
pub fn invert_3x3<T: Scalar>(m: &[T; 9]) -> Result<[T; 9]> {
    let det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6]);
    if det.abs() <= T::epsilon() {
        return Err(Error::validation("invert_3x3: singular matrix".to_string()));
    }
    let inv_det = T::one() / det;
    Ok([
        (m[4] * m[8] - m[5] * m[7]) * inv_det,
        (m[2] * m[7] - m[1] * m[8]) * inv_det,
        (m[1] * m[5] - m[2] * m[4]) * inv_det,
        (m[5] * m[6] - m[3] * m[8]) * inv_det,
        (m[0] * m[8] - m[2] * m[6]) * inv_det,
        (m[2] * m[3] - m[0] * m[5]) * inv_det,
        (m[3] * m[7] - m[4] * m[6]) * inv_det,
        (m[1] * m[6] - m[0] * m[7]) * inv_det,
        (m[0] * m[4] - m[1] * m[3]) * inv_det,
    ])
}

/// Frobenius-norm condition estimate `|M|_F * |M^-1|_F` of a 3x3 matrix.
pub fn cond_3x3<T: Scalar>(m: &[T; 9]) -> Result<T> {
    let inv = invert_3x3(m)?;
    let norm = |v: &[T; 9]| v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
    Ok(norm(m) * norm(&inv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let a = [2.0_f64, 1.0, 1.0, 3.0];
        let b = [5.0, 10.0];
        let x = solve(&a, &b, 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = [1.0_f64, 2.0, 2.0, 4.0];
        assert!(solve(&a, &[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn least_squares_recovers_exact_fit() {
        // y = 2*x0 - x1 + 3 over four samples
        let design = [
            1.0_f64, 0.0, 1.0, //
            0.0, 1.0, 1.0, //
            1.0, 1.0, 1.0, //
            2.0, -1.0, 1.0,
        ];
        let y = [5.0, 2.0, 4.0, 8.0];
        let x = least_squares(&design, &y, 4, 3).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] + 1.0).abs() < 1e-12);
        assert!((x[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_3x3_round_trip() {
        let m = [1.0_f64, 0.2, 0.1, 0.05, 0.9, 0.0, 0.0, 0.1, 1.1];
        let inv = invert_3x3(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += m[i * 3 + k] * inv[k * 3 + j];
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((acc - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_condition_is_three() {
        let eye = [1.0_f64, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let c = cond_3x3(&eye).unwrap();
        assert!((c - 3.0).abs() < 1e-12);
    }
}
