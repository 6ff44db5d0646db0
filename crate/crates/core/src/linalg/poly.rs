//! Real polynomials with coefficients stored in ascending order
//! (`c[0] + c[1] z + ... + c[n] z^n`).

use alloc::vec;
use alloc::vec::Vec;

use super::{eigenvalues, Complex64, LinalgError, Matrix};

/// Characteristic polynomial `det(zI - A)` by the Faddeev–LeVerrier recursion.
///
/// Exact for small integer matrices; intended for the low orders used by
/// target and exosystem models.
pub fn char_poly(a: &Matrix) -> Vec<f64> {
    assert!(a.is_square());
    let n = a.nrows();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = Matrix::zeros(n, n);
    for k in 1..=n {
        let mut next = a.matmul(&m);
        for i in 0..n {
            next[(i, i)] += c[n + 1 - k];
        }
        m = next;
        c[n - k] = -a.matmul(&m).trace() / k as f64;
    }
    c
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `p(z)` evaluated at a complex point (Horner).
pub fn eval(c: &[f64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &x| acc * z + x)
}

/// Bottom-row companion matrix of a monic polynomial of degree `n ≥ 1`.
///
/// Its first row block is the upper shift; the last row is `-c[0..n]`.
pub fn companion(c: &[f64]) -> Matrix {
    let n = c.len() - 1;
    assert!(n >= 1, "companion matrix needs degree ≥ 1");
    let lead = c[n];
    Matrix::from_fn(n, n, |i, j| {
        if i + 1 < n {
            if j == i + 1 {
                1.0
            } else {
                0.0
            }
        } else {
            -c[j] / lead
        }
    })
}

/// Roots as eigenvalues of the companion matrix.
pub fn roots(c: &[f64]) -> Result<Vec<Complex64>, LinalgError> {
    let mut deg = c.len().saturating_sub(1);
    while deg > 0 && c[deg] == 0.0 {
        deg -= 1;
    }
    if deg == 0 {
        return Ok(Vec::new());
    }
    eigenvalues(&companion(&c[..=deg]))
}
