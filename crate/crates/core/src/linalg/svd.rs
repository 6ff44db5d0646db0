use alloc::vec::Vec;

use super::{Complex64, Matrix, RANK_RTOL};

const MAX_SWEEPS: usize = 80;

/// Singular values and right singular vectors from a one-sided Jacobi sweep.
///
/// `s[j]` pairs with column `j` of `v`; values are not sorted.
#[derive(Debug, Clone)]
pub struct Svd {
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn new(a: &Matrix) -> Self {
        let (m, n) = a.shape();
        let mut u = a.clone();
        let mut v = Matrix::identity(n);
        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in (p + 1)..n {
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for i in 0..m {
                        let (up, uq) = (u[(i, p)], u[(i, q)]);
                        alpha += up * up;
                        beta += uq * uq;
                        gamma += up * uq;
                    }
                    if gamma == 0.0 || gamma.abs() <= 1e-15 * libm::sqrt(alpha * beta) {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                    let c = 1.0 / libm::sqrt(1.0 + t * t);
                    let s = c * t;
                    for i in 0..m {
                        let (up, uq) = (u[(i, p)], u[(i, q)]);
                        u[(i, p)] = c * up - s * uq;
                        u[(i, q)] = s * up + c * uq;
                    }
                    for i in 0..n {
                        let (vp, vq) = (v[(i, p)], v[(i, q)]);
                        v[(i, p)] = c * vp - s * vq;
                        v[(i, q)] = s * vp + c * vq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let s = (0..n)
            .map(|j| libm::sqrt((0..m).map(|i| u[(i, j)] * u[(i, j)]).sum::<f64>()))
            .collect();
        Svd { s, v }
    }

    pub fn max(&self) -> f64 {
        self.s.iter().copied().fold(0.0, f64::max)
    }
}

pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let mut s = Svd::new(a).s;
    s.sort_by(|x, y| y.total_cmp(x));
    s.truncate(a.nrows().min(a.ncols()));
    s
}

/// Numerical rank: singular values above `rtol · σ_max`.
pub fn rank(a: &Matrix, rtol: Option<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let svd = Svd::new(a);
    let smax = svd.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = rtol.unwrap_or(RANK_RTOL) * smax;
    svd.s.iter().filter(|&&s| s > tol).count()
}

/// Rank of a complex matrix given as real and imaginary parts.
///
/// Uses the real embedding `[[Re, -Im], [Im, Re]]`, whose rank is twice the
/// complex rank.
pub fn rank_complex(re: &Matrix, im: &Matrix, rtol: Option<f64>) -> usize {
    let neg_im = im.scale(-1.0);
    let top = Matrix::hstack(&[re, &neg_im]);
    let bottom = Matrix::hstack(&[im, re]);
    rank(&Matrix::vstack(&[&top, &bottom]), rtol) / 2
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn null_space(a: &Matrix, rtol: Option<f64>) -> Matrix {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Matrix::identity(n);
    }
    let svd = Svd::new(a);
    let smax = svd.max();
    let tol = rtol.unwrap_or(RANK_RTOL) * smax;
    let keep: Vec<usize> = (0..n).filter(|&j| smax == 0.0 || svd.s[j] <= tol).collect();
    Matrix::from_fn(n, keep.len(), |i, j| svd.v[(i, keep[j])])
}

/// `true` when `z` is (numerically) a rank-dropping point of `[zI - A, B]`.
pub(crate) fn pbh_deficient(a: &Matrix, b: &Matrix, z: Complex64, rtol: Option<f64>) -> bool {
    let n = a.nrows();
    let re = Matrix::hstack(&[
        &Matrix::from_fn(n, n, |i, j| if i == j { z.re - a[(i, j)] } else { -a[(i, j)] }),
        b,
    ]);
    let im = Matrix::hstack(&[&Matrix::identity(n).scale(z.im), &Matrix::zeros(n, b.ncols())]);
    rank_complex(&re, &im, rtol) < n
}
