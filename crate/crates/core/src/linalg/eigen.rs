use alloc::vec;
use alloc::vec::Vec;

use super::{Complex64, LinalgError, Matrix};

const RADIX: f64 = 2.0;
const MAX_ITERATIONS: usize = 60;

/// Eigenvalues of a real square matrix.
///
/// Balancing, orthogonal Hessenberg reduction and Francis double-shift QR on
/// the Hessenberg form. Complex eigenvalues come out as exact conjugate pairs.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::Dimension("eigenvalues require a square matrix"));
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = Work::from_matrix(m);
    a.balance();
    a.hessenberg();
    a.hqr()
}

/// `max |λ|`, or 0 for an empty matrix.
pub fn spectral_radius(m: &Matrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(m)?.iter().fold(0.0, |r, z| r.max(z.norm())))
}

/// Greedy minimal-distance matching between two eigenvalue multisets.
///
/// Returns the largest matched distance, or `None` when the sizes differ.
pub fn match_spectra(a: &[Complex64], b: &[Complex64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for _ in 0..a.len() {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for (i, za) in a.iter().enumerate().filter(|(i, _)| !used_a[*i]) {
            for (j, zb) in b.iter().enumerate().filter(|(j, _)| !used_b[*j]) {
                let d = (za - zb).norm();
                if d < best.2 {
                    best = (i, j, d);
                }
            }
        }
        used_a[best.0] = true;
        used_b[best.1] = true;
        worst = worst.max(best.2);
    }
    Some(worst)
}

/// 1-based square work array, which keeps the QR sweep close to its
/// classical formulation.
struct Work {
    n: usize,
    a: Vec<f64>,
}

impl Work {
    fn from_matrix(m: &Matrix) -> Self {
        let n = m.nrows();
        let mut a = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                a[(i + 1) * (n + 1) + j + 1] = m[(i, j)];
            }
        }
        Work { n, a }
    }

    #[inline]
    fn at(&self, i: isize, j: isize) -> f64 {
        self.a[i as usize * (self.n + 1) + j as usize]
    }

    #[inline]
    fn at_mut(&mut self, i: isize, j: isize) -> &mut f64 {
        let n = self.n;
        &mut self.a[i as usize * (n + 1) + j as usize]
    }

    fn balance(&mut self) {
        let n = self.n as isize;
        let sqrdx = RADIX * RADIX;
        let mut done = false;
        while !done {
            done = true;
            for i in 1..=n {
                let (mut r, mut c) = (0.0, 0.0);
                for j in 1..=n {
                    if j != i {
                        c += self.at(j, i).abs();
                        r += self.at(i, j).abs();
                    }
                }
                if c != 0.0 && r != 0.0 {
                    let mut g = r / RADIX;
                    let mut f = 1.0;
                    let s = c + r;
                    while c < g {
                        f *= RADIX;
                        c *= sqrdx;
                    }
                    g = r * RADIX;
                    while c > g {
                        f /= RADIX;
                        c /= sqrdx;
                    }
                    if (c + r) / f < 0.95 * s {
                        done = false;
                        let g = 1.0 / f;
                        for j in 1..=n {
                            *self.at_mut(i, j) *= g;
                        }
                        for j in 1..=n {
                            *self.at_mut(j, i) *= f;
                        }
                    }
                }
            }
        }
    }

    /// Householder reduction to upper Hessenberg form (similarity).
    fn hessenberg(&mut self) {
        let n = self.n as isize;
        let mut v = vec![0.0; self.n + 1];
        for k in 1..=(n - 2) {
            let mut norm = 0.0;
            for i in (k + 1)..=n {
                norm += self.at(i, k) * self.at(i, k);
            }
            let norm = libm::sqrt(norm);
            if norm == 0.0 {
                continue;
            }
            let x0 = self.at(k + 1, k);
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            for i in (k + 1)..=n {
                v[i as usize] = self.at(i, k);
            }
            v[(k + 1) as usize] -= alpha;
            let vnorm2: f64 = ((k + 1)..=n).map(|i| v[i as usize] * v[i as usize]).sum();
            if vnorm2 == 0.0 {
                continue;
            }
            let beta = 2.0 / vnorm2;
            // left: rows k+1..n
            for j in 1..=n {
                let s: f64 = ((k + 1)..=n).map(|i| v[i as usize] * self.at(i, j)).sum();
                let s = s * beta;
                for i in (k + 1)..=n {
                    *self.at_mut(i, j) -= s * v[i as usize];
                }
            }
            // right: columns k+1..n
            for i in 1..=n {
                let s: f64 = ((k + 1)..=n).map(|j| self.at(i, j) * v[j as usize]).sum();
                let s = s * beta;
                for j in (k + 1)..=n {
                    *self.at_mut(i, j) -= s * v[j as usize];
                }
            }
            *self.at_mut(k + 1, k) = alpha;
            for i in (k + 2)..=n {
                *self.at_mut(i, k) = 0.0;
            }
        }
    }

    #[allow(unused_assignments)]
    fn hqr(&mut self) -> Result<Vec<Complex64>, LinalgError> {
        let n = self.n as isize;
        let mut wr = vec![0.0; self.n + 1];
        let mut wi = vec![0.0; self.n + 1];
        let mut anorm = 0.0;
        for i in 1..=n {
            for j in core::cmp::max(i - 1, 1)..=n {
                anorm += self.at(i, j).abs();
            }
        }
        let mut nn = n;
        let mut t = 0.0;
        let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
        let (mut x, mut y, mut z, mut w) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        while nn >= 1 {
            let mut its = 0;
            loop {
                let mut l = nn;
                while l >= 2 {
                    let mut s = self.at(l - 1, l - 1).abs() + self.at(l, l).abs();
                    if s == 0.0 {
                        s = anorm;
                    }
                    if self.at(l, l - 1).abs() + s == s {
                        *self.at_mut(l, l - 1) = 0.0;
                        break;
                    }
                    l -= 1;
                }
                x = self.at(nn, nn);
                if l == nn {
                    wr[nn as usize] = x + t;
                    wi[nn as usize] = 0.0;
                    nn -= 1;
                } else {
                    y = self.at(nn - 1, nn - 1);
                    w = self.at(nn, nn - 1) * self.at(nn - 1, nn);
                    if l == nn - 1 {
                        p = 0.5 * (y - x);
                        q = p * p + w;
                        z = libm::sqrt(q.abs());
                        x += t;
                        if q >= 0.0 {
                            z = p + sign(z, p);
                            wr[(nn - 1) as usize] = x + z;
                            wr[nn as usize] = x + z;
                            if z != 0.0 {
                                wr[nn as usize] = x - w / z;
                            }
                            wi[(nn - 1) as usize] = 0.0;
                            wi[nn as usize] = 0.0;
                        } else {
                            wr[(nn - 1) as usize] = x + p;
                            wr[nn as usize] = x + p;
                            wi[(nn - 1) as usize] = -z;
                            wi[nn as usize] = z;
                        }
                        nn -= 2;
                    } else {
                        if its == MAX_ITERATIONS {
                            return Err(LinalgError::NoConvergence {
                                index: nn as usize - 1,
                                iterations: its,
                            });
                        }
                        if its % 10 == 0 && its > 0 {
                            // exceptional shift
                            t += x;
                            for i in 1..=nn {
                                *self.at_mut(i, i) -= x;
                            }
                            let s = self.at(nn, nn - 1).abs() + self.at(nn - 1, nn - 2).abs();
                            x = 0.75 * s;
                            y = x;
                            w = -0.4375 * s * s;
                        }
                        its += 1;
                        let mut m = nn - 2;
                        while m >= l {
                            z = self.at(m, m);
                            r = x - z;
                            let s = y - z;
                            p = (r * s - w) / self.at(m + 1, m) + self.at(m, m + 1);
                            q = self.at(m + 1, m + 1) - z - r - s;
                            r = self.at(m + 2, m + 1);
                            let s = p.abs() + q.abs() + r.abs();
                            p /= s;
                            q /= s;
                            r /= s;
                            if m == l {
                                break;
                            }
                            let u = self.at(m, m - 1).abs() * (q.abs() + r.abs());
                            let v = p.abs()
                                * (self.at(m - 1, m - 1).abs() + z.abs() + self.at(m + 1, m + 1).abs());
                            if u + v == v {
                                break;
                            }
                            m -= 1;
                        }
                        for i in (m + 2)..=nn {
                            *self.at_mut(i, i - 2) = 0.0;
                            if i != m + 2 {
                                *self.at_mut(i, i - 3) = 0.0;
                            }
                        }
                        let mut k = m;
                        while k <= nn - 1 {
                            if k != m {
                                p = self.at(k, k - 1);
                                q = self.at(k + 1, k - 1);
                                r = 0.0;
                                if k != nn - 1 {
                                    r = self.at(k + 2, k - 1);
                                }
                                x = p.abs() + q.abs() + r.abs();
                                if x != 0.0 {
                                    p /= x;
                                    q /= x;
                                    r /= x;
                                }
                            }
                            let s = sign(libm::sqrt(p * p + q * q + r * r), p);
                            if s != 0.0 {
                                if k == m {
                                    if l != m {
                                        *self.at_mut(k, k - 1) = -self.at(k, k - 1);
                                    }
                                } else {
                                    *self.at_mut(k, k - 1) = -s * x;
                                }
                                p += s;
                                x = p / s;
                                y = q / s;
                                z = r / s;
                                q /= p;
                                r /= p;
                                for j in k..=nn {
                                    p = self.at(k, j) + q * self.at(k + 1, j);
                                    if k != nn - 1 {
                                        p += r * self.at(k + 2, j);
                                        *self.at_mut(k + 2, j) -= p * z;
                                    }
                                    *self.at_mut(k + 1, j) -= p * y;
                                    *self.at_mut(k, j) -= p * x;
                                }
                                let mmin = if nn < k + 3 { nn } else { k + 3 };
                                for i in l..=mmin {
                                    p = x * self.at(i, k) + y * self.at(i, k + 1);
                                    if k != nn - 1 {
                                        p += z * self.at(i, k + 2);
                                        *self.at_mut(i, k + 2) -= p * r;
                                    }
                                    *self.at_mut(i, k + 1) -= p * q;
                                    *self.at_mut(i, k) -= p;
                                }
                            }
                            k += 1;
                        }
                    }
                }
                if !(l < nn - 1) {
                    break;
                }
            }
        }
        Ok((1..=self.n).map(|i| Complex64::new(wr[i], wi[i])).collect())
    }
}

#[inline]
fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}
