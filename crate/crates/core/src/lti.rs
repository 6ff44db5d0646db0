//! Discrete-time LTI state-space models and their structural properties.

use alloc::vec::Vec;

use crate::linalg::{
    eigenvalues, null_space, rank, spectral_radius, Complex64, LinalgError, Lu, Matrix,
};
use crate::netgraph::UNIT_DISK_TOL;

/// Relative threshold below which a Markov parameter counts as zero.
const MARKOV_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LtiError {
    #[error("A must be square, got {0}x{1}")]
    NonSquareA(usize, usize),
    #[error("{name} has shape {got:?}, expected {expected:?}")]
    Shape {
        name: &'static str,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("system matrices contain non-finite entries")]
    NonFinite,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k)`, optional local measurement
/// `z(k) = Cm x(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    cm: Option<Matrix>,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self, LtiError> {
        Self::with_measurement(a, b, c, None)
    }

    pub fn with_measurement(a: Matrix, b: Matrix, c: Matrix, cm: Option<Matrix>) -> Result<Self, LtiError> {
        if !a.is_square() {
            return Err(LtiError::NonSquareA(a.nrows(), a.ncols()));
        }
        let n = a.nrows();
        if b.nrows() != n {
            return Err(LtiError::Shape { name: "B", got: b.shape(), expected: (n, b.ncols()) });
        }
        if c.ncols() != n {
            return Err(LtiError::Shape { name: "C", got: c.shape(), expected: (c.nrows(), n) });
        }
        if let Some(cm) = &cm {
            if cm.ncols() != n {
                return Err(LtiError::Shape { name: "Cm", got: cm.shape(), expected: (cm.nrows(), n) });
            }
        }
        let finite = a.is_finite() && b.is_finite() && c.is_finite() && cm.as_ref().is_none_or(|m| m.is_finite());
        if !finite {
            return Err(LtiError::NonFinite);
        }
        Ok(LtiSystem { a, b, c, cm })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn cm(&self) -> Option<&Matrix> {
        self.cm.as_ref()
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.m() == 1 && self.p() == 1
    }

    /// Markov parameter `C A^k B`.
    pub fn markov(&self, k: usize) -> Matrix {
        self.c.matmul(&self.a.pow(k)).matmul(&self.b)
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let ax = self.a.mul_vec(x);
        let bu = self.b.mul_vec(u);
        ax.iter().zip(&bu).map(|(p, q)| p + q).collect()
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        self.c.mul_vec(x)
    }

    pub fn measurement(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.cm.as_ref().map(|cm| cm.mul_vec(x))
    }

    /// Leading Markov parameter: smallest `r ≥ 1` with `C A^{r-1} B ≠ 0`
    /// within the horizon `2n`, and that parameter.
    pub fn leading_markov(&self) -> Option<(usize, Matrix)> {
        let n = self.n();
        let scale_c = self.c.norm_inf();
        let scale_b = self.b.transpose().norm_inf();
        let scale_a = self.a.norm_inf().max(1.0);
        let mut cak = self.c.clone();
        let mut growth = 1.0;
        for k in 0..(2 * n).max(1) {
            let g = cak.matmul(&self.b);
            let thresh = MARKOV_RTOL * (scale_c * scale_b * growth).max(f64::MIN_POSITIVE);
            if g.max_abs() > thresh {
                return Some((k + 1, g));
            }
            cak = cak.matmul(&self.a);
            growth *= scale_a;
        }
        None
    }
}

/// Answer to a structural question the toolkit may be unable to settle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Determination {
    Yes,
    No,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub eigenvalues_of_a: Vec<Complex64>,
    pub a_in_closed_unit_disk: bool,
    pub stabilizable: bool,
    pub detectable: bool,
    /// `None` when the system carries no local measurement map.
    pub detectable_via_cm: Option<bool>,
    /// `None` when the zero structure is not computable by this toolkit
    /// (non-uniform-rank MIMO, or identically zero transfer).
    pub invariant_zeros: Option<Vec<Complex64>>,
    /// SISO only.
    pub relative_degree: Option<usize>,
    pub uniform_rank: Option<usize>,
    pub right_invertible: Determination,
}

/// Eigenvalues `λ` of `A` at which `[λI - A, B]` loses rank.
pub fn uncontrollable_modes(a: &Matrix, b: &Matrix) -> Result<Vec<Complex64>, LinalgError> {
    let ev = eigenvalues(a)?;
    Ok(ev.into_iter().filter(|&z| crate::linalg::pbh_deficient(a, b, z, None)).collect())
}

/// Eigenvalues `λ` of `A` with `|λ| ≥ 1 - tol` at which `[λI - A, B]` loses rank.
pub fn uncontrollable_unstable_modes(a: &Matrix, b: &Matrix) -> Result<Vec<Complex64>, LinalgError> {
    let ev = eigenvalues(a)?;
    Ok(ev
        .into_iter()
        .filter(|z| z.norm() >= 1.0 - UNIT_DISK_TOL)
        .filter(|&z| crate::linalg::pbh_deficient(a, b, z, None))
        .collect())
}

/// Eigenvalues `λ` of `A` with `|λ| ≥ 1 - tol` at which `[λI - A; C]` loses rank.
pub fn unobservable_unstable_modes(c: &Matrix, a: &Matrix) -> Result<Vec<Complex64>, LinalgError> {
    uncontrollable_unstable_modes(&a.transpose(), &c.transpose())
}

pub fn is_stabilizable(a: &Matrix, b: &Matrix) -> Result<bool, LinalgError> {
    Ok(uncontrollable_unstable_modes(a, b)?.is_empty())
}

pub fn is_detectable(c: &Matrix, a: &Matrix) -> Result<bool, LinalgError> {
    Ok(unobservable_unstable_modes(c, a)?.is_empty())
}

/// `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = b.clone();
    for _ in 0..n {
        let next = a.matmul(&cur);
        blocks.push(cur);
        cur = next;
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Matrix::hstack(&refs)
}

/// `[C; CA; …; CA^{k-1}]`.
pub fn observability_matrix(c: &Matrix, a: &Matrix, k: usize) -> Matrix {
    let mut blocks = Vec::with_capacity(k);
    let mut cur = c.clone();
    for _ in 0..k {
        let next = cur.matmul(a);
        blocks.push(cur);
        cur = next;
    }
    if blocks.is_empty() {
        return Matrix::zeros(0, a.ncols());
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Matrix::vstack(&refs)
}

pub fn is_controllable(a: &Matrix, b: &Matrix) -> bool {
    rank(&controllability_matrix(a, b), None) == a.nrows()
}

pub fn is_observable(c: &Matrix, a: &Matrix) -> bool {
    rank(&observability_matrix(c, a, a.nrows()), None) == a.nrows()
}

/// `max |λ(M)| < 1 - tol` (default tolerance 1e-9).
pub fn is_schur(m: &Matrix, tol: Option<f64>) -> Result<bool, LinalgError> {
    Ok(spectral_radius(m)? < 1.0 - tol.unwrap_or(UNIT_DISK_TOL))
}

/// Zero dynamics for a square system whose leading Markov parameter is
/// invertible.
///
/// Returns the restriction of `A - B G⁻¹ C A^r` to `ker [C; CA; …; CA^{r-1}]`
/// together with the orthonormal kernel basis. Its eigenvalues are the
/// invariant zeros (roots of the Rosenbrock determinant).
pub fn zero_dynamics(sys: &LtiSystem) -> Option<(Matrix, Matrix)> {
    if sys.m() != sys.p() {
        return None;
    }
    let (r, g) = sys.leading_markov()?;
    let g_inv = Lu::new(&g).ok()?.inverse().ok()?;
    let n = sys.n();
    if sys.p() * r > n {
        return None;
    }
    let obs = observability_matrix(sys.c(), sys.a(), r);
    let basis = null_space(&obs, None);
    if basis.ncols() != n - sys.p() * r {
        return None;
    }
    let car = sys.c().matmul(&sys.a().pow(r));
    let az = sys.a() - &sys.b().matmul(&g_inv).matmul(&car);
    let restricted = basis.transpose().matmul(&az).matmul(&basis);
    Some((restricted, basis))
}

pub fn analyze(sys: &LtiSystem) -> Result<StructureReport, LtiError> {
    let eigenvalues_of_a = eigenvalues(sys.a())?;
    let rho = eigenvalues_of_a.iter().fold(0.0, |m: f64, z| m.max(z.norm()));
    let stabilizable = is_stabilizable(sys.a(), sys.b())?;
    let detectable = is_detectable(sys.c(), sys.a())?;
    let detectable_via_cm = match sys.cm() {
        Some(cm) => Some(is_detectable(cm, sys.a())?),
        None => None,
    };

    let leading = sys.leading_markov();
    let relative_degree = if sys.is_siso() { leading.as_ref().map(|(r, _)| *r) } else { None };
    let uniform_rank = leading.as_ref().and_then(|(r, g)| {
        (g.is_square() && Lu::new(g).is_ok()).then_some(*r)
    });
    let right_invertible = match &leading {
        None => Determination::No,
        Some((_, g)) if rank(g, None) == sys.p() => Determination::Yes,
        Some(_) if sys.is_siso() => Determination::Yes,
        Some(_) => Determination::Undetermined,
    };
    let invariant_zeros = match zero_dynamics(sys) {
        Some((z, _)) => Some(eigenvalues(&z)?),
        None => None,
    };

    Ok(StructureReport {
        eigenvalues_of_a,
        a_in_closed_unit_disk: rho <= 1.0 + UNIT_DISK_TOL,
        stabilizable,
        detectable,
        detectable_via_cm,
        invariant_zeros,
        relative_degree,
        uniform_rank,
        right_invertible,
    })
}
