//! Offline design: Riccati gains, target models, the homogenizing
//! pre-compensator and exosystem augmentation.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{eigenvalues, null_space, poly, spectral_radius, Complex64, LinalgError, Lu, Matrix};
use crate::lti::{
    is_observable, observability_matrix, uncontrollable_unstable_modes, unobservable_unstable_modes, zero_dynamics,
    LtiError, LtiSystem,
};
use crate::netgraph::UNIT_DISK_TOL;

pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 10_000;
/// Largest tolerated intertwining residual of an exosystem lift.
pub const LIFT_TOL: f64 = 1e-8;
/// Feedback rows below this magnitude are treated as exactly zero.
const FEEDBACK_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthesisError {
    #[error("(A, B) is not stabilizable: PBH rank drops at eigenvalue {0}")]
    NotStabilizable(Complex64),
    #[error("(C, A) is not detectable: PBH rank drops at eigenvalue {0}")]
    NotDetectable(Complex64),
    #[error("Riccati iteration did not converge in {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("{which} is not Schur: spectral radius {radius}")]
    NotSchur { which: &'static str, radius: f64 },
    #[error("unsupported agent: {0}")]
    Unsupported(Unsupported),
    #[error("invalid target model: {0}")]
    InvalidTarget(&'static str),
    #[error("nq = {nq} is below the observability index {required} of (Cr, Ar)")]
    TargetTooShort { nq: usize, required: usize },
    #[error("(Cr, Ar) is not observable")]
    ExosystemUnobservable,
    #[error("Ar has spectral radius {0} outside the closed unit disk")]
    ExosystemUnstable(f64),
    #[error("exosystem lift residual {0:e} exceeds tolerance")]
    LiftResidual(f64),
    #[error("weight {0} has the wrong shape")]
    WeightShape(&'static str),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Violated precondition of the pre-compensator's supported class.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Unsupported {
    #[error("agent must be SISO (m = {m}, p = {p})")]
    NotSiso { m: usize, p: usize },
    #[error("measurement Cm is required")]
    MissingMeasurement,
    #[error("transfer function is identically zero, so the agent is not right-invertible")]
    NotRightInvertible,
    #[error("relative degree {r} exceeds target uniform rank {nq}")]
    RelativeDegree { r: usize, nq: usize },
    #[error("invariant zero {0} is not strictly inside the unit circle")]
    NonMinimumPhase(Complex64),
    #[error("invariant zeros could not be determined")]
    ZerosUndetermined,
    #[error("(Cm, A) is not detectable: mode {0}")]
    Undetectable(Complex64),
}

impl From<Unsupported> for SynthesisError {
    fn from(u: Unsupported) -> Self {
        SynthesisError::Unsupported(u)
    }
}

/// Riccati weights `Q` (state) and `R` (input).
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiWeights {
    pub q: Matrix,
    pub r: Matrix,
}

impl RiccatiWeights {
    pub fn identity(n: usize, m: usize) -> Self {
        RiccatiWeights { q: Matrix::identity(n), r: Matrix::identity(m) }
    }
}

#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: Matrix,
    pub k: Matrix,
    pub iterations: usize,
    /// `‖P_{k+1} - P_k‖∞` for every iteration.
    pub steps: Vec<f64>,
}

/// Fixed-point iteration for the discrete algebraic Riccati equation,
/// starting from `P = Q`.
///
/// Stops when the step falls below `DARE_TOL · max(1, ‖P‖∞)`.
pub fn dare(a: &Matrix, b: &Matrix, w: &RiccatiWeights) -> Result<DareSolution, SynthesisError> {
    let (n, m) = (a.nrows(), b.ncols());
    if w.q.shape() != (n, n) {
        return Err(SynthesisError::WeightShape("Q"));
    }
    if w.r.shape() != (m, m) {
        return Err(SynthesisError::WeightShape("R"));
    }
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = w.q.clone();
    let mut steps = Vec::new();
    for it in 1..=DARE_MAX_ITER {
        let pb = p.matmul(b);
        let gram = &w.r + &bt.matmul(&pb);
        let bpa = bt.matmul(&p).matmul(a);
        let k = Lu::new(&gram)?.solve(&bpa)?;
        let mut next = &(&w.q + &at.matmul(&p).matmul(a)) - &at.matmul(&pb).matmul(&k);
        next.symmetrize();
        if !next.is_finite() {
            return Err(LinalgError::NonFinite.into());
        }
        let step = next.max_abs_diff(&p);
        steps.push(step);
        p = next;
        if step < DARE_TOL * p.norm_inf().max(1.0) {
            let gram = &w.r + &bt.matmul(&p).matmul(b);
            let k = Lu::new(&gram)?.solve(&bt.matmul(&p).matmul(a))?;
            return Ok(DareSolution { p, k, iterations: it, steps });
        }
    }
    Err(SynthesisError::NoConvergence { iterations: DARE_MAX_ITER, last_step: steps.last().copied().unwrap_or(0.0) })
}

fn certify(which: &'static str, m: &Matrix) -> Result<f64, SynthesisError> {
    let radius = spectral_radius(m)?;
    if radius < 1.0 - UNIT_DISK_TOL {
        Ok(radius)
    } else {
        Err(SynthesisError::NotSchur { which, radius })
    }
}

/// `K` with `A - BK` Schur, from the Riccati equation with the given weights.
pub fn design_state_gain_weighted(a: &Matrix, b: &Matrix, w: &RiccatiWeights) -> Result<Matrix, SynthesisError> {
    if let Some(&mode) = uncontrollable_unstable_modes(a, b)?.first() {
        return Err(SynthesisError::NotStabilizable(mode));
    }
    let sol = dare(a, b, w)?;
    certify("A - BK", &(a - &b.matmul(&sol.k)))?;
    Ok(sol.k)
}

pub fn design_state_gain(a: &Matrix, b: &Matrix) -> Result<Matrix, SynthesisError> {
    design_state_gain_weighted(a, b, &RiccatiWeights::identity(a.nrows(), b.ncols()))
}

/// `H` with `A - HC` Schur, by duality.
pub fn design_observer_gain_weighted(a: &Matrix, c: &Matrix, w: &RiccatiWeights) -> Result<Matrix, SynthesisError> {
    if let Some(&mode) = unobservable_unstable_modes(c, a)?.first() {
        return Err(SynthesisError::NotDetectable(mode));
    }
    let sol = dare(&a.transpose(), &c.transpose(), w)?;
    let h = sol.k.transpose();
    certify("A - HC", &(a - &h.matmul(c)))?;
    Ok(h)
}

pub fn design_observer_gain(a: &Matrix, c: &Matrix) -> Result<Matrix, SynthesisError> {
    design_observer_gain_weighted(a, c, &RiccatiWeights::identity(a.nrows(), c.nrows()))
}

/// Certified protocol gains: `A - BK` and, when present, `A - HC` Schur.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    k: Matrix,
    h: Option<Matrix>,
    state_radius: f64,
    observer_radius: Option<f64>,
}

impl GainSet {
    /// Riccati design with identity weights; `H` is designed when `observer`.
    pub fn design(sys: &LtiSystem, observer: bool) -> Result<Self, SynthesisError> {
        let k = design_state_gain(sys.a(), sys.b())?;
        let h = if observer { Some(design_observer_gain(sys.a(), sys.c())?) } else { None };
        GainSet::from_matrices(sys, k, h)
    }

    /// Certifies externally supplied gains.
    pub fn from_matrices(sys: &LtiSystem, k: Matrix, h: Option<Matrix>) -> Result<Self, SynthesisError> {
        if k.shape() != (sys.m(), sys.n()) {
            return Err(LtiError::Shape { name: "K", got: k.shape(), expected: (sys.m(), sys.n()) }.into());
        }
        let state_radius = certify("A - BK", &(sys.a() - &sys.b().matmul(&k)))?;
        let observer_radius = match &h {
            Some(h) => {
                if h.shape() != (sys.n(), sys.p()) {
                    return Err(LtiError::Shape { name: "H", got: h.shape(), expected: (sys.n(), sys.p()) }.into());
                }
                Some(certify("A - HC", &(sys.a() - &h.matmul(sys.c())))?)
            }
            None => None,
        };
        Ok(GainSet { k, h, state_radius, observer_radius })
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }
    pub fn h(&self) -> Option<&Matrix> {
        self.h.as_ref()
    }
    /// `ρ(A - BK)`.
    pub fn state_radius(&self) -> f64 {
        self.state_radius
    }
    /// `ρ(A - HC)`.
    pub fn observer_radius(&self) -> Option<f64> {
        self.observer_radius
    }
}

/// SISO design triple `(C, A, B)` in companion form: invertible of uniform
/// rank `nq`, no invariant zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    system: LtiSystem,
    nq: usize,
    char_poly: Vec<f64>,
}

impl TargetModel {
    /// Companion realization of a monic polynomial (ascending coefficients)
    /// of degree `nq ≥ 1`: `C = e₁ᵀ`, `B = e_nq`.
    pub fn from_char_poly(coeffs: &[f64]) -> Result<Self, SynthesisError> {
        let nq = coeffs.len().saturating_sub(1);
        if nq == 0 {
            return Err(SynthesisError::InvalidTarget("degree must be at least 1"));
        }
        if coeffs[nq] != 1.0 {
            return Err(SynthesisError::InvalidTarget("characteristic polynomial must be monic"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(SynthesisError::InvalidTarget("non-finite coefficient"));
        }
        let a = poly::companion(coeffs);
        let rho = spectral_radius(&a)?;
        if rho > 1.0 + UNIT_DISK_TOL {
            return Err(SynthesisError::InvalidTarget("eigenvalues must lie in the closed unit disk"));
        }
        let mut b = Matrix::zeros(nq, 1);
        b[(nq - 1, 0)] = 1.0;
        let mut c = Matrix::zeros(1, nq);
        c[(0, 0)] = 1.0;
        let system = LtiSystem::new(a, b, c)?;
        Ok(TargetModel { system, nq, char_poly: coeffs.to_vec() })
    }

    pub fn system(&self) -> &LtiSystem {
        &self.system
    }
    pub fn nq(&self) -> usize {
        self.nq
    }
    /// Monic characteristic polynomial of `A`, ascending coefficients.
    pub fn char_poly(&self) -> &[f64] {
        &self.char_poly
    }
}

/// Chain of `nq` delays: transfer `z^{-nq}`.
pub fn default_target(nq: usize) -> Result<TargetModel, SynthesisError> {
    let mut c = vec![0.0; nq + 1];
    c[nq] = 1.0;
    TargetModel::from_char_poly(&c)
}

/// Pre-compensator `ξ⁺ = Ah ξ + Bh z + Eh v`, `u = Ch ξ + Dh v` and the
/// certificate `(As, Cs)` of the residual disturbance.
///
/// `ξ = (x̂, σ)`: an observer of the agent state (absent when the feedback
/// does not use it) followed by `delays` input delays.
#[derive(Debug, Clone, PartialEq)]
pub struct Compensator {
    pub ah: Matrix,
    pub bh: Matrix,
    pub ch: Matrix,
    pub dh: Matrix,
    pub eh: Matrix,
    /// Residual generator: `ω⁺ = As ω`, `d = Cs ω`.
    pub a_s: Matrix,
    pub c_s: Matrix,
    /// Observer gain `L` (`n × q`), empty when the observer is omitted.
    pub observer_gain: Matrix,
    pub observer_dim: usize,
    pub delays: usize,
    /// Feedback on the composite state `(x, σ)`.
    pub feedback: Matrix,
    /// Maps `(x, σ)` to target coordinates `x̄`.
    pub target_map: Matrix,
    /// Orthonormal basis of the unobservable subspace of the composite
    /// `(x, σ)` seen through the target output, and the zero dynamics on it.
    pub zero_basis: Matrix,
    pub zero_dynamics: Matrix,
    /// `b / g`: target over agent high-frequency gain.
    pub input_gain: f64,
}

impl Compensator {
    pub fn state_dim(&self) -> usize {
        self.ah.nrows()
    }

    /// `ρ(As)`, zero for an empty residual.
    pub fn residual_radius(&self) -> Result<f64, LinalgError> {
        if self.a_s.nrows() == 0 {
            return Ok(0.0);
        }
        spectral_radius(&self.a_s)
    }

    /// Residual initial state for agent state `x` and compensator state `ξ`.
    pub fn residual_state(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut omega = Vec::with_capacity(self.a_s.nrows());
        if self.observer_dim > 0 {
            omega.extend(x.iter().zip(&xi[..n]).map(|(a, b)| a - b));
        }
        let composite = self.composite(x, xi);
        omega.extend(self.zero_basis.transpose().mul_vec(&composite));
        omega
    }

    /// Composite `(x, σ)` from agent and compensator states.
    pub fn composite(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        v.extend_from_slice(&xi[self.observer_dim..]);
        v
    }
}

/// Homogenizing pre-compensator for a SISO, minimum-phase agent with
/// relative degree `r ≤ nq`.
///
/// The compensator delays `v` by `nq - r` steps, then applies feedback
/// linearization on an observer estimate so that the output obeys the
/// target's difference equation driven by `v`. The observer error is the
/// only source of the disturbance `d`; zero dynamics enter `As` with zero
/// injection.
pub fn design_precompensator(agent: &LtiSystem, target: &TargetModel) -> Result<Compensator, SynthesisError> {
    if !agent.is_siso() {
        return Err(Unsupported::NotSiso { m: agent.m(), p: agent.p() }.into());
    }
    let cm = agent.cm().ok_or(Unsupported::MissingMeasurement)?.clone();
    let (ai, bi, ci) = (agent.a(), agent.b(), agent.c());
    let n = agent.n();
    let nq = target.nq();
    let (r, g) = agent.leading_markov().ok_or(Unsupported::NotRightInvertible)?;
    if r > nq {
        return Err(Unsupported::RelativeDegree { r, nq }.into());
    }
    let (zd, _) = zero_dynamics(agent).ok_or(Unsupported::ZerosUndetermined)?;
    if zd.nrows() > 0 {
        for z in eigenvalues(&zd)? {
            if z.norm() >= 1.0 - UNIT_DISK_TOL {
                return Err(Unsupported::NonMinimumPhase(z).into());
            }
        }
    }
    if let Some(&mode) = unobservable_unstable_modes(&cm, ai)?.first() {
        return Err(Unsupported::Undetectable(mode).into());
    }
    let g = g[(0, 0)];
    let s = nq - r;
    let ne = n + s;

    // Composite (x, σ): u = σ₁, σ shifts, σ_s⁺ = u_new.
    let mut ae = Matrix::zeros(ne, ne);
    ae.set_block(0, 0, ai);
    let mut be = Matrix::zeros(ne, 1);
    if s > 0 {
        for i in 0..n {
            ae[(i, n)] = bi[(i, 0)];
        }
        for j in 0..s - 1 {
            ae[(n + j, n + j + 1)] = 1.0;
        }
        be[(ne - 1, 0)] = 1.0;
    } else {
        be.set_block(0, 0, bi);
    }
    let mut ce = Matrix::zeros(1, ne);
    ce.set_block(0, 0, ci);

    let tsys = target.system();
    let b_target = tsys.markov(nq - 1)[(0, 0)];
    let alpha = target.char_poly();
    let mut row = ce.matmul(&ae.pow(nq));
    let mut cak = ce.clone();
    for &a in &alpha[..nq] {
        row = &row + &cak.scale(a);
        cak = cak.matmul(&ae);
    }
    let mut feedback = row.scale(-1.0 / g);
    for v in feedback.as_mut_slice() {
        if v.abs() < FEEDBACK_ZERO {
            *v = 0.0;
        }
    }
    let input_gain = b_target / g;
    let fx = feedback.submatrix(0, 0, 1, n);
    let fs = feedback.submatrix(0, n, 1, s);

    let obs_e = observability_matrix(&ce, &ae, nq);
    let obs_t = observability_matrix(tsys.c(), tsys.a(), nq);
    let target_map = Lu::new(&obs_t)?.solve(&obs_e)?;
    let zero_basis = null_space(&obs_e, None);
    let closed = &ae + &be.matmul(&feedback);
    let zero_dyn = zero_basis.transpose().matmul(&closed).matmul(&zero_basis);

    let use_observer = fx.max_abs() > 0.0;
    let (l, nobs) = if use_observer {
        (design_observer_gain(ai, &cm)?, n)
    } else {
        (Matrix::zeros(n, 0), 0)
    };
    let q = cm.nrows();
    let nh = nobs + s;

    let (ch, dh) = if s > 0 {
        let mut ch = Matrix::zeros(1, nh);
        ch[(0, nobs)] = 1.0;
        (ch, Matrix::zeros(1, 1))
    } else if use_observer {
        (fx.clone(), Matrix::scalar(input_gain))
    } else {
        (Matrix::zeros(1, 0), Matrix::scalar(input_gain))
    };

    let mut ah = Matrix::zeros(nh, nh);
    let mut bh = Matrix::zeros(nh, q);
    let mut eh = Matrix::zeros(nh, 1);
    if use_observer {
        ah.set_block(0, 0, &(ai - &l.matmul(&cm)));
        ah.add_block(0, 0, &bi.matmul(&ch));
        bh.set_block(0, 0, &l);
        eh.set_block(0, 0, &bi.matmul(&dh));
    }
    if s > 0 {
        for j in 0..s - 1 {
            ah[(nobs + j, nobs + j + 1)] = 1.0;
        }
        let last = nh - 1;
        if use_observer {
            ah.set_block(last, 0, &fx);
        }
        ah.set_block(last, nobs, &fs);
        eh[(last, 0)] = input_gain;
    }

    let (a_s, c_s) = if use_observer {
        let a_obs = ai - &l.matmul(&cm);
        let a_s = Matrix::block_diag(&[&a_obs, &zero_dyn]);
        let mut c_s = Matrix::zeros(1, a_s.nrows());
        c_s.set_block(0, 0, &fx.scale(-g / b_target));
        (a_s, c_s)
    } else {
        (zero_dyn.clone(), Matrix::zeros(1, zero_dyn.nrows()))
    };
    if a_s.nrows() > 0 {
        certify("As", &a_s)?;
    }

    Ok(Compensator {
        ah,
        bh,
        ch,
        dh,
        eh,
        a_s,
        c_s,
        observer_gain: l,
        observer_dim: nobs,
        delays: s,
        feedback,
        target_map,
        zero_basis,
        zero_dynamics: zero_dyn,
        input_gain,
    })
}

/// Exosystem `x_r⁺ = Ar x_r`, `y_r = Cr x_r` and its augmented triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ExosystemSpec {
    pub ar: Matrix,
    pub cr: Matrix,
    /// `(Čr, Ǎr, B̌r)`.
    pub augmented: TargetModel,
    /// `x̌_r = lift · x_r`.
    pub lift: Matrix,
}

impl ExosystemSpec {
    pub fn lifted(&self, xr: &[f64]) -> Vec<f64> {
        self.lift.mul_vec(xr)
    }

    pub fn output(&self, xr: &[f64]) -> Vec<f64> {
        self.cr.mul_vec(xr)
    }
}

/// Embeds `(Cr, Ar)` in a uniform-rank-`nq` triple whose characteristic
/// polynomial is `z^{nq-r} χ_Ar(z)`.
pub fn augment_exosystem(cr: &Matrix, ar: &Matrix, nq: usize) -> Result<ExosystemSpec, SynthesisError> {
    if !ar.is_square() {
        return Err(LtiError::NonSquareA(ar.nrows(), ar.ncols()).into());
    }
    let r = ar.nrows();
    if cr.shape() != (1, r) {
        return Err(LtiError::Shape { name: "Cr", got: cr.shape(), expected: (1, r) }.into());
    }
    if r == 0 {
        return Err(SynthesisError::ExosystemUnobservable);
    }
    if !is_observable(cr, ar) {
        return Err(SynthesisError::ExosystemUnobservable);
    }
    let rho = spectral_radius(ar)?;
    if rho > 1.0 + UNIT_DISK_TOL {
        return Err(SynthesisError::ExosystemUnstable(rho));
    }
    // A single observable output has observability index r.
    if nq < r {
        return Err(SynthesisError::TargetTooShort { nq, required: r });
    }
    let mut shift = vec![0.0; nq - r + 1];
    shift[nq - r] = 1.0;
    let chi = poly::mul(&shift, &poly::char_poly(ar));
    let augmented = TargetModel::from_char_poly(&chi)?;
    let aug = augmented.system();
    let obs_check = observability_matrix(aug.c(), aug.a(), nq);
    let obs_r = observability_matrix(cr, ar, nq);
    let lift = Lu::new(&obs_check)?.solve(&obs_r)?;
    let residual = aug.a().matmul(&lift).max_abs_diff(&lift.matmul(ar));
    let out_residual = aug.c().matmul(&lift).max_abs_diff(cr);
    let residual = residual.max(out_residual);
    if !(residual <= LIFT_TOL) {
        return Err(SynthesisError::LiftResidual(residual));
    }
    Ok(ExosystemSpec { ar: ar.clone(), cr: cr.clone(), augmented, lift })
}
