//! Controller state machines for the four collaborative protocols.
//!
//! Each step consumes network signals and local measurements and returns the
//! successor state, the control input and the broadcast `ρ`. No graph data is
//! reachable from here.

use alloc::vec::Vec;

use crate::linalg::{vec_add, vec_sub, Matrix};
use crate::lti::LtiSystem;
use crate::synthesis::{Compensator, ExosystemSpec, GainSet, SynthesisError, TargetModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    FullState,
    PartialState,
    OutputSync,
    RegulatedSync,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("{what} has length {got}, expected {expected}")]
    Dimension { what: &'static str, got: usize, expected: usize },
    #[error("step for {expected:?} called with a {got:?} spec")]
    WrongKind { expected: ProtocolKind, got: ProtocolKind },
    #[error("no compensator for agent {0}")]
    MissingCompensator(usize),
    #[error("protocol requires an observer gain H")]
    MissingObserver,
    #[error("controller state is missing {0}")]
    MissingState(&'static str),
    #[error("compensator {agent} does not match the design model: {reason}")]
    IncompatibleCompensator { agent: usize, reason: &'static str },
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

/// Per-agent protocol memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub eta: Vec<f64>,
    pub xhat: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: ControllerState,
    pub u: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Coefficients of one protocol. The design triple is the agent model for
/// kinds 1–2, the target model for kind 3 and the augmented exosystem for
/// kind 4.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    kind: ProtocolKind,
    design: LtiSystem,
    gains: GainSet,
    a_bk: Matrix,
    compensators: Vec<Compensator>,
    exosystem: Option<ExosystemSpec>,
}

impl ProtocolSpec {
    pub fn full_state(sys: &LtiSystem, gains: &GainSet) -> Result<Self, ProtocolError> {
        let gains = GainSet::from_matrices(sys, gains.k().clone(), None)?;
        Ok(Self::build(ProtocolKind::FullState, sys.clone(), gains, Vec::new(), None))
    }

    pub fn partial_state(sys: &LtiSystem, gains: &GainSet) -> Result<Self, ProtocolError> {
        let gains = recertify_with_observer(sys, gains)?;
        Ok(Self::build(ProtocolKind::PartialState, sys.clone(), gains, Vec::new(), None))
    }

    pub fn output_sync(
        target: &TargetModel,
        gains: &GainSet,
        compensators: Vec<Compensator>,
    ) -> Result<Self, ProtocolError> {
        let sys = target.system();
        let gains = recertify_with_observer(sys, gains)?;
        check_compensators(&compensators, sys)?;
        Ok(Self::build(ProtocolKind::OutputSync, sys.clone(), gains, compensators, None))
    }

    pub fn regulated_sync(
        exosystem: &ExosystemSpec,
        gains: &GainSet,
        compensators: Vec<Compensator>,
    ) -> Result<Self, ProtocolError> {
        let sys = exosystem.augmented.system();
        let gains = recertify_with_observer(sys, gains)?;
        check_compensators(&compensators, sys)?;
        Ok(Self::build(ProtocolKind::RegulatedSync, sys.clone(), gains, compensators, Some(exosystem.clone())))
    }

    fn build(
        kind: ProtocolKind,
        design: LtiSystem,
        gains: GainSet,
        compensators: Vec<Compensator>,
        exosystem: Option<ExosystemSpec>,
    ) -> Self {
        let a_bk = design.a() - &design.b().matmul(gains.k());
        ProtocolSpec { kind, design, gains, a_bk, compensators, exosystem }
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }
    pub fn design(&self) -> &LtiSystem {
        &self.design
    }
    pub fn gains(&self) -> &GainSet {
        &self.gains
    }
    pub fn compensators(&self) -> &[Compensator] {
        &self.compensators
    }
    pub fn compensator(&self, agent: usize) -> Option<&Compensator> {
        self.compensators.get(agent)
    }
    pub fn exosystem(&self) -> Option<&ExosystemSpec> {
        self.exosystem.as_ref()
    }

    /// Zero controller state for `agent`.
    pub fn initial_state(&self, agent: usize) -> Result<ControllerState, ProtocolError> {
        let n = self.design.n();
        let zeros = |k: usize| alloc::vec![0.0; k];
        Ok(match self.kind {
            ProtocolKind::FullState => ControllerState { eta: zeros(n), xhat: None, xi: None },
            ProtocolKind::PartialState => ControllerState { eta: zeros(n), xhat: Some(zeros(n)), xi: None },
            ProtocolKind::OutputSync | ProtocolKind::RegulatedSync => {
                let comp = self.compensator(agent).ok_or(ProtocolError::MissingCompensator(agent))?;
                ControllerState { eta: zeros(n), xhat: Some(zeros(n)), xi: Some(zeros(comp.state_dim())) }
            }
        })
    }

    fn expect(&self, kind: ProtocolKind) -> Result<(), ProtocolError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(ProtocolError::WrongKind { expected: kind, got: self.kind })
        }
    }

    fn h(&self) -> Result<&Matrix, ProtocolError> {
        self.gains.h().ok_or(ProtocolError::MissingObserver)
    }
}

fn recertify_with_observer(sys: &LtiSystem, gains: &GainSet) -> Result<GainSet, ProtocolError> {
    let h = gains.h().ok_or(ProtocolError::MissingObserver)?;
    Ok(GainSet::from_matrices(sys, gains.k().clone(), Some(h.clone()))?)
}

fn check_compensators(compensators: &[Compensator], sys: &LtiSystem) -> Result<(), ProtocolError> {
    for (agent, c) in compensators.iter().enumerate() {
        if c.target_map.nrows() != sys.n() {
            return Err(ProtocolError::IncompatibleCompensator { agent, reason: "target dimension differs" });
        }
        if c.eh.ncols() != sys.m() || c.dh.ncols() != sys.m() {
            return Err(ProtocolError::IncompatibleCompensator { agent, reason: "input dimension differs" });
        }
    }
    Ok(())
}

fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), ProtocolError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(ProtocolError::Dimension { what, got: v.len(), expected })
    }
}

/// `η⁺ = Aη + Bu + Aζ − Aζ̂`, `u = −Kη`.
pub fn protocol1_step(
    state: &ControllerState,
    zeta: &[f64],
    zetahat: &[f64],
    spec: &ProtocolSpec,
) -> Result<StepOutput, ProtocolError> {
    spec.expect(ProtocolKind::FullState)?;
    let sys = &spec.design;
    let n = sys.n();
    check_len("eta", &state.eta, n)?;
    check_len("zeta", zeta, n)?;
    check_len("zetahat", zetahat, n)?;
    let u: Vec<f64> = spec.gains.k().mul_vec(&state.eta).iter().map(|v| -v).collect();
    let drive = vec_sub(zeta, zetahat);
    let eta = vec_add(&vec_add(&sys.a().mul_vec(&state.eta), &sys.b().mul_vec(&u)), &sys.a().mul_vec(&drive));
    Ok(StepOutput {
        state: ControllerState { eta, xhat: None, xi: None },
        u,
        rho: state.eta.clone(),
    })
}

/// `η⁺ = Aη + Bu + Ax̂ − Aζ̂`, `x̂⁺ = Ax̂ − BKζ̂ + H(ζ − Cx̂)`, `u = −Kη`.
pub fn protocol2_step(
    state: &ControllerState,
    zeta: &[f64],
    zetahat: &[f64],
    spec: &ProtocolSpec,
) -> Result<StepOutput, ProtocolError> {
    spec.expect(ProtocolKind::PartialState)?;
    let sys = &spec.design;
    let (n, p) = (sys.n(), sys.p());
    check_len("eta", &state.eta, n)?;
    let xhat = state.xhat.as_deref().ok_or(ProtocolError::MissingState("xhat"))?;
    check_len("xhat", xhat, n)?;
    check_len("zeta", zeta, p)?;
    check_len("zetahat", zetahat, n)?;
    let k = spec.gains.k();
    let u: Vec<f64> = k.mul_vec(&state.eta).iter().map(|v| -v).collect();
    let eta = vec_add(
        &vec_add(&sys.a().mul_vec(&state.eta), &sys.b().mul_vec(&u)),
        &sys.a().mul_vec(&vec_sub(xhat, zetahat)),
    );
    let xhat_next = observer_update(sys, k, spec.h()?, xhat, zeta, zetahat);
    Ok(StepOutput {
        state: ControllerState { eta, xhat: Some(xhat_next), xi: None },
        u,
        rho: state.eta.clone(),
    })
}

/// `x̂⁺ = Ax̂ − BKζ̂ + H(ζ − Cx̂)`.
fn observer_update(sys: &LtiSystem, k: &Matrix, h: &Matrix, xhat: &[f64], zeta: &[f64], zetahat: &[f64]) -> Vec<f64> {
    let innovation = vec_sub(zeta, &sys.c().mul_vec(xhat));
    let bk = sys.b().mul_vec(&k.mul_vec(zetahat));
    vec_add(&vec_sub(&sys.a().mul_vec(xhat), &bk), &h.mul_vec(&innovation))
}

/// Shared body of the compensated protocols; `a` is the design triple.
fn compensated_step(
    state: &ControllerState,
    zeta: &[f64],
    zetahat: &[f64],
    z: &[f64],
    spec: &ProtocolSpec,
    agent: usize,
) -> Result<StepOutput, ProtocolError> {
    let sys = &spec.design;
    let (n, p) = (sys.n(), sys.p());
    let comp = spec.compensator(agent).ok_or(ProtocolError::MissingCompensator(agent))?;
    check_len("eta", &state.eta, n)?;
    let xhat = state.xhat.as_deref().ok_or(ProtocolError::MissingState("xhat"))?;
    let xi = state.xi.as_deref().ok_or(ProtocolError::MissingState("xi"))?;
    check_len("xhat", xhat, n)?;
    check_len("xi", xi, comp.state_dim())?;
    check_len("zeta", zeta, p)?;
    check_len("zetahat", zetahat, n)?;
    check_len("z", z, comp.bh.ncols())?;
    let k = spec.gains.k();
    let v: Vec<f64> = k.mul_vec(&state.eta).iter().map(|x| -x).collect();
    let u = vec_add(&comp.ch.mul_vec(xi), &comp.dh.mul_vec(&v));
    let xi_next = vec_add(&vec_add(&comp.ah.mul_vec(xi), &comp.bh.mul_vec(z)), &comp.eh.mul_vec(&v));
    let xhat_next = observer_update(sys, k, spec.h()?, xhat, zeta, zetahat);
    let eta = vec_add(&spec.a_bk.mul_vec(&state.eta), &sys.a().mul_vec(&vec_sub(xhat, zetahat)));
    Ok(StepOutput {
        state: ControllerState { eta, xhat: Some(xhat_next), xi: Some(xi_next) },
        u,
        rho: state.eta.clone(),
    })
}

/// Output synchronization: pre-compensator `ξ` wrapped around the partial-state
/// protocol for the target model.
pub fn protocol3_step(
    state: &ControllerState,
    zeta: &[f64],
    zetahat: &[f64],
    z: &[f64],
    spec: &ProtocolSpec,
    agent: usize,
) -> Result<StepOutput, ProtocolError> {
    spec.expect(ProtocolKind::OutputSync)?;
    compensated_step(state, zeta, zetahat, z, spec, agent)
}

/// Regulated output synchronization: as [`protocol3_step`] on the augmented
/// exosystem triple, driven by `ζ̄` and `ζ̌`.
pub fn protocol4_step(
    state: &ControllerState,
    zetabar: &[f64],
    zetacheck: &[f64],
    z: &[f64],
    spec: &ProtocolSpec,
    agent: usize,
) -> Result<StepOutput, ProtocolError> {
    spec.expect(ProtocolKind::RegulatedSync)?;
    compensated_step(state, zetabar, zetacheck, z, spec, agent)
}
