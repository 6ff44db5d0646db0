//! Synchronous-round closed-loop simulation.
//!
//! Each round: agents emit `y` and `z`, controllers emit `ρ = η`, the
//! network signals are formed, then every controller and agent steps.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::linalg::{norm_inf, vec_sub, Matrix};
use crate::lti::LtiSystem;
use crate::netgraph::{
    has_spanning_tree, rooted_networks, row_stochastic, GraphError, RootSet, RootedNetworkMatrices, WeightedDigraph,
};
use crate::protocols::{
    protocol1_step, protocol2_step, protocol3_step, protocol4_step, ControllerState, ProtocolError, ProtocolKind,
    ProtocolSpec, StepOutput,
};

/// States beyond this magnitude abort the run.
pub const DIVERGENCE_BOUND: f64 = 1e12;
/// Allowed disagreement between the two evaluations of a network signal,
/// relative to the signal scale.
pub const SIGNAL_CROSSCHECK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("structural precondition failed: {0}")]
    Structural(Structural),
    #[error("state exceeded {bound:e} at step {step} (agent {agent})")]
    Diverged { step: usize, agent: usize, bound: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what}: length {got}, expected {expected}")]
    Dimension { what: &'static str, got: usize, expected: usize },
    #[error("network signal evaluations disagree by {0:e}")]
    SignalMismatch(f64),
    #[error("empty trace")]
    EmptyTrace,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Structural {
    #[error("graph has no directed spanning tree")]
    NoSpanningTree,
    #[error("some node is not reachable from the root set")]
    NotRooted,
    #[error("regulated synchronization needs a root set")]
    MissingRootSet,
}

/// Reproducible generator of initial conditions (ChaCha8 stream).
#[derive(Debug, Clone)]
pub struct InitialSampler(ChaCha8Rng);

impl InitialSampler {
    pub fn new(seed: u64) -> Self {
        InitialSampler(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[-1, 1)` from the top 53 bits of one draw.
    pub fn uniform(&mut self) -> f64 {
        let unit = (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        2.0 * unit - 1.0
    }

    pub fn vector(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.uniform()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub graph: WeightedDigraph,
    pub rootset: Option<RootSet>,
    pub agents: Vec<LtiSystem>,
    pub protocol: ProtocolSpec,
    pub horizon: usize,
    /// Agent initial states; drawn from `seed` when absent.
    pub x0: Option<Vec<Vec<f64>>>,
    /// Exosystem initial state; drawn after the agents' when absent.
    pub exo_x0: Option<Vec<f64>>,
    pub seed: u64,
    /// Simulate even when the structural precondition fails.
    pub allow_unverified: bool,
}

/// Network data a run needs.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Plain(Matrix),
    Rooted(RootedNetworkMatrices),
}

impl SimConfig {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Checks dimensions and protocol/agent consistency.
    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.graph.n();
        if self.agents.len() != n {
            return Err(SimError::Dimension { what: "agents", got: self.agents.len(), expected: n });
        }
        let spec = &self.protocol;
        let design = spec.design();
        match spec.kind() {
            ProtocolKind::FullState | ProtocolKind::PartialState => {
                for agent in &self.agents {
                    if agent.a() != design.a() || agent.b() != design.b() || agent.c() != design.c() {
                        return Err(SimError::Config("homogeneous protocols need identical agents".into()));
                    }
                }
            }
            ProtocolKind::OutputSync | ProtocolKind::RegulatedSync => {
                if spec.compensators().len() != n {
                    return Err(SimError::Dimension {
                        what: "compensators",
                        got: spec.compensators().len(),
                        expected: n,
                    });
                }
                for (agent, comp) in self.agents.iter().zip(spec.compensators()) {
                    let cm = agent.cm().ok_or_else(|| SimError::Config("agent lacks Cm".into()))?;
                    if comp.bh.ncols() != cm.nrows() || comp.ch.nrows() != agent.m() {
                        return Err(SimError::Config("compensator does not fit its agent".into()));
                    }
                    if comp.target_map.ncols() != agent.n() + comp.delays {
                        return Err(SimError::Config("compensator does not fit its agent".into()));
                    }
                    if agent.p() != design.p() {
                        return Err(SimError::Config("agent output dimension differs from the design".into()));
                    }
                }
            }
        }
        match (spec.kind(), &self.rootset) {
            (ProtocolKind::RegulatedSync, None) => return Err(SimError::Structural(Structural::MissingRootSet)),
            (ProtocolKind::RegulatedSync, Some(_)) => {}
            (_, Some(_)) => return Err(SimError::Config("root set given for an unregulated protocol".into())),
            _ => {}
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(SimError::Dimension { what: "x0", got: x0.len(), expected: n });
            }
            for (x, agent) in x0.iter().zip(&self.agents) {
                if x.len() != agent.n() {
                    return Err(SimError::Dimension { what: "x0 entry", got: x.len(), expected: agent.n() });
                }
            }
        }
        if let (Some(xr), Some(exo)) = (&self.exo_x0, spec.exosystem()) {
            if xr.len() != exo.ar.nrows() {
                return Err(SimError::Dimension { what: "exo_x0", got: xr.len(), expected: exo.ar.nrows() });
            }
        }
        Ok(())
    }

    /// Network matrices, checked against the protocol's structural condition.
    pub fn network(&self) -> Result<Network, SimError> {
        match self.protocol.kind() {
            ProtocolKind::RegulatedSync => {
                let rootset = self.rootset.as_ref().ok_or(SimError::Structural(Structural::MissingRootSet))?;
                let rooted = rooted_networks(&self.graph, rootset)?;
                if !rooted.rooted && !self.allow_unverified {
                    return Err(SimError::Structural(Structural::NotRooted));
                }
                Ok(Network::Rooted(rooted))
            }
            _ => {
                if !has_spanning_tree(&self.graph) && !self.allow_unverified {
                    return Err(SimError::Structural(Structural::NoSpanningTree));
                }
                Ok(Network::Plain(row_stochastic(&self.graph).d))
            }
        }
    }

    /// Agent and exosystem initial states, explicit or drawn from `seed`.
    pub fn initial_states(&self) -> (Vec<Vec<f64>>, Option<Vec<f64>>) {
        let mut sampler = InitialSampler::new(self.seed);
        let x0 = match &self.x0 {
            Some(x0) => x0.clone(),
            None => self.agents.iter().map(|a| sampler.vector(a.n())).collect(),
        };
        let xr = self.protocol.exosystem().map(|exo| match &self.exo_x0 {
            Some(xr) => xr.clone(),
            None => sampler.vector(exo.ar.nrows()),
        });
        (x0, xr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    /// `ζ` (or `ζ̄`).
    pub zeta: Vec<f64>,
    /// `ζ̂` (or `ζ̌`).
    pub zetahat: Vec<f64>,
    pub eta: Vec<f64>,
    pub xhat: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub agents: Vec<AgentRecord>,
    pub xr: Option<Vec<f64>>,
    pub yr: Option<Vec<f64>>,
    pub disagreement: f64,
    pub regulation_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub kind: ProtocolKind,
    pub steps: Vec<StepRecord>,
}

impl Trace {
    pub fn disagreement(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.disagreement).collect()
    }

    pub fn regulation_error(&self) -> Option<Vec<f64>> {
        self.steps.iter().map(|s| s.regulation_error).collect()
    }

    /// The metric the protocol's theorem drives to zero.
    pub fn primary_metric(&self) -> Vec<f64> {
        match self.kind {
            ProtocolKind::RegulatedSync => self.regulation_error().unwrap_or_default(),
            _ => self.disagreement(),
        }
    }
}

/// `ζ_i = Σ_j d_ij (v_i − v_j)`, cross-checked against `((I − D) ⊗ I) v`.
pub fn network_signals(values: &[Vec<f64>], d: &Matrix) -> Result<Vec<Vec<f64>>, SimError> {
    let n = values.len();
    if d.shape() != (n, n) {
        return Err(SimError::Dimension { what: "D", got: d.nrows(), expected: n });
    }
    let dim = values.first().map_or(0, Vec::len);
    if let Some(v) = values.iter().find(|v| v.len() != dim) {
        return Err(SimError::Dimension { what: "signal value", got: v.len(), expected: dim });
    }
    let pairwise: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut z = vec![0.0; dim];
            for j in 0..n {
                let w = d[(i, j)];
                if w != 0.0 && j != i {
                    for (zc, (a, b)) in z.iter_mut().zip(values[i].iter().zip(&values[j])) {
                        *zc += w * (a - b);
                    }
                }
            }
            z
        })
        .collect();
    let stacked = stacked_difference(values, d, None);
    crosscheck(&pairwise, &stacked, values)?;
    Ok(pairwise)
}

/// `v_i − Σ_j m_ij v_j` (with `v_j − r` in place of `v_j` when a reference is
/// given).
fn stacked_difference(values: &[Vec<f64>], m: &Matrix, reference: Option<&[f64]>) -> Vec<Vec<f64>> {
    let n = values.len();
    let shifted: Vec<Vec<f64>> = match reference {
        Some(r) => values.iter().map(|v| vec_sub(v, r)).collect(),
        None => values.to_vec(),
    };
    (0..n)
        .map(|i| {
            let mut z = shifted[i].clone();
            for j in 0..n {
                let w = m[(i, j)];
                for (zc, x) in z.iter_mut().zip(&shifted[j]) {
                    *zc -= w * x;
                }
            }
            z
        })
        .collect()
}

fn crosscheck(a: &[Vec<f64>], b: &[Vec<f64>], scale_from: &[Vec<f64>]) -> Result<(), SimError> {
    let scale = scale_from.iter().map(|v| norm_inf(v)).fold(1.0, f64::max);
    let dev = a.iter().zip(b).map(|(x, y)| norm_inf(&vec_sub(x, y))).fold(0.0, f64::max);
    if dev > SIGNAL_CROSSCHECK_TOL * scale * 8.0 {
        return Err(SimError::SignalMismatch(dev));
    }
    Ok(())
}

/// `ζ̄_i = (y_i − y_r) − Σ_j d̄_ij (y_j − y_r)` and `ζ̌_i = ρ_i − Σ_j d̄_ij ρ_j`,
/// both cross-checked against `(2 + d_in(i))⁻¹ Σ_j ℓ̄_ij (·)_j`.
pub fn regulated_signals(
    y: &[Vec<f64>],
    yr: &[f64],
    rho: &[Vec<f64>],
    rooted: &RootedNetworkMatrices,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), SimError> {
    let n = y.len();
    if rooted.d_bar.nrows() != n || rho.len() != n {
        return Err(SimError::Dimension { what: "rooted network", got: rooted.d_bar.nrows(), expected: n });
    }
    if let Some(v) = y.iter().find(|v| v.len() != yr.len()) {
        return Err(SimError::Dimension { what: "output", got: v.len(), expected: yr.len() });
    }
    let zetabar = stacked_difference(y, &rooted.d_bar, Some(yr));
    let zetacheck = stacked_difference(rho, &rooted.d_bar, None);

    let lbar = &rooted.l_bar;
    let laplacian_form = |values: &[Vec<f64>], reference: Option<&[f64]>| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let d_in: f64 = (0..n).filter(|&j| j != i).map(|j| -lbar[(i, j)]).sum();
                let scale = 1.0 / (2.0 + d_in);
                let dim = values[i].len();
                let mut z = vec![0.0; dim];
                for j in 0..n {
                    for (c, zc) in z.iter_mut().enumerate() {
                        let v = values[j][c] - reference.map_or(0.0, |r| r[c]);
                        *zc += scale * lbar[(i, j)] * v;
                    }
                }
                z
            })
            .collect()
    };
    crosscheck(&zetabar, &laplacian_form(y, Some(yr)), y)?;
    crosscheck(&zetacheck, &laplacian_form(rho, None), rho)?;
    Ok((zetabar, zetacheck))
}

fn max_pairwise(values: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            worst = worst.max(norm_inf(&vec_sub(&values[i], &values[j])));
        }
    }
    worst
}

fn beyond(v: &[f64]) -> bool {
    v.iter().any(|x| !(x.abs() <= DIVERGENCE_BOUND))
}

pub fn run(config: &SimConfig) -> Result<Trace, SimError> {
    config.validate()?;
    let network = config.network()?;
    let spec = &config.protocol;
    let kind = spec.kind();
    let n = config.n_agents();
    let (mut x, mut xr) = config.initial_states();
    let mut ctrl: Vec<ControllerState> = (0..n).map(|i| spec.initial_state(i)).collect::<Result<_, _>>()?;
    let exo = spec.exosystem();
    let mut steps = Vec::with_capacity(config.horizon + 1);

    for k in 0..=config.horizon {
        let y: Vec<Vec<f64>> = config.agents.iter().zip(&x).map(|(a, xi)| a.output(xi)).collect();
        let rho: Vec<Vec<f64>> = ctrl.iter().map(|c| c.eta.clone()).collect();
        let yr = match (exo, &xr) {
            (Some(e), Some(xr)) => Some(e.output(xr)),
            _ => None,
        };
        let (zeta, zetahat) = match &network {
            Network::Plain(d) => {
                let source = if kind == ProtocolKind::FullState { &x } else { &y };
                (network_signals(source, d)?, network_signals(&rho, d)?)
            }
            Network::Rooted(rooted) => {
                let yr = yr.as_deref().ok_or_else(|| SimError::Config("missing exosystem".into()))?;
                regulated_signals(&y, yr, &rho, rooted)?
            }
        };
        let outputs: Vec<StepOutput> = (0..n)
            .map(|i| {
                let z = config.agents[i].measurement(&x[i]).unwrap_or_default();
                match kind {
                    ProtocolKind::FullState => protocol1_step(&ctrl[i], &zeta[i], &zetahat[i], spec),
                    ProtocolKind::PartialState => protocol2_step(&ctrl[i], &zeta[i], &zetahat[i], spec),
                    ProtocolKind::OutputSync => protocol3_step(&ctrl[i], &zeta[i], &zetahat[i], &z, spec, i),
                    ProtocolKind::RegulatedSync => protocol4_step(&ctrl[i], &zeta[i], &zetahat[i], &z, spec, i),
                }
            })
            .collect::<Result<_, _>>()?;

        let disagreement = match kind {
            ProtocolKind::FullState | ProtocolKind::PartialState => max_pairwise(&x),
            _ => max_pairwise(&y),
        };
        let regulation_error = yr
            .as_ref()
            .map(|yr| y.iter().map(|yi| norm_inf(&vec_sub(yi, yr))).fold(0.0, f64::max));
        let agents = (0..n)
            .map(|i| AgentRecord {
                x: x[i].clone(),
                y: y[i].clone(),
                u: outputs[i].u.clone(),
                zeta: zeta[i].clone(),
                zetahat: zetahat[i].clone(),
                eta: ctrl[i].eta.clone(),
                xhat: ctrl[i].xhat.clone().unwrap_or_default(),
                xi: ctrl[i].xi.clone().unwrap_or_default(),
            })
            .collect();
        steps.push(StepRecord { k, agents, xr: xr.clone(), yr, disagreement, regulation_error });

        if k == config.horizon {
            break;
        }
        for (i, out) in outputs.into_iter().enumerate() {
            x[i] = config.agents[i].step(&x[i], &out.u);
            ctrl[i] = out.state;
            let c = &ctrl[i];
            if beyond(&x[i])
                || beyond(&c.eta)
                || c.xhat.as_deref().is_some_and(beyond)
                || c.xi.as_deref().is_some_and(beyond)
            {
                return Err(SimError::Diverged { step: k + 1, agent: i, bound: DIVERGENCE_BOUND });
            }
        }
        if let (Some(e), Some(v)) = (exo, xr.as_mut()) {
            *v = e.ar.mul_vec(v);
        }
    }
    Ok(Trace { kind, steps })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub initial: f64,
    pub final_value: f64,
    /// Least-squares slope of `ln(metric)` per step; exactly `0.0` when fewer
    /// than two samples are above the round-off floor.
    pub decay_rate: f64,
    /// First step whose metric is below the tolerance.
    pub settled_step: Option<usize>,
}

/// Samples below this fraction of the series maximum are round-off.
pub const METRIC_FLOOR_REL: f64 = 1e-12;

/// Summary statistics of a nonnegative metric series.
///
/// The decay rate is fitted over the second half of the live part of the
/// series, which ends at the last sample above the round-off floor.
pub fn metrics(series: &[f64], tol: f64) -> Result<MetricSummary, SimError> {
    let (&initial, &final_value) = match (series.first(), series.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(SimError::EmptyTrace),
    };
    let peak = series.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let floor = METRIC_FLOOR_REL * peak;
    let live_end = series.iter().rposition(|&v| v > floor && v.is_finite()).map_or(0, |i| i + 1);
    let start = live_end / 2;
    let samples: Vec<(f64, f64)> = series[start..live_end]
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > floor && v.is_finite())
        .map(|(i, &v)| ((start + i) as f64, libm::log(v)))
        .collect();
    let decay_rate = least_squares_slope(&samples).unwrap_or(0.0);
    let settled_step = series.iter().position(|&v| v < tol);
    Ok(MetricSummary { initial, final_value, decay_rate, settled_step })
}

/// Slope of the least-squares line through `(t, v)` pairs; `None` for fewer
/// than two distinct abscissae.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let m = points.len() as f64;
    let tbar = points.iter().map(|p| p.0).sum::<f64>() / m;
    let vbar = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - tbar) * (p.0 - tbar)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - tbar) * (p.1 - vbar)).sum();
    Some(sxy / sxx)
}

/// Log-linear slope of the tail envelope `max_{j ≥ k} |e(j)|` over
/// `[start, last sample above floor]`. Oscillating modes make the raw series
/// dip well below its envelope; the envelope decays at the true rate.
pub fn envelope_decay_rate(series: &[f64], start: usize, floor: f64) -> Option<f64> {
    let tail = series.get(start..)?;
    let live_end = tail.iter().rposition(|&v| v.abs() > floor && v.is_finite())? + 1;
    let mut envelope = vec![0.0; live_end];
    let mut running = 0.0f64;
    for i in (0..live_end).rev() {
        running = running.max(tail[i].abs());
        envelope[i] = running;
    }
    let samples: Vec<(f64, f64)> = envelope
        .iter()
        .enumerate()
        .map(|(i, &v)| ((start + i) as f64, libm::log(v)))
        .collect();
    least_squares_slope(&samples)
}

pub fn trace_metrics(trace: &Trace, tol: f64) -> Result<MetricSummary, SimError> {
    metrics(&trace.primary_metric(), tol)
}
