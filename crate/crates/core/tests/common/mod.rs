#![allow(dead_code)]

use syncnet_core::linalg::{poly, Matrix};
use syncnet_core::lti::LtiSystem;
use syncnet_core::netgraph::{RootSet, WeightedDigraph};
use syncnet_core::protocols::ProtocolSpec;
use syncnet_core::sim::SimConfig;
use syncnet_core::synthesis::{
    augment_exosystem, design_precompensator, Compensator, ExosystemSpec, GainSet, TargetModel,
};

pub const PRINTED_K: [f64; 3] = [0.0695, 1.7625, 1.2051];
pub const PRINTED_H: [f64; 3] = [1.4327, 0.4143, 0.6993];

pub fn example_agent() -> LtiSystem {
    LtiSystem::new(
        Matrix::from_row_slice(3, 3, &[0.5, 1.0, 1.0, 0.0, 0.866, -0.5, 0.0, 0.5, 0.866]),
        Matrix::column(&[0.0, 0.0, 1.0]),
        Matrix::row(&[1.0, 0.0, 0.0]),
    )
    .unwrap()
}

/// 1-based edge list.
pub fn graph(n: usize, edges: &[(usize, usize, f64)]) -> WeightedDigraph {
    let e: Vec<_> = edges.iter().map(|&(f, t, w)| (f - 1, t - 1, w)).collect();
    WeightedDigraph::from_edges(n, &e).unwrap()
}

pub fn case1() -> WeightedDigraph {
    graph(4, &[(1, 2, 1.0), (1, 3, 1.0), (2, 4, 1.0), (3, 4, 1.0), (4, 1, 1.0)])
}

pub fn case2() -> WeightedDigraph {
    graph(
        6,
        &[(1, 2, 1.0), (2, 3, 1.5), (3, 4, 1.0), (4, 5, 2.0), (5, 6, 1.0), (6, 1, 1.0), (1, 4, 1.0)],
    )
}

pub fn case3() -> WeightedDigraph {
    graph(3, &[(1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)])
}

pub fn cycle(n: usize) -> WeightedDigraph {
    let e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
    WeightedDigraph::from_edges(n, &e).unwrap()
}

/// Controllable canonical realization of `num(z) / den(z)` (ascending,
/// monic `den`, `deg num < deg den`), measured through `Cm = C`.
pub fn siso_from_tf(num: &[f64], den: &[f64]) -> LtiSystem {
    let n = den.len() - 1;
    let a = poly::companion(den);
    let mut b = Matrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let mut c = Matrix::zeros(1, n);
    for (j, &v) in num.iter().enumerate() {
        c[(0, j)] = v;
    }
    LtiSystem::with_measurement(a, b, c.clone(), Some(c)).unwrap()
}

/// Three heterogeneous SISO agents with relative degrees 1, 2, 1 and stable
/// zeros.
pub fn hetero_agents() -> Vec<LtiSystem> {
    let a1 = LtiSystem::with_measurement(
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.5]),
        Matrix::column(&[0.0, 1.0]),
        Matrix::row(&[-0.2, 1.0]),
        Some(Matrix::row(&[-0.2, 1.0])),
    )
    .unwrap();
    // (z + 0.3) / ((z - 1.1)(z - 0.4)(z + 0.2))
    let den = poly::mul(&poly::mul(&[-1.1, 1.0], &[-0.4, 1.0]), &[0.2, 1.0]);
    let a2 = siso_from_tf(&[0.3, 1.0], &den);
    let a3 = LtiSystem::with_measurement(
        Matrix::scalar(0.9),
        Matrix::scalar(2.0),
        Matrix::scalar(1.0),
        Some(Matrix::scalar(1.0)),
    )
    .unwrap();
    vec![a1, a2, a3]
}

pub fn oscillator() -> (Matrix, Matrix) {
    (Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]), Matrix::row(&[1.0, 0.0]))
}

/// Target with characteristic polynomial `z (z² + 1)`.
pub fn oscillating_target() -> TargetModel {
    TargetModel::from_char_poly(&[0.0, 1.0, 0.0, 1.0]).unwrap()
}

pub fn config(graph: WeightedDigraph, agents: Vec<LtiSystem>, protocol: ProtocolSpec, horizon: usize, seed: u64) -> SimConfig {
    SimConfig {
        graph,
        rootset: None,
        agents,
        protocol,
        horizon,
        x0: None,
        exo_x0: None,
        seed,
        allow_unverified: false,
    }
}

pub fn full_state_config(graph: WeightedDigraph, horizon: usize, seed: u64) -> SimConfig {
    let sys = example_agent();
    let gains = GainSet::design(&sys, false).unwrap();
    let spec = ProtocolSpec::full_state(&sys, &gains).unwrap();
    let n = graph.n();
    config(graph, vec![sys; n], spec, horizon, seed)
}

pub fn partial_state_config(graph: WeightedDigraph, horizon: usize, seed: u64) -> SimConfig {
    let sys = example_agent();
    let gains = GainSet::design(&sys, true).unwrap();
    let spec = ProtocolSpec::partial_state(&sys, &gains).unwrap();
    let n = graph.n();
    config(graph, vec![sys; n], spec, horizon, seed)
}

pub fn output_sync_config(horizon: usize, seed: u64) -> SimConfig {
    let target = oscillating_target();
    let agents = hetero_agents();
    let comps = agents.iter().map(|a| design_precompensator(a, &target).unwrap()).collect();
    let gains = GainSet::design(target.system(), true).unwrap();
    let spec = ProtocolSpec::output_sync(&target, &gains, comps).unwrap();
    config(case3(), agents, spec, horizon, seed)
}

pub fn exosystem() -> ExosystemSpec {
    let (ar, cr) = oscillator();
    augment_exosystem(&cr, &ar, 3).unwrap()
}

pub fn regulated_config(horizon: usize, seed: u64) -> SimConfig {
    let exo = exosystem();
    let agents = hetero_agents();
    let comps = agents.iter().map(|a| design_precompensator(a, &exo.augmented).unwrap()).collect();
    let gains = GainSet::design(exo.augmented.system(), true).unwrap();
    let spec = ProtocolSpec::regulated_sync(&exo, &gains, comps).unwrap();
    let mut cfg = config(case3(), agents, spec, horizon, seed);
    cfg.rootset = Some(RootSet::new(&[0], 3).unwrap());
    cfg
}

/// Outputs of agent∘compensator driven by `v`, from agent state `x0` and zero
/// compensator state.
pub fn cascade_outputs(agent: &LtiSystem, comp: &Compensator, x0: &[f64], v: &[f64]) -> Vec<f64> {
    let cm = agent.cm().unwrap();
    let mut x = x0.to_vec();
    let mut xi = vec![0.0; comp.state_dim()];
    let mut y = Vec::with_capacity(v.len());
    for &vk in v {
        let z = cm.mul_vec(&x);
        let u: Vec<f64> = comp.ch.mul_vec(&xi).iter().zip(comp.dh.mul_vec(&[vk])).map(|(a, b)| a + b).collect();
        y.push(agent.output(&x)[0]);
        x = agent.step(&x, &u);
        let next: Vec<f64> = comp
            .ah
            .mul_vec(&xi)
            .iter()
            .zip(comp.bh.mul_vec(&z))
            .zip(comp.eh.mul_vec(&[vk]))
            .map(|((a, b), c)| a + b + c)
            .collect();
        xi = next;
    }
    y
}

/// Target outputs driven by `v + d` from `x̄(0)`.
pub fn target_outputs(target: &TargetModel, xbar0: &[f64], v: &[f64], d: &[f64]) -> Vec<f64> {
    let sys = target.system();
    let mut x = xbar0.to_vec();
    let mut y = Vec::with_capacity(v.len());
    for (vk, dk) in v.iter().zip(d) {
        y.push(sys.output(&x)[0]);
        x = sys.step(&x, &[vk + dk]);
    }
    y
}

/// `d(k) = Cs As^k ω(0)` for `len` steps.
pub fn residual_disturbance(comp: &Compensator, omega0: &[f64], len: usize) -> Vec<f64> {
    let mut w = omega0.to_vec();
    (0..len)
        .map(|_| {
            let d = if w.is_empty() { 0.0 } else { comp.c_s.mul_vec(&w)[0] };
            w = comp.a_s.mul_vec(&w);
            d
        })
        .collect()
}
