mod common;

use common::*;
use proptest::prelude::*;
use syncnet_core::linalg::{norm_inf, vec_sub, Matrix};
use syncnet_core::lti::LtiSystem;
use syncnet_core::netgraph::{reduced_matrix, row_stochastic, RootSet, WeightedDigraph};
use syncnet_core::protocols::{
    protocol1_step, protocol2_step, protocol3_step, protocol4_step, ControllerState, ProtocolError, ProtocolKind,
    ProtocolSpec,
};
use syncnet_core::sim::{run, InitialSampler};
use syncnet_core::synthesis::{default_target, design_precompensator, GainSet};

fn scaled(s: &ControllerState, f: f64) -> ControllerState {
    let sc = |v: &Vec<f64>| v.iter().map(|x| x * f).collect::<Vec<_>>();
    ControllerState { eta: sc(&s.eta), xhat: s.xhat.as_ref().map(sc), xi: s.xi.as_ref().map(sc) }
}

fn random_state(spec: &ProtocolSpec, agent: usize, rng: &mut InitialSampler) -> ControllerState {
    let z = spec.initial_state(agent).unwrap();
    ControllerState {
        eta: rng.vector(z.eta.len()),
        xhat: z.xhat.map(|v| rng.vector(v.len())),
        xi: z.xi.map(|v| rng.vector(v.len())),
    }
}

#[test]
fn partial_state_substitution() {
    let sys = example_agent();
    let gains = GainSet::design(&sys, true).unwrap();
    let spec = ProtocolSpec::partial_state(&sys, &gains).unwrap();
    let st = ControllerState { eta: vec![1.0, 0.0, 0.0], xhat: Some(vec![0.0; 3]), xi: None };
    let out = protocol2_step(&st, &[0.0], &[0.0; 3], &spec).unwrap();
    let k0 = gains.k()[(0, 0)];
    assert_eq!(out.u, vec![-k0]);
    let expected = [0.5, 0.0, -k0];
    for (a, b) in out.state.eta.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(out.state.xhat, Some(vec![0.0; 3]));
    assert_eq!(out.rho, vec![1.0, 0.0, 0.0]);
}

#[test]
fn zero_gain_never_acts() {
    let sys = LtiSystem::new(Matrix::scalar(0.5), Matrix::scalar(1.0), Matrix::scalar(1.0)).unwrap();
    let gains = GainSet::from_matrices(&sys, Matrix::scalar(0.0), None).unwrap();
    let spec = ProtocolSpec::full_state(&sys, &gains).unwrap();
    let mut rng = InitialSampler::new(3);
    let mut st = ControllerState { eta: vec![0.7], xhat: None, xi: None };
    for _ in 0..30 {
        let out = protocol1_step(&st, &rng.vector(1), &rng.vector(1), &spec).unwrap();
        assert_eq!(out.u, vec![0.0]);
        st = out.state;
    }
}

#[test]
fn zero_in_zero_out() {
    let cfgs = [output_sync_config(1, 0), regulated_config(1, 0)];
    for cfg in &cfgs {
        let spec = &cfg.protocol;
        for (i, agent) in cfg.agents.iter().enumerate() {
            let st = spec.initial_state(i).unwrap();
            let n = spec.design().n();
            let z = vec![0.0; agent.cm().unwrap().nrows()];
            let out = match spec.kind() {
                ProtocolKind::OutputSync => protocol3_step(&st, &[0.0], &vec![0.0; n], &z, spec, i),
                _ => protocol4_step(&st, &[0.0], &vec![0.0; n], &z, spec, i),
            }
            .unwrap();
            assert_eq!(out.state, st);
            assert!(out.u.iter().all(|&u| u == 0.0));
        }
    }
}

#[test]
fn identity_compensator_matches_partial_state() {
    let target = default_target(3).unwrap();
    let s = target.system();
    let agent =
        LtiSystem::with_measurement(s.a().clone(), s.b().clone(), s.c().clone(), Some(Matrix::identity(3))).unwrap();
    let comp = design_precompensator(&agent, &target).unwrap();
    let gains = GainSet::design(s, true).unwrap();
    let p3 = ProtocolSpec::output_sync(&target, &gains, vec![comp]).unwrap();
    let p2 = ProtocolSpec::partial_state(s, &gains).unwrap();
    let mut rng = InitialSampler::new(17);
    let mut a = p3.initial_state(0).unwrap();
    let mut b = p2.initial_state(0).unwrap();
    a.eta = rng.vector(3);
    b.eta = a.eta.clone();
    for _ in 0..40 {
        let zeta = rng.vector(1);
        let zetahat = rng.vector(3);
        let z = rng.vector(3);
        let oa = protocol3_step(&a, &zeta, &zetahat, &z, &p3, 0).unwrap();
        let ob = protocol2_step(&b, &zeta, &zetahat, &p2).unwrap();
        assert_eq!(oa.u, ob.u);
        assert_eq!(oa.rho, ob.rho);
        assert_eq!(oa.state.eta, ob.state.eta);
        assert_eq!(oa.state.xhat, ob.state.xhat);
        a = oa.state;
        b = ob.state;
    }
}

#[test]
fn step_errors() {
    let cfg = full_state_config(case1(), 1, 0);
    let spec = &cfg.protocol;
    let st = spec.initial_state(0).unwrap();
    assert!(matches!(
        protocol1_step(&st, &[0.0; 2], &[0.0; 3], spec),
        Err(ProtocolError::Dimension { what: "zeta", got: 2, expected: 3 })
    ));
    assert!(matches!(
        protocol2_step(&st, &[0.0], &[0.0; 3], spec),
        Err(ProtocolError::WrongKind { expected: ProtocolKind::PartialState, got: ProtocolKind::FullState })
    ));
    let p3 = output_sync_config(1, 0).protocol;
    assert!(matches!(p3.initial_state(7), Err(ProtocolError::MissingCompensator(7))));
    let mut st3 = p3.initial_state(0).unwrap();
    st3.xi = None;
    assert!(matches!(
        protocol3_step(&st3, &[0.0], &[0.0; 3], &[0.0], &p3, 0),
        Err(ProtocolError::MissingState("xi"))
    ));
}

#[test]
fn full_state_error_follows_kronecker_dynamics() {
    for g in [case1(), case2(), case3(), cycle(5)] {
        let cfg = full_state_config(g.clone(), 50, 9);
        let trace = run(&cfg).unwrap();
        let a = example_agent().a().clone();
        let dt = reduced_matrix(&row_stochastic(&g).d).unwrap();
        let m = dt.kron(&a);
        let last = g.n() - 1;
        let e_of = |k: usize| -> Vec<f64> {
            let ag = &trace.steps[k].agents;
            (0..last)
                .flat_map(|i| {
                    let xb = vec_sub(&ag[i].x, &ag[last].x);
                    let eb = vec_sub(&ag[i].eta, &ag[last].eta);
                    vec_sub(&xb, &eb)
                })
                .collect()
        };
        let mut oracle = e_of(0);
        for k in 0..=50 {
            let dev = norm_inf(&vec_sub(&e_of(k), &oracle));
            assert!(dev < 1e-9, "k = {k}: {dev:e}");
            oracle = m.mul_vec(&oracle);
        }
    }
}

#[test]
fn partial_state_observer_error_is_decoupled() {
    for g in [case1(), case2(), case3()] {
        let cfg = partial_state_config(g.clone(), 50, 21);
        let trace = run(&cfg).unwrap();
        let sys = example_agent();
        let h = cfg.protocol.gains().h().unwrap().clone();
        let a_hc = sys.a() - &h.matmul(sys.c());
        let dt = reduced_matrix(&row_stochastic(&g).d).unwrap();
        let last = g.n() - 1;
        let m = Matrix::identity(last).kron(&a_hc);
        let e_of = |k: usize| -> Vec<f64> {
            let ag = &trace.steps[k].agents;
            (0..last)
                .flat_map(|i| {
                    let mut v = vec_sub(&ag[last].xhat, &ag[i].xhat);
                    for j in 0..last {
                        let c = if i == j { 1.0 } else { 0.0 } - dt[(i, j)];
                        let xb = vec_sub(&ag[j].x, &ag[last].x);
                        for (vi, xi) in v.iter_mut().zip(xb) {
                            *vi += c * xi;
                        }
                    }
                    v
                })
                .collect()
        };
        let mut oracle = e_of(0);
        for k in 0..=50 {
            let dev = norm_inf(&vec_sub(&e_of(k), &oracle));
            assert!(dev < 1e-9, "k = {k}: {dev:e}");
            oracle = m.mul_vec(&oracle);
        }
    }
}

#[test]
fn single_regulated_agent_tracks() {
    let mut cfg = regulated_config(300, 5);
    cfg.graph = WeightedDigraph::from_edges(1, &[]).unwrap();
    cfg.rootset = Some(RootSet::new(&[0], 1).unwrap());
    let exo = cfg.protocol.exosystem().unwrap().clone();
    let agent = cfg.agents[1].clone();
    let target = exo.augmented.clone();
    let comp = design_precompensator(&agent, &target).unwrap();
    cfg.protocol = ProtocolSpec::regulated_sync(&exo, cfg.protocol.gains(), vec![comp]).unwrap();
    cfg.agents = vec![agent];
    let trace = run(&cfg).unwrap();
    let err = trace.regulation_error().unwrap();
    assert!(err[0] > 1e-3);
    assert!(err[300] < 1e-6 * err[0], "{:e} -> {:e}", err[0], err[300]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compensated_steps_are_linear(seed in any::<u64>(), f in -3.0f64..3.0, regulated in any::<bool>()) {
        let cfg = if regulated { regulated_config(1, 0) } else { output_sync_config(1, 0) };
        let spec = &cfg.protocol;
        let mut rng = InitialSampler::new(seed);
        for (i, agent) in cfg.agents.iter().enumerate() {
            let st = random_state(spec, i, &mut rng);
            let n = spec.design().n();
            let zeta = rng.vector(1);
            let zetahat = rng.vector(n);
            let z = rng.vector(agent.cm().unwrap().nrows());
            let sc = |v: &[f64]| v.iter().map(|x| x * f).collect::<Vec<_>>();
            let step = |s: &ControllerState, a: &[f64], b: &[f64], c: &[f64]| {
                if regulated {
                    protocol4_step(s, a, b, c, spec, i)
                } else {
                    protocol3_step(s, a, b, c, spec, i)
                }
                .unwrap()
            };
            let base = step(&st, &zeta, &zetahat, &z);
            let twice = step(&scaled(&st, f), &sc(&zeta), &sc(&zetahat), &sc(&z));
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x * f - y).abs() <= 1e-12 * (1.0 + y.abs()));
            prop_assert!(close(&base.u, &twice.u));
            prop_assert!(close(&base.state.eta, &twice.state.eta));
            prop_assert!(close(base.state.xhat.as_ref().unwrap(), twice.state.xhat.as_ref().unwrap()));
            prop_assert!(close(base.state.xi.as_ref().unwrap(), twice.state.xi.as_ref().unwrap()));
            // Pure state: u ignores the signals.
            let quiet = step(&scaled(&st, f), &vec![0.0; 1], &vec![0.0; n], &vec![0.0; z.len()]);
            prop_assert!(close(&base.u, &quiet.u));
        }
    }

    #[test]
    fn steps_are_deterministic(seed in any::<u64>()) {
        let cfg = partial_state_config(case1(), 1, 0);
        let spec = &cfg.protocol;
        let mut rng = InitialSampler::new(seed);
        let st = random_state(spec, 0, &mut rng);
        let zeta = rng.vector(1);
        let zetahat = rng.vector(3);
        let a = protocol2_step(&st, &zeta, &zetahat, spec).unwrap();
        let b = protocol2_step(&st, &zeta, &zetahat, spec).unwrap();
        prop_assert_eq!(a, b);
    }
}
