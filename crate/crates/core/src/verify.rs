//! Closed-loop assembly and proof-coordinate certificates.
//!
//! The stacked state is `s = (x_1, ξ_1, x̂_1, η_1, …, x_N, ξ_N, x̂_N, η_N, x_r)`
//! with empty blocks omitted per protocol. The closed-loop matrix is built
//! from block formulas independently of the step functions, then conjugated
//! into the proofs' coordinates.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{spectral_radius, LinalgError, Lu, Matrix};
use crate::netgraph::{has_spanning_tree, reduced_matrix, rooted_networks, row_stochastic, UNIT_DISK_TOL};
use crate::protocols::ProtocolKind;
use crate::sim::{run, SimConfig, SimError, Structural, Trace};

/// Tolerance for vanishing blocks and matching diagonal blocks, relative to
/// `max(1, ‖T‖max)`.
pub const TRIANGULAR_TOL: f64 = 1e-10;
/// Largest admissible gap between simulation and matrix iteration.
pub const ORACLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("refusing to certify: {0}")]
    Refused(Structural),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Offsets of each agent's blocks inside the stacked state.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub agents: Vec<AgentBlocks>,
    pub xr: usize,
    pub xr_dim: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentBlocks {
    pub x: usize,
    pub n: usize,
    pub xi: usize,
    pub n_xi: usize,
    pub xhat: usize,
    pub n_xhat: usize,
    pub eta: usize,
    pub n_eta: usize,
}

impl Layout {
    pub fn stack(&self, trace: &Trace, k: usize) -> Vec<f64> {
        let rec = &trace.steps[k];
        let mut s = vec![0.0; self.dim];
        for (b, a) in self.agents.iter().zip(&rec.agents) {
            s[b.x..b.x + b.n].copy_from_slice(&a.x);
            s[b.xi..b.xi + b.n_xi].copy_from_slice(&a.xi);
            s[b.xhat..b.xhat + b.n_xhat].copy_from_slice(&a.xhat);
            s[b.eta..b.eta + b.n_eta].copy_from_slice(&a.eta);
        }
        if let Some(xr) = &rec.xr {
            s[self.xr..self.xr + self.xr_dim].copy_from_slice(xr);
        }
        s
    }
}

/// A contiguous group of transformed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
    /// Diagonal block the proof predicts, when it predicts one.
    pub expected: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopModel {
    pub kind: ProtocolKind,
    pub m: Matrix,
    pub layout: Layout,
    /// Rows map the stacked state to the proof coordinates.
    pub transform: Matrix,
    /// `S M S⁻¹`.
    pub transformed: Matrix,
    pub groups: Vec<Group>,
    /// First transformed coordinate of the disagreement (or regulation)
    /// dynamics; everything from here on is that subsystem.
    pub disagreement_start: usize,
}

impl ClosedLoopModel {
    pub fn block(&self, name: &str) -> Option<Matrix> {
        let g = self.groups.iter().find(|g| g.name == name)?;
        Some(self.transformed.submatrix(g.start, g.start, g.len, g.len))
    }

    pub fn disagreement_block(&self) -> Matrix {
        let d = self.disagreement_start;
        let len = self.transformed.nrows() - d;
        self.transformed.submatrix(d, d, len, len)
    }

    /// Largest entry below the block diagonal and largest deviation of a
    /// diagonal block from its prediction, both relative to `max(1, ‖T‖max)`.
    pub fn structure_residuals(&self) -> (f64, f64) {
        let t = &self.transformed;
        let scale = t.max_abs().max(1.0);
        let mut lower: f64 = 0.0;
        let mut diag: f64 = 0.0;
        for (gi, row) in self.groups.iter().enumerate() {
            for col in &self.groups[..gi] {
                let blk = t.submatrix(row.start, col.start, row.len, col.len);
                lower = lower.max(blk.max_abs());
            }
            if let Some(expected) = &row.expected {
                let blk = t.submatrix(row.start, row.start, row.len, row.len);
                diag = diag.max(blk.max_abs_diff(expected));
            }
        }
        (lower / scale, diag / scale)
    }

    pub fn is_block_triangular(&self) -> bool {
        let (lower, diag) = self.structure_residuals();
        lower <= TRIANGULAR_TOL && diag <= TRIANGULAR_TOL
    }
}

/// Per-agent closed-loop pieces; homogeneous protocols use an identity
/// feedthrough (`u = v`).
struct AgentPieces {
    a: Matrix,
    b: Matrix,
    /// Output used by the network: `C_i` (or `I` for full-state coupling).
    c: Matrix,
    cm: Matrix,
    ah: Matrix,
    bh: Matrix,
    ch: Matrix,
    dh: Matrix,
    eh: Matrix,
}

enum Coupling {
    /// `I - D`.
    Plain(Matrix),
    /// `I - D̄` and `D̄`.
    Rooted(Matrix, Matrix),
}

pub fn assemble(config: &SimConfig) -> Result<ClosedLoopModel, VerifyError> {
    config.validate()?;
    let spec = &config.protocol;
    let kind = spec.kind();
    let design = spec.design();
    let (nd, md) = (design.n(), design.m());
    let k = spec.gains().k();
    let n_agents = config.n_agents();

    let pieces: Vec<AgentPieces> = config
        .agents
        .iter()
        .enumerate()
        .map(|(i, agent)| match spec.compensator(i) {
            Some(comp) => AgentPieces {
                a: agent.a().clone(),
                b: agent.b().clone(),
                c: agent.c().clone(),
                cm: agent.cm().cloned().unwrap_or_else(|| agent.c().clone()),
                ah: comp.ah.clone(),
                bh: comp.bh.clone(),
                ch: comp.ch.clone(),
                dh: comp.dh.clone(),
                eh: comp.eh.clone(),
            },
            None => AgentPieces {
                a: agent.a().clone(),
                b: agent.b().clone(),
                c: if kind == ProtocolKind::FullState { Matrix::identity(agent.n()) } else { agent.c().clone() },
                cm: Matrix::zeros(0, agent.n()),
                ah: Matrix::zeros(0, 0),
                bh: Matrix::zeros(0, 0),
                ch: Matrix::zeros(agent.m(), 0),
                dh: Matrix::identity(md),
                eh: Matrix::zeros(0, md),
            },
        })
        .collect();

    let has_xhat = kind != ProtocolKind::FullState;
    let mut agents = Vec::with_capacity(n_agents);
    let mut off = 0;
    for p in &pieces {
        let n = p.a.nrows();
        let n_xi = p.ah.nrows();
        let n_xhat = if has_xhat { nd } else { 0 };
        let blocks = AgentBlocks {
            x: off,
            n,
            xi: off + n,
            n_xi,
            xhat: off + n + n_xi,
            n_xhat,
            eta: off + n + n_xi + n_xhat,
            n_eta: nd,
        };
        off = blocks.eta + nd;
        agents.push(blocks);
    }
    let exo = spec.exosystem();
    let xr_dim = exo.map_or(0, |e| e.ar.nrows());
    let layout = Layout { agents, xr: off, xr_dim, dim: off + xr_dim };

    let coupling = match kind {
        ProtocolKind::RegulatedSync => {
            let rootset = config.rootset.as_ref().ok_or(SimError::Structural(Structural::MissingRootSet))?;
            let rooted = rooted_networks(&config.graph, rootset).map_err(SimError::from)?;
            let w = &Matrix::identity(n_agents) - &rooted.d_bar;
            Coupling::Rooted(w, rooted.d_bar)
        }
        _ => Coupling::Plain(&Matrix::identity(n_agents) - &row_stochastic(&config.graph).d),
    };
    let w = match &coupling {
        Coupling::Plain(w) | Coupling::Rooted(w, _) => w,
    };

    let ad = design.a();
    let bd = design.b();
    let cd = design.c();
    let bk = bd.matmul(k);
    let a_bk = ad - &bk;
    let h = spec.gains().h().cloned().unwrap_or_else(|| Matrix::zeros(nd, 0));
    let a_hc = if has_xhat { ad - &h.matmul(cd) } else { Matrix::zeros(nd, nd) };

    let mut m = Matrix::zeros(layout.dim, layout.dim);
    for (i, (bi, p)) in layout.agents.iter().zip(&pieces).enumerate() {
        // x_i⁺ = A_i x_i + B_i Ch ξ_i − B_i Dh K η_i
        m.set_block(bi.x, bi.x, &p.a);
        m.set_block(bi.x, bi.xi, &p.b.matmul(&p.ch));
        m.set_block(bi.x, bi.eta, &p.b.matmul(&p.dh).matmul(k).scale(-1.0));
        // ξ_i⁺ = Ah ξ_i + Bh Cm x_i − Eh K η_i
        if bi.n_xi > 0 {
            m.set_block(bi.xi, bi.xi, &p.ah);
            m.set_block(bi.xi, bi.x, &p.bh.matmul(&p.cm));
            m.set_block(bi.xi, bi.eta, &p.eh.matmul(k).scale(-1.0));
        }
        // η_i⁺ = (A − BK) η_i + A x̂_i − A ζ̂_i   (full state: A ζ_i in place of A x̂_i)
        m.set_block(bi.eta, bi.eta, &a_bk);
        if has_xhat {
            m.set_block(bi.xhat, bi.xhat, &a_hc);
            m.add_block(bi.eta, bi.xhat, ad);
        }
        for (j, (bj, pj)) in layout.agents.iter().zip(&pieces).enumerate() {
            let wij = w[(i, j)];
            if wij == 0.0 {
                continue;
            }
            // ζ̂_i = Σ_j w_ij η_j
            m.add_block(bi.eta, bj.eta, &ad.scale(-wij));
            let yj = pj.c.scale(wij);
            if has_xhat {
                // x̂_i⁺ = (A − HC) x̂_i − BK ζ̂_i + H ζ_i
                m.add_block(bi.xhat, bj.eta, &bk.scale(-wij));
                m.add_block(bi.xhat, bj.x, &h.matmul(&yj));
            } else {
                m.add_block(bi.eta, bj.x, &ad.matmul(&yj));
            }
        }
        if let (Coupling::Rooted(w, _), Some(exo)) = (&coupling, exo) {
            // ζ̄_i picks up −(Σ_j w_ij) y_r
            let row_sum: f64 = (0..n_agents).map(|j| w[(i, j)]).sum();
            if row_sum != 0.0 {
                m.add_block(bi.xhat, layout.xr, &h.matmul(&exo.cr).scale(-row_sum));
            }
        }
    }
    if let Some(exo) = exo {
        m.set_block(layout.xr, layout.xr, &exo.ar);
    }

    let (transform, groups, disagreement_start) = proof_coordinates(config, &layout, &coupling, &a_bk, &a_hc)?;
    let s_inv = Lu::new(&transform)?.inverse()?;
    let transformed = transform.matmul(&m).matmul(&s_inv);
    Ok(ClosedLoopModel { kind, m, layout, transform, transformed, groups, disagreement_start })
}

struct Builder {
    s: Matrix,
    row: usize,
    groups: Vec<Group>,
}

impl Builder {
    fn open(&mut self, name: &'static str, expected: Option<Matrix>) {
        self.groups.push(Group { name, start: self.row, len: 0, expected });
    }

    /// Adds `coef · block` to the next `block.nrows()` rows at column `col`.
    fn put(&mut self, col: usize, block: &Matrix, coef: f64) {
        self.s.add_block(self.row, col, &block.scale(coef));
    }

    fn advance(&mut self, rows: usize) {
        self.row += rows;
        if let Some(g) = self.groups.last_mut() {
            g.len += rows;
        }
    }

    /// Drops the expectation of an empty group.
    fn close(&mut self) {
        if let Some(g) = self.groups.last_mut() {
            if g.len == 0 {
                g.expected = None;
            }
        }
    }
}

/// Target coordinates `x̄_i = T_i (x_i, σ_i)` of agent `i` written into the
/// builder with coefficient `coef`; identity for uncompensated agents.
fn put_target(b: &mut Builder, config: &SimConfig, layout: &Layout, i: usize, coef: f64) {
    let blk = layout.agents[i];
    match config.protocol.compensator(i) {
        Some(comp) => {
            let tm = &comp.target_map;
            b.put(blk.x, &tm.submatrix(0, 0, tm.nrows(), blk.n), coef);
            if comp.delays > 0 {
                b.put(blk.xi + comp.observer_dim, &tm.submatrix(0, blk.n, tm.nrows(), comp.delays), coef);
            }
        }
        None => b.put(blk.x, &Matrix::identity(blk.n), coef),
    }
}

fn proof_coordinates(
    config: &SimConfig,
    layout: &Layout,
    coupling: &Coupling,
    a_bk: &Matrix,
    a_hc: &Matrix,
) -> Result<(Matrix, Vec<Group>, usize), VerifyError> {
    let spec = &config.protocol;
    let kind = spec.kind();
    let design = spec.design();
    let ad = design.a();
    let nd = design.n();
    let n_agents = config.n_agents();
    let id = Matrix::identity(nd);
    let mut b = Builder { s: Matrix::zeros(layout.dim, layout.dim), row: 0, groups: Vec::new() };
    let compensated = matches!(kind, ProtocolKind::OutputSync | ProtocolKind::RegulatedSync);

    if compensated {
        let zd: Vec<&Matrix> = spec.compensators().iter().map(|c| &c.zero_dynamics).collect();
        b.open("zero_dynamics", Some(Matrix::block_diag(&zd)));
        for (i, comp) in spec.compensators().iter().enumerate() {
            let blk = layout.agents[i];
            let vt = comp.zero_basis.transpose();
            b.put(blk.x, &vt.submatrix(0, 0, vt.nrows(), blk.n), 1.0);
            if comp.delays > 0 {
                b.put(blk.xi + comp.observer_dim, &vt.submatrix(0, blk.n, vt.nrows(), comp.delays), 1.0);
            }
            b.advance(vt.nrows());
        }
        b.close();
    }

    let disagreement_start;
    match coupling {
        Coupling::Plain(_) => {
            let last = n_agents - 1;
            let lb = layout.agents[last];
            b.open("reference_agent", None);
            put_target(&mut b, config, layout, last, 1.0);
            b.advance(nd);
            b.put(lb.eta, &id, 1.0);
            b.advance(nd);
            if lb.n_xhat > 0 {
                b.put(lb.xhat, &id, 1.0);
                b.advance(nd);
            }
            disagreement_start = b.row;
            let d_tilde = reduced_matrix(&row_stochastic(&config.graph).d).ok();
            let eye = Matrix::identity(last);
            let dt = d_tilde.clone().unwrap_or_else(|| Matrix::zeros(0, 0));

            b.open("x_bar", Some(eye.kron(a_bk)));
            for i in 0..last {
                put_target(&mut b, config, layout, i, 1.0);
                put_target(&mut b, config, layout, last, -1.0);
                b.advance(nd);
            }
            b.close();
            b.open("e_bar", Some(dt.kron(ad)));
            for i in 0..last {
                put_target(&mut b, config, layout, i, 1.0);
                put_target(&mut b, config, layout, last, -1.0);
                b.put(layout.agents[i].eta, &id, -1.0);
                b.put(lb.eta, &id, 1.0);
                b.advance(nd);
            }
            b.close();
            if kind != ProtocolKind::FullState {
                b.open("e_tilde", Some(eye.kron(a_hc)));
                for i in 0..last {
                    // Σ_j (δ_ij − d̃_ij) x̄_j − (x̂_i − x̂_N)
                    for j in 0..last {
                        let c = if i == j { 1.0 } else { 0.0 } - dt[(i, j)];
                        if c != 0.0 {
                            put_target(&mut b, config, layout, j, c);
                            put_target(&mut b, config, layout, last, -c);
                        }
                    }
                    b.put(layout.agents[i].xhat, &id, -1.0);
                    b.put(lb.xhat, &id, 1.0);
                    b.advance(nd);
                }
                b.close();
            }
        }
        Coupling::Rooted(_, d_bar) => {
            let exo = spec.exosystem().ok_or(SimError::Config(String::from("missing exosystem")))?;
            b.open("exosystem", Some(exo.ar.clone()));
            b.put(layout.xr, &Matrix::identity(layout.xr_dim), 1.0);
            b.advance(layout.xr_dim);
            disagreement_start = b.row;
            let eye = Matrix::identity(n_agents);
            let put_tilde = |b: &mut Builder, i: usize, coef: f64| {
                put_target(b, config, layout, i, coef);
                b.put(layout.xr, &exo.lift, -coef);
            };
            b.open("x_tilde", Some(eye.kron(a_bk)));
            for i in 0..n_agents {
                put_tilde(&mut b, i, 1.0);
                b.advance(nd);
            }
            b.open("e", Some(d_bar.kron(ad)));
            for i in 0..n_agents {
                put_tilde(&mut b, i, 1.0);
                b.put(layout.agents[i].eta, &id, -1.0);
                b.advance(nd);
            }
            b.open("e_tilde", Some(eye.kron(a_hc)));
            for i in 0..n_agents {
                for j in 0..n_agents {
                    let c = if i == j { 1.0 } else { 0.0 } - d_bar[(i, j)];
                    if c != 0.0 {
                        put_tilde(&mut b, j, c);
                    }
                }
                b.put(layout.agents[i].xhat, &id, -1.0);
                b.advance(nd);
            }
        }
    }

    if compensated {
        let obs: Vec<Matrix> = config
            .agents
            .iter()
            .zip(spec.compensators())
            .filter(|(_, c)| c.observer_dim > 0)
            .map(|(a, c)| {
                let cm = a.cm().cloned().unwrap_or_else(|| a.c().clone());
                a.a() - &c.observer_gain.matmul(&cm)
            })
            .collect();
        let refs: Vec<&Matrix> = obs.iter().collect();
        b.open("omega", Some(Matrix::block_diag(&refs)));
        for (i, comp) in spec.compensators().iter().enumerate() {
            if comp.observer_dim > 0 {
                let blk = layout.agents[i];
                b.put(blk.x, &Matrix::identity(blk.n), 1.0);
                b.put(blk.xi, &Matrix::identity(blk.n), -1.0);
                b.advance(blk.n);
            }
        }
        b.close();
    }

    if b.row != layout.dim {
        return Err(SimError::Config(String::from("proof coordinates do not cover the closed loop")).into());
    }
    Ok((b.s, b.groups, disagreement_start))
}

/// `max_k ‖M^k s(0) − s_sim(k)‖∞` over `k ≤ steps`.
pub fn oracle_compare(config: &SimConfig, steps: usize) -> Result<f64, VerifyError> {
    let model = assemble(config)?;
    let mut cfg = config.clone();
    cfg.horizon = steps;
    let trace = run(&cfg)?;
    Ok(oracle_deviation(&model, &trace))
}

pub fn oracle_deviation(model: &ClosedLoopModel, trace: &Trace) -> f64 {
    let mut s = model.layout.stack(trace, 0);
    let mut worst: f64 = 0.0;
    for k in 0..trace.steps.len() {
        let sim = model.layout.stack(trace, k);
        let dev = s.iter().zip(&sim).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(dev);
        s = model.m.mul_vec(&s);
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: ProtocolKind,
    /// Spectral radius of the disagreement (or regulation) subsystem.
    pub disagreement_radius: f64,
    /// Spectral radius of each proof block.
    pub blocks: Vec<(&'static str, f64)>,
    pub lower_residual: f64,
    pub diagonal_residual: f64,
    pub certified: bool,
}

impl Certificate {
    pub fn structure_ok(&self) -> bool {
        self.lower_residual <= TRIANGULAR_TOL && self.diagonal_residual <= TRIANGULAR_TOL
    }
}

/// Spectral certificate of the theorem's conclusion for one configuration.
/// Refuses when the graph violates the protocol's structural condition.
pub fn certify_synchronization(config: &SimConfig) -> Result<Certificate, VerifyError> {
    match config.protocol.kind() {
        ProtocolKind::RegulatedSync => {
            let rootset = config.rootset.as_ref().ok_or(VerifyError::Refused(Structural::MissingRootSet))?;
            let rooted = rooted_networks(&config.graph, rootset).map_err(SimError::from)?;
            if !rooted.rooted {
                return Err(VerifyError::Refused(Structural::NotRooted));
            }
        }
        _ => {
            if !has_spanning_tree(&config.graph) {
                return Err(VerifyError::Refused(Structural::NoSpanningTree));
            }
        }
    }
    let model = assemble(config)?;
    let dis = model.disagreement_block();
    let disagreement_radius = if dis.nrows() == 0 { 0.0 } else { spectral_radius(&dis)? };
    let mut blocks = Vec::new();
    for g in &model.groups {
        if g.len > 0 {
            let blk = model.transformed.submatrix(g.start, g.start, g.len, g.len);
            blocks.push((g.name, spectral_radius(&blk)?));
        }
    }
    let (lower_residual, diagonal_residual) = model.structure_residuals();
    Ok(Certificate {
        kind: model.kind,
        disagreement_radius,
        blocks,
        lower_residual,
        diagonal_residual,
        certified: disagreement_radius < 1.0 - UNIT_DISK_TOL,
    })
}
