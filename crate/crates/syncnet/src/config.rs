//! Experiment configuration files and their assembly into a simulation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use syncnet_core::lti::LtiSystem;
use syncnet_core::protocols::{ProtocolKind, ProtocolSpec};
use syncnet_core::sim::SimConfig;
use syncnet_core::synthesis::{
    augment_exosystem, default_target, design_precompensator, GainSet, SynthesisError, TargetModel,
};

use crate::error::CliError;
use crate::formats::{matrix_from_rows, ExosystemFile, GainFile, GraphFile, SystemFile};

pub const DEFAULT_HORIZON: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Either a path (relative to the config file) or an inline object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    pub fn load(&self, base: &Path) -> Result<T, CliError> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Path(p) => read_json(&base.join(p)),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    FullState,
    PartialState,
    OutputSync,
    RegulatedSync,
}

impl ProtocolName {
    pub fn kind(self) -> ProtocolKind {
        match self {
            ProtocolName::FullState => ProtocolKind::FullState,
            ProtocolName::PartialState => ProtocolKind::PartialState,
            ProtocolName::OutputSync => ProtocolKind::OutputSync,
            ProtocolName::RegulatedSync => ProtocolKind::RegulatedSync,
        }
    }

    pub fn label(kind: ProtocolKind) -> &'static str {
        match kind {
            ProtocolKind::FullState => "full_state",
            ProtocolKind::PartialState => "partial_state",
            ProtocolKind::OutputSync => "output_sync",
            ProtocolKind::RegulatedSync => "regulated_sync",
        }
    }
}

/// Common target model; `char_poly` is ascending and monic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFile {
    #[serde(default)]
    pub nq: Option<usize>,
    #[serde(default)]
    pub char_poly: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub protocol: ProtocolName,
    pub graph: Source<GraphFile>,
    /// One model replicated on every node.
    #[serde(default)]
    pub agent: Option<Source<SystemFile>>,
    /// One model per node.
    #[serde(default)]
    pub agents: Option<Vec<Source<SystemFile>>>,
    /// Explicit gains; designed by Riccati iteration when absent.
    #[serde(default)]
    pub gains: Option<GainFile>,
    #[serde(default)]
    pub target: Option<TargetFile>,
    #[serde(default)]
    pub exosystem: Option<ExosystemFile>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub x0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub exo_x0: Option<Vec<f64>>,
    #[serde(default)]
    pub allow_unverified: Option<bool>,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub allow_unverified: bool,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub sim: SimConfig,
    pub tol: f64,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let cfg = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn from_str(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Validates and assembles the simulation, running the synthesis steps
    /// the protocol needs.
    pub fn resolve(&self, base: &Path, name: &str, ov: &Overrides) -> Result<Experiment, CliError> {
        let graph_file = self.graph.load(base)?;
        let graph = graph_file.to_graph()?;
        let rootset = graph_file.to_rootset()?;
        let n = graph.n();
        let agents: Vec<LtiSystem> = match (&self.agent, &self.agents) {
            (Some(a), None) => vec![a.load(base)?.to_system()?; n],
            (None, Some(list)) => list.iter().map(|a| Ok(a.load(base)?.to_system()?)).collect::<Result<_, CliError>>()?,
            _ => return Err(CliError::Usage("exactly one of `agent` and `agents` is required".into())),
        };
        if agents.len() != n {
            return Err(CliError::Usage(format!("{} agents for a graph with {n} nodes", agents.len())));
        }
        let tol = ov.tol.or(self.tol).unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0) {
            return Err(CliError::Usage("tolerance must be positive".into()));
        }
        let kind = self.protocol.kind();
        if kind != ProtocolKind::RegulatedSync && self.exosystem.is_some() {
            return Err(CliError::Usage("`exosystem` only applies to regulated_sync".into()));
        }
        if !matches!(kind, ProtocolKind::OutputSync | ProtocolKind::RegulatedSync) && self.target.is_some() {
            return Err(CliError::Usage("`target` only applies to compensated protocols".into()));
        }
        let protocol = self.protocol_spec(kind, &agents)?;
        let sim = SimConfig {
            graph,
            rootset,
            agents,
            protocol,
            horizon: ov.horizon.or(self.horizon).unwrap_or(DEFAULT_HORIZON),
            x0: self.x0.clone(),
            exo_x0: self.exo_x0.clone(),
            seed: ov.seed.or(self.seed).unwrap_or(0),
            allow_unverified: ov.allow_unverified || self.allow_unverified.unwrap_or(false),
        };
        sim.validate()?;
        let name = self.name.clone().unwrap_or_else(|| name.to_string());
        Ok(Experiment { name, sim, tol })
    }

    fn gains(&self, design: &LtiSystem, observer: bool) -> Result<GainSet, CliError> {
        match &self.gains {
            Some(g) => {
                let (k, h) = g.matrices()?;
                let h = if observer { h } else { None };
                Ok(GainSet::from_matrices(design, k, h)?)
            }
            None => Ok(GainSet::design(design, observer)?),
        }
    }

    fn protocol_spec(&self, kind: ProtocolKind, agents: &[LtiSystem]) -> Result<ProtocolSpec, CliError> {
        match kind {
            ProtocolKind::FullState => Ok(ProtocolSpec::full_state(&agents[0], &self.gains(&agents[0], false)?)?),
            ProtocolKind::PartialState => {
                Ok(ProtocolSpec::partial_state(&agents[0], &self.gains(&agents[0], true)?)?)
            }
            ProtocolKind::OutputSync => {
                let nq = self.target_nq(agents)?;
                let target = match self.target.as_ref().and_then(|t| t.char_poly.as_ref()) {
                    Some(p) => TargetModel::from_char_poly(p)?,
                    None => default_target(nq)?,
                };
                let comps = compensators(agents, &target)?;
                Ok(ProtocolSpec::output_sync(&target, &self.gains(target.system(), true)?, comps)?)
            }
            ProtocolKind::RegulatedSync => {
                let exo = self
                    .exosystem
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("regulated_sync needs an `exosystem`".into()))?;
                let ar = matrix_from_rows("Ar", &exo.ar)?;
                let cr = matrix_from_rows("Cr", &exo.cr)?;
                let nq = match self.target.as_ref().and_then(|t| t.nq) {
                    Some(nq) => nq,
                    None => max_relative_degree(agents)?.max(ar.nrows()),
                };
                let spec = augment_exosystem(&cr, &ar, nq)?;
                let comps = compensators(agents, &spec.augmented)?;
                Ok(ProtocolSpec::regulated_sync(&spec, &self.gains(spec.augmented.system(), true)?, comps)?)
            }
        }
    }

    fn target_nq(&self, agents: &[LtiSystem]) -> Result<usize, CliError> {
        match &self.target {
            Some(TargetFile { char_poly: Some(p), nq }) => {
                let deg = p.len().saturating_sub(1);
                if nq.is_some_and(|q| q != deg) {
                    return Err(CliError::Usage("target `nq` disagrees with the degree of `char_poly`".into()));
                }
                Ok(deg)
            }
            Some(TargetFile { nq: Some(q), .. }) => Ok(*q),
            _ => max_relative_degree(agents),
        }
    }
}

fn compensators(
    agents: &[LtiSystem],
    target: &TargetModel,
) -> Result<Vec<syncnet_core::synthesis::Compensator>, SynthesisError> {
    agents.iter().map(|a| design_precompensator(a, target)).collect()
}

/// Largest relative degree over the agents.
pub fn max_relative_degree(agents: &[LtiSystem]) -> Result<usize, CliError> {
    let mut r = 1;
    for a in agents {
        let (ri, _) = a.leading_markov().ok_or(CliError::Synthesis(SynthesisError::Unsupported(
            syncnet_core::synthesis::Unsupported::NotRightInvertible,
        )))?;
        r = r.max(ri);
    }
    Ok(r)
}
