//! JSON formats for graphs, systems and synthesis results.

use serde::{Deserialize, Serialize};
use syncnet_core::linalg::Matrix;
use syncnet_core::lti::{LtiError, LtiSystem};
use syncnet_core::netgraph::{GraphError, RootSet, WeightedDigraph};
use syncnet_core::synthesis::{Compensator, ExosystemSpec, GainSet};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("matrix {0} has ragged or empty rows")]
    Ragged(&'static str),
    #[error("node index {index} outside 1..={n}")]
    NodeIndex { index: usize, n: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Row-major list of rows.
pub type Rows = Vec<Vec<f64>>;

pub fn matrix_from_rows(name: &'static str, rows: &Rows) -> Result<Matrix, FormatError> {
    Matrix::from_rows(rows).ok_or(FormatError::Ragged(name))
}

pub fn rows_of(m: &Matrix) -> Rows {
    m.to_rows()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeFile {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Weighted digraph with 1-based node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<EdgeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rootset: Option<Vec<usize>>,
}

impl GraphFile {
    fn index(&self, i: usize) -> Result<usize, FormatError> {
        if i == 0 || i > self.n {
            return Err(FormatError::NodeIndex { index: i, n: self.n });
        }
        Ok(i - 1)
    }

    pub fn to_graph(&self) -> Result<WeightedDigraph, FormatError> {
        let edges = self
            .edges
            .iter()
            .map(|e| Ok((self.index(e.from)?, self.index(e.to)?, e.weight)))
            .collect::<Result<Vec<_>, FormatError>>()?;
        Ok(WeightedDigraph::from_edges(self.n, &edges)?)
    }

    pub fn to_rootset(&self) -> Result<Option<RootSet>, FormatError> {
        match &self.rootset {
            None => Ok(None),
            Some(nodes) => {
                let idx = nodes.iter().map(|&i| self.index(i)).collect::<Result<Vec<_>, _>>()?;
                Ok(Some(RootSet::new(&idx, self.n)?))
            }
        }
    }

    pub fn from_graph(g: &WeightedDigraph, rootset: Option<&RootSet>) -> Self {
        GraphFile {
            n: g.n(),
            edges: g.edges().into_iter().map(|(f, t, w)| EdgeFile { from: f + 1, to: t + 1, weight: w }).collect(),
            rootset: rootset.map(|r| r.nodes().iter().map(|i| i + 1).collect()),
        }
    }
}

/// `x⁺ = Ax + Bu`, `y = Cx`, `z = Cm x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "Cm", default, skip_serializing_if = "Option::is_none")]
    pub cm: Option<Rows>,
}

impl SystemFile {
    pub fn to_system(&self) -> Result<LtiSystem, FormatError> {
        let cm = self.cm.as_ref().map(|r| matrix_from_rows("Cm", r)).transpose()?;
        Ok(LtiSystem::with_measurement(
            matrix_from_rows("A", &self.a)?,
            matrix_from_rows("B", &self.b)?,
            matrix_from_rows("C", &self.c)?,
            cm,
        )?)
    }

    pub fn from_system(sys: &LtiSystem) -> Self {
        SystemFile {
            a: rows_of(sys.a()),
            b: rows_of(sys.b()),
            c: rows_of(sys.c()),
            cm: sys.cm().map(rows_of),
        }
    }
}

/// Gains with their Schur certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainFile {
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_a_bk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_a_hc: Option<f64>,
}

impl GainFile {
    pub fn from_gains(g: &GainSet) -> Self {
        GainFile {
            k: rows_of(g.k()),
            h: g.h().map(rows_of),
            radius_a_bk: Some(g.state_radius()),
            radius_a_hc: g.observer_radius(),
        }
    }

    pub fn matrices(&self) -> Result<(Matrix, Option<Matrix>), FormatError> {
        let k = matrix_from_rows("K", &self.k)?;
        let h = self.h.as_ref().map(|r| matrix_from_rows("H", r)).transpose()?;
        Ok((k, h))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensatorFile {
    #[serde(rename = "Ah")]
    pub ah: Rows,
    #[serde(rename = "Bh")]
    pub bh: Rows,
    #[serde(rename = "Ch")]
    pub ch: Rows,
    #[serde(rename = "Dh")]
    pub dh: Rows,
    #[serde(rename = "Eh")]
    pub eh: Rows,
    #[serde(rename = "As")]
    pub a_s: Rows,
    #[serde(rename = "Cs")]
    pub c_s: Rows,
    pub delays: usize,
    pub residual_radius: f64,
}

impl CompensatorFile {
    pub fn from_compensator(c: &Compensator, residual_radius: f64) -> Self {
        CompensatorFile {
            ah: rows_of(&c.ah),
            bh: rows_of(&c.bh),
            ch: rows_of(&c.ch),
            dh: rows_of(&c.dh),
            eh: rows_of(&c.eh),
            a_s: rows_of(&c.a_s),
            c_s: rows_of(&c.c_s),
            delays: c.delays,
            residual_radius,
        }
    }
}

/// Exosystem `(Ar, Cr)` as read from a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExosystemFile {
    #[serde(rename = "Ar")]
    pub ar: Rows,
    #[serde(rename = "Cr")]
    pub cr: Rows,
}

/// Augmented exosystem as written by the design step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedFile {
    #[serde(rename = "Ar")]
    pub ar: Rows,
    #[serde(rename = "Cr")]
    pub cr: Rows,
    #[serde(rename = "Ar_check")]
    pub ar_check: Rows,
    #[serde(rename = "Br_check")]
    pub br_check: Rows,
    #[serde(rename = "Cr_check")]
    pub cr_check: Rows,
    pub lift: Rows,
}

impl AugmentedFile {
    pub fn from_spec(e: &ExosystemSpec) -> Self {
        let s = e.augmented.system();
        AugmentedFile {
            ar: rows_of(&e.ar),
            cr: rows_of(&e.cr),
            ar_check: rows_of(s.a()),
            br_check: rows_of(s.b()),
            cr_check: rows_of(s.c()),
            lift: rows_of(&e.lift),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_round_trip_is_bit_exact() {
        let text = r#"{"n":3,"edges":[{"from":1,"to":2,"weight":0.1},{"from":2,"to":3,"weight":1.7976931348623157e308},{"from":3,"to":1,"weight":2.2250738585072014e-308}],"rootset":[1]}"#;
        let g: GraphFile = serde_json::from_str(text).unwrap();
        let back: GraphFile = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(g, back);
        for (a, b) in g.edges.iter().zip(&back.edges) {
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
        }
        let graph = g.to_graph().unwrap();
        let again = GraphFile::from_graph(&graph, g.to_rootset().unwrap().as_ref());
        assert_eq!(again.to_graph().unwrap(), graph);
        assert_eq!(again.rootset, g.rootset);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(serde_json::from_str::<GraphFile>(r#"{"n":1,"edges":[],"extra":1}"#).is_err());
        let g: GraphFile = serde_json::from_str(r#"{"n":2,"edges":[{"from":0,"to":1,"weight":1}]}"#).unwrap();
        assert!(matches!(g.to_graph(), Err(FormatError::NodeIndex { index: 0, n: 2 })));
        let s: SystemFile = serde_json::from_str(r#"{"A":[[1,2],[3]],"B":[[1],[1]],"C":[[1,0]]}"#).unwrap();
        assert!(matches!(s.to_system(), Err(FormatError::Ragged("A"))));
    }

    #[test]
    fn system_round_trip() {
        let text = r#"{"A":[[0.5]],"B":[[1.0]],"C":[[1.0]],"Cm":[[1.0]]}"#;
        let s: SystemFile = serde_json::from_str(text).unwrap();
        assert_eq!(SystemFile::from_system(&s.to_system().unwrap()), s);
    }
}
