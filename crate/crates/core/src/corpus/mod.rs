//! Weighted pathway corpora and the fixed-order state networks built from them.

mod flow;
mod network;
mod parse;

use std::sync::Arc;

use crate::error::{Error, LineDiagnostic, Result};

pub use flow::{physical_counts, physical_projection, transition_probabilities, visit_rates, RateMode, Transition, VisitRates};
pub use network::{build_state_network, BuildReport, StateNetwork, StateNode};
pub use parse::{parse_paths, write_paths, ParseOptions};

/// A concrete object that flow visits, such as a journal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhysicalNode {
    pub id: u32,
    pub name: String,
}

/// One observed pathway with its multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub nodes: Vec<u32>,
    pub weight: f64,
    pub group: Option<String>,
}

/// Weighted pathways over a dense table of physical nodes.
#[derive(Debug, Clone)]
pub struct PathCorpus {
    nodes: Arc<Vec<PhysicalNode>>,
    paths: Vec<PathRecord>,
    total_weight: f64,
    diagnostics: Vec<LineDiagnostic>,
}

impl PathCorpus {
    /// Builds a corpus from a node table and paths, validating every record.
    pub fn new(nodes: Vec<PhysicalNode>, paths: Vec<PathRecord>) -> Result<Self> {
        Self::with_shared_nodes(Arc::new(nodes), paths)
    }

    pub(crate) fn with_shared_nodes(
        nodes: Arc<Vec<PhysicalNode>>,
        paths: Vec<PathRecord>,
    ) -> Result<Self> {
        for (i, node) in nodes.iter().enumerate() {
            if node.id as usize != i {
                return Err(Error::InvalidParameter(format!(
                    "physical node ids must be dense; position {i} holds id {}",
                    node.id
                )));
            }
        }
        if paths.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let n = nodes.len() as u32;
        let mut total_weight = 0.0;
        for (i, p) in paths.iter().enumerate() {
            if p.nodes.len() < 2 {
                return Err(Error::InvalidParameter(format!("path {i} has fewer than 2 nodes")));
            }
            if !(p.weight > 0.0 && p.weight.is_finite()) {
                return Err(Error::InvalidParameter(format!("path {i} has weight {}", p.weight)));
            }
            if let Some(&bad) = p.nodes.iter().find(|&&x| x >= n) {
                return Err(Error::InvalidParameter(format!("path {i} references unknown node {bad}")));
            }
            total_weight += p.weight;
        }
        Ok(Self {
            nodes,
            paths,
            total_weight,
            diagnostics: Vec::new(),
        })
    }

    /// Builds a corpus from paths over string labels, assigning dense ids by first appearance.
    pub fn from_named_paths<S: AsRef<str>>(paths: &[(&[S], f64)]) -> Result<Self> {
        let mut interner = parse::Interner::default();
        let records = paths
            .iter()
            .map(|(names, weight)| PathRecord {
                nodes: names.iter().map(|s| interner.intern(s.as_ref())).collect(),
                weight: *weight,
                group: None,
            })
            .collect();
        Self::new(interner.into_nodes(), records)
    }

    pub fn nodes(&self) -> &[PhysicalNode] {
        &self.nodes
    }

    pub(crate) fn shared_nodes(&self) -> Arc<Vec<PhysicalNode>> {
        Arc::clone(&self.nodes)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.nodes[id as usize].name
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn paths(&self) -> &[PathRecord] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Lines rejected while parsing, if the corpus came from text.
    pub fn diagnostics(&self) -> &[LineDiagnostic] {
        &self.diagnostics
    }

    /// The corpus restricted to the given path indices, sharing this corpus's node table.
    pub fn subset(&self, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let paths = indices.into_iter().map(|i| self.paths[i].clone()).collect();
        Self::with_shared_nodes(self.shared_nodes(), paths)
    }

    /// A copy with every path weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let paths = self
            .paths
            .iter()
            .map(|p| PathRecord {
                weight: p.weight * factor,
                ..p.clone()
            })
            .collect();
        Self::with_shared_nodes(self.shared_nodes(), paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_paths_remap_densely() {
        let c = PathCorpus::from_named_paths(&[(&["x", "y", "x"][..], 2.0), (&["z", "y"][..], 1.0)]).unwrap();
        assert_eq!(c.node_count(), 3);
        assert_eq!(c.paths()[0].nodes, vec![0, 1, 0]);
        assert_eq!(c.paths()[1].nodes, vec![2, 1]);
        assert_eq!(c.total_weight(), 3.0);
        assert_eq!(c.id_of("z"), Some(2));
    }

    #[test]
    fn rejects_bad_records() {
        let nodes = vec![PhysicalNode { id: 0, name: "a".into() }];
        let short = PathRecord { nodes: vec![0], weight: 1.0, group: None };
        assert!(PathCorpus::new(nodes.clone(), vec![short]).is_err());
        let zero = PathRecord { nodes: vec![0, 0], weight: 0.0, group: None };
        assert!(PathCorpus::new(nodes.clone(), vec![zero]).is_err());
        let unknown = PathRecord { nodes: vec![0, 3], weight: 1.0, group: None };
        assert!(PathCorpus::new(nodes.clone(), vec![unknown]).is_err());
        assert!(matches!(PathCorpus::new(nodes, vec![]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn subset_and_scale_keep_node_table() {
        let c = PathCorpus::from_named_paths(&[(&["a", "b"][..], 1.0), (&["b", "c"][..], 3.0)]).unwrap();
        let s = c.subset([1]).unwrap();
        assert_eq!(s.node_count(), 3);
        assert_eq!(s.total_weight(), 3.0);
        assert_eq!(c.scaled(2.0).unwrap().total_weight(), 8.0);
    }
}
