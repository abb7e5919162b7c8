//! Map equation scoring and search over state networks, with co-modular states of one
//! physical node sharing a codeword.

mod codelength;
mod flow;
mod hierarchy;
mod optimize;
mod output;

pub use codelength::{hierarchical_codelength, map_equation, module_stats, Module};
pub use flow::FlowNetwork;
pub use hierarchy::{hierarchical, HierarchyOptions};
pub use optimize::{optimize, OptimizeOptions, MIN_IMPROVEMENT};
pub use output::{export_json, read_tree, write_tree, MapExport, TreeEntry};

/// Nested module tree over the leaf modules of a [`ModuleMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    /// Zero-based child indices from the root to each leaf module.
    pub leaf_paths: Vec<Vec<u32>>,
    pub codelength: f64,
}

/// Assignment of states to modules with cached flow aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleMap {
    /// Leaf module of every state.
    pub assignment: Vec<u32>,
    pub modules: Vec<Module>,
    /// Two-level map equation of `assignment`.
    pub codelength: f64,
    pub hierarchy: Option<Hierarchy>,
}

impl ModuleMap {
    /// Builds a two-level map, relabeling modules by descending flow (ties by smallest
    /// member state).
    pub fn from_assignment(flow: &FlowNetwork, assignment: &[u32]) -> Self {
        let assignment = relabel_by_flow(flow, assignment);
        let modules = module_stats(flow, &assignment);
        let codelength = map_equation(flow, &assignment);
        Self {
            assignment,
            modules,
            codelength,
            hierarchy: None,
        }
    }

    pub fn module_count(&self) -> usize {
        self.modules.len()
    }

    /// Hierarchical code length when a hierarchy is present, else the two-level value.
    pub fn best_codelength(&self) -> f64 {
        self.hierarchy.as_ref().map_or(self.codelength, |h| h.codelength)
    }

    /// Zero-based path of every leaf module: the hierarchy's paths or `[m]`.
    pub fn leaf_paths(&self) -> Vec<Vec<u32>> {
        match &self.hierarchy {
            Some(h) => h.leaf_paths.clone(),
            None => (0..self.modules.len() as u32).map(|m| vec![m]).collect(),
        }
    }

    /// Top-level module of every state.
    pub fn top_assignment(&self) -> Vec<u32> {
        let paths = self.leaf_paths();
        self.assignment.iter().map(|&a| paths[a as usize][0]).collect()
    }
}

pub(crate) fn relabel_by_flow(flow: &FlowNetwork, assignment: &[u32]) -> Vec<u32> {
    let mut stats: rustc_hash::FxHashMap<u32, (f64, u32)> = Default::default();
    for (u, &a) in assignment.iter().enumerate() {
        let e = stats.entry(a).or_insert((0.0, u as u32));
        e.0 += flow.node_flow(u as u32);
    }
    let mut order: Vec<(u32, f64, u32)> = stats.into_iter().map(|(a, (f, first))| (a, f, first)).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.2.cmp(&y.2)));
    let rank: rustc_hash::FxHashMap<u32, u32> = order.iter().enumerate().map(|(i, x)| (x.0, i as u32)).collect();
    assignment.iter().map(|a| rank[a]).collect()
}
