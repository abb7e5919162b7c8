use std::collections::{BTreeMap, VecDeque};

use super::codelength::{hierarchical_codelength, map_equation, module_stats};
use super::flow::FlowNetwork;
use super::optimize::{best_partition, densify, Level};
use super::{Hierarchy, ModuleMap};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HierarchyOptions {
    /// Maximum number of module levels below the root.
    pub max_depth: usize,
    /// Search trials per sub-problem.
    pub trials: usize,
    pub seed: u64,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self {
            max_depth: 5,
            trials: 3,
            seed: 42,
        }
    }
}

/// Nests the modules of a two-level map.
///
/// First tries to group the top modules into super-modules, then recursively splits
/// leaf modules by optimizing inside their induced subnetworks. Each change is kept only
/// if it lowers the hierarchical code length.
pub fn hierarchical(flow: &FlowNetwork, top: &ModuleMap, opts: &HierarchyOptions) -> ModuleMap {
    let m = top.modules.len();
    let mut leaves: Vec<Vec<u32>> = vec![Vec::new(); m];
    for (u, &a) in top.assignment.iter().enumerate() {
        leaves[a as usize].push(u as u32);
    }
    let mut paths: Vec<Vec<u32>> = (0..m as u32).map(|i| vec![i]).collect();
    let mut assignment = top.assignment.clone();
    let mut best = hierarchical_codelength(flow, &assignment, &paths);

    if m > 2 && opts.max_depth >= 2 {
        let graph = Level::module_graph(flow, &top.assignment, m);
        let (groups, k) = densify(&best_partition(&graph, derive_seed(opts.seed, &[0]), opts.trials));
        if k > 1 && k < m {
            let mut counts = vec![0u32; k];
            let candidate: Vec<Vec<u32>> = groups
                .iter()
                .map(|&g| {
                    counts[g as usize] += 1;
                    vec![g, counts[g as usize] - 1]
                })
                .collect();
            let l = hierarchical_codelength(flow, &assignment, &candidate);
            if l < best {
                best = l;
                paths = candidate;
            }
        }
    }

    let base = Level::from_flow(flow);
    let mut queue: VecDeque<usize> = (0..leaves.len()).collect();
    while let Some(i) = queue.pop_front() {
        if paths[i].len() >= opts.max_depth || leaves[i].len() < 2 {
            continue;
        }
        let sub = base.subnetwork(&leaves[i]);
        let (labels, k) = densify(&best_partition(&sub, derive_seed(opts.seed, &[1, i as u64]), opts.trials));
        if k < 2 {
            continue;
        }
        let mut groups: Vec<Vec<u32>> = vec![Vec::new(); k];
        for (&u, &l) in leaves[i].iter().zip(&labels) {
            groups[l as usize].push(u);
        }
        let mut cand_assign = assignment.clone();
        let mut cand_paths = paths.clone();
        let parent = paths[i].clone();
        let child_path = |c: usize| {
            let mut p = parent.clone();
            p.push(c as u32);
            p
        };
        cand_paths[i] = child_path(0);
        for (c, _) in groups.iter().enumerate().skip(1) {
            let id = (cand_paths.len()) as u32;
            cand_paths.push(child_path(c));
            for &u in &groups[c] {
                cand_assign[u as usize] = id;
            }
        }
        let l = hierarchical_codelength(flow, &cand_assign, &cand_paths);
        if l < best {
            best = l;
            let first_new = leaves.len();
            leaves[i] = groups[0].clone();
            leaves.extend(groups.into_iter().skip(1));
            assignment = cand_assign;
            paths = cand_paths;
            queue.push_back(i);
            queue.extend(first_new..leaves.len());
        }
    }

    let (assignment, paths) = canonical(flow, &assignment, &paths);
    let codelength = map_equation(flow, &assignment);
    let hier = hierarchical_codelength(flow, &assignment, &paths);
    ModuleMap {
        modules: module_stats(flow, &assignment),
        assignment,
        codelength,
        hierarchy: Some(Hierarchy {
            leaf_paths: paths,
            codelength: hier,
        }),
    }
}

/// Orders siblings by descending flow (ties by smallest member state) and numbers leaf
/// modules in path order.
fn canonical(flow: &FlowNetwork, assignment: &[u32], paths: &[Vec<u32>]) -> (Vec<u32>, Vec<Vec<u32>>) {
    let m = paths.len();
    let mut leaf_flow = vec![0.0; m];
    let mut leaf_first = vec![u32::MAX; m];
    for (u, &a) in assignment.iter().enumerate() {
        leaf_flow[a as usize] += flow.node_flow(u as u32);
        leaf_first[a as usize] = leaf_first[a as usize].min(u as u32);
    }
    let mut nodes: BTreeMap<Vec<u32>, (f64, u32)> = BTreeMap::new();
    for (i, p) in paths.iter().enumerate() {
        for d in 1..=p.len() {
            let e = nodes.entry(p[..d].to_vec()).or_insert((0.0, u32::MAX));
            e.0 += leaf_flow[i];
            e.1 = e.1.min(leaf_first[i]);
        }
    }
    let mut children: BTreeMap<Vec<u32>, Vec<(Vec<u32>, f64, u32)>> = BTreeMap::new();
    for (p, &(f, first)) in &nodes {
        children.entry(p[..p.len() - 1].to_vec()).or_default().push((p.clone(), f, first));
    }
    let mut coord: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
    for list in children.values_mut() {
        list.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.2.cmp(&y.2)));
        for (i, (p, _, _)) in list.iter().enumerate() {
            coord.insert(p.clone(), i as u32);
        }
    }
    let new_paths: Vec<Vec<u32>> = paths
        .iter()
        .map(|p| (1..=p.len()).map(|d| coord[&p[..d]]).collect())
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| new_paths[a].cmp(&new_paths[b]));
    let mut rank = vec![0u32; m];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as u32;
    }
    (
        assignment.iter().map(|&a| rank[a as usize]).collect(),
        order.into_iter().map(|i| new_paths[i].clone()).collect(),
    )
}
