use rustc_hash::FxHashMap;

use super::flow::FlowNetwork;
use crate::util::plogp;

/// Flow aggregates of one module, normalized by the network's total flow.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Module {
    /// Sum of member visit rates.
    pub flow: f64,
    pub exit: f64,
    pub enter: f64,
    /// Visit rates of member states summed per physical node, sorted by physical id.
    pub physical: Vec<(u32, f64)>,
}

/// Per-module aggregates for a dense assignment with module ids `0..module_count`.
pub fn module_stats(flow: &FlowNetwork, assignment: &[u32]) -> Vec<Module> {
    let m = assignment.iter().map(|&a| a as usize + 1).max().unwrap_or(0);
    let raw = RawModules::new(flow, assignment, m);
    let t = flow.total();
    (0..m)
        .map(|i| Module {
            flow: raw.flow[i] / t,
            exit: raw.exit[i] / t,
            enter: raw.enter[i] / t,
            physical: raw.physical[i].iter().map(|&(j, f)| (j, f / t)).collect(),
        })
        .collect()
}

struct RawModules {
    exit: Vec<f64>,
    enter: Vec<f64>,
    flow: Vec<f64>,
    physical: Vec<Vec<(u32, f64)>>,
}

impl RawModules {
    fn new(flow: &FlowNetwork, assignment: &[u32], m: usize) -> Self {
        let mut exit = vec![0.0; m];
        let mut enter = vec![0.0; m];
        for (u, v, f) in flow.all_links() {
            let (a, b) = (assignment[u as usize], assignment[v as usize]);
            if a != b {
                exit[a as usize] += f;
                enter[b as usize] += f;
            }
        }
        // Sum member flows per (module, physical) in state order.
        let mut index: FxHashMap<(u32, u32), usize> = FxHashMap::default();
        let mut entries: Vec<(u32, u32, f64)> = Vec::new();
        for (u, &a) in assignment.iter().enumerate() {
            let key = (a, flow.physical(u as u32));
            let next = entries.len();
            let i = *index.entry(key).or_insert(next);
            if i == next {
                entries.push((key.0, key.1, 0.0));
            }
            entries[i].2 += flow.node_flow(u as u32);
        }
        entries.sort_by_key(|e| (e.0, e.1));
        let mut physical = vec![Vec::new(); m];
        let mut mflow = vec![0.0; m];
        for (a, j, f) in entries {
            physical[a as usize].push((j, f));
            mflow[a as usize] += f;
        }
        Self {
            exit,
            enter,
            flow: mflow,
            physical,
        }
    }
}

/// Two-level map equation in bits per step:
/// `L = plogp(q) - 2 sum plogp(q_m) - sum plogp(p_mj) + sum plogp(q_m + p_m)`,
/// where `q_m` is module exit flow and `p_mj` the summed visit rate of physical node `j`
/// inside module `m`. Co-modular states of one physical node share one codeword.
pub fn map_equation(flow: &FlowNetwork, assignment: &[u32]) -> f64 {
    assert_eq!(assignment.len(), flow.len(), "assignment must cover every state");
    let m = assignment.iter().map(|&a| a as usize + 1).max().unwrap_or(0);
    let raw = RawModules::new(flow, assignment, m);
    let t = flow.total();
    let mut q = 0.0;
    let mut exit_terms = 0.0;
    let mut phys_terms = 0.0;
    let mut total_terms = 0.0;
    for i in 0..m {
        let exit = raw.exit[i] / t;
        q += exit;
        exit_terms += plogp(exit);
        for &(_, f) in &raw.physical[i] {
            phys_terms += plogp(f / t);
        }
        total_terms += plogp((raw.exit[i] + raw.flow[i]) / t);
    }
    plogp(q) - 2.0 * exit_terms - phys_terms + total_terms
}

/// Multilevel map equation for leaf modules placed in a tree.
///
/// `leaf_paths[i]` holds the child indices from the root down to leaf module `i`; no path
/// may be a prefix of another. The root codebook uses the exit flows of the top modules,
/// an intermediate module's codebook its own exit flow and its children's enter flows,
/// and a leaf module's codebook its exit flow and member physical rates. With every leaf
/// at depth one this equals [`map_equation`].
pub fn hierarchical_codelength(flow: &FlowNetwork, assignment: &[u32], leaf_paths: &[Vec<u32>]) -> f64 {
    let tree = Tree::new(leaf_paths);
    let mut exit = vec![0.0; tree.len()];
    let mut enter = vec![0.0; tree.len()];
    for (u, v, f) in flow.all_links() {
        let (a, b) = (assignment[u as usize] as usize, assignment[v as usize] as usize);
        if a == b {
            continue;
        }
        let (pa, pb) = (&tree.chains[a], &tree.chains[b]);
        let common = pa.iter().zip(pb.iter()).take_while(|(x, y)| x == y).count();
        for &x in &pa[common..] {
            exit[x] += f;
        }
        for &y in &pb[common..] {
            enter[y] += f;
        }
    }
    let m = leaf_paths.len();
    let mut leaf_phys: Vec<FxHashMap<u32, f64>> = vec![FxHashMap::default(); m];
    let mut leaf_order: Vec<Vec<u32>> = vec![Vec::new(); m];
    for (u, &a) in assignment.iter().enumerate() {
        let j = flow.physical(u as u32);
        let e = leaf_phys[a as usize].entry(j).or_insert_with(|| {
            leaf_order[a as usize].push(j);
            0.0
        });
        *e += flow.node_flow(u as u32);
    }
    let t = flow.total();
    let codebook = |items: &mut dyn Iterator<Item = f64>| {
        let mut sum = 0.0;
        let mut terms = 0.0;
        for x in items {
            let x = x / t;
            sum += x;
            terms += plogp(x);
        }
        plogp(sum) - terms
    };
    let mut total = codebook(&mut tree.children[0].iter().map(|&c| exit[c]));
    for node in 1..tree.len() {
        if let Some(leaf) = tree.leaf_of[node] {
            let mut js = leaf_order[leaf].clone();
            js.sort_unstable();
            let items = std::iter::once(exit[node]).chain(js.iter().map(|j| leaf_phys[leaf][j]));
            total += codebook(&mut items.into_iter());
        } else {
            let items = std::iter::once(exit[node]).chain(tree.children[node].iter().map(|&c| enter[c]));
            total += codebook(&mut items.into_iter());
        }
    }
    total
}

/// Per-node exit and enter flows of a module tree (normalized), keyed like
/// [`hierarchical_codelength`]: index 0 is the root.
struct Tree {
    children: Vec<Vec<usize>>,
    leaf_of: Vec<Option<usize>>,
    /// Tree node ids from depth 1 down to each leaf.
    chains: Vec<Vec<usize>>,
}

impl Tree {
    fn new(leaf_paths: &[Vec<u32>]) -> Self {
        let mut ids: std::collections::BTreeMap<Vec<u32>, usize> = Default::default();
        ids.insert(Vec::new(), 0);
        let mut children = vec![Vec::new()];
        let mut leaf_of = vec![None];
        let mut chains = Vec::with_capacity(leaf_paths.len());
        let mut sorted: Vec<usize> = (0..leaf_paths.len()).collect();
        sorted.sort_by(|&a, &b| leaf_paths[a].cmp(&leaf_paths[b]));
        let mut chain_of = vec![Vec::new(); leaf_paths.len()];
        for &leaf in &sorted {
            let path = &leaf_paths[leaf];
            assert!(!path.is_empty(), "leaf paths must be nonempty");
            let mut chain = Vec::with_capacity(path.len());
            let mut parent = 0;
            for d in 1..=path.len() {
                let key = path[..d].to_vec();
                let id = match ids.get(&key) {
                    Some(&id) => {
                        assert!(leaf_of[id].is_none(), "leaf path is a prefix of another");
                        id
                    }
                    None => {
                        let id = children.len();
                        ids.insert(key, id);
                        children.push(Vec::new());
                        leaf_of.push(None);
                        children[parent].push(id);
                        id
                    }
                };
                chain.push(id);
                parent = id;
            }
            assert!(children[parent].is_empty() && leaf_of[parent].is_none(), "leaf path is a prefix of another");
            leaf_of[parent] = Some(leaf);
            chain_of[leaf] = chain;
        }
        chains.extend(chain_of);
        Self {
            children,
            leaf_of,
            chains,
        }
    }

    fn len(&self) -> usize {
        self.children.len()
    }
}
