use std::io::{BufRead, Write};
use std::sync::Arc;

use rustc_hash::FxHashMap;

use super::{PathCorpus, PhysicalNode};
use crate::error::{Error, Result};
use crate::util::{fmt_sig, quote, tokenize};

/// A state of a (possibly lumped) first-order representation of a higher-order chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateNode {
    pub id: u32,
    pub physical: u32,
    /// Previously visited physical nodes, oldest first. For lumped states this is the
    /// longest suffix shared by all members.
    pub context: Vec<u32>,
    /// Original state ids represented by this state; `[id]` for unlumped networks.
    pub members: Vec<u32>,
}

/// Sparse weighted directed network between state nodes, stored row-compressed with
/// targets sorted within each row.
#[derive(Debug, Clone)]
pub struct StateNetwork {
    order: usize,
    nodes: Arc<Vec<PhysicalNode>>,
    states: Vec<StateNode>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    out_weight: Vec<f64>,
    total_weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    /// Paths too short to contain a single window of the requested order.
    pub skipped_paths: usize,
    pub skipped_weight: f64,
    pub windows: usize,
}

fn intern<'a>(key: &'a [u32], index: &mut FxHashMap<&'a [u32], u32>, keys: &mut Vec<&'a [u32]>) -> u32 {
    *index.entry(key).or_insert_with(|| {
        keys.push(key);
        (keys.len() - 1) as u32
    })
}

/// Builds the order-`m` state network: every window `x[t-m..=t]` adds the path weight to
/// the link from state `x[t-m..t]` to state `x[t-m+1..=t]`.
pub fn build_state_network(corpus: &PathCorpus, order: usize) -> Result<(StateNetwork, BuildReport)> {
    if order < 1 {
        return Err(Error::InvalidOrder(order));
    }
    let mut report = BuildReport::default();
    let mut index: FxHashMap<&[u32], u32> = FxHashMap::default();
    let mut keys: Vec<&[u32]> = Vec::new();
    let mut raw_links: Vec<(u32, u32, f64)> = Vec::new();

    for path in corpus.paths() {
        if path.nodes.len() < order + 1 {
            report.skipped_paths += 1;
            report.skipped_weight += path.weight;
            continue;
        }
        for window in path.nodes.windows(order + 1) {
            let u = intern(&window[..order], &mut index, &mut keys);
            let v = intern(&window[1..], &mut index, &mut keys);
            raw_links.push((u, v, path.weight));
            report.windows += 1;
        }
    }
    if raw_links.is_empty() {
        return Err(Error::NoUsableWindows { order });
    }

    // Relabel states by (physical node, context) so ids do not depend on path order.
    let mut sorted: Vec<u32> = (0..keys.len() as u32).collect();
    sorted.sort_by(|&a, &b| {
        let (ka, kb) = (keys[a as usize], keys[b as usize]);
        (ka[order - 1], &ka[..order - 1]).cmp(&(kb[order - 1], &kb[..order - 1]))
    });
    let mut relabel = vec![0u32; keys.len()];
    let mut states = Vec::with_capacity(keys.len());
    for (new_id, &old) in sorted.iter().enumerate() {
        relabel[old as usize] = new_id as u32;
        let key = keys[old as usize];
        states.push(StateNode {
            id: new_id as u32,
            physical: key[order - 1],
            context: key[..order - 1].to_vec(),
            members: vec![new_id as u32],
        });
    }
    for link in &mut raw_links {
        link.0 = relabel[link.0 as usize];
        link.1 = relabel[link.1 as usize];
    }

    let net = StateNetwork::from_parts(order, corpus.shared_nodes(), states, raw_links)?;
    Ok((net, report))
}

impl StateNetwork {
    /// Assembles a network from states and links. Duplicate links are summed in input
    /// order; state ids must equal their positions.
    pub fn from_parts(
        order: usize,
        nodes: Arc<Vec<PhysicalNode>>,
        states: Vec<StateNode>,
        mut links: Vec<(u32, u32, f64)>,
    ) -> Result<Self> {
        let n = states.len();
        for (i, s) in states.iter().enumerate() {
            if s.id as usize != i {
                return Err(Error::InvalidParameter(format!("state at position {i} has id {}", s.id)));
            }
            if s.physical as usize >= nodes.len() {
                return Err(Error::InvalidParameter(format!("state {i} has unknown physical node {}", s.physical)));
            }
        }
        for &(u, v, w) in &links {
            if u as usize >= n || v as usize >= n {
                return Err(Error::InvalidParameter(format!("link ({u},{v}) references unknown state")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("link ({u},{v}) has weight {w}")));
            }
        }
        links.sort_by_key(|&(u, v, _)| (u, v));

        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(links.len());
        let mut weights: Vec<f64> = Vec::with_capacity(links.len());
        let mut sources = Vec::with_capacity(links.len());
        for (u, v, w) in links {
            if sources.last() == Some(&u) && targets.last() == Some(&v) {
                *weights.last_mut().unwrap() += w;
            } else {
                sources.push(u);
                targets.push(v);
                weights.push(w);
            }
        }
        for &u in &sources {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut out_weight = vec![0.0; n];
        for u in 0..n {
            out_weight[u] = weights[offsets[u]..offsets[u + 1]].iter().fold(0.0, |a, b| a + b);
        }
        let total_weight = out_weight.iter().sum();
        Ok(Self {
            order,
            nodes,
            states,
            offsets,
            targets,
            weights,
            out_weight,
            total_weight,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[PhysicalNode] {
        &self.nodes
    }

    pub(crate) fn shared_nodes(&self) -> Arc<Vec<PhysicalNode>> {
        Arc::clone(&self.nodes)
    }

    pub fn physical_name(&self, id: u32) -> &str {
        &self.nodes[id as usize].name
    }

    pub fn states(&self) -> &[StateNode] {
        &self.states
    }

    pub fn state(&self, u: u32) -> &StateNode {
        &self.states[u as usize]
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn link_count(&self) -> usize {
        self.targets.len()
    }

    pub fn physical(&self, u: u32) -> u32 {
        self.states[u as usize].physical
    }

    /// Out-links of `u` as `(target, weight)`, sorted by target id.
    pub fn links(&self, u: u32) -> impl ExactSizeIterator<Item = (u32, f64)> + '_ {
        let r = self.offsets[u as usize]..self.offsets[u as usize + 1];
        self.targets[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    /// All links as `(source, target, weight)` in row order.
    pub fn all_links(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.states.len() as u32).flat_map(move |u| self.links(u).map(move |(v, w)| (u, v, w)))
    }

    pub fn out_weight(&self, u: u32) -> f64 {
        self.out_weight[u as usize]
    }

    pub fn out_weights(&self) -> &[f64] {
        &self.out_weight
    }

    pub fn is_dangling(&self, u: u32) -> bool {
        self.out_weight[u as usize] <= 0.0
    }

    /// Sum of all link weights.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// State ids owned by each physical node, in id order.
    pub fn states_by_physical(&self) -> Vec<Vec<u32>> {
        let mut by = vec![Vec::new(); self.nodes.len()];
        for s in &self.states {
            by[s.physical as usize].push(s.id);
        }
        by
    }

    /// Number of physical nodes that own at least one state.
    pub fn physical_with_states(&self) -> usize {
        self.states_by_physical().iter().filter(|s| !s.is_empty()).count()
    }

    /// Lookup from `(context, physical)` to state id, for unlumped networks.
    pub fn state_index(&self) -> FxHashMap<Vec<u32>, u32> {
        self.states
            .iter()
            .map(|s| {
                let mut key = s.context.clone();
                key.push(s.physical);
                (key, s.id)
            })
            .collect()
    }

    /// Writes the text form: `*Vertices`, `*States` (`stateId physicalId "context"`),
    /// optional `*Members`, and `*Links` (`u v w`, weights at 17 significant digits).
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# flowlump state network")?;
        writeln!(w, "*Order {}", self.order)?;
        writeln!(w, "*Vertices {}", self.nodes.len())?;
        for node in self.nodes.iter() {
            writeln!(w, "{} {}", node.id, quote(&node.name))?;
        }
        writeln!(w, "*States {}", self.states.len())?;
        for s in &self.states {
            let ctx: Vec<String> = s.context.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{} {} {}", s.id, s.physical, quote(&ctx.join(" ")))?;
        }
        if self.states.iter().any(|s| s.members.as_slice() != [s.id]) {
            writeln!(w, "*Members")?;
            for s in &self.states {
                let m: Vec<String> = s.members.iter().map(|x| x.to_string()).collect();
                writeln!(w, "{} {}", s.id, m.join(" "))?;
            }
        }
        writeln!(w, "*Links {}", self.targets.len())?;
        for (u, v, wt) in self.all_links() {
            writeln!(w, "{u} {v} {}", fmt_sig(wt, 17))?;
        }
        Ok(())
    }

    /// Reads the text form produced by [`StateNetwork::write`].
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        #[derive(PartialEq)]
        enum Sec {
            None,
            Vertices,
            States,
            Members,
            Links,
        }
        let mut sec = Sec::None;
        let mut order = 1usize;
        let mut nodes = Vec::new();
        let mut states: Vec<StateNode> = Vec::new();
        let mut links = Vec::new();
        let fmt_err = |line: usize, message: String| Error::Format { line, message };

        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if let Some(d) = t.strip_prefix('*') {
                let mut parts = d.split_whitespace();
                match parts.next().unwrap_or("").to_ascii_lowercase().as_str() {
                    "order" => {
                        order = parts
                            .next()
                            .and_then(|x| x.parse().ok())
                            .ok_or_else(|| fmt_err(line_no, "bad *Order".into()))?
                    }
                    "vertices" => sec = Sec::Vertices,
                    "states" => sec = Sec::States,
                    "members" => sec = Sec::Members,
                    "links" => sec = Sec::Links,
                    other => return Err(fmt_err(line_no, format!("unknown directive *{other}"))),
                }
                continue;
            }
            let toks = tokenize(t).map_err(|m| fmt_err(line_no, m))?;
            let num = |i: usize| -> Result<u32> {
                toks.get(i)
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| fmt_err(line_no, format!("expected integer in column {}", i + 1)))
            };
            match sec {
                Sec::Vertices => {
                    let id = num(0)?;
                    if id as usize != nodes.len() {
                        return Err(fmt_err(line_no, "vertex ids must be dense and ordered".into()));
                    }
                    let name = toks.get(1).cloned().unwrap_or_else(|| id.to_string());
                    nodes.push(PhysicalNode { id, name });
                }
                Sec::States => {
                    let id = num(0)?;
                    let physical = num(1)?;
                    let context = match toks.get(2) {
                        Some(c) => c
                            .split_whitespace()
                            .map(|x| x.parse().map_err(|_| fmt_err(line_no, format!("bad context '{c}'"))))
                            .collect::<Result<Vec<u32>>>()?,
                        None => Vec::new(),
                    };
                    states.push(StateNode { id, physical, context, members: vec![id] });
                }
                Sec::Members => {
                    let id = num(0)? as usize;
                    let members = (1..toks.len()).map(num).collect::<Result<Vec<u32>>>()?;
                    let s = states
                        .get_mut(id)
                        .ok_or_else(|| fmt_err(line_no, format!("members for unknown state {id}")))?;
                    s.members = members;
                }
                Sec::Links => {
                    let u = num(0)?;
                    let v = num(1)?;
                    let w: f64 = toks
                        .get(2)
                        .and_then(|x| x.parse().ok())
                        .ok_or_else(|| fmt_err(line_no, "bad link weight".into()))?;
                    links.push((u, v, w));
                }
                Sec::None => return Err(fmt_err(line_no, "data before any section".into())),
            }
        }
        Self::from_parts(order, Arc::new(nodes), states, links)
    }
}

impl PartialEq for StateNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && *self.nodes == *other.nodes
            && self.states == other.states
            && self.offsets == other.offsets
            && self.targets == other.targets
            && self.weights.iter().map(|w| w.to_bits()).eq(other.weights.iter().map(|w| w.to_bits()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(paths: &[(&[&str], f64)]) -> PathCorpus {
        PathCorpus::from_named_paths(paths).unwrap()
    }

    fn keyed_links(net: &StateNetwork) -> Vec<(Vec<u32>, Vec<u32>, f64)> {
        let key = |u: u32| {
            let s = net.state(u);
            let mut k = s.context.clone();
            k.push(s.physical);
            k
        };
        net.all_links().map(|(u, v, w)| (key(u), key(v), w)).collect()
    }

    #[test]
    fn first_order_unrolled() {
        let c = corpus(&[(&["1", "2", "3"], 1.0)]);
        let (net, rep) = build_state_network(&c, 1).unwrap();
        assert_eq!(net.state_count(), 3);
        assert_eq!(keyed_links(&net), vec![(vec![0], vec![1], 1.0), (vec![1], vec![2], 1.0)]);
        assert_eq!(rep.windows, 2);
        assert!(net.is_dangling(2));
    }

    #[test]
    fn second_order_unrolled() {
        let c = corpus(&[(&["1", "2", "3"], 1.0)]);
        let (net, _) = build_state_network(&c, 2).unwrap();
        assert_eq!(net.state_count(), 2);
        assert_eq!(keyed_links(&net), vec![(vec![0, 1], vec![1, 2], 1.0)]);
        assert_eq!(net.state(0).physical, 1);
        assert_eq!(net.state(0).context, vec![0]);
    }

    #[test]
    fn hub_owns_one_state_per_origin() {
        let c = corpus(&[
            (&["a", "P", "a2"], 1.0),
            (&["b", "P", "b2"], 1.0),
            (&["c", "P", "c2"], 1.0),
            (&["d", "P", "d2"], 1.0),
        ]);
        let (net, _) = build_state_network(&c, 2).unwrap();
        let p = c.id_of("P").unwrap();
        let hub_states = &net.states_by_physical()[p as usize];
        assert_eq!(hub_states.len(), 4);
        for &u in hub_states {
            assert_eq!(net.links(u).len(), 1);
        }
    }

    #[test]
    fn short_paths_skipped_and_counted() {
        let c = corpus(&[(&["a", "b"], 2.0), (&["a", "b", "c"], 1.0)]);
        let (net, rep) = build_state_network(&c, 2).unwrap();
        assert_eq!(rep.skipped_paths, 1);
        assert_eq!(rep.skipped_weight, 2.0);
        assert_eq!(net.total_weight(), 1.0);
    }

    #[test]
    fn order_errors() {
        let c = corpus(&[(&["a", "b"], 1.0)]);
        assert!(matches!(build_state_network(&c, 0), Err(Error::InvalidOrder(0))));
        assert!(matches!(build_state_network(&c, 2), Err(Error::NoUsableWindows { order: 2 })));
    }

    #[test]
    fn duplicate_windows_accumulate() {
        let c = corpus(&[(&["a", "b", "a", "b"], 1.5), (&["a", "b"], 2.0)]);
        let (net, _) = build_state_network(&c, 1).unwrap();
        assert_eq!(keyed_links(&net), vec![(vec![0], vec![1], 5.0), (vec![1], vec![0], 1.5)]);
        assert_eq!(net.out_weight(0), 5.0);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let c = corpus(&[(&["x", "y z", "x", "w"], 0.1), (&["y z", "x", "y z"], 1.0 / 3.0)]);
        let (net, _) = build_state_network(&c, 2).unwrap();
        let mut buf = Vec::new();
        net.write(&mut buf).unwrap();
        let back = StateNetwork::read(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }
}
