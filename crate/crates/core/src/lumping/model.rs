use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::dendrogram::LumpDendrogram;
use super::objective::entropy_rate;
use crate::corpus::{StateNetwork, StateNode};
use crate::error::{Error, Result};

/// One unlumping step: undo merge `merge` of dendrogram `dendrogram`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unlump {
    pub dendrogram: usize,
    pub physical: u32,
    pub merge: usize,
    pub delta: f64,
}

#[derive(PartialEq)]
struct Head {
    delta: f64,
    physical: u32,
    dendrogram: usize,
}

impl Eq for Head {}

impl Ord for Head {
    fn cmp(&self, other: &Self) -> Ordering {
        self.delta
            .total_cmp(&other.delta)
            .then(other.physical.cmp(&self.physical))
    }
}

impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Global unlumping order starting from one state per physical node. Only the latest
/// merge not yet undone of each dendrogram is eligible; the eligible merge with the
/// largest delta goes next, ties to the smaller physical id.
pub fn unlump_sequence(dendros: &[LumpDendrogram]) -> Vec<Unlump> {
    let mut remaining: Vec<usize> = dendros.iter().map(|d| d.merges.len()).collect();
    let mut heap = BinaryHeap::new();
    for (i, d) in dendros.iter().enumerate() {
        if let Some(m) = d.merges.last() {
            heap.push(Head {
                delta: m.delta,
                physical: d.physical,
                dendrogram: i,
            });
        }
    }
    let mut out = Vec::with_capacity(remaining.iter().sum());
    while let Some(h) = heap.pop() {
        let i = h.dendrogram;
        remaining[i] -= 1;
        out.push(Unlump {
            dendrogram: i,
            physical: h.physical,
            merge: remaining[i],
            delta: h.delta,
        });
        if remaining[i] > 0 {
            heap.push(Head {
                delta: dendros[i].merges[remaining[i] - 1].delta,
                physical: h.physical,
                dendrogram: i,
            });
        }
    }
    out
}

/// Dendrograms plus their precomputed unlumping order; expands to any model size.
#[derive(Debug, Clone)]
pub struct Expander<'a> {
    net: &'a StateNetwork,
    dendros: &'a [LumpDendrogram],
    sequence: Vec<Unlump>,
}

impl<'a> Expander<'a> {
    pub fn new(net: &'a StateNetwork, dendros: &'a [LumpDendrogram]) -> Self {
        Self {
            net,
            dendros,
            sequence: unlump_sequence(dendros),
        }
    }

    pub fn sequence(&self) -> &[Unlump] {
        &self.sequence
    }

    /// Smallest model size: one state per physical node that owns states.
    pub fn min_states(&self) -> usize {
        self.dendros.len()
    }

    pub fn max_states(&self) -> usize {
        self.dendros.len() + self.sequence.len()
    }

    fn check(&self, r: usize) -> Result<()> {
        if r < self.min_states() || r > self.max_states() {
            return Err(Error::StateCountOutOfRange {
                requested: r,
                min: self.min_states(),
                max: self.max_states(),
            });
        }
        Ok(())
    }

    /// Number of lumped states of each dendrogram's physical node at model size `r`.
    pub fn state_counts(&self, r: usize) -> Result<Vec<usize>> {
        self.check(r)?;
        let mut counts = vec![1usize; self.dendros.len()];
        for u in &self.sequence[..r - self.min_states()] {
            counts[u.dendrogram] += 1;
        }
        Ok(counts)
    }

    /// `(physical node, lumped state count)` for every node owning states at size `r`.
    pub fn physical_state_counts(&self, r: usize) -> Result<Vec<(u32, usize)>> {
        let counts = self.state_counts(r)?;
        Ok(self.dendros.iter().map(|d| d.physical).zip(counts).collect())
    }

    /// Partition of the original states into `r` lumped states, numbered by
    /// (physical node, smallest member).
    pub fn partition(&self, r: usize) -> Result<Vec<u32>> {
        let counts = self.state_counts(r)?;
        let mut blocks: Vec<(u32, u32, u32)> = Vec::with_capacity(self.net.state_count());
        for (d, &c) in self.dendros.iter().zip(&counts) {
            let applied = d.states.len() - c;
            for (leaf, b) in d.leaf_blocks(applied).into_iter().enumerate() {
                blocks.push((d.physical, b, d.states[leaf]));
            }
        }
        if blocks.len() != self.net.state_count() {
            return Err(Error::InvalidParameter(format!(
                "dendrograms cover {} of {} states",
                blocks.len(),
                self.net.state_count()
            )));
        }
        // Leaves are sorted within each dendrogram, so the first leaf seen in a block is
        // its smallest member.
        let mut partition = vec![u32::MAX; self.net.state_count()];
        let mut firsts: Vec<(u32, u32, usize)> = Vec::new();
        let mut seen: rustc_hash::FxHashMap<(u32, u32), usize> = Default::default();
        let mut block_of = Vec::with_capacity(blocks.len());
        for &(p, b, s) in &blocks {
            let next = firsts.len();
            let idx = *seen.entry((p, b)).or_insert_with(|| {
                firsts.push((p, s, next));
                next
            });
            block_of.push(idx);
        }
        firsts.sort_unstable();
        let mut rank = vec![0u32; firsts.len()];
        for (new_id, &(_, _, old)) in firsts.iter().enumerate() {
            rank[old] = new_id as u32;
        }
        for (&(_, _, s), &idx) in blocks.iter().zip(&block_of) {
            partition[s as usize] = rank[idx];
        }
        Ok(partition)
    }

    pub fn model(&self, r: usize) -> Result<SparseModel> {
        let partition = self.partition(r)?;
        let network = lumped_network(self.net, &partition)?;
        let entropy_rate_bits = entropy_rate(&network);
        Ok(SparseModel {
            partition,
            r,
            network,
            entropy_rate_bits,
        })
    }
}

/// A variable-order model: original states grouped into `r` lumped states.
#[derive(Debug, Clone)]
pub struct SparseModel {
    /// Lumped state id of every original state.
    pub partition: Vec<u32>,
    pub r: usize,
    pub network: StateNetwork,
    pub entropy_rate_bits: f64,
}

/// Partition of the original states into `r` lumped states.
pub fn partition_at(net: &StateNetwork, dendros: &[LumpDendrogram], r: usize) -> Result<Vec<u32>> {
    Expander::new(net, dendros).partition(r)
}

pub fn expand_model(net: &StateNetwork, dendros: &[LumpDendrogram], r: usize) -> Result<SparseModel> {
    Expander::new(net, dendros).model(r)
}

/// Network between lumped states: each link weight is the sum of the original link
/// weights between member states, and targets are mapped through the same partition.
pub fn lumped_network(net: &StateNetwork, partition: &[u32]) -> Result<StateNetwork> {
    if partition.len() != net.state_count() {
        return Err(Error::InvalidParameter(format!(
            "partition covers {} of {} states",
            partition.len(),
            net.state_count()
        )));
    }
    let r = partition.iter().map(|&b| b as usize + 1).max().unwrap_or(0);
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); r];
    for (u, &b) in partition.iter().enumerate() {
        groups[b as usize].push(u as u32);
    }
    let mut states = Vec::with_capacity(r);
    for (b, group) in groups.iter().enumerate() {
        let Some(&first) = group.first() else {
            return Err(Error::InvalidParameter(format!("lumped state {b} is empty")));
        };
        let physical = net.physical(first);
        let mut context: &[u32] = &net.state(first).context;
        let mut members = Vec::new();
        for &u in group {
            let s = net.state(u);
            if s.physical != physical {
                return Err(Error::InvalidParameter(format!(
                    "lumped state {b} mixes physical nodes {physical} and {}",
                    s.physical
                )));
            }
            let common = context
                .iter()
                .rev()
                .zip(s.context.iter().rev())
                .take_while(|(a, b)| a == b)
                .count();
            context = &context[context.len() - common..];
            members.extend_from_slice(&s.members);
        }
        members.sort_unstable();
        states.push(StateNode {
            id: b as u32,
            physical,
            context: context.to_vec(),
            members,
        });
    }
    let links = net
        .all_links()
        .map(|(u, v, w)| (partition[u as usize], partition[v as usize], w))
        .collect();
    StateNetwork::from_parts(net.order(), net.shared_nodes(), states, links)
}
