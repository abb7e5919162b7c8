use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use rustc_hash::FxHashSet;

use super::objective::{lump_delta, OutProfile};
use crate::corpus::StateNetwork;
use crate::error::{Error, Result};
use crate::util::{fmt_sig, quote, tokenize};

/// One lumping step. Blocks `0..k` are the physical node's original states in the order
/// of [`LumpDendrogram::states`]; merge `t` creates block `k + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: u32,
    pub right: u32,
    /// Entropy-rate increase of this merge in bits per step.
    pub delta: f64,
}

/// Greedy merge sequence of one physical node's states, from `k` states down to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpDendrogram {
    pub physical: u32,
    /// Global ids of the original states, ascending.
    pub states: Vec<u32>,
    pub merges: Vec<Merge>,
}

impl LumpDendrogram {
    /// Block membership (local leaf indices) after applying the first `applied` merges,
    /// as one root block id per leaf.
    pub fn leaf_blocks(&self, applied: usize) -> Vec<u32> {
        let k = self.states.len();
        let mut parent: Vec<u32> = (0..(k + applied) as u32).collect();
        for (t, m) in self.merges[..applied].iter().enumerate() {
            let z = (k + t) as u32;
            parent[m.left as usize] = z;
            parent[m.right as usize] = z;
        }
        (0..k)
            .map(|leaf| {
                let mut b = leaf as u32;
                while parent[b as usize] != b {
                    b = parent[b as usize];
                }
                b
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LumpOptions {
    /// Physical nodes with at most this many states search all pairs at every step.
    pub exact_limit: usize,
    /// Larger nodes start from each block's this many nearest blocks by out-link
    /// Jaccard similarity.
    pub frontier: usize,
}

impl Default for LumpOptions {
    fn default() -> Self {
        Self {
            exact_limit: 64,
            frontier: 32,
        }
    }
}

impl LumpOptions {
    /// All-pairs greedy at every size.
    pub fn exact() -> Self {
        Self {
            exact_limit: usize::MAX,
            frontier: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    delta: f64,
    a: u32,
    b: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.delta
            .total_cmp(&other.delta)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Lumper<'a> {
    total: f64,
    opts: &'a LumpOptions,
    profiles: Vec<OutProfile>,
    alive: Vec<bool>,
    alive_count: usize,
    heap: BinaryHeap<Reverse<Candidate>>,
    exact: bool,
    neighbors: Vec<FxHashSet<u32>>,
}

impl Lumper<'_> {
    fn push_pair(&mut self, x: u32, y: u32) {
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        let delta = lump_delta(&self.profiles[a as usize], &self.profiles[b as usize], self.total);
        self.heap.push(Reverse(Candidate { delta, a, b }));
    }

    fn alive_ids(&self) -> Vec<u32> {
        (0..self.alive.len() as u32).filter(|&b| self.alive[b as usize]).collect()
    }

    /// Seeds the heap with candidate pairs among the currently alive blocks.
    fn seed_candidates(&mut self) {
        let ids = self.alive_ids();
        if self.exact {
            for (i, &x) in ids.iter().enumerate() {
                for &y in &ids[i + 1..] {
                    self.push_pair(x, y);
                }
            }
            return;
        }
        for (x, near) in nearest_by_jaccard(&self.profiles, &ids, self.opts.frontier) {
            for y in near {
                if self.neighbors[x as usize].insert(y) {
                    self.neighbors[y as usize].insert(x);
                    if x < y {
                        self.push_pair(x, y);
                    }
                }
            }
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        let z = self.profiles.len() as u32;
        let merged = self.profiles[a as usize].merged(&self.profiles[b as usize]);
        self.profiles.push(merged);
        self.alive.push(true);
        self.alive[a as usize] = false;
        self.alive[b as usize] = false;
        self.alive_count -= 1;
        if self.exact {
            self.neighbors.push(FxHashSet::default());
            for y in self.alive_ids() {
                if y != z {
                    self.push_pair(y, z);
                }
            }
        } else {
            let mut near: Vec<u32> = self.neighbors[a as usize]
                .union(&self.neighbors[b as usize])
                .copied()
                .filter(|&y| self.alive[y as usize])
                .collect();
            near.sort_unstable();
            self.neighbors.push(near.iter().copied().collect());
            for &y in &near {
                self.neighbors[y as usize].remove(&a);
                self.neighbors[y as usize].remove(&b);
                self.neighbors[y as usize].insert(z);
                self.push_pair(y, z);
            }
            self.neighbors[a as usize].clear();
            self.neighbors[b as usize].clear();
        }
        z
    }
}

/// For each block, up to `frontier` other blocks ranked by Jaccard similarity of their
/// physical-target supports (ties and fill-ins by larger weight, then smaller id).
fn nearest_by_jaccard(profiles: &[OutProfile], ids: &[u32], frontier: usize) -> Vec<(u32, Vec<u32>)> {
    let mut postings: rustc_hash::FxHashMap<u32, Vec<usize>> = Default::default();
    for (pos, &b) in ids.iter().enumerate() {
        for &(j, _) in &profiles[b as usize].counts {
            postings.entry(j).or_default().push(pos);
        }
    }
    let mut by_weight: Vec<usize> = (0..ids.len()).collect();
    by_weight.sort_by(|&x, &y| {
        profiles[ids[y] as usize]
            .weight
            .total_cmp(&profiles[ids[x] as usize].weight)
            .then(ids[x].cmp(&ids[y]))
    });
    let mut shared = vec![0u32; ids.len()];
    let mut touched = Vec::new();
    let mut out = Vec::with_capacity(ids.len());
    for (pos, &b) in ids.iter().enumerate() {
        let pb = &profiles[b as usize];
        for &(j, _) in &pb.counts {
            for &other in &postings[&j] {
                if other != pos {
                    if shared[other] == 0 {
                        touched.push(other);
                    }
                    shared[other] += 1;
                }
            }
        }
        let mut scored: Vec<(f64, usize)> = touched
            .iter()
            .map(|&o| {
                let inter = shared[o] as f64;
                let union = (pb.counts.len() + profiles[ids[o] as usize].counts.len()) as f64 - inter;
                (inter / union, o)
            })
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(ids[x.1].cmp(&ids[y.1])));
        let mut near: Vec<u32> = scored.iter().take(frontier).map(|&(_, o)| ids[o]).collect();
        if near.len() < frontier {
            for &o in &by_weight {
                if near.len() >= frontier {
                    break;
                }
                if o != pos && shared[o] == 0 {
                    near.push(ids[o]);
                }
            }
        }
        for &o in &touched {
            shared[o] = 0;
        }
        touched.clear();
        out.push((b, near));
    }
    out
}

/// Greedily lumps the given states of one physical node down to a single state.
///
/// Dangling states are lumped among themselves first. Every later step lumps the
/// candidate pair with the smallest [`lump_delta`], breaking ties by the smallest
/// `(min id, max id)` block pair.
pub fn build_dendrogram(net: &StateNetwork, physical: u32, states: &[u32], opts: &LumpOptions) -> LumpDendrogram {
    let mut states = states.to_vec();
    states.sort_unstable();
    let k = states.len();
    let profiles: Vec<OutProfile> = states.iter().map(|&u| OutProfile::of_state(net, u)).collect();
    let mut merges = Vec::with_capacity(k.saturating_sub(1));
    let mut lumper = Lumper {
        total: net.total_weight(),
        opts,
        alive: vec![true; k],
        alive_count: k,
        heap: BinaryHeap::new(),
        exact: k <= opts.exact_limit,
        neighbors: vec![FxHashSet::default(); k],
        profiles,
    };

    let dangling: Vec<u32> = (0..k as u32).filter(|&b| lumper.profiles[b as usize].is_dangling()).collect();
    if let Some((&first, rest)) = dangling.split_first() {
        let mut current = first;
        for &d in rest {
            merges.push(Merge {
                left: current.min(d),
                right: current.max(d),
                delta: 0.0,
            });
            current = lumper.merge_without_candidates(current, d);
        }
    }

    if lumper.alive_count > 1 {
        lumper.seed_candidates();
    }
    while lumper.alive_count > 1 {
        let Some(Reverse(c)) = lumper.heap.pop() else {
            lumper.seed_candidates();
            continue;
        };
        if !lumper.alive[c.a as usize] || !lumper.alive[c.b as usize] {
            continue;
        }
        merges.push(Merge {
            left: c.a,
            right: c.b,
            delta: c.delta,
        });
        lumper.merge(c.a, c.b);
    }

    LumpDendrogram {
        physical,
        states,
        merges,
    }
}

impl Lumper<'_> {
    fn merge_without_candidates(&mut self, a: u32, b: u32) -> u32 {
        let z = self.profiles.len() as u32;
        let merged = self.profiles[a as usize].merged(&self.profiles[b as usize]);
        self.profiles.push(merged);
        self.alive.push(true);
        self.neighbors.push(FxHashSet::default());
        self.alive[a as usize] = false;
        self.alive[b as usize] = false;
        self.alive_count -= 1;
        z
    }
}

/// Dendrograms for every physical node that owns states, in physical id order.
/// Physical nodes are processed independently in parallel.
pub fn build_dendrograms(net: &StateNetwork, opts: &LumpOptions) -> Vec<LumpDendrogram> {
    let by_physical = net.states_by_physical();
    by_physical
        .par_iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(j, s)| build_dendrogram(net, j as u32, s, opts))
        .collect()
}

/// Writes dendrograms as `*Dendrogram physicalId "name" k`, a `states` line with the
/// global state ids, and one `merge left right delta` line per step.
pub fn write_dendrograms<W: Write>(net: &StateNetwork, dendros: &[LumpDendrogram], mut w: W) -> Result<()> {
    writeln!(w, "# flowlump dendrogram")?;
    writeln!(w, "# total_weight {}", fmt_sig(net.total_weight(), 17))?;
    for d in dendros {
        writeln!(w, "*Dendrogram {} {} {}", d.physical, quote(net.physical_name(d.physical)), d.states.len())?;
        let ids: Vec<String> = d.states.iter().map(|s| s.to_string()).collect();
        writeln!(w, "states {}", ids.join(" "))?;
        for m in &d.merges {
            writeln!(w, "merge {} {} {}", m.left, m.right, fmt_sig(m.delta, 17))?;
        }
    }
    Ok(())
}

pub fn read_dendrograms<R: BufRead>(reader: R) -> Result<Vec<LumpDendrogram>> {
    let mut out: Vec<LumpDendrogram> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |m: &str| Error::Format {
            line: line_no,
            message: m.to_string(),
        };
        let toks = tokenize(t).map_err(|m| err(&m))?;
        match toks[0].as_str() {
            "*Dendrogram" => {
                let physical = toks.get(1).and_then(|x| x.parse().ok()).ok_or_else(|| err("bad physical id"))?;
                out.push(LumpDendrogram {
                    physical,
                    states: Vec::new(),
                    merges: Vec::new(),
                });
            }
            "states" => {
                let d = out.last_mut().ok_or_else(|| err("states before *Dendrogram"))?;
                d.states = toks[1..]
                    .iter()
                    .map(|x| x.parse().map_err(|_| err("bad state id")))
                    .collect::<Result<_>>()?;
            }
            "merge" => {
                let d = out.last_mut().ok_or_else(|| err("merge before *Dendrogram"))?;
                let num = |i: usize| toks.get(i).and_then(|x| x.parse::<u32>().ok()).ok_or_else(|| err("bad block id"));
                let delta = toks.get(3).and_then(|x| x.parse::<f64>().ok()).ok_or_else(|| err("bad delta"))?;
                d.merges.push(Merge {
                    left: num(1)?,
                    right: num(2)?,
                    delta,
                });
            }
            other => return Err(err(&format!("unexpected '{other}'"))),
        }
    }
    for d in &out {
        if d.merges.len() + 1 != d.states.len().max(1) {
            return Err(Error::Format {
                line: 0,
                message: format!("physical {} has {} states but {} merges", d.physical, d.states.len(), d.merges.len()),
            });
        }
    }
    Ok(out)
}
