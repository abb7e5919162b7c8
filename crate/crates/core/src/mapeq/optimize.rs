use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::codelength::map_equation;
use super::flow::FlowNetwork;
use super::ModuleMap;
use crate::util::{derive_seed, plogp};

/// A pass over all vertices that gains less than this many bits ends a core loop.
pub const MIN_IMPROVEMENT: f64 = 1e-10;
/// Moves must gain more than this many bits.
const MOVE_EPSILON: f64 = 1e-13;
const MAX_PASSES: usize = 200;
const MAX_TUNE_ROUNDS: usize = 20;
/// In debug builds the running code length is checked against a full recomputation
/// after this many accepted moves.
const SPOT_CHECK_INTERVAL: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct OptimizeOptions {
    pub trials: usize,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { trials: 10, seed: 42 }
    }
}

/// Vertices of one optimization level: original states, or groups of them after
/// aggregation. Links never include self-links.
#[derive(Debug, Clone)]
pub(crate) struct Level {
    phys: Vec<Vec<(u32, f64)>>,
    flow: Vec<f64>,
    /// Flow leaving the vertex to outside the (sub)network being optimized.
    ext: Vec<f64>,
    /// `ext` plus all out-link flow.
    out_total: Vec<f64>,
    out_off: Vec<usize>,
    out_to: Vec<u32>,
    out_f: Vec<f64>,
    in_off: Vec<usize>,
    in_from: Vec<u32>,
    in_f: Vec<f64>,
    inv_total: f64,
}

impl Level {
    fn build(phys: Vec<Vec<(u32, f64)>>, flow: Vec<f64>, ext: Vec<f64>, mut links: Vec<(u32, u32, f64)>, inv_total: f64) -> Self {
        let n = flow.len();
        links.sort_by_key(|&(u, v, _)| (u, v));
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(links.len());
        for (u, v, f) in links {
            match merged.last_mut() {
                Some(last) if last.0 == u && last.1 == v => last.2 += f,
                _ => merged.push((u, v, f)),
            }
        }
        let mut out_off = vec![0usize; n + 1];
        let mut in_off = vec![0usize; n + 1];
        for &(u, v, _) in &merged {
            out_off[u as usize + 1] += 1;
            in_off[v as usize + 1] += 1;
        }
        for i in 0..n {
            out_off[i + 1] += out_off[i];
            in_off[i + 1] += in_off[i];
        }
        let out_to = merged.iter().map(|l| l.1).collect();
        let out_f: Vec<f64> = merged.iter().map(|l| l.2).collect();
        let mut in_from = vec![0u32; merged.len()];
        let mut in_f = vec![0.0; merged.len()];
        let mut fill = in_off.clone();
        for &(u, v, f) in &merged {
            let i = fill[v as usize];
            in_from[i] = u;
            in_f[i] = f;
            fill[v as usize] += 1;
        }
        let out_total = (0..n).map(|u| ext[u] + out_f[out_off[u]..out_off[u + 1]].iter().sum::<f64>()).collect();
        Self {
            phys,
            flow,
            ext,
            out_total,
            out_off,
            out_to,
            out_f,
            in_off,
            in_from,
            in_f,
            inv_total,
        }
    }

    pub(crate) fn from_flow(flow: &FlowNetwork) -> Self {
        let n = flow.len();
        let links = flow.all_links().filter(|&(u, v, _)| u != v).collect();
        Self::build(
            (0..n as u32).map(|u| vec![(flow.physical(u), flow.node_flow(u))]).collect(),
            flow.node_flows().to_vec(),
            vec![0.0; n],
            links,
            1.0 / flow.total(),
        )
    }

    /// Level over modules for grouping them into super-modules. Each module is a vertex
    /// whose visit flow is its enter flow, the quantity coded by the index codebook it
    /// would move into.
    pub(crate) fn module_graph(flow: &FlowNetwork, assignment: &[u32], m: usize) -> Self {
        let mut enter = vec![0.0; m];
        let mut links = Vec::new();
        for (u, v, f) in flow.all_links() {
            let (a, b) = (assignment[u as usize], assignment[v as usize]);
            if a != b {
                enter[b as usize] += f;
                links.push((a, b, f));
            }
        }
        Self::build(
            (0..m).map(|i| vec![(i as u32, enter[i])]).collect(),
            enter,
            vec![0.0; m],
            links,
            1.0 / flow.total(),
        )
    }

    pub(crate) fn len(&self) -> usize {
        self.flow.len()
    }

    fn out_links(&self, u: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let r = self.out_off[u as usize]..self.out_off[u as usize + 1];
        self.out_to[r.clone()].iter().copied().zip(self.out_f[r].iter().copied())
    }

    fn in_links(&self, u: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let r = self.in_off[u as usize]..self.in_off[u as usize + 1];
        self.in_from[r.clone()].iter().copied().zip(self.in_f[r].iter().copied())
    }

    /// Induced subnetwork on `members`; flow to other vertices becomes external exit flow.
    pub(crate) fn subnetwork(&self, members: &[u32]) -> Self {
        let mut local: FxHashMap<u32, u32> = FxHashMap::default();
        for (i, &u) in members.iter().enumerate() {
            local.insert(u, i as u32);
        }
        let mut ext: Vec<f64> = members.iter().map(|&u| self.ext[u as usize]).collect();
        let mut links = Vec::new();
        for (i, &u) in members.iter().enumerate() {
            for (v, f) in self.out_links(u) {
                match local.get(&v) {
                    Some(&j) => links.push((i as u32, j, f)),
                    None => ext[i] += f,
                }
            }
        }
        Self::build(
            members.iter().map(|&u| self.phys[u as usize].clone()).collect(),
            members.iter().map(|&u| self.flow[u as usize]).collect(),
            ext,
            links,
            self.inv_total,
        )
    }

    /// Collapses vertices into `m` groups.
    fn aggregate(&self, groups: &[u32], m: usize) -> Self {
        let mut phys_maps: Vec<FxHashMap<u32, f64>> = vec![FxHashMap::default(); m];
        let mut flow = vec![0.0; m];
        let mut ext = vec![0.0; m];
        for u in 0..self.len() {
            let g = groups[u] as usize;
            flow[g] += self.flow[u];
            ext[g] += self.ext[u];
            for &(j, f) in &self.phys[u] {
                *phys_maps[g].entry(j).or_insert(0.0) += f;
            }
        }
        let phys = phys_maps
            .into_iter()
            .map(|p| {
                let mut v: Vec<(u32, f64)> = p.into_iter().collect();
                v.sort_by_key(|e| e.0);
                v
            })
            .collect();
        let mut links = Vec::new();
        for u in 0..self.len() as u32 {
            let g = groups[u as usize];
            for (v, f) in self.out_links(u) {
                let h = groups[v as usize];
                if g != h {
                    links.push((g, h, f));
                }
            }
        }
        Self::build(phys, flow, ext, links, self.inv_total)
    }
}

struct Modules {
    exit: Vec<f64>,
    flow: Vec<f64>,
    size: Vec<u32>,
    /// `(module, physical) -> (summed flow, number of contributing vertices)`.
    phys: FxHashMap<(u32, u32), (f64, u32)>,
    /// Modules currently holding flow of each physical node.
    phys_modules: FxHashMap<u32, Vec<u32>>,
    sum_exit: f64,
    codelength: f64,
    inv: f64,
}

impl Modules {
    fn new(level: &Level, assign: &[u32]) -> Self {
        let n = level.len();
        let mut exit = vec![0.0; n];
        let mut flow = vec![0.0; n];
        let mut size = vec![0u32; n];
        let mut phys: FxHashMap<(u32, u32), (f64, u32)> = FxHashMap::default();
        for u in 0..n {
            let a = assign[u];
            exit[a as usize] += level.ext[u];
            flow[a as usize] += level.flow[u];
            size[a as usize] += 1;
            for &(j, f) in &level.phys[u] {
                let e = phys.entry((a, j)).or_insert((0.0, 0));
                e.0 += f;
                e.1 += 1;
            }
            for (v, f) in level.out_links(u as u32) {
                if assign[v as usize] != a {
                    exit[a as usize] += f;
                }
            }
        }
        let mut phys_modules: FxHashMap<u32, Vec<u32>> = FxHashMap::default();
        let mut keys: Vec<(u32, u32)> = phys.keys().copied().collect();
        keys.sort_unstable();
        for (a, j) in keys {
            phys_modules.entry(j).or_default().push(a);
        }
        let mut m = Self {
            exit,
            flow,
            size,
            phys,
            phys_modules,
            sum_exit: 0.0,
            codelength: 0.0,
            inv: level.inv_total,
        };
        m.sum_exit = m.exit.iter().sum();
        m.codelength = m.full_codelength();
        m
    }

    #[inline]
    fn pl(&self, x: f64) -> f64 {
        plogp(x * self.inv)
    }

    fn full_codelength(&self) -> f64 {
        let mut l = self.pl(self.sum_exit);
        for i in 0..self.exit.len() {
            if self.size[i] > 0 {
                l += self.pl(self.exit[i] + self.flow[i]) - 2.0 * self.pl(self.exit[i]);
            }
        }
        let mut entries: Vec<(&(u32, u32), &(f64, u32))> = self.phys.iter().collect();
        entries.sort_by_key(|e| *e.0);
        for (_, &(f, _)) in entries {
            l -= self.pl(f);
        }
        l
    }

    /// Exit and flow of `a` after `u` leaves it and of `b` after `u` joins it.
    #[allow(clippy::too_many_arguments)]
    fn moved_values(&self, level: &Level, u: u32, a: u32, b: u32, f_ua: f64, f_au: f64, f_ub: f64, f_bu: f64) -> [f64; 4] {
        let out = level.out_total[u as usize];
        let fu = level.flow[u as usize];
        let (ai, bi) = (a as usize, b as usize);
        let (na, nfa) = if self.size[ai] == 1 {
            (0.0, 0.0)
        } else {
            ((self.exit[ai] - (out - f_ua) + f_au).max(0.0), (self.flow[ai] - fu).max(0.0))
        };
        let (nb, nfb) = if self.size[bi] == 0 {
            (out, fu)
        } else {
            ((self.exit[bi] + (out - f_ub) - f_bu).max(0.0), self.flow[bi] + fu)
        };
        [na, nfa, nb, nfb]
    }

    #[allow(clippy::too_many_arguments)]
    fn delta(&self, level: &Level, u: u32, a: u32, b: u32, f_ua: f64, f_au: f64, f_ub: f64, f_bu: f64) -> f64 {
        let [na, nfa, nb, nfb] = self.moved_values(level, u, a, b, f_ua, f_au, f_ub, f_bu);
        let (ea, fa, eb, fb) = (self.exit[a as usize], self.flow[a as usize], self.exit[b as usize], self.flow[b as usize]);
        let new_sum = self.sum_exit + (na - ea) + (nb - eb);
        let mut d = self.pl(new_sum) - self.pl(self.sum_exit);
        d -= 2.0 * (self.pl(na) - self.pl(ea) + self.pl(nb) - self.pl(eb));
        d += self.pl(na + nfa) - self.pl(ea + fa) + self.pl(nb + nfb) - self.pl(eb + fb);
        for &(j, f) in &level.phys[u as usize] {
            let (pa, ca) = self.phys[&(a, j)];
            let new_pa = if ca == 1 { 0.0 } else { (pa - f).max(0.0) };
            let (pb, _) = self.phys.get(&(b, j)).copied().unwrap_or((0.0, 0));
            d -= self.pl(new_pa) - self.pl(pa) + self.pl(pb + f) - self.pl(pb);
        }
        d
    }

    #[allow(clippy::too_many_arguments)]
    fn apply(&mut self, level: &Level, u: u32, a: u32, b: u32, f_ua: f64, f_au: f64, f_ub: f64, f_bu: f64, delta: f64) {
        let [na, nfa, nb, nfb] = self.moved_values(level, u, a, b, f_ua, f_au, f_ub, f_bu);
        let (ai, bi) = (a as usize, b as usize);
        self.sum_exit += (na - self.exit[ai]) + (nb - self.exit[bi]);
        self.exit[ai] = na;
        self.flow[ai] = nfa;
        self.exit[bi] = nb;
        self.flow[bi] = nfb;
        self.size[ai] -= 1;
        self.size[bi] += 1;
        for &(j, f) in &level.phys[u as usize] {
            let e = self.phys.get_mut(&(a, j)).unwrap();
            if e.1 == 1 {
                self.phys.remove(&(a, j));
                let list = self.phys_modules.get_mut(&j).unwrap();
                let pos = list.iter().position(|&x| x == a).unwrap();
                list.swap_remove(pos);
            } else {
                e.0 = (e.0 - f).max(0.0);
                e.1 -= 1;
            }
            let e = self.phys.entry((b, j)).or_insert((0.0, 0));
            if e.1 == 0 {
                self.phys_modules.entry(j).or_default().push(b);
            }
            e.0 += f;
            e.1 += 1;
        }
        self.codelength += delta;
    }
}

struct Search {
    rng: ChaCha8Rng,
    moves: usize,
}

impl Search {
    /// Repeated passes of single-vertex moves until a pass gains less than
    /// [`MIN_IMPROVEMENT`]. Returns whether any vertex moved.
    fn core_loop(&mut self, level: &Level, assign: &mut [u32], allow_empty: bool) -> bool {
        let n = level.len();
        let mut mods = Modules::new(level, assign);
        let mut empty: Vec<u32> = (0..n as u32).rev().filter(|&m| mods.size[m as usize] == 0).collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut acc_out = vec![0.0; n];
        let mut acc_in = vec![0.0; n];
        let mut marked = vec![false; n];
        let mut touched: Vec<u32> = Vec::new();
        let mut moved_any = false;
        for _ in 0..MAX_PASSES {
            order.shuffle(&mut self.rng);
            let start = mods.codelength;
            let mut moves = 0;
            for &u in &order {
                for (v, f) in level.out_links(u) {
                    let m = assign[v as usize];
                    if !marked[m as usize] {
                        marked[m as usize] = true;
                        touched.push(m);
                    }
                    acc_out[m as usize] += f;
                }
                for (v, f) in level.in_links(u) {
                    let m = assign[v as usize];
                    if !marked[m as usize] {
                        marked[m as usize] = true;
                        touched.push(m);
                    }
                    acc_in[m as usize] += f;
                }
                // Modules sharing a physical node with u can shorten its codeword even
                // without a direct link.
                for &(j, _) in &level.phys[u as usize] {
                    for &m in &mods.phys_modules[&j] {
                        if !marked[m as usize] {
                            marked[m as usize] = true;
                            touched.push(m);
                        }
                    }
                }
                let a = assign[u as usize];
                let (f_ua, f_au) = (acc_out[a as usize], acc_in[a as usize]);
                let mut best = (-MOVE_EPSILON, None);
                for &m in &touched {
                    if m == a {
                        continue;
                    }
                    let d = mods.delta(level, u, a, m, f_ua, f_au, acc_out[m as usize], acc_in[m as usize]);
                    if d < best.0 || (d == best.0 && best.1.is_some_and(|b| m < b)) {
                        best = (d, Some(m));
                    }
                }
                if allow_empty && mods.size[a as usize] > 1 {
                    if let Some(&e) = empty.last() {
                        let d = mods.delta(level, u, a, e, f_ua, f_au, 0.0, 0.0);
                        if d < best.0 {
                            best = (d, Some(e));
                        }
                    }
                }
                if let (d, Some(b)) = best {
                    let (f_ub, f_bu) = (acc_out[b as usize], acc_in[b as usize]);
                    if mods.size[b as usize] == 0 {
                        empty.pop();
                    }
                    mods.apply(level, u, a, b, f_ua, f_au, f_ub, f_bu, d);
                    assign[u as usize] = b;
                    if mods.size[a as usize] == 0 {
                        empty.push(a);
                    }
                    moves += 1;
                    self.moves += 1;
                    if cfg!(debug_assertions) && self.moves % SPOT_CHECK_INTERVAL == 0 {
                        let full = Modules::new(level, assign).codelength;
                        assert!(
                            (full - mods.codelength).abs() < 1e-9,
                            "incremental code length {} drifted from {full}",
                            mods.codelength
                        );
                    }
                }
                for &m in &touched {
                    acc_out[m as usize] = 0.0;
                    acc_in[m as usize] = 0.0;
                    marked[m as usize] = false;
                }
                touched.clear();
            }
            if moves == 0 {
                break;
            }
            moved_any = true;
            // Refresh aggregates so rounding does not accumulate across passes.
            let gain = start - mods.codelength;
            mods = Modules::new(level, assign);
            if gain < MIN_IMPROVEMENT {
                break;
            }
        }
        moved_any
    }

    /// Moves vertices, aggregates modules into vertices, and repeats until no merge
    /// happens. `mapping` sends base vertices to vertices of `level`; the result sends
    /// base vertices to modules.
    fn louvain(&mut self, level: Cow<Level>, mut mapping: Vec<u32>, mut assign: Vec<u32>, mut allow_empty: bool) -> Vec<u32> {
        let mut level = level;
        loop {
            self.core_loop(&level, &mut assign, allow_empty);
            allow_empty = false;
            let (dense, m) = densify(&assign);
            for x in mapping.iter_mut() {
                *x = dense[*x as usize];
            }
            if m == level.len() || m <= 1 {
                return mapping;
            }
            level = Cow::Owned(level.aggregate(&dense, m));
            assign = (0..m as u32).collect();
        }
    }

    /// Splits every module into submodules and lets the submodules move between
    /// modules.
    fn coarse_tune(&mut self, base: &Level, assign: &[u32]) -> Vec<u32> {
        let (assign, m) = densify(assign);
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); m];
        for (u, &a) in assign.iter().enumerate() {
            members[a as usize].push(u as u32);
        }
        let mut sub = vec![0u32; base.len()];
        let mut parent: Vec<u32> = Vec::new();
        for (a, group) in members.iter().enumerate() {
            let labels = if group.len() == 1 {
                vec![0]
            } else {
                let level = base.subnetwork(group);
                let n = level.len() as u32;
                densify(&self.louvain(Cow::Owned(level), (0..n).collect(), (0..n).collect(), false)).0
            };
            let offset = parent.len() as u32;
            let count = labels.iter().max().map_or(0, |&x| x + 1);
            for (&u, &l) in group.iter().zip(&labels) {
                sub[u as usize] = offset + l;
            }
            parent.extend(std::iter::repeat(a as u32).take(count as usize));
        }
        let level = base.aggregate(&sub, parent.len());
        self.louvain(Cow::Owned(level), sub, parent, true)
    }

    /// One search run followed by tuning rounds.
    fn trial(&mut self, base: &Level, start: Start) -> Vec<u32> {
        let n = base.len() as u32;
        let ident: Vec<u32> = (0..n).collect();
        let mut best = match start {
            Start::Singletons => self.louvain(Cow::Borrowed(base), ident.clone(), ident.clone(), false),
            Start::OneModule => vec![0; n as usize],
            Start::Random => {
                let k = self.rng.gen_range(2..=4u32).min(n);
                let init = (0..n).map(|_| self.rng.gen_range(0..k)).collect();
                self.louvain(Cow::Borrowed(base), ident.clone(), init, true)
            }
        };
        let mut best_l = Modules::new(base, &densify(&best).0).codelength;
        for _ in 0..MAX_TUNE_ROUNDS {
            let before = best_l;
            let fine = self.louvain(Cow::Borrowed(base), ident.clone(), densify(&best).0, true);
            let fine_l = Modules::new(base, &densify(&fine).0).codelength;
            if fine_l < best_l {
                best = fine;
                best_l = fine_l;
            }
            let coarse = self.coarse_tune(base, &best);
            let coarse_l = Modules::new(base, &densify(&coarse).0).codelength;
            if coarse_l < best_l {
                best = coarse;
                best_l = coarse_l;
            }
            if before - best_l < MIN_IMPROVEMENT {
                break;
            }
        }
        densify(&best).0
    }
}

/// Starting point of a trial. Trials cycle through bottom-up growth from singletons,
/// splitting a single module during tuning, and a random coarse partition.
#[derive(Debug, Clone, Copy)]
enum Start {
    Singletons,
    OneModule,
    Random,
}

impl Start {
    fn of_trial(t: u64) -> Self {
        match t % 3 {
            0 => Start::Singletons,
            1 => Start::OneModule,
            _ => Start::Random,
        }
    }
}

/// Relabels ids densely in order of first appearance.
pub(crate) fn densify(assign: &[u32]) -> (Vec<u32>, usize) {
    let mut map: FxHashMap<u32, u32> = FxHashMap::default();
    let out = assign
        .iter()
        .map(|&a| {
            let next = map.len() as u32;
            *map.entry(a).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Best of `trials` seeded searches on a level, scored by its own two-level objective.
/// Ties go to the lowest trial index.
pub(crate) fn best_partition(level: &Level, seed: u64, trials: usize) -> Vec<u32> {
    let results: Vec<(f64, Vec<u32>)> = (0..trials.max(1) as u64)
        .into_par_iter()
        .map(|t| {
            let mut s = Search {
                rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t])),
                moves: 0,
            };
            let a = s.trial(level, Start::of_trial(t));
            (Modules::new(level, &a).codelength, a)
        })
        .collect();
    results
        .into_iter()
        .reduce(|best, x| if x.0 < best.0 { x } else { best })
        .unwrap()
        .1
}

/// Searches for the two-level module assignment of states that minimizes the map
/// equation. Trials run in parallel with seeds derived from `opts.seed`; the result is
/// never worse than the one-module and all-singleton assignments.
pub fn optimize(flow: &FlowNetwork, opts: &OptimizeOptions) -> ModuleMap {
    let n = flow.len();
    let base = Level::from_flow(flow);
    let trials: Vec<Vec<u32>> = (0..opts.trials.max(1) as u64)
        .into_par_iter()
        .map(|t| {
            let mut s = Search {
                rng: ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[t])),
                moves: 0,
            };
            s.trial(&base, Start::of_trial(t))
        })
        .collect();
    let mut best: Option<(f64, Vec<u32>)> = None;
    let baselines = [vec![0u32; n], (0..n as u32).collect()];
    for a in trials.into_iter().chain(baselines) {
        let l = map_equation(flow, &a);
        if best.as_ref().is_none_or(|b| l < b.0) {
            best = Some((l, a));
        }
    }
    ModuleMap::from_assignment(flow, &best.unwrap().1)
}

