#![allow(dead_code)]

use std::collections::BTreeMap;

use flowlump::corpus::{PathCorpus, PathRecord, PhysicalNode, StateNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random corpus over `n` nodes with `paths` paths of length 2..=max_len and small
/// integer weights.
pub fn random_corpus(seed: u64, n: u32, paths: usize, max_len: usize) -> PathCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|id| PhysicalNode {
            id,
            name: format!("v{id}"),
        })
        .collect();
    let records = (0..paths)
        .map(|_| {
            let len = rng.gen_range(2..=max_len);
            PathRecord {
                nodes: (0..len).map(|_| rng.gen_range(0..n)).collect(),
                weight: rng.gen_range(1..=4) as f64,
                group: None,
            }
        })
        .collect();
    PathCorpus::new(nodes, records).unwrap()
}

/// Entropy rate of the partitioned network, computed directly from link weights.
pub fn rate_of_partition(net: &StateNetwork, partition: &[u32]) -> f64 {
    let mut counts: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut weights: BTreeMap<u32, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (u, v, w) in net.all_links() {
        let b = partition[u as usize];
        *counts.entry((b, net.physical(v))).or_default() += w;
        *weights.entry(b).or_default() += w;
        total += w;
    }
    let mut h = 0.0;
    for (&(b, _), &c) in &counts {
        let wb = weights[&b];
        h -= c * (c / wb).log2();
    }
    h / total
}

/// Random first-order-style state network with `n` states spread over `phys` physical
/// nodes and `links` integer-weighted links.
pub fn random_state_network(seed: u64, n: u32, phys: u32, links: usize) -> StateNetwork {
    use flowlump::corpus::StateNode;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<PhysicalNode> = (0..phys)
        .map(|id| PhysicalNode {
            id,
            name: format!("p{id}"),
        })
        .collect();
    let states = (0..n)
        .map(|id| StateNode {
            id,
            physical: if id < phys { id } else { rng.gen_range(0..phys) },
            context: vec![],
            members: vec![id],
        })
        .collect();
    let links = (0..links)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(1..=5) as f64))
        .collect();
    StateNetwork::from_parts(1, std::sync::Arc::new(nodes), states, links).unwrap()
}

/// Every set partition of `0..n` as restricted growth strings.
pub fn all_partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(i: usize, n: usize, max: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur.push(b);
            rec(i + 1, n, max.max(b), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut cur = vec![0];
    rec(1, n, 0, &mut cur, &mut out);
    out
}

/// Two-level map equation written as `q H(Q) + sum_m p_m H(P^m)` with normalized
/// distributions, used as an independent oracle.
pub fn map_equation_oracle(rates: &[f64], physical: &[u32], links: &[(u32, u32, f64)], assignment: &[u32]) -> f64 {
    let h = |xs: &[f64]| {
        let s: f64 = xs.iter().sum();
        if s <= 0.0 {
            return 0.0;
        }
        -xs.iter().filter(|&&x| x > 0.0).map(|&x| (x / s) * (x / s).log2()).sum::<f64>()
    };
    let m = *assignment.iter().max().unwrap() as usize + 1;
    let mut exit = vec![0.0; m];
    for &(u, v, f) in links {
        if assignment[u as usize] != assignment[v as usize] {
            exit[assignment[u as usize] as usize] += f;
        }
    }
    let q: f64 = exit.iter().sum();
    let mut l = q * h(&exit);
    for (mi, &e) in exit.iter().enumerate() {
        let mut phys: BTreeMap<u32, f64> = BTreeMap::new();
        for (u, &a) in assignment.iter().enumerate() {
            if a as usize == mi {
                *phys.entry(physical[u]).or_default() += rates[u];
            }
        }
        let mut items = vec![e];
        items.extend(phys.values());
        let pm: f64 = items.iter().sum();
        l += pm * h(&items);
    }
    l
}
