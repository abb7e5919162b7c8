mod common;

use std::collections::BTreeMap;

use common::{random_corpus, rate_of_partition};
use flowlump::corpus::{build_state_network, PathCorpus, StateNetwork, StateNode};
use flowlump::lumping::{
    build_dendrogram, build_dendrograms, entropy_rate, lumped_network, read_dendrograms, write_dendrograms,
    Expander, LumpDendrogram, LumpOptions,
};
use proptest::prelude::*;

fn order2(paths: &[(&[&str], f64)]) -> StateNetwork {
    build_state_network(&PathCorpus::from_named_paths(paths).unwrap(), 2).unwrap().0
}

fn hub_corpus() -> StateNetwork {
    // Two states of P return uniformly to a-targets, two to b-targets.
    let mut paths: Vec<(&[&str], f64)> = Vec::new();
    for p in [
        ["a1", "P", "a1"],
        ["a1", "P", "a2"],
        ["a2", "P", "a1"],
        ["a2", "P", "a2"],
        ["b1", "P", "b1"],
        ["b1", "P", "b2"],
        ["b2", "P", "b1"],
        ["b2", "P", "b2"],
    ]
    .iter()
    {
        paths.push((p, 1.0));
    }
    order2(&paths)
}

fn dendrogram_of(net: &StateNetwork, name: &str) -> LumpDendrogram {
    let p = net.nodes().iter().find(|n| n.name == name).unwrap().id;
    let states = &net.states_by_physical()[p as usize];
    build_dendrogram(net, p, states, &LumpOptions::exact())
}

/// Replays a dendrogram and checks each merge against an exhaustive scan of all pairs
/// of alive blocks, with deltas taken from direct entropy-rate recomputation.
fn check_greedy_steps(net: &StateNetwork, d: &LumpDendrogram) {
    let k = d.states.len();
    let mut partition: Vec<u32> = (0..net.state_count() as u32).map(|u| u + k as u32 * 1000).collect();
    let mut blocks: Vec<Vec<u32>> = d.states.iter().map(|&s| vec![s]).collect();
    let mut alive: Vec<bool> = vec![true; k];
    for (i, &s) in d.states.iter().enumerate() {
        partition[s as usize] = i as u32;
    }
    let dangling: Vec<bool> = d.states.iter().map(|&s| net.is_dangling(s)).collect();
    let mut dangling_left = dangling.iter().filter(|&&x| x).count();
    for (t, m) in d.merges.iter().enumerate() {
        let before = rate_of_partition(net, &partition);
        let merged_rate = |a: usize, b: usize| {
            let mut p = partition.clone();
            for &s in &blocks[b] {
                p[s as usize] = a as u32;
            }
            rate_of_partition(net, &p) - before
        };
        let (l, r) = (m.left as usize, m.right as usize);
        assert!(alive[l] && alive[r] && l < r);
        let chosen = merged_rate(l, r);
        assert!((chosen - m.delta).abs() < 1e-9, "step {t}: recorded {} recomputed {chosen}", m.delta);
        if dangling_left >= 2 {
            assert!(net.out_weight(d.states[l]) == 0.0 || l >= k);
        } else {
            for a in 0..blocks.len() {
                for b in a + 1..blocks.len() {
                    if alive[a] && alive[b] {
                        let x = merged_rate(a, b);
                        assert!(m.delta <= x + 1e-9, "step {t}: pair ({a},{b}) gives {x} < {}", m.delta);
                    }
                }
            }
        }
        if l < k && r < k && dangling[l] && dangling[r] {
            dangling_left -= 1;
        } else if dangling_left >= 2 {
            dangling_left -= 1;
        }
        let z = blocks.len();
        let mut members = blocks[l].clone();
        members.extend(&blocks[r]);
        for &s in &members {
            partition[s as usize] = z as u32;
        }
        blocks.push(members);
        alive[l] = false;
        alive[r] = false;
        alive.push(true);
    }
}

#[test]
fn single_state_has_no_merges() {
    let net = order2(&[(&["a", "b", "c"], 1.0)]);
    let d = build_dendrograms(&net, &LumpOptions::default());
    assert!(d.iter().all(|d| d.merges.is_empty()));
}

#[test]
fn identical_states_merge_at_zero() {
    let net = order2(&[(&["a", "P", "x"], 1.0), (&["b", "P", "x"], 3.0)]);
    let d = dendrogram_of(&net, "P");
    assert_eq!(d.merges.len(), 1);
    assert_eq!(d.merges[0].delta, 0.0);
}

#[test]
fn identical_pairs_merge_first() {
    let net = order2(&[
        (&["a1", "P", "x"], 1.0),
        (&["a2", "P", "x"], 1.0),
        (&["b1", "P", "y"], 1.0),
        (&["b2", "P", "y"], 1.0),
    ]);
    let d = dendrogram_of(&net, "P");
    assert_eq!(d.merges.len(), 3);
    assert_eq!(d.merges[0].delta, 0.0);
    assert_eq!(d.merges[1].delta, 0.0);
    let ctx = |leaf: u32| net.physical_name(net.state(d.states[leaf as usize]).context[0]).to_string();
    for m in &d.merges[..2] {
        assert_eq!(ctx(m.left).as_bytes()[0], ctx(m.right).as_bytes()[0]);
    }
    // Final merge mixes x and y at equal weight: 1 bit for each of 4 windows, W = 4.
    assert!((d.merges[2].delta - 1.0).abs() < 1e-12);
    check_greedy_steps(&net, &d);
}

#[test]
fn dangling_states_lump_first() {
    let net = order2(&[
        (&["x", "a", "P"], 1.0),
        (&["x", "b", "P"], 1.0),
        (&["c", "P", "x"], 1.0),
        (&["d", "P", "y"], 1.0),
    ]);
    let d = dendrogram_of(&net, "P");
    let first = d.merges[0];
    assert!(net.is_dangling(d.states[first.left as usize]));
    assert!(net.is_dangling(d.states[first.right as usize]));
    assert_eq!(first.delta, 0.0);
}

#[test]
fn greedy_matches_exhaustive_pair_search() {
    for seed in 0..60 {
        let net = build_state_network(&random_corpus(seed, 4, 40, 4), 2).unwrap().0;
        for d in build_dendrograms(&net, &LumpOptions::exact()) {
            if d.states.len() <= 6 {
                check_greedy_steps(&net, &d);
            }
        }
    }
}

#[test]
fn extreme_sizes() {
    let net = hub_corpus();
    let d = build_dendrograms(&net, &LumpOptions::exact());
    let ex = Expander::new(&net, &d);
    let n = ex.min_states();
    assert_eq!(n, net.physical_with_states());

    let first = ex.model(n).unwrap();
    assert_eq!(first.network.state_count(), n);
    let mut seen = vec![false; net.nodes().len()];
    for s in first.network.states() {
        assert!(!seen[s.physical as usize]);
        seen[s.physical as usize] = true;
    }

    let full = ex.model(ex.max_states()).unwrap();
    assert_eq!(full.network, net);
    assert_eq!(full.entropy_rate_bits, entropy_rate(&net));
    assert!(ex.model(n - 1).is_err());
    assert!(ex.model(ex.max_states() + 1).is_err());
}

#[test]
fn hub_model_sums_member_weights() {
    let net = hub_corpus();
    let d = build_dendrograms(&net, &LumpOptions::exact());
    let ex = Expander::new(&net, &d);
    let p = net.nodes().iter().find(|n| n.name == "P").unwrap().id;
    // Hub P has 4 states; other nodes have one state each. Two hub states remain
    // after undoing one hub merge.
    let r = ex.min_states() + 1;
    let counts = ex.state_counts(r).unwrap();
    let di = d.iter().position(|d| d.physical == p).unwrap();
    assert_eq!(counts[di], 2);
    let m = ex.model(r).unwrap();
    let hubs: Vec<&StateNode> = m.network.states().iter().filter(|s| s.physical == p).collect();
    assert_eq!(hubs.len(), 2);
    for s in hubs {
        assert_eq!(s.members.len(), 2);
        assert_eq!(m.network.out_weight(s.id), 4.0);
        assert!(s.context.is_empty());
    }
    assert!(m.entropy_rate_bits < ex.model(r - 1).unwrap().entropy_rate_bits);
    assert_eq!(m.entropy_rate_bits, 1.0);
    assert_eq!(ex.model(r - 1).unwrap().entropy_rate_bits, 2.0);
}

#[test]
fn next_state_goes_to_node_with_memory() {
    // Only Q's successor depends on the previous node.
    let net = order2(&[
        (&["a", "Q", "a"], 3.0),
        (&["b", "Q", "b"], 3.0),
        (&["a", "R", "a"], 1.0),
        (&["a", "R", "b"], 1.0),
        (&["b", "R", "a"], 1.0),
        (&["b", "R", "b"], 1.0),
        (&["Q", "a", "Q"], 1.0),
        (&["R", "a", "Q"], 1.0),
    ]);
    let d = build_dendrograms(&net, &LumpOptions::exact());
    let ex = Expander::new(&net, &d);
    let n = ex.min_states();
    let base = ex.partition(n).unwrap();
    let base_rate = rate_of_partition(&net, &base);

    // Brute force: best single split over every physical node and 2-block partition.
    let mut best = (f64::NEG_INFINITY, u32::MAX);
    for (p, states) in net.states_by_physical().iter().enumerate() {
        let k = states.len();
        for mask in 1..(1u32 << k) - 1 {
            let mut part = base.clone();
            let fresh = net.state_count() as u32;
            for (i, &s) in states.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    part[s as usize] = fresh;
                }
            }
            let gain = base_rate - rate_of_partition(&net, &part);
            if gain > best.0 + 1e-12 {
                best = (gain, p as u32);
            }
        }
    }
    let q = net.nodes().iter().find(|n| n.name == "Q").unwrap().id;
    assert_eq!(best.1, q);
    let counts = ex.state_counts(n + 1).unwrap();
    for (dd, c) in d.iter().zip(counts) {
        assert_eq!(c, if dd.physical == q { 2 } else { 1 });
    }
    let m = ex.model(n + 1).unwrap();
    assert!((base_rate - m.entropy_rate_bits - best.0).abs() < 1e-9);
}

#[test]
fn duplicated_state_round_trips() {
    let net = order2(&[
        (&["a", "P", "x"], 2.0),
        (&["a", "P", "y"], 2.0),
        (&["b", "P", "x"], 1.0),
        (&["x", "P", "y"], 5.0),
    ]);
    // Split the first state of P into two copies carrying 1/4 and 3/4 of its links.
    let target = net.states_by_physical()[net.nodes().iter().find(|n| n.name == "P").unwrap().id as usize][0];
    let copy = net.state_count() as u32;
    let mut states = net.states().to_vec();
    states.push(StateNode {
        id: copy,
        physical: net.physical(target),
        context: net.state(target).context.clone(),
        members: vec![copy],
    });
    let mut links = Vec::new();
    for (u, v, w) in net.all_links() {
        if u == target {
            links.push((u, v, w * 0.25));
            links.push((copy, v, w * 0.75));
        } else {
            links.push((u, v, w));
        }
        // Links into the target are shared between the copies.
        if v == target {
            let last = links.pop().unwrap();
            links.push((last.0, v, last.2 * 0.5));
            links.push((last.0, copy, last.2 * 0.5));
        }
    }
    let dup = StateNetwork::from_parts(net.order(), std::sync::Arc::new(net.nodes().to_vec()), states, links).unwrap();
    let d = dendrogram_of(&dup, "P");
    let first = d.merges[0];
    assert_eq!(first.delta, 0.0);
    assert_eq!((d.states[first.left as usize], d.states[first.right as usize]), (target, copy));

    let mut partition: Vec<u32> = (0..dup.state_count() as u32).collect();
    partition[copy as usize] = target;
    let restored = lumped_network(&dup, &partition).unwrap();
    assert_eq!(restored.state_count(), net.state_count());
    for ((u, v, w), (u2, v2, w2)) in net.all_links().zip(restored.all_links()) {
        assert_eq!((u, v), (u2, v2));
        assert_eq!(w, w2);
    }
    assert_eq!(entropy_rate(&restored), entropy_rate(&net));
}

#[test]
fn dendrogram_text_round_trip() {
    let net = build_state_network(&random_corpus(3, 6, 80, 4), 2).unwrap().0;
    let d = build_dendrograms(&net, &LumpOptions::default());
    let mut buf = Vec::new();
    write_dendrograms(&net, &d, &mut buf).unwrap();
    let back = read_dendrograms(buf.as_slice()).unwrap();
    assert_eq!(back, d);
}

#[test]
fn pruned_search_is_used_for_large_nodes() {
    // A hub with many contexts exercises the candidate frontier path.
    let mut paths: Vec<(Vec<String>, f64)> = Vec::new();
    for i in 0..150 {
        let src = format!("s{i}");
        let dst = format!("t{}", i % 7);
        paths.push((vec![src, "H".into(), dst], 1.0 + (i % 3) as f64));
    }
    let refs: Vec<(Vec<&str>, f64)> = paths.iter().map(|(p, w)| (p.iter().map(|s| s.as_str()).collect(), *w)).collect();
    let slices: Vec<(&[&str], f64)> = refs.iter().map(|(p, w)| (p.as_slice(), *w)).collect();
    let net = order2(&slices);
    let pruned = dendrogram_of(&net, "H");
    let h = pruned.physical;
    let exact = build_dendrogram(&net, h, &net.states_by_physical()[h as usize], &LumpOptions::exact());
    assert_eq!(pruned.merges.len(), 149);
    let total = |d: &LumpDendrogram| d.merges.iter().map(|m| m.delta).sum::<f64>();
    // Every merge order ends at the same first-order state, so deltas telescope.
    assert!((total(&pruned) - total(&exact)).abs() < 1e-9);
    // With 7 distinct return targets, both searches reach 7 blocks losslessly.
    assert!(pruned.merges[..142].iter().all(|m| m.delta == 0.0));
}

fn arb_corpus() -> impl Strategy<Value = (u64, u32, usize)> {
    (any::<u64>(), 2u32..7, 5usize..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unlumping_deltas_are_exact_rate_changes((seed, n, paths) in arb_corpus()) {
        let net = build_state_network(&random_corpus(seed, n, paths, 4), 2).unwrap().0;
        let d = build_dendrograms(&net, &LumpOptions::default());
        let ex = Expander::new(&net, &d);
        let mut prev = rate_of_partition(&net, &ex.partition(ex.min_states()).unwrap());
        for (i, u) in ex.sequence().iter().enumerate() {
            let r = ex.min_states() + i + 1;
            let part = ex.partition(r).unwrap();
            let rate = rate_of_partition(&net, &part);
            prop_assert!((prev - rate - u.delta).abs() < 1e-9);
            prop_assert!(rate <= prev + 1e-12);
            if u.delta > 1e-9 {
                prop_assert!(rate < prev);
            }
            prev = rate;
        }
    }

    #[test]
    fn lumping_conserves_weight_and_sums_links((seed, n, paths) in arb_corpus(), cut in 0.0f64..1.0) {
        let net = build_state_network(&random_corpus(seed, n, paths, 4), 2).unwrap().0;
        let d = build_dendrograms(&net, &LumpOptions::default());
        let ex = Expander::new(&net, &d);
        let r = ex.min_states() + ((ex.max_states() - ex.min_states()) as f64 * cut) as usize;
        let m = ex.model(r).unwrap();
        prop_assert_eq!(m.network.state_count(), r);
        prop_assert_eq!(m.network.total_weight(), net.total_weight());
        let mut sums: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for (u, v, w) in net.all_links() {
            *sums.entry((m.partition[u as usize], m.partition[v as usize])).or_default() += w;
        }
        let got: BTreeMap<(u32, u32), f64> = m.network.all_links().map(|(u, v, w)| ((u, v), w)).collect();
        prop_assert_eq!(got, sums);
        for s in m.network.states() {
            for &o in &s.members {
                prop_assert_eq!(m.partition[o as usize], s.id);
                prop_assert_eq!(net.physical(o), s.physical);
            }
        }
        prop_assert!((m.entropy_rate_bits - rate_of_partition(&net, &m.partition)).abs() < 1e-9);
    }
}
