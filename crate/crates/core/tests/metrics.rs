mod common;

use flowlump::corpus::{build_state_network, PathCorpus, RateMode, StateNetwork};
use flowlump::error::Error;
use flowlump::lumping::{build_dendrograms, Expander, LumpOptions};
use flowlump::mapeq::{optimize, FlowNetwork, OptimizeOptions};
use flowlump::metrics::{
    count_modules, external_persistence, flow_persistence, majority_assignment, overlap_table, physical_persistence,
    read_classification, state_allocation, Classification,
};
use flowlump::synth::{generate, SynthParams};
use proptest::prelude::*;

fn first_order(paths: &[(&[&str], f64)]) -> StateNetwork {
    build_state_network(&PathCorpus::from_named_paths(paths).unwrap(), 1).unwrap().0
}

fn flow_of(net: &StateNetwork) -> FlowNetwork {
    FlowNetwork::new(net, RateMode::Empirical).unwrap()
}

/// a,b in X and c,d in Y with 30 of 100 units crossing.
fn two_category_network() -> StateNetwork {
    first_order(&[
        (&["a", "b"], 35.0),
        (&["c", "d"], 35.0),
        (&["b", "c"], 15.0),
        (&["d", "a"], 15.0),
    ])
}

#[test]
fn one_module_persists_fully() {
    let net = two_category_network();
    let flow = flow_of(&net);
    let rep = flow_persistence(&flow, &vec![0; net.state_count()], "one").unwrap();
    assert_eq!(rep.overall, 1.0);
    assert_eq!(rep.per_module.len(), 1);
}

#[test]
fn singletons_on_a_cycle_never_persist() {
    let net = first_order(&[(&["a", "b", "c", "a"], 1.0)]);
    let flow = flow_of(&net);
    let rep = flow_persistence(&flow, &[0, 1, 2], "singletons").unwrap();
    assert_eq!(rep.overall, 0.0);
}

#[test]
fn overall_is_flow_weighted_mean() {
    let net = two_category_network();
    let flow = flow_of(&net);
    let rep = flow_persistence(&flow, &[0, 0, 1, 1], "split").unwrap();
    let weighted: f64 = rep.per_module.iter().map(|m| m.flow * m.persistence).sum();
    let total: f64 = rep.per_module.iter().map(|m| m.flow).sum();
    assert!((rep.overall - weighted / total).abs() < 1e-15);
    assert!((rep.overall - 0.7).abs() < 1e-15);
}

#[test]
fn modules_without_steps_are_noted() {
    let net = first_order(&[(&["a", "b"], 1.0)]);
    let flow = flow_of(&net);
    let rep = flow_persistence(&flow, &[0, 1], "x").unwrap();
    assert_eq!(rep.per_module.len(), 1);
    assert_eq!(rep.notes.len(), 1);
}

#[test]
fn external_two_categories() {
    let net = two_category_network();
    let flow = flow_of(&net);
    let mut c = Classification::default();
    for (n, cat) in [("a", "X"), ("b", "X"), ("c", "Y"), ("d", "Y")] {
        c.insert(n, cat);
    }
    let e = external_persistence(&net, &flow, &c).unwrap();
    assert!((e.persistence - 0.7).abs() < 1e-15);
    assert_eq!(e.coverage, 1.0);
    assert!(e.unmatched.is_empty());
}

#[test]
fn external_everything_everywhere() {
    let net = two_category_network();
    let flow = flow_of(&net);
    let mut c = Classification::default();
    for n in ["a", "b", "c", "d"] {
        c.insert(n, "X");
        c.insert(n, "Y");
    }
    assert_eq!(external_persistence(&net, &flow, &c).unwrap().persistence, 1.0);
}

#[test]
fn external_coverage_and_errors() {
    let net = two_category_network();
    let flow = flow_of(&net);
    let mut c = Classification::default();
    c.insert("a", "X");
    c.insert("b", "X");
    let e = external_persistence(&net, &flow, &c).unwrap();
    assert_eq!(e.persistence, 1.0);
    assert!((e.coverage - 0.35).abs() < 1e-15);
    assert_eq!(e.unmatched, vec!["c".to_string(), "d".to_string()]);

    let mut none = Classification::default();
    none.insert("zzz", "X");
    assert!(matches!(external_persistence(&net, &flow, &none), Err(Error::ZeroCoverage)));
}

#[test]
fn classification_reader() {
    let text = "# header\na\tX\na\tY\n\nb\tX\nbroken line\nc\t\n";
    let c = read_classification(text.as_bytes()).unwrap();
    assert_eq!(c.categories["a"].len(), 2);
    assert_eq!(c.categories["b"].len(), 1);
    assert_eq!(c.diagnostics.len(), 2);
    assert_eq!(c.diagnostics[0].line, 6);
}

#[test]
fn identity_classification_is_self_loop_fraction() {
    let net = build_state_network(
        &PathCorpus::from_named_paths(&[
            (&["a", "a", "b", "b", "b"][..], 1.0),
            (&["b", "c", "c", "a"][..], 2.0),
        ])
        .unwrap(),
        2,
    )
    .unwrap()
    .0;
    let flow = flow_of(&net);
    let mut c = Classification::default();
    for n in net.nodes() {
        c.insert(&n.name, &n.name);
    }
    let (mut selfw, mut all) = (0.0, 0.0);
    for (u, v, w) in net.all_links() {
        all += w;
        if net.physical(u) == net.physical(v) {
            selfw += w;
        }
    }
    let e = external_persistence(&net, &flow, &c).unwrap();
    assert!((e.persistence - selfw / all).abs() < 1e-15);
}

#[test]
fn majority_classification_matches_physical_projection() {
    for seed in 0..20 {
        let net = common::random_state_network(seed, 14, 6, 50);
        let flow = flow_of(&net);
        let assignment = optimize(&flow, &OptimizeOptions { trials: 3, seed }).assignment;
        let majority = majority_assignment(&flow, &assignment, net.nodes().len()).unwrap();
        let mut c = Classification::default();
        for (p, m) in majority.iter().enumerate() {
            if let Some(m) = m {
                c.insert(&net.nodes()[p].name, &m.to_string());
            }
        }
        let e = external_persistence(&net, &flow, &c).unwrap();
        let phys = physical_persistence(&flow, &assignment, net.nodes().len()).unwrap();
        assert_eq!(e.coverage, 1.0);
        assert!((e.persistence - phys.overall).abs() < 1e-12, "seed {seed}");
    }
}

fn fig1(paths: usize) -> (flowlump::synth::SynthCorpus, StateNetwork) {
    let s = generate(&SynthParams {
        nodes: 9,
        modules: 2,
        hubs: 1,
        rho: 1.0,
        hub_prob: 0.3,
        path_len: 3,
        paths,
        seed: 3,
    })
    .unwrap();
    let net = build_state_network(&s.corpus, 2).unwrap().0;
    (s, net)
}

#[test]
fn overlap_of_first_order_model_is_single_rows() {
    let (_, net) = fig1(5_000);
    let dendros = build_dendrograms(&net, &LumpOptions::default());
    let ex = Expander::new(&net, &dendros);
    let model = ex.model(ex.min_states()).unwrap();
    let flow = flow_of(&model.network);
    let map = optimize(&flow, &OptimizeOptions::default());
    let t = overlap_table(&model.network, &flow, &map.assignment, None).unwrap();
    for p in 0..net.nodes().len() as u32 {
        let rows: Vec<_> = t.rows.iter().filter(|r| r.physical == p).collect();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].fraction, 1.0);
    }
}

#[test]
fn hub_overlap_follows_its_two_states() {
    let (s, net) = fig1(5_000);
    let dendros = build_dendrograms(&net, &LumpOptions::default());
    let ex = Expander::new(&net, &dendros);
    let model = ex.model(ex.min_states() + 1).unwrap();
    let flow = flow_of(&model.network);
    let map = optimize(&flow, &OptimizeOptions::default());
    let hub_states: Vec<u32> = model
        .network
        .states()
        .iter()
        .filter(|st| s.is_hub(st.physical))
        .map(|st| st.id)
        .collect();
    assert_eq!(hub_states.len(), 2);
    let t = overlap_table(&model.network, &flow, &map.assignment, None).unwrap();
    let hub = model.network.state(hub_states[0]).physical;
    let rows: Vec<_> = t.rows.iter().filter(|r| r.physical == hub).collect();
    assert_eq!(rows.len(), 2);
    let hub_flow: f64 = hub_states.iter().map(|&u| flow.node_flow(u)).sum();
    for &u in &hub_states {
        let row = rows.iter().find(|r| r.module == map.assignment[u as usize]).unwrap();
        assert!((row.fraction - flow.node_flow(u) / hub_flow).abs() < 1e-12);
    }
    for p in 0..net.nodes().len() as u32 {
        if !s.is_hub(p) {
            assert_eq!(t.modules_of(p).len(), 1);
        }
    }
    let filtered = overlap_table(&model.network, &flow, &map.assignment, Some(0.9)).unwrap();
    assert!(filtered.modules_of(hub).len() < 2);
}

#[test]
fn allocation_counts() {
    let s = generate(&SynthParams {
        nodes: 20,
        modules: 2,
        hubs: 2,
        rho: 0.95,
        hub_prob: 0.3,
        path_len: 3,
        paths: 20_000,
        seed: 4,
    })
    .unwrap();
    let net = build_state_network(&s.corpus, 2).unwrap().0;
    let dendros = build_dendrograms(&net, &LumpOptions::default());
    let ex = Expander::new(&net, &dendros);
    let sizes = [ex.min_states(), ex.min_states() + 1, ex.min_states() + 2, ex.max_states()];
    let alloc = state_allocation(&ex, &sizes).unwrap();
    assert!(alloc.counts_at(ex.min_states()).iter().all(|&c| c == 1));
    for &r in &sizes {
        assert_eq!(alloc.counts_at(r).iter().sum::<usize>(), r);
    }
    // the first splits go to the planted hubs
    for r in [ex.min_states() + 1, ex.min_states() + 2] {
        let grown: Vec<u32> = alloc
            .rows
            .iter()
            .filter(|x| x.r == r && x.states > 1)
            .map(|x| x.physical)
            .collect();
        assert!(grown.iter().all(|&p| s.is_hub(p)), "{grown:?}");
    }
}

#[test]
fn module_count_threshold() {
    let net = two_category_network();
    let flow = flow_of(&net);
    assert_eq!(count_modules(&flow, &[0, 0, 1, 1], 1e-4).unwrap(), 2);
    assert_eq!(count_modules(&flow, &[0, 0, 1, 1], 0.6).unwrap(), 0);
}

/// Splits state `s` into two copies with the same out-distribution, dividing its
/// out-flow by `alpha` and every in-link by `beta`.
fn split_state(flow: &FlowNetwork, s: u32, alpha: f64, beta: f64) -> FlowNetwork {
    let n = flow.len() as u32;
    let mut links = Vec::new();
    for (u, v, f) in flow.all_links() {
        let outs: Vec<(u32, f64)> = if u == s { vec![(s, alpha * f), (n, (1.0 - alpha) * f)] } else { vec![(u, f)] };
        for (a, g) in outs {
            if v == s {
                links.push((a, s, beta * g));
                links.push((a, n, (1.0 - beta) * g));
            } else {
                links.push((a, v, g));
            }
        }
    }
    let mut physical = flow.physicals().to_vec();
    physical.push(flow.physical(s));
    let mut node_flow = flow.node_flows().to_vec();
    node_flow.push((1.0 - alpha) * node_flow[s as usize]);
    node_flow[s as usize] *= alpha;
    FlowNetwork::from_raw(physical, node_flow, links, flow.total()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn overlap_rows_sum_to_one(seed in any::<u64>(), modules in 1u32..5) {
        let net = common::random_state_network(seed, 12, 5, 40);
        let flow = flow_of(&net);
        let assignment: Vec<u32> = (0..12).map(|u| (u * 7 + seed as u32) % modules).collect();
        let t = overlap_table(&net, &flow, &assignment, None).unwrap();
        for p in 0..5u32 {
            let rows: Vec<_> = t.rows.iter().filter(|r| r.physical == p).collect();
            if !rows.is_empty() {
                let s: f64 = rows.iter().map(|r| r.fraction).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn physical_persistence_ignores_same_module_copies(
        seed in any::<u64>(),
        s in 0u32..10,
        alpha in 0.05f64..0.95,
        beta in 0.05f64..0.95,
    ) {
        let net = common::random_state_network(seed, 10, 4, 35);
        let flow = flow_of(&net);
        let mut assignment: Vec<u32> = (0..10).map(|u| (u + seed as u32) % 3).collect();
        let before = physical_persistence(&flow, &assignment, 4).unwrap().overall;
        let state_before = flow_persistence(&flow, &assignment, "a").unwrap().overall;
        let split = split_state(&flow, s, alpha, beta);
        assignment.push(assignment[s as usize]);
        let after = physical_persistence(&split, &assignment, 4).unwrap().overall;
        let state_after = flow_persistence(&split, &assignment, "b").unwrap().overall;
        prop_assert!((before - after).abs() < 1e-12);
        prop_assert!((state_before - state_after).abs() < 1e-12);
    }

    #[test]
    fn persistence_fractions_in_unit_interval(seed in any::<u64>(), modules in 1u32..6) {
        let net = common::random_state_network(seed, 12, 5, 40);
        let flow = flow_of(&net);
        let assignment: Vec<u32> = (0..12).map(|u| (u * 5 + seed as u32) % modules).collect();
        let rep = flow_persistence(&flow, &assignment, "x").unwrap();
        for m in &rep.per_module {
            prop_assert!((0.0..=1.0).contains(&m.persistence));
        }
        prop_assert!((0.0..=1.0).contains(&rep.overall));
    }
}
