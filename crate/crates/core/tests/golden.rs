//! The seven-node worked example, end to end on the ideal channel.

use zdsim_core::config::Protocol;
use zdsim_core::oracle::{interference_degree, worked_example_fixture, FrozenGraph};
use zdsim_core::scenarios::worked_example_discovery;
use zdsim_core::NodeId;

fn route(names: &[&str]) -> Vec<NodeId> {
    let fx = worked_example_fixture();
    names.iter().map(|n| fx.id(n).unwrap()).collect()
}

#[test]
fn three_replies_with_counts_two_two_four() {
    let d = worked_example_discovery(Protocol::ZdAomdv, 2);
    let mut counts: Vec<u32> = d.candidates.iter().map(|c| c.anc).collect();
    counts.sort();
    assert_eq!(counts, vec![2, 2, 4]);
    let got = d.routes();
    assert!(got.contains(&(route(&["S", "B", "D"]), 4)));
    assert!(got.contains(&(route(&["S", "A", "E", "D"]), 2)));
    assert!(got.contains(&(route(&["S", "C", "F", "D"]), 2)));
}

#[test]
fn two_paths_selected_are_the_zone_disjoint_pair() {
    let d = worked_example_discovery(Protocol::ZdAomdv, 2);
    let mut sel = d.selected_routes();
    sel.sort();
    let mut want = vec![route(&["S", "A", "E", "D"]), route(&["S", "C", "F", "D"])];
    want.sort();
    assert_eq!(sel, want);
    let g = FrozenGraph::from_fixture(&worked_example_fixture(), "S", "D").unwrap();
    assert_eq!(interference_degree(&g, &sel), 0);
}

#[test]
fn trace_shows_b_adding_two() {
    let d = worked_example_discovery(Protocol::ZdAomdv, 2);
    assert!(
        d.trace
            .iter()
            .any(|l| l.ends_with("B rrep_forward id=S#1 anc=2->4 to=S")),
        "{:#?}",
        d.trace
    );
    // E excludes its predecessor A and counts only B.
    assert!(d
        .trace
        .iter()
        .any(|l| l.ends_with("E rreq_rebroadcast id=S#1 anc=2 hops=2")));
    assert!(d
        .trace
        .iter()
        .any(|l| l.ends_with("S paths_selected dst=D paths=S-A-E-D:2,S-C-F-D:2")));
}

#[test]
fn hop_count_baseline_keeps_the_shortest_path() {
    let d = worked_example_discovery(Protocol::Aomdv, 2);
    let sel = d.selected_routes();
    assert_eq!(sel[0], route(&["S", "B", "D"]));
    assert_eq!(sel.len(), 2);
    let g = FrozenGraph::from_fixture(&worked_example_fixture(), "S", "D").unwrap();
    assert_eq!(interference_degree(&g, &sel), 2);
    assert!(d.trace.iter().all(|l| !l.contains("query")));
}

#[test]
fn golden_trace_is_reproducible() {
    let a = worked_example_discovery(Protocol::ZdAomdv, 2);
    let b = worked_example_discovery(Protocol::ZdAomdv, 2);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.events, b.events);
}
