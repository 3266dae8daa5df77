//! Simulated counts against the brute-force reference on random graphs.

use std::collections::BTreeMap;

use zdsim_core::config::Protocol;
use zdsim_core::oracle::oracle_anc;
use zdsim_core::scenarios::{discover_on, discovery_config, oracle_graph, oracle_params};

#[test]
fn one_hundred_twenty_graphs_agree() {
    let cfg = discovery_config(Protocol::ZdAomdv, 3);
    let params = oracle_params(&cfg);
    let mut replies = 0;
    for seed in 0..120 {
        let g = oracle_graph(seed);
        assert!((6..=12).contains(&g.node_count()));
        let want = oracle_anc(&g, &params).unwrap();
        let got: BTreeMap<_, _> = discover_on(&g.to_fixture(), g.src, g.dst, &cfg)
            .routes()
            .into_iter()
            .collect();
        assert_eq!(got, want, "seed {seed}");
        replies += got.len();
    }
    assert!(replies >= 120);
}
