use gbpath::dp::PrivacyBudget;
use gbpath::graph::{generate_map_seeded, MapSpec};
use gbpath::publish::{check_rules, publish, PublishConfig};
use gbpath::recover::{
    adversary_infer, participant_edge_status, reconstruct_path, score_good_output, AdversaryView, Branches, EdgeStatus,
    Order,
};
use gbpath::rng::{derive_seed, seeded};

fn eps(x: f64) -> Option<PrivacyBudget> {
    Some(PrivacyBudget::new(x).unwrap())
}

#[test]
fn recovered_steps_match_the_path() {
    let cfg = PublishConfig {
        eps_v: eps(0.5),
        eps_e: eps(1.0),
        splitting: true,
    };
    for seed in 0..200u64 {
        let n = 3 + (seed % 6) as usize;
        let (lo, hi) = MapSpec::edge_bounds(n);
        let spec = MapSpec {
            vertices: n,
            edges: lo + (seed as usize * 7) % (hi - lo + 1),
            revisits: (seed % 3) as usize,
        };
        let m = generate_map_seeded(spec, seed).unwrap();
        let out = publish(&m.network, &m.path, cfg, &mut seeded(seed)).unwrap();
        let rec = reconstruct_path(&out.graph, &m.network);
        assert_eq!(rec.edge_set, m.path.base_edges(), "seed {seed}");
        assert_ne!(rec.order, Order::Failed, "seed {seed}");
        assert!(score_good_output(&rec, &m.path) >= 0.5, "seed {seed}");

        let br = Branches::new(&out.graph);
        for e in m.network.edges() {
            let s = participant_edge_status(&br, &m.network, e).unwrap();
            assert_eq!(s.status == EdgeStatus::InPath, m.path.base_edges().contains(&e));
            assert!(s.touched <= 2 * out.graph.vertices().len() * (1 + spec.revisits));
        }
    }
}

#[test]
fn cyclic_path_folds_back_to_bases() {
    // a b c d e b c f
    let p = [0, 1, 2, 3, 4, 1, 2, 5];
    let extra = [(0, 2), (1, 3), (2, 4), (3, 5)];
    let mut edges: Vec<(usize, usize)> = p.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    edges.extend(extra);
    edges.sort();
    edges.dedup();
    let network = gbpath::graph::Network::new(6, edges).unwrap();
    let path = gbpath::graph::PathSeq::from_bases(p);
    let cfg = PublishConfig {
        eps_v: None,
        eps_e: None,
        splitting: true,
    };
    let out = publish(&network, &path, cfg, &mut seeded(3)).unwrap();
    let rec = reconstruct_path(&out.graph, &network);
    assert!(score_good_output(&rec, &path) >= 0.5);
    match rec.order {
        Order::Confirmed(s) => assert_eq!(s, path),
        Order::Ambiguous(a, b) => assert!(a == path || b == path),
        Order::Failed => panic!("failed"),
    }
}

#[test]
fn path_only_map_with_little_noise_gives_the_edge_away() {
    // With a huge edge budget every non-edge lands on a shared branch, so
    // the withheld step is the only pair left apart.
    let m = generate_map_seeded(MapSpec::acyclic(5, 4), 1).unwrap();
    let cfg = PublishConfig {
        eps_v: None,
        eps_e: eps(200.0),
        splitting: true,
    };
    let out = publish(&m.network, &m.path, cfg, &mut seeded(1)).unwrap();
    let b = m.path.bases();
    let mid = (b[2].min(b[3]), b[2].max(b[3]));
    let view = AdversaryView::withholding(&m.network, &m.path, out.graph, mid).unwrap();
    assert_eq!(adversary_infer(&view).unwrap().candidates, vec![mid]);
}

#[test]
fn attack_always_keeps_the_withheld_edge() {
    let cfg = PublishConfig {
        eps_v: eps(1.0),
        eps_e: eps(1.0),
        splitting: true,
    };
    let mut sizes = Vec::new();
    for seed in 0..40u64 {
        let m = generate_map_seeded(MapSpec::acyclic(5, 5 + (seed % 5) as usize), seed).unwrap();
        let out = publish(&m.network, &m.path, cfg, &mut seeded(seed)).unwrap();
        for e in m.network.edges() {
            let view = AdversaryView::withholding(&m.network, &m.path, out.graph.clone(), e).unwrap();
            let attack = adversary_infer(&view).unwrap();
            assert!(attack.rank(e).is_some());
            sizes.push(attack.candidates.len());
        }
    }
    assert!(sizes.iter().any(|&s| s >= 2));
}

#[test]
fn split_graphs_keep_a_path_related_root_pair() {
    let cfg = PublishConfig {
        eps_v: None,
        eps_e: None,
        splitting: true,
    };
    for (n, m, t) in [(8u64, 17u64, 439u64), (8, 18, 145), (8, 20, 417), (8, 22, 370)] {
        let spec = MapSpec::acyclic(n as usize, m as usize);
        let map = generate_map_seeded(spec, derive_seed(20, &[n, m, t])).unwrap();
        let mut rng = seeded(derive_seed(20, &[n, m, t, u64::MAX, u64::MAX]));
        let out = publish(&map.network, &map.path, cfg, &mut rng).unwrap();
        assert_eq!(check_rules(&out.graph, &out.processed, &out.matrix), vec![]);
        let rec = reconstruct_path(&out.graph, &map.network);
        assert_eq!(rec.edge_set, map.path.base_edges());
        assert!(score_good_output(&rec, &map.path) >= 0.5);
    }
}
