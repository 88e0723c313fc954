use std::collections::BTreeSet;

use gbpath::dp::{selection_probabilities, PrivacyBudget};
use gbpath::graph::{derive_subgraphs, generate_map_seeded, validate, GeneratedMap, MapSpec, RelationMatrix};
use gbpath::preprocess::{preprocess_edges, preprocess_vertices};
use gbpath::publish::{check_rules, publish, read_published, write_published, PublishConfig};
use gbpath::recover::reconstruct_path;
use gbpath::rng::seeded;
use proptest::prelude::*;

fn map_spec() -> impl Strategy<Value = (MapSpec, u64)> {
    (2usize..=9, 0.0f64..=1.0, 0usize..=2, any::<u64>()).prop_map(|(n, t, k, seed)| {
        let (lo, hi) = MapSpec::edge_bounds(n);
        let m = lo + ((hi - lo) as f64 * t).round() as usize;
        (
            MapSpec {
                vertices: n,
                edges: m,
                revisits: k,
            },
            seed,
        )
    })
}

fn budget() -> impl Strategy<Value = Option<PrivacyBudget>> {
    prop_oneof![Just(None), (0.1f64..4.0).prop_map(|e| Some(PrivacyBudget::new(e).unwrap()))]
}

fn map((spec, seed): &(MapSpec, u64)) -> GeneratedMap {
    generate_map_seeded(*spec, *seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generated_maps_are_valid_and_reproducible(s in map_spec()) {
        let m = map(&s);
        prop_assert_eq!(m.network.edge_count(), s.0.edges);
        prop_assert!(m.network.is_connected());
        prop_assert!(validate(&m.network, &m.path).is_empty());
        prop_assert_eq!(m, map(&s));
    }

    #[test]
    fn preprocessing_removes_rings(s in map_spec(), eps_v in budget(), eps_e in budget(), seed: u64) {
        let m = map(&s);
        let mut rng = seeded(seed);
        let pn = preprocess_vertices(&m.network, &m.path, eps_v, &mut rng).unwrap();
        let path = pn.path_indices();
        let distinct: BTreeSet<usize> = path.iter().copied().collect();
        prop_assert_eq!(distinct.len(), path.len());
        prop_assert_eq!(path.len(), pn.vertex_count());
        prop_assert_eq!(pn.lineage().len(), pn.vertex_count());
        let real = pn.vertices().iter().filter(|v| pn.lineage().is_real(**v)).count();
        prop_assert_eq!(real, m.path.len());
        // Sub-vertices carry every edge of their base.
        for (a, b) in m.network.edges() {
            for (i, va) in pn.vertices().iter().enumerate().filter(|(_, v)| v.base as usize == a) {
                for (j, _) in pn.vertices().iter().enumerate().filter(|(_, v)| v.base as usize == b) {
                    prop_assert!(pn.has_edge(i, j), "{} lost an edge", va);
                }
            }
        }
        let r = preprocess_edges(&pn, eps_e, &mut rng).unwrap();
        prop_assert!(r.is_randomized());
        prop_assert!(r.is_symmetric());
        let sub = derive_subgraphs(&r).unwrap();
        let n = r.order();
        prop_assert_eq!(sub.g.len() + sub.h.len(), n * (n - 1) / 2);
        let g: BTreeSet<_> = sub.g.iter().collect();
        prop_assert!(sub.h.iter().all(|p| !g.contains(p)));
        // Real edges keep their meaning; only non-edges are noise.
        for w in path.windows(2) {
            prop_assert_eq!(r.get(w[0], w[1]), RelationMatrix::PATH);
        }
        for (a, b) in pn.edges() {
            let consecutive = path.windows(2).any(|w| (w[0], w[1]) == (a, b) || (w[1], w[0]) == (a, b));
            if !consecutive {
                prop_assert_eq!(r.get(a, b), RelationMatrix::NON_PATH);
            }
        }
    }

    #[test]
    fn exp_mechanism_prefers_quality(q in prop::collection::vec(-5.0f64..5.0, 1..8), eps in 0.05f64..5.0, sens in 0.1f64..3.0) {
        let b = PrivacyBudget::new(eps).unwrap();
        let p = selection_probabilities(&q, b, sens).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..q.len() {
            for j in 0..q.len() {
                if q[i] >= q[j] {
                    prop_assert!(p[i] >= p[j] * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn exp_mechanism_ratio_is_bounded(
        q in prop::collection::vec(-5.0f64..5.0, 1..8),
        shift in prop::collection::vec(-1.0f64..=1.0, 8),
        eps in 0.05f64..5.0,
    ) {
        // Neighbouring inputs move every quality by at most the sensitivity.
        let b = PrivacyBudget::new(eps).unwrap();
        let q2: Vec<f64> = q.iter().zip(&shift).map(|(a, d)| a + d).collect();
        let (p, p2) = (selection_probabilities(&q, b, 1.0).unwrap(), selection_probabilities(&q2, b, 1.0).unwrap());
        for (x, y) in p.iter().zip(&p2) {
            prop_assert!(x / y <= eps.exp() * (1.0 + 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn publications_obey_the_rules(s in map_spec(), eps_v in budget(), eps_e in budget(), split: bool, seed: u64) {
        let m = map(&s);
        let cfg = PublishConfig { eps_v, eps_e, splitting: split };
        let Ok(out) = publish(&m.network, &m.path, cfg, &mut seeded(seed)) else {
            prop_assert!(!split);
            return Ok(());
        };
        prop_assert_eq!(check_rules(&out.graph, &out.processed, &out.matrix), vec![]);
        let rec = reconstruct_path(&out.graph, &m.network);
        prop_assert_eq!(rec.edge_set, m.path.base_edges());
        if !out.stats.used_splitting() {
            prop_assert!(out.graph.layer_count() <= out.graph.vertices().len().div_ceil(2));
        }
        let again = publish(&m.network, &m.path, cfg, &mut seeded(seed)).unwrap();
        prop_assert_eq!(&again.graph, &out.graph);
        let text = write_published(&out.graph);
        prop_assert_eq!(read_published(&text).unwrap(), out.graph);
    }
}
