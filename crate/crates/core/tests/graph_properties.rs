use std::collections::BTreeSet;

use graphdeepar_core::graph::{build_graph, pairwise_similarity, sample_neighborhood, SimilarityGraph};
use proptest::prelude::*;

fn features(n_max: usize, m_max: usize) -> impl Strategy<Value = (Vec<f64>, usize)> {
    (2..=n_max, 1..=m_max).prop_flat_map(|(n, m)| (proptest::collection::vec(0.0f64..1.0, n * m), Just(m)))
}

/// All pairs, no chunking, no shared code with the library.
fn brute_force(x: &[f64], m: usize, tau: f64) -> BTreeSet<(usize, usize)> {
    let n = x.len() / m;
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&x[i * m..(i + 1) * m], &x[j * m..(j + 1) * m]);
            let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = if na == 0.0 || nb == 0.0 { 0.0 } else { (dot / (na * nb)).clamp(-1.0, 1.0) };
            if s >= tau {
                out.insert((i, j));
            }
        }
    }
    out
}

fn edge_set(g: &SimilarityGraph) -> BTreeSet<(usize, usize)> {
    g.edges().iter().map(|e| (e.src, e.dst)).collect()
}

fn graph(x: &[f64], m: usize, chunk: usize, tau: f64) -> SimilarityGraph {
    build_graph(x.len() / m, pairwise_similarity(x, m, chunk).unwrap(), tau).unwrap()
}

proptest! {
    #[test]
    fn chunking_does_not_change_the_edge_set((x, m) in features(40, 6), chunk in 1usize..50, tau in 0.3f64..0.99) {
        let g = graph(&x, m, chunk, tau);
        prop_assert_eq!(&g, &graph(&x, m, x.len() / m, tau));
        prop_assert_eq!(edge_set(&g), brute_force(&x, m, tau));
    }

    #[test]
    fn raising_the_threshold_only_removes_edges((x, m) in features(30, 5), lo in 0.0f64..0.9, step in 0.0f64..0.1) {
        let a = edge_set(&graph(&x, m, 7, lo));
        let b = edge_set(&graph(&x, m, 7, lo + step));
        prop_assert!(b.is_subset(&a));
    }

    #[test]
    fn adjacency_is_symmetric_and_sorted((x, m) in features(30, 5), tau in 0.5f64..0.95) {
        let g = graph(&x, m, 4, tau);
        let mut last = None;
        for e in g.edges() {
            prop_assert!(e.src < e.dst);
            prop_assert!(last < Some((e.src, e.dst)));
            last = Some((e.src, e.dst));
        }
        for i in 0..g.n_nodes() {
            for &j in g.neighbors(i) {
                prop_assert!(g.neighbors(j).contains(&i));
            }
        }
    }

    #[test]
    fn sampling_caps_incoming_sets((x, m) in features(30, 3), cap in 0usize..6, seed in any::<u64>()) {
        let g = graph(&x, m, 5, 0.5);
        let s = sample_neighborhood(&g, cap, seed);
        prop_assert_eq!(&s, &sample_neighborhood(&g, cap, seed));
        prop_assert_eq!(s.edges(), g.edges());
        for i in 0..g.n_nodes() {
            prop_assert_eq!(s.degree(i), g.degree(i).min(cap));
            prop_assert_eq!(s.stored_degree(i), g.stored_degree(i));
            prop_assert!(s.neighbors(i).iter().all(|j| g.neighbors(i).contains(j)));
        }
    }
}
