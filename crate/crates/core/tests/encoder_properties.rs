use graphdeepar_core::encoder::{encode_window, encoder_backward, EncoderConfig, EncoderParams};
use graphdeepar_core::graph::{Edge, NodeFeatureWindow, SimilarityGraph};
use graphdeepar_core::params::Pass;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SimilarityGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push(Edge { src: i, dst: j, similarity: 1.0 });
            }
        }
    }
    SimilarityGraph::from_edges(n, 0.5, edges).unwrap()
}

fn window(steps: usize, n: usize, width: usize, rng: &mut ChaCha8Rng) -> NodeFeatureWindow {
    NodeFeatureWindow {
        anchor: steps - 1,
        steps,
        n_nodes: n,
        width,
        values: (0..steps * n * width).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        mask: vec![true; steps * n * (width - 1)],
    }
}

fn params(width: usize, layers: Vec<usize>, bias: bool, rng: &mut ChaCha8Rng) -> EncoderParams {
    let mut cfg = EncoderConfig::new(width);
    cfg.layer_sizes = layers;
    cfg.bias = bias;
    cfg.dropout = 0.0;
    let mut p = EncoderParams::init(cfg, rng).unwrap();
    for v in &mut p.values {
        *v += rng.gen_range(-0.1..0.1);
    }
    p
}

/// Per-node loops: h'_i = leaky(mean over N(i) ∪ {i} of h_j W + b).
fn oracle(h: &[f64], adj: &[Vec<usize>], p: &EncoderParams) -> Vec<f64> {
    let n = adj.len();
    let mut h = h.to_vec();
    let mut fin = p.config.input_width;
    let mut off = 0;
    for &fout in &p.config.layer_sizes {
        let w = &p.values[off..off + fin * fout];
        off += fin * fout;
        let b = if p.config.bias {
            off += fout;
            p.values[off - fout..off].to_vec()
        } else {
            vec![0.0; fout]
        };
        let mut next = vec![0.0; n * fout];
        for i in 0..n {
            let mut members = adj[i].clone();
            members.push(i);
            for c in 0..fout {
                let mut acc = 0.0;
                for &j in &members {
                    let mut z = b[c];
                    for r in 0..fin {
                        z += h[j * fin + r] * w[r * fout + c];
                    }
                    acc += z;
                }
                let v = acc / members.len() as f64;
                next[i * fout + c] = if v > 0.0 { v } else { p.config.negative_slope * v };
            }
        }
        h = next;
        fin = fout;
    }
    h
}

fn adjacency(g: &SimilarityGraph) -> Vec<Vec<usize>> {
    (0..g.n_nodes()).map(|i| g.neighbors(i).to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_per_node_evaluation(seed in any::<u64>(), n in 1usize..=10, steps in 1usize..4, bias in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, 0.4, &mut rng);
        let f = window(steps, n, 3, &mut rng);
        let p = params(3, vec![5, 4], bias, &mut rng);
        let (emb, _) = encode_window(&f, &g, &p, &mut Pass::Eval).unwrap();
        for s in 0..steps {
            let want = oracle(f.step(s), &adjacency(&g), &p);
            for i in 0..n {
                for (a, b) in emb.column(i, s).iter().zip(&want[i * 4..(i + 1) * 4]) {
                    prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
                }
            }
        }
    }

    #[test]
    fn relabelling_nodes_relabels_embeddings(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, 0.5, &mut rng);
        let f = window(2, n, 2, &mut rng);
        let p = params(2, vec![6, 3], false, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let gp = g.permuted(&perm).unwrap();
        let mut fp = f.clone();
        for s in 0..2 {
            for (i, &pi) in perm.iter().enumerate() {
                let src = f.row(s, i).to_vec();
                let off = (s * n + pi) * 2;
                fp.values[off..off + 2].copy_from_slice(&src);
            }
        }
        let (a, _) = encode_window(&f, &g, &p, &mut Pass::Eval).unwrap();
        let (b, _) = encode_window(&fp, &gp, &p, &mut Pass::Eval).unwrap();
        for s in 0..2 {
            for (i, &pi) in perm.iter().enumerate() {
                for (x, y) in a.column(i, s).iter().zip(b.column(pi, s)) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_layers_see_only_two_hops(seed in any::<u64>(), n in 3usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, 0.3, &mut rng);
        let f = window(1, n, 2, &mut rng);
        let p = params(2, vec![4, 4], true, &mut rng);
        let (base, _) = encode_window(&f, &g, &p, &mut Pass::Eval).unwrap();
        let target = 0;
        let mut near = vec![false; n];
        near[target] = true;
        for &j in g.neighbors(target) {
            near[j] = true;
            for &k in g.neighbors(j) {
                near[k] = true;
            }
        }
        let mut f2 = f.clone();
        for i in (0..n).filter(|&i| !near[i]) {
            f2.values[i * 2] += 10.0;
        }
        let (moved, _) = encode_window(&f2, &g, &p, &mut Pass::Eval).unwrap();
        prop_assert_eq!(base.column(target, 0), moved.column(target, 0));
    }
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    diff / scale.max(1e-300)
}

#[test]
fn analytic_gradients_match_central_differences() {
    let configs: [(usize, usize, Vec<usize>, bool); 6] = [
        (4, 2, vec![16, 8], false),
        (7, 3, vec![5, 4], true),
        (1, 2, vec![3], false),
        (10, 1, vec![6, 5, 3], true),
        (6, 4, vec![8, 2], false),
        (9, 2, vec![4, 4], true),
    ];
    for (k, (n, width, layers, bias)) in configs.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let g = random_graph(n, 0.4, &mut rng);
        let f = window(3, n, width, &mut rng);
        let p = params(width, layers, bias, &mut rng);
        let (emb, cache) = encode_window(&f, &g, &p, &mut Pass::Eval).unwrap();
        let c: Vec<f64> = (0..emb.values.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &EncoderParams| {
            let (e, _) = encode_window(&f, &g, p, &mut Pass::Eval).unwrap();
            e.values.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut analytic = vec![0.0; p.values.len()];
        encoder_backward(&p, &cache, &c, &mut analytic);
        let h = 1e-6;
        let numeric: Vec<f64> = (0..p.values.len())
            .map(|i| {
                let mut q = p.clone();
                q.values[i] += h;
                let up = loss(&q);
                q.values[i] -= 2.0 * h;
                (up - loss(&q)) / (2.0 * h)
            })
            .collect();
        let e = rel_error(&analytic, &numeric);
        assert!(e < 1e-4, "config {k}: relative error {e}");
    }
}
