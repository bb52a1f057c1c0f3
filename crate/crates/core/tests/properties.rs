mod common;

use adascope::csbm::{signal_decay, CsbmSpec, EdgeMode, Subgroup};
use adascope::encoding::{smoothed_stack, smoothness, structural_encoding, EncodingConfig};
use adascope::graph::{
    node_homophily, pagerank, propagate, Graph, LabelVector, PageRankConfig, PropagationOperator,
};
use adascope::models::{hop_attention_forward, sgc_precompute};
use adascope::nn::{kl_divergence, softmax, DenseMatrix};
use adascope::pipeline::{oracle_accuracy, split_dataset};
use adascope::scope::{
    mask_uninformative, route_scores, scope_target, ScopeLabelMatrix, SplitConfig,
};
use proptest::prelude::*;

fn graph_strategy(max_n: usize, directed: Option<bool>) -> impl Strategy<Value = Graph> {
    (1..=max_n, any::<bool>()).prop_flat_map(move |(n, d)| {
        let directed = directed.unwrap_or(d);
        prop::collection::vec((0..n, 0..n), 0..(3 * n))
            .prop_map(move |e| Graph::build(&e, n, directed).unwrap())
    })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
}

fn permute_rows(m: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    let mut out = m.clone();
    for (v, &p) in perm.iter().enumerate() {
        out.row_mut(p).copy_from_slice(m.row(v));
    }
    out
}

fn dense_row_normalized(g: &Graph) -> DenseMatrix {
    let n = g.num_nodes();
    let mut a = DenseMatrix::zeros(n, n);
    for (src, dst) in g.arcs() {
        a.set(dst, src, 1.0);
    }
    DenseMatrix::from_fn(n, n, |i, j| {
        let d: f64 = a.row(i).iter().sum();
        if d > 0.0 {
            a.get(i, j) / d
        } else {
            0.0
        }
    })
}

proptest! {
    #[test]
    fn adjacency_is_canonical(g in graph_strategy(30, None)) {
        for v in 0..g.num_nodes() {
            let nb = g.neighbors(v);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!nb.contains(&v));
            if !g.is_directed() {
                for &u in nb {
                    prop_assert!(g.neighbors(u).contains(&v));
                }
            }
        }
    }

    #[test]
    fn symmetric_operator_is_symmetric_on_undirected(g in graph_strategy(50, Some(false))) {
        let m = PropagationOperator::symmetric_normalized(&g).matrix().to_dense();
        prop_assert_eq!(m.max_abs_diff(&m.transpose()), 0.0);
    }

    #[test]
    fn row_normalized_rows_sum_to_zero_or_one(g in graph_strategy(40, None)) {
        let op = PropagationOperator::row_normalized(&g);
        for v in 0..g.num_nodes() {
            let s = op.matrix().row_sum(v);
            if g.degree(v) == 0 {
                prop_assert_eq!(s, 0.0);
            } else {
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn homophily_in_unit_interval(g in graph_strategy(30, None), seed in any::<u64>()) {
        let mut rng = adascope::rng::RngStream::new(seed);
        let y = LabelVector::new((0..g.num_nodes()).map(|_| rng.below(3)).collect(), 3).unwrap();
        let h = node_homophily(&g, &y);
        prop_assert!(h.scores.iter().all(|&s| (0.0..=1.0).contains(&s)));
        for &v in &h.isolated {
            prop_assert_eq!(h.scores[v], 0.0);
        }
    }

    #[test]
    fn propagate_matches_dense_oracles((g, x) in graph_strategy(20, None).prop_flat_map(|g| {
        let n = g.num_nodes();
        (Just(g), matrix(n, 3))
    })) {
        let sym = propagate(&PropagationOperator::symmetric_normalized(&g), &x).unwrap();
        prop_assert!(sym.max_abs_diff(&common::dense_sym_operator(&g).matmul(&x).unwrap()) < 1e-12);
        let row = propagate(&PropagationOperator::row_normalized(&g), &x).unwrap();
        prop_assert!(row.max_abs_diff(&dense_row_normalized(&g).matmul(&x).unwrap()) < 1e-12);
    }

    #[test]
    fn pagerank_is_a_distribution_and_permutation_invariant(
        (g, perm) in graph_strategy(25, None).prop_flat_map(|g| {
            let n = g.num_nodes();
            (Just(g), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
        })
    ) {
        let cfg = PageRankConfig { tol: 1e-12, max_iter: 2000, ..PageRankConfig::default() };
        let pr = pagerank(&g, &cfg).unwrap();
        prop_assert!(pr.scores.iter().all(|&s| s >= 0.0));
        prop_assert!((pr.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let pp = pagerank(&g.permuted(&perm), &cfg).unwrap();
        for v in 0..g.num_nodes() {
            prop_assert!((pp.scores[perm[v]] - pr.scores[v]).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_normalized_and_shift_invariant(z in prop::collection::vec(-30.0f64..30.0, 1..10), c in -50.0f64..50.0) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_nonnegative_and_zero_on_diagonal(a in prop::collection::vec(-5.0f64..5.0, 2..8), b in prop::collection::vec(-5.0f64..5.0, 8)) {
        let p = softmax(&a);
        let q = softmax(&b[..a.len()]);
        prop_assert!(kl_divergence(&p, &q).unwrap().value >= -1e-15);
        prop_assert!(kl_divergence(&p, &p).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn hop_attention_weights_sum_to_one(
        hops in prop::collection::vec(matrix(6, 4), 1..5),
        score in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let (_, alpha) = hop_attention_forward(&hops, &score).unwrap();
        for v in 0..6 {
            prop_assert!((alpha.row(v).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn propagation_composes((g, x) in graph_strategy(15, None).prop_flat_map(|g| {
        let n = g.num_nodes();
        (Just(g), matrix(n, 2))
    }), a in 0usize..4, b in 0usize..4) {
        let op = PropagationOperator::symmetric_normalized(&g);
        let step = sgc_precompute(&op, &sgc_precompute(&op, &x, a).unwrap(), b).unwrap();
        prop_assert_eq!(step, sgc_precompute(&op, &x, a + b).unwrap());
    }

    #[test]
    fn split_partitions(n in 12usize..400, seed in any::<u64>()) {
        let s = split_dataset(n, [0.5, 0.25, 0.25], seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn oracle_curve_monotone_and_bounds_routing(
        (labels, preds, scores) in (2usize..40, 1usize..6).prop_flat_map(|(n, k)| (
            prop::collection::vec(0usize..3, n),
            prop::collection::vec(prop::collection::vec(0usize..3, n), k),
            prop::collection::vec(-1.0f64..1.0, n * k),
        )),
        c in -10.0f64..10.0,
    ) {
        let n = labels.len();
        let k = preds.len();
        let y = LabelVector::new(labels, 3).unwrap();
        let nodes: Vec<usize> = (0..n).collect();
        let curve = oracle_accuracy(&preds, &y, &nodes).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        let s = DenseMatrix::from_vec(n, k, scores).unwrap();
        let r = route_scores(&s, &preds, &nodes).unwrap();
        prop_assert!(r.accuracy(&y) <= curve[k - 1]);
        let mut shifted = s.clone();
        shifted.as_mut_slice().iter_mut().for_each(|v| *v += c);
        prop_assert_eq!(route_scores(&shifted, &preds, &nodes).unwrap().depths, r.depths);
    }

    #[test]
    fn target_is_uniform_within_bit_classes(bits in prop::collection::vec(any::<bool>(), 1..9)) {
        let t = scope_target(&bits);
        for i in 0..bits.len() {
            for j in 0..bits.len() {
                if bits[i] == bits[j] {
                    prop_assert_eq!(t[i], t[j]);
                }
            }
        }
    }

    #[test]
    fn masking_leaves_only_mixed_rows(rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 3), 1..30)) {
        let n = rows.len();
        let labels = ScopeLabelMatrix::from_rows(n, (0..n).collect(), rows).unwrap();
        let nodes: Vec<usize> = (0..n).collect();
        if let Ok(kept) = mask_uninformative(&nodes, &labels, &SplitConfig::default()) {
            for v in kept {
                prop_assert!(!labels.is_all_correct(v) && !labels.is_all_wrong(v));
            }
        } else {
            prop_assert!(nodes.iter().all(|&v| labels.is_all_correct(v) || labels.is_all_wrong(v)));
        }
    }

    #[test]
    fn signal_decay_never_grows(ps in prop::collection::vec((0.0f64..=1.0, 0.1f64..1.0), 1..4)) {
        let total: f64 = ps.iter().map(|p| p.1).sum();
        let spec = CsbmSpec {
            mu1: vec![1.0],
            mu2: vec![-1.0],
            subgroups: ps.iter().map(|&(p, w)| Subgroup { p, prior: w / total }).collect(),
            nodes_per_class: 10,
            avg_degree: 3.0,
            seed: 0,
            edges: EdgeMode::Symmetric,
        };
        let mut prev = f64::INFINITY;
        for l in 1..10 {
            let v = signal_decay(&spec, l).unwrap().abs();
            prop_assert!(v <= prev + 1e-15);
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn encoding_is_permutation_equivariant_and_deterministic(
        (n, seed, perm) in (3usize..25, any::<u64>()).prop_flat_map(|(n, seed)| {
            (Just(n), Just(seed), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
        })
    ) {
        let g = common::random_graph(n, 0.2, false, seed);
        let x = common::random_matrix(n, 3, seed ^ 1);
        let cfg = EncodingConfig {
            pagerank: PageRankConfig { tol: 1e-13, max_iter: 5000, ..PageRankConfig::default() },
            ..EncodingConfig::default()
        };
        let a = structural_encoding(&g, &x, 3, &cfg).unwrap();
        prop_assert_eq!(&structural_encoding(&g, &x, 3, &cfg).unwrap(), &a);
        let b = structural_encoding(&g.permuted(&perm), &permute_rows(&x, &perm), 3, &cfg).unwrap();
        prop_assert!(permute_rows(&a.raw, &perm).max_abs_diff(&b.raw) < 1e-9);
    }

    #[test]
    fn smoothed_distance_vanishes_on_well_connected_graphs(n in 5usize..25, seed in any::<u64>()) {
        let g = common::connected_graph(n, 2 * n, seed);
        let x = common::random_matrix(n, 2, seed);
        let (_, tilde) = smoothness(&smoothed_stack(&g, &x, 200).unwrap());
        let col_max = |l: usize| (0..n).map(|v| tilde.get(v, l)).fold(0.0, f64::max);
        prop_assert!(col_max(200) < col_max(1));
        prop_assert!(col_max(200) < 1e-4 * col_max(0));
    }
}
