//! Lossless round-trips for the JSONL graph format and the checkpoint
//! format, property-tested over random instances.

use dgdm_cli::checkpoint::{self, Checkpoint};
use dgdm_cli::jsonl::{read_jsonl, write_jsonl};
use dgdm_core::denoiser::{init_model, ModelDims};
use dgdm_core::graph::Graph;
use dgdm_core::sampling::SizeDistribution;
use dgdm_core::schedule::{LimitDistributions, NoiseSchedule};
use proptest::prelude::*;

fn arb_graph(max_n: usize, a: usize, d: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n)
        .prop_flat_map(move |n| {
            let nodes = prop::collection::vec(0..a, n);
            let pairs = prop::collection::vec(0..d, n * (n - 1) / 2);
            (Just(n), nodes, pairs)
        })
        .prop_map(move |(n, nodes, pairs)| {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if pairs[k] != 0 {
                        edges.push((i, j, pairs[k]));
                    }
                    k += 1;
                }
            }
            Graph::from_edges(a, d, nodes, &edges).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn jsonl_round_trip_is_lossless(graphs in prop::collection::vec(arb_graph(9, 4, 4), 1..4)) {
        let text = write_jsonl(&graphs);
        let back = read_jsonl(&text, 4, 4).unwrap();
        prop_assert_eq!(back, graphs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoint_round_trip_is_bitwise(seed in any::<u64>(), t_steps in 2usize..20) {
        let dims = ModelDims { a: 4, d: 4, layers: 1, h_node: 8, h_edge: 6, heads: 2, max_n: 9 };
        let ckpt = Checkpoint {
            config_text: format!("seed = {seed}\n"),
            limits: LimitDistributions::new(
                vec![0.1, 0.2, 0.3, 0.4],
                vec![0.7, 0.1, 0.1, 0.1],
                vec![0.4, 0.3, 0.2, 0.1],
                vec![0.25; 4],
                0.5,
            )
            .unwrap(),
            schedule: NoiseSchedule::cosine(t_steps).unwrap(),
            size_dist: SizeDistribution::from_parts(vec![3, 7], vec![0.5, 0.5]).unwrap(),
            model: init_model(dims, seed).unwrap(),
        };
        let bytes = checkpoint::save(&ckpt);
        let back = checkpoint::load(&bytes).unwrap();
        prop_assert_eq!(&back, &ckpt);
        prop_assert_eq!(checkpoint::save(&back), bytes);
    }
}
