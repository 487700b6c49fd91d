use std::collections::BTreeMap;

use proptest::prelude::*;

use subtype_nets::data_io::{
    load_expression, load_graph_with_scores, save_expression, save_graph, ExpressionMatrix, GeneGraph,
    SubtypeNetworkSet,
};
use subtype_nets::numerics::Matrix;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1e-6f64..1e-6, Just(0.0), any::<f64>().prop_filter("finite", |v| v.is_finite())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn expression_round_trips_bit_identically(
        (rows, cols, values) in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(finite(), r * c))),
        labeled in any::<bool>(),
    ) {
        let x = ExpressionMatrix::new(
            (0..rows).map(|i| format!("P{i}")).collect(),
            (0..cols).map(|j| format!("G{j}")).collect(),
            Matrix::new(rows, cols, values).unwrap(),
            labeled.then(|| (0..rows).map(|i| format!("S{}", i % 2)).collect()),
        ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        save_expression(&x, &path).unwrap();
        let back = load_expression(&path).unwrap();
        prop_assert_eq!(&back.patient_ids, &x.patient_ids);
        prop_assert_eq!(&back.labels, &x.labels);
        let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.values), bits(&x.values));
    }

    #[test]
    fn scored_networks_round_trip(mask in 1u64.., scale in 0.01f64..1.0) {
        let ids: Vec<String> = (0..8).map(|i| format!("g{i}")).collect();
        let edges: Vec<(usize, usize)> = (0..28usize)
            .filter(|b| mask >> b & 1 == 1)
            .map(|b| {
                let (mut i, mut k) = (0, b);
                while k >= 7 - i { k -= 7 - i; i += 1; }
                (i, i + 1 + k)
            })
            .collect();
        let g = GeneGraph::from_edges(ids, edges).unwrap().prune_isolated().unwrap();
        let scores: Vec<f64> = (0..g.n_edges()).map(|e| scale / (e + 1) as f64).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.edges.tsv");
        save_graph(&g, Some(&scores), &path).unwrap();
        let (back, back_scores) = load_graph_with_scores(&path).unwrap();
        prop_assert_eq!(back.named_edges(), g.named_edges());
        let by_edge = |g: &GeneGraph, s: &[f64]| -> BTreeMap<(String, String), u64> {
            g.edges().iter().zip(s).map(|(&(a, b), v)| {
                let (a, b) = (g.gene_ids()[a].clone(), g.gene_ids()[b].clone());
                (if a < b { (a, b) } else { (b, a) }, v.to_bits())
            }).collect()
        };
        prop_assert_eq!(by_edge(&back, &back_scores), by_edge(&g, &scores));

        let set = SubtypeNetworkSet::from_graphs([("A".to_string(), g.clone())].into());
        set.save(dir.path().join("set"), "").unwrap();
        let again = SubtypeNetworkSet::load(dir.path().join("set"), "").unwrap();
        prop_assert_eq!(again.edge_counts(), set.edge_counts());
    }
}
