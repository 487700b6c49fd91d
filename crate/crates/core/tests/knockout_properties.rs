use std::sync::OnceLock;

use proptest::prelude::*;

use subtype_nets::data_io::{align, ExpressionMatrix, GeneGraph, SubtypeNetworkSet};
use subtype_nets::knockout::{
    knockout_expression, partition, rank_genes_in, shift_rate, BaselineMode, DistanceSpace, KnockoutConfig,
};
use subtype_nets::patient_m::{train_patient_m, PatientConfig, PatientModel};
use subtype_nets::synth::{generate, SynthConfig};

struct Fixture {
    x: ExpressionMatrix,
    model: PatientModel,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let t = generate(&SynthConfig {
            n_genes: 40,
            patients_per_subtype: vec![15; 3],
            planted_module_size: 6,
            backbone_edge_prob: 0.02,
            ..SynthConfig::default()
        })
        .unwrap();
        let (x, _) = align(&t.expression, &t.graph).unwrap();
        let cfg = PatientConfig {
            latent_dim: 4,
            slot_dim: 6,
            codebook_size: 8,
            max_epochs: 10,
            ..PatientConfig::default()
        };
        let (model, _) = train_patient_m(&x, &cfg, 0).unwrap();
        Fixture { x, model }
    })
}

fn gene_subset(x: &ExpressionMatrix, mask: u64) -> Vec<String> {
    x.gene_ids.iter().enumerate().filter(|(i, _)| mask >> (i % 64) & 1 == 1).map(|(_, g)| g.clone()).collect()
}

fn cfg(seed: u64, k: f64, space: DistanceSpace, mode: BaselineMode) -> KnockoutConfig {
    KnockoutConfig {
        iterations: 20,
        k,
        distance_space: space,
        baseline_mode: mode,
        seed,
        ..KnockoutConfig::default()
    }
}

fn space() -> impl Strategy<Value = DistanceSpace> {
    prop_oneof![Just(DistanceSpace::Latent), Just(DistanceSpace::Expression)]
}

fn mode() -> impl Strategy<Value = BaselineMode> {
    prop_oneof![Just(BaselineMode::Zero), Just(BaselineMode::LowestDecileMean)]
}

fn mean_row_distance(a: &ExpressionMatrix, b: &ExpressionMatrix) -> f64 {
    let n = a.n_patients();
    (0..n)
        .map(|r| {
            a.values.row(r).iter().zip(b.values.row(r)).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
        })
        .sum::<f64>()
        / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn empty_set_never_shifts(seed in any::<u64>(), k in 0.0f64..3.0, s in space(), m in mode()) {
        let f = fixture();
        let r = shift_rate(&f.model, &f.x.subset_for_label("S1"), &[], &cfg(seed, k, s, m), "p").unwrap();
        prop_assert_eq!(r.rate, 0.0);
        prop_assert!(r.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn rate_is_a_fraction_and_deterministic(mask in any::<u64>(), seed in any::<u64>(), k in 0.0f64..3.0, s in space(), m in mode()) {
        let f = fixture();
        let xy = f.x.subset_for_label("S2");
        let genes = gene_subset(&xy, mask);
        let c = cfg(seed, k, s, m);
        let a = shift_rate(&f.model, &xy, &genes, &c, "p").unwrap();
        prop_assert!((0.0..=1.0).contains(&a.rate));
        prop_assert_eq!(a.distances.len(), 20);
        prop_assert!(a.distances.iter().all(|&d| d >= 0.0));
        prop_assert_eq!(a, shift_rate(&f.model, &xy, &genes, &c, "p").unwrap());
    }

    #[test]
    fn larger_threshold_never_raises_rate(mask in any::<u64>(), seed in any::<u64>(), k in 0.0f64..2.0, dk in 0.0f64..2.0, s in space()) {
        let f = fixture();
        let xy = f.x.subset_for_label("S3");
        let genes = gene_subset(&xy, mask);
        let lo = shift_rate(&f.model, &xy, &genes, &cfg(seed, k, s, BaselineMode::LowestDecileMean), "p").unwrap();
        let hi = shift_rate(&f.model, &xy, &genes, &cfg(seed, k + dk, s, BaselineMode::LowestDecileMean), "p").unwrap();
        prop_assert!(hi.rate <= lo.rate);
    }

    #[test]
    fn zeroing_more_genes_moves_patients_further(a in any::<u64>(), b in any::<u64>()) {
        let x = &fixture().x;
        let small = gene_subset(x, a & b);
        let large = gene_subset(x, a);
        let d_small = mean_row_distance(x, &knockout_expression(x, &small, BaselineMode::Zero).unwrap());
        let d_large = mean_row_distance(x, &knockout_expression(x, &large, BaselineMode::Zero).unwrap());
        prop_assert!(d_small <= d_large + 1e-12);
    }

    #[test]
    fn ranking_is_sorted_and_partition_covers_it(masks in prop::collection::vec(any::<u64>(), 2..4)) {
        let x = &fixture().x;
        let ids = &x.gene_ids;
        let graphs = masks.iter().enumerate().map(|(y, m)| {
            let edges: Vec<(usize, usize)> = (0..ids.len().min(12)).filter(|i| m >> i & 1 == 1).map(|i| (i, (i + 1) % ids.len())).collect();
            let g = GeneGraph::from_edges(ids.clone(), edges).unwrap().prune_isolated().unwrap();
            (format!("S{y}"), g)
        }).collect();
        let nets = SubtypeNetworkSet::from_graphs(graphs);
        let ranked = rank_genes_in(&nets, ids).unwrap();
        prop_assert_eq!(ranked.len(), ids.len());
        for w in ranked.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
        let (high, low) = partition(&ranked).unwrap();
        prop_assert_eq!(high.len() + low.len(), ranked.len());
        prop_assert!(high.iter().all(|g| !low.contains(g)));
    }
}
