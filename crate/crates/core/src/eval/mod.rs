//! Network comparison metrics: graph edit distance, DeltaCon similarity,
//! coefficient of degree variation, min-max normalization and the count of
//! differing annotation terms (#EBF).

mod dcs;
mod ged;
mod report;

use std::collections::BTreeSet;

use log::warn;

pub use dcs::{dcs, influence_matrix};
pub use ged::{ged, ged_anchored, ged_exact, pairwise_ged, pairwise_values, GedMode, EXACT_MAX_NODES};
pub use report::{MethodRow, MetricSummary, MetricsAccumulator, MetricsReport, RunMetrics};

use crate::data_io::{AnnotationMap, GeneGraph};
use crate::error::{Error, Result};

/// Mean pairwise DeltaCon similarity.
pub fn pairwise_dcs(graphs: &[&GeneGraph]) -> Result<f64> {
    let v = pairwise_values(graphs, dcs)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Coefficient of degree variation:
/// `sqrt(mean((k_i − k̄)²)) / (k̄·√N) · (1/k̄)` over the graph's `N` nodes.
pub fn cdv(g: &GeneGraph) -> Result<f64> {
    let deg = g.degrees();
    let n = deg.len();
    if n == 0 {
        return Err(Error::UndefinedMetric("CDV of a graph without nodes".into()));
    }
    let nf = n as f64;
    let mean = deg.iter().sum::<usize>() as f64 / nf;
    if mean == 0.0 {
        return Err(Error::UndefinedMetric("CDV of a graph without edges".into()));
    }
    let var = deg.iter().map(|&k| (k as f64 - mean).powi(2)).sum::<f64>() / nf;
    Ok(var.sqrt() / (mean * nf.sqrt()) / mean)
}

/// `(v − min) / (max − min)`; a constant input maps to zeros with a warning.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Vec::new();
    }
    if hi - lo <= 0.0 {
        warn!("min-max normalization of {} equal values; mapping all to 0", values.len());
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Union of the annotation terms of a network's genes.
pub fn go_terms(g: &GeneGraph, ann: &AnnotationMap) -> BTreeSet<String> {
    g.gene_ids()
        .iter()
        .filter_map(|gene| ann.terms_of(gene))
        .flat_map(|t| t.iter().cloned())
        .collect()
}

/// `|GO(G1) Δ GO(G2)|`.
pub fn ebf_pair(g1: &GeneGraph, g2: &GeneGraph, ann: &AnnotationMap) -> Result<usize> {
    ebf_count(&[g1, g2], ann)
}

/// For two networks the symmetric difference of their term sets; for more,
/// the number of terms present in some but not all networks.
pub fn ebf_count(graphs: &[&GeneGraph], ann: &AnnotationMap) -> Result<usize> {
    if graphs.len() < 2 {
        return Err(Error::Validation("#EBF needs at least two networks".into()));
    }
    let annotated = graphs
        .iter()
        .flat_map(|g| g.gene_ids())
        .any(|gene| ann.terms_of(gene).is_some());
    if !annotated {
        return Err(Error::UndefinedMetric(
            "no network gene has an annotation".into(),
        ));
    }
    let sets: Vec<BTreeSet<String>> = graphs.iter().map(|g| go_terms(g, ann)).collect();
    let union: BTreeSet<&String> = sets.iter().flatten().collect();
    let common = union
        .iter()
        .filter(|t| sets.iter().all(|s| s.contains(**t)))
        .count();
    Ok(union.len() - common)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: usize) -> GeneGraph {
        let ids: Vec<String> = (0..=leaves).map(|i| format!("n{i}")).collect();
        GeneGraph::from_edges(ids, (1..=leaves).map(|l| (0, l))).unwrap()
    }

    #[test]
    fn star_cdv_matches_formula() {
        let want = 0.75f64.sqrt() / (1.5 * 2.0) / 1.5;
        assert!((cdv(&star(3)).unwrap() - want).abs() < 1e-15);
        assert!((cdv(&star(3)).unwrap() - 0.19245).abs() < 1e-5);
    }

    #[test]
    fn regular_cdv_is_zero() {
        let ids: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        let cycle = GeneGraph::from_edges(ids, (0..6).map(|i| (i, (i + 1) % 6))).unwrap();
        assert_eq!(cdv(&cycle).unwrap(), 0.0);
    }

    #[test]
    fn empty_graph_cdv_is_undefined() {
        let g = GeneGraph::empty(vec!["a".into()]).unwrap();
        assert!(matches!(cdv(&g), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[0.0, 1.0]), vec![0.0, 1.0]);
        assert_eq!(minmax_normalize(&[3.0, 3.0]), vec![0.0, 0.0]);
    }

    fn annotated(pairs: &[(&str, &str)]) -> AnnotationMap {
        pairs.iter().map(|&(g, t)| (g.to_string(), t.to_string())).collect()
    }

    #[test]
    fn ebf_worked_example() {
        let g1 = GeneGraph::from_named_edges(&[("x", "y")]).unwrap();
        let g2 = GeneGraph::from_named_edges(&[("u", "v")]).unwrap();
        let ann = annotated(&[("x", "A"), ("x", "B"), ("y", "C"), ("u", "A"), ("v", "D"), ("v", "E")]);
        assert_eq!(ebf_pair(&g1, &g2, &ann).unwrap(), 4);
        assert_eq!(ebf_pair(&g2, &g1, &ann).unwrap(), 4);
        assert_eq!(ebf_pair(&g1, &g1, &ann).unwrap(), 0);
    }

    #[test]
    fn ebf_disjoint_and_multi() {
        let g1 = GeneGraph::from_named_edges(&[("x", "y")]).unwrap();
        let g2 = GeneGraph::from_named_edges(&[("u", "v")]).unwrap();
        let g3 = GeneGraph::from_named_edges(&[("x", "v")]).unwrap();
        let ann = annotated(&[("x", "A"), ("x", "B"), ("y", "C"), ("u", "D"), ("v", "E")]);
        assert_eq!(ebf_pair(&g1, &g2, &ann).unwrap(), 5);
        // Terms: g1 {A,B,C}, g2 {D,E}, g3 {A,B,E}: nothing is shared by all three.
        assert_eq!(ebf_count(&[&g1, &g2, &g3], &ann).unwrap(), 5);
        let none = AnnotationMap::new();
        assert!(matches!(ebf_pair(&g1, &g2, &none), Err(Error::UndefinedMetric(_))));
    }
}
