//! File ingestion, preprocessing and identifier alignment for expression
//! matrices, knowledge graphs and function annotations.

mod annotation;
mod expression;
mod graph;
mod networks;
mod scaling;
mod split;

use std::collections::BTreeSet;

use log::info;

pub use annotation::{load_annotations, save_annotations, AnnotationMap};
pub use expression::{
    filter_genes, load_expression, log_transform, save_expression, ExpressionMatrix,
};
pub use graph::{
    load_graph, load_graph_with_scores, load_graph_with_stats, save_graph, GeneGraph, GraphLoadStats,
};
pub use networks::{precision_at_k, ScoredNetwork, SubtypeNetworkSet};
pub use scaling::GeneScaler;
pub use split::{split_edges, EdgeSplit, PairSet};

use crate::error::{Error, Result};

/// Restricts both inputs to their shared genes in lexicographic order,
/// re-prunes nodes the restriction left isolated, and drops those genes from
/// the expression matrix as well.
pub fn align(x: &ExpressionMatrix, g: &GeneGraph) -> Result<(ExpressionMatrix, GeneGraph)> {
    let expr_genes: BTreeSet<&str> = x.gene_ids.iter().map(String::as_str).collect();
    let shared: Vec<String> = g
        .gene_ids()
        .iter()
        .filter(|id| expr_genes.contains(id.as_str()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if shared.is_empty() {
        let sample = |ids: &mut dyn Iterator<Item = &String>| {
            ids.take(5).cloned().collect::<Vec<_>>().join(", ")
        };
        return Err(Error::Alignment(format!(
            "no shared gene ids; expression has [{}], graph has [{}]",
            sample(&mut x.gene_ids.iter()),
            sample(&mut g.gene_ids().iter())
        )));
    }
    let graph = g.induced_by_names(&shared)?.prune_isolated()?;
    if graph.n_nodes() == 0 {
        return Err(Error::Alignment(
            "no edges remain among the shared genes".into(),
        ));
    }
    let cols: Vec<usize> = graph
        .gene_ids()
        .iter()
        .map(|id| x.gene_index(id).expect("shared gene present in expression"))
        .collect();
    let expr = x.select_genes(&cols);
    info!(
        "align: {} shared genes, {} after pruning isolated nodes, {} edges",
        shared.len(),
        graph.n_nodes(),
        graph.n_edges()
    );
    Ok((expr, graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn expr(genes: &[&str]) -> ExpressionMatrix {
        ExpressionMatrix::new(
            vec!["p1".into(), "p2".into()],
            genes.iter().map(|s| s.to_string()).collect(),
            Matrix::new(
                2,
                genes.len(),
                (0..2 * genes.len()).map(|v| v as f64).collect(),
            )
            .unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn shared_subset() {
        let x = expr(&["c", "a", "b"]);
        let g = GeneGraph::from_named_edges(&[("b", "c"), ("c", "d")]).unwrap();
        let (x2, g2) = align(&x, &g).unwrap();
        assert_eq!(x2.gene_ids, vec!["b", "c"]);
        assert_eq!(g2.gene_ids(), &["b", "c"]);
        assert_eq!(x2.values.column_values(0), x.values.column_values(2));
    }

    #[test]
    fn restriction_prunes_isolated() {
        let x = expr(&["a", "b", "c", "d"]);
        let g = GeneGraph::from_named_edges(&[("a", "b"), ("d", "z")]).unwrap();
        let (x2, g2) = align(&x, &g).unwrap();
        assert_eq!(g2.gene_ids(), &["a", "b"]);
        assert_eq!(x2.gene_ids, vec!["a", "b"]);
    }

    #[test]
    fn identical_sets_only_reorder() {
        let x = expr(&["b", "a"]);
        let g = GeneGraph::from_named_edges(&[("a", "b")]).unwrap();
        let (x2, g2) = align(&x, &g).unwrap();
        assert_eq!(x2.gene_ids, vec!["a", "b"]);
        assert_eq!(g2, g);
    }

    #[test]
    fn disjoint_sets_fail() {
        let err = align(
            &expr(&["a"]),
            &GeneGraph::from_named_edges(&[("x", "y")]).unwrap(),
        )
        .unwrap_err();
        match err {
            Error::Alignment(msg) => assert!(msg.contains('a') && msg.contains('x')),
            e => panic!("{e:?}"),
        }
    }
}
