use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::data_io::GeneGraph;
use crate::error::{Error, Result};

/// Adjacency of `g` re-indexed onto `universe` (genes absent from `g` stay isolated).
fn embed(g: &GeneGraph, universe: &BTreeMap<&str, usize>) -> DMatrix<f64> {
    let n = universe.len();
    let mut a = DMatrix::zeros(n, n);
    let ids = g.gene_ids();
    for &(x, y) in g.edges() {
        let (i, j) = (universe[ids[x].as_str()], universe[ids[y].as_str()]);
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    a
}

/// `[I + ε²D − εA]⁻¹`.
pub fn influence_matrix(a: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut m = -eps * a;
    for i in 0..n {
        let d: f64 = a.row(i).sum();
        m[(i, i)] += 1.0 + eps * eps * d;
    }
    m.try_inverse()
        .ok_or_else(|| Error::Numeric("influence system is singular".into()))
}

/// DeltaCon similarity `1 / (1 + rootED)` over the union of both node sets,
/// with `ε = 1 / (1 + max degree)` taken over both graphs.
pub fn dcs(g1: &GeneGraph, g2: &GeneGraph) -> Result<f64> {
    let mut names: Vec<&str> = g1
        .gene_ids()
        .iter()
        .chain(g2.gene_ids())
        .map(String::as_str)
        .collect();
    names.sort_unstable();
    names.dedup();
    if names.is_empty() {
        return Ok(1.0);
    }
    let universe: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let a1 = embed(g1, &universe);
    let a2 = embed(g2, &universe);
    let max_deg = g1
        .degrees()
        .into_iter()
        .chain(g2.degrees())
        .max()
        .unwrap_or(0);
    let eps = 1.0 / (1.0 + max_deg as f64);
    let s1 = influence_matrix(&a1, eps)?;
    let s2 = influence_matrix(&a2, eps)?;
    let root_ed = s1
        .iter()
        .zip(s2.iter())
        .map(|(&x, &y)| (x.max(0.0).sqrt() - y.max(0.0).sqrt()).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(1.0 / (1.0 + root_ed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_node_fixture_matches_direct_inverse() {
        // Path a-b-c-d against the same path plus a-d (a 4-cycle).
        let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let p = GeneGraph::from_edges(ids.clone(), [(0, 1), (1, 2), (2, 3)]).unwrap();
        let c = GeneGraph::from_edges(ids, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let eps = 1.0 / 3.0;
        // Hand-built systems solved column by column with Gaussian elimination.
        let solve = |adj: [[f64; 4]; 4]| -> [[f64; 4]; 4] {
            let mut m = [[0.0; 8]; 4];
            for i in 0..4 {
                let d: f64 = adj[i].iter().sum();
                for j in 0..4 {
                    m[i][j] = if i == j { 1.0 + eps * eps * d } else { 0.0 } - eps * adj[i][j];
                }
                m[i][4 + i] = 1.0;
            }
            for col in 0..4 {
                let piv = m[col][col];
                for v in m[col].iter_mut() {
                    *v /= piv;
                }
                for r in 0..4 {
                    if r != col {
                        let f = m[r][col];
                        let row = m[col];
                        for (x, y) in m[r].iter_mut().zip(row) {
                            *x -= f * y;
                        }
                    }
                }
            }
            let mut out = [[0.0; 4]; 4];
            for i in 0..4 {
                out[i].copy_from_slice(&m[i][4..]);
            }
            out
        };
        let sp = solve([[0., 1., 0., 0.], [1., 0., 1., 0.], [0., 1., 0., 1.], [0., 0., 1., 0.]]);
        let sc = solve([[0., 1., 0., 1.], [1., 0., 1., 0.], [0., 1., 0., 1.], [1., 0., 1., 0.]]);
        let mut d = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                d += (sp[i][j].sqrt() - sc[i][j].sqrt()).powi(2);
            }
        }
        let want = 1.0 / (1.0 + f64::sqrt(d));
        assert!((dcs(&p, &c).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn identical_graphs_score_one() {
        let ids: Vec<String> = (0..5).map(|i| format!("g{i}")).collect();
        let g = GeneGraph::from_edges(ids, [(0, 1), (1, 2), (3, 4)]).unwrap();
        assert!((dcs(&g, &g).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_nodes_are_isolated() {
        // g2 lacks node c entirely; the union treats it as isolated in g2.
        let g1 = GeneGraph::from_named_edges(&[("a", "b"), ("b", "c")]).unwrap();
        let g2 = GeneGraph::from_named_edges(&[("a", "b")]).unwrap();
        let s = dcs(&g1, &g2).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert_eq!(s, dcs(&g2, &g1).unwrap());
    }
}
