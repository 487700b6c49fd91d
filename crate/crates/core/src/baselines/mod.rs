//! Co-expression network baselines, each run per subtype: hard-thresholded
//! Pearson correlation, weighted topological overlap, and a mutual-information
//! network with data-processing-inequality pruning.

mod mi;

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

pub use mi::{aracne_scores, mutual_information, mutual_information_matrix, BinnedGenes};

use crate::data_io::{ExpressionMatrix, GeneGraph, ScoredNetwork, SubtypeNetworkSet};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Pearson,
    Wto,
    Aracne,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 3] = [Self::Pearson, Self::Wto, Self::Aracne];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pearson => "pearson",
            Self::Wto => "wto",
            Self::Aracne => "aracne",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub corr_threshold: f64,
    pub wto_threshold: f64,
    pub mi_bins: usize,
    pub dpi_tolerance: f64,
    /// Keep the `k` strongest pairs instead of thresholding.
    pub top_k_edges: Option<usize>,
    pub permutations: usize,
    pub null_quantile: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: BaselineMethod::Pearson,
            corr_threshold: 0.6,
            wto_threshold: 0.5,
            mi_bins: 10,
            dpi_tolerance: 0.05,
            top_k_edges: None,
            permutations: 100,
            null_quantile: 0.95,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn for_method(method: BaselineMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("corr_threshold", self.corr_threshold),
            ("wto_threshold", self.wto_threshold),
            ("dpi_tolerance", self.dpi_tolerance),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0,1]")));
            }
        }
        if self.mi_bins < 2 {
            return Err(Error::Config(format!("mi_bins {} < 2", self.mi_bins)));
        }
        if self.permutations == 0 {
            return Err(Error::Config("permutations must be positive".into()));
        }
        if !(self.null_quantile > 0.0 && self.null_quantile < 1.0) {
            return Err(Error::Config(format!(
                "null_quantile {} outside (0,1)",
                self.null_quantile
            )));
        }
        Ok(())
    }
}

/// Pearson correlation matrix of the columns of `x` (zero diagonal). Constant
/// columns get zero correlation with everything and are flagged.
pub fn pearson_matrix(x: &Matrix) -> (Matrix, Vec<bool>) {
    let (m, n) = x.shape();
    let mut centered = Matrix::zeros(m, n);
    let mut constant = vec![false; n];
    for c in 0..n {
        let col = x.column_values(c);
        let mean = col.iter().sum::<f64>() / m as f64;
        let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        if ss <= 1e-24 * (1.0 + mean * mean) * m as f64 {
            constant[c] = true;
            continue;
        }
        let norm = ss.sqrt();
        for (r, v) in col.iter().enumerate() {
            centered.set(r, c, (v - mean) / norm);
        }
    }
    let mut r = centered.t_matmul(&centered).expect("square product");
    for i in 0..n {
        r.set(i, i, 0.0);
        for j in 0..n {
            let v = r.get(i, j).clamp(-1.0, 1.0);
            r.set(i, j, v);
        }
    }
    (r, constant)
}

/// Weighted topological overlap of a signed adjacency with zero diagonal.
pub fn wto_matrix(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension(format!("adjacency {}x{} not square", n, a.cols())));
    }
    let k: Vec<f64> = (0..n).map(|i| a.row(i).iter().map(|v| v.abs()).sum()).collect();
    let shared = a.matmul(a)?;
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let aij = a.get(i, j);
            let denom = k[i].min(k[j]) + 1.0 - aij.abs();
            w.set(i, j, if denom > 0.0 { (shared.get(i, j) + aij) / denom } else { 0.0 });
        }
    }
    Ok(w)
}

fn check_subset(x: &ExpressionMatrix) -> Result<()> {
    if x.n_patients() < 3 {
        return Err(Error::Validation(format!(
            "baseline networks need at least 3 patients, got {}",
            x.n_patients()
        )));
    }
    Ok(())
}

fn exclude_constant(constant: &[bool], genes: &[String]) -> Result<()> {
    let n_const = constant.iter().filter(|&&c| c).count();
    if n_const == constant.len() {
        return Err(Error::EmptyResult("every gene is constant".into()));
    }
    if n_const > 0 {
        let names: Vec<&str> = constant
            .iter()
            .zip(genes)
            .filter(|(c, _)| **c)
            .map(|(_, g)| g.as_str())
            .take(5)
            .collect();
        warn!("{n_const} constant genes excluded from the baseline network (e.g. {names:?})");
    }
    Ok(())
}

/// Keeps pairs with `|score| >= threshold`, or the `top_k` largest `|score|`
/// when set (ties broken by pair order). Isolated nodes are pruned.
fn select_edges(
    scores: &Matrix,
    genes: &[String],
    usable: &[bool],
    threshold: f64,
    top_k: Option<usize>,
) -> Result<ScoredNetwork> {
    let n = genes.len();
    let mut cand: Vec<((usize, usize), f64)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if usable[i] && usable[j] {
                cand.push(((i, j), scores.get(i, j)));
            }
        }
    }
    let kept: Vec<((usize, usize), f64)> = match top_k {
        Some(k) => {
            cand.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
            cand.truncate(k);
            cand
        }
        None => cand.into_iter().filter(|(_, s)| s.abs() >= threshold).collect(),
    };
    scored_network(genes, &kept)
}

pub(crate) fn scored_network(genes: &[String], kept: &[((usize, usize), f64)]) -> Result<ScoredNetwork> {
    let full = GeneGraph::from_edges(genes.to_vec(), kept.iter().map(|&(p, _)| p))?;
    let by_name: BTreeMap<(&str, &str), f64> = kept
        .iter()
        .map(|&((i, j), s)| ((genes[i].as_str(), genes[j].as_str()), s.abs()))
        .collect();
    let g = full.prune_isolated()?;
    let ids = g.gene_ids();
    let scores = g
        .edges()
        .iter()
        .map(|&(a, b)| by_name[&(ids[a].as_str(), ids[b].as_str())])
        .collect();
    ScoredNetwork::new(g, scores)
}

pub fn pearson_network(x: &ExpressionMatrix, cfg: &BaselineConfig) -> Result<ScoredNetwork> {
    cfg.validate()?;
    check_subset(x)?;
    let (r, constant) = pearson_matrix(&x.values);
    exclude_constant(&constant, &x.gene_ids)?;
    let usable: Vec<bool> = constant.iter().map(|c| !c).collect();
    select_edges(&r, &x.gene_ids, &usable, cfg.corr_threshold, cfg.top_k_edges)
}

pub fn wto_network(x: &ExpressionMatrix, cfg: &BaselineConfig) -> Result<ScoredNetwork> {
    cfg.validate()?;
    check_subset(x)?;
    let (r, constant) = pearson_matrix(&x.values);
    exclude_constant(&constant, &x.gene_ids)?;
    let w = wto_matrix(&r)?;
    let usable: Vec<bool> = constant.iter().map(|c| !c).collect();
    select_edges(&w, &x.gene_ids, &usable, cfg.wto_threshold, cfg.top_k_edges)
}

pub fn aracne_network(x: &ExpressionMatrix, cfg: &BaselineConfig) -> Result<ScoredNetwork> {
    cfg.validate()?;
    check_subset(x)?;
    let (_, constant) = pearson_matrix(&x.values);
    exclude_constant(&constant, &x.gene_ids)?;
    let kept = aracne_scores(&x.values, &constant, cfg)?;
    scored_network(&x.gene_ids, &kept)
}

pub fn baseline_network(x: &ExpressionMatrix, cfg: &BaselineConfig) -> Result<ScoredNetwork> {
    match cfg.method {
        BaselineMethod::Pearson => pearson_network(x, cfg),
        BaselineMethod::Wto => wto_network(x, cfg),
        BaselineMethod::Aracne => aracne_network(x, cfg),
    }
}

/// Runs the baseline separately on every labeled subtype.
pub fn baseline_networks(x: &ExpressionMatrix, cfg: &BaselineConfig) -> Result<SubtypeNetworkSet> {
    let subtypes = x.subtypes();
    if subtypes.is_empty() {
        return Err(Error::Validation("baselines need subtype labels".into()));
    }
    let mut networks = BTreeMap::new();
    for y in subtypes {
        let net = baseline_network(&x.subset_for_label(&y), cfg)?;
        if net.graph.n_edges() == 0 {
            warn!("{} baseline: subtype {y} network is empty", cfg.method.name());
        }
        networks.insert(y, net);
    }
    Ok(SubtypeNetworkSet { networks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;
    use rand_distr::{Distribution, Normal};

    fn expr(cols: &[Vec<f64>]) -> ExpressionMatrix {
        let m = cols[0].len();
        let n = cols.len();
        let mut v = Matrix::zeros(m, n);
        for (c, col) in cols.iter().enumerate() {
            for (r, &x) in col.iter().enumerate() {
                v.set(r, c, x);
            }
        }
        ExpressionMatrix::new(
            (0..m).map(|i| format!("p{i}")).collect(),
            (0..n).map(|i| format!("g{i}")).collect(),
            v,
            None,
        )
        .unwrap()
    }

    #[test]
    fn pearson_hand_value() {
        // x = 1..5, y = (2,4,5,4,5): r = 6 / sqrt(10 * 6)
        let x = expr(&[vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![2.0, 4.0, 5.0, 4.0, 5.0]]);
        let (r, _) = pearson_matrix(&x.values);
        let want = 6.0 / 60.0f64.sqrt();
        assert!((r.get(0, 1) - want).abs() < 1e-12);
    }

    #[test]
    fn exact_multiple_is_an_edge_at_threshold_one() {
        let a: Vec<f64> = vec![0.3, 1.2, -0.7, 2.2, 0.1, 0.9];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let x = expr(&[a, b]);
        let cfg = BaselineConfig {
            corr_threshold: 1.0,
            ..Default::default()
        };
        let net = pearson_network(&x, &cfg).unwrap();
        assert_eq!(net.graph.n_edges(), 1);
    }

    #[test]
    fn independent_noise_has_no_strong_correlation() {
        let mut r = rng::stream(3, "noise");
        let d = Normal::new(0.0, 1.0).unwrap();
        let cols: Vec<Vec<f64>> = (0..30).map(|_| (0..200).map(|_| d.sample(&mut r)).collect()).collect();
        let net = pearson_network(&expr(&cols), &BaselineConfig::default()).unwrap();
        assert_eq!(net.graph.n_edges(), 0);
    }

    #[test]
    fn constant_matrix_is_an_empty_result() {
        let x = expr(&[vec![1.0; 4], vec![2.0; 4]]);
        assert!(matches!(
            pearson_network(&x, &BaselineConfig::default()),
            Err(Error::EmptyResult(_))
        ));
    }

    #[test]
    fn two_gene_wto_equals_correlation() {
        let a = Matrix::from_rows(&[[0.0, -0.4], [-0.4, 0.0]]).unwrap();
        let w = wto_matrix(&a).unwrap();
        assert!((w.get(0, 1) + 0.4).abs() < 1e-15);
    }

    #[test]
    fn wto_brute_force_fixture() {
        let a = Matrix::from_rows(&[
            [0.0, 0.8, -0.3, 0.5],
            [0.8, 0.0, 0.6, -0.2],
            [-0.3, 0.6, 0.0, 0.9],
            [0.5, -0.2, 0.9, 0.0],
        ])
        .unwrap();
        let w = wto_matrix(&a).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let l: f64 = (0..4).filter(|&u| u != i && u != j).map(|u| a.get(i, u) * a.get(u, j)).sum();
                let ki: f64 = (0..4).map(|u| a.get(i, u).abs()).sum();
                let kj: f64 = (0..4).map(|u| a.get(j, u).abs()).sum();
                let want = (l + a.get(i, j)) / (ki.min(kj) + 1.0 - a.get(i, j).abs());
                assert!((w.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn top_k_keeps_strongest() {
        let a: Vec<f64> = vec![0.3, 1.2, -0.7, 2.2, 0.1, 0.9];
        let b: Vec<f64> = vec![0.2, 1.0, -0.5, 2.0, 0.3, 0.7];
        let c: Vec<f64> = vec![1.0, -1.0, 0.5, 0.2, -0.3, 0.0];
        let x = expr(&[a, b, c]);
        let cfg = BaselineConfig {
            top_k_edges: Some(1),
            ..Default::default()
        };
        let net = pearson_network(&x, &cfg).unwrap();
        assert_eq!(net.graph.named_edges().into_iter().collect::<Vec<_>>(), vec![("g0".into(), "g1".into())]);
    }
}
