use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::graph::GeneGraph;
use crate::error::{Error, Result};
use crate::numerics::rng;

/// Labeled node pairs of one split: positives are edges, negatives non-edges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairSet {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl PairSet {
    /// Pairs and their 0/1 labels, positives first.
    pub fn labeled(&self) -> (Vec<(usize, usize)>, Vec<f64>) {
        let mut pairs = self.positives.clone();
        pairs.extend_from_slice(&self.negatives);
        let mut labels = vec![1.0; self.positives.len()];
        labels.extend(std::iter::repeat_n(0.0, self.negatives.len()));
        (pairs, labels)
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSplit {
    pub train: PairSet,
    pub val: PairSet,
    pub test: PairSet,
}

impl EdgeSplit {
    /// Adjacency restricted to training positives, used for message passing
    /// while held-out edges are being scored.
    pub fn train_graph(&self, g: &GeneGraph) -> Result<GeneGraph> {
        GeneGraph::from_edges(g.gene_ids().to_vec(), self.train.positives.iter().copied())
    }
}

/// Partitions the edges into train/validation/test positives and draws an
/// equal number of distinct non-edges per split.
pub fn split_edges(g: &GeneGraph, ratios: (f64, f64, f64), seed: u64) -> Result<EdgeSplit> {
    let (rt, rv, rs) = ratios;
    if [rt, rv, rs].iter().any(|r| !(r.is_finite() && *r > 0.0))
        || ((rt + rv + rs) - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split ratios must be positive and sum to 1, got ({rt}, {rv}, {rs})"
        )));
    }
    let e = g.n_edges();
    let n_train = (rt * e as f64).round() as usize;
    let n_val = (rv * e as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= e {
        return Err(Error::Validation(format!(
            "{e} edges are too few for a ({rt}, {rv}, {rs}) split"
        )));
    }
    let n = g.n_nodes();
    let non_edges = n * (n - 1) / 2 - e;
    if non_edges < e {
        return Err(Error::Validation(format!(
            "graph has {non_edges} non-edges, fewer than the {e} negatives needed"
        )));
    }

    let mut rng = rng::stream(seed, "edge-split");
    let mut pos = g.edges().to_vec();
    pos.shuffle(&mut rng);
    let negs = sample_non_edges(g, e, &mut rng);

    let cut = |v: &[(usize, usize)], a: usize, b: usize| v[a..b].to_vec();
    Ok(EdgeSplit {
        train: PairSet {
            positives: cut(&pos, 0, n_train),
            negatives: cut(&negs, 0, n_train),
        },
        val: PairSet {
            positives: cut(&pos, n_train, n_train + n_val),
            negatives: cut(&negs, n_train, n_train + n_val),
        },
        test: PairSet {
            positives: cut(&pos, n_train + n_val, e),
            negatives: cut(&negs, n_train + n_val, e),
        },
    })
}

fn sample_non_edges<R: Rng>(g: &GeneGraph, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let n = g.n_nodes();
    let non_edges = n * (n - 1) / 2 - g.n_edges();
    if non_edges <= 4 * count {
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !g.has_edge(i, j))
            .collect();
        all.shuffle(rng);
        all.truncate(count);
        return all;
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if g.has_edge(pair.0, pair.1) || !seen.insert(pair) {
            continue;
        }
        out.push(pair);
    }
    out
}
