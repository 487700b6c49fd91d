use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::graph::{load_graph_with_scores, save_graph, GeneGraph};
use crate::error::{Error, Result};

/// A network with one score per edge, aligned with `graph.edges()`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredNetwork {
    pub graph: GeneGraph,
    pub scores: Vec<f64>,
}

impl ScoredNetwork {
    pub fn new(graph: GeneGraph, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != graph.n_edges() {
            return Err(Error::Dimension(format!(
                "{} scores for {} edges",
                scores.len(),
                graph.n_edges()
            )));
        }
        Ok(Self { graph, scores })
    }

    /// Unit scores on every edge.
    pub fn unscored(graph: GeneGraph) -> Self {
        let scores = vec![1.0; graph.n_edges()];
        Self { graph, scores }
    }

    /// Edges as sorted name pairs, highest score first; ties by name.
    pub fn ranked_edges(&self) -> Vec<((String, String), f64)> {
        let ids = self.graph.gene_ids();
        let mut out: Vec<((String, String), f64)> = self
            .graph
            .edges()
            .iter()
            .zip(&self.scores)
            .map(|(&(a, b), &s)| {
                let (x, y) = (ids[a].clone(), ids[b].clone());
                (if x <= y { (x, y) } else { (y, x) }, s)
            })
            .collect();
        out.sort_by(|l, r| r.1.total_cmp(&l.1).then_with(|| l.0.cmp(&r.0)));
        out
    }
}

/// Fraction of `truth` among the `k` best-scored edges of `net`.
/// A network with fewer than `k` edges scores its missing slots as misses.
pub fn precision_at_k(net: &ScoredNetwork, truth: &BTreeSet<(String, String)>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = net
        .ranked_edges()
        .into_iter()
        .take(k)
        .filter(|(e, _)| truth.contains(e))
        .count();
    hits as f64 / k as f64
}

/// One inferred network per subtype.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubtypeNetworkSet {
    pub networks: BTreeMap<String, ScoredNetwork>,
}

impl SubtypeNetworkSet {
    pub fn from_graphs(graphs: BTreeMap<String, GeneGraph>) -> Self {
        Self {
            networks: graphs
                .into_iter()
                .map(|(y, g)| (y, ScoredNetwork::unscored(g)))
                .collect(),
        }
    }

    pub fn graphs(&self) -> Vec<&GeneGraph> {
        self.networks.values().map(|n| &n.graph).collect()
    }

    pub fn subtypes(&self) -> Vec<&String> {
        self.networks.keys().collect()
    }

    pub fn get(&self, y: &str) -> Option<&GeneGraph> {
        self.networks.get(y).map(|n| &n.graph)
    }

    pub fn len(&self) -> usize {
        self.networks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.networks.is_empty()
    }

    pub fn edge_counts(&self) -> BTreeMap<String, usize> {
        self.networks
            .iter()
            .map(|(y, n)| (y.clone(), n.graph.n_edges()))
            .collect()
    }

    pub fn mean_edge_count(&self) -> f64 {
        if self.networks.is_empty() {
            return 0.0;
        }
        self.networks.values().map(|n| n.graph.n_edges() as f64).sum::<f64>() / self.networks.len() as f64
    }

    /// Writes `<dir>/<prefix><subtype>.edges.tsv` for every subtype.
    pub fn save(&self, dir: impl AsRef<Path>, prefix: &str) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        for (y, net) in &self.networks {
            let path = dir.join(format!("{prefix}{y}.edges.tsv"));
            save_graph(&net.graph, Some(&net.scores), &path)?;
            out.push(path);
        }
        Ok(out)
    }

    /// Reads back every `<prefix><subtype>.edges.tsv` in `dir`.
    pub fn load(dir: impl AsRef<Path>, prefix: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let mut networks = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(y) = name
                .strip_prefix(prefix)
                .and_then(|rest| rest.strip_suffix(".edges.tsv"))
            else {
                continue;
            };
            if y.contains('.') {
                continue;
            }
            let (graph, scores) = load_graph_with_scores(&path)?;
            networks.insert(y.to_string(), ScoredNetwork::new(graph, scores)?);
        }
        if networks.is_empty() {
            return Err(Error::Validation(format!(
                "no '{prefix}*.edges.tsv' networks in {}",
                dir.display()
            )));
        }
        Ok(Self { networks })
    }
}
