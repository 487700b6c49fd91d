use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::{info, warn};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Undirected, unweighted gene interaction graph.
///
/// Node `i` is `gene_ids[i]`; edges are stored once as `(i, j)` with `i < j`
/// in sorted order, alongside a symmetric dense adjacency with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneGraph {
    gene_ids: Vec<String>,
    adjacency: Matrix,
    edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GraphLoadStats {
    pub lines: usize,
    pub duplicate_edges: usize,
    pub self_loops: usize,
}

impl GraphLoadStats {
    pub fn dropped(&self) -> usize {
        self.duplicate_edges + self.self_loops
    }
}

impl GeneGraph {
    /// Builds a graph over `gene_ids`; duplicate and self edges are ignored.
    /// Isolated nodes are kept; see [`GeneGraph::prune_isolated`].
    pub fn from_edges(
        gene_ids: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = gene_ids.len();
        if let Some(dup) = super::expression::first_duplicate(&gene_ids) {
            return Err(Error::Validation(format!(
                "duplicate gene id '{dup}' in graph"
            )));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Validation(format!(
                    "edge ({a}, {b}) outside {n} nodes"
                )));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        let mut adjacency = Matrix::zeros(n, n);
        for &(a, b) in &set {
            adjacency.set(a, b, 1.0);
            adjacency.set(b, a, 1.0);
        }
        let index = gene_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Ok(Self {
            gene_ids,
            adjacency,
            edges: set.into_iter().collect(),
            index,
        })
    }

    /// Builds a graph from gene-name pairs; node order is lexicographic.
    pub fn from_named_edges<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<Self> {
        let names: BTreeSet<&str> = pairs
            .iter()
            .filter(|(a, b)| a.as_ref() != b.as_ref())
            .flat_map(|(a, b)| [a.as_ref(), b.as_ref()])
            .collect();
        let gene_ids: Vec<String> = names.into_iter().map(String::from).collect();
        let index: HashMap<&str, usize> = gene_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        let edges: Vec<(usize, usize)> = pairs
            .iter()
            .filter(|(a, b)| a.as_ref() != b.as_ref())
            .map(|(a, b)| (index[a.as_ref()], index[b.as_ref()]))
            .collect();
        Self::from_edges(gene_ids, edges)
    }

    pub fn empty(gene_ids: Vec<String>) -> Result<Self> {
        Self::from_edges(gene_ids, std::iter::empty())
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, gene: &str) -> Option<usize> {
        self.index.get(gene).copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency.get(a, b) != 0.0
    }

    pub fn has_named_edge(&self, a: &str, b: &str) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.has_edge(i, j),
            _ => false,
        }
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes()];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn degree_of(&self, gene: &str) -> usize {
        match self.index_of(gene) {
            Some(i) => self.adjacency.row(i).iter().filter(|&&v| v != 0.0).count(),
            None => 0,
        }
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.adjacency
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Edges as sorted gene-name pairs `(a, b)` with `a < b`.
    pub fn named_edges(&self) -> BTreeSet<(String, String)> {
        self.edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (&self.gene_ids[a], &self.gene_ids[b]);
                if x <= y {
                    (x.clone(), y.clone())
                } else {
                    (y.clone(), x.clone())
                }
            })
            .collect()
    }

    pub fn is_symmetric_simple(&self) -> bool {
        let n = self.n_nodes();
        (0..n).all(|i| {
            self.adjacency.get(i, i) == 0.0
                && (0..n).all(|j| self.adjacency.get(i, j) == self.adjacency.get(j, i))
        })
    }

    /// Keeps the nodes in `keep` (in the given order) and the edges among them.
    pub fn induced(&self, keep: &[usize]) -> Result<Self> {
        let mut remap = vec![usize::MAX; self.n_nodes()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let ids = keep.iter().map(|&i| self.gene_ids[i].clone()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|(a, b)| remap[*a] != usize::MAX && remap[*b] != usize::MAX)
            .map(|&(a, b)| (remap[a], remap[b]))
            .collect::<Vec<_>>();
        Self::from_edges(ids, edges)
    }

    pub fn induced_by_names(&self, genes: &[String]) -> Result<Self> {
        let keep: Vec<usize> = genes.iter().filter_map(|g| self.index_of(g)).collect();
        self.induced(&keep)
    }

    pub fn prune_isolated(&self) -> Result<Self> {
        let deg = self.degrees();
        let keep: Vec<usize> = (0..self.n_nodes()).filter(|&i| deg[i] > 0).collect();
        self.induced(&keep)
    }
}

/// Reads a TSV edge list (`gene_a<TAB>gene_b[<TAB>ignored…]`, `#` comments).
pub fn load_graph(path: impl AsRef<Path>) -> Result<GeneGraph> {
    load_graph_with_stats(path).map(|(g, _)| g)
}

pub fn load_graph_with_stats(path: impl AsRef<Path>) -> Result<(GeneGraph, GraphLoadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stats = GraphLoadStats::default();
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        stats.lines += 1;
        let mut fields = trimmed.split('\t');
        let (Some(a), Some(b)) = (fields.next(), fields.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "expected two tab-separated gene ids".into(),
            });
        };
        let (a, b) = (a.trim().to_string(), b.trim().to_string());
        if a == b {
            stats.self_loops += 1;
            continue;
        }
        let key = if a < b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        if !seen.insert(key) {
            stats.duplicate_edges += 1;
            continue;
        }
        pairs.push((a, b));
    }
    if pairs.is_empty() {
        return Err(Error::Validation(format!(
            "{} contains no usable edges",
            path.display()
        )));
    }
    if stats.dropped() > 0 {
        warn!(
            "{}: dropped {} duplicate edges and {} self loops",
            path.display(),
            stats.duplicate_edges,
            stats.self_loops
        );
    }
    let g = GeneGraph::from_named_edges(&pairs)?;
    info!(
        "loaded graph {}: {} nodes, {} edges",
        path.display(),
        g.n_nodes(),
        g.n_edges()
    );
    Ok((g, stats))
}

/// Reads an inferred network written by [`save_graph`]. Unlike the prior
/// graph loader an empty file is accepted; a missing score column reads as 1.
pub fn load_graph_with_scores(path: impl AsRef<Path>) -> Result<(GeneGraph, Vec<f64>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut by_pair = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields[0] == fields[1] {
            return Err(parse_err("expected two distinct gene ids".into()));
        }
        let score = match fields.get(2) {
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| parse_err(format!("bad score '{v}'")))?,
            None => 1.0,
        };
        let key = if fields[0] < fields[1] {
            (fields[0].to_string(), fields[1].to_string())
        } else {
            (fields[1].to_string(), fields[0].to_string())
        };
        if by_pair.insert(key.clone(), score).is_some() {
            return Err(parse_err(format!("duplicate edge {} {}", key.0, key.1)));
        }
        pairs.push(key);
    }
    if pairs.is_empty() {
        return Ok((GeneGraph::empty(Vec::new())?, Vec::new()));
    }
    let g = GeneGraph::from_named_edges(&pairs)?;
    let ids = g.gene_ids();
    let scores = g
        .edges()
        .iter()
        .map(|&(a, b)| by_pair[&(ids[a].clone(), ids[b].clone())])
        .collect();
    Ok((g, scores))
}

/// Writes `gene_a<TAB>gene_b[<TAB>score]` lines in edge order.
pub fn save_graph(g: &GeneGraph, scores: Option<&[f64]>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(s) = scores {
        if s.len() != g.n_edges() {
            return Err(Error::Dimension(format!(
                "{} scores for {} edges",
                s.len(),
                g.n_edges()
            )));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for (k, &(a, b)) in g.edges().iter().enumerate() {
        match scores {
            Some(s) => writeln!(w, "{}\t{}\t{}", g.gene_ids[a], g.gene_ids[b], s[k]).map_err(io)?,
            None => writeln!(w, "{}\t{}", g.gene_ids[a], g.gene_ids[b]).map_err(io)?,
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp(body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        (dir, p)
    }

    #[test]
    fn dedup_and_self_loops() {
        let (_d, p) = tmp("# comment\na\tb\nb\ta\na\ta\n");
        let (g, stats) = load_graph_with_stats(&p).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.gene_ids(), &["a", "b"]);
        assert_eq!(stats.dropped(), 2);
        assert!(g.is_symmetric_simple());
    }

    #[test]
    fn third_column_ignored_and_endpoints_become_nodes() {
        let (_d, p) = tmp("a\tb\t0.9\nc\td\t0.1\n");
        let g = load_graph(&p).unwrap();
        assert_eq!(g.n_nodes(), 4);
        assert!(g.has_named_edge("d", "c"));
    }

    #[test]
    fn self_loop_only_node_is_not_kept() {
        let (_d, p) = tmp("a\tb\nz\tz\n");
        assert_eq!(load_graph(&p).unwrap().n_nodes(), 2);
    }

    #[test]
    fn empty_edge_list_rejected() {
        let (_d, p) = tmp("# nothing\nx\tx\n");
        assert!(matches!(load_graph(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn save_load_roundtrip() {
        let g = GeneGraph::from_named_edges(&[("b", "a"), ("c", "a")]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.tsv");
        save_graph(&g, Some(&[0.5, 0.75]), &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "a\tb\t0.5\na\tc\t0.75\n"
        );
        assert_eq!(load_graph(&p).unwrap(), g);
    }

    #[test]
    fn prune_isolated_nodes() {
        let g = GeneGraph::from_edges(vec!["a".into(), "b".into(), "c".into()], [(0, 1)]).unwrap();
        let p = g.prune_isolated().unwrap();
        assert_eq!(p.gene_ids(), &["a", "b"]);
        assert_eq!(p.n_edges(), 1);
    }
}
