use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::data_io::GeneGraph;
use crate::error::{Error, Result};

/// Largest graph the exact search accepts.
pub const EXACT_MAX_NODES: usize = 12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GedMode {
    /// Nodes matched by gene ID.
    #[default]
    Approx,
    /// Minimum over all node correspondences, ignoring labels.
    Exact,
}

/// Graph edit distance with unit costs for node and edge insertion/deletion.
pub fn ged(g1: &GeneGraph, g2: &GeneGraph, mode: GedMode) -> Result<f64> {
    match mode {
        GedMode::Approx => Ok(ged_anchored(g1, g2) as f64),
        GedMode::Exact => ged_exact(g1, g2).map(|v| v as f64),
    }
}

/// Edit cost under the gene-ID correspondence: symmetric difference of the
/// node sets plus symmetric difference of the edge sets.
pub fn ged_anchored(g1: &GeneGraph, g2: &GeneGraph) -> usize {
    let v1: BTreeSet<&String> = g1.gene_ids().iter().collect();
    let v2: BTreeSet<&String> = g2.gene_ids().iter().collect();
    let e1 = g1.named_edges();
    let e2 = g2.named_edges();
    v1.symmetric_difference(&v2).count() + e1.symmetric_difference(&e2).count()
}

struct Dense {
    n: usize,
    adj: Vec<bool>,
}

impl Dense {
    fn new(g: &GeneGraph) -> Self {
        let n = g.n_nodes();
        let mut adj = vec![false; n * n];
        for &(a, b) in g.edges() {
            adj[a * n + b] = true;
            adj[b * n + a] = true;
        }
        Self { n, adj }
    }

    fn edge(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.n + b]
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Node {
    // Images of the first `map.len()` nodes of g1; `None` is a deletion.
    map: Vec<Option<u8>>,
    used: u16,
    g: usize,
}

/// Exact unlabeled graph edit distance by A* over partial node assignments.
///
/// Nodes of `g1` are assigned in index order to an unused node of `g2` or
/// deleted. The heuristic adds `|r1 − r2|` for the unassigned node counts and
/// `|e1 − e2|` for the edges touching unassigned nodes; both are lower bounds
/// on their share of the remaining cost.
pub fn ged_exact(g1: &GeneGraph, g2: &GeneGraph) -> Result<usize> {
    for g in [g1, g2] {
        if g.n_nodes() > EXACT_MAX_NODES {
            return Err(Error::Mode(format!(
                "exact GED supports at most {EXACT_MAX_NODES} nodes, got {}",
                g.n_nodes()
            )));
        }
    }
    let a = Dense::new(g1);
    let b = Dense::new(g2);
    let (n1, n2) = (a.n, b.n);

    // Edges of g1 with an endpoint at index >= i.
    let tail1: Vec<usize> = (0..=n1)
        .map(|i| g1.edges().iter().filter(|&&(x, y)| x.max(y) >= i).count())
        .collect();
    let tail2 = |used: u16| {
        g2.edges()
            .iter()
            .filter(|&&(x, y)| used & (1 << x) == 0 || used & (1 << y) == 0)
            .count()
    };
    let h = |depth: usize, used: u16| {
        let r1 = n1 - depth;
        let r2 = n2 - used.count_ones() as usize;
        r1.abs_diff(r2) + tail1[depth].abs_diff(tail2(used))
    };
    let upper = ged_identity_upper(&a, &b);

    let mut heap = BinaryHeap::new();
    let root = Node {
        map: Vec::new(),
        used: 0,
        g: 0,
    };
    heap.push(Reverse((h(0, 0), root)));
    while let Some(Reverse((f, node))) = heap.pop() {
        let depth = node.map.len();
        if depth == n1 {
            // Completion cost is already folded into f at full depth.
            return Ok(f);
        }
        let mut push = |target: Option<usize>| {
            let mut g = node.g + usize::from(target.is_none());
            for (p, img) in node.map.iter().enumerate() {
                let e1 = a.edge(p, depth);
                let e2 = match (img, target) {
                    (Some(ip), Some(t)) => b.edge(*ip as usize, t),
                    _ => false,
                };
                g += usize::from(e1 != e2);
            }
            let used = match target {
                Some(t) => node.used | (1 << t),
                None => node.used,
            };
            let mut map = node.map.clone();
            map.push(target.map(|t| t as u8));
            let f = if depth + 1 == n1 {
                // Insert every unused g2 node and the edges touching them.
                g + (n2 - used.count_ones() as usize) + tail2(used)
            } else {
                g + h(depth + 1, used)
            };
            if f <= upper {
                heap.push(Reverse((f, Node { map, used, g })));
            }
        };
        for t in 0..n2 {
            if node.used & (1 << t) == 0 {
                push(Some(t));
            }
        }
        push(None);
    }
    // Only reachable for an empty g1.
    Ok(n2 + g2.n_edges())
}

/// Cost of mapping node i to node i (an admissible upper bound for pruning).
fn ged_identity_upper(a: &Dense, b: &Dense) -> usize {
    let mut cost = a.n.abs_diff(b.n);
    for i in 0..a.n.max(b.n) {
        for j in i + 1..a.n.max(b.n) {
            let e1 = i < a.n && j < a.n && a.edge(i, j);
            let e2 = i < b.n && j < b.n && b.edge(i, j);
            cost += usize::from(e1 != e2);
        }
    }
    cost
}

/// Mean GED over all ordered pairs of distinct networks.
pub fn pairwise_ged(graphs: &[&GeneGraph], mode: GedMode) -> Result<f64> {
    let d = pairwise_values(graphs, |a, b| ged(a, b, mode))?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// `f` over every unordered pair; ordered-pair averages equal unordered ones
/// for symmetric `f`.
pub fn pairwise_values<F>(graphs: &[&GeneGraph], mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&GeneGraph, &GeneGraph) -> Result<f64>,
{
    if graphs.len() < 2 {
        return Err(Error::Validation(format!(
            "pairwise metrics need at least 2 networks, got {}",
            graphs.len()
        )));
    }
    let mut out = Vec::new();
    for i in 0..graphs.len() {
        for j in i + 1..graphs.len() {
            out.push(f(graphs[i], graphs[j])?);
        }
    }
    Ok(out)
}
