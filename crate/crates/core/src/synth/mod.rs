//! Synthetic cohorts with planted subtype modules and known ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_io::{
    save_annotations, save_expression, save_graph, AnnotationMap, ExpressionMatrix, GeneGraph,
};
use crate::error::{Error, Result};
use crate::numerics::{rng, Matrix};

/// Fraction of each planted clique's edges removed at random.
const MODULE_DROP_FRACTION: f64 = 0.10;
const BASELINE_MEAN: f64 = 5.0;
const ANNOTATION_POOL: usize = 60;
const MODULE_TERMS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_genes: usize,
    pub n_subtypes: usize,
    pub patients_per_subtype: Vec<usize>,
    pub backbone_edge_prob: f64,
    pub planted_module_size: usize,
    pub signal_strength: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_genes: 200,
            n_subtypes: 3,
            patients_per_subtype: vec![60; 3],
            backbone_edge_prob: 0.002,
            planted_module_size: 15,
            signal_strength: 3.0,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("synth config: {msg}")));
        if self.n_subtypes < 2 {
            return fail(format!("need at least 2 subtypes, got {}", self.n_subtypes));
        }
        if self.patients_per_subtype.len() != self.n_subtypes {
            return fail(format!(
                "{} patient counts for {} subtypes",
                self.patients_per_subtype.len(),
                self.n_subtypes
            ));
        }
        if self.patients_per_subtype.contains(&0) {
            return fail("every subtype needs at least one patient".into());
        }
        if self.planted_module_size < 2 {
            return fail("planted modules need at least 2 genes".into());
        }
        if self.planted_module_size * self.n_subtypes > self.n_genes {
            return fail(format!(
                "{} modules of {} genes do not fit in {} genes",
                self.n_subtypes, self.planted_module_size, self.n_genes
            ));
        }
        if !(self.backbone_edge_prob > 0.0 && self.backbone_edge_prob < 1.0) {
            return fail(format!(
                "backbone_edge_prob {} outside (0,1)",
                self.backbone_edge_prob
            ));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) || !self.signal_strength.is_finite()
        {
            return fail("noise_sd must be finite and non-negative, signal_strength finite".into());
        }
        Ok(())
    }
}

/// Everything the generator knows about the cohort it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthTruth {
    pub graph: GeneGraph,
    pub subtypes: Vec<String>,
    pub planted_genes: Vec<Vec<String>>,
    pub subtype_graphs: Vec<GeneGraph>,
    pub expression: ExpressionMatrix,
    pub annotations: AnnotationMap,
}

impl SynthTruth {
    /// Planted edges of subtype `y` as sorted gene-name pairs.
    pub fn planted_edges(&self, y: usize) -> Vec<(String, String)> {
        self.subtype_graphs[y].named_edges().into_iter().collect()
    }
}

#[derive(Serialize)]
struct TruthEntry<'a> {
    genes: &'a [String],
    edges: Vec<(String, String)>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthTruth> {
    cfg.validate()?;
    let n = cfg.n_genes;
    let width = n.to_string().len().max(3);
    let gene_ids: Vec<String> = (0..n).map(|i| format!("G{:0width$}", i + 1)).collect();
    let subtypes: Vec<String> = (0..cfg.n_subtypes).map(|y| format!("S{}", y + 1)).collect();

    let mut planted_rng = rng::stream(cfg.seed, "synth/planted");
    let chosen = index::sample(
        &mut planted_rng,
        n,
        cfg.planted_module_size * cfg.n_subtypes,
    )
    .into_vec();
    let modules: Vec<Vec<usize>> = chosen
        .chunks(cfg.planted_module_size)
        .map(|c| {
            let mut m = c.to_vec();
            m.sort_unstable();
            m
        })
        .collect();

    let mut graph_rng = rng::stream(cfg.seed, "synth/graph");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if graph_rng.random::<f64>() < cfg.backbone_edge_prob {
                edges.push((i, j));
            }
        }
    }
    for module in &modules {
        let mut clique: Vec<(usize, usize)> = module
            .iter()
            .enumerate()
            .flat_map(|(a, &i)| module[a + 1..].iter().map(move |&j| (i, j)))
            .collect();
        clique.shuffle(&mut graph_rng);
        let drop = (MODULE_DROP_FRACTION * clique.len() as f64).round() as usize;
        edges.extend_from_slice(&clique[drop..]);
    }
    let graph = GeneGraph::from_edges(gene_ids.clone(), edges)?;
    let subtype_graphs = modules
        .iter()
        .map(|m| graph.induced(m))
        .collect::<Result<Vec<_>>>()?;

    let mut expr_rng = rng::stream(cfg.seed, "synth/expression");
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Validation(e.to_string()))?;
    let total: usize = cfg.patients_per_subtype.iter().sum();
    let pwidth = total.to_string().len().max(4);
    let mut values = Vec::with_capacity(total * n);
    let mut labels = Vec::with_capacity(total);
    let mut patient_ids = Vec::with_capacity(total);
    for (y, &count) in cfg.patients_per_subtype.iter().enumerate() {
        let mut shift = vec![0.0; n];
        for &g in &modules[y] {
            shift[g] = cfg.signal_strength;
        }
        for _ in 0..count {
            patient_ids.push(format!("P{:0pwidth$}", patient_ids.len() + 1));
            labels.push(subtypes[y].clone());
            values.extend(
                shift
                    .iter()
                    .map(|s| (BASELINE_MEAN + s + noise.sample(&mut expr_rng)).max(0.0)),
            );
        }
    }
    let expression = ExpressionMatrix::new(
        patient_ids,
        gene_ids.clone(),
        Matrix::new(total, n, values)?,
        Some(labels),
    )?;

    let mut ann_rng = rng::stream(cfg.seed, "synth/annotation");
    let mut annotations = AnnotationMap::new();
    for gene in &gene_ids {
        for _ in 0..ann_rng.random_range(1..=3) {
            annotations.insert(
                gene.clone(),
                format!("GO:{:07}", ann_rng.random_range(1..=ANNOTATION_POOL)),
            );
        }
    }
    for (y, module) in modules.iter().enumerate() {
        for &g in module {
            let t = ann_rng.random_range(0..MODULE_TERMS);
            annotations.insert(gene_ids[g].clone(), format!("GO:{:07}", 1000 * (y + 1) + t));
        }
    }

    Ok(SynthTruth {
        graph,
        subtypes,
        planted_genes: modules
            .iter()
            .map(|m| m.iter().map(|&g| gene_ids[g].clone()).collect())
            .collect(),
        subtype_graphs,
        expression,
        annotations,
    })
}

/// Paths of the files written by [`write_truth`].
#[derive(Clone, Debug)]
pub struct SynthFiles {
    pub expression: PathBuf,
    pub graph: PathBuf,
    pub annotations: PathBuf,
    pub truth: PathBuf,
}

pub fn write_truth(truth: &SynthTruth, dir: impl AsRef<Path>) -> Result<SynthFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SynthFiles {
        expression: dir.join("expression.csv"),
        graph: dir.join("graph.tsv"),
        annotations: dir.join("annotations.tsv"),
        truth: dir.join("truth.json"),
    };
    save_expression(&truth.expression, &files.expression)?;
    save_graph(&truth.graph, None, &files.graph)?;
    save_annotations(&truth.annotations, &files.annotations)?;
    let entries: BTreeMap<&str, TruthEntry> = truth
        .subtypes
        .iter()
        .enumerate()
        .map(|(y, name)| {
            (
                name.as_str(),
                TruthEntry {
                    genes: &truth.planted_genes[y],
                    edges: truth.planted_edges(y),
                },
            )
        })
        .collect();
    let json = serde_json::to_string_pretty(&entries)?;
    fs::write(&files.truth, json).map_err(|e| Error::io(&files.truth, e))?;
    Ok(files)
}

#[derive(Deserialize)]
struct TruthRecord {
    edges: Vec<(String, String)>,
}

/// Planted edges per subtype from a truth file written by [`write_truth`].
pub fn load_planted_edges(path: impl AsRef<Path>) -> Result<BTreeMap<String, BTreeSet<(String, String)>>> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: BTreeMap<String, TruthRecord> = serde_json::from_str(&body)?;
    Ok(records
        .into_iter()
        .map(|(y, r)| {
            let edges = r
                .edges
                .into_iter()
                .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
                .collect();
            (y, edges)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(signal: f64) -> SynthConfig {
        SynthConfig {
            n_genes: 30,
            n_subtypes: 2,
            patients_per_subtype: vec![40, 40],
            planted_module_size: 5,
            signal_strength: signal,
            seed: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn modules_disjoint_and_sized() {
        let t = generate(&small(3.0)).unwrap();
        assert_eq!(t.planted_genes[0].len(), 5);
        assert!(t.planted_genes[0]
            .iter()
            .all(|g| !t.planted_genes[1].contains(g)));
        for (y, sg) in t.subtype_graphs.iter().enumerate() {
            assert_eq!(sg.gene_ids(), t.planted_genes[y].as_slice());
            for (a, b) in sg.named_edges() {
                assert!(t.graph.has_named_edge(&a, &b));
            }
        }
    }

    #[test]
    fn seeded_output_is_identical() {
        assert_eq!(
            generate(&small(3.0)).unwrap(),
            generate(&small(3.0)).unwrap()
        );
    }

    #[test]
    fn infeasible_config_rejected() {
        let cfg = SynthConfig {
            planted_module_size: 20,
            ..small(1.0)
        };
        assert!(matches!(generate(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn signal_shifts_planted_genes() {
        let t = generate(&small(3.0)).unwrap();
        let x = &t.expression;
        let g = x.gene_index(&t.planted_genes[0][0]).unwrap();
        let mean = |label: &str| {
            let rows = x.patients_with_label(label);
            rows.iter().map(|&r| x.values.get(r, g)).sum::<f64>() / rows.len() as f64
        };
        assert!(mean("S1") - mean("S2") > 2.0);
    }
}
