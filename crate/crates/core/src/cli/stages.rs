use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, GESUBNET};
use crate::baselines::baseline_networks;
use crate::data_io::{
    align, filter_genes, load_annotations, load_expression, load_graph, log_transform,
    precision_at_k, save_expression, save_graph, AnnotationMap, ExpressionMatrix, GeneGraph,
    SubtypeNetworkSet,
};
use crate::error::{Error, Result};
use crate::eval::{MetricsAccumulator, MetricsReport, RunMetrics};
use crate::graph_m::GraphModel;
use crate::infer_m::{FreezeDigest, IntegrationState};
use crate::knockout::{run_knockout, KnockoutResult};
use crate::patient_m::PatientModel;
use crate::persistence::{load_checkpoint, save_checkpoint, RunManifest};
use crate::pipeline::{graph_context, train_graph, train_patient};
use crate::synth::{generate, load_planted_edges, write_truth};

const DATA: &str = "data";
const PREPROCESSED_EXPRESSION: &str = "data/preprocessed/expression.csv";
const PREPROCESSED_GRAPH: &str = "data/preprocessed/graph.tsv";

fn seed_dir(s: u64) -> String {
    format!("seed-{s}")
}

/// One stage's view of the run directory: it refuses to overwrite outputs
/// without `force`, records what it wrote in the manifest, and deletes those
/// files again if the stage fails.
pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    force: bool,
    manifest: RunManifest,
    created: Vec<PathBuf>,
}

impl Run {
    pub fn open(cfg: RunConfig, force: bool) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.paths.output.clone();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        // The run directory's own location is not part of the recorded config,
        // so identical runs in different directories hash alike.
        let mut recorded = cfg.clone();
        recorded.paths.output = PathBuf::from(".");
        let threads = cfg.thread_count();
        let manifest = match RunManifest::load_or_new(&out, &recorded, cfg.seed, threads) {
            Err(Error::Config(_)) if force => RunManifest::new(&recorded, cfg.seed, threads)?,
            other => other?,
        };
        let cfg_path = out.join("config.json");
        std::fs::write(&cfg_path, serde_json::to_string_pretty(&recorded)? + "\n")
            .map_err(|e| Error::io(&cfg_path, e))?;
        Ok(Self {
            cfg,
            out,
            force,
            manifest,
            created: Vec::new(),
        })
    }

    /// Claims an output path relative to the run directory.
    fn output(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.out.join(rel.as_ref());
        if path.exists() && !self.force {
            return Err(Error::Config(format!(
                "{} already exists; pass --force to overwrite",
                path.display()
            )));
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.created.push(path.clone());
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<()> {
        let path = self.output(rel)?;
        std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(&path, e))
    }

    fn save_networks(&mut self, nets: &SubtypeNetworkSet, rel_dir: &str) -> Result<()> {
        for y in nets.subtypes() {
            self.output(format!("{rel_dir}/{y}.edges.tsv"))?;
        }
        nets.save(self.out.join(rel_dir), "")?;
        Ok(())
    }

    fn rel(&self, path: &Path) -> PathBuf {
        path.strip_prefix(&self.out).unwrap_or(path).to_path_buf()
    }

    /// Runs `body` as stage `name`; on success records its outputs and saves
    /// the manifest, on failure removes them.
    pub fn stage(&mut self, name: &str, body: impl FnOnce(&mut Self) -> Result<()>) -> Result<()> {
        info!("stage {name}");
        self.created.clear();
        match body(self) {
            Ok(()) => {
                let created = std::mem::take(&mut self.created);
                for p in &created {
                    let rel = self.rel(p);
                    self.manifest.record_artifact(&self.out, rel)?;
                }
                self.manifest.record_stage(name);
                self.manifest.save(&self.out)
            }
            Err(e) => {
                for p in self.created.drain(..) {
                    let _ = std::fs::remove_file(&p);
                }
                Err(e)
            }
        }
    }

    fn input_or_data(&self, given: &Option<PathBuf>, file: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join(DATA).join(file))
    }

    fn annotation_path(&self) -> Option<PathBuf> {
        let p = self.input_or_data(&self.cfg.paths.annotation, "annotations.tsv");
        p.exists().then_some(p)
    }

    fn truth_path(&self) -> Option<PathBuf> {
        let p = self.input_or_data(&self.cfg.paths.truth, "truth.json");
        p.exists().then_some(p)
    }

    fn preprocessed(&self) -> Result<(ExpressionMatrix, GeneGraph)> {
        let xp = self.out.join(PREPROCESSED_EXPRESSION);
        let gp = self.out.join(PREPROCESSED_GRAPH);
        if !xp.exists() || !gp.exists() {
            return Err(Error::Validation(format!(
                "no preprocessed inputs in {}; run preprocess first",
                self.out.display()
            )));
        }
        Ok((load_expression(xp)?, load_graph(gp)?))
    }

    fn checkpoint_path(&self, s: u64, file: &str) -> PathBuf {
        self.out.join("checkpoints").join(seed_dir(s)).join(file)
    }

    fn networks(&self, s: u64) -> Result<SubtypeNetworkSet> {
        SubtypeNetworkSet::load(self.out.join("networks").join(seed_dir(s)), "")
    }

    fn baseline_dir(s: u64, name: &str) -> String {
        format!("networks/{}/baselines/{name}", seed_dir(s))
    }
}

pub fn synth(run: &mut Run) -> Result<()> {
    run.stage("synth", |run| {
        let truth = generate(&run.cfg.synth)?;
        for f in ["expression.csv", "graph.tsv", "annotations.tsv", "truth.json"] {
            run.output(Path::new(DATA).join(f))?;
        }
        let files = write_truth(&truth, run.out.join(DATA))?;
        info!(
            "synthetic cohort: {} patients, {} genes, {} prior edges -> {}",
            truth.expression.n_patients(),
            truth.expression.n_genes(),
            truth.graph.n_edges(),
            files.expression.parent().unwrap_or(Path::new(".")).display()
        );
        Ok(())
    })
}

#[derive(Serialize)]
struct PreprocessReport {
    patients: usize,
    genes_in: usize,
    genes_after_filter: usize,
    graph_nodes_in: usize,
    graph_edges_in: usize,
    aligned_genes: usize,
    aligned_edges: usize,
}

pub fn preprocess(run: &mut Run) -> Result<()> {
    run.stage("preprocess", |run| {
        let xp = run.input_or_data(&run.cfg.paths.expression, "expression.csv");
        let gp = run.input_or_data(&run.cfg.paths.graph, "graph.tsv");
        let raw = load_expression(&xp)?;
        let g = load_graph(&gp)?;
        run.manifest.record_input(&run.out, &xp)?;
        run.manifest.record_input(&run.out, &gp)?;
        if let Some(a) = run.annotation_path() {
            run.manifest.record_input(&run.out, a)?;
        }
        let mut x = filter_genes(&raw, run.cfg.preprocess.zero_fraction_threshold)?;
        if run.cfg.preprocess.log_transform {
            x = log_transform(&x)?;
        }
        let (xa, ga) = align(&x, &g)?;
        let report = PreprocessReport {
            patients: xa.n_patients(),
            genes_in: raw.n_genes(),
            genes_after_filter: x.n_genes(),
            graph_nodes_in: g.n_nodes(),
            graph_edges_in: g.n_edges(),
            aligned_genes: xa.n_genes(),
            aligned_edges: ga.n_edges(),
        };
        save_expression(&xa, run.output(PREPROCESSED_EXPRESSION)?)?;
        save_graph(&ga, None, run.output(PREPROCESSED_GRAPH)?)?;
        run.write_json("reports/preprocess.json", &report)
    })
}

pub fn train_patient_stage(run: &mut Run) -> Result<()> {
    run.stage("train-patient", |run| {
        let (x, _) = run.preprocessed()?;
        for s in run.cfg.seeds() {
            let (model, log) = train_patient(&x, &run.cfg.model, s)?;
            let path = run.output(format!("checkpoints/{}/patient.gsnpm", seed_dir(s)))?;
            save_checkpoint(&model, path)?;
            run.write_json(format!("reports/{}/patient_training.json", seed_dir(s)), &log)?;
        }
        Ok(())
    })
}

pub fn train_graph_stage(run: &mut Run) -> Result<()> {
    run.stage("train-graph", |run| {
        let (x, g) = run.preprocessed()?;
        for s in run.cfg.seeds() {
            let (model, log, _) = train_graph(&x, &g, &run.cfg.model, s)?;
            let path = run.output(format!("checkpoints/{}/graph.gsngm", seed_dir(s)))?;
            save_checkpoint(&model, path)?;
            run.write_json(format!("reports/{}/graph_training.json", seed_dir(s)), &log)?;
        }
        Ok(())
    })
}

#[derive(Serialize, Deserialize)]
struct InferReport {
    curves: BTreeMap<String, Vec<f64>>,
    freeze_before: FreezeDigest,
    freeze_after: FreezeDigest,
}

fn load_state(run: &Run, s: u64, x: &ExpressionMatrix, g: &GeneGraph) -> Result<IntegrationState> {
    let patient: PatientModel = load_checkpoint(run.checkpoint_path(s, "patient.gsnpm"))?;
    let graph: GraphModel = load_checkpoint(run.checkpoint_path(s, "graph.gsngm"))?;
    IntegrationState::new(patient, graph, graph_context(x, g)?)
}

pub fn integrate(run: &mut Run) -> Result<()> {
    run.stage("integrate", |run| {
        let (x, g) = run.preprocessed()?;
        for s in run.cfg.seeds() {
            let mut state = load_state(run, s, &x, &g)?;
            let before = state.freeze_digest();
            let curves = state.refine_all(&x, &run.cfg.model.infer, s)?;
            let after = state.freeze_digest();
            if before != after {
                return Err(Error::State(format!("seed {s}: frozen parameters changed during refinement")));
            }
            for (y, theta) in &state.snapshots {
                let path = run.output(format!("checkpoints/{}/refined/{y}.gsngm", seed_dir(s)))?;
                save_checkpoint(theta, path)?;
            }
            run.write_json(
                format!("reports/{}/infer.json", seed_dir(s)),
                &InferReport {
                    curves,
                    freeze_before: before,
                    freeze_after: after,
                },
            )?;
        }
        Ok(())
    })
}

pub fn networks(run: &mut Run) -> Result<()> {
    run.stage("networks", |run| {
        let (x, g) = run.preprocessed()?;
        for s in run.cfg.seeds() {
            let mut state = load_state(run, s, &x, &g)?;
            for y in x.subtypes() {
                let theta: GraphModel = load_checkpoint(run.checkpoint_path(s, &format!("refined/{y}.gsngm")))?;
                state.snapshots.insert(y, theta);
            }
            let nets = state.generate_subtype_networks(run.cfg.model.infer.threshold)?;
            info!("seed {s}: network edges {:?} (prior {})", nets.edge_counts(), g.n_edges());
            run.save_networks(&nets, &format!("networks/{}", seed_dir(s)))?;
            run.manifest.edge_counts.insert(seed_dir(s), nets.edge_counts());
        }
        Ok(())
    })
}

pub fn baselines(run: &mut Run) -> Result<()> {
    run.stage("baseline", |run| {
        let (x, _) = run.preprocessed()?;
        for s in run.cfg.seeds() {
            let matched = if run.cfg.baselines.iter().any(|b| b.match_edges) {
                Some((run.networks(s)?.mean_edge_count().round() as usize).max(1))
            } else {
                None
            };
            for spec in run.cfg.baselines.clone() {
                let mut params = spec.params.clone();
                params.seed = s;
                if spec.match_edges {
                    params.top_k_edges = matched;
                }
                let nets = baseline_networks(&x, &params)?;
                run.save_networks(&nets, &Run::baseline_dir(s, &spec.name()))?;
            }
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct PrecisionRow {
    method: String,
    seed: u64,
    subtype: String,
    k: usize,
    precision: f64,
}

fn annotations(run: &Run) -> Result<Option<AnnotationMap>> {
    run.annotation_path().map(load_annotations).transpose()
}

/// Metrics of every method's networks for every seed.
pub fn evaluate(run: &mut Run) -> Result<()> {
    run.stage("evaluate", |run| {
        let ann = annotations(run)?;
        let truth = run.truth_path().map(load_planted_edges).transpose()?;
        let mode = run.cfg.eval.ged_mode;
        let dataset = run.cfg.eval.dataset.clone();
        let mut acc = MetricsAccumulator::new();
        let mut precision = Vec::new();
        for s in run.cfg.seeds() {
            let mut methods = vec![(GESUBNET.to_string(), run.networks(s)?)];
            for spec in &run.cfg.baselines {
                let dir = run.out.join(Run::baseline_dir(s, &spec.name()));
                methods.push((spec.name(), SubtypeNetworkSet::load(dir, "")?));
            }
            for (name, nets) in methods {
                acc.add(&name, &dataset, s, RunMetrics::compute(&nets, mode, ann.as_ref())?);
                if let Some(truth) = &truth {
                    for (y, net) in &nets.networks {
                        let Some(t) = truth.get(y) else { continue };
                        precision.push(PrecisionRow {
                            method: name.clone(),
                            seed: s,
                            subtype: y.clone(),
                            k: t.len(),
                            precision: precision_at_k(net, t, t.len()),
                        });
                    }
                }
            }
        }
        let report = acc.finish(mode, &run.manifest.config_hash);
        report.save_json(run.output("reports/metrics.json")?)?;
        report.save_csv(run.output("reports/metrics.csv")?)?;
        if !precision.is_empty() {
            let path = run.output("reports/precision.csv")?;
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
            for r in &precision {
                w.serialize(r).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    })
}

/// Metrics of loose network files treated as one set, one network per file.
pub fn evaluate_files(run: &mut Run, files: &[PathBuf]) -> Result<()> {
    run.stage("evaluate", |run| {
        let mut graphs = BTreeMap::new();
        for f in files {
            let (g, _) = crate::data_io::load_graph_with_scores(f)?;
            let name = f
                .file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.trim_end_matches(".tsv").trim_end_matches(".edges").to_string())
                .unwrap_or_default();
            let mut key = name.clone();
            let mut n = 1;
            while graphs.contains_key(&key) {
                n += 1;
                key = format!("{name}_{n}");
            }
            graphs.insert(key, g);
        }
        let nets = SubtypeNetworkSet::from_graphs(graphs);
        let ann = annotations(run)?;
        let mut acc = MetricsAccumulator::new();
        let mode = run.cfg.eval.ged_mode;
        acc.add("input", &run.cfg.eval.dataset, run.cfg.seed, RunMetrics::compute(&nets, mode, ann.as_ref())?);
        let report = acc.finish(mode, &run.manifest.config_hash);
        report.save_json(run.output("reports/metrics.json")?)?;
        report.save_csv(run.output("reports/metrics.csv")?)
    })
}

pub fn knockout(run: &mut Run) -> Result<()> {
    run.stage("knockout", |run| {
        let (x, _) = run.preprocessed()?;
        let s = run.cfg.seed;
        let patient: PatientModel = load_checkpoint(run.checkpoint_path(s, "patient.gsnpm"))?;
        let nets = run.networks(s)?;
        let result = run_knockout(&patient, &x, &nets, &run.cfg.knockout)?;
        info!(
            "shift rate: high {:.3}, low {:.3}",
            result.mean_rate("high"),
            result.mean_rate("low")
        );
        result.save_json(run.output("reports/knockout.json")?)?;
        result.save_distances_csv(run.output("reports/knockout_distances.csv")?)?;
        result.save_pca_csv(run.output("reports/knockout_pca.csv")?)?;
        Ok(())
    })
}

/// Table of normalized metrics (method rows, dataset × metric columns) and
/// the shift-rate table.
pub fn report(run: &mut Run) -> Result<()> {
    run.stage("report", |run| {
        let metrics_path = run.out.join("reports/metrics.json");
        if !metrics_path.exists() {
            return Err(Error::Validation("no reports/metrics.json; run evaluate first".into()));
        }
        let metrics = MetricsReport::load_json(&metrics_path)?;
        let path = run.output("reports/table.csv")?;
        write_table(&metrics, &path)?;
        let ko_path = run.out.join("reports/knockout.json");
        if ko_path.exists() {
            let ko = KnockoutResult::load_json(&ko_path)?;
            ko.save_table_csv(run.output("reports/knockout_table.csv")?)?;
            println!("shift rate by subtype (high / low):");
            let subtypes: BTreeSet<&str> = ko.shifts.iter().map(|s| s.subtype.as_str()).collect();
            for y in subtypes {
                let f = |set| ko.rate(y, set).map(|v| format!("{v:.2}")).unwrap_or_default();
                println!("  {y}: {} / {}", f("high"), f("low"));
            }
        } else {
            warn!("no knockout report; the shift-rate table is skipped");
        }
        print!("{}", std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
        Ok(())
    })
}

fn write_table(m: &MetricsReport, path: &Path) -> Result<()> {
    let err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let datasets: BTreeSet<&str> = m.rows.iter().map(|r| r.dataset.as_str()).collect();
    let methods: Vec<&str> = {
        let mut v: Vec<&str> = m.rows.iter().map(|r| r.method.as_str()).collect();
        v.dedup();
        v
    };
    let mut header = vec!["method".to_string()];
    for d in &datasets {
        for metric in ["cdv", "ged", "dcs"] {
            header.push(format!("{d}_{metric}"));
            header.push(format!("{d}_{metric}_sd"));
        }
    }
    w.write_record(&header).map_err(err)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for method in methods {
        let mut rec = vec![method.to_string()];
        for d in &datasets {
            let row = m.row(method, d);
            for pick in [0, 1, 2] {
                let s = row.map(|r| [&r.cdv, &r.ged, &r.dcs][pick]);
                // Normalized mean beside the raw sd.
                rec.push(fmt(s.and_then(|s| s.normalized)));
                rec.push(fmt(s.and_then(|s| s.sd)));
            }
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Every stage in order; generates the synthetic cohort when no expression
/// file is configured.
pub fn all(run: &mut Run) -> Result<()> {
    if run.cfg.paths.expression.is_none() {
        synth(run)?;
    }
    preprocess(run)?;
    train_patient_stage(run)?;
    train_graph_stage(run)?;
    integrate(run)?;
    networks(run)?;
    baselines(run)?;
    evaluate(run)?;
    knockout(run)?;
    report(run)
}
