use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cdv, dcs, ebf_count, ged, minmax_normalize, pairwise_values, GedMode};
use crate::data_io::{AnnotationMap, SubtypeNetworkSet};
use crate::error::{Error, Result};

/// Raw metric values of one method on one dataset for one seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// One value per subtype network; `None` where CDV is undefined.
    pub cdv: Vec<Option<f64>>,
    /// One value per subtype pair.
    pub ged: Vec<f64>,
    pub dcs: Vec<f64>,
    pub ebf: Option<usize>,
    pub mean_edges: f64,
}

impl RunMetrics {
    pub fn compute(
        nets: &SubtypeNetworkSet,
        mode: GedMode,
        annotations: Option<&AnnotationMap>,
    ) -> Result<Self> {
        let graphs = nets.graphs();
        let cdv = graphs
            .iter()
            .map(|g| match cdv(g) {
                Ok(v) => Ok(Some(v)),
                Err(Error::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        let ged = pairwise_values(&graphs, |a, b| ged(a, b, mode))?;
        let dcs = pairwise_values(&graphs, dcs)?;
        let ebf = match annotations {
            Some(ann) => match ebf_count(&graphs, ann) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        Ok(Self {
            cdv,
            ged,
            dcs,
            ebf,
            mean_edges: nets.mean_edge_count(),
        })
    }
}

/// Mean ± population sd over every defined value, plus the min-max
/// normalized mean across the methods of a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
    pub undefined: usize,
    pub normalized: Option<f64>,
}

impl MetricSummary {
    fn from_values(values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let n = defined.len();
        let (mean, sd) = if n == 0 {
            (None, None)
        } else {
            let m = defined.iter().sum::<f64>() / n as f64;
            let v = defined.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
            (Some(m), Some(v.sqrt()))
        };
        Self {
            mean,
            sd,
            n,
            undefined: values.len() - n,
            normalized: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub mean_edges: f64,
    pub cdv: MetricSummary,
    pub ged: MetricSummary,
    pub dcs: MetricSummary,
    pub ebf: MetricSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MethodRow>,
    pub ged_mode: GedMode,
    pub config_hash: String,
    /// What the ± columns range over.
    pub deviation_over: String,
}

#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    runs: BTreeMap<(String, String), Vec<(u64, RunMetrics)>>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, method: &str, dataset: &str, seed: u64, run: RunMetrics) {
        self.runs
            .entry((dataset.to_string(), method.to_string()))
            .or_default()
            .push((seed, run));
    }

    pub fn finish(self, ged_mode: GedMode, config_hash: &str) -> MetricsReport {
        let mut rows: Vec<MethodRow> = self
            .runs
            .into_iter()
            .map(|((dataset, method), runs)| {
                let flat = |f: &dyn Fn(&RunMetrics) -> Vec<Option<f64>>| -> Vec<Option<f64>> {
                    runs.iter().flat_map(|(_, r)| f(r)).collect()
                };
                MethodRow {
                    seeds: runs.iter().map(|(s, _)| *s).collect(),
                    mean_edges: runs.iter().map(|(_, r)| r.mean_edges).sum::<f64>() / runs.len() as f64,
                    cdv: MetricSummary::from_values(&flat(&|r| r.cdv.clone())),
                    ged: MetricSummary::from_values(&flat(&|r| r.ged.iter().map(|&v| Some(v)).collect())),
                    dcs: MetricSummary::from_values(&flat(&|r| r.dcs.iter().map(|&v| Some(v)).collect())),
                    ebf: MetricSummary::from_values(&flat(&|r| vec![r.ebf.map(|v| v as f64)])),
                    method,
                    dataset,
                }
            })
            .collect();
        normalize_within_datasets(&mut rows);
        MetricsReport {
            rows,
            ged_mode,
            config_hash: config_hash.to_string(),
            deviation_over: "seeds and subtype networks (cdv) or subtype pairs (ged, dcs); seeds (ebf)".into(),
        }
    }
}

fn normalize_within_datasets(rows: &mut [MethodRow]) {
    let datasets: Vec<String> = {
        let mut d: Vec<String> = rows.iter().map(|r| r.dataset.clone()).collect();
        d.dedup();
        d
    };
    type Pick = fn(&mut MethodRow) -> &mut MetricSummary;
    let picks: [Pick; 4] = [|r| &mut r.cdv, |r| &mut r.ged, |r| &mut r.dcs, |r| &mut r.ebf];
    for ds in datasets {
        for pick in picks {
            let idx: Vec<usize> = (0..rows.len())
                .filter(|&i| rows[i].dataset == ds && pick(&mut rows[i]).mean.is_some())
                .collect();
            if idx.is_empty() {
                continue;
            }
            let vals: Vec<f64> = idx.iter().map(|&i| pick(&mut rows[i]).mean.unwrap()).collect();
            for (&i, v) in idx.iter().zip(minmax_normalize(&vals)) {
                pick(&mut rows[i]).normalized = Some(v);
            }
        }
    }
}

impl MetricsReport {
    pub fn row(&self, method: &str, dataset: &str) -> Option<&MethodRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.dataset == dataset)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&body)?)
    }

    /// One line per method and dataset: raw mean, sd and normalized value of
    /// each metric. Undefined cells are left empty.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header = vec!["method".to_string(), "dataset".into(), "mean_edges".into()];
        for m in ["cdv", "ged", "dcs", "ebf"] {
            header.extend([m.to_string(), format!("{m}_sd"), format!("{m}_norm")]);
        }
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![r.method.clone(), r.dataset.clone(), r.mean_edges.to_string()];
            for s in [&r.cdv, &r.ged, &r.dcs, &r.ebf] {
                rec.extend([cell(s.mean), cell(s.sd), cell(s.normalized)]);
            }
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::GeneGraph;

    fn set(edges: &[&[(&str, &str)]]) -> SubtypeNetworkSet {
        SubtypeNetworkSet::from_graphs(
            edges
                .iter()
                .enumerate()
                .map(|(i, e)| (format!("S{}", i + 1), GeneGraph::from_named_edges(e).unwrap()))
                .collect(),
        )
    }

    #[test]
    fn normalization_spans_methods() {
        let a = set(&[&[("a", "b")], &[("c", "d")]]);
        let b = set(&[&[("a", "b")], &[("a", "b")]]);
        let mut acc = MetricsAccumulator::new();
        acc.add("m1", "d", 0, RunMetrics::compute(&a, GedMode::Approx, None).unwrap());
        acc.add("m2", "d", 0, RunMetrics::compute(&b, GedMode::Approx, None).unwrap());
        let rep = acc.finish(GedMode::Approx, "h");
        let m1 = rep.row("m1", "d").unwrap();
        let m2 = rep.row("m2", "d").unwrap();
        assert_eq!(m1.ged.mean, Some(6.0));
        assert_eq!(m2.ged.mean, Some(0.0));
        assert_eq!(m1.ged.normalized, Some(1.0));
        assert_eq!(m2.ged.normalized, Some(0.0));
        assert_eq!(m2.dcs.mean, Some(1.0));
        assert_eq!(m1.ebf.mean, None);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let a = set(&[&[("a", "b"), ("b", "c")], &[("c", "d")]]);
        let mut acc = MetricsAccumulator::new();
        acc.add("m", "d", 3, RunMetrics::compute(&a, GedMode::Approx, None).unwrap());
        let rep = acc.finish(GedMode::Approx, "abc");
        let dir = tempfile::tempdir().unwrap();
        rep.save_json(dir.path().join("m.json")).unwrap();
        assert_eq!(MetricsReport::load_json(dir.path().join("m.json")).unwrap(), rep);
        rep.save_csv(dir.path().join("m.csv")).unwrap();
        let body = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert!(body.starts_with("method,dataset,mean_edges,cdv,cdv_sd,cdv_norm"));
        assert_eq!(body.lines().count(), 2);
    }
}
