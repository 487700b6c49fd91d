//! Simulated gene knockout: rank genes by how much their degree differs
//! across subtype networks, split the ranking into a high and a low set, and
//! measure how often knocking out a random tenth of a set moves a subtype
//! cohort further than its own spread (the shift rate).

mod pca;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::{info, warn};
use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use pca::{pca_2d, Pca2};

use crate::data_io::{ExpressionMatrix, SubtypeNetworkSet};
use crate::error::{Error, Result};
use crate::numerics::{rng, Matrix};
use crate::patient_m::PatientModel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Zero,
    /// Mean of the lowest 10% of per-gene means in the knocked matrix.
    #[default]
    LowestDecileMean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSpace {
    /// Patient-M representations `Z_p`.
    #[default]
    Latent,
    /// Raw expression rows.
    Expression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnockoutConfig {
    pub iterations: usize,
    pub p_select: f64,
    pub k: f64,
    pub baseline_mode: BaselineMode,
    pub distance_space: DistanceSpace,
    pub seed: u64,
}

impl Default for KnockoutConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            p_select: 0.10,
            k: 1.0,
            baseline_mode: BaselineMode::default(),
            distance_space: DistanceSpace::default(),
            seed: 0,
        }
    }
}

impl KnockoutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_select > 0.0 && self.p_select <= 1.0) {
            return Err(Error::Config(format!(
                "p_select {} outside (0, 1]",
                self.p_select
            )));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("knockout needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Degree disparity of every gene appearing in some network.
pub fn rank_genes(nets: &SubtypeNetworkSet) -> Result<Vec<(String, usize)>> {
    rank_genes_in(nets, &[])
}

/// Degree disparity `max_y k_g(G_y) − min_y k_g(G_y)` over the genes of
/// `universe` plus every gene present in a network, with absent genes at
/// degree 0. Sorted by disparity descending, then gene ID.
pub fn rank_genes_in(nets: &SubtypeNetworkSet, universe: &[String]) -> Result<Vec<(String, usize)>> {
    if nets.len() < 2 {
        return Err(Error::Validation(format!(
            "ranking needs at least 2 networks, got {}",
            nets.len()
        )));
    }
    let mut genes: BTreeSet<&str> = universe.iter().map(String::as_str).collect();
    for g in nets.graphs() {
        genes.extend(g.gene_ids().iter().map(String::as_str));
    }
    let degree_maps: Vec<BTreeMap<&str, usize>> = nets
        .graphs()
        .into_iter()
        .map(|g| {
            g.gene_ids()
                .iter()
                .map(String::as_str)
                .zip(g.degrees())
                .collect()
        })
        .collect();
    let mut ranked: Vec<(String, usize)> = genes
        .into_iter()
        .map(|gene| {
            let degs = degree_maps.iter().map(|m| m.get(gene).copied().unwrap_or(0));
            let hi = degs.clone().max().unwrap_or(0);
            let lo = degs.min().unwrap_or(0);
            (gene.to_string(), hi - lo)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Genes above one standard deviation of the disparities versus the rest.
/// Falls back to splitting the ranking at its midpoint when either side
/// would be empty.
pub fn partition(ranked: &[(String, usize)]) -> Result<(Vec<String>, Vec<String>)> {
    if ranked.is_empty() {
        return Err(Error::Validation("cannot partition an empty ranking".into()));
    }
    let n = ranked.len() as f64;
    let mean = ranked.iter().map(|r| r.1 as f64).sum::<f64>() / n;
    let sd = (ranked.iter().map(|r| (r.1 as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (high, low): (Vec<_>, Vec<_>) = ranked.iter().partition(|r| r.1 as f64 > sd);
    if !high.is_empty() && !low.is_empty() {
        let names = |v: Vec<&(String, usize)>| v.into_iter().map(|r| r.0.clone()).collect();
        return Ok((names(high), names(low)));
    }
    warn!("disparity threshold left one side empty; splitting the ranking at its median");
    let cut = ranked.len().div_ceil(2);
    let names = |s: &[(String, usize)]| s.iter().map(|r| r.0.clone()).collect();
    Ok((names(&ranked[..cut]), names(&ranked[cut..])))
}

/// Mean of the lowest 10% (at least one) of the per-gene means.
pub fn lowest_decile_mean(x: &Matrix) -> f64 {
    let mut means = x.column_means();
    if means.is_empty() {
        return 0.0;
    }
    means.sort_by(f64::total_cmp);
    let take = means.len().div_ceil(10).max(1);
    means[..take].iter().sum::<f64>() / take as f64
}

fn baseline_value(x: &Matrix, mode: BaselineMode) -> f64 {
    match mode {
        BaselineMode::Zero => 0.0,
        BaselineMode::LowestDecileMean => lowest_decile_mean(x),
    }
}

fn knock_columns(x: &Matrix, cols: &[usize], value: f64) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for &c in cols {
            row[c] = value;
        }
    }
    out
}

fn gene_indices(x: &ExpressionMatrix, genes: &[String]) -> Result<Vec<usize>> {
    genes
        .iter()
        .map(|g| {
            x.gene_index(g)
                .ok_or_else(|| Error::Validation(format!("unknown gene {g} in knockout set")))
        })
        .collect()
}

/// Sets the columns of `genes` to the non-expression baseline.
pub fn knockout_expression(
    x: &ExpressionMatrix,
    genes: &[String],
    mode: BaselineMode,
) -> Result<ExpressionMatrix> {
    let cols = gene_indices(x, genes)?;
    let mut out = x.clone();
    out.values = knock_columns(&x.values, &cols, baseline_value(&x.values, mode));
    Ok(out)
}

/// Outcome of repeated knockouts of one gene set on one cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRate {
    pub rate: f64,
    /// Spread of the before group around its centroid.
    pub sigma: f64,
    /// Mean before/after displacement per iteration.
    pub distances: Vec<f64>,
    pub genes_per_iteration: usize,
}

fn embed(model: &PatientModel, x: &Matrix, space: DistanceSpace) -> Result<Matrix> {
    match space {
        DistanceSpace::Latent => model.embed(x),
        DistanceSpace::Expression => Ok(x.clone()),
    }
}

fn centroid_spread(e: &Matrix) -> f64 {
    let c = e.column_means();
    let d: Vec<f64> = (0..e.rows())
        .map(|r| {
            e.row(r)
                .iter()
                .zip(&c)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let m = d.iter().sum::<f64>() / d.len() as f64;
    (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
}

fn mean_displacement(a: &Matrix, b: &Matrix) -> f64 {
    (0..a.rows())
        .map(|r| {
            a.row(r)
                .iter()
                .zip(b.row(r))
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / a.rows() as f64
}

/// Fraction of `T` random knockouts of `⌈p_select·|set|⌉` genes whose mean
/// patient displacement exceeds `k·σ`, with `σ` the standard deviation of
/// the before-group distances to its centroid. `label` namespaces the
/// per-iteration random streams.
pub fn shift_rate(
    model: &PatientModel,
    x: &ExpressionMatrix,
    genes: &[String],
    cfg: &KnockoutConfig,
    label: &str,
) -> Result<ShiftRate> {
    cfg.validate()?;
    if x.n_patients() < 3 {
        return Err(Error::Validation(format!(
            "shift rate needs at least 3 patients, got {}",
            x.n_patients()
        )));
    }
    let cols = gene_indices(x, genes)?;
    let before = embed(model, &x.values, cfg.distance_space)?;
    let value = baseline_value(&x.values, cfg.baseline_mode);
    let n_pick = if cols.is_empty() {
        0
    } else {
        ((cfg.p_select * cols.len() as f64).ceil() as usize).clamp(1, cols.len())
    };
    let mut distances = Vec::with_capacity(cfg.iterations);
    let mut hits = 0usize;
    let mut sigma = 0.0;
    for t in 0..cfg.iterations {
        let mut r = rng::stream(cfg.seed, &format!("knockout/{label}/{t}"));
        let picked: Vec<usize> = index::sample(&mut r, cols.len(), n_pick)
            .into_iter()
            .map(|i| cols[i])
            .collect();
        // The before group is the same every iteration, so its spread is too.
        sigma = centroid_spread(&before);
        if sigma == 0.0 {
            return Err(Error::UndefinedMetric(format!(
                "cohort {label} has zero spread around its centroid"
            )));
        }
        let d = if picked.is_empty() {
            0.0
        } else {
            let after = embed(model, &knock_columns(&x.values, &picked, value), cfg.distance_space)?;
            mean_displacement(&before, &after)
        };
        hits += usize::from(d > cfg.k * sigma);
        distances.push(d);
    }
    Ok(ShiftRate {
        rate: hits as f64 / cfg.iterations as f64,
        sigma,
        distances,
        genes_per_iteration: n_pick,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetShift {
    pub subtype: String,
    /// `high` or `low`.
    pub set: String,
    pub n_genes: usize,
    #[serde(flatten)]
    pub shift: ShiftRate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaRow {
    pub patient_id: String,
    pub before_x: f64,
    pub before_y: f64,
    pub after_x: f64,
    pub after_y: f64,
    pub subtype: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnockoutResult {
    pub config: KnockoutConfig,
    pub ranking: Vec<(String, usize)>,
    pub high: Vec<String>,
    pub low: Vec<String>,
    pub shifts: Vec<SetShift>,
    /// Every patient before and after knocking out the whole high set,
    /// projected on the top two principal axes of the before embeddings.
    pub pca: Vec<PcaRow>,
}

impl KnockoutResult {
    pub fn rate(&self, subtype: &str, set: &str) -> Option<f64> {
        self.shifts
            .iter()
            .find(|s| s.subtype == subtype && s.set == set)
            .map(|s| s.shift.rate)
    }

    /// Mean shift rate of a set over subtypes.
    pub fn mean_rate(&self, set: &str) -> f64 {
        let v: Vec<f64> = self
            .shifts
            .iter()
            .filter(|s| s.set == set)
            .map(|s| s.shift.rate)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
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

    /// `subtype,set,iteration,distance,threshold` per iteration.
    pub fn save_distances_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = writer(path.as_ref())?;
        row(&mut w, path.as_ref(), ["subtype", "set", "iteration", "distance", "threshold"])?;
        for s in &self.shifts {
            let thr = (self.config.k * s.shift.sigma).to_string();
            for (t, d) in s.shift.distances.iter().enumerate() {
                row(&mut w, path.as_ref(), [&s.subtype, &s.set, &t.to_string(), &d.to_string(), &thr])?;
            }
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn save_pca_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = writer(path.as_ref())?;
        for r in &self.pca {
            w.serialize(r).map_err(|e| csv_err(path.as_ref(), e))?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    /// Shift rate per subtype (rows) for the high and low sets (columns).
    pub fn save_table_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = writer(path.as_ref())?;
        row(&mut w, path.as_ref(), ["subtype", "high", "low"])?;
        let subtypes: BTreeSet<&str> = self.shifts.iter().map(|s| s.subtype.as_str()).collect();
        let cell = |y: &str, set: &str| self.rate(y, set).map(|v| v.to_string()).unwrap_or_default();
        for y in subtypes {
            row(&mut w, path.as_ref(), [y, &cell(y, "high"), &cell(y, "low")])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn row<I, S>(w: &mut csv::Writer<std::fs::File>, path: &Path, rec: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(rec).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Ranks and partitions the genes of `x` by disparity across `nets`, then
/// measures the shift rate of both sets on every subtype cohort.
pub fn run_knockout(
    model: &PatientModel,
    x: &ExpressionMatrix,
    nets: &SubtypeNetworkSet,
    cfg: &KnockoutConfig,
) -> Result<KnockoutResult> {
    cfg.validate()?;
    let ranking = rank_genes_in(nets, &x.gene_ids)?;
    // Genes the networks mention but the matrix lacks cannot be knocked out.
    let ranking: Vec<(String, usize)> = ranking
        .into_iter()
        .filter(|(g, _)| x.gene_index(g).is_some())
        .collect();
    let (high, low) = partition(&ranking)?;
    info!("knockout sets: {} high, {} low", high.len(), low.len());
    let mut shifts = Vec::new();
    for y in x.subtypes() {
        let xy = x.subset_for_label(&y);
        for (name, set) in [("high", &high), ("low", &low)] {
            let shift = shift_rate(model, &xy, set, cfg, &format!("{y}/{name}"))?;
            info!("subtype {y}, {name} set: shift rate {:.2}", shift.rate);
            shifts.push(SetShift {
                subtype: y.clone(),
                set: name.into(),
                n_genes: set.len(),
                shift,
            });
        }
    }
    let pca = pca_rows(model, x, &high, cfg)?;
    Ok(KnockoutResult {
        config: cfg.clone(),
        ranking,
        high,
        low,
        shifts,
        pca,
    })
}

fn pca_rows(
    model: &PatientModel,
    x: &ExpressionMatrix,
    high: &[String],
    cfg: &KnockoutConfig,
) -> Result<Vec<PcaRow>> {
    let knocked = knockout_expression(x, high, cfg.baseline_mode)?;
    let before = embed(model, &x.values, cfg.distance_space)?;
    let after = embed(model, &knocked.values, cfg.distance_space)?;
    let p = pca_2d(&before)?;
    let (b, a) = (p.project(&before)?, p.project(&after)?);
    let labels = x.labels.clone().unwrap_or_else(|| vec![String::new(); x.n_patients()]);
    Ok((0..x.n_patients())
        .map(|i| PcaRow {
            patient_id: x.patient_ids[i].clone(),
            before_x: b.get(i, 0),
            before_y: b.get(i, 1),
            after_x: a.get(i, 0),
            after_y: a.get(i, 1),
            subtype: labels[i].clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::GeneGraph;

    fn nets(graphs: Vec<GeneGraph>) -> SubtypeNetworkSet {
        SubtypeNetworkSet::from_graphs(
            graphs
                .into_iter()
                .enumerate()
                .map(|(i, g)| (format!("S{i}"), g))
                .collect(),
        )
    }

    #[test]
    fn disparity_is_degree_range() {
        let hub = GeneGraph::from_named_edges(&[("h", "a"), ("h", "b"), ("h", "c"), ("h", "d"), ("h", "e")]).unwrap();
        let other = GeneGraph::from_named_edges(&[("a", "b")]).unwrap();
        let r = rank_genes(&nets(vec![hub, other])).unwrap();
        assert_eq!(r[0], ("h".to_string(), 5));
        let get = |g: &str| r.iter().find(|x| x.0 == g).unwrap().1;
        assert_eq!(get("a"), 0);
        assert_eq!(get("c"), 1);
    }

    #[test]
    fn ties_break_by_gene_id() {
        let g = GeneGraph::from_named_edges(&[("b", "a")]).unwrap();
        let e = GeneGraph::from_named_edges(&[("c", "d")]).unwrap();
        let r = rank_genes(&nets(vec![g, e])).unwrap();
        let names: Vec<&str> = r.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(names, ["a", "b", "c", "d"]);
        assert!(rank_genes(&nets(vec![GeneGraph::empty(vec![]).unwrap()])).is_err());
    }

    #[test]
    fn partition_examples() {
        let r: Vec<(String, usize)> = [("a", 5), ("b", 5), ("c", 0), ("d", 0)]
            .iter()
            .map(|&(g, d)| (g.to_string(), d))
            .collect();
        let (h, l) = partition(&r).unwrap();
        assert_eq!(h, ["a", "b"]);
        assert_eq!(l, ["c", "d"]);
        let flat: Vec<(String, usize)> = (0..5).map(|i| (format!("g{i}"), 2)).collect();
        let (h, l) = partition(&flat).unwrap();
        assert_eq!((h.len(), l.len()), (3, 2));
    }

    fn expr(rows: &[&[f64]]) -> ExpressionMatrix {
        let m = Matrix::from_rows(rows).unwrap();
        let genes = (0..m.cols()).map(|i| format!("g{i}")).collect();
        let pats = (0..m.rows()).map(|i| format!("p{i}")).collect();
        ExpressionMatrix::new(pats, genes, m, None).unwrap()
    }

    #[test]
    fn knockout_modes() {
        let x = expr(&[&[1.0, 2.0, 3.0], &[3.0, 4.0, 5.0]]);
        assert_eq!(knockout_expression(&x, &[], BaselineMode::Zero).unwrap(), x);
        let z = knockout_expression(&x, &["g1".into()], BaselineMode::Zero).unwrap();
        assert_eq!(z.values.column_values(1), vec![0.0, 0.0]);
        assert_eq!(z.values.column_values(0), x.values.column_values(0));
        assert!(knockout_expression(&x, &["nope".into()], BaselineMode::Zero).is_err());
    }

    #[test]
    fn lowest_decile_matches_brute_force() {
        // 25 genes: the lowest decile is the 3 smallest gene means.
        let cols = 25;
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|r| (0..cols).map(|c| ((c * 7) % 25) as f64 + r as f64 * 0.5).collect())
            .collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let mut means: Vec<f64> = (0..cols)
            .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / 4.0)
            .collect();
        means.sort_by(f64::total_cmp);
        let want = (means[0] + means[1] + means[2]) / 3.0;
        assert!((lowest_decile_mean(&m) - want).abs() < 1e-12);
    }

    #[test]
    fn spread_is_sd_of_centroid_distances() {
        // Distances to the centroid (0, 0): 1, 1, 3, 3 → sd 1.
        let e = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 3.0], [0.0, -3.0]]).unwrap();
        assert!((centroid_spread(&e) - 1.0).abs() < 1e-12);
    }
}
