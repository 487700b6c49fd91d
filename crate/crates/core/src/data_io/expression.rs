use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Patients × genes expression values, optionally labeled with subtypes.
///
/// Missing cells are held as `NaN` until [`filter_genes`] removes the affected genes.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    pub patient_ids: Vec<String>,
    pub gene_ids: Vec<String>,
    pub values: Matrix,
    pub labels: Option<Vec<String>>,
}

impl ExpressionMatrix {
    pub fn new(
        patient_ids: Vec<String>,
        gene_ids: Vec<String>,
        values: Matrix,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let x = Self {
            patient_ids,
            gene_ids,
            values,
            labels,
        };
        x.validate()?;
        Ok(x)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.shape() != (self.patient_ids.len(), self.gene_ids.len()) {
            return Err(Error::Dimension(format!(
                "{} patients x {} genes but values are {:?}",
                self.patient_ids.len(),
                self.gene_ids.len(),
                self.values.shape()
            )));
        }
        if let Some(dup) = first_duplicate(&self.patient_ids) {
            return Err(Error::Validation(format!("duplicate patient id '{dup}'")));
        }
        if let Some(dup) = first_duplicate(&self.gene_ids) {
            return Err(Error::Validation(format!("duplicate gene id '{dup}'")));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.patient_ids.len() {
                return Err(Error::Validation(format!(
                    "{} labels for {} patients",
                    labels.len(),
                    self.patient_ids.len()
                )));
            }
        }
        Ok(())
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    /// Distinct labels in sorted order.
    pub fn subtypes(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .labels
            .iter()
            .flatten()
            .cloned()
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        out.sort();
        out
    }

    pub fn patients_with_label(&self, label: &str) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..l.len()).filter(|&i| l[i] == label).collect(),
            None => Vec::new(),
        }
    }

    pub fn select_patients(&self, idx: &[usize]) -> Self {
        Self {
            patient_ids: idx.iter().map(|&i| self.patient_ids[i].clone()).collect(),
            gene_ids: self.gene_ids.clone(),
            values: self.values.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    pub fn select_genes(&self, idx: &[usize]) -> Self {
        Self {
            patient_ids: self.patient_ids.clone(),
            gene_ids: idx.iter().map(|&i| self.gene_ids[i].clone()).collect(),
            values: self.values.select_cols(idx),
            labels: self.labels.clone(),
        }
    }

    pub fn subset_for_label(&self, label: &str) -> Self {
        self.select_patients(&self.patients_with_label(label))
    }

    pub fn gene_index(&self, gene: &str) -> Option<usize> {
        self.gene_ids.iter().position(|g| g == gene)
    }
}

pub(crate) fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter()
        .find(|id| !seen.insert(id.as_str()))
        .map(|s| s.as_str())
}

fn delimiter_for(path: &Path, first_line: &str) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("txt") => b'\t',
        Some(ext) if ext.eq_ignore_ascii_case("csv") => b',',
        _ if first_line.contains('\t') => b'\t',
        _ => b',',
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "NA" || c == "N/A" || c == "NaN"
}

/// Reads a patients-as-rows expression table.
///
/// Header: `patient_id[,label],<gene ids…>`. The label column is recognized
/// by a second header cell named `label` or `subtype`. Empty cells and `NA`
/// are missing values.
pub fn load_expression(path: impl AsRef<Path>) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first_line = text.lines().next().unwrap_or("");
    let delim = delimiter_for(path, first_line);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delim)
        .from_reader(text.as_bytes());
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty file".into())),
    };
    let has_labels = header
        .get(1)
        .map(|h| h.trim().eq_ignore_ascii_case("label") || h.trim().eq_ignore_ascii_case("subtype"))
        .unwrap_or(false);
    let first_gene = if has_labels { 2 } else { 1 };
    let gene_ids: Vec<String> = header
        .iter()
        .skip(first_gene)
        .map(|s| s.trim().to_string())
        .collect();
    if gene_ids.is_empty() {
        return Err(parse_err(1, "header lists no genes".into()));
    }
    if let Some(dup) = first_duplicate(&gene_ids) {
        return Err(Error::Validation(format!(
            "duplicate gene id '{dup}' in {}",
            path.display()
        )));
    }

    let width = header.len();
    let mut patient_ids = Vec::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for rec in records {
        let rec = rec
            .map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        patient_ids.push(rec[0].trim().to_string());
        if has_labels {
            labels.push(rec[1].trim().to_string());
        }
        for (k, cell) in rec.iter().skip(first_gene).enumerate() {
            if is_missing(cell) {
                data.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    line,
                    format!("non-numeric value '{cell}' for gene '{}'", gene_ids[k]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value '{cell}'")));
            }
            data.push(v);
        }
    }
    if let Some(dup) = first_duplicate(&patient_ids) {
        return Err(Error::Validation(format!(
            "duplicate patient id '{dup}' in {}",
            path.display()
        )));
    }
    let values = Matrix::new(patient_ids.len(), gene_ids.len(), data)?;
    info!(
        "loaded expression {}: {} patients x {} genes{}",
        path.display(),
        values.rows(),
        values.cols(),
        if has_labels { ", labeled" } else { "" }
    );
    ExpressionMatrix::new(patient_ids, gene_ids, values, has_labels.then_some(labels))
}

/// Writes the table read by [`load_expression`]; values use the shortest
/// representation that parses back to the identical `f64`.
pub fn save_expression(x: &ExpressionMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let delim = if path.extension().is_some_and(|e| e == "tsv") {
        '\t'
    } else {
        ','
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "patient_id").map_err(io)?;
    if x.labels.is_some() {
        write!(w, "{delim}label").map_err(io)?;
    }
    for g in &x.gene_ids {
        write!(w, "{delim}{g}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (i, pid) in x.patient_ids.iter().enumerate() {
        write!(w, "{pid}").map_err(io)?;
        if let Some(l) = &x.labels {
            write!(w, "{delim}{}", l[i]).map_err(io)?;
        }
        for v in x.values.row(i) {
            if v.is_nan() {
                write!(w, "{delim}NA").map_err(io)?;
            } else {
                write!(w, "{delim}{v}").map_err(io)?;
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Drops genes with any missing value or with zero expression in strictly
/// more than `zero_fraction_threshold · M` patients. Gene order is preserved.
pub fn filter_genes(
    x: &ExpressionMatrix,
    zero_fraction_threshold: f64,
) -> Result<ExpressionMatrix> {
    if !(zero_fraction_threshold > 0.0 && zero_fraction_threshold <= 1.0) {
        return Err(Error::Config(format!(
            "zero-fraction threshold must lie in (0, 1], got {zero_fraction_threshold}"
        )));
    }
    let m = x.n_patients() as f64;
    let limit = zero_fraction_threshold * m;
    let mut keep = Vec::new();
    let (mut dropped_missing, mut dropped_zero) = (0usize, 0usize);
    for g in 0..x.n_genes() {
        let col = x.values.column_values(g);
        if col.iter().any(|v| v.is_nan()) {
            dropped_missing += 1;
            continue;
        }
        let zeros = col.iter().filter(|&&v| v == 0.0).count() as f64;
        if zeros > limit + 1e-9 * m {
            dropped_zero += 1;
            continue;
        }
        keep.push(g);
    }
    info!(
        "filter_genes: kept {} of {} genes ({dropped_missing} with missing values, {dropped_zero} mostly zero)",
        keep.len(),
        x.n_genes()
    );
    if keep.is_empty() {
        return Err(Error::EmptyResult(
            "every gene was removed by filtering".into(),
        ));
    }
    Ok(x.select_genes(&keep))
}

/// `v ↦ log2(v + 1)`; missing values stay missing.
pub fn log_transform(x: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    if let Some(v) = x.values.data().iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!(
            "log transform of negative expression {v}"
        )));
    }
    let mut out = x.clone();
    out.values = x.values.map(|v| (v + 1.0).log2());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        (dir, p)
    }

    fn toy(values: &[&[f64]]) -> ExpressionMatrix {
        let m = Matrix::from_rows(values).unwrap();
        ExpressionMatrix::new(
            (0..m.rows()).map(|i| format!("p{i}")).collect(),
            (0..m.cols()).map(|j| format!("g{j}")).collect(),
            m,
            None,
        )
        .unwrap()
    }

    #[test]
    fn parses_labeled_csv() {
        let (_d, p) = write_tmp(
            "x.csv",
            "patient_id,label,a,b,c\np1,LumA,1,2,3\np2,Basal,4,5,6\n",
        );
        let x = load_expression(&p).unwrap();
        assert_eq!((x.n_patients(), x.n_genes()), (2, 3));
        assert_eq!(
            x.labels.as_deref().unwrap(),
            &["LumA".to_string(), "Basal".to_string()]
        );
        assert_eq!(x.values.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn unlabeled_tsv_and_missing_cells() {
        let (_d, p) = write_tmp("x.tsv", "patient_id\ta\tb\np1\t1\tNA\np2\t\t2\n");
        let x = load_expression(&p).unwrap();
        assert!(x.labels.is_none());
        assert!(x.values.get(0, 1).is_nan());
        assert!(x.values.get(1, 0).is_nan());
    }

    #[test]
    fn duplicate_gene_names_the_gene() {
        let (_d, p) = write_tmp("x.csv", "patient_id,a,b,a\np1,1,2,3\n");
        match load_expression(&p) {
            Err(Error::Validation(msg)) => assert!(msg.contains("'a'")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_reports_line() {
        let (_d, p) = write_tmp("x.csv", "patient_id,a,b\np1,1,2\np2,3\n");
        match load_expression(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_is_parse_error() {
        let (_d, p) = write_tmp("x.csv", "patient_id,a\np1,abc\n");
        assert!(matches!(
            load_expression(&p),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn zero_fraction_rule_is_strict() {
        // 20 patients: gene 0 zero in 2 (10%) → kept; gene 1 zero in 3 (15%) → removed.
        let mut rows = vec![vec![1.0, 1.0, 1.0]; 20];
        rows[0][0] = 0.0;
        rows[1][0] = 0.0;
        for r in rows.iter_mut().take(3) {
            r[1] = 0.0;
        }
        let rows: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let out = filter_genes(&toy(&rows), 0.10).unwrap();
        assert_eq!(out.gene_ids, vec!["g0", "g2"]);
        assert_eq!(out.n_patients(), 20);
    }

    #[test]
    fn eleven_percent_zero_removed() {
        let mut rows = vec![vec![2.0, 2.0]; 100];
        for r in rows.iter_mut().take(11) {
            r[0] = 0.0;
        }
        let rows: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert_eq!(
            filter_genes(&toy(&rows), 0.10).unwrap().gene_ids,
            vec!["g1"]
        );
    }

    #[test]
    fn missing_value_removes_gene() {
        let x = toy(&[&[1.0, f64::NAN], &[1.0, 2.0]]);
        assert_eq!(filter_genes(&x, 0.5).unwrap().gene_ids, vec!["g0"]);
    }

    #[test]
    fn all_removed_is_empty_result() {
        let x = toy(&[&[0.0], &[0.0]]);
        assert!(matches!(filter_genes(&x, 0.1), Err(Error::EmptyResult(_))));
        assert!(matches!(filter_genes(&x, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn log2_plus_one() {
        let x = log_transform(&toy(&[&[0.0, 1.0, 7.0]])).unwrap();
        assert_eq!(x.values.data(), &[0.0, 1.0, 3.0]);
        assert!(matches!(
            log_transform(&toy(&[&[-1.0]])),
            Err(Error::Domain(_))
        ));
    }
}
