use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::info;

use crate::error::{Error, Result};

/// Gene → set of function terms (e.g. GO Biological Process identifiers).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotationMap {
    terms: BTreeMap<String, BTreeSet<String>>,
}

impl AnnotationMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, gene: impl Into<String>, term: impl Into<String>) {
        self.terms
            .entry(gene.into())
            .or_default()
            .insert(term.into());
    }

    pub fn terms_of(&self, gene: &str) -> Option<&BTreeSet<String>> {
        self.terms.get(gene)
    }

    pub fn n_genes(&self) -> usize {
        self.terms.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.terms.iter()
    }
}

impl<G: Into<String>, T: Into<String>> FromIterator<(G, T)> for AnnotationMap {
    fn from_iter<I: IntoIterator<Item = (G, T)>>(iter: I) -> Self {
        let mut m = Self::new();
        for (g, t) in iter {
            m.insert(g, t);
        }
        m
    }
}

/// Reads `gene_id<TAB>term_id` lines; many-to-many, `#` comments allowed.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map = AnnotationMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut f = t.split('\t');
        match (f.next(), f.next()) {
            (Some(g), Some(term)) if !g.trim().is_empty() && !term.trim().is_empty() => {
                map.insert(g.trim(), term.trim())
            }
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: "expected gene_id<TAB>term_id".into(),
                })
            }
        }
    }
    info!(
        "loaded annotations {}: {} genes",
        path.display(),
        map.n_genes()
    );
    Ok(map)
}

pub fn save_annotations(map: &AnnotationMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (g, terms) in map.iter() {
        for t in terms {
            writeln!(w, "{g}\t{t}").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_many_to_many() {
        let m: AnnotationMap = [("g1", "GO:1"), ("g1", "GO:2"), ("g2", "GO:1")]
            .into_iter()
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.tsv");
        save_annotations(&m, &p).unwrap();
        let back = load_annotations(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.terms_of("g1").unwrap().len(), 2);
    }
}
