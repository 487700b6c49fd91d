use rand::seq::SliceRandom;
use rand::Rng;

use super::BaselineConfig;
use crate::error::{Error, Result};
use crate::numerics::{rng, Matrix};

/// Null pairs evaluated per permutation once the gene count makes all pairs too many.
const NULL_PAIRS_PER_PERMUTATION: usize = 2000;

/// Each gene's values mapped to equal-width bins over that gene's own range.
#[derive(Clone, Debug)]
pub struct BinnedGenes {
    pub n_bins: usize,
    pub bins: Vec<Vec<usize>>,
}

impl BinnedGenes {
    pub fn new(x: &Matrix, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::Config(format!("need at least 2 bins, got {n_bins}")));
        }
        let bins = (0..x.cols())
            .map(|c| {
                let col = x.column_values(c);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let width = (hi - lo) / n_bins as f64;
                col.iter()
                    .map(|&v| {
                        if width > 0.0 {
                            (((v - lo) / width) as usize).min(n_bins - 1)
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n_bins, bins })
    }

    pub fn n_genes(&self) -> usize {
        self.bins.len()
    }
}

/// Plug-in mutual information (nats) between two binned variables.
pub fn mutual_information(a: &[usize], b: &[usize], n_bins: usize) -> f64 {
    let m = a.len();
    if m == 0 {
        return 0.0;
    }
    let mut joint = vec![0usize; n_bins * n_bins];
    let mut pa = vec![0usize; n_bins];
    let mut pb = vec![0usize; n_bins];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * n_bins + y] += 1;
        pa[x] += 1;
        pb[y] += 1;
    }
    let mf = m as f64;
    let mut mi = 0.0;
    for x in 0..n_bins {
        for y in 0..n_bins {
            let c = joint[x * n_bins + y];
            if c > 0 {
                let c = c as f64;
                mi += c / mf * (c * mf / (pa[x] as f64 * pb[y] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

pub fn mutual_information_matrix(binned: &BinnedGenes) -> Matrix {
    let n = binned.n_genes();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = mutual_information(&binned.bins[i], &binned.bins[j], binned.n_bins);
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// Pooled MI of independently shuffled genes; returns the configured quantile.
fn null_threshold(binned: &BinnedGenes, usable: &[usize], cfg: &BaselineConfig) -> f64 {
    let mut r = rng::stream(cfg.seed, "aracne/permutation");
    let n = usable.len();
    let all_pairs = n * (n - 1) / 2;
    let mut null = Vec::new();
    for _ in 0..cfg.permutations {
        let shuffled: Vec<Vec<usize>> = usable
            .iter()
            .map(|&g| {
                let mut v = binned.bins[g].clone();
                v.shuffle(&mut r);
                v
            })
            .collect();
        if all_pairs <= NULL_PAIRS_PER_PERMUTATION {
            for i in 0..n {
                for j in i + 1..n {
                    null.push(mutual_information(&shuffled[i], &shuffled[j], binned.n_bins));
                }
            }
        } else {
            for _ in 0..NULL_PAIRS_PER_PERMUTATION {
                let i = r.random_range(0..n);
                let mut j = r.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                null.push(mutual_information(&shuffled[i], &shuffled[j], binned.n_bins));
            }
        }
    }
    null.sort_by(f64::total_cmp);
    let rank = ((cfg.null_quantile * null.len() as f64).ceil() as usize).clamp(1, null.len());
    null[rank - 1]
}

/// Drops, for every triangle of candidate edges, any edge whose MI is below
/// the smaller of the other two by more than `tolerance`. Removal is
/// simultaneous, so the result does not depend on visiting order.
pub(crate) fn dpi_prune(
    n: usize,
    edges: &[((usize, usize), f64)],
    tolerance: f64,
) -> Vec<((usize, usize), f64)> {
    let mut mi = vec![f64::NAN; n * n];
    let mut adj = vec![Vec::new(); n];
    for &((i, j), v) in edges {
        mi[i * n + j] = v;
        mi[j * n + i] = v;
        adj[i].push(j);
        adj[j].push(i);
    }
    edges
        .iter()
        .copied()
        .filter(|&((i, j), v)| {
            !adj[i].iter().any(|&k| {
                let (a, b) = (mi[i * n + k], mi[j * n + k]);
                k != j && !b.is_nan() && v < a.min(b) - tolerance
            })
        })
        .collect()
}

/// Candidate edges (MI above the permutation null, or the `top_k` highest
/// when set) after DPI pruning, with their MI.
pub fn aracne_scores(x: &Matrix, constant: &[bool], cfg: &BaselineConfig) -> Result<Vec<((usize, usize), f64)>> {
    let binned = BinnedGenes::new(x, cfg.mi_bins)?;
    let usable: Vec<usize> = (0..x.cols()).filter(|&g| !constant[g]).collect();
    if usable.len() < 2 {
        return Ok(Vec::new());
    }
    let mut cand = Vec::new();
    for (a, &i) in usable.iter().enumerate() {
        for &j in &usable[a + 1..] {
            cand.push(((i, j), mutual_information(&binned.bins[i], &binned.bins[j], binned.n_bins)));
        }
    }
    let cand = match cfg.top_k_edges {
        Some(k) => {
            cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            cand.truncate(k);
            cand.sort_by_key(|e| e.0);
            cand
        }
        None => {
            let t = null_threshold(&binned, &usable, cfg);
            cand.into_iter().filter(|&(_, v)| v > t).collect()
        }
    };
    Ok(dpi_prune(x.cols(), &cand, cfg.dpi_tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Uniform};

    #[test]
    fn independent_uniforms_fall_below_the_null() {
        let mut r = rng::stream(11, "u");
        let u = Uniform::new(0.0, 1.0).unwrap();
        let x = Matrix::new(300, 2, (0..600).map(|_| u.sample(&mut r)).collect()).unwrap();
        let kept = aracne_scores(&x, &[false, false], &BaselineConfig::default()).unwrap();
        assert!(kept.is_empty(), "{kept:?}");
    }

    #[test]
    fn self_information_dominates() {
        let mut r = rng::stream(12, "u");
        let u = Uniform::new(0.0, 1.0).unwrap();
        let x = Matrix::new(100, 4, (0..400).map(|_| u.sample(&mut r)).collect()).unwrap();
        let mi = mutual_information_matrix(&BinnedGenes::new(&x, 10).unwrap());
        for g in 0..4 {
            for h in 0..4 {
                assert!(mi.get(g, g) >= mi.get(g, h));
            }
        }
    }

    #[test]
    fn mi_of_a_fair_bit_with_itself_is_ln2() {
        let a = vec![0, 1, 0, 1, 1, 0];
        assert!((mutual_information(&a, &a, 2) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn chain_indirect_edge_is_removed() {
        // X = Y + noise, Z = Y²: (X, Z) only shares information through Y.
        let mut r = rng::stream(13, "chain");
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let m = 400;
        let mut v = Vec::with_capacity(m * 3);
        for _ in 0..m {
            let y: f64 = u.sample(&mut r);
            let x = y + 0.3 * u.sample(&mut r);
            v.extend([x, y, y * y]);
        }
        let x = Matrix::new(m, 3, v).unwrap();
        let kept = aracne_scores(&x, &[false; 3], &BaselineConfig::default()).unwrap();
        let pairs: Vec<(usize, usize)> = kept.iter().map(|e| e.0).collect();
        assert!(pairs.contains(&(0, 1)));
        assert!(pairs.contains(&(1, 2)));
        assert!(!pairs.contains(&(0, 2)));
    }

    #[test]
    fn dpi_only_removes() {
        let edges = vec![((0, 1), 0.9), ((1, 2), 0.8), ((0, 2), 0.2), ((2, 3), 0.5)];
        let kept = dpi_prune(4, &edges, 0.05);
        assert_eq!(kept.len(), 3);
        assert!(kept.iter().all(|e| edges.contains(e)));
    }
}
