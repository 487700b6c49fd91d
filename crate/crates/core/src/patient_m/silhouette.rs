use crate::numerics::{squared_distance, Matrix};

/// Mean silhouette coefficient of the rows of `points` under `labels`
/// (Euclidean distance). Points in singleton clusters score 0.
pub fn silhouette_score(points: &Matrix, labels: &[String]) -> f64 {
    let n = points.rows();
    if n == 0 {
        return 0.0;
    }
    let mut groups: Vec<&String> = labels.iter().collect();
    groups.sort();
    groups.dedup();
    if groups.len() < 2 {
        return 0.0;
    }
    let dist = |a: usize, b: usize| squared_distance(points.row(a), points.row(b)).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; groups.len()];
        let mut counts = vec![0usize; groups.len()];
        for j in 0..n {
            if i == j {
                continue;
            }
            let g = groups.binary_search(&&labels[j]).expect("label present");
            sums[g] += dist(i, j);
            counts[g] += 1;
        }
        let own = groups.binary_search(&&labels[i]).expect("label present");
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..groups.len())
            .filter(|&g| g != own && counts[g] > 0)
            .map(|g| sums[g] / counts[g] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}
